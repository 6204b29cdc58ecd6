/**
 * Daemon protocol client: request/reply correlation plus push routing.
 */

import {
  DaemonError,
  type ErrorReply,
  type HelloOk,
  type ScrapbookStatePush,
  type ServerMessage,
  type SuggestionsPush,
} from './protocol.js';
import type { Transport } from './transport.js';

type Pending = {
  resolve: (msg: ServerMessage) => void;
  reject: (err: Error) => void;
};

export interface PushHandlers {
  scrapbook_state_push: (push: ScrapbookStatePush) => void;
  suggestions_push: (push: SuggestionsPush) => void;
}

export class DaemonClient {
  private nextId = 1;
  private pending = new Map<number, Pending>();
  private handlers: { [K in keyof PushHandlers]: Array<PushHandlers[K]> } = {
    scrapbook_state_push: [],
    suggestions_push: [],
  };
  private closed = false;

  constructor(private transport: Transport) {
    transport.onLine((line) => this.route(line));
    transport.onClose(() => {
      this.closed = true;
      const error = new Error('daemon connection closed');
      for (const { reject } of this.pending.values()) reject(error);
      this.pending.clear();
    });
  }

  private route(line: string): void {
    let msg: ServerMessage;
    try {
      msg = JSON.parse(line) as ServerMessage;
    } catch {
      return; // a broken line is the daemon's bug; nothing to correlate
    }
    const re = (msg as { re?: unknown }).re;
    if (typeof re === 'number' && this.pending.has(re)) {
      const pending = this.pending.get(re)!;
      this.pending.delete(re);
      if (msg.type === 'error') {
        const err = msg as ErrorReply;
        pending.reject(new DaemonError(err.code, err.detail));
      } else {
        pending.resolve(msg);
      }
      return;
    }
    if (msg.type === 'scrapbook_state_push') {
      for (const handler of this.handlers.scrapbook_state_push) handler(msg);
    } else if (msg.type === 'suggestions_push') {
      for (const handler of this.handlers.suggestions_push) handler(msg);
    }
  }

  on<K extends keyof PushHandlers>(type: K, handler: PushHandlers[K]): void {
    this.handlers[type].push(handler);
  }

  request(msg: Record<string, unknown>): Promise<ServerMessage> {
    if (this.closed) {
      return Promise.reject(new Error('daemon connection closed'));
    }
    const id = this.nextId++;
    const line = JSON.stringify({ ...msg, id });
    return new Promise((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
      this.transport.send(line);
    });
  }

  async hello(siteKey: string, session?: string): Promise<HelloOk> {
    const msg: Record<string, unknown> = { type: 'hello', site_key: siteKey };
    if (session) msg.session = session;
    return (await this.request(msg)) as HelloOk;
  }

  close(): void {
    this.transport.close();
  }
}
