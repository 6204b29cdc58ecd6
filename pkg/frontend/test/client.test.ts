import { describe, expect, it } from 'vitest';

import { DaemonClient } from '../src/client.js';
import { DaemonError } from '../src/protocol.js';
import type { Transport } from '../src/transport.js';

class FakeTransport implements Transport {
  sent: string[] = [];
  private lineHandlers: Array<(line: string) => void> = [];
  private closeHandlers: Array<() => void> = [];

  send(line: string): void {
    this.sent.push(line);
  }

  onLine(handler: (line: string) => void): void {
    this.lineHandlers.push(handler);
  }

  onClose(handler: () => void): void {
    this.closeHandlers.push(handler);
  }

  close(): void {
    for (const handler of this.closeHandlers) handler();
  }

  receive(msg: Record<string, unknown>): void {
    for (const handler of this.lineHandlers) handler(JSON.stringify(msg));
  }
}

describe('DaemonClient', () => {
  it('correlates replies by id', async () => {
    const transport = new FakeTransport();
    const client = new DaemonClient(transport);
    const pending = client.request({ type: 'invoke', session: 's' });
    const sent = JSON.parse(transport.sent[0]!);
    expect(sent.id).toBeTypeOf('number');

    transport.receive({ type: 'ok', re: sent.id, invocation_seq: 3 });
    await expect(pending).resolves.toMatchObject({ invocation_seq: 3 });
  });

  it('rejects on error replies with code and detail', async () => {
    const transport = new FakeTransport();
    const client = new DaemonClient(transport);
    const pending = client.request({ type: 'invoke', session: 'missing' });
    const sent = JSON.parse(transport.sent[0]!);
    transport.receive({
      type: 'error',
      re: sent.id,
      code: 'unknown_session',
      detail: 'no session',
    });
    await expect(pending).rejects.toThrowError(DaemonError);
    await pending.catch((err: DaemonError) => {
      expect(err.code).toBe('unknown_session');
    });
  });

  it('routes pushes to handlers and leaves replies alone', async () => {
    const transport = new FakeTransport();
    const client = new DaemonClient(transport);
    const pushes: number[] = [];
    client.on('suggestions_push', (push) => pushes.push(push.invocation_seq));

    const pending = client.request({ type: 'invoke', session: 's' });
    const sent = JSON.parse(transport.sent[0]!);
    transport.receive({ type: 'ok', re: sent.id, invocation_seq: 1 });
    transport.receive({
      type: 'suggestions_push',
      session: 's',
      invocation_seq: 1,
      suggestions: { verdicts: {}, invocation_seq: 1, degraded: null, fallback_contributed: false },
    });
    await pending;
    expect(pushes).toEqual([1]);
  });

  it('interleaves replies for concurrent requests', async () => {
    const transport = new FakeTransport();
    const client = new DaemonClient(transport);
    const first = client.request({ type: 'invoke', session: 's' });
    const second = client.request({ type: 'invoke', session: 's' });
    const [id1, id2] = transport.sent.map((l) => JSON.parse(l).id as number);
    transport.receive({ type: 'ok', re: id2, order: 'second' });
    transport.receive({ type: 'ok', re: id1, order: 'first' });
    await expect(first).resolves.toMatchObject({ order: 'first' });
    await expect(second).resolves.toMatchObject({ order: 'second' });
  });

  it('rejects all pending requests when the connection closes', async () => {
    const transport = new FakeTransport();
    const client = new DaemonClient(transport);
    const pending = client.request({ type: 'invoke', session: 's' });
    transport.close();
    await expect(pending).rejects.toThrow('closed');
    await expect(client.request({ type: 'invoke', session: 's' })).rejects.toThrow(
      'closed',
    );
  });
});
