/**
 * Line-oriented transports to the daemon.
 *
 * The daemon listens on a local TCP socket. Node contexts (tests, a native
 * messaging bridge) connect directly with `NodeTcpTransport`; browser pages
 * cannot open raw TCP, so an in-browser deployment talks through a
 * WebSocket-to-TCP bridge using `WebSocketTransport`.
 */

export interface Transport {
  send(line: string): void;
  onLine(handler: (line: string) => void): void;
  onClose(handler: () => void): void;
  close(): void;
}

export interface ConnectOptions {
  retries?: number;
  retryDelayMs?: number;
}

export class NodeTcpTransport implements Transport {
  private lineHandlers: Array<(line: string) => void> = [];
  private closeHandlers: Array<() => void> = [];
  private buffer = '';

  private constructor(private socket: import('node:net').Socket) {
    socket.setEncoding('utf-8');
    socket.on('data', (chunk: string) => {
      this.buffer += chunk;
      let index;
      while ((index = this.buffer.indexOf('\n')) >= 0) {
        const line = this.buffer.slice(0, index);
        this.buffer = this.buffer.slice(index + 1);
        if (line.trim()) {
          for (const handler of this.lineHandlers) handler(line);
        }
      }
    });
    socket.on('close', () => {
      for (const handler of this.closeHandlers) handler();
    });
    socket.on('error', () => {
      /* surfaced through close */
    });
  }

  static async connect(
    host: string,
    port: number,
    options: ConnectOptions = {},
  ): Promise<NodeTcpTransport> {
    const { retries = 3, retryDelayMs = 150 } = options;
    const net = await import('node:net');
    let lastError: unknown;
    for (let attempt = 0; attempt <= retries; attempt++) {
      try {
        const socket = await new Promise<import('node:net').Socket>(
          (resolve, reject) => {
            const s = net.createConnection({ host, port }, () => resolve(s));
            s.once('error', reject);
          },
        );
        return new NodeTcpTransport(socket);
      } catch (error) {
        lastError = error;
        await new Promise((r) => setTimeout(r, retryDelayMs));
      }
    }
    throw lastError;
  }

  send(line: string): void {
    this.socket.write(line.endsWith('\n') ? line : line + '\n');
  }

  onLine(handler: (line: string) => void): void {
    this.lineHandlers.push(handler);
  }

  onClose(handler: () => void): void {
    this.closeHandlers.push(handler);
  }

  close(): void {
    this.socket.end();
    this.socket.destroy();
  }
}

/** One protocol line per WebSocket message; requires a local ws bridge. */
export class WebSocketTransport implements Transport {
  private lineHandlers: Array<(line: string) => void> = [];
  private closeHandlers: Array<() => void> = [];

  constructor(private ws: WebSocket) {
    ws.addEventListener('message', (event) => {
      const data = typeof event.data === 'string' ? event.data : '';
      for (const line of data.split('\n')) {
        if (line.trim()) {
          for (const handler of this.lineHandlers) handler(line);
        }
      }
    });
    ws.addEventListener('close', () => {
      for (const handler of this.closeHandlers) handler();
    });
  }

  static connect(url: string): Promise<WebSocketTransport> {
    return new Promise((resolve, reject) => {
      const ws = new WebSocket(url);
      ws.addEventListener('open', () => resolve(new WebSocketTransport(ws)));
      ws.addEventListener('error', (event) => reject(event));
    });
  }

  send(line: string): void {
    this.ws.send(line.endsWith('\n') ? line : line + '\n');
  }

  onLine(handler: (line: string) => void): void {
    this.lineHandlers.push(handler);
  }

  onClose(handler: () => void): void {
    this.closeHandlers.push(handler);
  }

  close(): void {
    this.ws.close();
  }
}
