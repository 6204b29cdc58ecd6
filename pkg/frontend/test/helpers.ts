import { spawn, type ChildProcess } from 'node:child_process';
import { mkdtempSync, readFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';

import { Window } from 'happy-dom';

import { DaemonClient } from '../src/client.js';
import { NodeTcpTransport } from '../src/transport.js';

const HERE = dirname(fileURLToPath(import.meta.url));

export interface TestDaemon {
  client: DaemonClient;
  host: string;
  port: number;
  stateDir: string;
  process: ChildProcess;
  stop(): void;
  connect(): Promise<DaemonClient>;
}

/** Spawn the real Python daemon with the canned-answer test backend. */
export async function startDaemon(canned?: Record<string, string>): Promise<TestDaemon> {
  const stateDir = mkdtempSync(join(tmpdir(), 'formfill-frontend-'));
  const args = [join(HERE, 'daemon_runner.py'), stateDir, '0'];
  if (canned) args.push(JSON.stringify(canned));
  const child = spawn('python3', args, { stdio: ['ignore', 'pipe', 'pipe'] });

  const address = await new Promise<{ host: string; port: number }>(
    (resolve, reject) => {
      let out = '';
      let err = '';
      const timer = setTimeout(
        () => reject(new Error(`daemon did not start: ${err}`)),
        15000,
      );
      child.stdout!.on('data', (chunk: Buffer) => {
        out += chunk.toString();
        const match = out.match(/listening on ([\d.]+):(\d+)/);
        if (match) {
          clearTimeout(timer);
          resolve({ host: match[1]!, port: Number(match[2]!) });
        }
      });
      child.stderr!.on('data', (chunk: Buffer) => {
        err += chunk.toString();
      });
      child.on('exit', (code) => {
        clearTimeout(timer);
        reject(new Error(`daemon exited with ${code}: ${err}`));
      });
    },
  );

  const connect = async () =>
    new DaemonClient(await NodeTcpTransport.connect(address.host, address.port));

  return {
    client: await connect(),
    host: address.host,
    port: address.port,
    stateDir,
    process: child,
    connect,
    stop() {
      child.kill('SIGTERM');
    },
  };
}

/** Load an HTML file into a fresh happy-dom window. */
export function loadPage(file: string, url = 'https://crm.example/contacts/new') {
  const html = readFileSync(join(HERE, 'pages', file), 'utf-8');
  const window = new Window({ url });
  window.document.write(html);
  return {
    window,
    document: window.document as unknown as Document,
  };
}

export function makeWindow(html: string, url = 'https://page.example/') {
  const window = new Window({ url });
  window.document.write(html);
  return {
    window,
    document: window.document as unknown as Document,
  };
}

export async function waitFor(
  condition: () => boolean,
  timeoutMs = 5000,
  what = 'condition',
): Promise<void> {
  const start = Date.now();
  while (!condition()) {
    if (Date.now() - start > timeoutMs) {
      throw new Error(`timed out waiting for ${what}`);
    }
    await new Promise((r) => setTimeout(r, 10));
  }
}

export const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));
