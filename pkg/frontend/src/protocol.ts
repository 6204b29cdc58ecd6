/**
 * Wire-protocol types for the suggestion daemon.
 *
 * Messages are newline-delimited JSON objects; every request carries an `id`
 * and its reply echoes it as `re`. See docs/protocol.md in the repo root for
 * the authoritative description.
 */

export type EntryKind = 'selection' | 'manual' | 'search';

export interface ScrapbookEntry {
  entry_id: string;
  kind: EntryKind;
  selected_text: string;
  page_title: string;
  pre_context: string;
  post_context: string;
  created_at: number;
}

export interface SessionOptions {
  auto_invoke_on_context_change: boolean;
  auto_invoke_on_field_change: boolean;
  auto_save_examples: boolean;
}

export type VerdictKind = 'suggest' | 'no_change';

export interface Verdict {
  kind: VerdictKind;
  text: string | null;
  provenance: 'primary_request' | 'fallback_request';
}

export interface SuggestionSet {
  verdicts: Record<string, Verdict>;
  invocation_seq: number;
  degraded: string | null;
  fallback_contributed: boolean;
}

export interface HelloOk {
  type: 'hello_ok';
  re?: string | number;
  session: string;
  site_key: string;
  options: SessionOptions;
  scrapbook: ScrapbookEntry[];
}

export interface OkReply {
  type: 'ok';
  re?: string | number;
  [key: string]: unknown;
}

export interface ErrorReply {
  type: 'error';
  re?: string | number;
  code: string;
  detail: string;
}

export interface ScrapbookStatePush {
  type: 'scrapbook_state_push';
  session: string;
  entries: ScrapbookEntry[];
}

export interface SuggestionsPush {
  type: 'suggestions_push';
  session: string;
  invocation_seq: number;
  suggestions: SuggestionSet;
}

export type ServerMessage =
  | HelloOk
  | OkReply
  | ErrorReply
  | ScrapbookStatePush
  | SuggestionsPush;

export interface FieldSync {
  field_id: string;
  name: string;
  value: string;
}

/** Raised when the daemon answers a request with an error reply. */
export class DaemonError extends Error {
  constructor(
    public readonly code: string,
    public readonly detail: string,
  ) {
    super(`${code}: ${detail}`);
    this.name = 'DaemonError';
  }
}
