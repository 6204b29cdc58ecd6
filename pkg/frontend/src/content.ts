/**
 * Content-script controller for one page.
 *
 * Observes the page's text fields and streams their structure and edits to
 * the daemon, captures Alt+select browsing context and search queries, and
 * renders suggestion pushes as purple field outlines with an accept box on
 * focus. The daemon owns all state; this controller only mirrors it.
 */

import type { DaemonClient } from './client.js';
import { labelFields, type PageField } from './labeling.js';
import { captureSelection, type SelectionLike } from './pagetext.js';
import type { SuggestionsPush } from './protocol.js';

export const OUTLINE_STYLE = '2px solid #8b5cf6'; // purple
const SUGGESTION_BOX_CLASS = 'formfill-suggestion-box';
const SAVE_BUTTON_RE = /^(save|submit)$/i;

export interface ContentOptions {
  /** Quiet period before a field edit is reported. */
  debounceMs?: number;
  siteKey?: string;
  session?: string;
}

interface TrackedField extends PageField {
  suggestion?: string;
}

export class ContentController {
  session = '';
  fields: TrackedField[] = [];
  private lastSeq = 0;
  private debounceMs: number;
  private timers = new Map<string, ReturnType<typeof setTimeout>>();
  private box: HTMLElement | null = null;
  private disposers: Array<() => void> = [];

  constructor(
    private doc: Document,
    private client: DaemonClient,
    private options: ContentOptions = {},
  ) {
    this.debounceMs = options.debounceMs ?? 300;
  }

  async start(): Promise<void> {
    const siteKey = this.options.siteKey ?? this.doc.location?.origin ?? 'local';
    const hello = await this.client.hello(siteKey, this.options.session);
    this.session = hello.session;
    this.client.on('suggestions_push', (push) => this.applySuggestions(push));

    await this.syncForms(true);
    this.listen('mouseup', (event) => this.onMouseUp(event as MouseEvent));
    this.listen('input', (event) => this.onInput(event));
    this.listen('click', (event) => this.onClick(event as MouseEvent));
    this.listen('focusin', (event) => this.onFocus(event));
    this.listen('submit', () => this.fire(this.autoSaveTrigger('form_submission')));
    this.captureSearch();
  }

  private listen(type: string, handler: (event: Event) => void): void {
    this.doc.addEventListener(type, handler, true);
    this.disposers.push(() => this.doc.removeEventListener(type, handler, true));
  }

  /** Fire-and-forget from event handlers: a dead daemon must not break the page. */
  private fire(promise: Promise<unknown>): void {
    promise.catch((error) => {
      console.warn('formfill: daemon request failed', error);
    });
  }

  dispose(): void {
    for (const dispose of this.disposers) dispose();
    this.disposers = [];
    for (const timer of this.timers.values()) clearTimeout(timer);
    this.timers.clear();
    this.clearOverlays();
  }

  // -- form sync -----------------------------------------------------------

  collectFields(): TrackedField[] {
    return labelFields(this.doc);
  }

  async syncForms(navigation = false): Promise<void> {
    this.fields = this.collectFields();
    await this.client.request({
      type: 'sync_form',
      session: this.session,
      navigation,
      fields: this.fields.map((f) => ({
        field_id: f.fieldId,
        name: f.name,
        value: f.value,
      })),
    });
  }

  private fieldFor(element: EventTarget | null): TrackedField | undefined {
    return this.fields.find((f) => f.element === element);
  }

  private fieldById(fieldId: string): TrackedField | undefined {
    return this.fields.find((f) => f.fieldId === fieldId);
  }

  private currentValue(field: TrackedField): string {
    const el = field.element as HTMLInputElement | HTMLTextAreaElement;
    return typeof el.value === 'string' ? el.value : (el.textContent ?? '');
  }

  // -- edit reporting ------------------------------------------------------

  private onInput(event: Event): void {
    const field = this.fieldFor(event.target);
    if (!field) return;
    const existing = this.timers.get(field.fieldId);
    if (existing) clearTimeout(existing);
    this.timers.set(
      field.fieldId,
      setTimeout(() => {
        this.timers.delete(field.fieldId);
        this.fire(this.reportField(field, 'user'));
      }, this.debounceMs),
    );
  }

  private async reportField(
    field: TrackedField,
    provenance: 'user' | 'suggestion_accepted',
  ): Promise<void> {
    await this.client.request({
      type: 'field_updated',
      session: this.session,
      field_id: field.fieldId,
      value: this.currentValue(field),
      provenance,
    });
  }

  /** Flush pending debounced edits immediately (used on page hide). */
  async flushEdits(): Promise<void> {
    const pending = [...this.timers.keys()];
    for (const timer of this.timers.values()) clearTimeout(timer);
    this.timers.clear();
    for (const fieldId of pending) {
      const field = this.fieldById(fieldId);
      if (field) await this.reportField(field, 'user');
    }
  }

  // -- context capture -----------------------------------------------------

  private onMouseUp(event: MouseEvent): void {
    if (!event.altKey) return;
    const selection = this.doc.getSelection?.();
    if (selection) this.fire(this.captureAltSelection(selection));
  }

  async captureAltSelection(selection: SelectionLike): Promise<boolean> {
    const root = this.doc.body ?? this.doc.documentElement;
    const capture = captureSelection(root, selection);
    if (!capture) return false;
    await this.client.request({
      type: 'add_selection',
      session: this.session,
      page_title: this.doc.title ?? '',
      document_text: capture.documentText,
      sel_start: capture.selStart,
      sel_end: capture.selEnd,
    });
    return true;
  }

  /** Report the page's search query, when the URL carries one. */
  captureSearch(): void {
    const href = this.doc.location?.href;
    if (!href) return;
    let url: URL;
    try {
      url = new URL(href);
    } catch {
      return;
    }
    const query = url.searchParams.get('q') ?? url.searchParams.get('query');
    if (query && query.trim()) {
      this.fire(
        this.client.request({
          type: 'add_search',
          session: this.session,
          query,
        }),
      );
    }
  }

  // -- suggestions ---------------------------------------------------------

  async invoke(): Promise<void> {
    await this.client.request({ type: 'invoke', session: this.session });
  }

  applySuggestions(push: SuggestionsPush): void {
    if (push.session !== this.session) return;
    if (push.invocation_seq < this.lastSeq) return; // stale push: discard
    this.lastSeq = push.invocation_seq;
    this.clearOverlays();
    for (const [fieldId, verdict] of Object.entries(push.suggestions.verdicts)) {
      if (verdict.kind !== 'suggest' || verdict.text === null) continue;
      const field = this.fieldById(fieldId);
      if (!field) continue; // field left the page; skip silently
      field.suggestion = verdict.text;
      field.element.style.outline = OUTLINE_STYLE;
      field.element.setAttribute('data-formfill-suggestion', verdict.text);
    }
  }

  outlinedFields(): TrackedField[] {
    return this.fields.filter((f) => f.suggestion !== undefined);
  }

  private clearOverlays(): void {
    for (const field of this.fields) {
      if (field.suggestion !== undefined) {
        field.suggestion = undefined;
        field.element.style.outline = '';
        field.element.removeAttribute('data-formfill-suggestion');
      }
    }
    this.hideBox();
  }

  private onFocus(event: Event): void {
    const field = this.fieldFor(event.target);
    this.hideBox();
    if (!field || field.suggestion === undefined) return;
    if (field.suggestion === this.currentValue(field)) return; // nothing to change
    this.showBox(field);
  }

  suggestionBox(): HTMLElement | null {
    return this.box;
  }

  private showBox(field: TrackedField): void {
    const box = this.doc.createElement('div');
    box.className = SUGGESTION_BOX_CLASS;
    const text = this.doc.createElement('span');
    text.textContent = field.suggestion ?? '';
    const accept = this.doc.createElement('button');
    accept.type = 'button';
    accept.textContent = 'Accept';
    accept.addEventListener('click', () => this.fire(this.acceptSuggestion(field)));
    box.append(text, accept);
    this.doc.body.appendChild(box);
    this.box = box;
  }

  private hideBox(): void {
    if (this.box) {
      this.box.remove();
      this.box = null;
    }
  }

  async acceptSuggestion(field: TrackedField): Promise<void> {
    const value = field.suggestion;
    if (value === undefined) return;
    const el = field.element as HTMLInputElement | HTMLTextAreaElement;
    if (typeof el.value === 'string') {
      el.value = value;
    } else {
      field.element.textContent = value;
    }
    // host-page scripts must observe the write like any native edit
    field.element.dispatchEvent(new (this.doc.defaultView!.Event)('input', { bubbles: true }));
    field.element.dispatchEvent(new (this.doc.defaultView!.Event)('change', { bubbles: true }));
    field.suggestion = undefined;
    field.element.style.outline = '';
    field.element.removeAttribute('data-formfill-suggestion');
    this.hideBox();
    await this.reportField(field, 'suggestion_accepted');
  }

  // -- example saving ------------------------------------------------------

  private onClick(event: MouseEvent): void {
    const target = event.target as Element | null;
    if (!target || typeof target.closest !== 'function') return;
    const button = target.closest('button, input[type="submit"], input[type="button"]');
    if (!button) return;
    const label =
      button.tagName.toLowerCase() === 'button'
        ? (button.textContent ?? '').trim()
        : ((button as HTMLInputElement).value ?? '').trim();
    if (SAVE_BUTTON_RE.test(label)) {
      this.fire(this.autoSaveTrigger('save_button_click'));
    }
  }

  autoSaveTrigger(event: 'form_submission' | 'save_button_click') {
    return this.client.request({
      type: 'auto_save_trigger',
      session: this.session,
      event,
    });
  }
}
