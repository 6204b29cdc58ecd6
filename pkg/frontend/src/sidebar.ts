/**
 * Sidebar: scrapbook preview, action buttons, and option toggles.
 *
 * The daemon is the source of truth; the sidebar renders exactly what
 * `hello_ok` and `scrapbook_state_push` carry, so reloading the extension
 * reconstructs it entirely from daemon state.
 */

import type { DaemonClient } from './client.js';
import type { ScrapbookEntry, SessionOptions } from './protocol.js';

const PREVIEW_CHARS = 80;

export interface SidebarActions {
  onSuggest(): void;
  onSaveExample(): void;
  onAddContext(text: string): void;
  onDeleteEntry(entryId: string): void;
  onOptionChange(option: keyof SessionOptions, value: boolean): void;
}

const OPTION_LABELS: Record<keyof SessionOptions, string> = {
  auto_invoke_on_context_change: 'Update suggestions when the scrapbook changes',
  auto_invoke_on_field_change: 'Update suggestions when form fields change',
  auto_save_examples: 'Automatically save examples for this site',
};

export function entryPreview(entry: ScrapbookEntry): string {
  const prefix =
    entry.kind === 'search' ? 'searched: ' : entry.kind === 'manual' ? 'added: ' : '';
  const body = `${prefix}${entry.selected_text}`;
  return body.length > PREVIEW_CHARS ? body.slice(0, PREVIEW_CHARS - 1) + '…' : body;
}

export class Sidebar {
  entries: ScrapbookEntry[] = [];
  options: SessionOptions = {
    auto_invoke_on_context_change: false,
    auto_invoke_on_field_change: false,
    auto_save_examples: false,
  };

  constructor(
    private container: HTMLElement,
    private actions: SidebarActions,
  ) {}

  /** Mirror daemon state; initial state comes from the hello reply. */
  attach(client: DaemonClient, session: string): void {
    client.on('scrapbook_state_push', (push) => {
      if (push.session !== session) return;
      this.setEntries(push.entries);
    });
  }

  setState(entries: ScrapbookEntry[], options: SessionOptions): void {
    this.entries = entries;
    this.options = options;
    this.render();
  }

  setEntries(entries: ScrapbookEntry[]): void {
    this.entries = entries;
    this.render();
  }

  render(): void {
    const doc = this.container.ownerDocument;
    this.container.textContent = '';

    const list = doc.createElement('ul');
    list.className = 'formfill-scrapbook';
    for (const entry of this.entries) {
      const item = doc.createElement('li');
      item.dataset.entryId = entry.entry_id;
      item.dataset.kind = entry.kind;
      const text = doc.createElement('span');
      text.textContent = entryPreview(entry);
      const remove = doc.createElement('button');
      remove.type = 'button';
      remove.textContent = '×';
      remove.title = 'Delete entry';
      remove.addEventListener('click', () => this.actions.onDeleteEntry(entry.entry_id));
      item.append(text, remove);
      list.appendChild(item);
    }
    this.container.appendChild(list);

    const suggest = doc.createElement('button');
    suggest.type = 'button';
    suggest.className = 'formfill-suggest';
    suggest.textContent = 'Suggest';
    suggest.addEventListener('click', () => this.actions.onSuggest());

    const save = doc.createElement('button');
    save.type = 'button';
    save.className = 'formfill-save-example';
    save.textContent = 'Save example';
    save.addEventListener('click', () => this.actions.onSaveExample());

    const addField = doc.createElement('textarea');
    addField.className = 'formfill-add-context-text';
    addField.placeholder = 'Paste or type context…';
    const add = doc.createElement('button');
    add.type = 'button';
    add.className = 'formfill-add-context';
    add.textContent = 'Add to context';
    add.addEventListener('click', () => {
      if (addField.value.trim()) {
        this.actions.onAddContext(addField.value);
        addField.value = '';
      }
    });

    this.container.append(suggest, save, addField, add);

    for (const key of Object.keys(OPTION_LABELS) as Array<keyof SessionOptions>) {
      const label = doc.createElement('label');
      const checkbox = doc.createElement('input');
      checkbox.type = 'checkbox';
      checkbox.className = `formfill-option-${key}`;
      checkbox.checked = this.options[key];
      checkbox.addEventListener('change', () =>
        this.actions.onOptionChange(key, checkbox.checked),
      );
      label.append(checkbox, doc.createTextNode(OPTION_LABELS[key]));
      this.container.appendChild(label);
    }
  }

  entryElements(): HTMLElement[] {
    return Array.from(this.container.querySelectorAll('li'));
  }
}
