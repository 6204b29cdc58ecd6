/**
 * In-page field-name inference.
 *
 * Uses the same precedence order as the daemon's headless labeler so the
 * names the extension sends match what corpus tests compute offline:
 * aria-label > aria-labelledby > label[for] > wrapping label > placeholder
 * > nearby visible text > element name/id attribute.
 */

export type NameSource =
  | 'aria_label'
  | 'aria_labelledby'
  | 'label_for'
  | 'wrapping_label'
  | 'placeholder'
  | 'nearby_text'
  | 'fallback_attr';

export interface PageField {
  fieldId: string;
  name: string;
  source: NameSource;
  value: string;
  element: HTMLElement;
}

const NON_TEXT_INPUT_TYPES = new Set([
  'button', 'checkbox', 'color', 'file', 'hidden', 'image',
  'radio', 'range', 'reset', 'submit',
]);

const INVISIBLE_TAGS = new Set(['script', 'style', 'template', 'head', 'title', 'noscript']);

const FORM_CONTROL_TAGS = new Set(['input', 'textarea', 'select', 'button']);

const NEARBY_ANCESTOR_LEVELS = 3;
const NEARBY_SCAN_BUDGET = 200;

function collapse(text: string): string {
  return text.replace(/\s+/g, ' ').trim();
}

function isInvisible(el: Element): boolean {
  return INVISIBLE_TAGS.has(el.tagName.toLowerCase()) || el.hasAttribute('hidden');
}

function isTextEntry(el: Element): boolean {
  const tag = el.tagName.toLowerCase();
  if (tag === 'input') {
    const type = (el.getAttribute('type') || 'text').trim().toLowerCase();
    return !NON_TEXT_INPUT_TYPES.has(type);
  }
  if (tag === 'textarea') return true;
  const editable = el.getAttribute('contenteditable');
  return editable !== null && ['', 'true'].includes(editable.trim().toLowerCase());
}

/** All text-entry elements in document order, skipping invisible subtrees. */
export function collectTextFields(root: ParentNode): HTMLElement[] {
  const fields: HTMLElement[] = [];
  const walk = (node: ParentNode): void => {
    for (const child of Array.from(node.children)) {
      if (isInvisible(child)) continue;
      if (isTextEntry(child)) {
        fields.push(child as HTMLElement);
        if (child.tagName.toLowerCase() === 'textarea') continue;
      }
      walk(child);
    }
  };
  walk(root);
  return fields;
}

/** Whitespace-collapsed visible text, excluding form controls and `skip`. */
export function visibleText(el: Element, skip?: Element): string {
  const parts: string[] = [];
  const walk = (node: Node): void => {
    for (const child of Array.from(node.childNodes)) {
      if (child.nodeType === 3) {
        parts.push(child.textContent ?? '');
      } else if (child.nodeType === 1) {
        const elem = child as Element;
        if (elem === skip || isInvisible(elem)) continue;
        if (FORM_CONTROL_TAGS.has(elem.tagName.toLowerCase())) continue;
        walk(elem);
      }
    }
  };
  walk(el);
  return collapse(parts.join(''));
}

function* textsReverse(node: Node, visible: boolean): Generator<[string, boolean]> {
  if (node.nodeType === 3) {
    yield [node.textContent ?? '', visible];
    return;
  }
  if (node.nodeType !== 1) return;
  const el = node as Element;
  const stillVisible =
    visible && !isInvisible(el) && !FORM_CONTROL_TAGS.has(el.tagName.toLowerCase());
  const children = Array.from(node.childNodes);
  for (let i = children.length - 1; i >= 0; i--) {
    yield* textsReverse(children[i]!, stillVisible);
  }
}

/**
 * Nearest preceding visible text node's trimmed content, scanning previous
 * siblings and up to three ancestor levels within a 200-character budget
 * (skipped text still counts against the budget).
 */
export function nearbyText(element: Element): string {
  let scanned = 0;
  let node: Element = element;
  for (let level = 0; level <= NEARBY_ANCESTOR_LEVELS; level++) {
    const parent = node.parentNode;
    if (!parent || parent.nodeType === 9) {
      // document level: siblings of <html> are not label material
    }
    if (!parent) break;
    const siblings = Array.from(parent.childNodes);
    const index = siblings.indexOf(node);
    for (let i = index - 1; i >= 0; i--) {
      for (const [raw, visible] of textsReverse(siblings[i]!, true)) {
        if (scanned >= NEARBY_SCAN_BUDGET) return '';
        const content = collapse(raw);
        scanned += content.length;
        if (visible && content) return content;
      }
    }
    if (parent.nodeType !== 1) break;
    node = parent as Element;
  }
  return '';
}

function childPath(element: Element): string {
  const indexes: number[] = [];
  let node: Node = element;
  while (node.parentNode) {
    const siblings = Array.from(node.parentNode.childNodes).filter(
      (n) => n.nodeType === 1,
    );
    indexes.push(siblings.indexOf(node as Element));
    node = node.parentNode;
  }
  return '@' + indexes.reverse().join('.');
}

function inferName(doc: Document, element: Element): [string, NameSource] {
  const aria = element.getAttribute('aria-label');
  if (aria && aria.trim()) return [collapse(aria), 'aria_label'];

  const labelledby = element.getAttribute('aria-labelledby');
  if (labelledby) {
    const parts: string[] = [];
    for (const ref of labelledby.split(/\s+/)) {
      if (!ref) continue;
      const target = doc.getElementById(ref);
      if (target) {
        const text = visibleText(target);
        if (text) parts.push(text);
      }
    }
    if (parts.length) return [parts.join(' '), 'aria_labelledby'];
  }

  const id = element.getAttribute('id');
  if (id && doc.getElementById(id) === element) {
    const escaped = id.replace(/\\/g, '\\\\').replace(/"/g, '\\"');
    const label = doc.querySelector(`label[for="${escaped}"]`);
    if (label) {
      const text = visibleText(label, element);
      if (text) return [text, 'label_for'];
    }
  }

  const wrapper = element.closest('label');
  if (wrapper) {
    const text = visibleText(wrapper, element);
    if (text) return [text, 'wrapping_label'];
  }

  const placeholder = element.getAttribute('placeholder');
  if (placeholder && placeholder.trim()) return [collapse(placeholder), 'placeholder'];

  const nearby = nearbyText(element);
  if (nearby) return [nearby, 'nearby_text'];

  return [element.getAttribute('name') || id || '', 'fallback_attr'];
}

function fieldValue(element: HTMLElement): string {
  // tag check rather than instanceof: elements may come from another window
  const tag = element.tagName.toLowerCase();
  if (tag === 'input' || tag === 'textarea') {
    return (element as HTMLInputElement).value ?? '';
  }
  return collapse(element.textContent ?? '');
}

/** One labeled field per text-entry element, in document order. */
export function labelFields(doc: Document): PageField[] {
  const usedIds = new Set<string>();
  const fields: PageField[] = [];
  for (const element of collectTextFields(doc.body ?? doc.documentElement)) {
    const [name, source] = inferName(doc, element);
    const domId = element.getAttribute('id');
    const fieldId = domId && !usedIds.has(domId) ? domId : childPath(element);
    usedIds.add(fieldId);
    fields.push({ fieldId, name, source, value: fieldValue(element), element });
  }
  return fields;
}
