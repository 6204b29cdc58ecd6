/**
 * Page text extraction with stable offsets, so a DOM selection can be sent
 * to the daemon as (document_text, sel_start, sel_end) and expanded there.
 */

const SKIP_TAGS = new Set(['script', 'style', 'template', 'noscript', 'title']);

export interface PageText {
  text: string;
  /** Global offset of (textNode, offsetInNode); -1 when the node is unindexed. */
  locate(node: Node, offset: number): number;
}

export function extractPageText(root: Node): PageText {
  const starts = new Map<Node, number>();
  const chunks: string[] = [];
  let length = 0;

  const walk = (node: Node): void => {
    for (const child of Array.from(node.childNodes)) {
      if (child.nodeType === 3) {
        const text = child.textContent ?? '';
        starts.set(child, length);
        chunks.push(text);
        length += text.length;
      } else if (child.nodeType === 1) {
        const el = child as Element;
        if (SKIP_TAGS.has(el.tagName.toLowerCase()) || el.hasAttribute('hidden')) {
          continue;
        }
        walk(el);
      }
    }
  };
  walk(root);

  return {
    text: chunks.join(''),
    locate(node: Node, offset: number): number {
      const start = starts.get(node);
      return start === undefined ? -1 : start + offset;
    },
  };
}

export interface SelectionLike {
  anchorNode: Node | null;
  anchorOffset: number;
  focusNode: Node | null;
  focusOffset: number;
  toString(): string;
}

export interface SelectionCapture {
  documentText: string;
  selStart: number;
  selEnd: number;
}

/** Map a selection to page-text offsets; null when empty or unlocatable. */
export function captureSelection(
  root: Node,
  selection: SelectionLike,
): SelectionCapture | null {
  if (!selection.anchorNode || !selection.focusNode) return null;
  const page = extractPageText(root);
  const a = page.locate(selection.anchorNode, selection.anchorOffset);
  const b = page.locate(selection.focusNode, selection.focusOffset);
  if (a < 0 || b < 0) return null;
  const selStart = Math.min(a, b);
  const selEnd = Math.max(a, b);
  if (selStart === selEnd) return null;
  return { documentText: page.text, selStart, selEnd };
}
