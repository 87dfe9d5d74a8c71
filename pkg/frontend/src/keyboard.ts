/** Y/N keyboard shortcuts for answering. */

import type { Answer } from './types.js';

export type KeyTarget = Pick<Document, 'addEventListener' | 'removeEventListener'>;

/** Bind Y/N keys to an answer callback; returns an unbind function. */
export function bindAnswerKeys(
  target: KeyTarget,
  onAnswer: (answer: Answer) => void
): () => void {
  const handler = (event: Event) => {
    const e = event as KeyboardEvent;
    if (e.ctrlKey || e.metaKey || e.altKey || e.repeat) return;
    if (isTextEntry(e.target)) return;
    if (e.key === 'y' || e.key === 'Y') {
      e.preventDefault();
      onAnswer('yes');
    } else if (e.key === 'n' || e.key === 'N') {
      e.preventDefault();
      onAnswer('no');
    }
  };
  target.addEventListener('keydown', handler);
  return () => target.removeEventListener('keydown', handler);
}

function isTextEntry(target: EventTarget | null): boolean {
  if (!target || !(target instanceof Element)) return false;
  const tag = target.tagName;
  return tag === 'INPUT' || tag === 'TEXTAREA' || tag === 'SELECT';
}
