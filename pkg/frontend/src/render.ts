/** DOM rendering: pixel-faithful patch display with a circle overlay. */

import type { Answer, UiSessionState } from './types.js';

const SVG_NS = 'http://www.w3.org/2000/svg';

export interface RenderHandlers {
  onAnswer(answer: Answer): void;
  onRetry(): void;
}

export interface RenderOptions {
  /** Integer magnification; every patch pixel becomes a zoom×zoom block. */
  zoom?: number;
  /** Patch edge length in pixels. */
  patchSize?: number;
  /** Turn a service-relative patch path into a fetchable URL. */
  resolveUrl?: (path: string) => string;
}

/** Largest integer zoom that fits the patch into the viewport (minimum 1). */
export function computeZoom(
  availableWidth: number,
  availableHeight: number,
  patchSize: number
): number {
  const fit = Math.floor(Math.min(availableWidth, availableHeight) / patchSize);
  return Math.max(1, fit);
}

export function renderApp(
  root: HTMLElement,
  state: UiSessionState,
  handlers: RenderHandlers,
  options: RenderOptions = {}
): void {
  root.replaceChildren();
  switch (state.phase) {
    case 'loading':
      root.appendChild(textBlock('status', 'Loading session…'));
      return;
    case 'error':
      root.appendChild(renderError(state, handlers));
      return;
    case 'done':
      root.appendChild(renderDone(state));
      return;
    case 'item':
      root.appendChild(renderItem(state, handlers, options));
      return;
  }
}

function renderError(state: UiSessionState, handlers: RenderHandlers): HTMLElement {
  const box = el('div', 'error-box');
  box.appendChild(textBlock('status', 'Something went wrong. Your progress is saved.'));
  if (state.lastError) {
    box.appendChild(textBlock('error-detail', state.lastError));
  }
  const retry = el('button', 'retry');
  retry.type = 'button';
  retry.textContent = 'Retry';
  retry.addEventListener('click', () => handlers.onRetry());
  box.appendChild(retry);
  return box;
}

function renderDone(state: UiSessionState): HTMLElement {
  const box = el('div', 'done-box');
  const heading = el('h2', 'done-title');
  heading.textContent = 'All done — thank you!';
  box.appendChild(heading);
  box.appendChild(
    textBlock(
      'done-summary',
      `You answered ${state.progress.answered} of ${state.progress.total} items.`
    )
  );
  if (state.sessionId) {
    box.appendChild(textBlock('session-label', `Session ${state.sessionId}`));
  }
  return box;
}

function renderItem(
  state: UiSessionState,
  handlers: RenderHandlers,
  options: RenderOptions
): HTMLElement {
  const item = state.current;
  if (!item) return textBlock('status', 'Loading item…');
  const zoom = Math.max(1, Math.floor(options.zoom ?? 1));
  const size = options.patchSize ?? 128;
  const resolve = options.resolveUrl ?? ((path: string) => path);
  const edge = size * zoom;

  const container = el('div', 'rating-screen');

  const frame = el('div', 'patch-frame');
  frame.style.position = 'relative';
  frame.style.width = `${edge}px`;
  frame.style.height = `${edge}px`;

  const img = document.createElement('img');
  img.className = 'patch';
  img.src = resolve(item.patch);
  img.alt = 'image patch';
  img.width = edge;
  img.height = edge;
  img.style.imageRendering = 'pixelated';
  img.draggable = false;
  img.addEventListener('error', () => {
    frame.replaceChildren(imageFailure(handlers));
  });
  frame.appendChild(img);

  // The circle is an overlay element in patch coordinates; the underlying
  // image pixels are never modified.
  const svg = document.createElementNS(SVG_NS, 'svg');
  svg.setAttribute('class', 'overlay');
  svg.setAttribute('width', String(edge));
  svg.setAttribute('height', String(edge));
  svg.setAttribute('viewBox', `0 0 ${size} ${size}`);
  svg.style.position = 'absolute';
  svg.style.left = '0';
  svg.style.top = '0';
  svg.style.pointerEvents = 'none';
  const circle = document.createElementNS(SVG_NS, 'circle');
  circle.setAttribute('cx', String(item.circle.cx));
  circle.setAttribute('cy', String(item.circle.cy));
  circle.setAttribute('r', String(item.circle.r));
  circle.setAttribute('fill', 'none');
  circle.setAttribute('stroke', '#ffd24d');
  circle.setAttribute('stroke-width', String(1.5 / zoom));
  svg.appendChild(circle);
  frame.appendChild(svg);
  container.appendChild(frame);

  const question = el('p', 'question');
  question.textContent = item.question;
  container.appendChild(question);

  const buttons = el('div', 'answers');
  for (const answer of ['yes', 'no'] as Answer[]) {
    const button = el('button', `answer-${answer}`);
    button.type = 'button';
    button.dataset.answer = answer;
    button.disabled = state.inFlight;
    button.textContent = answer === 'yes' ? 'Yes (Y)' : 'No (N)';
    button.addEventListener('click', () => handlers.onAnswer(answer));
    buttons.appendChild(button);
  }
  container.appendChild(buttons);
  container.appendChild(renderProgress(state));
  return container;
}

function imageFailure(handlers: RenderHandlers): HTMLElement {
  const box = el('div', 'image-error');
  box.appendChild(textBlock('status', 'The image failed to load.'));
  const retry = el('button', 'retry');
  retry.type = 'button';
  retry.textContent = 'Retry';
  retry.addEventListener('click', () => handlers.onRetry());
  box.appendChild(retry);
  return box;
}

function renderProgress(state: UiSessionState): HTMLElement {
  const { answered, total } = state.progress;
  const wrap = el('div', 'progress');
  const label = el('span', 'progress-label');
  label.textContent = `${answered} / ${total}`;
  const track = el('div', 'progress-track');
  const bar = el('div', 'progress-bar');
  const pct = total > 0 ? (100 * answered) / total : 0;
  bar.style.width = `${pct}%`;
  track.appendChild(bar);
  wrap.appendChild(label);
  wrap.appendChild(track);
  return wrap;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className: string
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.className = className;
  return node;
}

function textBlock(className: string, text: string): HTMLElement {
  const node = el('p', className);
  node.textContent = text;
  return node;
}
