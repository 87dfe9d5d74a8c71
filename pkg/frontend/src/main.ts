/** Application entry point: wire the controller, renderer, and shortcuts. */

import { RatingApi } from './api.js';
import { bindAnswerKeys } from './keyboard.js';
import { computeZoom, renderApp } from './render.js';
import { SessionController } from './state.js';

const PATCH_SIZE = 128;

function configFromLocation(): { baseUrl: string; raterId: string } {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get('base') ?? '';
  let raterId = params.get('rater') ?? '';
  if (!raterId) {
    raterId = window.prompt('Enter your rater id:')?.trim() ?? '';
  }
  return { baseUrl, raterId };
}

export function startApp(root: HTMLElement): SessionController | null {
  const { baseUrl, raterId } = configFromLocation();
  if (!raterId) {
    root.textContent = 'A rater id is required (add ?rater=YOURID to the URL).';
    return null;
  }
  const api = new RatingApi(baseUrl);
  const controller = new SessionController(api, raterId, {
    windowSize: { width: window.innerWidth, height: window.innerHeight },
  });

  const rerender = () => {
    const margin = 220; // room for the question, buttons, and progress bar
    const zoom = computeZoom(
      window.innerWidth - 32,
      window.innerHeight - margin,
      PATCH_SIZE
    );
    renderApp(
      root,
      controller.state,
      {
        onAnswer: (answer) => void controller.answer(answer),
        onRetry: () => void controller.retry(),
      },
      { zoom, patchSize: PATCH_SIZE, resolveUrl: (path) => api.resolve(path) }
    );
  };

  controller.onChange(rerender);
  window.addEventListener('resize', rerender);
  bindAnswerKeys(document, (answer) => void controller.answer(answer));
  void controller.start();
  return controller;
}

const rootElement = typeof document === 'undefined' ? null : document.getElementById('app');
if (rootElement) startApp(rootElement);
