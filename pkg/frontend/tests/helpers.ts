/** An in-memory implementation of the rating service's HTTP contract,
 * exposed as a fetch-compatible function for driving the client in tests. */

import type { Answer, Circle, Progress } from '../src/types.js';

export interface ServiceItem {
  item_id: string;
  patch: string;
  circle: Circle;
  question: string;
}

export interface LoggedResponse {
  rater_id: string;
  item_id: string;
  answer: Answer;
}

interface ServiceSession {
  session_id: string;
  rater_id: string;
  order: string[];
  cursor: number;
}

export const QUESTION = 'Do you think this is a vessel?';

export class MockRatingService {
  readonly items: ServiceItem[];
  readonly log: LoggedResponse[] = [];
  readonly sessions = new Map<string, ServiceSession>();
  /** Calls counted per path prefix, for asserting request behavior. */
  readonly callCounts = new Map<string, number>();
  /** When > 0, that many upcoming requests fail at the network level. */
  failNextRequests = 0;

  constructor(nItems: number) {
    this.items = [];
    for (let i = 0; i < nItems; i++) {
      this.items.push({
        item_id: `item${String(i).padStart(4, '0')}`,
        patch: `/patches/${String(i).padStart(4, '0')}.png`,
        circle: { cx: 30 + (i % 70), cy: 40 + (i % 50), r: 10 + (i % 9) },
        question: QUESTION,
      });
    }
  }

  count(path: string): number {
    return this.callCounts.get(path) ?? 0;
  }

  readonly fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    if (this.failNextRequests > 0) {
      this.failNextRequests -= 1;
      throw new TypeError('network failure (simulated)');
    }
    const method = init?.method ?? 'GET';
    const url = new URL(input, 'http://service.test');
    const path = url.pathname;
    this.callCounts.set(path, (this.callCounts.get(path) ?? 0) + 1);

    if (path === '/api/session') {
      return this.openSession(url, init);
    }
    const nextMatch = path.match(/^\/api\/session\/([^/]+)\/next$/);
    if (nextMatch && method === 'GET') {
      return this.nextItem(nextMatch[1]);
    }
    const respondMatch = path.match(/^\/api\/session\/([^/]+)\/response$/);
    if (respondMatch && method === 'POST') {
      return this.submit(respondMatch[1], init);
    }
    return json(404, { detail: 'unknown route' });
  };

  private openSession(url: URL, init?: RequestInit): Response {
    let raterId = url.searchParams.get('rater_id') ?? '';
    if (!raterId && init?.body) {
      const body = JSON.parse(String(init.body)) as { rater_id?: string };
      raterId = body.rater_id ?? '';
    }
    if (!raterId) return json(422, { detail: 'rater_id required' });
    const sessionId = `session-${raterId}`;
    let session = this.sessions.get(sessionId);
    if (!session) {
      session = {
        session_id: sessionId,
        rater_id: raterId,
        order: this.items.map((item) => item.item_id),
        cursor: 0,
      };
      this.sessions.set(sessionId, session);
    }
    return json(200, {
      session_id: session.session_id,
      rater_id: session.rater_id,
      progress: this.progress(session),
      done: session.cursor >= session.order.length,
    });
  }

  private nextItem(sessionId: string): Response {
    const session = this.sessions.get(sessionId);
    if (!session) return json(404, { detail: 'unknown session' });
    if (session.cursor >= session.order.length) {
      return json(200, { done: true, progress: this.progress(session) });
    }
    const item = this.itemById(session.order[session.cursor]);
    return json(200, {
      done: false,
      item_id: item.item_id,
      patch: item.patch,
      circle: item.circle,
      question: item.question,
      progress: this.progress(session),
    });
  }

  private submit(sessionId: string, init?: RequestInit): Response {
    const session = this.sessions.get(sessionId);
    if (!session) return json(404, { detail: 'unknown session' });
    const body = JSON.parse(String(init?.body ?? '{}')) as {
      item_id?: string;
      answer?: string;
    };
    if (!body.item_id) return json(422, { detail: 'item_id required' });
    if (body.answer !== 'yes' && body.answer !== 'no') {
      return json(422, { detail: 'answer must be yes or no' });
    }
    if (session.cursor >= session.order.length) {
      return json(409, { detail: 'session is complete' });
    }
    const expected = session.order[session.cursor];
    if (body.item_id !== expected) {
      const answered = session.order.slice(0, session.cursor);
      const detail = answered.includes(body.item_id)
        ? 'item already answered'
        : 'item is not the current item';
      return json(409, { detail });
    }
    this.log.push({
      rater_id: session.rater_id,
      item_id: body.item_id,
      answer: body.answer,
    });
    session.cursor += 1;
    const done = session.cursor >= session.order.length;
    return json(200, { ok: true, progress: this.progress(session), done });
  }

  private progress(session: ServiceSession): Progress {
    return { answered: session.cursor, total: session.order.length };
  }

  private itemById(itemId: string): ServiceItem {
    const item = this.items.find((it) => it.item_id === itemId);
    if (!item) throw new Error(`mock service has no item ${itemId}`);
    return item;
  }
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

/** Minimal in-memory Storage substitute. */
export class MemoryStorage {
  private readonly map = new Map<string, string>();

  getItem(key: string): string | null {
    return this.map.has(key) ? (this.map.get(key) as string) : null;
  }

  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }

  removeItem(key: string): void {
    this.map.delete(key);
  }
}

/** Substrings that must never appear in rater-facing markup. Uppercase
 * tokens are scanned case-sensitively: lowercase 'none' is legitimate CSS
 * (fill="none"), while the uppercase category labels are not. */
export const FORBIDDEN_MARKUP = [
  'category',
  'annotator',
  'duplicate',
  'rotation',
  'BOTH',
  'A1_ONLY',
  'A2_ONLY',
  'NONE',
];

export function assertBlinded(html: string): void {
  for (const word of FORBIDDEN_MARKUP) {
    if (html.includes(word)) {
      throw new Error(`blinding violation: markup contains ${JSON.stringify(word)}`);
    }
  }
}
