/** Typed client for the rating service's JSON API. */

import type {
  Answer,
  NextPayload,
  SessionInfo,
  SubmitAck,
  WindowSize,
} from './types.js';

/** The service refused the submission because the session moved on
 * (already answered, or not the current item). The client should refetch. */
export class ConflictError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'ConflictError';
  }
}

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.name = 'ApiError';
    this.status = status;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class RatingApi {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, '');
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  /** Absolute URL for a service-relative path such as a patch image. */
  resolve(path: string): string {
    if (/^https?:\/\//.test(path)) return path;
    return this.baseUrl + (path.startsWith('/') ? path : `/${path}`);
  }

  async openSession(raterId: string, windowSize?: WindowSize): Promise<SessionInfo> {
    const body: Record<string, unknown> = { rater_id: raterId };
    if (windowSize) body.window = windowSize;
    return this.request<SessionInfo>('POST', '/api/session', body);
  }

  async nextItem(sessionId: string): Promise<NextPayload> {
    return this.request<NextPayload>(
      'GET',
      `/api/session/${encodeURIComponent(sessionId)}/next`
    );
  }

  async submitAnswer(
    sessionId: string,
    itemId: string,
    answer: Answer
  ): Promise<SubmitAck> {
    return this.request<SubmitAck>(
      'POST',
      `/api/session/${encodeURIComponent(sessionId)}/response`,
      { item_id: itemId, answer }
    );
  }

  private async request<T>(
    method: string,
    path: string,
    body?: Record<string, unknown>
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { 'Content-Type': 'application/json' };
    }
    const response = await this.fetchFn(this.resolve(path), init);
    if (response.status === 409) {
      throw new ConflictError(await detailOf(response));
    }
    if (!response.ok) {
      throw new ApiError(response.status, await detailOf(response));
    }
    return (await response.json()) as T;
  }
}

async function detailOf(response: Response): Promise<string> {
  try {
    const payload = (await response.json()) as { detail?: string };
    return payload.detail ?? `HTTP ${response.status}`;
  } catch {
    return `HTTP ${response.status}`;
  }
}
