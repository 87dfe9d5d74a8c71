/** Session controller: one current item, one request in flight, resumable. */

import { ConflictError, RatingApi } from './api.js';
import type { Answer, UiSessionState, WindowSize } from './types.js';

/** The subset of Storage the controller needs (localStorage-compatible). */
export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export interface ControllerOptions {
  storage?: KeyValueStore;
  windowSize?: WindowSize;
}

export type StateListener = (state: UiSessionState) => void;

export class SessionController {
  private readonly api: RatingApi;
  private readonly raterId: string;
  private readonly storage: KeyValueStore | null;
  private readonly windowSize?: WindowSize;
  private readonly listeners: StateListener[] = [];
  private lastOp: (() => Promise<void>) | null = null;

  state: UiSessionState = {
    sessionId: null,
    phase: 'loading',
    current: null,
    progress: { answered: 0, total: 0 },
    inFlight: false,
    lastError: null,
  };

  constructor(api: RatingApi, raterId: string, options: ControllerOptions = {}) {
    this.api = api;
    this.raterId = raterId;
    this.storage = options.storage ?? defaultStorage();
    this.windowSize = options.windowSize;
  }

  onChange(listener: StateListener): () => void {
    this.listeners.push(listener);
    return () => {
      const index = this.listeners.indexOf(listener);
      if (index >= 0) this.listeners.splice(index, 1);
    };
  }

  private emit(): void {
    for (const listener of [...this.listeners]) listener(this.state);
  }

  private update(patch: Partial<UiSessionState>): void {
    this.state = { ...this.state, ...patch };
    this.emit();
  }

  private storageKey(): string {
    return `rating-ui/session/${this.raterId}`;
  }

  private storedSessionId(): string | null {
    try {
      return this.storage?.getItem(this.storageKey()) ?? null;
    } catch {
      return null;
    }
  }

  private rememberSessionId(sessionId: string): void {
    try {
      this.storage?.setItem(this.storageKey(), sessionId);
    } catch {
      /* storage unavailable: the session is still resumable by rater id */
    }
  }

  /** Open (or resume) the session, then fetch the current item. */
  async start(): Promise<void> {
    await this.guarded(async () => {
      let sessionId = this.storedSessionId();
      if (!sessionId) {
        const session = await this.api.openSession(this.raterId, this.windowSize);
        sessionId = session.session_id;
        this.rememberSessionId(sessionId);
      }
      this.update({ sessionId });
      await this.fetchNext();
    });
  }

  /** Refetch the current item; used on conflicts and image failures too. */
  async refresh(): Promise<void> {
    await this.guarded(() => this.fetchNext());
  }

  /**
   * Submit an answer for the current item. Returns false without any network
   * traffic when a submission is already in flight, when there is no current
   * item, or when the session is done — at most one response per item.
   */
  async answer(answer: Answer): Promise<boolean> {
    if (this.state.inFlight || this.state.phase !== 'item' || !this.state.current) {
      return false;
    }
    const item = this.state.current;
    await this.guarded(async () => {
      const sessionId = this.requireSessionId();
      try {
        const ack = await this.api.submitAnswer(sessionId, item.item_id, answer);
        if (ack.done) {
          this.update({ current: null, progress: ack.progress, phase: 'done' });
        } else {
          this.update({ current: null, progress: ack.progress });
          await this.fetchNext();
        }
      } catch (error) {
        if (error instanceof ConflictError) {
          // The session already moved past this item: resync, keep progress.
          await this.fetchNext();
          return;
        }
        throw error;
      }
    });
    return true;
  }

  /** Re-run the operation that failed. */
  async retry(): Promise<void> {
    const op = this.lastOp;
    if (!op || this.state.inFlight) return;
    await this.guarded(op);
  }

  private requireSessionId(): string {
    if (!this.state.sessionId) throw new Error('session not started');
    return this.state.sessionId;
  }

  private async fetchNext(): Promise<void> {
    const payload = await this.api.nextItem(this.requireSessionId());
    if (payload.done) {
      this.update({ current: null, progress: payload.progress, phase: 'done' });
    } else {
      this.update({ current: payload, progress: payload.progress, phase: 'item' });
    }
  }

  /** Serialize network work behind the in-flight flag; map failures to the
   * error phase while keeping local state for a retry. */
  private async guarded(op: () => Promise<void>): Promise<void> {
    this.lastOp = op;
    this.update({ inFlight: true, lastError: null });
    try {
      await op();
      this.lastOp = null;
      this.update({ inFlight: false });
    } catch (error) {
      this.update({
        inFlight: false,
        phase: 'error',
        lastError: error instanceof Error ? error.message : String(error),
      });
    }
  }
}

function defaultStorage(): KeyValueStore | null {
  try {
    return typeof localStorage === 'undefined' ? null : localStorage;
  } catch {
    return null;
  }
}
