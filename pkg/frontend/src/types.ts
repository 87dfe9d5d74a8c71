/** Shapes exchanged with the rating service, plus the UI's own state. */

export interface Progress {
  answered: number;
  total: number;
}

export interface Circle {
  cx: number;
  cy: number;
  r: number;
}

export interface SessionInfo {
  session_id: string;
  rater_id: string;
  progress: Progress;
  done: boolean;
}

export interface ItemPayload {
  done: false;
  item_id: string;
  patch: string;
  circle: Circle;
  question: string;
  progress: Progress;
}

export interface DonePayload {
  done: true;
  progress: Progress;
}

export type NextPayload = ItemPayload | DonePayload;

export interface SubmitAck {
  ok: boolean;
  progress: Progress;
  done: boolean;
}

export type Answer = 'yes' | 'no';

export type UiPhase = 'loading' | 'item' | 'done' | 'error';

/** Single-tab session state: exactly one current item, one request at a time. */
export interface UiSessionState {
  sessionId: string | null;
  phase: UiPhase;
  current: ItemPayload | null;
  progress: Progress;
  inFlight: boolean;
  lastError: string | null;
}

export interface WindowSize {
  width: number;
  height: number;
}
