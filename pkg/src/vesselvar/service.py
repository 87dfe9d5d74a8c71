"""HTTP/JSON service that walks raters through a rating set.

Sessions are deterministic: a rater always gets the same session id and the
same item order, a seeded permutation keyed by the rating-set seed and the
rater id, so sessions survive restarts and are reproducible. The response
log is the single source of truth: every accepted answer is appended to a
JSONL file and flushed to disk before the request is acknowledged, and on
startup session cursors are rebuilt by replaying the log. Raters move
forward only: each answer must target the current item (conflict
otherwise), and answered items cannot be changed.

Item payloads carry only what a rater may see: the image reference, the
circle, the fixed question, and progress. Category, duplicate links, and
annotator identities stay server-side.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .patches import RatingSet, load_dataset_index, load_rating_set
from .rating import (
    ANSWERS,
    DEFAULT_ANNOTATORS,
    RatingResponse,
    agreement_table,
    agreement_csv_text,
    append_response_log,
    read_response_log,
)

ADMIN_TOKEN_ENV = "RATING_ADMIN_TOKEN"


class UnknownSession(KeyError):
    pass


class OutOfOrder(Exception):
    """The submitted item is not the session's current item."""


class AlreadyAnswered(Exception):
    """The submitted item already has a logged response."""


@dataclass
class Session:
    session_id: str
    rater_id: str
    order: tuple  # permutation of item ids
    answered: set = field(default_factory=set)

    @property
    def cursor(self) -> int:
        k = 0
        while k < len(self.order) and self.order[k] in self.answered:
            k += 1
        return k

    @property
    def done(self) -> bool:
        return self.cursor >= len(self.order)

    def progress(self) -> dict:
        return {"answered": self.cursor, "total": len(self.order)}


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class RatingStore:
    """Session registry plus the append-only response log.

    Appends are serialized under one lock; snapshot reads take the same
    lock so an export never observes a partial line.
    """

    def __init__(self, rating_set: RatingSet, log_path, annotators=DEFAULT_ANNOTATORS):
        self.rating_set = rating_set
        self.items_by_id = {it.item_id: it for it in rating_set.items}
        self.log_path = Path(log_path)
        self.annotators = tuple(annotators)
        self.sessions = {}
        self.lock = threading.Lock()
        self._replay()

    def _replay(self) -> None:
        if not self.log_path.exists():
            return
        for resp in read_response_log(self.log_path):
            if resp.item_id not in self.items_by_id:
                continue
            session = self._ensure_session(resp.rater_id)
            session.answered.add(resp.item_id)

    def session_id_for(self, rater_id: str) -> str:
        return _digest(f"{self.rating_set.seed}|session|{rater_id}")[:16]

    def order_for(self, rater_id: str) -> tuple:
        key = _digest(f"{self.rating_set.seed}|order|{rater_id}")
        rng = random.Random(int(key[:16], 16))
        ids = [it.item_id for it in self.rating_set.items]
        rng.shuffle(ids)
        return tuple(ids)

    def _ensure_session(self, rater_id: str) -> Session:
        sid = self.session_id_for(rater_id)
        if sid not in self.sessions:
            self.sessions[sid] = Session(
                session_id=sid, rater_id=rater_id, order=self.order_for(rater_id)
            )
        return self.sessions[sid]

    def open_session(self, rater_id: str) -> Session:
        if not rater_id or not rater_id.strip():
            raise ValueError("rater_id must be nonempty")
        with self.lock:
            return self._ensure_session(rater_id.strip())

    def get_session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise UnknownSession(session_id)
        return session

    def current_item(self, session_id: str):
        """The item the session must answer next, or None when done."""
        session = self.get_session(session_id)
        if session.done:
            return None
        return self.items_by_id[session.order[session.cursor]]

    def submit(self, session_id: str, item_id: str, answer: str) -> Session:
        if answer not in ANSWERS:
            raise ValueError(f"answer must be one of {ANSWERS}")
        with self.lock:
            session = self.get_session(session_id)
            if item_id not in self.items_by_id or item_id not in session.order:
                raise KeyError(item_id)
            if item_id in session.answered:
                raise AlreadyAnswered(item_id)
            if session.done or session.order[session.cursor] != item_id:
                raise OutOfOrder(item_id)
            resp = RatingResponse(
                rater_id=session.rater_id,
                item_id=item_id,
                answer=answer,
                timestamp=time.time(),
            )
            append_response_log(self.log_path, resp)
            session.answered.add(item_id)
            return session

    def snapshot_log_text(self) -> str:
        with self.lock:
            if not self.log_path.exists():
                return ""
            return self.log_path.read_text(encoding="utf-8")


def _item_payload(store: RatingStore, session: Session) -> dict:
    if session.done:
        return {"done": True, "progress": session.progress()}
    item = store.items_by_id[session.order[session.cursor]]
    cx, cy, r = item.circle
    return {
        "done": False,
        "item_id": item.item_id,
        "patch": f"/patches/{item.patch_id}.png",
        "circle": {"cx": cx, "cy": cy, "r": r},
        "question": item.question,
        "progress": session.progress(),
    }


def _session_payload(session: Session) -> dict:
    return {
        "session_id": session.session_id,
        "rater_id": session.rater_id,
        "progress": session.progress(),
        "done": session.done,
    }


def create_app(
    bundle_dir,
    log_path=None,
    admin_token: str = None,
    cors_origins=("*",),
) -> FastAPI:
    """Build the service app around a rating bundle directory.

    The bundle must contain rating_set.json, dataset.json, and patches/.
    Responses append to log_path (default <bundle>/responses.jsonl). The
    admin export endpoint requires a bearer token, taken from the
    RATING_ADMIN_TOKEN environment variable unless given explicitly.
    """
    bundle_dir = Path(bundle_dir)
    rating_set = load_rating_set(bundle_dir)
    index = load_dataset_index(bundle_dir)
    annotators = DEFAULT_ANNOTATORS
    for entry in index.values():
        ids = entry.get("annotators")
        if ids and len(ids) == 2:
            annotators = tuple(ids)
            break
    if log_path is None:
        log_path = bundle_dir / "responses.jsonl"
    store = RatingStore(rating_set, log_path, annotators=annotators)

    app = FastAPI(title="vessel rating service")
    app.state.store = store
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def _admin_token() -> str:
        return admin_token if admin_token is not None else os.environ.get(ADMIN_TOKEN_ENV, "")

    @app.get("/api/health")
    def health():
        return {"ok": True, "items": len(rating_set.items)}

    async def _rater_id_from(request: Request) -> str:
        rater_id = request.query_params.get("rater_id")
        if rater_id:
            return rater_id
        body = await request.body()
        if body:
            try:
                obj = json.loads(body)
            except ValueError:
                raise HTTPException(status_code=422, detail="malformed JSON body")
            if isinstance(obj, dict) and obj.get("rater_id"):
                return str(obj["rater_id"])
        raise HTTPException(status_code=422, detail="rater_id required")

    @app.get("/api/session")
    async def open_session_get(request: Request):
        rater_id = await _rater_id_from(request)
        try:
            session = store.open_session(rater_id)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return _session_payload(session)

    @app.post("/api/session")
    async def open_session_post(request: Request):
        return await open_session_get(request)

    @app.get("/api/session/{session_id}/next")
    def next_item(session_id: str):
        try:
            session = store.get_session(session_id)
        except UnknownSession:
            raise HTTPException(status_code=404, detail="unknown session")
        return _item_payload(store, session)

    @app.post("/api/session/{session_id}/response")
    async def submit_response(session_id: str, request: Request):
        try:
            body = json.loads(await request.body())
        except ValueError:
            raise HTTPException(status_code=422, detail="malformed JSON body")
        if not isinstance(body, dict):
            raise HTTPException(status_code=422, detail="JSON object required")
        item_id = body.get("item_id")
        answer = body.get("answer")
        if not item_id:
            raise HTTPException(status_code=422, detail="item_id required")
        try:
            session = store.submit(session_id, str(item_id), answer)
        except UnknownSession:
            raise HTTPException(status_code=404, detail="unknown session")
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown item")
        except AlreadyAnswered:
            raise HTTPException(status_code=409, detail="item already answered")
        except OutOfOrder:
            raise HTTPException(status_code=409, detail="item is not the current item")
        return {"ok": True, "progress": session.progress(), "done": session.done}

    @app.get("/api/admin/export")
    def admin_export(request: Request, ref: str = None):
        token = _admin_token()
        header = request.headers.get("authorization", "")
        if not token:
            raise HTTPException(status_code=403, detail="admin export disabled")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="bad token")
        if ref is None:
            ref = store.annotators[0]
        if ref not in store.annotators:
            raise HTTPException(
                status_code=400, detail=f"ref must be one of {list(store.annotators)}"
            )
        log_text = store.snapshot_log_text()
        responses = read_response_log(store.log_path) if store.log_path.exists() else []
        table = agreement_table(
            responses, rating_set.items, reference=ref, annotators=store.annotators
        )
        return JSONResponse(
            {
                "reference": ref,
                "log": log_text,
                "table_csv": agreement_csv_text(table),
                "n_responses": len(responses),
            }
        )

    patches_dir = bundle_dir / "patches"
    if patches_dir.is_dir():
        app.mount("/patches", StaticFiles(directory=str(patches_dir)), name="patches")

    return app


def run_service(bundle_dir, host: str = "127.0.0.1", port: int = 8000, **kwargs) -> None:
    """Run the app under uvicorn (blocking)."""
    import uvicorn

    app = create_app(bundle_dir, **kwargs)
    uvicorn.run(app, host=host, port=port, log_level="warning")
