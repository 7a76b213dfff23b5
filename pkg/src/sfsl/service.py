"""HTTP annotation service: serves pending 3AFC tests to human annotators,
records choices in the shared answer log, and reports progress.

State is recoverable from the answer log alone; leases are in-memory and
expire so abandoned tests return to the pending pool.
"""

from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .annotation import AnswerLog, TestAnswer, TripletTest
from .data import FeatureStore


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class Session:
    token: str
    leased_test_id: str | None = None
    lease_expiry: float = 0.0


class AnswerBody(BaseModel):
    test_id: str
    chosen: int


@dataclass
class ServiceState:
    tests: list[TripletTest]
    log: AnswerLog
    store: FeatureStore | None = None
    lease_timeout: float = 600.0
    sessions: dict[str, Session] = field(default_factory=dict)
    leases: dict[str, tuple[str, float]] = field(default_factory=dict)  # test_id -> (token, expiry)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        self.by_id = {t.test_id: t for t in self.tests}

    @property
    def target(self) -> int:
        return len(self.tests)

    def answered_count(self) -> int:
        return sum(1 for t in self.tests if t.test_id in self.log)

    def _session(self, token: str) -> Session:
        s = self.sessions.get(token)
        if s is None:
            raise ServiceError(404, "unknown_session", f"no session {token!r}")
        return s

    def create_session(self) -> Session:
        with self.lock:
            s = Session(token=secrets.token_hex(16))
            self.sessions[s.token] = s
            return s

    def next_test(self, token: str) -> TripletTest | None:
        with self.lock:
            s = self._session(token)
            now = time.monotonic()
            if s.leased_test_id is not None:
                tid = s.leased_test_id
                if tid not in self.log and self.leases.get(tid, ("", 0))[0] == token:
                    # renew and return the same lease
                    self.leases[tid] = (token, now + self.lease_timeout)
                    s.lease_expiry = now + self.lease_timeout
                    return self.by_id[tid]
                s.leased_test_id = None
            for t in self.tests:
                if t.test_id in self.log:
                    continue
                holder = self.leases.get(t.test_id)
                if holder is not None and holder[1] > now and holder[0] != token:
                    continue
                self.leases[t.test_id] = (token, now + self.lease_timeout)
                s.leased_test_id = t.test_id
                s.lease_expiry = now + self.lease_timeout
                return t
            return None  # complete

    def submit(self, token: str, test_id: str, chosen: int) -> dict:
        with self.lock:
            s = self._session(token)
            test = self.by_id.get(test_id)
            if test is None:
                raise ServiceError(404, "unknown_test", f"no test {test_id!r}")
            if chosen not in (0, 1, 2):
                raise ServiceError(422, "bad_choice", "chosen must be 0, 1 or 2")
            prior = self.log.get(test_id)
            if prior is not None:
                if prior.chosen == chosen:
                    return {"status": "ok", "duplicate": True}
                raise ServiceError(
                    409, "conflicting_answer", f"test {test_id} already answered differently"
                )
            ts = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
            self.log.append(TestAnswer(test_id, test.items, chosen, "human", ts))
            if s.leased_test_id == test_id:
                s.leased_test_id = None
            self.leases.pop(test_id, None)
            return {"status": "ok", "duplicate": False}


def _thumb_svg(state: ServiceState, sample_id: str) -> str:
    """Deterministic 2-D scatter glyph: every sample projected onto the
    first two feature principal components, the requested one highlighted."""
    store = state.store
    ids = store.sample_ids()
    X = store.matrix(ids)
    Xc = X - X.mean(axis=0)
    _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
    V = Vt[:2].T
    # fix component signs so the projection is unique
    for j in range(2):
        if V[np.argmax(np.abs(V[:, j])), j] < 0:
            V[:, j] = -V[:, j]
    P = Xc @ V
    lo, hi = P.min(axis=0), P.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    size, pad = 120, 8

    def xy(p):
        q = (p - lo) / span
        return pad + q[0] * (size - 2 * pad), size - pad - q[1] * (size - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}"><rect width="{size}" height="{size}" fill="#ffffff"/>'
    ]
    target = None
    for sid, p in zip(ids, P):
        x, y = xy(p)
        if sid == sample_id:
            target = (x, y)
        else:
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="1.5" fill="#c8c8c8"/>')
    if target is None:
        raise ServiceError(404, "unknown_sample", f"no sample {sample_id!r}")
    parts.append(
        f'<circle cx="{target[0]:.1f}" cy="{target[1]:.1f}" r="5" fill="#d62728" '
        f'stroke="#000000" stroke-width="1"/>'
    )
    parts.append("</svg>")
    return "".join(parts)


def create_app(state: ServiceState, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="sfsl annotation service")

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    @app.get("/api/session")
    def new_session():
        s = state.create_session()
        return {"token": s.token, "target": state.target}

    @app.get("/api/session/{token}/next")
    def next_test(token: str):
        t = state.next_test(token)
        if t is None:
            return {"complete": True}
        return {
            "complete": False,
            "test_id": t.test_id,
            "items": [
                {"sample_id": sid, "thumb_url": f"/api/item/{sid}/thumb"}
                for sid in t.items
            ],
        }

    @app.post("/api/session/{token}/answer")
    def answer(token: str, body: AnswerBody):
        return state.submit(token, body.test_id, body.chosen)

    @app.get("/api/session/{token}/progress")
    def progress(token: str):
        state._session(token)
        return {"answered": state.answered_count(), "target": state.target}

    @app.get("/api/item/{sample_id}/thumb")
    def thumb(sample_id: str):
        if state.store is None:
            raise ServiceError(404, "no_thumbnails", "no feature store configured")
        return Response(content=_thumb_svg(state, sample_id), media_type="image/svg+xml")

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
