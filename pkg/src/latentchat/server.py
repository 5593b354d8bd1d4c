"""HTTP inference service over a frozen checkpoint.

Sessions live in memory (LRU-capped); each session owns a lock and a
PRNG stream derived from (config seed, session counter), so replies are
deterministic per session and concurrent sessions never share state.
"""

from __future__ import annotations

import hashlib
import threading
import uuid
from collections import OrderedDict

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .config import Config
from .corpus import Turn
from .model import generate_candidates
from .training import load_model

MAX_SESSIONS = 1000

SELECT_STRATEGIES = ("lexdiv", "first", "random")


class MessageIn(BaseModel):
    text: str
    n: int | None = None
    select: str | None = None


class Session:
    def __init__(self, session_id: str, seed_stream):
        self.id = session_id
        self.turns: list[Turn] = []
        self.rng = np.random.default_rng(seed_stream)
        self.lock = threading.Lock()


def _checkpoint_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def build_app(checkpoint_path, cfg: Config) -> FastAPI:
    model, nets, head, mcfg, vocab = load_model(checkpoint_path)
    ckpt_hash = _checkpoint_hash(checkpoint_path)

    app = FastAPI(title="latentchat")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )
    sessions: OrderedDict[str, Session] = OrderedDict()
    store_lock = threading.Lock()
    counter = {"n": 0}

    def get_session(session_id: str) -> Session:
        with store_lock:
            if session_id not in sessions:
                raise HTTPException(status_code=404, detail="unknown session")
            sessions.move_to_end(session_id)
            return sessions[session_id]

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "model_info": {
                "variant": mcfg.variant,
                "d_latent": mcfg.d_latent,
                "checkpoint_hash": ckpt_hash,
            },
        }

    @app.post("/sessions", status_code=201)
    def create_session():
        with store_lock:
            sid = uuid.uuid4().hex
            counter["n"] += 1
            sessions[sid] = Session(sid, [cfg.seed, counter["n"]])
            while len(sessions) > MAX_SESSIONS:
                sessions.popitem(last=False)
        return {"session_id": sid}

    @app.get("/sessions/{session_id}/history")
    def history(session_id: str):
        session = get_session(session_id)
        with session.lock:
            return {"turns": [{"speaker": t.speaker, "text": t.text}
                              for t in session.turns]}

    @app.post("/sessions/{session_id}/message")
    def message(session_id: str, body: MessageIn):
        if not body.text.strip():
            raise HTTPException(status_code=400, detail="empty text")
        n = body.n if body.n is not None else mcfg.n_candidates
        if not 1 <= n <= 10:
            raise HTTPException(status_code=400, detail="n out of range 1..10")
        select = body.select or "lexdiv"
        if select not in SELECT_STRATEGIES:
            raise HTTPException(status_code=400, detail=f"unknown select {select!r}")
        session = get_session(session_id)
        with session.lock:
            session.turns.append(Turn("user", body.text))
            cs = generate_candidates(model, nets, vocab, session.turns, mcfg,
                                     session.rng, n=n)
            if select == "first":
                selected = 0
            elif select == "random":
                selected = int(session.rng.integers(len(cs.candidates)))
            else:
                selected = cs.selected_index
            reply = cs.candidates[selected].text
            session.turns.append(Turn("agent", reply))
            return {
                "candidates": [
                    {"text": c.text,
                     "mtld": round(c.mtld, 6),
                     "mattr": round(c.mattr, 6),
                     "combined": round(c.combined, 6)}
                    for c in cs.candidates
                ],
                "selected_index": selected,
                "reply": reply,
            }

    return app
