"""HTTP consultation service.

Wraps a trained agent behind a small session API: a session starts from a
list of self-reported symptoms, each answer advances the greedy policy one
turn, and the final response carries a ranked diagnosis. Sessions live in
a sqlite file so they survive restarts; per-session locks keep concurrent
answers serialized.
"""

from __future__ import annotations

import json
import secrets
import sqlite3
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .agent import Agent, actor_forward, greedy_action
from .diagnoser import Diagnoser
from .env import DialogueState
from .errors import UsageError
from .nets import params_fingerprint
from .rollouts import final_diagnosis_batch
from .vae import PartialVae

SESSION_ID_BYTES = 16


class SessionStore:
    """sqlite-backed session persistence; one JSON payload per session."""

    def __init__(self, path):
        self.path = str(path)
        with self._connect() as con:
            con.execute(
                "CREATE TABLE IF NOT EXISTS sessions ("
                " id TEXT PRIMARY KEY,"
                " created_at REAL NOT NULL,"
                " updated_at REAL NOT NULL,"
                " payload TEXT NOT NULL)"
            )

    def _connect(self) -> sqlite3.Connection:
        return sqlite3.connect(self.path, timeout=10.0)

    def create(self, payload: dict) -> str:
        sid = secrets.token_urlsafe(SESSION_ID_BYTES)
        now = time.time()
        with self._connect() as con:
            con.execute(
                "INSERT INTO sessions (id, created_at, updated_at, payload) VALUES (?, ?, ?, ?)",
                (sid, now, now, json.dumps(payload)),
            )
        return sid

    def get(self, sid: str) -> dict | None:
        with self._connect() as con:
            row = con.execute(
                "SELECT payload FROM sessions WHERE id = ?", (sid,)
            ).fetchone()
        return json.loads(row[0]) if row else None

    def put(self, sid: str, payload: dict) -> None:
        with self._connect() as con:
            cur = con.execute(
                "UPDATE sessions SET payload = ?, updated_at = ? WHERE id = ?",
                (json.dumps(payload), time.time(), sid),
            )
            if cur.rowcount != 1:
                raise KeyError(sid)

    def delete(self, sid: str) -> bool:
        with self._connect() as con:
            cur = con.execute("DELETE FROM sessions WHERE id = ?", (sid,))
        return cur.rowcount == 1

    def list_ids(self) -> list[str]:
        with self._connect() as con:
            rows = con.execute(
                "SELECT id FROM sessions ORDER BY created_at"
            ).fetchall()
        return [r[0] for r in rows]


class ServiceModels:
    """Loaded checkpoints plus the derived constants the handlers need."""

    def __init__(self, agent: Agent, diagnoser: Diagnoser, vae: PartialVae | None):
        agent.check_compatible(diagnoser, vae)
        self.agent = agent
        self.diagnoser = diagnoser
        self.vae = vae
        self.symptoms = agent.symptoms
        self.diseases = agent.diseases
        self.symptom_index = {name: i for i, name in enumerate(agent.symptoms)}
        self.n_max = agent.n_max
        self.fingerprints = {
            "agent": params_fingerprint(agent.actor),
            "diagnoser": params_fingerprint(diagnoser),
            "vae": params_fingerprint(vae) if vae is not None else None,
        }

    @classmethod
    def load(cls, model_dir) -> "ServiceModels":
        model_dir = Path(model_dir)
        agent = Agent.load(model_dir / "agent.pt")
        diagnoser = Diagnoser.load(model_dir / "diagnoser.pt")
        vae_path = model_dir / "vae.pt"
        vae = PartialVae.load(vae_path) if vae_path.exists() else None
        return cls(agent, diagnoser, vae)


def initial_state(models: ServiceModels, reports: list[tuple[int, bool]]) -> DialogueState:
    """Turn-zero state from self-reported (symptom index, present) pairs."""
    obs = np.zeros(len(models.symptoms), dtype=np.int8)
    for idx, present in reports:
        if obs[idx] != 0:
            raise UsageError(f"duplicate report for symptom index {idx}")
        obs[idx] = 1 if present else -1
    return DialogueState(obs, frozenset(), 0, models.n_max)


def apply_answer(state: DialogueState, symptom: int, positive: bool) -> DialogueState:
    """Record a client-provided answer (the service has no ground truth)."""
    if state.obs_vec[symptom] != 0:
        raise UsageError(f"symptom index {symptom} was already observed")
    obs = state.obs_vec.copy()
    obs[symptom] = 1 if positive else -1
    return DialogueState(obs, state.asked | {symptom}, state.turn + 1, state.n_max)


def ranked_diagnosis(probs_row: np.ndarray, diseases: list[str]) -> list[dict]:
    order = np.argsort(-probs_row, kind="stable")
    return [
        {"disease": diseases[i], "prob": float(probs_row[i])}
        for i in order
    ]


def conclude(models: ServiceModels, state: DialogueState) -> list[dict]:
    """Final ranked diagnosis for a session state."""
    probs = final_diagnosis_batch(
        state.obs_vec[None, :], models.diagnoser, models.vae, models.agent.variant
    )
    return ranked_diagnosis(probs[0], models.diseases)


def next_step(models: ServiceModels, state: DialogueState) -> tuple[int | None, list | None]:
    """(pending symptom, diagnosis): exactly one side is set.

    The greedy policy picks the next inquiry; terminate (chosen or forced
    by the turn cap) yields the diagnosis instead.
    """
    if state.turn < state.n_max:
        action = greedy_action(actor_forward(models.agent.actor, state))
        if not action.is_terminate:
            return action.symptom, None
    return None, conclude(models, state)


def _state_of(payload: dict, models: ServiceModels) -> DialogueState:
    obs = np.asarray(payload["obs"], dtype=np.int8)
    asked = frozenset(
        models.symptom_index[entry["symptom"]] for entry in payload["history"]
    )
    return DialogueState(obs, asked, payload["turn"], models.n_max)


def _store_state(payload: dict, state: DialogueState) -> None:
    payload["obs"] = [int(v) for v in state.obs_vec]
    payload["turn"] = state.turn


def _public(sid: str, payload: dict, models: ServiceModels) -> dict:
    pending = payload["pending"]
    return {
        "id": sid,
        "turn": payload["turn"],
        "max_turns": models.n_max,
        "done": payload["done"],
        "reports": payload["reports"],
        "history": payload["history"],
        "next": None if pending is None else {"symptom": models.symptoms[pending]},
        "diagnosis": payload["diagnosis"],
    }


class SymptomReport(BaseModel):
    symptom: str
    present: bool


class CreateSessionRequest(BaseModel):
    reports: list[SymptomReport]


class AnswerRequest(BaseModel):
    answer: str
    turn: int | None = None


def create_app(model_dir, db_path=None) -> FastAPI:
    """Application factory; separate instances sharing ``db_path`` behave as
    one service across restarts."""
    models = ServiceModels.load(model_dir)
    if db_path is None:
        db_path = Path(model_dir) / "sessions.db"
    store = SessionStore(db_path)
    app = FastAPI(title="symcheck consultation service")
    # The browser client may be served from a different origin than the
    # service; the API carries no credentials, so a blanket allowance is safe.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.models = models
    app.state.store = store
    locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()

    def lock_for(sid: str) -> threading.Lock:
        with locks_guard:
            return locks.setdefault(sid, threading.Lock())

    def load_session(sid: str) -> dict:
        payload = store.get(sid)
        if payload is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return payload

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok",
            "variant": models.agent.variant,
            "n_symptoms": len(models.symptoms),
            "n_diseases": len(models.diseases),
            "max_turns": models.n_max,
            "fingerprints": models.fingerprints,
            "catalog": "/catalog",
            "endpoints": ["/health", "/catalog", "/sessions"],
        }

    @app.get("/catalog")
    def catalog() -> dict:
        return {
            "symptoms": models.symptoms,
            "diseases": models.diseases,
            "max_turns": models.n_max,
        }

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest) -> dict:
        indexed = []
        for report in req.reports:
            idx = models.symptom_index.get(report.symptom)
            if idx is None:
                raise HTTPException(
                    status_code=400, detail=f"unknown symptom {report.symptom!r}"
                )
            indexed.append((idx, report.present))
        try:
            state = initial_state(models, indexed)
        except UsageError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        pending, diagnosis = next_step(models, state)
        payload = {
            "reports": [r.model_dump() for r in req.reports],
            "history": [],
            "pending": pending,
            "done": diagnosis is not None,
            "diagnosis": diagnosis,
        }
        _store_state(payload, state)
        sid = store.create(payload)
        return _public(sid, payload, models)

    @app.get("/sessions")
    def list_sessions() -> dict:
        summaries = []
        for sid in store.list_ids():
            payload = store.get(sid)
            if payload is None:
                continue
            summaries.append({
                "id": sid,
                "turn": payload["turn"],
                "max_turns": models.n_max,
                "done": payload["done"],
            })
        return {"sessions": summaries}

    @app.get("/sessions/{sid}")
    def get_session(sid: str) -> dict:
        with lock_for(sid):
            return _public(sid, load_session(sid), models)

    @app.delete("/sessions/{sid}", status_code=204)
    def delete_session(sid: str) -> Response:
        with lock_for(sid):
            if not store.delete(sid):
                raise HTTPException(status_code=404, detail="unknown session")
        return Response(status_code=204)

    @app.post("/sessions/{sid}/answer")
    def answer(sid: str, req: AnswerRequest) -> dict:
        if req.answer not in ("yes", "no"):
            raise HTTPException(status_code=400, detail='answer must be "yes" or "no"')
        with lock_for(sid):
            payload = load_session(sid)
            if payload["done"]:
                raise HTTPException(status_code=409, detail="session already concluded")
            if req.turn is not None and req.turn != payload["turn"]:
                raise HTTPException(
                    status_code=409,
                    detail=f"answer targets turn {req.turn} but the session is at turn {payload['turn']}",
                )
            state = _state_of(payload, models)
            pending = payload["pending"]
            state = apply_answer(state, pending, req.answer == "yes")
            payload["history"].append(
                {"symptom": models.symptoms[pending], "answer": req.answer}
            )
            next_pending, diagnosis = next_step(models, state)
            payload["pending"] = next_pending
            payload["done"] = diagnosis is not None
            payload["diagnosis"] = diagnosis
            _store_state(payload, state)
            store.put(sid, payload)
            return _public(sid, payload, models)

    return app


def serve(model_dir, host: str = "127.0.0.1", port: int = 8000, db_path=None) -> None:
    import uvicorn

    uvicorn.run(create_app(model_dir, db_path), host=host, port=port, log_level="warning")
