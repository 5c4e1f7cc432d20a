"""HTTP annotation API: one query in flight per session, durable log.

Sessions persist as append-only JSON-lines event logs; in-memory state
is always derived by replaying the log, so a restarted server resumes
every session exactly where labeling left off.  Within a session all
mutations are serialized; separate sessions are independent.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .learner import LearnerConfig, Pool, StepEval, evaluate_state, _ClusterState
from .selection import ClusterPrefilter, SelectionConfig
from .shrinkage import ShrinkageConfig
from .stopping import StoppingConfig

API_VERSION = "1"


def _error(status: int, code: str, message: str, field: str | None = None):
    body = {"code": code, "message": message}
    if field is not None:
        body["field"] = field
    return JSONResponse(status_code=status, content=body)


def config_from_dict(raw: dict, p: int) -> LearnerConfig:
    """Build a LearnerConfig from a flat JSON dict, validating field names."""
    raw = dict(raw or {})
    dim = raw.pop("covariate_dim", None)
    if dim is not None and int(dim) != p:
        raise FieldError("covariate_dim", f"data has {p} columns, config says {dim}")
    shrink_keys = {"epsilon", "gamma", "lambda_scale", "lambda_exponent"}
    stop_keys = {"d", "alpha", "n0", "rho_fn"}
    sel_keys = {"rho", "p_target"}
    top_keys = {"estimator_mode", "max_steps", "seed"}
    unknown = set(raw) - shrink_keys - stop_keys - sel_keys - top_keys - {"cluster_k"}
    if unknown:
        raise FieldError(sorted(unknown)[0], "unknown config field")
    try:
        prefilter = None
        if "cluster_k" in raw:
            prefilter = ClusterPrefilter(k=int(raw["cluster_k"]))
        return LearnerConfig(
            shrinkage=ShrinkageConfig(**{k: raw[k] for k in shrink_keys if k in raw}),
            selection=SelectionConfig(
                **{k: raw[k] for k in sel_keys if k in raw},
                cluster_prefilter=prefilter,
            ),
            stopping=StoppingConfig(**{k: raw[k] for k in stop_keys if k in raw}),
            **{k: raw[k] for k in top_keys if k in raw},
        )
    except (TypeError, ValueError) as exc:
        raise FieldError(None, str(exc)) from exc


class FieldError(ValueError):
    def __init__(self, field, message):
        super().__init__(message)
        self.field = field


class SessionStore:
    """One JSONL event file per session under a store directory."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, sid: str) -> Path:
        return self.root / f"{sid}.jsonl"

    def new_id(self) -> str:
        return uuid.uuid4().hex[:12]

    def append(self, sid: str, event: dict) -> None:
        with open(self.path(sid), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def read(self, sid: str) -> list[dict]:
        with open(self.path(sid), encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def session_ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.jsonl"))


def _jsonable(x):
    if x is None:
        return None
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


class Session:
    """Single-annotator labeling session over a features-only pool.

    The first n0 queries are a seeded uniform bootstrap draw served one
    at a time (extended if the labels arrive single-class, since the
    model cannot fit without both).  After that, each label triggers a
    synchronous refit / stop-check / selection.
    """

    def __init__(
        self,
        sid: str,
        features: np.ndarray,
        config: LearnerConfig,
        store: SessionStore,
        record: bool = True,
    ):
        self.id = sid
        self.store = store
        self.lock = threading.RLock()
        self.pool = Pool(features=np.asarray(features, dtype=float))
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        order = self.pool.candidate_indices()
        n0 = min(config.stopping.n0, len(order))
        self.bootstrap_queue = [
            int(i) for i in self.rng.choice(order, size=n0, replace=False)
        ]
        self.phase = "bootstrap"
        self.warm: StepEval | None = None
        self.last_eval: StepEval | None = None
        self.pending: int | None = None
        self.history: list[dict] = []
        self.cluster_state = _ClusterState()
        if record:
            self.store.append(
                sid,
                {
                    "type": "init",
                    "session_id": sid,
                    "ts": time.time(),
                    "config": _config_dict(config),
                    "features": np.asarray(features, dtype=float).tolist(),
                },
            )
        self._set_pending(self.bootstrap_queue[0], record)

    def _set_pending(self, subject_id: int | None, record: bool) -> None:
        self.pending = subject_id
        if subject_id is not None and record:
            self.store.append(
                self.id, {"type": "query", "ts": time.time(), "subject_id": subject_id}
            )

    def _advance(self, record: bool) -> None:
        """Compute the next pending query (or stop) after a label."""
        n_labeled = self.pool.n_labeled
        if self.phase == "bootstrap":
            if n_labeled < len(self.bootstrap_queue):
                self._set_pending(self.bootstrap_queue[n_labeled], record)
                return
            revealed = self.pool.revealed[self.pool.active_order]
            if len(set(int(v) for v in revealed)) < 2:
                remaining = self.pool.candidate_indices()
                if remaining.size == 0:
                    self.phase = "stopped"
                    self._set_pending(None, record)
                    if record:
                        self.store.append(
                            self.id,
                            {"type": "stop", "ts": time.time(), "n": n_labeled,
                             "reason": "pool_exhausted"},
                        )
                    return
                extra = int(self.rng.choice(remaining))
                self.bootstrap_queue.append(extra)
                self._set_pending(extra, record)
                return
            self.phase = "active"
        ev = evaluate_state(
            self.pool, self.config, warm=self.warm, cluster_state=self.cluster_state
        )
        self.last_eval = ev
        self.history.append(
            {
                "n": ev.n,
                "nu": _jsonable(ev.nu),
                "threshold": _jsonable(ev.stop.threshold if ev.stop else None),
            }
        )
        if ev.stopped or ev.selected is None or ev.n >= self.config.max_steps:
            self.phase = "stopped"
            self._set_pending(None, record)
            if record:
                reason = "rule" if ev.stopped else (
                    "max_steps" if ev.n >= self.config.max_steps else "pool_exhausted"
                )
                self.store.append(
                    self.id,
                    {"type": "stop", "ts": time.time(), "n": ev.n, "reason": reason},
                )
            return
        self.warm = ev
        self._set_pending(ev.selected, record)

    def apply_label(self, subject_id: int, label: int, record: bool = True) -> None:
        with self.lock:
            if self.pending is None or subject_id != self.pending:
                raise ConflictError(
                    f"subject {subject_id} is not the pending query "
                    f"(pending={self.pending})"
                )
            if record:
                self.store.append(
                    self.id,
                    {
                        "type": "label",
                        "ts": time.time(),
                        "subject_id": int(subject_id),
                        "label": int(label),
                    },
                )
            self.pool.add_label(int(subject_id), int(label))
            self._advance(record)

    def query_view(self) -> dict:
        with self.lock:
            if self.phase == "stopped" or self.pending is None:
                return {"stopped": True, "state": self.state_view()}
            ev = self.last_eval
            u_score = d_rank = None
            if ev is not None and ev.selected == self.pending:
                u_score = _jsonable(ev.u_score)
                d_rank = _jsonable(ev.d_rank)
            return {
                "subject_id": int(self.pending),
                "features": [float(v) for v in self.pool.features[self.pending]],
                "u_score": u_score,
                "d_rank": d_rank,
                "bootstrap": self.phase == "bootstrap",
            }

    def state_view(self) -> dict:
        with self.lock:
            ev = self.last_eval
            view = {
                "session_id": self.id,
                "n_labeled": self.pool.n_labeled,
                "stopped": self.phase == "stopped",
                "pending_subject_id": self.pending,
                "history": list(self.history),
                "beta_tilde": None,
                "beta_hat": None,
                "indicators": None,
                "p0_hat": None,
                "nu": None,
                "threshold": None,
            }
            if ev is not None:
                view.update(
                    beta_tilde=[_jsonable(b) for b in ev.beta_tilde],
                    beta_hat=[_jsonable(b) for b in ev.beta_hat],
                    indicators=[int(i) for i in ev.indicators],
                    p0_hat=None
                    if self.config.estimator_mode == "mle"
                    else int(ev.p0_hat),
                    nu=_jsonable(ev.nu),
                    threshold=_jsonable(ev.stop.threshold if ev.stop else None),
                )
            return view


class ConflictError(Exception):
    pass


def _config_dict(config: LearnerConfig) -> dict:
    d = {
        "estimator_mode": config.estimator_mode,
        "max_steps": config.max_steps,
        "seed": config.seed,
        "epsilon": config.shrinkage.epsilon,
        "gamma": config.shrinkage.gamma,
        "lambda_scale": config.shrinkage.lambda_scale,
        "lambda_exponent": config.shrinkage.lambda_exponent,
        "rho": config.selection.rho,
        "p_target": config.selection.p_target,
        "d": config.stopping.d,
        "alpha": config.stopping.alpha,
        "n0": config.stopping.n0,
        "rho_fn": config.stopping.rho_fn,
    }
    if config.selection.cluster_prefilter is not None:
        d["cluster_k"] = config.selection.cluster_prefilter.k
    return d


def rebuild_session(sid: str, store: SessionStore) -> Session:
    """Replay a session's event log into a live session."""
    events = store.read(sid)
    if not events or events[0]["type"] != "init":
        raise ValueError(f"session {sid} log has no init event")
    init = events[0]
    config = config_from_dict(init["config"], len(init["features"][0]))
    session = Session(
        sid, np.asarray(init["features"], dtype=float), config, store, record=False
    )
    for event in events[1:]:
        if event["type"] == "label":
            session.apply_label(event["subject_id"], event["label"], record=False)
    return session


def create_app(store_dir, default_features: np.ndarray | None = None) -> FastAPI:
    """Annotation service over a session store directory."""
    app = FastAPI(title="alogit annotation service", version=API_VERSION)
    store = SessionStore(store_dir)
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    def get_session(sid: str) -> Session | None:
        with registry_lock:
            if sid in sessions:
                return sessions[sid]
            if store.path(sid).exists():
                sessions[sid] = rebuild_session(sid, store)
                return sessions[sid]
        return None

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "version": API_VERSION,
            "sessions": len(store.session_ids()),
            "store": str(store.root),
        }

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _error(400, "bad_request", "body must be JSON")
        if not isinstance(payload, dict):
            return _error(400, "bad_request", "body must be a JSON object")
        features = payload.get("features")
        if features is None:
            if default_features is None:
                return _error(
                    400, "invalid_config", "no features given and no server default",
                    field="features",
                )
            features = default_features
        features = np.asarray(features, dtype=float)
        if features.ndim != 2 or features.shape[0] < 1:
            return _error(400, "invalid_config", "features must be a 2-D array",
                          field="features")
        if not np.all(np.isfinite(features)):
            return _error(400, "invalid_config", "features must be finite",
                          field="features")
        try:
            config = config_from_dict(payload.get("config") or {}, features.shape[1])
        except FieldError as exc:
            return _error(400, "invalid_config", str(exc), field=exc.field)
        if features.shape[0] <= config.stopping.n0:
            return _error(
                400, "invalid_config",
                f"pool of {features.shape[0]} cannot bootstrap n0="
                f"{config.stopping.n0}", field="n0",
            )
        sid = store.new_id()
        session = Session(sid, features, config, store)
        with registry_lock:
            sessions[sid] = session
        return {"session_id": sid}

    @app.get("/sessions/{sid}/query")
    def get_query(sid: str):
        session = get_session(sid)
        if session is None:
            return _error(404, "not_found", f"unknown session {sid}")
        return session.query_view()

    @app.post("/sessions/{sid}/labels")
    async def post_label(sid: str, request: Request):
        session = get_session(sid)
        if session is None:
            return _error(404, "not_found", f"unknown session {sid}")
        try:
            payload = await request.json()
        except Exception:
            return _error(400, "bad_request", "body must be JSON")
        label = payload.get("label")
        subject_id = payload.get("subject_id")
        if label not in (0, 1):
            return _error(422, "invalid_label", f"label must be 0 or 1, got {label!r}",
                          field="label")
        if not isinstance(subject_id, int):
            return _error(422, "invalid_label", "subject_id must be an integer",
                          field="subject_id")
        try:
            session.apply_label(subject_id, label)
        except ConflictError as exc:
            return _error(409, "stale_subject", str(exc), field="subject_id")
        return session.state_view()

    @app.get("/sessions/{sid}/state")
    def get_state(sid: str):
        session = get_session(sid)
        if session is None:
            return _error(404, "not_found", f"unknown session {sid}")
        return session.state_view()

    return app
