"""Labeling service: session lifecycle over the personalization engine.

A session walks the state machine

    awaiting_labels -> retraining -> awaiting_labels | complete

with one transition to ``retraining`` per submitted batch (exactly-once
training) and failed submissions leaving the state untouched.  The
:class:`SessionManager` is the engine; ``create_app`` wraps it in a JSON
HTTP API.

Concurrency: submissions for one token are serialized by a non-blocking
per-session writer lock (a second concurrent submit gets a conflict), while
status reads stay lock-free on immutable snapshots.
"""

import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .classifiers.base import ClassifierSpec, TrainedModel, train_classifier
from .errors import (
    DataError,
    EngageKitError,
    ExhaustedPoolError,
    ValueRangeError,
)
from .evaluation import training_arrays
from .ingest import EngagementLevel, LabeledSequenceSet
from .personalization import (
    PersonalizationSession,
    PoolEntry,
    TrainingBundle,
    UnlabeledPool,
    apply_labels,
    propose_batch,
    split_personal_data,
    start_personalization,
)

STATUS_AWAITING = "awaiting_labels"
STATUS_RETRAINING = "retraining"
STATUS_COMPLETE = "complete"

_LEGAL_TRANSITIONS = {
    (STATUS_AWAITING, STATUS_RETRAINING),
    (STATUS_RETRAINING, STATUS_AWAITING),
    (STATUS_RETRAINING, STATUS_COMPLETE),
}


class ServiceError(EngageKitError):
    """An error with an API error code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message

    @property
    def http_status(self) -> int:
        return {
            "not_found": 404,
            "conflict": 409,
            "validation": 400,
            "exhausted": 409,
        }[self.code]


@dataclass
class StudentResources:
    """Everything the service needs to personalize for one student."""

    student_id: str
    bundle: TrainingBundle
    pool_template: UnlabeledPool
    eval_items: list
    eval_levels: np.ndarray
    base_model: TrainedModel | None = None

    def model(self) -> TrainedModel:
        if self.base_model is None:
            self.base_model = train_classifier(
                self.bundle.spec, self.bundle.x, self.bundle.y
            )
        return self.base_model


def build_student_resources(
    dataset: LabeledSequenceSet,
    student_id: str,
    spec: ClassifierSpec,
    features: str = "attention",
    eval_fraction: float = 0.5,
    seed: int = 0,
) -> tuple[StudentResources, dict[int, EngagementLevel]]:
    """Person-independent bundle plus the student's pool and eval split.

    The bundle is trained on every other student.  Returns the resources
    and, separately, the ground-truth labels of the pool entries (useful
    for simulated oracles; a live deployment discards them).
    """
    if features == "score_fusion":
        raise DataError("personalization supports single models, not score fusion")
    others = [s for s in dataset.students() if s != student_id]
    if not others:
        raise DataError(f"no other students to train a base model for {student_id!r}")
    sequence_mode = spec.input_mode == "full_sequence"
    x, y = training_arrays(
        dataset.filter(students=others), features, sequence_mode
    )
    pool, oracle, eval_items, eval_levels = split_personal_data(
        dataset, student_id, features=features, eval_fraction=eval_fraction, seed=seed
    )
    resources = StudentResources(
        student_id=student_id,
        bundle=TrainingBundle(spec=spec, x=x, y=y),
        pool_template=pool,
        eval_items=eval_items,
        eval_levels=eval_levels,
    )
    return resources, oracle.truth


@dataclass
class SessionSnapshot:
    """Immutable view of a session, safe to read without locks."""

    token: str
    status: str
    student_id: str
    episode: int
    episodes_total: int
    batch_size: int
    labels_collected: int
    labels_target: int
    pending: list[PoolEntry]
    auroc_curve: list[float]

    def to_json(self) -> dict:
        return {
            "token": self.token,
            "status": self.status,
            "student_id": self.student_id,
            "episode": self.episode,
            "episodes_total": self.episodes_total,
            "batch_size": self.batch_size,
            "labels_collected": self.labels_collected,
            "labels_target": self.labels_target,
            "auroc_curve": [
                {
                    "episode": i,
                    "labels_used": i * self.batch_size,
                    "auroc": value,
                }
                for i, value in enumerate(self.auroc_curve)
            ],
        }


@dataclass
class _LiveSession:
    engine: PersonalizationSession
    pool: UnlabeledPool
    status: str
    pending: list[PoolEntry]
    episodes_total: int
    batch_size: int
    past_batches: list[frozenset[int]] = field(default_factory=list)
    writer_lock: threading.Lock = field(default_factory=threading.Lock)
    trainings: dict[int, int] = field(default_factory=dict)  # episode -> runs


class SessionManager:
    """Session lifecycle over a registry of per-student resources.

    ``state_dir`` enables crash-safe persistence: a JSON document per
    session is rewritten atomically after creation and every completed
    episode, and :meth:`restore_sessions` rebuilds sessions from those
    documents (models retrain deterministically from the recorded labels).
    """

    def __init__(
        self,
        registry: Mapping[str, StudentResources],
        state_dir: str | Path | None = None,
        episodes: int = 6,
        batch_size: int = 10,
    ):
        self.registry = dict(registry)
        self.state_dir = Path(state_dir) if state_dir is not None else None
        if self.state_dir is not None:
            self.state_dir.mkdir(parents=True, exist_ok=True)
        self.default_episodes = episodes
        self.default_batch_size = batch_size
        self._sessions: dict[str, _LiveSession] = {}
        self._state_lock = threading.Lock()
        self.transitions: list[tuple[str, str, str]] = []  # (token, from, to)

    # -- internal helpers ---------------------------------------------------

    def _set_status(self, token: str, live: _LiveSession, new: str) -> None:
        old = live.status
        if old == new:
            return
        if (old, new) not in _LEGAL_TRANSITIONS:
            raise DataError(f"illegal transition {old} -> {new}")
        live.status = new
        self.transitions.append((token, old, new))

    def _get(self, token: str) -> _LiveSession:
        live = self._sessions.get(token)
        if live is None:
            raise ServiceError("not_found", f"no session {token!r}")
        return live

    def _snapshot(self, token: str, live: _LiveSession) -> SessionSnapshot:
        with self._state_lock:
            return SessionSnapshot(
                token=token,
                status=live.status,
                student_id=live.engine.student_id,
                episode=live.engine.episode,
                episodes_total=live.episodes_total,
                batch_size=live.batch_size,
                labels_collected=len(live.engine.collected),
                labels_target=live.episodes_total * live.batch_size,
                pending=list(live.pending),
                auroc_curve=list(live.engine.auroc_curve),
            )

    def _resolve_batch(
        self, engine: PersonalizationSession, pool: UnlabeledPool, batch_size: int
    ) -> list[PoolEntry]:
        return [pool.entry(pid) for pid in propose_batch(engine, pool, batch_size)]

    def _persist(self, token: str, live: _LiveSession) -> None:
        if self.state_dir is None:
            return
        doc = {
            "token": token,
            "student_id": live.engine.student_id,
            "episodes_total": live.episodes_total,
            "batch_size": live.batch_size,
            "episode": live.engine.episode,
            "status": live.status,
            "collected": [
                [pid, int(level)] for pid, _, level in live.engine.collected
            ],
            "auroc_curve": live.engine.auroc_curve,
            "past_batches": [sorted(b) for b in live.past_batches],
        }
        path = self.state_dir / f"{token}.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(doc))
        os.replace(tmp, path)

    # -- public API ---------------------------------------------------------

    def create_session(
        self,
        student_id: str,
        episodes: int | None = None,
        batch_size: int | None = None,
        token: str | None = None,
    ) -> SessionSnapshot:
        episodes = episodes if episodes is not None else self.default_episodes
        batch_size = (
            batch_size if batch_size is not None else self.default_batch_size
        )
        if episodes < 1 or batch_size < 1:
            raise ServiceError(
                "validation", "episodes and batch_size must be positive"
            )
        resources = self.registry.get(student_id)
        if resources is None:
            raise ServiceError("not_found", f"unknown student {student_id!r}")
        pool = resources.pool_template.copy()
        if len(pool) < episodes * batch_size:
            raise ServiceError(
                "exhausted",
                f"pool holds {len(pool)} candidates, the budget needs "
                f"{episodes * batch_size}",
            )
        token = token or uuid.uuid4().hex
        engine = start_personalization(
            token=token,
            student_id=student_id,
            bundle=resources.bundle,
            eval_items=resources.eval_items,
            eval_levels=resources.eval_levels,
            base_model=resources.model(),
        )
        live = _LiveSession(
            engine=engine,
            pool=pool,
            status=STATUS_AWAITING,
            pending=self._resolve_batch(engine, pool, batch_size),
            episodes_total=episodes,
            batch_size=batch_size,
        )
        with self._state_lock:
            if token in self._sessions:
                raise ServiceError("conflict", f"session {token!r} exists")
            self._sessions[token] = live
        self._persist(token, live)
        return self._snapshot(token, live)

    def get_status(self, token: str) -> SessionSnapshot:
        live = self._get(token)
        return self._snapshot(token, live)

    def get_batch(self, token: str) -> SessionSnapshot:
        live = self._get(token)
        if live.status == STATUS_COMPLETE:
            raise ServiceError("conflict", "session is complete")
        if live.status == STATUS_RETRAINING:
            raise ServiceError("conflict", "retraining in progress")
        return self._snapshot(token, live)

    def submit_labels(
        self, token: str, labels: Mapping[int, EngagementLevel | int]
    ) -> SessionSnapshot:
        """Apply one batch of labels; runs the retraining synchronously.

        The per-session writer lock makes training exactly-once per batch:
        a concurrent submit conflicts instead of waiting, a replay of an
        already-applied batch conflicts, and a validation failure leaves
        every bit of session state unchanged.
        """
        live = self._get(token)
        if not live.writer_lock.acquire(blocking=False):
            raise ServiceError("conflict", "another submission is in progress")
        try:
            if live.status == STATUS_COMPLETE:
                raise ServiceError("conflict", "session is complete")
            submitted = frozenset(int(k) for k in labels.keys())
            if submitted in live.past_batches:
                raise ServiceError("conflict", "batch already labeled")
            pending = {e.pool_id for e in live.pending}
            if submitted != pending:
                raise ServiceError(
                    "validation",
                    f"labels must cover exactly the pending batch "
                    f"{sorted(pending)}, got {sorted(submitted)}",
                )
            try:
                checked = {
                    int(k): EngagementLevel(int(v)) for k, v in labels.items()
                }
            except ValueError:
                raise ServiceError("validation", "labels must be 0, 1 or 2")

            episode_index = live.engine.episode
            with self._state_lock:
                self._set_status(token, live, STATUS_RETRAINING)
            try:
                ordered = sorted(checked)
                apply_labels(
                    live.engine,
                    live.pool,
                    ordered,
                    [checked[pid] for pid in ordered],
                )
                live.trainings[episode_index] = (
                    live.trainings.get(episode_index, 0) + 1
                )
            except EngageKitError as exc:
                with self._state_lock:
                    # Abort edge: drop back without consuming the batch.
                    self._set_status(token, live, STATUS_AWAITING)
                if isinstance(exc, (ValueRangeError, DataError)):
                    raise ServiceError("validation", str(exc)) from exc
                if isinstance(exc, ExhaustedPoolError):
                    raise ServiceError("exhausted", str(exc)) from exc
                raise
            live.past_batches.append(frozenset(pending))
            if live.engine.episode >= live.episodes_total:
                next_pending: list[PoolEntry] = []
                next_status = STATUS_COMPLETE
            else:
                next_pending = self._resolve_batch(
                    live.engine, live.pool, live.batch_size
                )
                next_status = STATUS_AWAITING
            with self._state_lock:
                live.pending = next_pending
                self._set_status(token, live, next_status)
            self._persist(token, live)
            return self._snapshot(token, live)
        finally:
            live.writer_lock.release()

    def restore_sessions(self) -> list[str]:
        """Rebuild sessions from the state directory.

        Models are retrained from the recorded labels (training is
        deterministic, so the restored model matches the pre-crash one) and
        the pending batch is re-proposed, which lands on the same ids.
        """
        if self.state_dir is None:
            raise DataError("restore_sessions needs a state_dir")
        restored = []
        for path in sorted(self.state_dir.glob("*.json")):
            doc = json.loads(path.read_text())
            token = doc["token"]
            if token in self._sessions:
                continue
            resources = self.registry.get(doc["student_id"])
            if resources is None:
                raise DataError(
                    f"state file {path} names unknown student "
                    f"{doc['student_id']!r}"
                )
            pool = resources.pool_template.copy()
            engine = start_personalization(
                token=token,
                student_id=doc["student_id"],
                bundle=resources.bundle,
                eval_items=resources.eval_items,
                eval_levels=resources.eval_levels,
                base_model=resources.model(),
            )
            collected = [
                (int(pid), EngagementLevel(int(lv)))
                for pid, lv in doc["collected"]
            ]
            batch_size = int(doc["batch_size"])
            for start in range(0, len(collected), batch_size):
                chunk = collected[start : start + batch_size]
                apply_labels(
                    engine,
                    pool,
                    [pid for pid, _ in chunk],
                    [lv for _, lv in chunk],
                )
            status = doc["status"]
            pending: list[PoolEntry] = []
            if status != STATUS_COMPLETE:
                pending = self._resolve_batch(engine, pool, batch_size)
                status = STATUS_AWAITING
            live = _LiveSession(
                engine=engine,
                pool=pool,
                status=status,
                pending=pending,
                episodes_total=int(doc["episodes_total"]),
                batch_size=batch_size,
                past_batches=[
                    frozenset(int(i) for i in b) for b in doc["past_batches"]
                ],
            )
            with self._state_lock:
                self._sessions[token] = live
            restored.append(token)
        return restored


# ---------------------------------------------------------------------------
# HTTP layer


def create_app(manager: SessionManager):
    """FastAPI application exposing the labeling workflow."""
    from fastapi import FastAPI, Request
    from fastapi.exceptions import RequestValidationError
    from fastapi.responses import JSONResponse
    from pydantic import BaseModel

    class CreateSessionBody(BaseModel):
        student_id: str
        episodes: int | None = None
        batch_size: int | None = None

    class LabelItem(BaseModel):
        pool_id: int
        level: str

    class SubmitLabelsBody(BaseModel):
        labels: list[LabelItem]

    app = FastAPI(title="engagement labeling service")

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.http_status,
            content={"code": exc.code, "message": exc.message},
        )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"code": "validation", "message": str(exc.errors())},
        )

    def batch_json(snapshot: SessionSnapshot) -> dict:
        return {
            "token": snapshot.token,
            "status": snapshot.status,
            "episode": snapshot.episode,
            "batch": [
                {
                    "pool_id": e.pool_id,
                    "clip_ref": e.clip_ref,
                    "second": e.second_index,
                }
                for e in snapshot.pending
            ],
        }

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        snapshot = manager.create_session(
            body.student_id, body.episodes, body.batch_size
        )
        return snapshot.to_json()

    @app.get("/v1/sessions/{token}")
    def get_status(token: str):
        return manager.get_status(token).to_json()

    @app.get("/v1/sessions/{token}/batch")
    def get_batch(token: str):
        return batch_json(manager.get_batch(token))

    @app.post("/v1/sessions/{token}/labels")
    def submit_labels(token: str, body: SubmitLabelsBody):
        seen = set()
        labels: dict[int, EngagementLevel] = {}
        for item in body.labels:
            if item.pool_id in seen:
                raise ServiceError(
                    "validation", f"duplicate pool_id {item.pool_id}"
                )
            seen.add(item.pool_id)
            try:
                labels[item.pool_id] = EngagementLevel.from_label(item.level)
            except EngageKitError:
                raise ServiceError(
                    "validation",
                    f"level must be one of low/medium/high, got {item.level!r}",
                ) from None
        return manager.submit_labels(token, labels).to_json()

    return app
