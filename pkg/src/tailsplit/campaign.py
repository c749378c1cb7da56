"""Live campaign sessions: record real trial outcomes, recommend the next level.

A campaign is the field counterpart of :func:`tailsplit.splitting.run_splitting`:
the operator creates a session from a ladder configuration, tests one batch of
specimens at the recommended stress, reports the binary outcomes, and reads the
next recommendation, until the last stage freezes the quantile estimate.  The
session state is advanced by exactly the same per-stage transition as the
simulation harness, so a recorded campaign and a simulated run with identical
outcomes produce bit-identical ladders.

Persistence is an append-only event log, one line-delimited JSON file per
session plus a rebuildable index.  Replaying a log through a fresh store
reconstructs the session byte-identically (the canonical serialization is
sorted compact JSON); a partial trailing line - the footprint of a crash in
mid-append - is ignored, so recovery always lands on the last durable event.

The stress scales deserve a word: the ladder climbs the *inverted* strength
scale (levels are 1/stress), while operators and abatement tables live on the
original scale in MPa.  Recommendations therefore carry both, and the flaw
diameter is interpolated at the original-scale stress.
"""

from __future__ import annotations

import json
import os
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .estimators import BinaryBatch, confidence_interval_p
from .splitting import Ladder, LadderConfig, ingest_batch, pending_stage

__all__ = [
    "AbatementTable",
    "recommend_flaw",
    "CampaignSession",
    "create_session",
    "record_batch",
    "session_report",
    "CampaignStore",
]


@dataclass(frozen=True)
class AbatementTable:
    """Flaw diameter (mm) versus mean allowable stress (MPa), decreasing.

    Machining a calibrated flaw of diameter theta into a specimen lowers its
    strength so that testing at moderate stress emulates the lower tail of
    the pristine population; this table is the calibration curve.  It is
    treated as given ground truth, with ``provenance`` recorded verbatim.
    """

    points: tuple[tuple[float, float], ...]
    provenance: str = ""

    def __post_init__(self):
        pts = tuple((float(t), float(s)) for t, s in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise ValueError("abatement table needs at least 2 points")
        thetas = [t for t, _ in pts]
        stresses = [s for _, s in pts]
        if any(b <= a for a, b in zip(thetas, thetas[1:])):
            raise ValueError("flaw diameters must be strictly increasing")
        if any(b >= a for a, b in zip(stresses, stresses[1:])):
            raise ValueError("stress must be strictly decreasing in diameter")

    @property
    def stress_range(self) -> tuple[float, float]:
        return self.points[-1][1], self.points[0][1]

    def to_list(self) -> list[list[float]]:
        return [[t, s] for t, s in self.points]

    @classmethod
    def from_list(cls, rows, provenance: str = "") -> "AbatementTable":
        return cls(points=tuple((r[0], r[1]) for r in rows),
                   provenance=provenance)


def recommend_flaw(table: AbatementTable, target_stress: float) -> float:
    """Flaw diameter whose mean allowable stress equals ``target_stress``.

    Piecewise-linear inverse interpolation of the abatement curve; the target
    must lie inside the table's stress range.
    """
    lo, hi = table.stress_range
    if not lo <= target_stress <= hi:
        raise ValueError(
            f"target stress {target_stress} outside table range [{lo}, {hi}]")
    stresses = [s for _, s in reversed(table.points)]
    thetas = [t for t, _ in reversed(table.points)]
    return float(np.interp(target_stress, stresses, thetas))


@dataclass
class CampaignSession:
    """One live campaign: configuration, recorded batches, event log."""

    id: str
    created: str
    model: str
    estimator: str
    estimator_options: dict
    config: LadderConfig
    abatement: AbatementTable | None
    ladder: Ladder
    events: list = field(default_factory=list)
    error: str | None = None

    @property
    def status(self) -> str:
        if self.error is not None:
            return "aborted"
        if len(self.ladder.stages) >= self.config.stages:
            return "complete"
        return "awaiting-batch"

    def recommendation(self) -> dict | None:
        """Next level to test, on both scales, with the flaw diameter if known."""
        if self.status != "awaiting-batch":
            return None
        stage, _, level = pending_stage(self.ladder)
        stress = 1.0 / level
        flaw = None
        if self.abatement is not None:
            lo, hi = self.abatement.stress_range
            if lo <= stress <= hi:
                flaw = recommend_flaw(self.abatement, stress)
        return {"stage": stage, "level": level, "stress": stress,
                "flaw_diameter": flaw}

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "created": self.created,
            "status": self.status,
            "model": self.model,
            "estimator": self.estimator,
            "estimator_options": self.estimator_options,
            "config": {"alpha": self.config.alpha, "p": self.config.p,
                       "s1": self.config.s1, "k": self.config.k,
                       "m": self.config.m, "gamma": self.config.gamma,
                       "budget": self.config.budget},
            "stages_planned": self.config.stages,
            "abatement": (None if self.abatement is None
                          else {"points": self.abatement.to_list(),
                                "provenance": self.abatement.provenance}),
            "ladder": self.ladder.to_dict(),
            "recommendation": self.recommendation(),
            "error": self.error,
        }

    def to_json(self) -> str:
        """Canonical serialization: sorted keys, compact separators."""
        return json.dumps(self.to_dict(), sort_keys=True,
                          separators=(",", ":"))

    def summary(self) -> dict:
        return {"id": self.id, "created": self.created, "status": self.status,
                "model": self.model, "stages": len(self.ladder.stages),
                "stages_planned": self.config.stages}


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def create_session(config: LadderConfig, model: str = "gpd",
                   abatement: AbatementTable | None = None,
                   estimator: str = "enhanced",
                   estimator_options: dict | None = None,
                   session_id: str | None = None,
                   created: str | None = None) -> CampaignSession:
    """Fresh session awaiting its first batch at level s1."""
    if model not in ("gpd", "weibull"):
        raise ValueError(f"unknown model {model!r}")
    ladder = Ladder(model=model, estimator=estimator, config=config,
                    levels=[config.s1])
    session = CampaignSession(
        id=session_id or uuid.uuid4().hex,
        created=created or _utcnow(),
        model=model, estimator=estimator,
        estimator_options=dict(estimator_options or {}),
        config=config, abatement=abatement, ladder=ladder)
    session.events.append(_created_event(session))
    return session


def _created_event(session: CampaignSession) -> dict:
    return {
        "type": "created",
        "id": session.id,
        "created": session.created,
        "model": session.model,
        "estimator": session.estimator,
        "estimator_options": session.estimator_options,
        "config": {"alpha": session.config.alpha, "p": session.config.p,
                   "s1": session.config.s1, "k": session.config.k,
                   "m": session.config.m, "gamma": session.config.gamma,
                   "budget": session.config.budget},
        "abatement": (None if session.abatement is None
                      else {"points": session.abatement.to_list(),
                            "provenance": session.abatement.provenance}),
    }


def _check_recordable(session: CampaignSession, outcomes) -> list[int]:
    if session.status == "aborted":
        raise ValueError(f"session {session.id} is aborted: {session.error}")
    if session.status == "complete":
        raise ValueError(f"session {session.id} is already complete")
    outcomes = [int(o) for o in outcomes]
    if len(outcomes) != session.config.k or any(o not in (0, 1)
                                                for o in outcomes):
        raise ValueError(
            f"need exactly {session.config.k} outcomes in {{0, 1}}")
    return outcomes


def _apply_batch(session: CampaignSession, outcomes) -> CampaignSession:
    """Advance the ladder by one recorded batch; abort on estimator failure.

    The caller has already validated the batch and made the event durable;
    any exception past this point is a deterministic property of the recorded
    data, so replay reproduces the aborted state exactly.
    """
    try:
        ingest_batch(session.ladder, outcomes, estimator=session.estimator,
                     estimator_options=session.estimator_options)
    except (ArithmeticError, ValueError, FloatingPointError) as exc:
        session.error = f"{type(exc).__name__}: {exc}"
    return session


def record_batch(session: CampaignSession, outcomes) -> CampaignSession:
    """Record one batch of 0/1 outcomes into an in-memory session.

    Invalid batches (wrong count, session not awaiting one) raise without
    changing any state.  A degenerate batch is recorded and flagged, with the
    previous stage's fit reused, mirroring the simulation policy.  An
    estimator failure marks the session aborted; the outcomes stay recorded
    because the specimens were really tested.
    """
    outcomes = _check_recordable(session, outcomes)
    session.events.append({"type": "batch", "outcomes": outcomes})
    return _apply_batch(session, outcomes)


def session_report(session: CampaignSession) -> dict:
    """Full audit document: stages, fits, diagnostics, estimate, events."""
    gamma = session.config.gamma
    stage_rows = []
    for rec in session.ladder.stages:
        batch = BinaryBatch(rec.s_prev, rec.s_curr, rec.k, rec.failures)
        ci = confidence_interval_p(batch, gamma=gamma)
        stage_rows.append({
            "stage": rec.stage,
            "level": rec.s_curr,
            "stress": 1.0 / rec.s_curr,
            "k": rec.k,
            "failures": rec.failures,
            "phat": rec.phat,
            "phat_interval": [ci[0], ci[1]],
            "params": dict(rec.params),
            "criterion": rec.criterion,
            "diagnostics": dict(rec.diagnostics),
        })
    complete = session.status == "complete"
    return {
        "session": session.to_dict(),
        "stages": stage_rows,
        "flags": list(session.ladder.flags),
        "estimate": session.ladder.estimate if complete else None,
        "estimate_stress": (1.0 / session.ladder.estimate
                            if complete and session.ladder.estimate > 0
                            else None),
        "attained_alpha": session.ladder.attained_alpha if complete else None,
        "events": list(session.events),
    }


# ---------------------------------------------------------------------------
# Persistence: one append-only JSONL event log per session, plus an index


class CampaignStore:
    """Directory-backed session store with event-sourced persistence.

    Mutations append exactly one JSON line to ``<data_dir>/<id>.jsonl`` and
    fsync it before the in-memory state advances; the index file is a
    derived convenience and is rebuilt from the logs on every load, so a
    stale index can never corrupt a session.
    """

    def __init__(self, data_dir: str):
        self.data_dir = data_dir
        os.makedirs(data_dir, exist_ok=True)
        self._sessions: dict[str, CampaignSession] = {}
        for fname in sorted(os.listdir(data_dir)):
            if fname.endswith(".jsonl"):
                session = self._replay_file(os.path.join(data_dir, fname))
                if session is not None:
                    self._sessions[session.id] = session
        self._write_index()

    # -- log plumbing -------------------------------------------------------

    def _log_path(self, session_id: str) -> str:
        return os.path.join(self.data_dir, f"{session_id}.jsonl")

    def _append_event(self, session_id: str, event: dict) -> None:
        line = json.dumps(event, sort_keys=True, separators=(",", ":"))
        with open(self._log_path(session_id), "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    @staticmethod
    def read_events(path: str) -> list[dict]:
        """Events of one log file; a torn trailing line is discarded."""
        events = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError:
                    # mid-append crash: everything before this line is durable
                    break
        return events

    @classmethod
    def replay_events(cls, events: list[dict]) -> CampaignSession:
        """Reconstruct a session by re-applying its event log."""
        if not events or events[0].get("type") != "created":
            raise ValueError("event log must start with a 'created' event")
        head = events[0]
        abatement = None
        if head.get("abatement") is not None:
            abatement = AbatementTable.from_list(
                head["abatement"]["points"],
                provenance=head["abatement"].get("provenance", ""))
        session = create_session(
            LadderConfig(**head["config"]), model=head["model"],
            abatement=abatement, estimator=head["estimator"],
            estimator_options=head["estimator_options"],
            session_id=head["id"], created=head["created"])
        for event in events[1:]:
            if event.get("type") != "batch":
                raise ValueError(f"unknown event type {event.get('type')!r}")
            outcomes = _check_recordable(session, event["outcomes"])
            session.events.append({"type": "batch", "outcomes": outcomes})
            _apply_batch(session, outcomes)
        return session

    def _replay_file(self, path: str) -> CampaignSession | None:
        events = self.read_events(path)
        if not events:
            return None
        return self.replay_events(events)

    def _write_index(self) -> None:
        index = {sid: s.summary() for sid, s in self._sessions.items()}
        tmp = os.path.join(self.data_dir, "index.json.tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(index, fh, sort_keys=True, indent=2)
        os.replace(tmp, os.path.join(self.data_dir, "index.json"))

    # -- public API ---------------------------------------------------------

    def create_session(self, config: LadderConfig, model: str = "gpd",
                       abatement: AbatementTable | None = None,
                       estimator: str = "enhanced",
                       estimator_options: dict | None = None) -> CampaignSession:
        session = create_session(config, model=model, abatement=abatement,
                                 estimator=estimator,
                                 estimator_options=estimator_options)
        self._append_event(session.id, session.events[0])
        self._sessions[session.id] = session
        self._write_index()
        return session

    def get(self, session_id: str) -> CampaignSession:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise KeyError(f"no session {session_id!r}") from None

    def list_sessions(self) -> list[dict]:
        return [s.summary() for _, s in sorted(self._sessions.items(),
                                               key=lambda kv: kv[1].created)]

    def record_batch(self, session_id: str, outcomes) -> CampaignSession:
        """Validate, persist, then apply one batch to a stored session."""
        session = self.get(session_id)
        outcomes = _check_recordable(session, outcomes)
        # durable first: if we die between the append and the apply, replay
        # redoes the (deterministic) fit from the log
        self._append_event(session_id, {"type": "batch", "outcomes": outcomes})
        session.events.append({"type": "batch", "outcomes": outcomes})
        _apply_batch(session, outcomes)
        self._write_index()
        return session

    def report(self, session_id: str) -> dict:
        return session_report(self.get(session_id))
