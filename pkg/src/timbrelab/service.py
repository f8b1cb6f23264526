"""HTTP service hosting the listening experiment.

Serves the stimulus bank, creates sessions with randomized trial
schedules, gates participation behind a headphone screening task
(three 200 Hz intervals per trial, one attenuated 6 dB, one presented
in stereo antiphase), records ratings durably, and exports the dataset
as JSONL.

Persistence is a single append-only JSONL event log: every mutation is
flushed and fsynced before the request is acknowledged, and startup
replays the log to rebuild all session state. A torn trailing line
(crash mid-write) is ignored on replay; it can only belong to a write
that was never acknowledged.
"""

from __future__ import annotations

import json
import math
import os
import random
import secrets
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from . import bank as bank_mod
from .ratings import is_on_grid, pair_schedule
from .synth import SAMPLE_RATE, render_patch
from .wavio import wav_bytes

EXPORT_TOKEN_ENV = "TIMBRELAB_EXPORT_TOKEN"
SCREENING_TRIALS = 6
SCREENING_PASS_MIN = 5
SCREENING_TONE_HZ = 200.0
SCREENING_ATTENUATION_DB = -6.0
SCREENING_INTERVAL_S = 0.6
SCREENING_GAP_S = 0.15


@dataclass
class ScreeningTrialSpec:
    attenuated: int  # interval index carrying the -6 dB tone (the answer)
    antiphase: int   # non-attenuated interval rendered in stereo antiphase


@dataclass
class SessionState:
    session_id: str
    age: int | None
    hearing_issues: bool
    schedule: list[tuple[str, str]]
    screening: list[ScreeningTrialSpec]
    created_at: str
    screening_status: str = "pending"   # pending | passed | failed
    screening_correct: int | None = None
    next_trial_index: int = 0
    ratings: dict[int, dict] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def excluded_flag(self) -> str | None:
        if self.hearing_issues:
            return "hearing_issues"
        if self.screening_status == "failed":
            return "screening_failed"
        return None


def make_screening_trials(rng: random.Random) -> list[ScreeningTrialSpec]:
    trials = []
    for _ in range(SCREENING_TRIALS):
        attenuated = rng.randrange(3)
        antiphase = rng.choice([k for k in range(3) if k != attenuated])
        trials.append(ScreeningTrialSpec(attenuated, antiphase))
    return trials


def render_screening_wav(spec: ScreeningTrialSpec, sample_rate: int = SAMPLE_RATE) -> bytes:
    """Stereo WAV with three 200 Hz intervals; pure function of the spec."""
    n_tone = round(SCREENING_INTERVAL_S * sample_rate)
    n_gap = round(SCREENING_GAP_S * sample_rate)
    t = np.arange(n_tone) / sample_rate
    tone = 0.5 * np.sin(2 * math.pi * SCREENING_TONE_HZ * t)
    ramp = round(0.01 * sample_rate)
    fade = 0.5 * (1 - np.cos(np.linspace(0, math.pi, ramp)))
    tone[:ramp] *= fade
    tone[-ramp:] *= fade[::-1]
    gap = np.zeros((n_gap, 2))
    chunks = []
    for k in range(3):
        interval = tone.copy()
        if k == spec.attenuated:
            interval = interval * 10.0 ** (SCREENING_ATTENUATION_DB / 20.0)
        right = -interval if k == spec.antiphase else interval
        chunks.append(np.column_stack([interval, right]))
        if k < 2:
            chunks.append(gap)
    return wav_bytes(np.vstack(chunks), sample_rate)


class EventLog:
    """Append-only JSONL log; appends are serialized and fsynced."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, event: dict) -> None:
        line = json.dumps(event, sort_keys=True) + "\n"
        with self._lock:
            self._fh.write(line)
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def replay(self) -> list[dict]:
        if not self.path.exists():
            return []
        events = []
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.endswith("\n"):
                    break  # torn trailing write from a crash; never acked
                line = line.strip()
                if not line:
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError:
                    break
        return events


class ExperimentStore:
    """All session state, rebuilt from the event log on startup."""

    def __init__(self, log: EventLog, stimulus_ids: list[str]):
        self.log = log
        self.stimulus_ids = stimulus_ids
        self.sessions: dict[str, SessionState] = {}
        self._lock = threading.Lock()
        for event in log.replay():
            self._apply(event)

    def _apply(self, event: dict) -> None:
        kind = event.get("event")
        if kind == "session_created":
            state = SessionState(
                session_id=event["session_id"],
                age=event.get("age"),
                hearing_issues=bool(event.get("hearing_issues")),
                schedule=[tuple(pair) for pair in event["schedule"]],
                screening=[ScreeningTrialSpec(s["attenuated"], s["antiphase"])
                           for s in event["screening"]],
                created_at=event["created_at"],
            )
            self.sessions[state.session_id] = state
        elif kind == "screening_submitted":
            state = self.sessions[event["session_id"]]
            state.screening_status = event["result"]
            state.screening_correct = event.get("correct")
        elif kind == "rating_submitted":
            state = self.sessions[event["session_id"]]
            state.ratings[event["trial_index"]] = event
            state.next_trial_index = max(state.next_trial_index, event["trial_index"] + 1)

    def create_session(self, age: int | None, hearing_issues: bool) -> SessionState:
        session_id = secrets.token_urlsafe(16)
        rng = random.Random(secrets.randbits(64))
        schedule_idx = pair_schedule(len(self.stimulus_ids), rng.randrange(2 ** 31))
        schedule = [(self.stimulus_ids[a], self.stimulus_ids[b]) for a, b in schedule_idx]
        event = {
            "event": "session_created",
            "session_id": session_id,
            "age": age,
            "hearing_issues": hearing_issues,
            "schedule": schedule,
            "screening": [{"attenuated": t.attenuated, "antiphase": t.antiphase}
                          for t in make_screening_trials(rng)],
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
        self.log.append(event)
        with self._lock:
            self._apply(event)
        return self.sessions[session_id]

    def get(self, session_id: str) -> SessionState:
        state = self.sessions.get(session_id)
        if state is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return state

    def export_records(self) -> list[dict]:
        records = []
        for state in sorted(self.sessions.values(), key=lambda s: (s.created_at, s.session_id)):
            for trial_index in sorted(state.ratings):
                event = state.ratings[trial_index]
                records.append({
                    "participant_id": state.session_id,
                    "session_id": state.session_id,
                    "trial_index": trial_index,
                    "stim_a": event["stim_a"],
                    "stim_b": event["stim_b"],
                    "rating": event["rating"],
                    "replay_count_a": event.get("replay_count_a", 1),
                    "replay_count_b": event.get("replay_count_b", 1),
                    "submitted_at": event.get("submitted_at", ""),
                    "excluded_flag": state.excluded_flag,
                })
        return records


class CreateSessionBody(BaseModel):
    age: int | None = None
    hearing_issues: bool = False


class ScreeningBody(BaseModel):
    answers: list[int]


class RatingBody(BaseModel):
    trial_index: int
    rating: float
    replay_count_a: int = 1
    replay_count_b: int = 1


def create_app(bank_path: str | Path | None, log_path: str | Path,
               static_dir: str | Path | None = None) -> FastAPI:
    patches = bank_mod.load_bank(bank_path) if bank_path else bank_mod.default_bank()
    stimulus_wavs = {p.id: wav_bytes(render_patch(p).samples, SAMPLE_RATE) for p in patches}
    store = ExperimentStore(EventLog(log_path), [p.id for p in patches])
    app = FastAPI(title="timbrelab experiment service")
    app.state.store = store

    def session_payload(state: SessionState) -> dict:
        return {
            "session_id": state.session_id,
            "screening_status": state.screening_status,
            "screening_trials": len(state.screening),
            "next_trial_index": state.next_trial_index,
            "trial_count": len(state.schedule),
            "schedule": [list(pair) for pair in state.schedule],
            "stimuli": store.stimulus_ids,
        }

    @app.post("/api/sessions", status_code=201)
    def create_session(body: CreateSessionBody) -> dict:
        if not stimulus_wavs:
            raise HTTPException(status_code=503, detail="stimulus bank not loaded")
        state = store.create_session(body.age, body.hearing_issues)
        return session_payload(state)

    @app.get("/api/sessions/{session_id}")
    def session_progress(session_id: str) -> dict:
        return session_payload(store.get(session_id))

    @app.post("/api/sessions/{session_id}/screening")
    def submit_screening(session_id: str, body: ScreeningBody) -> dict:
        state = store.get(session_id)
        with state.lock:
            if state.screening_status != "pending":
                raise HTTPException(status_code=409, detail="screening already resolved")
            if len(body.answers) != len(state.screening):
                raise HTTPException(status_code=400,
                                    detail=f"expected {len(state.screening)} answers")
            correct = sum(1 for answer, trial in zip(body.answers, state.screening)
                          if answer == trial.attenuated)
            result = "passed" if correct >= SCREENING_PASS_MIN else "failed"
            store.log.append({"event": "screening_submitted", "session_id": session_id,
                              "result": result, "correct": correct})
            state.screening_status = result
            state.screening_correct = correct
        return {"result": result, "correct": correct}

    @app.post("/api/sessions/{session_id}/ratings")
    def submit_rating(session_id: str, body: RatingBody) -> dict:
        state = store.get(session_id)
        with state.lock:
            if state.screening_status != "passed":
                raise HTTPException(status_code=409, detail="screening not passed")
            if body.trial_index in state.ratings:
                # idempotent repeat: first write wins
                return {"trial_index": body.trial_index,
                        "next_trial_index": state.next_trial_index, "duplicate": True}
            if body.trial_index != state.next_trial_index:
                raise HTTPException(status_code=409, detail=(
                    f"expected trial {state.next_trial_index}, got {body.trial_index}"))
            if state.next_trial_index >= len(state.schedule):
                raise HTTPException(status_code=409, detail="session already complete")
            if not is_on_grid(body.rating):
                raise HTTPException(status_code=400,
                                    detail="rating must lie in [0, 9] in steps of 0.5")
            stim_a, stim_b = state.schedule[body.trial_index]
            event = {
                "event": "rating_submitted",
                "session_id": session_id,
                "trial_index": body.trial_index,
                "stim_a": stim_a,
                "stim_b": stim_b,
                "rating": body.rating,
                "replay_count_a": body.replay_count_a,
                "replay_count_b": body.replay_count_b,
                "submitted_at": datetime.now(timezone.utc).isoformat(),
            }
            store.log.append(event)  # durable before the ack
            state.ratings[body.trial_index] = event
            state.next_trial_index = body.trial_index + 1
            return {"trial_index": body.trial_index,
                    "next_trial_index": state.next_trial_index, "duplicate": False}

    @app.get("/api/stimuli/{stimulus_id}.wav")
    def stimulus_wav(stimulus_id: str) -> Response:
        data = stimulus_wavs.get(stimulus_id)
        if data is None:
            raise HTTPException(status_code=404, detail="unknown stimulus")
        return Response(content=data, media_type="audio/wav",
                        headers={"Cache-Control": "public, max-age=86400"})

    @app.get("/api/screening/{session_id}/{trial}.wav")
    def screening_wav(session_id: str, trial: int) -> Response:
        state = store.get(session_id)
        if not 0 <= trial < len(state.screening):
            raise HTTPException(status_code=404, detail="unknown screening trial")
        return Response(content=render_screening_wav(state.screening[trial]),
                        media_type="audio/wav",
                        headers={"Cache-Control": "private, max-age=86400"})

    @app.get("/api/export")
    def export(request: Request) -> PlainTextResponse:
        token = os.environ.get(EXPORT_TOKEN_ENV)
        if token:
            supplied = request.headers.get("authorization", "")
            if supplied != f"Bearer {token}":
                raise HTTPException(status_code=403, detail="export token required")
        lines = [json.dumps(r, sort_keys=True) for r in store.export_records()]
        body = "\n".join(lines) + ("\n" if lines else "")
        return PlainTextResponse(body, media_type="application/jsonl")

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
