"""HTTP session service for live experiments.

Endpoints:
    POST /sessions                      create a session (ring or validation condition)
    GET  /sessions/{id}/next            pending trial descriptor (idempotent)
    POST /sessions/{id}/responses       submit one response, exactly once per index
    GET  /sessions/{id}/export?format=  csv or json trial log
    GET  /stimuli/{name}.png            rendered stimulus images

Persistence is an append-only JSON-lines trial log per session plus a small
manifest; the staircase's likelihood state is never serialized, it is
reconstructed by replaying the log on load. Requests to one session are
serialized behind a per-session lock; stimulus images are rendered lazily and
cached by content hash, so repeated GET /next calls return the same
descriptor without re-rendering.

Configuration comes from a JSON file (display model, staircase defaults, data
directory); STEREOBLUR_PORT and STEREOBLUR_DATA_DIR environment variables
override the file.
"""

from __future__ import annotations

import hashlib
import json
import os
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import staircase
from .display import DisplayModel
from .staircase import PestState, TrialRecord
from .stimulus import (
    CONDITION_SIGMAS,
    condition_grid,
    make_ring_spec,
    make_validation_scene,
    render_stimulus,
    save_stimulus,
    to_uint8,
)
from .validation import SIDES, STYLES, ValidationCondition

PRESENTATION_MS = 1500

ENV_PORT = "STEREOBLUR_PORT"
ENV_DATA_DIR = "STEREOBLUR_DATA_DIR"


class SessionNotFound(KeyError):
    pass


class SessionConflict(RuntimeError):
    pass


@dataclass
class ServiceConfig:
    data_dir: Path
    display: DisplayModel = field(default_factory=DisplayModel)
    pest_defaults: dict = field(default_factory=dict)
    host: str = "127.0.0.1"
    port: int = 8750

    @classmethod
    def load(cls, path=None) -> "ServiceConfig":
        raw = {}
        if path is not None:
            with open(path) as f:
                raw = json.load(f)
        data_dir = os.environ.get(ENV_DATA_DIR, raw.get("data_dir", "./stereoblur-data"))
        display = (
            DisplayModel.from_json_dict(raw["display"]) if "display" in raw else DisplayModel()
        )
        port = int(os.environ.get(ENV_PORT, raw.get("port", 8750)))
        return cls(
            data_dir=Path(data_dir),
            display=display,
            pest_defaults=raw.get("pest", {}),
            host=raw.get("host", "127.0.0.1"),
            port=port,
        )


def _condition_from_json(d: dict):
    if "scene" in d or "style" in d:
        return ValidationCondition(scene=str(d["scene"]), style=str(d["style"]))
    return (float(d["theta"]), float(d["sigma"]))


def _condition_to_json(cond) -> dict:
    if isinstance(cond, ValidationCondition):
        return {"scene": cond.scene, "style": cond.style}
    return {"theta": cond[0], "sigma": cond[1]}


@dataclass
class Session:
    id: str
    condition: object
    pest_config: dict
    participant: str
    seed: int
    created: float
    updated: float
    status: str = "active"
    state: PestState = None
    trials: list = field(default_factory=list)

    @property
    def is_validation(self) -> bool:
        return isinstance(self.condition, ValidationCondition)

    @property
    def response_options(self) -> tuple[str, ...]:
        return SIDES if self.is_validation else staircase.HIGHLIGHT_CHOICES


class SessionStore:
    """Disk-backed session registry; one directory per session."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.sessions_dir = config.data_dir / "sessions"
        self.stimuli_dir = config.data_dir / "stimuli"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.stimuli_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        for manifest in self.sessions_dir.glob("*/manifest.json"):
            s = self._load_session(manifest.parent)
            self._sessions[s.id] = s

    def _lock_for(self, sid: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(sid, threading.Lock())

    def _session_dir(self, sid: str) -> Path:
        return self.sessions_dir / sid

    def _write_manifest(self, s: Session) -> None:
        manifest = {
            "id": s.id,
            "condition": _condition_to_json(s.condition),
            "pest": s.pest_config,
            "participant": s.participant,
            "seed": s.seed,
            "status": s.status,
            "created": s.created,
            "updated": s.updated,
        }
        path = self._session_dir(s.id) / "manifest.json"
        tmp = path.with_suffix(".json.tmp")
        with open(tmp, "w") as f:
            json.dump(manifest, f, indent=2)
            f.write("\n")
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)

    def _append_trial(self, s: Session, t: TrialRecord) -> None:
        line = json.dumps(
            {
                "index": t.index,
                "disparity": t.disparity,
                "highlight_target": t.highlight_target,
                "phase_index": t.phase_index,
                "response": t.response,
                "correct": t.correct,
                "timestamp": t.timestamp,
            }
        )
        with open(self._session_dir(s.id) / "trials.jsonl", "a") as f:
            f.write(line + "\n")
            f.flush()
            os.fsync(f.fileno())

    def _load_session(self, directory: Path) -> Session:
        with open(directory / "manifest.json") as f:
            m = json.load(f)
        s = Session(
            id=m["id"],
            condition=_condition_from_json(m["condition"]),
            pest_config=m.get("pest", {}),
            participant=m.get("participant", ""),
            seed=int(m["seed"]),
            created=m["created"],
            updated=m["updated"],
            status=m["status"],
        )
        s.state = staircase.pest_init(**s.pest_config)
        log = directory / "trials.jsonl"
        if log.exists():
            with open(log) as f:
                for line in f:
                    if not line.strip():
                        continue
                    r = json.loads(line)
                    t = TrialRecord(
                        index=int(r["index"]),
                        disparity=float(r["disparity"]),
                        highlight_target=r["highlight_target"],
                        phase_index=int(r["phase_index"]),
                        response=r["response"],
                        correct=bool(r["correct"]),
                        timestamp=float(r["timestamp"]),
                    )
                    s.trials.append(t)
                    s.state = staircase.pest_update(s.state, t.disparity, t.correct)
        s.status = "complete" if staircase.pest_is_done(s.state) else s.status
        return s

    def create(self, condition_json: dict, pest_config: dict | None, participant: str,
               seed: int | None = None) -> Session:
        condition = _condition_from_json(condition_json)
        if not isinstance(condition, ValidationCondition):
            if condition not in condition_grid():
                raise ValueError(
                    f"condition {condition} not in the tested grid "
                    f"{sorted(CONDITION_SIGMAS)} x per-row sigmas"
                )
        pest_config = {**self.config.pest_defaults, **(pest_config or {})}
        staircase.pest_init(**pest_config)  # validate early
        sid = secrets.token_hex(8)
        now = time.time()
        s = Session(
            id=sid,
            condition=condition,
            pest_config=pest_config,
            participant=participant,
            seed=int(seed) if seed is not None else secrets.randbits(31),
            created=now,
            updated=now,
        )
        s.state = staircase.pest_init(**pest_config)
        self._session_dir(sid).mkdir(parents=True, exist_ok=True)
        self._write_manifest(s)
        with self._registry_lock:
            self._sessions[sid] = s
        return s

    def get(self, sid: str) -> Session:
        try:
            return self._sessions[sid]
        except KeyError:
            raise SessionNotFound(sid) from None

    def _render_trial_stimulus(self, s: Session, index: int, intensity: float,
                               phase_index: int, target: str) -> dict:
        key = hashlib.sha256(
            f"{s.id}:{index}:{intensity!r}:{phase_index}:{target}".encode()
        ).hexdigest()[:20]
        left_name, right_name = f"{key}_L.png", f"{key}_R.png"
        left_path = self.stimuli_dir / left_name
        right_path = self.stimuli_dir / right_name
        if not (left_path.exists() and right_path.exists()):
            from PIL import Image

            if s.is_validation:
                stim = make_validation_scene(
                    ipd_mm=min(intensity, 20.0),
                    side_with_disparity=target,
                    scene_seed=s.seed * 1000 + index,
                    display=self.config.display,
                )
            else:
                theta, sigma = s.condition
                spec = make_ring_spec(
                    theta, sigma, phase_index=phase_index,
                    highlight_target=target, seed=s.seed,
                )
                stim = render_stimulus(spec, intensity, self.config.display)
            Image.fromarray(to_uint8(stim.left), mode="L").save(left_path)
            Image.fromarray(to_uint8(stim.right), mode="L").save(right_path)
        return {"left": f"/stimuli/{left_name}", "right": f"/stimuli/{right_name}"}

    def next_trial(self, sid: str, render: bool = True) -> dict:
        s = self.get(sid)
        with self._lock_for(sid):
            if staircase.pest_is_done(s.state):
                raise SessionConflict("session already complete")
            index = s.state.trial_count
            intensity = staircase.pest_next_intensity(s.state)
            phase_index, target = staircase.trial_randomization(
                s.seed, index, choices=s.response_options
            )
            descriptor = {
                "session_id": sid,
                "trial_index": index,
                "intensity": intensity,
                "presentation_ms": PRESENTATION_MS,
                "response_options": list(s.response_options),
                "trial_count": s.state.trial_count,
                "max_trials": s.state.max_trials,
            }
            if render:
                urls = self._render_trial_stimulus(s, index, intensity, phase_index, target)
                descriptor["stimulus"] = urls
            return descriptor

    def submit_response(self, sid: str, trial_index: int, response: str) -> dict:
        s = self.get(sid)
        with self._lock_for(sid):
            if staircase.pest_is_done(s.state):
                raise SessionConflict("session already complete")
            pending = s.state.trial_count
            if trial_index != pending:
                raise SessionConflict(
                    f"trial index {trial_index} is not the pending trial {pending}"
                )
            if response not in s.response_options:
                raise ValueError(f"response must be one of {s.response_options}")
            intensity = staircase.pest_next_intensity(s.state)
            phase_index, target = staircase.trial_randomization(
                s.seed, trial_index, choices=s.response_options
            )
            correct = response == target
            t = TrialRecord(
                index=trial_index,
                disparity=intensity,
                highlight_target=target,
                phase_index=phase_index,
                response=response,
                correct=correct,
                timestamp=time.time(),
            )
            self._append_trial(s, t)
            s.trials.append(t)
            s.state = staircase.pest_update(s.state, intensity, correct)
            done = staircase.pest_is_done(s.state)
            if done and s.status != "complete":
                s.status = "complete"
            s.updated = time.time()
            self._write_manifest(s)
            return {
                "correct": correct,
                "done": done,
                "trial_count": s.state.trial_count,
                "max_trials": s.state.max_trials,
            }

    def export_csv(self, sid: str) -> str:
        import io

        s = self.get(sid)
        buf = io.StringIO()
        staircase.write_trials_csv(buf, s.trials)
        return buf.getvalue()

    def export_json(self, sid: str) -> dict:
        s = self.get(sid)
        return {
            "id": s.id,
            "condition": _condition_to_json(s.condition),
            "pest": s.pest_config,
            "participant": s.participant,
            "seed": s.seed,
            "status": s.status,
            "trials": [
                {
                    "index": t.index,
                    "disparity": t.disparity,
                    "highlight_target": t.highlight_target,
                    "phase_index": t.phase_index,
                    "response": t.response,
                    "correct": t.correct,
                    "timestamp": t.timestamp,
                }
                for t in s.trials
            ],
        }


try:  # pydantic only needed when the HTTP app is instantiated
    from pydantic import BaseModel as _BaseModel
except ImportError:  # pragma: no cover
    _BaseModel = object


class CreateSessionBody(_BaseModel):
    condition: dict
    pest: dict | None = None
    participant: str = ""
    seed: int | None = None


class ResponseBody(_BaseModel):
    trial_index: int
    response: str


def create_app(config: ServiceConfig | None = None, render_stimuli: bool = True):
    """Build the FastAPI application around a session store."""
    from fastapi import FastAPI, HTTPException, Query
    from fastapi.responses import FileResponse, PlainTextResponse

    config = config or ServiceConfig.load()
    store = SessionStore(config)
    app = FastAPI(title="stereoblur session service")
    app.state.store = store

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        try:
            s = store.create(body.condition, body.pest, body.participant, body.seed)
        except (ValueError, KeyError) as e:
            raise HTTPException(status_code=400, detail=str(e))
        return {"id": s.id, "status": s.status, "seed": s.seed,
                "max_trials": s.state.max_trials}

    @app.get("/sessions/{sid}")
    def session_info(sid: str):
        try:
            s = store.get(sid)
        except SessionNotFound:
            raise HTTPException(status_code=404, detail="unknown session")
        return {
            "id": s.id,
            "status": s.status,
            "condition": _condition_to_json(s.condition),
            "participant": s.participant,
            "trial_count": s.state.trial_count,
            "max_trials": s.state.max_trials,
        }

    @app.get("/sessions/{sid}/next")
    def next_trial(sid: str):
        try:
            return store.next_trial(sid, render=render_stimuli)
        except SessionNotFound:
            raise HTTPException(status_code=404, detail="unknown session")
        except SessionConflict as e:
            raise HTTPException(status_code=409, detail=str(e))

    @app.post("/sessions/{sid}/responses")
    def submit_response(sid: str, body: ResponseBody):
        try:
            return store.submit_response(sid, body.trial_index, body.response)
        except SessionNotFound:
            raise HTTPException(status_code=404, detail="unknown session")
        except SessionConflict as e:
            raise HTTPException(status_code=409, detail=str(e))
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e))

    @app.get("/sessions/{sid}/export")
    def export_session(sid: str, format: str = Query("csv", pattern="^(csv|json)$")):
        try:
            if format == "csv":
                return PlainTextResponse(store.export_csv(sid), media_type="text/csv")
            return store.export_json(sid)
        except SessionNotFound:
            raise HTTPException(status_code=404, detail="unknown session")

    @app.get("/stimuli/{name}")
    def get_stimulus(name: str):
        path = store.stimuli_dir / name
        if not path.is_file() or path.parent != store.stimuli_dir:
            raise HTTPException(status_code=404, detail="unknown stimulus")
        return FileResponse(path, media_type="image/png")

    return app
