"""Multi-turn sessions: conversation state, rendering, and persistence.

On-disk layout (inspectable, diffable, no database)::

    <root>/sessions/<id>/session.json          immutable config
    <root>/sessions/<id>/turn.lease            per-session turn lock
    <root>/sessions/<id>/turns/0000/turn.json  status, seeds, message
                                  response.txt raw planner output
                                  plan.json    parsed plan (when parseable)
                                  mix.wav      rendered mix (status ok only)
                                  report.json  mix report (status ok only)

A turn commits by staging its directory and atomically renaming it into
``turns/``; a crash mid-turn leaves only an ignored ``.stage-*`` directory,
so previously committed turns always survive. ``session.json`` is written
once at creation and never rewritten. Turns within a session are serialized
by a file lock; separate sessions proceed independently.
"""

from __future__ import annotations

import json
import logging
import os
import time
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

from filelock import FileLock

from .agents import GenerationRequest
from .audioio import DEFAULT_SAMPLE_RATE, AudioClip, encode_wav, read_wav
from .errors import AgentError, NotFound, NotRendered, StoreError
from .mixer import MixConfig, render_plan
from .plan import Plan
from .planner import ConversationTurn, PlannerConfig, load_template, negotiate_plan
from .utils import stable_hash

logger = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_PLAN_REJECTED = "plan_rejected"
STATUS_AGENT_FAILED = "agent_failed"


@dataclass
class SessionConfig:
    total_duration: float = 10.0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    template_variant: str = "standard"
    crossfade: float = 0.010
    peak_ceiling: float = -1.0
    limiter: str = "normalize"

    def mix_config(self) -> MixConfig:
        return MixConfig(
            total_duration=self.total_duration,
            sample_rate=self.sample_rate,
            crossfade=self.crossfade,
            peak_ceiling=self.peak_ceiling,
            limiter=self.limiter,
        )


@dataclass
class Turn:
    index: int
    user_message: str
    raw_planner_response: str
    status: str
    plan: Plan | None = None
    seeds: list[int] = field(default_factory=list)
    created_at: float = 0.0

    @property
    def has_audio(self) -> bool:
        return self.status == STATUS_OK


@dataclass
class Session:
    id: str
    config: SessionConfig
    created_at: float
    turns: list[Turn] = field(default_factory=list)


class SessionStore:
    """Directory-backed session persistence."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)

    # -- paths ----------------------------------------------------------

    def session_dir(self, session_id: str) -> Path:
        return self.root / "sessions" / session_id

    def turn_dir(self, session_id: str, index: int) -> Path:
        return self.session_dir(session_id) / "turns" / f"{index:04d}"

    def lease_path(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "turn.lease"

    # -- sessions ---------------------------------------------------------

    def create_session(self, config: SessionConfig, session_id: str | None = None) -> Session:
        sid = session_id or uuid.uuid4().hex[:12]
        directory = self.session_dir(sid)
        if directory.exists():
            raise StoreError(f"session {sid!r} already exists")
        try:
            (directory / "turns").mkdir(parents=True)
            session = Session(id=sid, config=config, created_at=time.time())
            payload = {
                "id": sid,
                "created_at": session.created_at,
                "config": asdict(config),
            }
            _atomic_write_text(directory / "session.json", json.dumps(payload, indent=2))
        except OSError as exc:
            raise StoreError(f"cannot create session {sid!r}: {exc}") from exc
        return session

    def load_session(self, session_id: str) -> Session:
        directory = self.session_dir(session_id)
        meta_path = directory / "session.json"
        if not meta_path.exists():
            raise NotFound(f"session {session_id!r} does not exist")
        try:
            meta = json.loads(meta_path.read_text())
            config = SessionConfig(**meta["config"])
        except (OSError, KeyError, TypeError, ValueError) as exc:
            raise StoreError(f"corrupt session {session_id!r}: {exc}") from exc
        session = Session(id=session_id, config=config, created_at=meta["created_at"])
        index = 0
        while True:
            turn = self._load_turn(session_id, index)
            if turn is None:
                break
            session.turns.append(turn)
            index += 1
        return session

    def list_sessions(self) -> list[str]:
        base = self.root / "sessions"
        return sorted(p.name for p in base.iterdir() if (p / "session.json").exists())

    # -- turns ------------------------------------------------------------

    def _load_turn(self, session_id: str, index: int) -> Turn | None:
        directory = self.turn_dir(session_id, index)
        meta_path = directory / "turn.json"
        if not meta_path.exists():
            return None
        try:
            meta = json.loads(meta_path.read_text())
            raw = (directory / "response.txt").read_text()
            plan = None
            plan_path = directory / "plan.json"
            if plan_path.exists():
                plan = Plan.from_json_dict(json.loads(plan_path.read_text()))
        except (OSError, ValueError, KeyError) as exc:
            raise StoreError(f"corrupt turn {index} in session {session_id!r}: {exc}") from exc
        return Turn(
            index=meta["index"],
            user_message=meta["user_message"],
            raw_planner_response=raw,
            status=meta["status"],
            plan=plan,
            seeds=list(meta.get("seeds", [])),
            created_at=meta.get("created_at", 0.0),
        )

    def commit_turn(self, session_id: str, turn: Turn, wav_bytes: bytes | None,
                    report_json: str | None) -> None:
        """Write the whole turn into a staging dir, then rename it into place."""
        final = self.turn_dir(session_id, turn.index)
        if final.exists():
            raise StoreError(f"turn {turn.index} already committed")
        stage = final.parent / f".stage-{turn.index:04d}-{uuid.uuid4().hex[:8]}"
        try:
            stage.mkdir(parents=True)
            meta = {
                "index": turn.index,
                "user_message": turn.user_message,
                "status": turn.status,
                "seeds": turn.seeds,
                "created_at": turn.created_at,
            }
            _write_and_sync(stage / "turn.json", json.dumps(meta, indent=2).encode())
            _write_and_sync(stage / "response.txt", turn.raw_planner_response.encode())
            if turn.plan is not None:
                _write_and_sync(
                    stage / "plan.json", json.dumps(turn.plan.to_json_dict(), indent=2).encode()
                )
            if wav_bytes is not None:
                _write_and_sync(stage / "mix.wav", wav_bytes)
            if report_json is not None:
                _write_and_sync(stage / "report.json", report_json.encode())
            os.rename(stage, final)
            _sync_dir(final.parent)
        except OSError as exc:
            raise StoreError(f"cannot commit turn {turn.index}: {exc}") from exc

    def turn_audio_path(self, session_id: str, index: int) -> Path:
        return self.turn_dir(session_id, index) / "mix.wav"


def _write_and_sync(path: Path, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_suffix(".tmp")
    _write_and_sync(tmp, text.encode())
    os.replace(tmp, path)
    _sync_dir(path.parent)


def _sync_dir(path: Path) -> None:
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


class SessionEngine:
    """Wires planner, agents, mixer, and store into conversational turns."""

    def __init__(
        self,
        store: SessionStore,
        planner_config: PlannerConfig,
        agent: Callable[[GenerationRequest], AudioClip],
        render_workers: int = 1,
    ):
        self.store = store
        self.planner_config = planner_config
        self.agent = agent
        self.render_workers = render_workers
        self._templates: dict[str, object] = {}
        self._clip_cache: dict[tuple, AudioClip] = {}

    def _template(self, variant: str):
        if variant not in self._templates:
            self._templates[variant] = load_template(variant)
        return self._templates[variant]

    def create_session(self, config: SessionConfig | None = None,
                       session_id: str | None = None) -> Session:
        config = config or SessionConfig()
        config.mix_config()  # validate eagerly
        return self.store.create_session(config, session_id=session_id)

    def take_turn(self, session_id: str, user_message: str) -> Turn:
        """Run one conversational turn; always leaves the store consistent.

        The turn is committed atomically: plan_rejected and agent_failed
        turns are recorded (without audio), backend failures propagate
        without recording anything.
        """
        lease = FileLock(str(self.store.lease_path(session_id)) + ".lock")
        with lease:
            session = self.store.load_session(session_id)
            index = len(session.turns)
            history: list[ConversationTurn] = []
            for prior in session.turns:
                history.append(ConversationTurn("user", prior.user_message))
                history.append(ConversationTurn("assistant", prior.raw_planner_response))

            negotiation = negotiate_plan(
                self.planner_config,
                self._template(session.config.template_variant),
                history,
                user_message,
                session.config.total_duration,
            )
            turn = Turn(
                index=index,
                user_message=user_message,
                raw_planner_response=negotiation.raw_response,
                status=STATUS_PLAN_REJECTED,
                plan=negotiation.plan,
                created_at=time.time(),
            )
            wav_bytes = None
            report_json = None
            if negotiation.plan is not None:
                plan = negotiation.plan
                turn.seeds = [
                    turn_seed(session_id, index, step) for step in range(len(plan.steps))
                ]
                try:
                    mix, report = render_plan(
                        plan,
                        self._cached_agent,
                        session.config.mix_config(),
                        seeds=turn.seeds,
                        max_workers=self.render_workers,
                    )
                except AgentError as exc:
                    logger.warning("agent failed on turn %d: %s", index, exc)
                    turn.status = STATUS_AGENT_FAILED
                else:
                    turn.status = STATUS_OK
                    wav_bytes = encode_wav(mix)
                    report_json = report.to_json()
            self.store.commit_turn(session_id, turn, wav_bytes, report_json)
            return turn

    def _cached_agent(self, request: GenerationRequest) -> AudioClip:
        key = (request.description, request.expected_frames, request.seed, request.sample_rate)
        clip = self._clip_cache.get(key)
        if clip is None:
            clip = self.agent(request)
            self._clip_cache[key] = clip
        return clip

    def get_turn(self, session_id: str, index: int) -> Turn:
        session = self.store.load_session(session_id)
        if index < 0 or index >= len(session.turns):
            raise NotFound(f"session {session_id!r} has no turn {index}")
        return session.turns[index]

    def get_turn_audio(self, session_id: str, index: int) -> AudioClip:
        turn = self.get_turn(session_id, index)
        if turn.status != STATUS_OK:
            raise NotRendered(f"turn {index} has status {turn.status}")
        return read_wav(self.store.turn_audio_path(session_id, index))

    def rerender_turn(self, session_id: str, index: int) -> AudioClip:
        """Re-run generation+mixing for a committed turn (not persisted)."""
        session = self.store.load_session(session_id)
        turn = self.get_turn(session_id, index)
        if turn.plan is None:
            raise NotRendered(f"turn {index} has no plan")
        mix, _ = render_plan(
            turn.plan,
            self.agent,
            session.config.mix_config(),
            seeds=turn.seeds,
            max_workers=self.render_workers,
        )
        return mix


def turn_seed(session_id: str, turn_index: int, step_index: int) -> int:
    """Per-step generation seed; stable across processes and re-renders."""
    return stable_hash(session_id, turn_index, step_index) % 2**31
