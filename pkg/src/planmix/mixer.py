"""Timeline mixer: place clips, gain-stage, sum, and tame the overlaps.

The renderer is a pure function of (plan, clips, config): clips are placed
at sample-accurate offsets, faded with a raised cosine at both edges,
gain-staged to their loudness targets when present, and summed in step
order. Overlapping regions can exceed full scale ("volume explosion");
the limiter policy then applies:

* none:      leave the sum as is (clipping detectable downstream)
* normalize: scale the whole mix down so its peak sits at the ceiling
* soft_clip: pass-through below the ceiling, tanh saturation above it
             (asymptotes below full scale, leaves in-range samples intact)

Generation of per-step clips may run concurrently; summation is always in
step-index order into one buffer, so the mix never depends on completion
order.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .agents import GenerationRequest
from .audioio import DEFAULT_SAMPLE_RATE, AudioClip
from .errors import ConfigError, LengthMismatch
from .loudness import SILENCE_LUFS, gain_for_target, measure_loudness
from .plan import Plan

logger = logging.getLogger(__name__)

CLIP_THRESHOLD = 1.0 - 1e-6

LIMITER_NONE = "none"
LIMITER_NORMALIZE = "normalize"
LIMITER_SOFT_CLIP = "soft_clip"
_LIMITERS = (LIMITER_NONE, LIMITER_NORMALIZE, LIMITER_SOFT_CLIP)


@dataclass(frozen=True)
class ScheduledClip:
    clip: AudioClip
    start_time: float
    target_loudness: float | None = None


@dataclass(frozen=True)
class MixConfig:
    total_duration: float
    sample_rate: int = DEFAULT_SAMPLE_RATE
    crossfade: float = 0.010
    peak_ceiling: float = -1.0  # dBFS
    limiter: str = LIMITER_NORMALIZE

    def __post_init__(self):
        if self.total_duration <= 0:
            raise ConfigError("total_duration must be positive")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        if self.crossfade < 0:
            raise ConfigError("crossfade must be >= 0")
        if self.peak_ceiling > 0:
            raise ConfigError("peak_ceiling must be <= 0 dBFS")
        if self.limiter not in _LIMITERS:
            raise ConfigError(f"limiter must be one of {_LIMITERS}")

    @property
    def frames(self) -> int:
        return int(round(self.total_duration * self.sample_rate))


@dataclass
class StepMixReport:
    description: str
    start_time: float
    end_time: float
    measured_loudness: float
    target_loudness: float | None
    applied_gain_db: float


@dataclass
class MixReport:
    steps: list[StepMixReport] = field(default_factory=list)
    peak_before_limiter: float = 0.0
    peak_after_limiter: float = 0.0
    limiter: str = LIMITER_NONE
    clipping: list[tuple[int, int]] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "steps": [
                {
                    "description": s.description,
                    "start_time": s.start_time,
                    "end_time": s.end_time,
                    "measured_loudness": _json_db(s.measured_loudness),
                    "target_loudness": s.target_loudness,
                    "applied_gain_db": s.applied_gain_db,
                }
                for s in self.steps
            ],
            "peak_before_limiter": self.peak_before_limiter,
            "peak_after_limiter": self.peak_after_limiter,
            "limiter": self.limiter,
            "clipping": [list(run) for run in self.clipping],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def _json_db(value: float):
    # -inf is not valid JSON; report the sentinel as a string.
    return value if value != SILENCE_LUFS else "-inf"


def _raised_cosine_fades(buffer: np.ndarray, fade_frames: int) -> np.ndarray:
    n = buffer.shape[-1]
    fade = min(fade_frames, n // 2)
    if fade <= 0:
        return buffer
    ramp = 0.5 * (1 - np.cos(np.pi * (np.arange(fade) + 0.5) / fade))
    out = buffer.copy()
    out[..., :fade] *= ramp
    out[..., n - fade :] *= ramp[::-1]
    return out


def place_clip(scheduled: ScheduledClip, config: MixConfig) -> tuple[np.ndarray, float]:
    """Gain-stage, fade, and position one clip on a full-length buffer.

    Returns (buffer of shape (channels, config.frames), applied linear gain).
    """
    clip = scheduled.clip
    if clip.sample_rate != config.sample_rate:
        raise ConfigError(
            f"clip rate {clip.sample_rate} differs from mix rate {config.sample_rate}"
        )
    offset = int(round(scheduled.start_time * config.sample_rate))
    if offset < 0 or offset + clip.frames > config.frames:
        raise LengthMismatch(
            f"clip at {scheduled.start_time}s ({clip.frames} frames) does not fit "
            f"a {config.frames}-frame timeline"
        )
    gain = 1.0
    if scheduled.target_loudness is not None:
        gain = gain_for_target(clip, scheduled.target_loudness)
    samples = clip.samples * gain
    samples = _raised_cosine_fades(samples, int(round(config.crossfade * config.sample_rate)))
    buffer = np.zeros((clip.channels, config.frames))
    buffer[:, offset : offset + clip.frames] = samples
    return buffer, gain


def _apply_limiter(mix: np.ndarray, config: MixConfig) -> np.ndarray:
    ceiling = 10.0 ** (config.peak_ceiling / 20.0)
    peak = float(np.max(np.abs(mix))) if mix.size else 0.0
    if config.limiter == LIMITER_NORMALIZE:
        if peak > ceiling and peak > 0:
            return mix * (ceiling / peak)
        return mix
    if config.limiter == LIMITER_SOFT_CLIP:
        headroom = 1.0 - ceiling
        if headroom <= 0:
            return np.clip(mix, -ceiling, ceiling)
        out = mix.copy()
        over = np.abs(mix) > ceiling
        out[over] = np.sign(mix[over]) * (
            ceiling + headroom * np.tanh((np.abs(mix[over]) - ceiling) / headroom)
        )
        return out
    return mix


def render_with_report(
    plan: Plan, clips: Sequence[ScheduledClip], config: MixConfig
) -> tuple[AudioClip, MixReport]:
    """Mix scheduled clips onto the plan's timeline and describe what happened."""
    if len(clips) != len(plan.steps):
        raise LengthMismatch(
            f"{len(clips)} clips for {len(plan.steps)} plan steps"
        )
    report = MixReport(limiter=config.limiter)
    mix = np.zeros((max((s.clip.channels for s in clips), default=1), config.frames))
    for step, scheduled in zip(plan.steps, clips):
        if scheduled.clip.sample_rate != config.sample_rate:
            raise ConfigError(
                f"clip rate {scheduled.clip.sample_rate} differs from mix rate "
                f"{config.sample_rate}"
            )
        expected = int(round(step.duration * config.sample_rate))
        if abs(scheduled.clip.frames - expected) > 1:
            raise LengthMismatch(
                f"step {step.description!r}: clip has {scheduled.clip.frames} frames, "
                f"step duration needs {expected}"
            )
        if scheduled.clip.channels != mix.shape[0]:
            raise ConfigError("all clips must share a channel count")
        placed, gain = place_clip(scheduled, config)
        mix += placed
        report.steps.append(
            StepMixReport(
                description=step.description,
                start_time=step.start_time,
                end_time=step.end_time,
                measured_loudness=measure_loudness(scheduled.clip).integrated_loudness,
                target_loudness=scheduled.target_loudness,
                applied_gain_db=float(20 * np.log10(gain)) if gain > 0 else 0.0,
            )
        )
    report.peak_before_limiter = float(np.max(np.abs(mix))) if mix.size else 0.0
    mix = _apply_limiter(mix, config)
    report.peak_after_limiter = float(np.max(np.abs(mix))) if mix.size else 0.0
    out = AudioClip(mix, config.sample_rate)
    report.clipping = detect_clipping(out)
    return out, report


def render(plan: Plan, clips: Sequence[ScheduledClip], config: MixConfig) -> AudioClip:
    """Pure mix of scheduled clips; see render_with_report for the report."""
    out, _ = render_with_report(plan, clips, config)
    return out


def detect_clipping(clip: AudioClip) -> list[tuple[int, int]]:
    """Maximal runs [start, end) of frames where any channel exceeds full scale."""
    hot = np.any(np.abs(clip.samples) > CLIP_THRESHOLD, axis=0)
    if not hot.any():
        return []
    edges = np.flatnonzero(np.diff(np.concatenate(([False], hot, [False])).astype(int)))
    return [(int(edges[i]), int(edges[i + 1])) for i in range(0, len(edges), 2)]


def schedule_plan_clips(
    plan: Plan, rendered: Sequence[AudioClip]
) -> list[ScheduledClip]:
    """Pair rendered step clips with their timing and volume targets."""
    if len(rendered) != len(plan.steps):
        raise LengthMismatch(f"{len(rendered)} clips for {len(plan.steps)} steps")
    return [
        ScheduledClip(clip=clip, start_time=step.start_time, target_loudness=step.volume)
        for step, clip in zip(plan.steps, rendered)
    ]


def render_plan(
    plan: Plan,
    agent: Callable[[GenerationRequest], AudioClip],
    config: MixConfig,
    seeds: Sequence[int] | None = None,
    max_workers: int = 1,
) -> tuple[AudioClip, MixReport]:
    """Generate every plan step with the agent, then mix.

    ``seeds`` supplies one seed per step (defaults to the step index).
    ``max_workers`` > 1 generates steps concurrently; the mix is identical
    regardless because summation happens in step order afterwards.
    """
    if seeds is None:
        seeds = list(range(len(plan.steps)))
    if len(seeds) != len(plan.steps):
        raise LengthMismatch("need exactly one seed per plan step")
    requests = [
        GenerationRequest(
            description=step.description,
            duration=step.duration,
            seed=seed,
            sample_rate=config.sample_rate,
        )
        for step, seed in zip(plan.steps, seeds)
    ]
    if max_workers <= 1:
        rendered = [agent(r) for r in requests]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            rendered = list(pool.map(agent, requests))
    return render_with_report(plan, schedule_plan_clips(plan, rendered), config)
