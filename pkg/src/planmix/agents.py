"""Synthesis agents: one atomic caption in, one AudioClip out.

Two backends share the generate() contract (exactly round(duration *
sample_rate) samples per channel):

* stub: a deterministic procedural synthesizer. Each caption gets a
  distinctive dominant frequency so mixing and onset tests can tell events
  apart; identical requests are bit-identical.
* remote: POST {description, duration_s, seed} to a diffusion service and
  decode the WAV it returns, resampling to the requested rate when needed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Protocol

import httpx
import numpy as np

from .audioio import DEFAULT_SAMPLE_RATE, AudioClip, decode_wav, resample_clip
from .errors import AgentError, FormatError
from .utils import stable_hash

logger = logging.getLogger(__name__)

MAX_DURATION_S = 30.0

STUB_TONE_AMPLITUDE = 0.3
STUB_NOISE_AMPLITUDE = 0.04
STUB_FADE_S = 0.010


@dataclass(frozen=True)
class GenerationRequest:
    description: str
    duration: float
    seed: int = 0
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def validate(self) -> None:
        if not self.description.strip():
            raise AgentError("description is empty")
        if not (self.duration > 0):
            raise AgentError(f"duration must be positive, got {self.duration}")
        if self.duration > MAX_DURATION_S:
            raise AgentError(
                f"duration {self.duration}s exceeds the {MAX_DURATION_S}s service guard"
            )
        if self.sample_rate <= 0:
            raise AgentError("sample_rate must be positive")

    @property
    def expected_frames(self) -> int:
        return int(round(self.duration * self.sample_rate))


class Agent(Protocol):
    def __call__(self, request: GenerationRequest) -> AudioClip: ...


@dataclass
class RemoteAgentConfig:
    endpoint: str
    timeout: float = 120.0
    max_retries: int = 1


def stub_generate(request: GenerationRequest) -> AudioClip:
    """Deterministic stand-in for the diffusion backend.

    Signal = sinusoid at 200 + (hash(description) mod 1800) Hz, amplitude
    0.3, plus band-limited noise from an rng seeded by (description hash,
    seed), with 10 ms raised-cosine fades at both edges. Peak stays at or
    below 0.34.
    """
    request.validate()
    n = request.expected_frames
    desc_hash = stable_hash(request.description)
    freq = 200.0 + (desc_hash % 1800)

    t = np.arange(n, dtype=np.float64) / request.sample_rate
    tone = STUB_TONE_AMPLITUDE * np.sin(2 * np.pi * freq * t)

    rng = np.random.default_rng(np.array([desc_hash % 2**63, request.seed % 2**63], dtype=np.uint64))
    noise = rng.standard_normal(n)
    kernel = np.hanning(9)
    kernel /= kernel.sum()
    noise = np.convolve(noise, kernel, mode="same")
    peak = np.max(np.abs(noise)) if n else 1.0
    if peak > 0:
        noise = noise / peak * STUB_NOISE_AMPLITUDE

    samples = tone + noise
    fade = min(int(round(STUB_FADE_S * request.sample_rate)), n // 2)
    if fade > 0:
        ramp = 0.5 * (1 - np.cos(np.pi * np.arange(fade) / fade))
        samples[:fade] *= ramp
        samples[-fade:] *= ramp[::-1]
    return AudioClip(samples, request.sample_rate)


def remote_generate(request: GenerationRequest, config: RemoteAgentConfig) -> AudioClip:
    """Fetch audio for one caption from the remote diffusion service."""
    request.validate()
    if not config.endpoint:
        raise AgentError("remote agent endpoint is not configured")
    payload = {
        "description": request.description,
        "duration_s": request.duration,
        "seed": request.seed,
    }
    body: bytes | None = None
    last_error: Exception | None = None
    for _ in range(config.max_retries + 1):
        try:
            response = httpx.post(config.endpoint, json=payload, timeout=config.timeout)
            response.raise_for_status()
            body = response.content
            break
        except httpx.HTTPError as exc:
            last_error = exc
    if body is None:
        raise AgentError(f"remote generation failed: {last_error}")

    try:
        clip = decode_wav(body)
    except FormatError as exc:
        raise AgentError(f"remote service returned undecodable audio: {exc}") from exc
    if clip.sample_rate != request.sample_rate:
        clip = resample_clip(clip, request.sample_rate)
    return _enforce_length(clip, request)


def _enforce_length(clip: AudioClip, request: GenerationRequest) -> AudioClip:
    """Trim/pad within the +/-1 frame tolerance; anything worse is an error."""
    n = request.expected_frames
    delta = clip.frames - n
    if abs(delta) > 1:
        raise AgentError(
            f"remote service returned {clip.frames} frames, expected {n} "
            f"({request.duration}s at {request.sample_rate} Hz)"
        )
    if delta == 0:
        return clip
    if delta > 0:
        return AudioClip(clip.samples[:, :n], clip.sample_rate)
    pad = np.zeros((clip.channels, n - clip.frames))
    return AudioClip(np.concatenate([clip.samples, pad], axis=1), clip.sample_rate)


def make_agent(backend: str, remote: RemoteAgentConfig | None = None) -> Callable[[GenerationRequest], AudioClip]:
    """Pick a generate() implementation by name ("stub" or "remote")."""
    if backend == "stub":
        return stub_generate
    if backend == "remote":
        if remote is None:
            raise AgentError("remote backend selected without a RemoteAgentConfig")
        return lambda request: remote_generate(request, remote)
    raise AgentError(f"unknown agent backend {backend!r}")
