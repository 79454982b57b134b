"""Synchronization and semantic-alignment metrics.

Onset detection is energy-based spectral flux: magnitude spectra over
Hann-windowed frames, half-wave-rectified frame-to-frame increase summed
across bins, peak-picked with a minimum separation. A peak counts as an
onset when it clears three hurdles: the median-relative threshold, an
absolute floor proportional to the signal's spectral scale (tiny
phase-leakage flux on steady tones never qualifies), and a prominence ratio
over the local flux mean (sustained noise keeps producing flux, but only
the attack rises well above its neighborhood). Frames are centered
(half-window zero padding), and flux is suppressed until the analysis
window fits entirely inside the signal, so a signal that is simply "on"
from sample 0 (a constant tone) reports no onsets; the earliest detectable
onset sits around 3 hops in.

Matching for accuracy/AP is greedy in time order: a prediction takes the
earliest unmatched reference within the tolerance. Accuracy divides hits by
max(|predicted|, |reference|). AP groups predictions by confidence level,
accumulates one precision/recall point per level, and integrates with
all-points interpolation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audioio import AudioClip, read_wav
from .errors import TooShort, ZeroVector
from .features import read_features

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OnsetConfig:
    frame: int = 1024
    hop: int = 256
    threshold: float = 2.0  # multiple of the median flux
    min_separation: float = 0.050  # seconds
    energy_floor: float = 0.01  # fraction of the mean frame magnitude sum
    prominence: float = 1.5  # ratio over the local flux mean


@dataclass(frozen=True)
class OnsetLabels:
    timestamps: tuple[float, ...]
    clip_duration: float

    def __post_init__(self):
        stamps = tuple(float(t) for t in self.timestamps)
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ValueError("timestamps must be strictly increasing")
        if stamps and (stamps[0] < 0 or stamps[-1] > self.clip_duration):
            raise ValueError("timestamps must lie within [0, clip_duration]")
        object.__setattr__(self, "timestamps", stamps)


def _flux_envelope(
    clip: AudioClip, config: OnsetConfig
) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Rectified spectral flux, energy-rising mask, time step, spectral scale."""
    x = clip.mono()
    if x.size < config.frame:
        raise TooShort(f"need at least {config.frame} samples, got {x.size}")
    half = config.frame // 2
    padded = np.concatenate([np.zeros(half), x, np.zeros(half)])
    n_frames = 1 + (padded.size - config.frame) // config.hop
    window = np.hanning(config.frame)

    spectra = np.empty((n_frames, config.frame // 2 + 1))
    for k in range(n_frames):
        segment = padded[k * config.hop : k * config.hop + config.frame]
        spectra[k] = np.abs(np.fft.rfft(segment * window))

    flux = np.zeros(n_frames)
    rising = np.zeros(n_frames, dtype=bool)
    for k in range(1, n_frames):
        # Skip warm-up/cool-down frames whose window (or predecessor's) still
        # overlaps the zero padding; they ramp for any signal active at the
        # edges and would fake an onset for steady-state input.
        start_prev = (k - 1) * config.hop - half
        end_here = k * config.hop - half + config.frame
        if start_prev < 0 or end_here > x.size:
            continue
        rise = spectra[k] - spectra[k - 1]
        flux[k] = float(np.sum(rise[rise > 0]))
        # L2 energy, not the L1 magnitude sum: amplitude ramps spread energy
        # across bins, which inflates the L1 norm even while energy falls.
        rising[k] = float(np.sum(spectra[k] ** 2)) > float(np.sum(spectra[k - 1] ** 2))
    scale = float(np.mean(spectra.sum(axis=1)))
    return flux, rising, config.hop / clip.sample_rate, scale


def _scored_onsets(clip: AudioClip, config: OnsetConfig) -> list[tuple[float, float]]:
    flux, rising, dt, scale = _flux_envelope(clip, config)
    if flux.size < 3:
        return []
    floor = max(
        config.threshold * float(np.median(flux)),
        config.energy_floor * scale,
        1e-12,
    )
    neighborhood = max(1, int(round(config.min_separation / dt)))
    peak_radius = 2 * neighborhood
    candidates = []
    for k in range(1, flux.size - 1):
        if not (flux[k] > flux[k - 1] and flux[k] >= flux[k + 1] and flux[k] > floor):
            continue
        if not rising[k]:
            continue  # overall energy falling: a decay artifact, not an onset
        local = flux[max(0, k - neighborhood) : k + neighborhood + 1]
        if flux[k] < config.prominence * float(np.mean(local)):
            continue
        # Attack transients jitter; keep only the dominant peak of each
        # neighborhood so one event reports one onset.
        if flux[k] < float(np.max(flux[max(0, k - peak_radius) : k + peak_radius + 1])):
            continue
        candidates.append(k)
    candidates.sort(key=lambda k: -flux[k])
    kept: list[int] = []
    for k in candidates:
        if all(abs(k - other) * dt >= config.min_separation for other in kept):
            kept.append(k)
    kept.sort()
    return [(k * dt, float(flux[k])) for k in kept]


def detect_onsets(clip: AudioClip, config: OnsetConfig = OnsetConfig()) -> list[float]:
    """Onset timestamps in seconds, earliest first."""
    return [t for t, _ in _scored_onsets(clip, config)]


def detect_onsets_scored(
    clip: AudioClip, config: OnsetConfig = OnsetConfig()
) -> list[tuple[float, float]]:
    """(timestamp, flux strength) pairs for precision/recall evaluation."""
    return _scored_onsets(clip, config)


def _reference_timestamps(reference) -> list[float]:
    if isinstance(reference, OnsetLabels):
        return list(reference.timestamps)
    return sorted(float(t) for t in reference)


def _greedy_match(predicted: list[float], reference: list[float], tolerance: float) -> int:
    used = [False] * len(reference)
    hits = 0
    for p in sorted(predicted):
        for j, r in enumerate(reference):
            if not used[j] and abs(p - r) <= tolerance:
                used[j] = True
                hits += 1
                break
    return hits


def onset_accuracy(predicted, reference, tolerance: float) -> float:
    """Greedy one-to-one matching; hits / max(|predicted|, |reference|)."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    pred = sorted(float(t) for t in predicted)
    ref = _reference_timestamps(reference)
    denominator = max(len(pred), len(ref))
    if denominator == 0:
        return 1.0
    return _greedy_match(pred, ref, tolerance) / denominator


def onset_ap(scored_predictions, reference, tolerance: float) -> float:
    """Average precision over confidence-ranked predictions.

    Predictions sharing a confidence are treated as one operating point, so
    a single-level prediction set scores exactly precision * recall.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    ref = _reference_timestamps(reference)
    scored = [(float(t), float(c)) for t, c in scored_predictions]
    for _, confidence in scored:
        if not np.isfinite(confidence):
            raise ValueError("confidences must be finite")
    if not ref:
        return 1.0 if not scored else 0.0
    if not scored:
        return 0.0

    used = [False] * len(ref)
    levels = sorted({c for _, c in scored}, reverse=True)
    tp = fp = 0
    points: list[tuple[float, float]] = []  # (recall, precision)
    for level in levels:
        batch = sorted(t for t, c in scored if c == level)
        for p in batch:
            matched = False
            for j, r in enumerate(ref):
                if not used[j] and abs(p - r) <= tolerance:
                    used[j] = True
                    matched = True
                    break
            tp += matched
            fp += not matched
        points.append((tp / len(ref), tp / (tp + fp)))

    ap = 0.0
    previous_recall = 0.0
    for i, (recall, _) in enumerate(points):
        if recall > previous_recall:
            best_later_precision = max(p for _, p in points[i:])
            ap += (recall - previous_recall) * best_later_precision
            previous_recall = recall
    return ap


def embedding_similarity(a, b) -> float:
    """Cosine similarity between two embedding vectors."""
    x = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(b, dtype=np.float64).ravel()
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise ZeroVector("cosine similarity of a zero vector is undefined")
    return float(np.dot(x, y) / (nx * ny))


# ---------------------------------------------------------------------------
# Corpus evaluation
# ---------------------------------------------------------------------------

@dataclass
class ClipMetrics:
    audio: str
    onset_accuracy: float
    onset_ap: float
    detected: list[float]
    similarity: float | None = None


@dataclass
class MetricReport:
    onset_accuracy: float
    onset_ap: float
    clips: list[ClipMetrics] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "onset_accuracy": self.onset_accuracy,
            "onset_ap": self.onset_ap,
            "clips": [
                {
                    "audio": c.audio,
                    "onset_accuracy": c.onset_accuracy,
                    "onset_ap": c.onset_ap,
                    "detected": c.detected,
                    "similarity": c.similarity,
                }
                for c in self.clips
            ],
        }

    def to_table(self) -> str:
        header = f"{'clip':<40} {'onset_acc':>9} {'onset_ap':>9} {'cosine':>7}"
        lines = [header, "-" * len(header)]
        for c in self.clips:
            cosine = f"{c.similarity:7.3f}" if c.similarity is not None else "      -"
            lines.append(
                f"{Path(c.audio).name:<40} {c.onset_accuracy:9.3f} {c.onset_ap:9.3f} {cosine}"
            )
        lines.append("-" * len(header))
        lines.append(
            f"{'mean':<40} {self.onset_accuracy:9.3f} {self.onset_ap:9.3f}"
        )
        return "\n".join(lines)


def evaluate_corpus(
    manifest: list[dict],
    base_dir: str | Path = ".",
    tolerance: float = 0.1,
    config: OnsetConfig = OnsetConfig(),
) -> MetricReport:
    """Score every manifest entry; results reduce in manifest order.

    Each entry: {"audio": wav path, "onsets": [...], optional "embedding"
    and "reference_embedding" feature-container paths}.
    """
    base = Path(base_dir)
    clips: list[ClipMetrics] = []
    for entry in manifest:
        clip = read_wav(base / entry["audio"])
        reference = [float(t) for t in entry.get("onsets", [])]
        scored = detect_onsets_scored(clip, config)
        detected = [t for t, _ in scored]
        accuracy = onset_accuracy(detected, reference, tolerance)
        ap = onset_ap(scored, reference, tolerance)
        similarity = None
        if entry.get("embedding") and entry.get("reference_embedding"):
            a, _ = read_features(base / entry["embedding"])
            b, _ = read_features(base / entry["reference_embedding"])
            similarity = embedding_similarity(a, b)
        clips.append(
            ClipMetrics(
                audio=str(entry["audio"]),
                onset_accuracy=accuracy,
                onset_ap=ap,
                detected=detected,
                similarity=similarity,
            )
        )
    mean_accuracy = float(np.mean([c.onset_accuracy for c in clips])) if clips else 0.0
    mean_ap = float(np.mean([c.onset_ap for c in clips])) if clips else 0.0
    return MetricReport(onset_accuracy=mean_accuracy, onset_ap=mean_ap, clips=clips)
