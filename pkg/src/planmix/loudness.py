"""Gated, K-weighted integrated loudness and gain staging.

Loudness here follows the broadcast convention the volume-control prompts
refer to: K-weighting (a high-frequency shelf followed by an RLB high-pass),
400 ms analysis blocks with 75% overlap, an absolute gate at -70, and a
relative gate 10 below the ungated mean. Values are dB relative to full
scale; the all-zero signal reports the -inf sentinel.

Coefficient derivation (why this works at any sample rate): the standard
filter tables are given at 48 kHz only. Both stages are bilinear images of
fixed analog prototypes, so we recompute the biquads at the configured rate
from the analog parameters that reproduce the published 48 kHz tables:

* shelf:    f0 = 1681.9744509555319 Hz, gain +3.999843853973347 dB,
            Q = 0.7071752369554196, band-gain exponent 0.4996667741545416
            (Vb = Vh**exponent in the shelf numerator)
* high-pass: f0 = 38.13547087602444 Hz, Q = 0.5003270373238773, with the
            numerator pinned at [1, -2, 1] exactly as published (not
            normalized by the denominator).

Both use the bilinear K = tan(pi*f0/fs) substitution. At 48 kHz this
reproduces the published coefficients to ~1e-10; at other rates it keeps
the analog response, so the 997 Hz calibration tone still reads the
canonical -3.01 at full scale (the shelf gain there is the +0.691 dB that
the formula's -0.691 offset cancels).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .audioio import AudioClip
from .errors import Unmeasurable

ABSOLUTE_GATE_DB = -70.0
RELATIVE_GATE_DB = -10.0
BLOCK_S = 0.400
BLOCK_OVERLAP = 0.75
_OFFSET_DB = -0.691

_SHELF_F0 = 1681.9744509555319
_SHELF_GAIN_DB = 3.999843853973347
_SHELF_Q = 0.7071752369554196
_SHELF_BAND_EXP = 0.4996667741545416
_HIGHPASS_F0 = 38.13547087602444
_HIGHPASS_Q = 0.5003270373238773

SILENCE_LUFS = float("-inf")


@dataclass(frozen=True)
class LoudnessMeasurement:
    integrated_loudness: float  # dB relative to full scale; -inf for silence
    gated: bool
    sample_peak: float  # dBFS


def _high_shelf(fs: float, f0: float, gain_db: float, q: float, band_exp: float) -> tuple[np.ndarray, np.ndarray]:
    k = math.tan(math.pi * f0 / fs)
    vh = 10.0 ** (gain_db / 20.0)
    vb = vh**band_exp
    a0 = 1.0 + k / q + k * k
    b = np.array([
        (vh + vb * k / q + k * k) / a0,
        2.0 * (k * k - vh) / a0,
        (vh - vb * k / q + k * k) / a0,
    ])
    a = np.array([1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0])
    return b, a


def _rlb_high_pass(fs: float, f0: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    k = math.tan(math.pi * f0 / fs)
    denom = 1.0 + k / q + k * k
    b = np.array([1.0, -2.0, 1.0])
    a = np.array([1.0, 2.0 * (k * k - 1.0) / denom, (1.0 - k / q + k * k) / denom])
    return b, a


def k_weighting_coefficients(sample_rate: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """The two K-weighting biquads (b, a) designed for this sample rate."""
    return [
        _high_shelf(sample_rate, _SHELF_F0, _SHELF_GAIN_DB, _SHELF_Q, _SHELF_BAND_EXP),
        _rlb_high_pass(sample_rate, _HIGHPASS_F0, _HIGHPASS_Q),
    ]


def _k_weight(samples: np.ndarray, sample_rate: int) -> np.ndarray:
    out = samples
    for b, a in k_weighting_coefficients(sample_rate):
        out = lfilter(b, a, out, axis=-1)
    return out


def _sample_peak_db(clip: AudioClip) -> float:
    peak = clip.peak()
    return 20.0 * math.log10(peak) if peak > 0 else SILENCE_LUFS


def measure_loudness(clip: AudioClip) -> LoudnessMeasurement:
    """Integrated loudness of a clip.

    Clips shorter than one 400 ms block get an ungated whole-clip estimate
    (gated=False). All-silent input reports the -inf sentinel with
    gated=True.
    """
    peak_db = _sample_peak_db(clip)
    if clip.frames == 0 or clip.peak() == 0.0:
        return LoudnessMeasurement(SILENCE_LUFS, True, peak_db)

    weighted = _k_weight(clip.samples, clip.sample_rate)
    block = int(round(BLOCK_S * clip.sample_rate))
    hop = int(round(block * (1.0 - BLOCK_OVERLAP)))

    if clip.frames < block:
        mean_square = float(np.mean(weighted**2, axis=1).sum())
        loudness = _OFFSET_DB + 10.0 * math.log10(mean_square) if mean_square > 0 else SILENCE_LUFS
        return LoudnessMeasurement(loudness, False, peak_db)

    n_blocks = (clip.frames - block) // hop + 1
    # Per-block channel-summed mean square (channel weights 1.0 for mono and
    # stereo layouts; nothing else is produced by this engine).
    powers = np.empty(n_blocks)
    for j in range(n_blocks):
        seg = weighted[:, j * hop : j * hop + block]
        powers[j] = float(np.mean(seg**2, axis=1).sum())

    with np.errstate(divide="ignore"):
        block_loudness = _OFFSET_DB + 10.0 * np.log10(powers)

    above_absolute = powers[block_loudness > ABSOLUTE_GATE_DB]
    if above_absolute.size == 0:
        return LoudnessMeasurement(SILENCE_LUFS, True, peak_db)

    ungated_mean = float(np.mean(above_absolute))
    relative_threshold = _OFFSET_DB + 10.0 * math.log10(ungated_mean) + RELATIVE_GATE_DB
    keep = powers[
        (block_loudness > ABSOLUTE_GATE_DB) & (block_loudness > relative_threshold)
    ]
    if keep.size == 0:
        return LoudnessMeasurement(SILENCE_LUFS, True, peak_db)
    loudness = _OFFSET_DB + 10.0 * math.log10(float(np.mean(keep)))
    return LoudnessMeasurement(loudness, True, peak_db)


def apply_gain_to_target(clip: AudioClip, target_db: float) -> AudioClip:
    """Scale the clip so its integrated loudness lands on target_db."""
    measured = measure_loudness(clip).integrated_loudness
    if measured == SILENCE_LUFS:
        raise Unmeasurable("cannot gain-stage a silent clip")
    gain = 10.0 ** ((target_db - measured) / 20.0)
    return AudioClip(clip.samples * gain, clip.sample_rate)


def gain_for_target(clip: AudioClip, target_db: float) -> float:
    """Linear gain apply_gain_to_target would use (for mix reports)."""
    measured = measure_loudness(clip).integrated_loudness
    if measured == SILENCE_LUFS:
        raise Unmeasurable("cannot gain-stage a silent clip")
    return 10.0 ** ((target_db - measured) / 20.0)
