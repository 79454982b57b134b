"""AudioClip container, WAV encode/decode, and sample-rate conversion.

WAV layout written by this module (and the exact bytes readers can expect):

* ``RIFF <size> WAVE`` followed by chunks. Sizes are little-endian u32.
* ``fmt `` chunk, 16 bytes for PCM16 (format tag 1) or 18 bytes with a zero
  extension size plus a ``fact`` chunk for float32 (format tag 3).
* ``data`` chunk with interleaved frames: int16 LE for PCM16, IEEE float32
  LE for float32.

PCM16 quantization is ``round(x * 32768)`` clamped to [-32768, 32767], so
decoding (``x / 32768``) and re-encoding reproduces int16 samples exactly.

Resampling is polyphase windowed-sinc (scipy.signal.resample_poly with its
Kaiser window); the test suite holds it against a direct-summation sinc
interpolator to a stated tolerance.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import resample_poly

from .errors import FormatError

DEFAULT_SAMPLE_RATE = 16_000


@dataclass(frozen=True)
class AudioClip:
    """PCM audio: float64 samples in [-1, 1], shape (channels, frames)."""

    samples: np.ndarray
    sample_rate: int
    channels: int = field(default=0)

    def __post_init__(self):
        data = np.asarray(self.samples, dtype=np.float64)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2:
            raise ValueError("samples must be 1-D (mono) or (channels, frames)")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(data)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", data)
        object.__setattr__(self, "channels", data.shape[0])

    @property
    def frames(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.frames / self.sample_rate

    def peak(self) -> float:
        if self.frames == 0:
            return 0.0
        return float(np.max(np.abs(self.samples)))

    def mono(self) -> np.ndarray:
        """Channel mean as a 1-D array."""
        return self.samples.mean(axis=0)

    @classmethod
    def silence(cls, duration: float, sample_rate: int, channels: int = 1) -> "AudioClip":
        n = int(round(duration * sample_rate))
        return cls(np.zeros((channels, n)), sample_rate)


# ---------------------------------------------------------------------------
# WAV encode/decode
# ---------------------------------------------------------------------------

_FMT_PCM16 = 1
_FMT_FLOAT32 = 3


def encode_wav(clip: AudioClip, fmt: str = "pcm16") -> bytes:
    """Serialize a clip to WAV bytes. fmt is "pcm16" or "float32"."""
    interleaved = clip.samples.T  # (frames, channels)
    if fmt == "pcm16":
        scaled = np.clip(np.round(interleaved * 32768.0), -32768, 32767)
        payload = scaled.astype("<i2").tobytes()
        format_tag, bits = _FMT_PCM16, 16
    elif fmt == "float32":
        payload = interleaved.astype("<f4").tobytes()
        format_tag, bits = _FMT_FLOAT32, 32
    else:
        raise ValueError(f"unknown WAV sample format {fmt!r}")

    block_align = clip.channels * bits // 8
    byte_rate = clip.sample_rate * block_align
    if format_tag == _FMT_PCM16:
        fmt_chunk = struct.pack(
            "<HHIIHH", format_tag, clip.channels, clip.sample_rate, byte_rate,
            block_align, bits,
        )
        chunks = [(b"fmt ", fmt_chunk), (b"data", payload)]
    else:
        fmt_chunk = struct.pack(
            "<HHIIHHH", format_tag, clip.channels, clip.sample_rate, byte_rate,
            block_align, bits, 0,
        )
        fact = struct.pack("<I", clip.frames)
        chunks = [(b"fmt ", fmt_chunk), (b"fact", fact), (b"data", payload)]

    body = b"".join(
        tag + struct.pack("<I", len(data)) + data + (b"\x00" if len(data) % 2 else b"")
        for tag, data in chunks
    )
    return b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body


def decode_wav(data: bytes) -> AudioClip:
    """Parse WAV bytes (PCM16 or float32) into an AudioClip."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError("not a RIFF/WAVE payload")
    pos = 12
    fmt_fields = None
    payload = None
    while pos + 8 <= len(data):
        tag = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        start = pos + 8
        if start + size > len(data):
            raise FormatError(f"truncated {tag!r} chunk")
        if tag == b"fmt ":
            if size < 16:
                raise FormatError("fmt chunk too small")
            fmt_fields = struct.unpack_from("<HHIIHH", data, start)
        elif tag == b"data":
            payload = data[start : start + size]
        pos = start + size + (size % 2)
    if fmt_fields is None or payload is None:
        raise FormatError("missing fmt or data chunk")

    format_tag, channels, sample_rate, _, _, bits = fmt_fields
    if channels < 1:
        raise FormatError("channel count must be >= 1")
    if format_tag == _FMT_PCM16 and bits == 16:
        flat = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    elif format_tag == _FMT_FLOAT32 and bits == 32:
        flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        raise FormatError(f"unsupported WAV format tag={format_tag} bits={bits}")
    if flat.size % channels:
        raise FormatError("data chunk is not a whole number of frames")
    frames = flat.reshape(-1, channels).T
    return AudioClip(frames, sample_rate)


def write_wav(path, clip: AudioClip, fmt: str = "pcm16") -> None:
    with open(path, "wb") as fh:
        fh.write(encode_wav(clip, fmt))


def read_wav(path) -> AudioClip:
    with open(path, "rb") as fh:
        return decode_wav(fh.read())


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def resample_clip(clip: AudioClip, target_rate: int) -> AudioClip:
    """Convert to target_rate with a polyphase windowed-sinc filter."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == clip.sample_rate:
        return clip
    g = math.gcd(target_rate, clip.sample_rate)
    up, down = target_rate // g, clip.sample_rate // g
    resampled = resample_poly(clip.samples, up, down, axis=1)
    return AudioClip(np.clip(resampled, -1.0, 1.0), target_rate)
