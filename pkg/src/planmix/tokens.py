"""Semantic-token codec and extended-vocabulary layer.

Continuous feature frames are quantized against a k-means codebook into
discrete indices; indices serialize as ``<AUD_X>`` token strings that an
LLM's extended vocabulary can emit, and decode back to centroid frames. The
module also carries the frame-rate arithmetic (50 Hz audio tokens vs 21.5 Hz
visual frames; the two sequences have different lengths and are never
implicitly resampled), the temporal-connector math (1-D convolution plus
projection), and the autoregressive NLL objective over externally supplied
logits. No pretrained encoders are bundled: features arrive as files (see
planmix.features).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    IndexOutOfRange,
    InsufficientData,
    MalformedToken,
    ShapeMismatch,
)

DEFAULT_CODEBOOK_SIZE = 500
AUDIO_TOKEN_RATE_HZ = 50.0
VISUAL_FRAME_RATE_HZ = 21.5

TOKEN_VIDEO_OPEN = "<Video>"
TOKEN_VIDEO_CLOSE = "</Video>"
TOKEN_CAPTION_OPEN = "<Caption>"
TOKEN_CAPTION_CLOSE = "</Caption>"
TOKEN_EOS = "<eos>"
SPECIAL_TOKENS = (
    TOKEN_VIDEO_OPEN,
    TOKEN_VIDEO_CLOSE,
    TOKEN_CAPTION_OPEN,
    TOKEN_CAPTION_CLOSE,
    TOKEN_EOS,
)

_AUD_TOKEN_RE = re.compile(r"<AUD_(\d+)>")


@dataclass(frozen=True)
class Codebook:
    """K centroids of dimension D."""

    centroids: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.centroids, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValueError("codebook needs at least one centroid row")
        if not np.all(np.isfinite(data)):
            raise ValueError("centroids must be finite")
        if len(np.unique(data, axis=0)) != data.shape[0]:
            raise ValueError("centroid rows must be distinct")
        object.__setattr__(self, "centroids", data)

    @property
    def size(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class FrameSequence:
    """N feature vectors of dimension D at a fixed frame rate."""

    frames: np.ndarray
    frame_rate: float

    def __post_init__(self):
        data = np.asarray(self.frames, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError("frames must be 2-D (N, D)")
        object.__setattr__(self, "frames", data)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class AcousticTokenSequence:
    indices: tuple[int, ...]
    frame_rate: float = AUDIO_TOKEN_RATE_HZ

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class VocabularyMap:
    """Text vocabulary extended with modality indicators and audio codes.

    Ids are contiguous: text ids occupy [0, text_vocab_size); the acoustic
    block starts at ``acoustic_offset`` with the special tokens followed by
    the ``<AUD_X>`` codes, so the full space [0, total_size) is a bijection.
    """

    text_vocab_size: int
    num_codes: int = DEFAULT_CODEBOOK_SIZE
    special_tokens: tuple[str, ...] = field(default=SPECIAL_TOKENS)

    def __post_init__(self):
        if self.text_vocab_size < 0 or self.num_codes < 1:
            raise ValueError("vocabulary sizes must be positive")

    @property
    def acoustic_offset(self) -> int:
        return self.text_vocab_size

    @property
    def total_size(self) -> int:
        return self.text_vocab_size + len(self.special_tokens) + self.num_codes

    def is_text_id(self, token_id: int) -> bool:
        return 0 <= token_id < self.text_vocab_size

    def token_to_id(self, token: str) -> int:
        if token in self.special_tokens:
            return self.acoustic_offset + self.special_tokens.index(token)
        match = _AUD_TOKEN_RE.fullmatch(token)
        if not match:
            raise MalformedToken(f"not an acoustic token: {token!r}")
        code = int(match.group(1))
        if code >= self.num_codes:
            raise IndexOutOfRange(f"<AUD_{code}> outside 0..{self.num_codes - 1}")
        return self.acoustic_offset + len(self.special_tokens) + code

    def id_to_token(self, token_id: int) -> str:
        if not (self.acoustic_offset <= token_id < self.total_size):
            raise IndexOutOfRange(
                f"id {token_id} outside the acoustic range "
                f"[{self.acoustic_offset}, {self.total_size})"
            )
        local = token_id - self.acoustic_offset
        if local < len(self.special_tokens):
            return self.special_tokens[local]
        return f"<AUD_{local - len(self.special_tokens)}>"


# ---------------------------------------------------------------------------
# Quantization
# ---------------------------------------------------------------------------

def _nearest_centroids(frames: np.ndarray, centroids: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Exact squared-distance argmin per frame; ties go to the lowest index."""
    out = np.empty(frames.shape[0], dtype=np.int64)
    for start in range(0, frames.shape[0], chunk):
        block = frames[start : start + chunk]
        d2 = np.sum((block[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        out[start : start + chunk] = np.argmin(d2, axis=1)
    return out


def quantize(features: FrameSequence, codebook: Codebook) -> AcousticTokenSequence:
    """Map each frame to its nearest centroid under squared Euclidean distance."""
    if len(features) and features.dim != codebook.dim:
        raise DimensionMismatch(
            f"features have dim {features.dim}, codebook has dim {codebook.dim}"
        )
    if len(features) == 0:
        return AcousticTokenSequence(indices=(), frame_rate=features.frame_rate)
    indices = _nearest_centroids(features.frames, codebook.centroids)
    return AcousticTokenSequence(
        indices=tuple(int(i) for i in indices), frame_rate=features.frame_rate
    )


def dequantize(tokens: AcousticTokenSequence, codebook: Codebook) -> FrameSequence:
    """Fetch the centroid row for each index."""
    for i in tokens.indices:
        if not (0 <= i < codebook.size):
            raise IndexOutOfRange(f"token index {i} outside 0..{codebook.size - 1}")
    if not tokens.indices:
        return FrameSequence(np.empty((0, codebook.dim)), tokens.frame_rate)
    frames = codebook.centroids[np.array(tokens.indices)]
    return FrameSequence(frames, tokens.frame_rate)


def tokens_for_duration(duration: float, token_rate: float = AUDIO_TOKEN_RATE_HZ) -> int:
    """Number of tokens a clip of this length produces."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    return int(round(duration * token_rate))


# ---------------------------------------------------------------------------
# Token strings
# ---------------------------------------------------------------------------

def encode_token_string(indices, num_codes: int = DEFAULT_CODEBOOK_SIZE) -> str:
    """Indices -> concatenated "<AUD_X>" text."""
    out = []
    for i in indices:
        if not (0 <= i < num_codes):
            raise IndexOutOfRange(f"index {i} outside 0..{num_codes - 1}")
        out.append(f"<AUD_{int(i)}>")
    return "".join(out)


def decode_token_string(text: str, num_codes: int = DEFAULT_CODEBOOK_SIZE) -> tuple[int, ...]:
    """Concatenated "<AUD_X>" text -> indices; rejects any other content."""
    pos = 0
    indices: list[int] = []
    while pos < len(text):
        match = _AUD_TOKEN_RE.match(text, pos)
        if not match:
            raise MalformedToken(f"unexpected content at offset {pos}: {text[pos:pos+16]!r}")
        code = int(match.group(1))
        if code >= num_codes:
            raise IndexOutOfRange(f"<AUD_{code}> outside 0..{num_codes - 1}")
        indices.append(code)
        pos = match.end()
    return tuple(indices)


def wrap_vta_prompt(
    video_embedding_placeholder: str,
    caption: str,
    template: str | None = None,
) -> str:
    """Fill the video-to-audio instruction prompt with caption and video slot."""
    if not caption.strip():
        raise ValueError("caption must be non-empty")
    if template is None:
        template = (
            resources.files("planmix") / "assets" / "vta_instruction.txt"
        ).read_text(encoding="utf-8")
    return template.replace("<VideoHere>", video_embedding_placeholder).replace(
        "<CaptionHere>", caption
    )


# ---------------------------------------------------------------------------
# Objective and connector math
# ---------------------------------------------------------------------------

def nll_loss(logits, targets) -> float:
    """Summed negative log-likelihood of targets under row-wise softmax.

    Numerically stable (max-subtracted log-sum-exp per row).
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.ndim != 1 or logits.shape[0] != targets.shape[0]:
        raise ShapeMismatch(
            f"logits {logits.shape} do not pair with targets {targets.shape}"
        )
    if not np.all(np.isfinite(logits)):
        raise ShapeMismatch("logits must be finite")
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        raise IndexOutOfRange("target id outside the vocabulary")
    row_max = logits.max(axis=1, keepdims=True)
    log_z = row_max[:, 0] + np.log(np.exp(logits - row_max).sum(axis=1))
    picked = logits[np.arange(targets.size), targets]
    return float(np.sum(log_z - picked))


def temporal_aggregate(features: FrameSequence, kernel, projection) -> FrameSequence:
    """1-D convolution over time (zero-padded, same length), then projection.

    The kernel (odd width w) is shared across channels, applied as a sliding
    correlation; the projection matrix (D, E) maps each frame into the target
    embedding space. Temporal order is preserved.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    projection = np.asarray(projection, dtype=np.float64)
    if kernel.ndim != 1 or kernel.size % 2 != 1:
        raise ShapeMismatch("kernel must be 1-D with odd width")
    if len(features) < 1:
        raise ShapeMismatch("need at least one frame")
    if projection.ndim != 2 or projection.shape[0] != features.dim:
        raise ShapeMismatch(
            f"projection {projection.shape} does not map dim {features.dim}"
        )
    half = kernel.size // 2
    padded = np.pad(features.frames, ((half, half), (0, 0)))
    n = len(features)
    mixed = np.zeros_like(features.frames)
    for j, weight in enumerate(kernel):
        mixed += weight * padded[j : j + n]
    return FrameSequence(mixed @ projection, features.frame_rate)


def mean_pool_frame(patches) -> np.ndarray:
    """Arithmetic mean over the patch vectors of one frame."""
    grid = np.asarray(patches, dtype=np.float64)
    if grid.size == 0:
        raise EmptyInput("cannot pool an empty patch grid")
    if grid.ndim == 1:
        grid = grid[np.newaxis, :]
    return grid.reshape(-1, grid.shape[-1]).mean(axis=0)


# ---------------------------------------------------------------------------
# Codebook fitting
# ---------------------------------------------------------------------------

def fit_codebook(
    features: FrameSequence, k: int, iterations: int = 50, seed: int = 0
) -> Codebook:
    """Lloyd's algorithm with distance-weighted (k-means++ style) seeding.

    Deterministic for a fixed seed; inertia is non-increasing across
    iterations. Empty clusters are reseeded from the point currently worst
    represented.
    """
    data = features.frames
    n = data.shape[0]
    if n < k:
        raise InsufficientData(f"{n} frames cannot support {k} centroids")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, data.shape[1]))
    centroids[0] = data[rng.integers(n)]
    closest_d2 = np.sum((data - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest_d2.sum()
        if total > 0:
            choice = rng.choice(n, p=closest_d2 / total)
        else:  # all remaining points coincide with chosen centroids
            choice = rng.integers(n)
        centroids[i] = data[choice]
        closest_d2 = np.minimum(closest_d2, np.sum((data - centroids[i]) ** 2, axis=1))

    assignments = None
    for _ in range(max(1, iterations)):
        new_assignments = _nearest_centroids(data, centroids)
        for j in range(k):
            members = data[new_assignments == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
            else:
                d2 = np.sum((data - centroids[new_assignments]) ** 2, axis=1)
                worst = int(np.argmax(d2))
                centroids[j] = data[worst]
                new_assignments[worst] = j
        if assignments is not None and np.array_equal(assignments, new_assignments):
            break
        assignments = new_assignments
    return Codebook(centroids)


def codebook_inertia(features: FrameSequence, codebook: Codebook) -> float:
    """Sum of squared distances from each frame to its nearest centroid."""
    if len(features) == 0:
        return 0.0
    idx = _nearest_centroids(features.frames, codebook.centroids)
    return float(np.sum((features.frames - codebook.centroids[idx]) ** 2))
