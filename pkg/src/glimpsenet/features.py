"""Deterministic patch-to-vector feature extraction.

Each clipped patch becomes a fixed-length vector: color patches are reduced
to luminance, depth patches to raw millimeters (invalid -> 0); the result
is bilinearly resized to a G x G grid, standardized to zero mean and unit
population variance, and flattened row-major (D = G * G). Degenerate
patches (constant, or fully clamped away) map to the all-zeros vector.

The extractor is intentionally simple and fully deterministic so the rest
of the pipeline can be tested exactly; a learned extractor can be swapped
in behind `extract_patch` without touching anything downstream. Vectors are
standardized per patch rather than L2-normalized.

Feature batches are stored in a binary container (see `save_features`):
magic "MGFT", version u16, record count u32, T u16, D u32, all
little-endian, then per record an image index u32, a proposal index u32, a
label byte (0, 1, or 255 = unlabeled) and 2*T*D float32 values, color rows
first, then depth rows.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .glimpse import GlimpseSet, clip_patch
from .imaging import ColorImage, DepthMap, _atomic_write

_MAGIC = b"MGFT"
_VERSION = 1
_HEADER = struct.Struct("<4sHIHI")
_RECORD_HEAD = struct.Struct("<IIB")

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class ExtractorConfig:
    grid: int = 16

    def __post_init__(self):
        if self.grid < 2:
            raise ValueError("grid must be >= 2")

    @property
    def dim(self) -> int:
        return self.grid * self.grid


@dataclass
class FeatureSequence:
    """Per-modality T x D feature matrices for one proposal, rows ordered
    large-to-small to match the glimpse windows."""

    color: np.ndarray
    depth: np.ndarray
    label: int | None = None
    proposal_id: tuple[int, int] = (0, 0)

    def __post_init__(self):
        self.color = np.ascontiguousarray(self.color, dtype=np.float64)
        self.depth = np.ascontiguousarray(self.depth, dtype=np.float64)
        if self.color.shape != self.depth.shape or self.color.ndim != 2:
            raise ValueError("color and depth must share a 2-D (T, D) shape")
        if self.label not in (None, 0, 1):
            raise ValueError("label must be None, 0 or 1")

    @property
    def steps(self) -> int:
        return self.color.shape[0]

    @property
    def dim(self) -> int:
        return self.color.shape[1]


def bilinear_resize(values: np.ndarray, grid: int) -> np.ndarray:
    """Separable bilinear resize to grid x grid, endpoint-aligned so that a
    grid x grid input is reproduced exactly."""
    src = np.asarray(values, dtype=np.float64)
    h, w = src.shape

    def _coords(n_src: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if n_src == 1:
            zero = np.zeros(grid, dtype=np.int64)
            return zero, zero, np.zeros(grid)
        pos = np.arange(grid) * (n_src - 1) / (grid - 1)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, n_src - 1)
        return lo, hi, pos - lo

    y0, y1, wy = _coords(h)
    x0, x1, wx = _coords(w)
    rows = src[y0, :] * (1.0 - wy)[:, None] + src[y1, :] * wy[:, None]
    return rows[:, x0] * (1.0 - wx)[None, :] + rows[:, x1] * wx[None, :]


def _standardize(values: np.ndarray) -> np.ndarray:
    mean = values.mean()
    var = np.mean((values - mean) ** 2)  # population variance
    if var < 1e-12:
        return np.zeros_like(values)
    return (values - mean) / np.sqrt(var)


def extract_patch(patch: np.ndarray, modality: str,
                  config: ExtractorConfig | None = None) -> np.ndarray:
    """Feature vector (length grid**2) for one clipped patch.

    `modality` is "color" (expects H x W x 3 uint8) or "depth" (H x W
    millimeters). The empty-patch sentinel yields the all-zeros vector.
    """
    config = config or ExtractorConfig()
    if modality not in ("color", "depth"):
        raise ValueError("modality must be 'color' or 'depth'")
    patch = np.asarray(patch)
    if patch.size == 0:
        return np.zeros(config.dim)
    if modality == "color":
        if patch.ndim != 3 or patch.shape[2] != 3:
            raise ValueError("color patch must have shape (h, w, 3)")
        plane = patch.astype(np.float64) @ _LUMA
    else:
        if patch.ndim != 2:
            raise ValueError("depth patch must be 2-D")
        plane = patch.astype(np.float64)
    resized = bilinear_resize(plane, config.grid)
    return _standardize(resized).reshape(-1)


def extract_sequence(glimpse_set: GlimpseSet, color_image: ColorImage,
                     depth_map: DepthMap,
                     config: ExtractorConfig | None = None) -> FeatureSequence:
    """Row t of each matrix is the feature of window t, in glimpse order."""
    config = config or ExtractorConfig()
    color_rows = []
    depth_rows = []
    for rect in glimpse_set.windows:
        color_rows.append(extract_patch(clip_patch(color_image, rect),
                                        "color", config))
        depth_rows.append(extract_patch(clip_patch(depth_map, rect),
                                        "depth", config))
    return FeatureSequence(color=np.vstack(color_rows),
                           depth=np.vstack(depth_rows))


# ---------------------------------------------------------------------------
# Binary container

def save_features(path, sequences: list[FeatureSequence]) -> None:
    if not sequences:
        raise ValueError("refusing to write an empty feature file")
    steps, dim = sequences[0].steps, sequences[0].dim
    chunks = [_HEADER.pack(_MAGIC, _VERSION, len(sequences), steps, dim)]
    for seq in sequences:
        if seq.steps != steps or seq.dim != dim:
            raise FormatError(
                f"record shape ({seq.steps}, {seq.dim}) does not match the "
                f"header shape ({steps}, {dim})", path=path)
        label = 255 if seq.label is None else int(seq.label)
        chunks.append(_RECORD_HEAD.pack(seq.proposal_id[0],
                                        seq.proposal_id[1], label))
        chunks.append(seq.color.astype("<f4").tobytes())
        chunks.append(seq.depth.astype("<f4").tobytes())
    _atomic_write(path, b"".join(chunks))


def load_features(path) -> list[FeatureSequence]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", path=path, offset=len(data))
    magic, version, count, steps, dim = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise FormatError("bad magic, expected MGFT", path=path, offset=0)
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", path=path,
                          offset=4)
    offset = _HEADER.size
    matrix_bytes = steps * dim * 4
    out = []
    for _ in range(count):
        need = _RECORD_HEAD.size + 2 * matrix_bytes
        if len(data) - offset < need:
            raise FormatError("truncated payload", path=path,
                              offset=len(data))
        img_idx, prop_idx, label = _RECORD_HEAD.unpack_from(data, offset)
        offset += _RECORD_HEAD.size
        if label not in (0, 1, 255):
            raise FormatError(f"bad label byte {label}", path=path,
                              offset=offset - 1)
        color = np.frombuffer(data, dtype="<f4", count=steps * dim,
                              offset=offset).reshape(steps, dim)
        offset += matrix_bytes
        depth = np.frombuffer(data, dtype="<f4", count=steps * dim,
                              offset=offset).reshape(steps, dim)
        offset += matrix_bytes
        out.append(FeatureSequence(
            color=color, depth=depth,
            label=None if label == 255 else int(label),
            proposal_id=(img_idx, prop_idx)))
    return out
