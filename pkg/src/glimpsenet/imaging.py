"""Calibrated RGB-D frame containers, pinhole size projection, rectangle
arithmetic, and bit-exact image file IO.

Depth frames hold integer millimeters (0 = invalid / no sensor return) and
are stored on disk as binary PGM "P5", maxval 65535, big-endian 16-bit
samples. Color frames are 8-bit RGB stored as binary PPM "P6", maxval 255.
Camera intrinsics live in a small JSON file {"fx","fy","cx","cy"}.

All containers are immutable after construction and all operations here are
pure, so concurrent use over shared frames is safe.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvalidDepthError

# Conventional Kinect-VGA calibration; real rigs should load their own file.
DEFAULT_INTRINSICS_FIELDS = {"fx": 525.0, "fy": 525.0, "cx": 319.5, "cy": 239.5}

_WHITESPACE = b" \t\n\r\x0b\x0c"


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole focal lengths and principal point, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(**DEFAULT_INTRINSICS_FIELDS)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle; (x0, y0) inclusive top-left, w x h extent."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError("rectangle extent must be non-negative")

    @property
    def is_empty(self) -> bool:
        return self.w == 0 or self.h == 0

    @property
    def area(self) -> int:
        return self.w * self.h


class DepthMap:
    """Row-major depth frame in integer millimeters; 0 marks invalid pixels."""

    def __init__(self, data):
        arr = np.asarray(data)
        if arr.ndim != 2:
            raise ValueError("depth data must be a 2-D array")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("depth map must have positive dimensions")
        if arr.dtype != np.uint16:
            if np.issubdtype(arr.dtype, np.floating):
                raise ValueError("depth values must be integers (millimeters)")
            if arr.min() < 0 or arr.max() > 65535:
                raise ValueError("depth values must lie in [0, 65535]")
            arr = arr.astype(np.uint16)
        arr = arr.copy()
        arr.setflags(write=False)
        self._data = arr

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def data(self) -> np.ndarray:
        return self._data


class ColorImage:
    """Row-major 8-bit RGB frame."""

    def __init__(self, data):
        arr = np.asarray(data)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError("color data must have shape (height, width, 3)")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("color image must have positive dimensions")
        if arr.dtype != np.uint8:
            if arr.min() < 0 or arr.max() > 255:
                raise ValueError("color samples must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = arr.copy()
        arr.setflags(write=False)
        self._data = arr

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def data(self) -> np.ndarray:
        return self._data


def round_half_up(x: float) -> int:
    """Deterministic tie-break used for every pixel-size projection."""
    return int(math.floor(x + 0.5))


def project_size(real_size: float, depth_mm: int, fx: float) -> int:
    """Pixel extent of an object of `real_size` meters seen at `depth_mm`.

    Pinhole model: px = fx * size_mm / depth_mm, rounded half-up, with a
    floor of one pixel so downstream windows never degenerate.
    """
    if depth_mm == 0:
        raise InvalidDepthError("cannot project a size at invalid depth 0")
    if depth_mm < 0 or real_size <= 0:
        raise ValueError("depth must be positive, real_size must be > 0")
    return max(1, round_half_up(fx * real_size * 1000.0 / depth_mm))


def clamp_rect(rect: Rect, width: int, height: int) -> Rect:
    """Intersection of `rect` with [0, width) x [0, height).

    Each side is clamped independently: the window is cropped in place,
    never shifted. An empty intersection yields a zero-area Rect.
    """
    if width <= 0 or height <= 0:
        raise ValueError("bounds must be positive")
    x0 = min(max(rect.x0, 0), width)
    y0 = min(max(rect.y0, 0), height)
    x1 = min(max(rect.x0 + rect.w, 0), width)
    y1 = min(max(rect.y0 + rect.h, 0), height)
    return Rect(x0, y0, max(0, x1 - x0), max(0, y1 - y0))


# ---------------------------------------------------------------------------
# PNM parsing

def _skip_pnm_filler(data: bytes, pos: int) -> int:
    """Advance past whitespace and '#' comment lines."""
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c in (b"#",):
            while pos < n and data[pos:pos + 1] != b"\n":
                pos += 1
        elif c in _WHITESPACE:
            pos += 1
        else:
            break
    return pos


def _read_pnm_int(data: bytes, pos: int, path) -> tuple[int, int]:
    pos = _skip_pnm_filler(data, pos)
    start = pos
    while pos < len(data) and data[pos:pos + 1].isdigit():
        pos += 1
    if pos == start:
        raise FormatError("expected an unsigned decimal header field",
                          path=path, offset=start)
    return int(data[start:pos]), pos


def _parse_pnm(data: bytes, magic: bytes, expected_maxval: int, path):
    """Returns (width, height, payload offset) or raises FormatError."""
    if len(data) < 2 or data[:2] != magic:
        raise FormatError(f"bad magic, expected {magic.decode()}",
                          path=path, offset=0)
    width, pos = _read_pnm_int(data, 2, path)
    height, pos = _read_pnm_int(data, pos, path)
    maxval, pos = _read_pnm_int(data, pos, path)
    if width <= 0 or height <= 0:
        raise FormatError("image dimensions must be positive",
                          path=path, offset=2)
    if maxval != expected_maxval:
        raise FormatError(f"maxval must be {expected_maxval}, got {maxval}",
                          path=path, offset=pos)
    if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
        raise FormatError("expected single whitespace before payload",
                          path=path, offset=pos)
    return width, height, pos + 1


def _atomic_write(path, payload: bytes) -> None:
    """Write via a sibling temp file and rename, so readers never observe
    a half-written file."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def load_depth_pgm(path) -> DepthMap:
    with open(path, "rb") as fh:
        data = fh.read()
    width, height, offset = _parse_pnm(data, b"P5", 65535, path)
    need = width * height * 2
    if len(data) - offset < need:
        raise FormatError("truncated payload", path=path, offset=len(data))
    samples = np.frombuffer(data, dtype=">u2", count=width * height,
                            offset=offset)
    return DepthMap(samples.astype(np.uint16).reshape(height, width))


def save_depth_pgm(depth_map: DepthMap, path) -> None:
    header = b"P5\n%d %d\n65535\n" % (depth_map.width, depth_map.height)
    payload = depth_map.data.astype(">u2").tobytes()
    _atomic_write(path, header + payload)


def load_color_ppm(path) -> ColorImage:
    with open(path, "rb") as fh:
        data = fh.read()
    width, height, offset = _parse_pnm(data, b"P6", 255, path)
    need = width * height * 3
    if len(data) - offset < need:
        raise FormatError("truncated payload", path=path, offset=len(data))
    samples = np.frombuffer(data, dtype=np.uint8, count=need, offset=offset)
    return ColorImage(samples.reshape(height, width, 3))


def save_color_ppm(image: ColorImage, path) -> None:
    header = b"P6\n%d %d\n255\n" % (image.width, image.height)
    _atomic_write(path, header + image.data.tobytes())


def load_intrinsics(path) -> CameraIntrinsics:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid intrinsics JSON: {exc}", path=path)
    try:
        return CameraIntrinsics(fx=float(raw["fx"]), fy=float(raw["fy"]),
                                cx=float(raw["cx"]), cy=float(raw["cy"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid intrinsics fields: {exc}", path=path)


def save_intrinsics(intrinsics: CameraIntrinsics, path) -> None:
    doc = {"fx": intrinsics.fx, "fy": intrinsics.fy,
           "cx": intrinsics.cx, "cy": intrinsics.cy}
    _atomic_write(path, (json.dumps(doc, sort_keys=True) + "\n").encode())
