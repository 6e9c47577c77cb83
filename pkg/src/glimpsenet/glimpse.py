"""Multi-scale window construction around a head-top proposal.

Each proposal gets an ordered set of square windows: several enlarged
peripheral views, then a body-scale, an upperbody-scale and a head-scale
window, largest first. Window sides come from real-world sizes projected
through the pinhole model at the proposal's depth; the n-th peripheral side
is body_side * (1 + 0.3 * n). Windows are anchored at the head-top pixel
with a small headroom margin and cropped (never shifted) at frame borders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidDepthError
from .imaging import (CameraIntrinsics, ColorImage, DepthMap, Rect,
                      clamp_rect, project_size, round_half_up)
from .proposals import Proposal


@dataclass(frozen=True)
class GlimpseConfig:
    head_size: float = 0.30       # meters
    upper_size: float = 0.70
    body_size: float = 1.90
    peripheral_count: int = 6
    peripheral_ratio: float = 0.3
    headroom: float = 0.1         # fraction of window side above the anchor

    def __post_init__(self):
        if not (0 < self.head_size < self.upper_size < self.body_size):
            raise ConfigError("need 0 < head_size < upper_size < body_size")
        if self.peripheral_count < 0:
            raise ConfigError("peripheral_count must be >= 0")


@dataclass(frozen=True)
class GlimpseSet:
    """Ordered large-to-small windows for one proposal.

    `sides` are the pre-clamp square sides; `windows` the clamped rects;
    `scales` the matching labels (peripheral-n ... body, upperbody, head).
    The head window is always last.
    """

    proposal: Proposal
    windows: tuple[Rect, ...]
    scales: tuple[str, ...]
    sides: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.windows)


def peripheral_size(s_b: int, n: int, ratio: float = 0.3) -> int:
    """Side of the n-th peripheral window given the body-scale side s_b."""
    if s_b < 1 or n < 0:
        raise ValueError("s_b must be >= 1 and n >= 0")
    return round_half_up(s_b * (1.0 + ratio * n))


def window_for_scale(proposal: Proposal, side: int, headroom: float,
                     width: int, height: int) -> Rect:
    """Square window of `side`, horizontally centered at the proposal and
    topped `headroom * side` above it, clamped to the frame."""
    if side < 1:
        raise ValueError("side must be >= 1")
    x0 = proposal.u - side // 2
    y0 = proposal.v - round_half_up(headroom * side)
    return clamp_rect(Rect(x0, y0, side, side), width, height)


def build_glimpse_set(proposal: Proposal, intrinsics: CameraIntrinsics,
                      width: int, height: int,
                      config: GlimpseConfig | None = None) -> GlimpseSet:
    """Windows ordered peripheral n_max ... peripheral 1, body, upperbody,
    head; sequence length is peripheral_count + 3 (default 9)."""
    config = config or GlimpseConfig()
    if proposal.depth <= 0:
        raise InvalidDepthError("proposal depth must be positive")
    s_head = project_size(config.head_size, proposal.depth, intrinsics.fx)
    s_upper = project_size(config.upper_size, proposal.depth, intrinsics.fx)
    s_body = project_size(config.body_size, proposal.depth, intrinsics.fx)

    sides: list[int] = []
    scales: list[str] = []
    for n in range(config.peripheral_count, 0, -1):
        sides.append(peripheral_size(s_body, n, config.peripheral_ratio))
        scales.append(f"peripheral-{n}")
    sides.extend([s_body, s_upper, s_head])
    scales.extend(["body", "upperbody", "head"])

    windows = tuple(window_for_scale(proposal, side, config.headroom,
                                     width, height)
                    for side in sides)
    return GlimpseSet(proposal=proposal, windows=windows,
                      scales=tuple(scales), sides=tuple(sides))


def clip_patch(source, rect: Rect) -> np.ndarray:
    """Copy the sub-window `rect` out of a DepthMap, ColorImage or 2-D/3-D
    array. A zero-area rect yields the empty-patch sentinel (a zero-size
    array); a rect outside the frame is a contract violation.
    """
    if isinstance(source, (DepthMap, ColorImage)):
        arr = source.data
    else:
        arr = np.asarray(source)
    height, width = arr.shape[:2]
    if rect.is_empty:
        shape = (0, 0) + arr.shape[2:]
        return np.empty(shape, dtype=arr.dtype)
    if not (0 <= rect.x0 and rect.x0 + rect.w <= width
            and 0 <= rect.y0 and rect.y0 + rect.h <= height):
        raise ValueError(f"rect {rect} outside {width}x{height} bounds")
    return arr[rect.y0:rect.y0 + rect.h, rect.x0:rect.x0 + rect.w].copy()
