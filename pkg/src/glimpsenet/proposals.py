"""Depth-driven head-top proposal generation.

Every pixel of a depth frame is tested as a potential human head-top. The
test is a geometric heuristic built from a real head width, the pinhole
model, and depth continuity:

  (a) the pixel has a valid depth z;
  (b) top-free: the band of width w above the pixel contains nothing at a
      depth compatible with z (w is the projected head width at z);
  (c) head-fill: the w x w window hanging below the pixel is mostly filled
      with depths close to z.

Surviving candidates are thinned by greedy nearest-first suppression, so
the frontmost head-top anchors each neighborhood. Invalid pixels count as
free space in (b) and as misses in (c): sensor holes above heads are
common, holes inside heads are not.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .imaging import CameraIntrinsics, DepthMap, project_size


@dataclass(frozen=True)
class Proposal:
    """Candidate head-top pixel with the depth measured there."""

    u: int
    v: int
    depth: int

    def __post_init__(self):
        if self.depth <= 0:
            raise ValueError("proposal depth must be positive")


@dataclass(frozen=True)
class ProposalParams:
    head_width: float = 0.25          # meters
    depth_tolerance: int = 300        # millimeters
    fill_ratio: float = 0.6
    top_margin: int = 400             # millimeters
    suppression_radius_factor: float = 0.5

    def __post_init__(self):
        if not (0 < self.fill_ratio <= 1):
            raise ConfigError("fill_ratio must lie in (0, 1]")
        if self.head_width <= 0:
            raise ConfigError("head_width must be positive")


def _passes_head_top(depth: np.ndarray, u: int, v: int, z: int, w: int,
                     params: ProposalParams) -> bool:
    """Conditions (b) and (c) for a pixel already known to have depth z > 0.

    `w` is the projected head width at z. Out-of-bounds band rows/columns
    are treated as free.
    """
    height, width = depth.shape
    half = w // 2
    x0 = max(0, u - half)
    x1 = min(width, u - half + w)

    band = depth[max(0, v - half):v, x0:x1]
    if band.size:
        band = band.astype(np.int64)
        if np.any((band > 0) & (band <= z + params.top_margin)):
            return False

    window = depth[v:min(height, v + w), x0:x1]
    window = window.astype(np.int64)
    filled = (window > 0) & (np.abs(window - z) <= params.depth_tolerance)
    return (int(filled.sum()) / window.size) >= params.fill_ratio


def is_head_top(depth_map: DepthMap, u: int, v: int,
                intrinsics: CameraIntrinsics,
                params: ProposalParams | None = None) -> bool:
    """True iff pixel (u, v) passes all head-top plausibility conditions."""
    params = params or ProposalParams()
    if not (0 <= u < depth_map.width and 0 <= v < depth_map.height):
        raise ValueError("pixel out of bounds")
    z = int(depth_map.data[v, u])
    if z == 0:
        return False
    w = project_size(params.head_width, z, intrinsics.fx)
    return _passes_head_top(depth_map.data, u, v, z, w, params)


def _candidate_mask(depth: np.ndarray, fx: float,
                    params: ProposalParams) -> np.ndarray:
    """Vectorized necessary condition: valid depth, and the pixel directly
    above is free whenever the top band is non-empty. Exact conditions are
    re-checked per candidate."""
    z = depth.astype(np.int64)
    valid = z > 0
    scale = fx * params.head_width * 1000.0
    w = np.maximum(1, np.floor(
        scale / np.where(valid, z, 1) + 0.5)).astype(np.int64)
    half = w // 2

    above_free = np.ones_like(valid)
    a = z[:-1, :]
    c = z[1:, :]
    above_free[1:, :] = ~((a > 0) & (a <= c + params.top_margin))

    return valid & ((half == 0) | above_free)


def generate_proposals(depth_map: DepthMap, intrinsics: CameraIntrinsics,
                       params: ProposalParams | None = None) -> list[Proposal]:
    """Scan every pixel, keep head-top candidates, then greedily suppress.

    Candidates are visited nearest-first (depth ascending, ties row-major)
    and kept only if no kept candidate lies within
    suppression_radius_factor * w pixels, Euclidean, where w is the
    candidate's own projected head width. The kept list is returned sorted
    by (v, u). Deterministic for identical inputs.
    """
    params = params or ProposalParams()
    depth = depth_map.data
    mask = _candidate_mask(depth, intrinsics.fx, params)
    vs, us = np.nonzero(mask)
    if len(vs) == 0:
        return []

    zs = depth[vs, us].astype(np.int64)
    ws = np.maximum(1, np.floor(
        intrinsics.fx * params.head_width * 1000.0 / zs + 0.5)).astype(np.int64)

    survivors = []
    for u, v, z, w in zip(us.tolist(), vs.tolist(), zs.tolist(), ws.tolist()):
        if _passes_head_top(depth, u, v, z, w, params):
            survivors.append((z, v, u, w))
    if not survivors:
        return []

    survivors.sort()  # depth ascending, then (v, u) row-major
    kept_u: list[int] = []
    kept_v: list[int] = []
    kept: list[Proposal] = []
    for z, v, u, w in survivors:
        if kept:
            du = np.asarray(kept_u) - u
            dv = np.asarray(kept_v) - v
            radius = params.suppression_radius_factor * w
            if np.any(du * du + dv * dv <= radius * radius):
                continue
        kept_u.append(u)
        kept_v.append(v)
        kept.append(Proposal(u=u, v=v, depth=z))

    kept.sort(key=lambda p: (p.v, p.u))
    return kept


# ---------------------------------------------------------------------------
# JSON Lines serialization: {"image_id","u","v","depth_mm"} per line.

def save_proposals_jsonl(path, items) -> None:
    """`items` is an iterable of (image_id, Proposal) pairs, written in order."""
    lines = []
    for image_id, prop in items:
        lines.append(json.dumps(
            {"image_id": image_id, "u": prop.u, "v": prop.v,
             "depth_mm": prop.depth},
            sort_keys=True))
    payload = ("\n".join(lines) + "\n") if lines else ""
    from .imaging import _atomic_write
    _atomic_write(path, payload.encode())


def load_proposals_jsonl(path) -> list[tuple[str, Proposal]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            out.append((raw["image_id"],
                        Proposal(u=int(raw["u"]), v=int(raw["v"]),
                                 depth=int(raw["depth_mm"]))))
    return out
