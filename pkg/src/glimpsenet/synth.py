"""Deterministic synthetic RGB-D scenes with ground-truth head-tops.

Scenes are painted, not ray-traced: a background plane, box-shaped clutter
distractors, and humans built from a head disc stacked on a torso/leg slab,
rendered far-to-near so nearer entities occlude farther ones. Truncated
Gaussian depth noise and flat per-entity colors with pixel noise are added
last. Everything derives from a SplitMix64 stream, so (spec, seed) fixes
the output bit-for-bit.

The camera sits `CAMERA_HEIGHT_M` above the floor looking along the depth
axis; humans stand on the floor. Clutter is confined to the lower part of
the frame so it never occludes a head band, which keeps ground truth
well-defined while still feeding hard negatives to the detector.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .evaluation import GroundTruth, save_ground_truth_jsonl
from .imaging import (CameraIntrinsics, ColorImage, DepthMap, _atomic_write,
                      default_intrinsics, save_color_ppm, save_depth_pgm,
                      save_intrinsics)
from .rng import SplitMix64

CAMERA_HEIGHT_M = 1.4


@dataclass(frozen=True)
class HumanSpec:
    x: float                  # lateral position, meters
    z: float                  # depth, meters
    height: float = 1.7
    head_w: float = 0.25
    shoulder_w: float = 0.5

    def __post_init__(self):
        if self.z <= 0:
            raise ConfigError("human depth must be positive")
        if self.height <= self.head_w:
            raise ConfigError("human height must exceed the head size")


@dataclass(frozen=True)
class SceneSpec:
    humans: tuple[HumanSpec, ...] = ()
    background_depth: int = 6000      # millimeters
    clutter: int = 0
    noise_sigma: float = 10.0         # millimeters
    seed: int = 0
    # "box" distractors are plain rectangles; "bust" distractors are a
    # head-sized disc on a shoulder slab with no body below, so a head-scale
    # crop of a bust is indistinguishable from a real head and only the
    # larger-context windows can separate them.
    clutter_shape: str = "box"

    def __post_init__(self):
        if self.clutter_shape not in ("box", "bust"):
            raise ConfigError("clutter_shape must be 'box' or 'bust'")
        for a_i, a in enumerate(self.humans):
            for b in self.humans[a_i + 1:]:
                # "equal depth" means within 0.3 m here
                if abs(a.z - b.z) < 0.3 and abs(a.x - b.x) < 0.6:
                    raise ConfigError(
                        "humans at equal depth must be separated by "
                        ">= 0.6 m laterally")


def _paint_human(depth_mm, entity, human: HumanSpec,
                 intrinsics: CameraIntrinsics, entity_id: int):
    """Rasterize one human; returns the head-disc mask (pre-occlusion)."""
    height_px, width_px = depth_mm.shape
    z_mm = int(round(human.z * 1000.0))
    fx, fy = intrinsics.fx, intrinsics.fy
    u_c = intrinsics.cx + fx * human.x / human.z
    # head-top sits (height - camera height) above the optical axis
    v_top = intrinsics.cy + fy * (CAMERA_HEIGHT_M - human.height) / human.z
    head_r = 0.5 * fx * human.head_w / human.z
    v_head_c = v_top + head_r

    ys = np.arange(height_px, dtype=np.float64)[:, None]
    xs = np.arange(width_px, dtype=np.float64)[None, :]
    head = ((xs - u_c) ** 2 + (ys - v_head_c) ** 2) <= head_r ** 2

    torso_half = 0.5 * fx * human.shoulder_w / human.z
    v_neck = v_top + 2.0 * head_r
    v_floor = intrinsics.cy + fy * CAMERA_HEIGHT_M / human.z
    torso = ((np.abs(xs - u_c) <= torso_half)
             & (ys >= v_neck) & (ys <= v_floor))

    mask = head | torso
    depth_mm[mask] = z_mm
    entity[mask] = entity_id
    return head


def _head_top_pixel(head_mask) -> tuple[int, int] | None:
    """Topmost head pixel in the column of the topmost row; None when the
    head never enters the frame."""
    rows = np.nonzero(head_mask.any(axis=1))[0]
    if len(rows) == 0:
        return None
    v = int(rows[0])
    cols = np.nonzero(head_mask[v])[0]
    u = int(cols[len(cols) // 2])
    return u, v


def render_scene(spec: SceneSpec, intrinsics: CameraIntrinsics,
                 width: int, height: int
                 ) -> tuple[DepthMap, ColorImage, GroundTruth, list[dict]]:
    """Paint one scene. Returns (depth, color, truth, warnings); warnings
    record humans dropped from the ground truth because their head never
    projects into the frame."""
    rng = SplitMix64(spec.seed)
    depth_mm = np.full((height, width), spec.background_depth,
                       dtype=np.float64)
    entity = np.zeros((height, width), dtype=np.int32)

    # clutter: depth >= 1000 mm, confined to the lower frame band so
    # distractors never occlude a head or fall inside a labeling radius
    boxes = []
    for _ in range(spec.clutter):
        z = 1.0 + rng.uniform01() * 4.5
        if spec.clutter_shape == "bust":
            size_w = 0.2 + rng.uniform01() * 0.12  # head-like diameter
            size_h = size_w
        else:
            size_w = 0.15 + rng.uniform01() * 0.35
            size_h = 0.15 + rng.uniform01() * 0.35
        u0 = rng.uniform01() * width
        v0 = height * (0.65 + rng.uniform01() * 0.25)
        boxes.append((z, size_w, size_h, u0, v0))

    entities: list[tuple[float, str, object]] = []
    for i, human in enumerate(spec.humans):
        entities.append((human.z, "human", (i, human)))
    for j, box in enumerate(boxes):
        entities.append((box[0], "box", (len(spec.humans) + j, box)))
    # far to near, so nearer entities overwrite
    entities.sort(key=lambda e: -e[0])

    head_masks: dict[int, np.ndarray] = {}
    for z, kind, payload in entities:
        idx = payload[0]
        if kind == "human":
            head_masks[idx] = _paint_human(depth_mm, entity, payload[1],
                                           intrinsics, idx + 1)
        else:
            _, size_w, size_h, u0, v0 = payload[1]
            z_mm = int(round(z * 1000.0))
            if spec.clutter_shape == "bust":
                # head-like disc plus a shoulder slab, nothing below
                r = 0.5 * intrinsics.fx * size_w / z
                ys = np.arange(height, dtype=np.float64)[:, None]
                xs = np.arange(width, dtype=np.float64)[None, :]
                mask = (xs - u0) ** 2 + (ys - (v0 + r)) ** 2 <= r * r
                slab_half = intrinsics.fx * size_w / z  # twice the head
                slab_rows = intrinsics.fy * size_w / z
                mask |= ((np.abs(xs - u0) <= slab_half)
                         & (ys >= v0 + 2.0 * r)
                         & (ys <= v0 + 2.0 * r + slab_rows))
                depth_mm[mask] = z_mm
                entity[mask] = idx + 1
            else:
                half_w = 0.5 * intrinsics.fx * size_w / z
                box_h = intrinsics.fy * size_h / z
                x0 = max(0, int(round(u0 - half_w)))
                x1 = min(width, int(round(u0 + half_w)))
                y0 = max(0, int(round(v0)))
                y1 = min(height, int(round(v0 + box_h)))
                if x1 > x0 and y1 > y0:
                    depth_mm[y0:y1, x0:x1] = z_mm
                    entity[y0:y1, x0:x1] = idx + 1

    head_tops = []
    warnings = []
    for i, human in enumerate(spec.humans):
        top = _head_top_pixel(head_masks[i])
        if top is None:
            warnings.append({"human": i, "reason": "projects outside frame"})
        else:
            head_tops.append(top)

    # truncated depth noise keeps every pixel a valid return
    if spec.noise_sigma > 0:
        noise = rng.normal(spec.noise_sigma, (height, width))
        limit = 3.0 * spec.noise_sigma
        np.clip(noise, -limit, limit, out=noise)
        depth_mm += noise
    depth = DepthMap(np.clip(np.rint(depth_mm), 1, 65535).astype(np.uint16))

    n_entities = len(spec.humans) + len(boxes)
    palette = np.empty((n_entities + 1, 3), dtype=np.float64)
    palette[0] = (96.0, 112.0, 104.0)  # background
    for k in range(1, n_entities + 1):
        palette[k] = 40.0 + rng.uniform01(3) * 180.0
    rgb = palette[entity]
    rgb += rng.normal(8.0, rgb.shape)
    color = ColorImage(np.clip(np.rint(rgb), 0, 255).astype(np.uint8))

    truth = GroundTruth(image_id=f"scene-{spec.seed:016x}",
                        head_tops=tuple(head_tops))
    return depth, color, truth, warnings


@dataclass(frozen=True)
class SceneDistribution:
    """Sampling ranges for random scenes, tuned so ground truth stays
    visible: heads are kept apart in image space and clutter stays low in
    the frame."""

    humans: tuple[int, int] = (1, 3)
    clutter: int = 3
    clutter_shape: str = "box"
    noise_sigma: float = 10.0
    background_depth: int = 6000
    z_range: tuple[float, float] = (1.5, 4.8)
    height_range: tuple[float, float] = (1.55, 1.9)
    u_margin: int = 60
    min_head_sep_px: int = 150
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if self.humans[0] < 0 or self.humans[1] < self.humans[0]:
            raise ConfigError("humans range must satisfy 0 <= min <= max")
        if self.clutter < 0:
            raise ConfigError("clutter must be >= 0")


def sample_scene(dist: SceneDistribution, intrinsics: CameraIntrinsics,
                 rng: SplitMix64) -> SceneSpec:
    """Draw one SceneSpec; humans are rejection-sampled until their heads
    are separated in both image and world space (up to 60 tries each)."""
    lo, hi = dist.humans
    n_humans = lo + rng.below(hi - lo + 1) if hi > lo else lo
    placed: list[tuple[float, float, float]] = []  # (u_center, x, z)
    humans = []
    for _ in range(n_humans):
        for _ in range(60):
            u = dist.u_margin + rng.uniform01() * (dist.width
                                                   - 2 * dist.u_margin)
            z = dist.z_range[0] + rng.uniform01() * (dist.z_range[1]
                                                     - dist.z_range[0])
            x = (u - intrinsics.cx) * z / intrinsics.fx
            ok = all(abs(u - pu) >= dist.min_head_sep_px
                     and (abs(z - pz) >= 0.3 or abs(x - px) >= 0.6)
                     for pu, px, pz in placed)
            if ok:
                placed.append((u, x, z))
                height = dist.height_range[0] + rng.uniform01() * (
                    dist.height_range[1] - dist.height_range[0])
                head_w = 0.22 + rng.uniform01() * 0.06
                humans.append(HumanSpec(x=x, z=z, height=height,
                                        head_w=head_w))
                break
    return SceneSpec(humans=tuple(humans),
                     background_depth=dist.background_depth,
                     clutter=dist.clutter,
                     clutter_shape=dist.clutter_shape,
                     noise_sigma=dist.noise_sigma, seed=rng.next_u64())


def _sha256(*blobs: bytes) -> str:
    digest = hashlib.sha256()
    for blob in blobs:
        digest.update(blob)
    return digest.hexdigest()


def generate_dataset(n_images: int, dist: SceneDistribution, seed: int,
                     out_dir, intrinsics: CameraIntrinsics | None = None
                     ) -> dict:
    """Write depth PGMs, color PPMs, truth JSONL, an intrinsics JSON and a
    manifest with per-image content hashes. Each image entry's sha256
    covers the depth file bytes followed by the color file bytes. Returns
    the manifest dict; paths inside it are relative to `out_dir`."""
    if n_images < 1:
        raise ConfigError("n_images must be >= 1")
    intrinsics = intrinsics or default_intrinsics()
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    rng = SplitMix64(seed)

    images = []
    truths = []
    for k in range(n_images):
        spec = sample_scene(dist, intrinsics, rng)
        depth, color, truth, _ = render_scene(spec, intrinsics,
                                              dist.width, dist.height)
        image_id = f"img{k:05d}"
        truths.append(GroundTruth(image_id=image_id,
                                  head_tops=truth.head_tops))
        depth_name = f"{image_id}_depth.pgm"
        color_name = f"{image_id}_color.ppm"
        save_depth_pgm(depth, os.path.join(out_dir, depth_name))
        save_color_ppm(color, os.path.join(out_dir, color_name))
        with open(os.path.join(out_dir, depth_name), "rb") as fh:
            depth_bytes = fh.read()
        with open(os.path.join(out_dir, color_name), "rb") as fh:
            color_bytes = fh.read()
        images.append({"id": image_id, "depth": depth_name,
                       "color": color_name,
                       "sha256": _sha256(depth_bytes, color_bytes)})

    save_intrinsics(intrinsics, os.path.join(out_dir, "intrinsics.json"))
    save_ground_truth_jsonl(os.path.join(out_dir, "truth.jsonl"), truths)
    manifest = {"images": images, "intrinsics": "intrinsics.json",
                "truth": "truth.jsonl"}
    _atomic_write(os.path.join(out_dir, "manifest.json"),
                  (json.dumps(manifest, sort_keys=True, indent=2)
                   + "\n").encode())
    return manifest


def load_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
