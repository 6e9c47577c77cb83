"""Detection scoring against point ground truth: greedy matching,
false-positives-per-image vs miss-rate curves, and the log-average
miss-rate summary.

Detections and ground truth are head-top points, so matching is by center
distance (default radius 25 px, or half the projected head width when a
per-detection depth is known), not box overlap. Matching is greedy by
descending score with nearest-truth assignment, which makes true-positive
counts monotone as the score threshold drops.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import FormatError
from .imaging import _atomic_write, project_size


@dataclass(frozen=True)
class Detection:
    image_id: str
    u: int
    v: int
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError("score must lie in [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    head_tops: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class MatchParams:
    """Fixed pixel radius, or adaptive = 0.5 * projected head width for
    detections that carry a depth."""

    radius: float = 25.0
    adaptive: bool = False
    head_width: float = 0.25
    fx: float = 525.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def radius_for(self, depth_mm: int | None) -> float:
        if self.adaptive and depth_mm:
            return 0.5 * project_size(self.head_width, depth_mm, self.fx)
        return self.radius


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    fppi: float
    miss_rate: float


@dataclass(frozen=True)
class EvalCurve:
    """One point per distinct score threshold, fppi ascending (threshold
    descending); miss_rate is non-increasing along the curve."""

    points: tuple[CurvePoint, ...]


def match_image(detections: list[Detection],
                truths: list[tuple[int, int]],
                params: MatchParams | None = None,
                depths: list[int | None] | None = None) -> tuple[int, int, int]:
    """Greedy matching of already-thresholded detections in one image.

    Detections are processed by descending score (ties by (v, u)); each one
    matches the nearest unmatched truth within its radius. Unmatched
    detections are false positives, unmatched truths false negatives.
    Returns (tp, fp, fn).
    """
    params = params or MatchParams()
    if depths is None:
        depths = [None] * len(detections)
    ids = {d.image_id for d in detections}
    if len(ids) > 1:
        raise ValueError(f"detections span multiple images: {sorted(ids)}")
    order = sorted(range(len(detections)),
                   key=lambda i: (-detections[i].score, detections[i].v,
                                  detections[i].u))
    taken = [False] * len(truths)
    tp = 0
    for i in order:
        det = detections[i]
        radius = params.radius_for(depths[i])
        limit = radius * radius
        best = None
        best_d2 = None
        for j, (tu, tv) in enumerate(truths):
            if taken[j]:
                continue
            d2 = (det.u - tu) ** 2 + (det.v - tv) ** 2
            # distance ties go to the lowest truth index
            if d2 <= limit and (best_d2 is None or d2 < best_d2):
                best, best_d2 = j, d2
        if best is not None:
            taken[best] = True
            tp += 1
    fp = len(detections) - tp
    fn = len(truths) - tp
    return tp, fp, fn


def compute_curve(detections: list[Detection], truths: list[GroundTruth],
                  params: MatchParams | None = None,
                  depths: dict[tuple[str, int, int], int] | None = None
                  ) -> EvalCurve:
    """FPPI vs miss-rate over every distinct score threshold.

    The image set is the union of ids seen in `truths` and `detections`;
    images without truth entries still count toward the FPPI denominator.
    An empty detection set degenerates to the single point (0.0, 1.0).
    `depths` optionally maps (image_id, u, v) to millimeters for adaptive
    matching radii.
    """
    params = params or MatchParams()
    truth_by_image = {t.image_id: list(t.head_tops) for t in truths}
    n_truths = sum(len(v) for v in truth_by_image.values())
    if n_truths == 0:
        raise ValueError("evaluation requires at least one ground truth")
    image_ids = sorted(set(truth_by_image) | {d.image_id for d in detections})
    n_images = len(image_ids)

    if not detections:
        return EvalCurve(points=(CurvePoint(math.inf, 0.0, 1.0),))

    by_image: dict[str, list[Detection]] = {i: [] for i in image_ids}
    for det in detections:
        by_image[det.image_id].append(det)

    points: list[CurvePoint] = []
    seen: set[tuple[float, float]] = set()
    for threshold in sorted({d.score for d in detections}, reverse=True):
        total_fp = 0
        total_fn = 0
        for image_id in image_ids:
            dets = [d for d in by_image[image_id] if d.score >= threshold]
            dep = None
            if depths is not None:
                dep = [depths.get((d.image_id, d.u, d.v)) for d in dets]
            _, fp, fn = match_image(dets, truth_by_image.get(image_id, []),
                                    params, dep)
            total_fp += fp
            total_fn += fn
        point = CurvePoint(threshold=threshold, fppi=total_fp / n_images,
                           miss_rate=total_fn / n_truths)
        if (point.fppi, point.miss_rate) not in seen:
            seen.add((point.fppi, point.miss_rate))
            points.append(point)
    return EvalCurve(points=tuple(points))


def log_average_miss_rate(curve: EvalCurve) -> float:
    """Geometric mean of the miss rate sampled at 9 FPPI values log-spaced
    in [0.01, 1.0]; each sample uses the highest-FPPI point at or below it
    (miss = 1 when none), and miss is clamped to >= 1e-4 before the log."""
    if not curve.points:
        raise ValueError("empty curve")
    samples = [10.0 ** (-2.0 + 2.0 * k / 8.0) for k in range(9)]
    logs = []
    for s in samples:
        miss = 1.0
        for point in curve.points:  # fppi non-decreasing along the curve
            if point.fppi <= s:
                miss = point.miss_rate
        logs.append(math.log(max(miss, 1e-4)))
    return math.exp(sum(logs) / len(logs))


def emit_curve(curve: EvalCurve, path, fmt: str = "csv") -> None:
    """Write the curve as CSV (threshold,fppi,miss_rate) or as a minimal
    SVG polyline chart with a log-scaled FPPI axis."""
    if not curve.points:
        raise ValueError("refusing to emit an empty curve")
    if fmt == "csv":
        lines = ["threshold,fppi,miss_rate"]
        for pt in curve.points:
            lines.append(f"{pt.threshold!r},{pt.fppi!r},{pt.miss_rate!r}")
        _atomic_write(path, ("\n".join(lines) + "\n").encode())
    elif fmt == "svg":
        _atomic_write(path, _render_svg(curve).encode())
    else:
        raise ValueError("format must be 'csv' or 'svg'")


def load_curve_csv(path) -> EvalCurve:
    points = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "threshold,fppi,miss_rate":
            raise FormatError("bad curve CSV header", path=path, offset=0)
        for line in fh:
            line = line.strip()
            if not line:
                continue
            t, f, m = line.split(",")
            points.append(CurvePoint(float(t), float(f), float(m)))
    return EvalCurve(points=tuple(points))


def _render_svg(curve: EvalCurve, width: int = 480, height: int = 360) -> str:
    pad = 40.0
    floor_fppi = 1e-3
    xs = [max(pt.fppi, floor_fppi) for pt in curve.points]
    x_lo = math.log10(floor_fppi)
    x_hi = math.log10(max(max(xs), 1.0))
    span = max(x_hi - x_lo, 1e-9)

    def px(f):
        return pad + (math.log10(max(f, floor_fppi)) - x_lo) / span \
            * (width - 2 * pad)

    def py(m):
        return height - pad - m * (height - 2 * pad)

    pts = " ".join(f"{px(pt.fppi):.2f},{py(pt.miss_rate):.2f}"
                   for pt in curve.points)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">\n'
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" '
        f'height="{height - 2 * pad}" fill="none" stroke="black"/>\n'
        f'<polyline points="{pts}" fill="none" stroke="crimson" '
        f'stroke-width="1.5"/>\n'
        f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" '
        f'font-size="12">false positives per image (log)</text>\n'
        f'<text x="12" y="{height / 2}" font-size="12" '
        f'transform="rotate(-90 12 {height / 2})" '
        f'text-anchor="middle">miss rate</text>\n'
        f'</svg>\n')


# ---------------------------------------------------------------------------
# JSON Lines IO

def save_detections_jsonl(path, detections: list[Detection]) -> None:
    lines = [json.dumps({"image_id": d.image_id, "u": d.u, "v": d.v,
                         "score": d.score}, sort_keys=True)
             for d in detections]
    _atomic_write(path, (("\n".join(lines) + "\n") if lines else "").encode())


def load_detections_jsonl(path) -> list[Detection]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            out.append(Detection(image_id=raw["image_id"], u=int(raw["u"]),
                                 v=int(raw["v"]), score=float(raw["score"])))
    return out


def save_ground_truth_jsonl(path, truths: list[GroundTruth]) -> None:
    lines = [json.dumps({"image_id": t.image_id,
                         "head_tops": [[u, v] for u, v in t.head_tops]},
                        sort_keys=True)
             for t in truths]
    _atomic_write(path, (("\n".join(lines) + "\n") if lines else "").encode())


def load_ground_truth_jsonl(path) -> list[GroundTruth]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            out.append(GroundTruth(
                image_id=raw["image_id"],
                head_tops=tuple((int(u), int(v))
                                for u, v in raw["head_tops"])))
    return out
