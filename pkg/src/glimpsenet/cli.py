"""Pipeline command line: synth -> propose -> extract -> train -> eval.

Every subcommand is deterministic given its inputs and seed, writes outputs
atomically and only under the paths it was given, and reports problems as
one JSON object per stderr line: {"level": ..., "msg": ..., "path": ...}.

Exit codes: 0 success, 2 usage error, 3 IO failure, 4 format error.

Proposal records are keyed by image_id; feature records carry a
(image index, proposal index) pair instead, where the image index is the
order of first appearance of the image_id in the proposals file and the
proposal index counts records within that image. `eval` re-reads the
proposals file to map scores back to pixel locations.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

from .errors import ConfigError, FormatError, TrainingDivergedError
from .evaluation import (Detection, MatchParams, compute_curve, emit_curve,
                         load_ground_truth_jsonl, log_average_miss_rate)
from .features import (ExtractorConfig, extract_sequence, load_features,
                       save_features)
from .glimpse import GlimpseConfig, build_glimpse_set
from .imaging import load_color_ppm, load_depth_pgm, load_intrinsics
from .nnet import load_checkpoint, predict, save_checkpoint
from .proposals import (ProposalParams, generate_proposals,
                        load_proposals_jsonl, save_proposals_jsonl)
from .synth import SceneDistribution, generate_dataset, load_manifest
from .training import Dataset, TrainConfig, train, write_train_log

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FORMAT = 4


def _diag(level: str, msg: str, path=None) -> None:
    doc = {"level": level, "msg": msg,
           "path": None if path is None else os.fspath(path)}
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)


@dataclass
class PipelineConfig:
    proposals: ProposalParams
    glimpse: GlimpseConfig
    extractor: ExtractorConfig
    train: TrainConfig
    match: MatchParams
    intrinsics_path: str | None = None


def load_config(path=None) -> PipelineConfig:
    """Build a PipelineConfig from a JSON file; missing sections fall back
    to defaults, and every module invariant is validated on load."""
    raw = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid config JSON: {exc}", path=path)
    try:
        eval_raw = dict(raw.get("eval", {}))
        radius = eval_raw.pop("match_radius", 25.0)
        if radius == "adaptive":
            match = MatchParams(adaptive=True, **eval_raw)
        else:
            match = MatchParams(radius=float(radius), **eval_raw)
        return PipelineConfig(
            proposals=ProposalParams(**raw.get("proposals", {})),
            glimpse=GlimpseConfig(**raw.get("glimpse", {})),
            extractor=ExtractorConfig(**raw.get("extractor", {})),
            train=TrainConfig(**raw.get("train", {})),
            match=match,
            intrinsics_path=raw.get("intrinsics_path"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config: {exc}")


def _load_dataset_frames(data_dir):
    manifest_path = os.path.join(data_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise ConfigError(f"no manifest.json under {data_dir}")
    manifest = load_manifest(manifest_path)
    return manifest


def _intrinsics_for(config: PipelineConfig, data_dir, manifest):
    if config.intrinsics_path:
        if not os.path.exists(config.intrinsics_path):
            raise ConfigError(
                f"configured intrinsics file {config.intrinsics_path} "
                f"does not exist")
        return load_intrinsics(config.intrinsics_path)
    name = manifest.get("intrinsics")
    if not name or not os.path.exists(os.path.join(data_dir, name)):
        raise ConfigError(
            "no intrinsics available: the dataset manifest names none and "
            "the config sets no intrinsics_path")
    return load_intrinsics(os.path.join(data_dir, name))


def _parse_range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition("..")
    if not hi:
        hi = lo
    try:
        lo_i, hi_i = int(lo), int(hi)
    except ValueError:
        raise ConfigError(f"bad range {text!r}, expected 'min..max'")
    if lo_i < 0 or hi_i < lo_i:
        raise ConfigError(f"bad range {text!r}, expected 0 <= min <= max")
    return lo_i, hi_i


# ---------------------------------------------------------------------------
# Subcommands

def cmd_synth(args) -> int:
    if args.images < 1:
        raise ConfigError("--images must be >= 1")
    humans = _parse_range(args.humans)
    dist = SceneDistribution(humans=humans, clutter=args.clutter)
    generate_dataset(args.images, dist, args.seed, args.out)
    print(f"wrote {args.images} images to {args.out}")
    return EXIT_OK


def _truth_lookup(truths):
    return {t.image_id: list(t.head_tops) for t in truths}


def cmd_propose(args) -> int:
    config = load_config(args.config)
    manifest = _load_dataset_frames(args.data)
    intrinsics = _intrinsics_for(config, args.data, manifest)

    truth_by_image = {}
    truth_name = manifest.get("truth")
    if truth_name and os.path.exists(os.path.join(args.data, truth_name)):
        truths = load_ground_truth_jsonl(os.path.join(args.data, truth_name))
        truth_by_image = _truth_lookup(truths)

    items = []
    matched = 0
    total_truths = 0
    for entry in manifest["images"]:
        depth = load_depth_pgm(os.path.join(args.data, entry["depth"]))
        props = generate_proposals(depth, intrinsics, config.proposals)
        items.extend((entry["id"], p) for p in props)
        if truth_by_image:
            heads = truth_by_image.get(entry["id"], [])
            total_truths += len(heads)
            for tu, tv in heads:
                radius = config.match.radius_for(
                    int(depth.data[tv, tu]) or None)
                if any((p.u - tu) ** 2 + (p.v - tv) ** 2 <= radius * radius
                       for p in props):
                    matched += 1
    save_proposals_jsonl(args.out, items)

    n_images = len(manifest["images"])
    summary = (f"images={n_images} "
               f"proposals_per_image_mean={len(items) / n_images:.3f}")
    if total_truths:
        summary += f" recall={matched / total_truths:.4f}"
    print(summary)
    return EXIT_OK


def _group_proposals(items):
    """Proposals keyed by image_id in order of first appearance; the
    feature-record (image index, proposal index) refers to this grouping."""
    by_image: dict[str, list] = {}
    for image_id, prop in items:
        by_image.setdefault(image_id, []).append(prop)
    return by_image


def cmd_extract(args) -> int:
    config = load_config(args.config)
    manifest = _load_dataset_frames(args.data)
    intrinsics = _intrinsics_for(config, args.data, manifest)
    by_image = _group_proposals(load_proposals_jsonl(args.proposals))

    truth_by_image = {}
    truth_name = manifest.get("truth")
    if truth_name and os.path.exists(os.path.join(args.data, truth_name)):
        truth_by_image = _truth_lookup(
            load_ground_truth_jsonl(os.path.join(args.data, truth_name)))

    image_order = {image_id: k for k, image_id in enumerate(by_image)}
    frames = {e["id"]: e for e in manifest["images"]}
    sequences = []
    for image_id, props in by_image.items():
        if image_id not in frames:
            raise ConfigError(f"proposals reference unknown image "
                              f"{image_id!r}")
        entry = frames[image_id]
        depth = load_depth_pgm(os.path.join(args.data, entry["depth"]))
        color = load_color_ppm(os.path.join(args.data, entry["color"]))
        heads = truth_by_image.get(image_id)
        for k, prop in enumerate(props):
            gset = build_glimpse_set(prop, intrinsics, depth.width,
                                     depth.height, config.glimpse)
            seq = extract_sequence(gset, color, depth, config.extractor)
            seq.proposal_id = (image_order[image_id], k)
            if heads is not None:
                radius = config.match.radius_for(prop.depth)
                hit = any((prop.u - tu) ** 2 + (prop.v - tv) ** 2
                          <= radius * radius for tu, tv in heads)
                seq.label = 1 if hit else 0
            sequences.append(seq)
    if not sequences:
        raise ConfigError("no proposals to extract features for")
    save_features(args.out, sequences)
    print(f"wrote {len(sequences)} feature sequences to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = load_config(args.config)
    sequences = load_features(args.features)
    expected_steps = config.glimpse.peripheral_count + 3
    steps = sequences[0].steps
    if steps != expected_steps:
        raise FormatError(
            f"feature sequences have T={steps} but the configured glimpse "
            f"set implies T={expected_steps}", path=args.features)
    positives = [s for s in sequences if s.label == 1]
    negatives = [s for s in sequences if s.label == 0]
    unlabeled = len(sequences) - len(positives) - len(negatives)
    if unlabeled:
        _diag("warning", f"ignoring {unlabeled} unlabeled records",
              args.features)
    result = train(Dataset(positives=positives, negatives=negatives),
                   config.train)
    save_checkpoint(args.out, result.best, steps)
    write_train_log(args.out + ".log.csv", result.log)
    if result.log:
        last = result.log[-1]
        print(f"epochs={len(result.log)} best_epoch={result.best_epoch} "
              f"final_loss={last.mean_loss:.6f} "
              f"final_accuracy={last.train_accuracy:.4f}")
    else:
        print("epochs=0 (wrote the initialization checkpoint)")
    return EXIT_OK


def cmd_eval(args) -> int:
    params, _ = load_checkpoint(args.model)
    sequences = load_features(args.features)
    by_image = _group_proposals(load_proposals_jsonl(args.proposals))
    image_ids = list(by_image)

    detections = []
    depth_lookup = {}
    for seq in sequences:
        img_idx, prop_idx = seq.proposal_id
        if img_idx >= len(image_ids):
            raise FormatError(
                f"feature record references image index {img_idx} but the "
                f"proposals file holds {len(image_ids)} images",
                path=args.features)
        image_id = image_ids[img_idx]
        props = by_image[image_id]
        if prop_idx >= len(props):
            raise FormatError(
                f"feature record references proposal {prop_idx} of image "
                f"{image_id!r} which has {len(props)}", path=args.features)
        prop = props[prop_idx]
        score = predict(params, seq)
        detections.append(Detection(image_id=image_id, u=prop.u, v=prop.v,
                                    score=score))
        depth_lookup[(image_id, prop.u, prop.v)] = prop.depth

    truths = load_ground_truth_jsonl(args.truth)
    curve = compute_curve(detections, truths, MatchParams(),
                          depths=depth_lookup)
    emit_curve(curve, args.out_curve, "csv")
    if args.svg:
        emit_curve(curve, args.svg, "svg")
    print(f"LAMR={log_average_miss_rate(curve)!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glimpsenet",
        description="RGB-D human detection pipeline on synthetic scenes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic RGB-D dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--images", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--humans", default="1..3", metavar="MIN..MAX")
    p.add_argument("--clutter", type=int, default=3)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("propose", help="generate head-top proposals")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_propose)

    p = sub.add_parser("extract", help="extract glimpse feature sequences")
    p.add_argument("--data", required=True)
    p.add_argument("--proposals", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a classifier on features")
    p.add_argument("--features", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score features and emit FPPI curves")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--proposals", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out-curve", required=True)
    p.add_argument("--svg")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        _diag("error", str(exc))
        return EXIT_USAGE
    except FormatError as exc:
        _diag("error", str(exc), exc.path)
        return EXIT_FORMAT
    except TrainingDivergedError as exc:
        _diag("error", str(exc))
        return EXIT_FORMAT
    except OSError as exc:
        _diag("error", str(exc), getattr(exc, "filename", None))
        return EXIT_IO


def entry() -> None:
    sys.exit(main())
