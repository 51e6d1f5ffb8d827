"""Command-line front end: ``leafstem <command> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cloud import nn_propagate
from .config import PRESETS, ConfigError, PipelineConfig, parse_override
from .lscnet import LSCNetClassifier, segment_plant, training_samples
from .metrics import aggregate, evaluate
from .normalize import LandmarkSet, format_landmarks, load_landmarks, normalize_scene
from .partition import confidence_filter, prepare_blocks, save_blocks
from .ply import load_ply, save_ply
from .superpoint import SuperpointExtractor, SuperpointPartition
from .synth import synth_corpus, synth_scene

log = logging.getLogger("leafstem")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> PipelineConfig:
    if args.config:
        cfg = PipelineConfig.from_file(args.config, args.preset)
    else:
        cfg = PipelineConfig.preset(args.preset)
    cfg.update(dict(parse_override(s) for s in args.set or []))
    if getattr(args, "seed", None) is not None:
        cfg.update({"seed": args.seed})
    return cfg


def _comments(cfg, command, **extra):
    out = {"leafstem_version": __version__, "leafstem_command": command,
           "leafstem_config": cfg.to_json()}
    out.update({f"leafstem_{k}": json.dumps(v) for k, v in extra.items()})
    return out


def _filtered(cloud, cfg):
    """Confidence-filtered cloud (identity when the cloud has no confidence)."""
    if cloud.confidence is None:
        return cloud
    out = confidence_filter(cloud, cfg["filter.min_conf"])
    if len(out) == 0:
        raise ValueError("no points survive the confidence filter")
    return out


# -- commands ---------------------------------------------------------------------

def cmd_normalize(args, cfg):
    cloud = load_ply(args.input)
    landmarks = load_landmarks(args.landmarks)
    res = normalize_scene(cloud, landmarks, cfg["msac.inlier_threshold"], cfg["msac.iterations"],
                          cfg["seed"], cfg["plant.link_radius"])
    info = {"scale": res.scale, "plane_normal": res.plane.normal.tolist(),
            "plane_offset": res.plane.offset, "rotation": res.transform.rotation.tolist(),
            "origin": res.transform.origin.tolist()}
    save_ply(res.cloud, args.output, comments=_comments(cfg, "normalize", **info))
    log.info("kept %d of %d points; scale %.6g", len(res.cloud), len(cloud), res.scale)


def cmd_superpoints(args, cfg):
    cloud = load_ply(args.input)
    ex = SuperpointExtractor(**cfg.extractor_params()).fit(cloud.positions)
    out = cloud.with_extra(superpoint=ex.labels_.astype(np.int32))
    kl = float(ex.tsne_.kl_divergence_) if hasattr(ex, "tsne_") else None
    save_ply(out, args.output, comments=_comments(cfg, "superpoints", n_superpoints=int(
        ex.labels_.max() + 1 if len(ex.labels_) else 0), kl_divergence=kl))


def cmd_partition(args, cfg):
    cloud = load_ply(args.input)
    spec = cfg.block_spec()
    gridded, blocks = prepare_blocks(cloud, spec, cfg["filter.min_conf"], cfg["seed"],
                                     training=args.training)
    save_blocks(args.output, gridded, blocks, spec, config=cfg.as_dict())
    log.info("%d blocks from %d points", len(blocks), len(gridded))


def _superpoints_for(cloud, cfg, seed):
    if "superpoint" in cloud.extra:
        return SuperpointPartition(cloud.extra["superpoint"].astype(np.int64))
    return SuperpointExtractor(**cfg.extractor_params(seed)).fit(cloud.positions).partition()


def cmd_train(args, cfg):
    files = sorted(Path(args.train_dir).glob("*.ply"))
    if not files:
        raise ValueError(f"no .ply files in {args.train_dir}")
    clouds, parts = [], []
    for i, f in enumerate(files):
        cloud = _filtered(load_ply(f), cfg)
        if cloud.semantic is None:
            raise ValueError(f"{f} has no semantic labels")
        clouds.append(cloud)
        parts.append(_superpoints_for(cloud, cfg, cfg["seed"] + i))
        log.info("%s: %d superpoints", f.name, parts[-1].n_superpoints)
    X, y = training_samples(clouds, parts, cfg["train.min_purity"])
    clf = LSCNetClassifier(**cfg.classifier_params(), verbose=args.verbose).fit(X, y)
    clf.save(args.model, config=cfg.as_dict())
    log.info("trained on %d superpoints; final loss %.4f", len(X), clf.loss_curve_[-1])


def cmd_predict(args, cfg):
    cloud = load_ply(args.input)
    clf = LSCNetClassifier.load(args.model)
    kept = _filtered(cloud, cfg)
    part = (_superpoints_for(kept, cfg, cfg["seed"]) if args.reuse_superpoints else
            SuperpointExtractor(**cfg.extractor_params()).fit(kept.positions).partition())
    labeled = segment_plant(kept, clf, partition=part)
    if len(kept) < len(cloud):
        # points dropped by the confidence filter take their nearest kept neighbor's labels
        sem = nn_propagate(labeled, cloud).semantic
        sp = nn_propagate(labeled, cloud, field="superpoint").extra["superpoint"]
        labeled = cloud.with_semantic(sem).with_extra(superpoint=sp)
    save_ply(labeled, args.output,
             comments=_comments(cfg, "predict", model_config=clf.checkpoint_meta_.get("config", {})))


def _pairs(pred, truth):
    p, t = Path(pred), Path(truth)
    if p.is_dir() != t.is_dir():
        raise UsageError("prediction and truth must both be files or both be directories")
    if not p.is_dir():
        return [(p, t)]
    files = sorted(f.name for f in p.glob("*.ply"))
    missing = [f for f in files if not (t / f).exists()]
    if not files or missing:
        raise ValueError(f"unmatched prediction files: {missing or 'none found'}")
    return [(p / f, t / f) for f in files]


def cmd_evaluate(args, cfg):
    reports = []
    for pf, tf in _pairs(args.pred, args.truth):
        pred, truth = load_ply(pf), load_ply(tf)
        if pred.semantic is None or truth.semantic is None:
            raise ValueError(f"{pf} or {tf} has no semantic labels")
        if len(pred) != len(truth):
            raise ValueError(f"{pf} has {len(pred)} points, {tf} has {len(truth)}")
        reports.append(evaluate(pred.semantic, truth.semantic, args.ignore_unlabeled))
    mode = "macro" if args.macro else "micro"
    if mode == "micro":
        report = aggregate(reports)
        values = report.as_dict()
    else:
        values = aggregate(reports, "macro")
    if args.json:
        text = json.dumps({"measures": values, "aggregation": mode, "n_plants": len(reports),
                           "config": cfg.as_dict()}, indent=2) + "\n"
    else:
        lines = [f"{k}: {'n/a' if v is None else f'{v:.4f}'}" for k, v in values.items()]
        lines += [f"aggregation: {mode}", f"plants: {len(reports)}", f"config: {cfg.to_json()}"]
        text = "\n".join(lines) + "\n"
    Path(args.report).write_text(text)
    sys.stdout.write(text)


def cmd_synth(args, cfg):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plants = synth_corpus(args.seed, args.count)
    width = max(3, len(str(args.count - 1)))
    for i, plant in enumerate(plants):
        name = f"plant_{i:0{width}d}"
        save_ply(plant, out / f"{name}.ply",
                 comments=_comments(cfg, "synth", corpus_seed=args.seed, index=i))
        if args.scenes:
            scene = synth_scene(args.seed * 100003 + i, plant=plant)
            save_ply(scene.cloud, out / f"{name}_scene.ply", double=True,
                     comments=_comments(cfg, "synth", corpus_seed=args.seed, index=i,
                                        shrink=scene.shrink))
            lm = LandmarkSet(scene.landmarks, scene.pairs, scene.base)
            (out / f"{name}_scene.landmarks.txt").write_text(format_landmarks(lm))


# -- parser -----------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="leafstem", description="Leaf/stem segmentation of plant point clouds.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", default="default", choices=sorted(PRESETS),
                        help="starting values before --config and --set")
    common.add_argument("--config", help="JSON file of config keys")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("normalize", parents=[common], help="scale, level and crop a raw scene")
    p.add_argument("input")
    p.add_argument("landmarks")
    p.add_argument("output")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("superpoints", parents=[common], help="oversegment a plant")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_superpoints)

    p = sub.add_parser("partition", parents=[common], help="write XY blocks for per-point networks")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--seed", type=int)
    p.add_argument("--training", action="store_true", help="drop sparse blocks")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("train", parents=[common], help="train the superpoint classifier")
    p.add_argument("train_dir")
    p.add_argument("model")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="label a plant")
    p.add_argument("input")
    p.add_argument("model")
    p.add_argument("output")
    p.add_argument("--seed", type=int)
    p.add_argument("--reuse-superpoints", action="store_true",
                   help="use the input's superpoint property when present")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions")
    p.add_argument("pred", help="predicted PLY, or a directory of them")
    p.add_argument("truth", help="ground-truth PLY, or a directory with matching names")
    p.add_argument("report")
    p.add_argument("--json", action="store_true")
    p.add_argument("--macro", action="store_true", help="average per-plant measures")
    p.add_argument("--ignore-unlabeled", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", parents=[common], help="generate a labeled synthetic corpus")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, default=30)
    p.add_argument("--scenes", action="store_true",
                   help="also write raw scenes with landmark files")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "count", 1) < 1:
            raise UsageError("--count must be >= 1")
        cfg = _config(args)
        args.func(args, cfg)
    except (ConfigError, UsageError) as exc:
        print(f"leafstem: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"leafstem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError, KeyError) as exc:
        print(f"leafstem: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
