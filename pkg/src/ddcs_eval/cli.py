"""Command-line front end.

Every subcommand reads its inputs from files and writes exactly one report
(JSON or CSV). Reports are written to a temporary file and renamed into
place, so a failed run never leaves a partial report behind.

Exit codes: 0 success, 1 invalid input or usage, 2 computation failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .data import (
    atomic_write,
    load_feature_set,
    load_logits,
    save_feature_set,
    save_labels,
)
from .ddcs import DdcsConfig, accumulate_sets, compute_ddcs, per_label_report, vulnerability_report
from .distance import DistanceMetric, THREADS_ENV, nearest_target, resolve_threads
from .errors import ComputationError, DdcsEvalError, LabelsRequired, UsageError, ValidationError
from .metrics import CoverageConfig, coverage, feature_distance, fid, gaussian_stats, topk_accuracy
from .ngd import make_toy_world, toy_augmentation_run
from .synth import SWEEP_METRICS, SweepSpec, gen_synthetic_targets, run_sweep


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _grid(text):
    """``0,10,50`` or an inclusive range ``1..16``."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad range {text!r}") from None
    return _int_list(text)


def _dump_json(obj):
    return json.dumps(obj, indent=2) + "\n"


def _load(path, labels=None):
    return load_feature_set(path, labels_path=labels)


def _metric_envelope(values, **config):
    return _dump_json({**values, "config": config})


# --- subcommands ------------------------------------------------------------


def cmd_ddcs(args):
    rec, tar = _load(args.rec), _load(args.tar)
    cfg = DdcsConfig(c=args.c)
    matches = nearest_target(rec, tar, args.metric, n_jobs=args.threads)
    res = compute_ddcs(accumulate_sets(matches, tar.n_samples), cfg)
    report = res.to_dict(tar.ids, rec.ids)
    report["config"]["metric"] = args.metric
    atomic_write(args.out, _dump_json(report))


def cmd_fid(args):
    rec, tar = _load(args.rec), _load(args.tar)
    value = fid(gaussian_stats(rec), gaussian_stats(tar))
    atomic_write(args.out, _metric_envelope({"fid": value}))


def cmd_coverage(args):
    rec, tar = _load(args.rec), _load(args.tar)
    value = coverage(rec, tar, CoverageConfig(args.k), args.metric, n_jobs=args.threads)
    atomic_write(args.out, _metric_envelope({"coverage": value}, k=args.k, metric=args.metric))


def cmd_accuracy(args):
    table = load_logits(args.logits)
    ks = args.k
    if ks is None:
        ks = [k for k in (1, 5) if k <= table.n_classes]
    values = {f"acc_top{k}": topk_accuracy(table, k) for k in ks}
    atomic_write(args.out, _metric_envelope(values))


def cmd_feature_dist(args):
    rec = _load(args.rec, args.rec_labels)
    tar = _load(args.tar, args.tar_labels)
    value, excluded = feature_distance(rec, tar, metric=args.metric, return_excluded=True,
                                       n_jobs=args.threads)
    values = {"feature_distance": value, "excluded_rec_ids": [int(rec.ids[j]) for j in excluded]}
    atomic_write(args.out, _metric_envelope(values, metric=args.metric))


def cmd_knn_dist(args):
    rec, tar = _load(args.rec), _load(args.tar)
    m = nearest_target(rec, tar, args.metric, n_jobs=args.threads)
    value = math.fsum(m.distance.tolist()) / len(m)
    atomic_write(args.out, _metric_envelope({"knn_dist": value}, metric=args.metric))


def cmd_pairs(args):
    rec, tar = _load(args.rec), _load(args.tar)
    sets = accumulate_sets(nearest_target(rec, tar, args.metric, n_jobs=args.threads), tar.n_samples)
    rep = vulnerability_report(sets, args.mode, args.top_m)
    atomic_write(args.out, _dump_json(rep.to_dict(tar.ids, rec.ids)))


def cmd_per_label(args):
    rec = _load(args.rec)
    tar = _load(args.tar, args.labels)
    sets = accumulate_sets(nearest_target(rec, tar, args.metric, n_jobs=args.threads), tar.n_samples)
    atomic_write(args.out, per_label_report(sets, tar.labels).to_csv())


def cmd_synth_gen(args):
    fs = gen_synthetic_targets(args.n_labels, args.per_label, args.dim, args.seed)
    save_feature_set(fs, args.out)
    save_labels(fs, args.labels_out)


def cmd_sweep(args):
    tar = _load(args.tar, args.labels)
    if tar.labels is None:
        raise LabelsRequired("sweep needs --labels")
    metrics = tuple(m for m in args.metrics.split(",") if m.strip())
    spec = SweepSpec(mode=args.mode, grid=tuple(args.grid), seed=args.seed, metrics=metrics,
                     ddcs_config=DdcsConfig(c=args.c), coverage_k=args.k, metric=args.metric)
    table = run_sweep(tar, spec, n_jobs=args.threads)
    atomic_write(args.out, table.to_csv())


def cmd_ngd_demo(args):
    world = make_toy_world(d_img=args.dim, d_manifold=args.manifold_dim, n_classes=args.classes,
                           condition=args.condition, seed=args.seed)
    rep = toy_augmentation_run(world, args.steps, args.lr, args.batch, args.seed,
                               projection=args.projection, entropy_weight=args.entropy_weight,
                               vanilla_weight=args.vanilla_weight, delta=args.delta)
    config = {
        "steps": args.steps, "lr": args.lr, "batch": args.batch, "seed": args.seed,
        "projection": args.projection, "entropy_weight": args.entropy_weight,
        "vanilla_weight": args.vanilla_weight, "delta": args.delta, "dim": args.dim,
        "manifold_dim": args.manifold_dim, "classes": args.classes, "condition": args.condition,
    }
    out = Path(args.out)
    atomic_write(out, rep.to_csv())
    atomic_write(out.with_suffix(".json"), _dump_json(config))


def cmd_convert(args):
    fs = load_feature_set(args.input, format=args.in_format)
    save_feature_set(fs, args.output, format=args.out_format)


# --- parser -----------------------------------------------------------------


def build_parser():
    metrics = [m.value for m in DistanceMetric]
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help=f"distance-engine workers (default ${THREADS_ENV} or CPU count)")
    common.add_argument("--metric", choices=metrics, default="euclidean")

    def pair(p):
        p.add_argument("--rec", required=True, help="reconstructed features (.fmat or .csv)")
        p.add_argument("--tar", required=True, help="target features (.fmat or .csv)")
        p.add_argument("--out", required=True)

    parser = _Parser(prog="ddcs-eval", description="Sample-level model-inversion evaluation metrics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ddcs", parents=[common], help="DDCS report (JSON)")
    pair(p)
    p.add_argument("--c", type=float, default=1.0)
    p.set_defaults(func=cmd_ddcs)

    p = sub.add_parser("fid", parents=[common], help="Frechet distance (JSON)")
    pair(p)
    p.set_defaults(func=cmd_fid)

    p = sub.add_parser("coverage", parents=[common], help="k-NN coverage (JSON)")
    pair(p)
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("accuracy", parents=[common], help="top-k accuracy from logits (JSON)")
    p.add_argument("--logits", required=True)
    p.add_argument("--k", type=_int_list, default=None, help="comma-separated k values (default 1,5)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_accuracy)

    p = sub.add_parser("feature-dist", parents=[common], help="same-label nearest distance (JSON)")
    pair(p)
    p.add_argument("--rec-labels", required=True)
    p.add_argument("--tar-labels", required=True)
    p.set_defaults(func=cmd_feature_dist)

    p = sub.add_parser("knn-dist", parents=[common], help="mean nearest-target distance (JSON)")
    pair(p)
    p.set_defaults(func=cmd_knn_dist)

    p = sub.add_parser("pairs", parents=[common], help="per-target vulnerability ranking (JSON)")
    pair(p)
    p.add_argument("--mode", choices=["best", "avg"], default="best")
    p.add_argument("--top-m", type=int, default=10)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("per-label", parents=[common], help="per-label match fraction and distance (CSV)")
    pair(p)
    p.add_argument("--labels", required=True, help="target labels sidecar (id,label)")
    p.set_defaults(func=cmd_per_label)

    p = sub.add_parser("synth-gen", help="synthetic labeled targets")
    p.add_argument("--n-labels", type=int, required=True)
    p.add_argument("--per-label", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out", required=True)
    p.set_defaults(func=cmd_synth_gen)

    p = sub.add_parser("sweep", parents=[common], help="D1/D2 metric sweep (CSV)")
    p.add_argument("--mode", choices=["d1", "d2"], required=True)
    p.add_argument("--tar", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--grid", type=_grid, default=None,
                   help="comma list or inclusive range a..b (default 1..16 for d1, 0..50 for d2)")
    p.add_argument("--metrics", default=",".join(SWEEP_METRICS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--k", type=int, default=5, help="coverage neighbour count")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ngd-demo", help="toy natural-gradient training trajectory (CSV + JSON)")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--projection", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--entropy-weight", type=float, default=1.0)
    p.add_argument("--vanilla-weight", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1e-6)
    p.add_argument("--condition", type=float, default=100.0)
    p.add_argument("--dim", type=int, default=6)
    p.add_argument("--manifold-dim", type=int, default=3)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ngd_demo)

    p = sub.add_parser("convert", help="convert features between csv and fmat")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--in-format", choices=["csv", "fmat"], default=None)
    p.add_argument("--out-format", choices=["csv", "fmat"], default=None)
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if hasattr(args, "threads"):
            args.threads = resolve_threads(args.threads)
        if getattr(args, "command", None) == "sweep" and args.grid is None:
            args.grid = list(range(1, 17)) if args.mode == "d1" else list(range(0, 51))
        args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except ComputationError as exc:
        print(f"ddcs-eval: computation error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, DdcsEvalError) as exc:
        print(f"ddcs-eval: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
