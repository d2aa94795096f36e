"""Command-line entry point: ``glds <command> ...``.

Logs and progress go to stderr; every machine-readable result is a file.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import ingest, load_dataset
from .dynamics import fit_glds
from .experiment import (ConfigError, ExperimentError, FeatureCache, emit_report, load_config,
                         prepare, run_experiment, sweep_dimension)
from .grassmann import GrassmannDictionary, save_dictionary
from .synthetic import write_synthetic_dataset
from .tensor import mode_product, tucker, unfold, vec

logger = logging.getLogger("glds")


def _cmd_ingest(args):
    kind = {"msr": "MSR3D", "utkinect": "UTKinect", "nucla": "NUCLA"}.get(args.kind.lower(),
                                                                         args.kind)
    manifest = ingest(args.root, kind, topology=args.topology, exclude=args.exclude,
                      labels=args.labels)
    failed = []
    if not args.no_validate:
        samples, errors = load_dataset(manifest)
        bad = {Path(e.path) for e in errors}
        failed = [str(e) for e in errors]
        good_ids = {rec.id for _, rec in samples}
        manifest.records = [r for r in manifest.records if r.id in good_ids]
        for msg in failed:
            logger.warning("dropped: %s", msg)
        if bad:
            logger.warning("%d samples failed to parse", len(failed))
    manifest.save(args.out)
    logger.info("wrote %d records to %s", len(manifest.records), args.out)
    return 1 if failed and args.strict else 0


def _cmd_synth(args):
    files = write_synthetic_dataset(args.out, n_classes=args.classes, n_subjects=args.subjects,
                                    trials=args.trials, n_frames=args.frames, noise=args.noise,
                                    seed=args.seed)
    logger.info("wrote %d synthetic samples to %s", len(files), args.out)
    return 0


def _load(args):
    config = load_config(args.config)
    if getattr(args, "output_dir", None):
        config.output_dir = args.output_dir
    if config.cache_dir is None:
        config.cache_dir = str(Path(config.output_dir) / "cache")
    return config


def _cmd_features(args):
    config = _load(args)
    cache = FeatureCache(config.cache_dir)
    timings = {}
    prepare(config, cache, timings)
    logger.info("features and subspaces cached in %s (%s)", config.cache_dir,
                ", ".join(f"{k} {v:.2f}s" for k, v in timings.items()))
    return 0


def _cmd_fit(args):
    config = _load(args)
    _, records, subspaces, errors, _ = prepare(config)
    out = Path(args.out) if args.out else Path(config.output_dir) / "subspaces.npz"
    out.parent.mkdir(parents=True, exist_ok=True)
    ids = [r.id for r in records]
    labels = [r.action for r in records]
    np.savez(out, ids=np.array(ids), labels=np.array([str(x) for x in labels]),
             bases=np.stack([subspaces[i] for i in ids]))
    save_dictionary(GrassmannDictionary.from_points([subspaces[i] for i in ids], labels),
                    out.with_suffix(".dictionary.json"))
    logger.info("wrote %d subspaces to %s", len(ids), out)
    return 1 if errors else 0


def _cmd_eval(args):
    config = _load(args)
    report = run_experiment(config)
    paths = emit_report(report, config.output_dir)
    logger.info("accuracy %.4f over %d folds; report in %s", report.accuracy, report.n_folds,
                paths["report.json"])
    return 1 if report.load_errors else 0


def _cmd_sweep(args):
    config = _load(args)
    d_values = [int(v) for v in args.d.split(",")]
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = sweep_dimension(config, d_values, csv_path=out / "sweep.csv")
    for row in rows:
        logger.info("d=%s accuracy=%s %s", row["d"], row["accuracy"], row["status"])
    return 0 if all(r["status"] == "ok" for r in rows) else 1


def _time(func, repeats):
    func()
    start = time.perf_counter()
    for _ in range(repeats):
        func()
    return (time.perf_counter() - start) / repeats


def _cmd_bench(args):
    rng = np.random.default_rng(args.seed)
    rows = []
    for shape in [(19, 9, 40), (19, 9, 100), (19, 9, 3, 60)]:
        t = rng.standard_normal(shape)
        u = rng.standard_normal((8, shape[1]))
        ranks = shape[:-1] + (5,)
        cases = {
            "vec": lambda: vec(t),
            "unfold_last": lambda: unfold(t, t.ndim - 1),
            "mode_product_1": lambda: mode_product(t, u, 1),
            "tucker": lambda: tucker(t, ranks),
            "fit_glds": lambda: fit_glds(t, d=5, m=5),
        }
        for name, func in cases.items():
            seconds = _time(func, args.repeats)
            rows.append({"op": name, "shape": "x".join(map(str, shape)),
                         "repeats": args.repeats, "seconds": f"{seconds:.6g}"})
            logger.info("%-16s %-12s %.3g s", name, rows[-1]["shape"], seconds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["op", "shape", "repeats", "seconds"])
        writer.writeheader()
        writer.writerows(rows)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="glds", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="scan a dataset directory into a manifest")
    p.add_argument("--kind", required=True, help="MSR3D, UTKinect, NUCLA or generic")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True, help="manifest JSON to write")
    p.add_argument("--topology", help="topology name or file (default per dataset kind)")
    p.add_argument("--exclude", help="MSR-Action3D exclusion list")
    p.add_argument("--labels", help="UTKinect actionLabel.txt or generic index CSV")
    p.add_argument("--no-validate", action="store_true", help="skip parsing every sample")
    p.add_argument("--strict", action="store_true", help="exit 1 if any sample fails to parse")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("synth", help="write a synthetic generic-CSV dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--trials", type=int, default=2)
    p.add_argument("--frames", type=int, default=40)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    for name, func, text in [
        ("features", _cmd_features, "extract and cache features and subspaces"),
        ("fit", _cmd_fit, "write per-sequence subspaces to a model store"),
        ("eval", _cmd_eval, "run the configured protocol and write a report"),
        ("sweep", _cmd_sweep, "accuracy as a function of the subspace dimension"),
    ]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="experiment YAML")
        p.add_argument("--output-dir", help="override the configured output directory")
        if name == "fit":
            p.add_argument("--out", help="model store (.npz)")
        if name == "sweep":
            p.add_argument("--d", required=True, help="comma-separated dimensions, e.g. 2,4,8,16")
        p.set_defaults(func=func)

    p = sub.add_parser("bench", help="tensor-operation micro-benchmarks")
    p.add_argument("--out", default="bench")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, ExperimentError, FileNotFoundError, ValueError, OSError) as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
