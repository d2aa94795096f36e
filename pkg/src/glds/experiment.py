"""Experiment configuration, the evaluation pipeline, sweeps and reports."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from .datasets import (DatasetManifest, SampleRecord, SplitSpec, dataset_hash, load_dataset,
                       make_split)
from .estimators import GLDSSubspaces, GrassmannNearestNeighbor, GrassmannSRC, SkeletonFeatures
from .skeleton import REPRESENTATIONS

__all__ = [
    "ConfigError",
    "ExperimentError",
    "ModelConfig",
    "ClassifierConfig",
    "ProtocolConfig",
    "ExperimentConfig",
    "load_config",
    "save_config",
    "FeatureCache",
    "EvaluationReport",
    "prepare",
    "run_experiment",
    "sweep_dimension",
    "emit_report",
    "report_digest",
]

logger = logging.getLogger(__name__)

ENV_OUTPUT_DIR = "GLDS_OUTPUT_DIR"
ENV_THREADS = "GLDS_THREADS"
VOLATILE_FIELDS = ("timings", "created", "digest")


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    """Failure inside one pipeline stage."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class ModelConfig:
    method: str = "glds"
    d: int = 5
    m: int | None = None          # None: m == d
    ranks: list | None = None     # None: full mode ranks
    margin: float = 0.01
    tucker_max_iter: int = 25
    tucker_tol: float = 1e-7


@dataclass
class ClassifierConfig:
    kind: str = "src"
    lam: float | None = None      # None: 0.01 * d
    tol: float = 1e-8
    max_iter: int = 1000
    affine: bool = False


@dataclass
class ProtocolConfig:
    name: str = "cross_subject_half"
    subset: str | None = None
    train_subjects: object = None
    train_views: list | None = None
    test_views: list | None = None
    action_sets: str | None = None

    def split_spec(self):
        return SplitSpec(
            protocol=self.name, subset=self.subset, train_subjects=self.train_subjects,
            train_views=None if self.train_views is None else tuple(self.train_views),
            test_views=None if self.test_views is None else tuple(self.test_views),
            action_sets=self.action_sets)


@dataclass
class ExperimentConfig:
    manifest: str = ""
    representation: str = "3RB"
    center: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    output_dir: str = "runs/default"
    cache_dir: str | None = None
    seed: int = 0
    threads: int = 1
    fail_fast: bool = False

    def validate(self):
        if self.representation not in REPRESENTATIONS:
            raise ConfigError(f"unknown representation {self.representation!r}; "
                              f"expected one of {REPRESENTATIONS}")
        mc, cc = self.model, self.classifier
        if mc.method not in ("glds", "lds"):
            raise ConfigError(f"unknown model method {mc.method!r}")
        if mc.d < 1:
            raise ConfigError("model.d must be >= 1")
        if mc.m is not None and mc.m < 1:
            raise ConfigError("model.m must be >= 1")
        if not 0.0 < mc.margin < 1.0:
            raise ConfigError("model.margin must lie in (0, 1)")
        if mc.ranks is not None and any(int(r) < 1 for r in mc.ranks):
            raise ConfigError("model.ranks must be positive")
        if mc.tucker_max_iter < 0 or mc.tucker_tol < 0:
            raise ConfigError("Tucker iteration settings must be non-negative")
        if cc.kind not in ("src", "nn"):
            raise ConfigError(f"unknown classifier {cc.kind!r}")
        if cc.lam is not None and cc.lam < 0:
            raise ConfigError("classifier.lam must be >= 0")
        if cc.tol <= 0 or cc.max_iter < 1:
            raise ConfigError("classifier tolerances must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        try:
            self.protocol.split_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, payload):
        payload = dict(payload or {})
        nested = {"model": ModelConfig, "classifier": ClassifierConfig,
                  "protocol": ProtocolConfig}
        kwargs = {}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, value in payload.items():
            if key in nested:
                sub = nested[key]
                sub_known = {f.name for f in dataclasses.fields(sub)}
                bad = set(value or {}) - sub_known
                if bad:
                    raise ConfigError(f"unknown keys in {key}: {sorted(bad)}")
                kwargs[key] = sub(**(value or {}))
            else:
                kwargs[key] = value
        return cls(**kwargs)


def load_config(path, env=None):
    """Read a YAML config; ``GLDS_OUTPUT_DIR`` and ``GLDS_THREADS`` override it."""
    env = os.environ if env is None else env
    config = ExperimentConfig.from_dict(yaml.safe_load(Path(path).read_text()))
    if env.get(ENV_OUTPUT_DIR):
        config.output_dir = env[ENV_OUTPUT_DIR]
    if env.get(ENV_THREADS):
        config.threads = int(env[ENV_THREADS])
    return config.validate()


def save_config(config, path):
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))


# -- caching ---------------------------------------------------------------

def _key(*parts):
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()[:24]


class FeatureCache:
    """In-memory (and optionally on-disk) store of per-sample features and subspaces.

    Features are keyed by (dataset hash, representation, centering,
    topology); subspaces additionally by the model settings, so classifier
    changes never trigger recomputation.
    """

    def __init__(self, directory=None):
        self.directory = None if directory is None else Path(directory)
        self._memory = {}
        self.misses = defaultdict(int)

    def _path(self, kind, key):
        return self.directory / f"{kind}-{key}.npz"

    def get(self, kind, key):
        if (kind, key) in self._memory:
            return self._memory[kind, key]
        if self.directory is not None and self._path(kind, key).exists():
            with np.load(self._path(kind, key), allow_pickle=False) as data:
                ids = [str(i) for i in data["ids"]]
                arrays = [data[f"a{k}"] for k in range(len(ids))]
            value = dict(zip(ids, arrays))
            self._memory[kind, key] = value
            return value
        return None

    def put(self, kind, key, value):
        self._memory[kind, key] = value
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            ids = list(value)
            np.savez(self._path(kind, key), ids=np.array(ids),
                     **{f"a{k}": value[i] for k, i in enumerate(ids)})

    def fetch(self, kind, key, compute):
        value = self.get(kind, key)
        if value is None:
            self.misses[kind] += 1
            value = compute()
            self.put(kind, key, value)
        return value


# -- pipeline --------------------------------------------------------------

def _group_views(samples):
    # multiview samples: one group per (action, subject, trial), views sorted
    groups = defaultdict(list)
    for seq, rec in samples:
        groups[rec.action, rec.subject, rec.trial].append((rec.view, seq))
    out = []
    for (action, subject, trial), views in sorted(groups.items(), key=lambda kv: str(kv[0])):
        views.sort(key=lambda v: (v[0] is None, v[0]))
        rec = SampleRecord(id=f"{action}_{subject}_{trial}", path="", action=action,
                           subject=subject, trial=trial)
        out.append(([seq for _, seq in views], rec))
    return out


@contextmanager
def _stage(timings, name):
    start = time.perf_counter()
    try:
        yield
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError(name, f"{type(exc).__name__}: {exc}") from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


def prepare(config, cache=None, timings=None):
    """Load the dataset and compute (cached) features and subspaces.

    Returns ``(manifest, records, subspaces, load_errors, dataset_hash)`` where
    ``subspaces`` maps sample id to its basis.
    """
    cache = FeatureCache(config.cache_dir) if cache is None else cache
    timings = {} if timings is None else timings
    with _stage(timings, "load"):
        manifest = DatasetManifest.load(config.manifest)
        samples, errors = load_dataset(manifest, fail_fast=config.fail_fast)
        if not samples:
            raise ExperimentError("load", "no sample could be loaded")
        if config.representation == "4RB":
            samples = _group_views(samples)
        data_hash = dataset_hash(manifest)

    with _stage(timings, "features"):
        feature_key = _key(data_hash, config.representation, config.center, manifest.topology)
        extractor = SkeletonFeatures(kind=config.representation, topology=manifest.topology,
                                     center=config.center)

        def compute_features():
            seqs = [s for s, _ in samples]
            series = extractor.fit(seqs).transform(seqs)
            return {rec.id: x for (_, rec), x in zip(samples, series)}

        features = cache.fetch("features", feature_key, compute_features)

    with _stage(timings, "fit"):
        mc = config.model
        embedder = GLDSSubspaces(d=mc.d, m=mc.m, ranks=mc.ranks, method=mc.method,
                                 margin=mc.margin, max_iter=mc.tucker_max_iter,
                                 tol=mc.tucker_tol, n_jobs=config.threads)
        subspace_key = _key(feature_key, asdict(mc))

        def compute_subspaces():
            ids = [rec.id for _, rec in samples]
            series = [features[i] for i in ids]
            bases = embedder.fit(series).transform(series)
            return dict(zip(ids, bases))

        subspaces = cache.fetch("subspaces", subspace_key, compute_subspaces)

    records = [rec for _, rec in samples]
    return manifest, records, subspaces, errors, data_hash


def _classifier(config):
    cc = config.classifier
    if cc.kind == "nn":
        return GrassmannNearestNeighbor()
    return GrassmannSRC(lam=cc.lam, tol=cc.tol, max_iter=cc.max_iter, affine=cc.affine,
                        n_jobs=config.threads)


@dataclass
class EvaluationReport:
    """Accuracy bookkeeping for one protocol run.

    ``confusion[i][j]`` counts test samples of class ``classes[i]`` predicted
    as ``classes[j]``.
    """

    classes: list
    confusion: list
    fold_accuracy: list
    accuracy: float
    per_class_accuracy: dict
    class_counts: dict
    n_folds: int
    dataset_hash: str
    config: dict
    load_errors: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    created: str = ""
    split: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        cm = np.asarray(self.confusion, dtype=int)
        total = int(cm.sum())
        if total == 0:
            raise ValueError("empty confusion matrix")
        if not np.isclose(self.accuracy, np.trace(cm) / total, rtol=0, atol=1e-12):
            raise ValueError("accuracy does not match the confusion matrix")
        for k, c in enumerate(self.classes):
            if int(cm[k].sum()) != self.class_counts[str(c)]:
                raise ValueError(f"confusion row for {c} does not match its test count")

    def to_dict(self):
        out = asdict(self)
        out.pop("split")
        out["digest"] = report_digest(out)
        return out

    @classmethod
    def from_dict(cls, payload):
        payload = {k: v for k, v in payload.items() if k != "digest"}
        return cls(**payload)


def report_digest(report_dict):
    """Hash of a report dictionary ignoring timings and timestamps."""
    stable = {k: v for k, v in report_dict.items() if k not in VOLATILE_FIELDS}
    return hashlib.sha256(json.dumps(stable, sort_keys=True).encode()).hexdigest()


def _evaluate(config, manifest, records, subspaces, errors, data_hash, timings):
    spec = config.protocol.split_spec()
    with _stage(timings, "split"):
        folds = make_split(manifest, spec, config.seed, records=records)
    by_id = {r.id: r for r in records}
    labels_all = sorted({by_id[i].action for f in folds for i in f.test + f.train}, key=str)
    index = {c: k for k, c in enumerate(labels_all)}
    confusion = np.zeros((len(labels_all), len(labels_all)), dtype=int)
    fold_accuracy = []
    with _stage(timings, "classify"):
        for fold in folds:
            clf = _classifier(config)
            clf.fit(np.stack([subspaces[i] for i in fold.train]),
                    [by_id[i].action for i in fold.train])
            pred = clf.predict(np.stack([subspaces[i] for i in fold.test]))
            truth = [by_id[i].action for i in fold.test]
            hits = 0
            for t, p in zip(truth, pred.tolist()):
                confusion[index[t], index[p]] += 1
                hits += t == p
            fold_accuracy.append(hits / len(truth))

    counts = confusion.sum(axis=1)
    keep = [k for k in range(len(labels_all)) if counts[k] > 0 or confusion[:, k].sum() > 0]
    classes = [labels_all[k] for k in keep]
    cm = confusion[np.ix_(keep, keep)]
    per_class = {str(c): (float(cm[k, k] / cm[k].sum()) if cm[k].sum() else None)
                 for k, c in enumerate(classes)}
    return EvaluationReport(
        classes=classes,
        confusion=cm.tolist(),
        fold_accuracy=fold_accuracy,
        accuracy=float(np.trace(cm) / cm.sum()),
        per_class_accuracy=per_class,
        class_counts={str(c): int(cm[k].sum()) for k, c in enumerate(classes)},
        n_folds=len(folds),
        dataset_hash=data_hash,
        config=config.to_dict(),
        load_errors=[str(e) for e in errors],
        timings=dict(timings),
        created=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        split={"protocol": spec.protocol, "seed": config.seed, "subset": spec.subset,
               "folds": [{"train": list(f.train), "test": list(f.test)} for f in folds]},
    )


def run_experiment(config, cache=None):
    """Run normalize -> extract -> fit -> dictionary -> classify for one config."""
    config.validate()
    cache = FeatureCache(config.cache_dir) if cache is None else cache
    timings = {}
    prepared = prepare(config, cache, timings)
    return _evaluate(config, *prepared, timings)


def sweep_dimension(config, d_values, cache=None, csv_path=None):
    """Accuracy for each subspace dimension in ``d_values``.

    Features are shared through the cache. A failing ``d`` is recorded with
    its error message and the sweep continues. Returns a list of row dicts
    with keys ``d``, ``m``, ``accuracy``, ``status``.
    """
    config.validate()
    cache = FeatureCache(config.cache_dir) if cache is None else cache
    rows = []
    for d in d_values:
        cfg = dataclasses.replace(config, model=dataclasses.replace(config.model, d=int(d)))
        m = cfg.model.d if cfg.model.m is None else cfg.model.m
        try:
            report = run_experiment(cfg, cache=cache)
            rows.append({"d": int(d), "m": m, "accuracy": report.accuracy, "status": "ok"})
        except Exception as exc:  # noqa: BLE001 - recorded per row
            logger.error("sweep d=%s failed: %s", d, exc)
            rows.append({"d": int(d), "m": m, "accuracy": None, "status": f"error: {exc}"})
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["d", "m", "accuracy", "status"])
            writer.writeheader()
            writer.writerows(rows)
    return rows


def emit_report(report, directory):
    """Write ``report.json``, ``confusion.csv``, ``config.yaml`` and ``split.json``."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        paths = {name: directory / name for name in
                 ("report.json", "confusion.csv", "config.yaml", "split.json")}
        paths["report.json"].write_text(json.dumps(report.to_dict(), indent=1) + "\n")
        with open(paths["confusion.csv"], "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["true\\predicted"] + [str(c) for c in report.classes])
            for c, row in zip(report.classes, report.confusion):
                writer.writerow([str(c)] + row)
        paths["config.yaml"].write_text(yaml.safe_dump(report.config, sort_keys=False))
        if report.split is not None:
            paths["split.json"].write_text(json.dumps(report.split, indent=1) + "\n")
        else:
            del paths["split.json"]
    except OSError as exc:
        raise OSError(f"could not write report to {directory}: {exc}") from exc
    return paths
