"""Skeleton dataset parsers, manifests and evaluation splits.

A manifest is a JSON file listing every sample of a dataset::

    {"format": "glds-manifest/1", "kind": "MSR3D", "root": "...",
     "topology": "msr20",
     "records": [{"id": "a01_s01_e01", "path": "a01_s01_e01_skeleton.txt",
                  "action": 1, "subject": 1, "trial": 1, "view": null,
                  "start": null, "end": null}, ...]}

Record paths are relative to ``root``. ``start``/``end`` (inclusive frame
numbers) are only used for UTKinect clips.

Split files are JSON with the fields ``protocol``, ``seed``, ``subset`` and
``folds`` (a list of ``{"train": [...], "test": [...]}`` objects of sample
ids), in that order.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .skeleton import SkeletonSequence

__all__ = [
    "DatasetError",
    "SampleRecord",
    "DatasetManifest",
    "SplitSpec",
    "Fold",
    "KINDS",
    "PROTOCOLS",
    "parse_msr_skeleton",
    "parse_utkinect_joints",
    "parse_utkinect_labels",
    "parse_nucla_sample",
    "parse_generic_csv",
    "ingest",
    "load_dataset",
    "load_sample",
    "dataset_hash",
    "load_action_sets",
    "make_split",
    "write_split",
    "read_split",
]

logger = logging.getLogger(__name__)

KINDS = ("MSR3D", "UTKinect", "NUCLA", "generic")
PROTOCOLS = ("cross_subject_half", "loocv", "cross_view", "subset_AS")
MSR_JOINTS = 20
DEFAULT_TOPOLOGY = {"MSR3D": "msr20", "UTKinect": "kinect20", "NUCLA": "kinect20",
                    "generic": "kinect20"}


class DatasetError(ValueError):
    """A sample could not be parsed; carries the offending path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = str(path)
        self.reason = message


@dataclass(frozen=True)
class SampleRecord:
    id: str
    path: str
    action: object
    subject: int
    trial: int | None = None
    view: int | None = None
    start: int | None = None
    end: int | None = None


@dataclass
class DatasetManifest:
    root: str
    kind: str
    records: list = field(default_factory=list)
    topology: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}; expected one of {KINDS}")
        if self.topology is None:
            self.topology = DEFAULT_TOPOLOGY[self.kind]
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate sample ids in manifest")

    def to_dict(self):
        return {
            "format": "glds-manifest/1",
            "kind": self.kind,
            "root": self.root,
            "topology": self.topology,
            "records": [asdict(r) for r in self.records],
        }

    @classmethod
    def from_dict(cls, payload):
        records = [SampleRecord(**r) for r in payload.get("records", [])]
        return cls(root=payload["root"], kind=payload["kind"], records=records,
                   topology=payload.get("topology"))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path, check_files=True):
        manifest = cls.from_dict(json.loads(Path(path).read_text()))
        if check_files:
            missing = [r.path for r in manifest.records
                       if not (Path(manifest.root) / r.path).exists()]
            if missing:
                raise FileNotFoundError(
                    f"{len(missing)} manifest files are missing, e.g. {missing[0]}")
        return manifest

    def by_id(self):
        return {r.id: r for r in self.records}


# -- parsers ---------------------------------------------------------------

def _read_floats(path, lines):
    rows = []
    for lineno, line in enumerate(lines, 1):
        tokens = line.replace(",", " ").split()
        if not tokens:
            continue
        try:
            rows.append([float(t) for t in tokens])
        except ValueError:
            raise DatasetError(path, f"non-numeric token on line {lineno}") from None
    return rows


def parse_msr_skeleton(path, meta=None):
    """MSR-Action3D ``*_skeleton.txt``: 20 rows of ``x y z c`` per frame."""
    path = Path(path)
    rows = _read_floats(path, path.read_text().splitlines())
    if any(len(r) != 4 for r in rows):
        raise DatasetError(path, "expected 4 values per joint row")
    if len(rows) % MSR_JOINTS:
        raise DatasetError(path, f"frame misalignment: {len(rows)} joint rows is not a "
                                 f"multiple of {MSR_JOINTS}")
    data = np.asarray(rows, dtype=float).reshape(-1, MSR_JOINTS, 4)
    if data.shape[0] < 2:
        raise DatasetError(path, "fewer than 2 frames")
    if not np.any(data[:, :, :3]):
        raise DatasetError(path, "all joint positions are zero")
    return SkeletonSequence(joints=data[:, :, :3].copy(), confidence=data[:, :, 3].copy(),
                            **(meta or {}))


def parse_utkinect_joints(path, start=None, end=None, meta=None):
    """UTKinect ``joints_sNN_eNN.txt``: frame number followed by 60 floats.

    Frames with ``start <= frame <= end`` are kept.
    """
    path = Path(path)
    rows = _read_floats(path, path.read_text().splitlines())
    if any(len(r) != 61 for r in rows):
        raise DatasetError(path, "expected a frame number and 60 coordinates per row")
    data = np.asarray(rows, dtype=float)
    frames = data[:, 0]
    keep = np.ones(len(frames), dtype=bool)
    if start is not None:
        keep &= frames >= start
    if end is not None:
        keep &= frames <= end
    data = data[keep]
    # the release repeats some frame numbers; keep the first occurrence
    _, first = np.unique(data[:, 0], return_index=True)
    data = data[np.sort(first)]
    if data.shape[0] < 2:
        raise DatasetError(path, f"fewer than 2 frames in [{start}, {end}]")
    return SkeletonSequence(joints=data[:, 1:].reshape(-1, 20, 3), **(meta or {}))


def parse_utkinect_labels(path):
    """``actionLabel.txt``: a sequence id line followed by ``action: start end`` lines.

    Returns ``{sequence_id: [(action, start, end), ...]}``; a ``NaN`` bound
    becomes ``None`` (open interval).
    """
    path = Path(path)
    out = {}
    current = None
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if ":" not in line:
            current = line
            out[current] = []
            continue
        if current is None:
            raise DatasetError(path, f"label before any sequence id on line {lineno}")
        action, _, bounds = line.partition(":")
        parts = bounds.split()
        if len(parts) != 2:
            raise DatasetError(path, f"expected 'action: start end' on line {lineno}")
        start, end = (None if p.lower() == "nan" else int(float(p)) for p in parts)
        out[current].append((action.strip(), start, end))
    return out


def parse_nucla_sample(path, meta=None):
    """N-UCLA sample directory holding one ``*skeletons.txt`` file per frame.

    Each frame file lists joint rows of ``x, y, z, confidence`` (comma or
    whitespace separated); header lines are ignored and the first skeleton
    (20 rows) is used.
    """
    path = Path(path)
    files = sorted(path.glob("*skeletons.txt"), key=_natural_key)
    frames = []
    for f in files:
        rows = []
        for line in f.read_text().splitlines():
            tokens = line.replace(",", " ").split()
            try:
                values = [float(t) for t in tokens]
            except ValueError:
                continue
            if len(values) >= 3:
                rows.append(values[:3])
        if len(rows) >= 20:
            frames.append(rows[:20])
    if len(frames) < 2:
        raise DatasetError(path, "fewer than 2 frames with a complete skeleton")
    return SkeletonSequence(joints=np.asarray(frames, dtype=float), **(meta or {}))


def parse_generic_csv(path, meta=None):
    """CSV with header ``frame,joint,x,y,z``; frames and joints are 0-based integers."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"frame", "joint", "x", "y", "z"} - set(reader.fieldnames or [])
        if missing:
            raise DatasetError(path, f"missing columns {sorted(missing)}")
        try:
            rows = [(int(r["frame"]), int(r["joint"]), float(r["x"]), float(r["y"]),
                     float(r["z"])) for r in reader]
        except (TypeError, ValueError):
            raise DatasetError(path, "non-numeric value") from None
    if not rows:
        raise DatasetError(path, "no rows")
    arr = np.asarray(rows)
    n_frames = int(arr[:, 0].max()) + 1
    n_joints = int(arr[:, 1].max()) + 1
    if len(rows) != n_frames * n_joints:
        raise DatasetError(path, "every frame must list every joint exactly once")
    joints = np.full((n_frames, n_joints, 3), np.nan)
    joints[arr[:, 0].astype(int), arr[:, 1].astype(int)] = arr[:, 2:]
    if np.isnan(joints).any():
        raise DatasetError(path, "every frame must list every joint exactly once")
    if n_frames < 2:
        raise DatasetError(path, "fewer than 2 frames")
    return SkeletonSequence(joints=joints, **(meta or {}))


def _natural_key(p):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", p.name)]


# -- manifests -------------------------------------------------------------

_MSR_NAME = re.compile(r"a(\d+)_s(\d+)_e(\d+)_skeleton\.txt$")
_UTK_NAME = re.compile(r"joints_s(\d+)_e(\d+)\.txt$")
_NUCLA_NAME = re.compile(r"a(\d+)_s(\d+)_e(\d+)$")
_VIEW_NAME = re.compile(r"view_?(\d+)$")


def _read_exclusions(path):
    source = Path(path) if path else resources.files("glds") / "data" / "msr_exclude.txt"
    lines = source.read_text().splitlines()
    return {ln.split("#", 1)[0].strip() for ln in lines} - {""}


def ingest(root, kind, topology=None, exclude=None, labels=None):
    """Scan ``root`` and build a :class:`DatasetManifest`.

    Parameters
    ----------
    root : path
    kind : {"MSR3D", "UTKinect", "NUCLA", "generic"}
    exclude : path, optional
        MSR-Action3D exclusion list (defaults to the bundled one).
    labels : path, optional
        UTKinect ``actionLabel.txt`` (default ``root/actionLabel.txt``) or the
        generic index CSV (default ``root/index.csv``, columns
        ``file,action,subject,trial,view``).
    """
    root = Path(root)
    if kind not in KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}")
    records = []
    if kind == "MSR3D":
        skip = _read_exclusions(exclude)
        for f in sorted(root.rglob("*_skeleton.txt")):
            match = _MSR_NAME.search(f.name)
            if not match:
                continue
            a, s, e = (int(g) for g in match.groups())
            sid = f"a{a:02d}_s{s:02d}_e{e:02d}"
            if sid in skip:
                continue
            records.append(SampleRecord(id=sid, path=str(f.relative_to(root)), action=a,
                                        subject=s, trial=e))
    elif kind == "UTKinect":
        label_file = Path(labels) if labels else root / "actionLabel.txt"
        segments = parse_utkinect_labels(label_file)
        joint_files = {}
        for f in root.rglob("joints_s*_e*.txt"):
            match = _UTK_NAME.search(f.name)
            if match:
                joint_files[tuple(int(g) for g in match.groups())] = f
        for seq_id, clips in sorted(segments.items()):
            match = re.fullmatch(r"s(\d+)_e(\d+)", seq_id)
            if not match:
                raise DatasetError(label_file, f"unrecognized sequence id {seq_id!r}")
            s, e = (int(g) for g in match.groups())
            if (s, e) not in joint_files:
                raise DatasetError(label_file, f"no joint file for {seq_id}")
            for action, start, end in clips:
                records.append(SampleRecord(
                    id=f"{seq_id}_{action}", path=str(joint_files[s, e].relative_to(root)),
                    action=action, subject=s, trial=e, start=start, end=end))
    elif kind == "NUCLA":
        for d in sorted(p for p in root.rglob("*") if p.is_dir()):
            match = _NUCLA_NAME.fullmatch(d.name)
            view = _VIEW_NAME.search(d.parent.name)
            if not match or not view:
                continue
            a, s, e = (int(g) for g in match.groups())
            v = int(view.group(1))
            records.append(SampleRecord(id=f"a{a:02d}_s{s:02d}_e{e:02d}_v{v:02d}",
                                        path=str(d.relative_to(root)), action=a, subject=s,
                                        trial=e, view=v))
    else:
        index = Path(labels) if labels else root / "index.csv"
        with open(index, newline="") as fh:
            for row in csv.DictReader(fh):
                view = row.get("view") or None
                trial = row.get("trial") or None
                records.append(SampleRecord(
                    id=Path(row["file"]).stem, path=row["file"], action=_maybe_int(row["action"]),
                    subject=int(row["subject"]), trial=None if trial is None else int(trial),
                    view=None if view is None else int(view)))
    return DatasetManifest(root=str(root), kind=kind, records=records, topology=topology)


def _maybe_int(value):
    try:
        return int(value)
    except (TypeError, ValueError):
        return value


def load_sample(manifest, record):
    """Parse one record with the parser of the manifest's dataset kind."""
    path = Path(manifest.root) / record.path
    meta = {"action": record.action, "subject": record.subject, "trial": record.trial,
            "view": record.view}
    if manifest.kind == "MSR3D":
        return parse_msr_skeleton(path, meta)
    if manifest.kind == "UTKinect":
        return parse_utkinect_joints(path, record.start, record.end, meta)
    if manifest.kind == "NUCLA":
        return parse_nucla_sample(path, meta)
    return parse_generic_csv(path, meta)


def load_dataset(manifest, fail_fast=False):
    """Parse every record.

    Returns
    -------
    samples : list of (SkeletonSequence, SampleRecord)
    errors : list of DatasetError
        Empty when ``fail_fast`` is set, since the first error is raised.
    """
    samples, errors = [], []
    for record in manifest.records:
        try:
            samples.append((load_sample(manifest, record), record))
        except (OSError, DatasetError) as exc:
            err = exc if isinstance(exc, DatasetError) else DatasetError(record.path, str(exc))
            if fail_fast:
                raise err from exc
            logger.warning("skipping %s", err)
            errors.append(err)
    return samples, errors


def dataset_hash(manifest):
    """SHA-256 over the manifest content and every referenced file."""
    h = hashlib.sha256()
    h.update(json.dumps(manifest.to_dict(), sort_keys=True).encode())
    for record in manifest.records:
        path = Path(manifest.root) / record.path
        files = sorted(path.rglob("*")) if path.is_dir() else [path]
        for f in files:
            if f.is_file():
                h.update(f.name.encode())
                h.update(f.read_bytes())
    return h.hexdigest()


# -- splits ----------------------------------------------------------------

def load_action_sets(path=None):
    """AS1/AS2/AS3 action lists (bundled MSR-Action3D defaults)."""
    if path is None:
        text = (resources.files("glds") / "data" / "msr_action_sets.yaml").read_text()
    else:
        text = Path(path).read_text()
    return {k: list(v) for k, v in yaml.safe_load(text).items()}


@dataclass(frozen=True)
class SplitSpec:
    """Evaluation protocol.

    ``train_subjects`` of ``None`` means odd subject numbers train, even ones
    test; ``"random"`` draws half of the subjects with the split seed.
    ``subset`` names an action set (e.g. ``"AS1"``) applied before splitting.
    """

    protocol: str = "cross_subject_half"
    subset: str | None = None
    train_subjects: object = None
    train_views: tuple | None = None
    test_views: tuple | None = None
    action_sets: str | None = None

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")
        if self.protocol == "subset_AS" and not self.subset:
            raise ValueError("protocol subset_AS needs a subset name")


@dataclass(frozen=True)
class Fold:
    train: tuple
    test: tuple


def _select(records, spec):
    if not spec.subset:
        return list(records)
    sets = load_action_sets(spec.action_sets)
    if spec.subset not in sets:
        raise ValueError(f"unknown action subset {spec.subset!r}; known: {sorted(sets)}")
    wanted = set(sets[spec.subset])
    return [r for r in records if r.action in wanted]


def make_split(manifest, spec, seed=0, records=None):
    """Materialize the protocol as a list of folds of sample ids.

    ``records`` restricts the split to a subset of the manifest (for example
    the samples that parsed successfully).
    """
    records = _select(manifest.records if records is None else records, spec)
    if not records:
        raise ValueError("no samples left to split")
    subjects = sorted({r.subject for r in records})

    if spec.protocol == "loocv":
        ids = [r.id for r in records]
        return [Fold(train=tuple(ids[:k] + ids[k + 1:]), test=(ids[k],)) for k in range(len(ids))]

    if spec.protocol == "cross_view":
        views = sorted({r.view for r in records if r.view is not None})
        test_views = set(spec.test_views or views[-1:])
        train_views = set(spec.train_views or [v for v in views if v not in test_views])
        if train_views & test_views:
            raise ValueError("train and test views overlap")
        train = tuple(r.id for r in records if r.view in train_views)
        test = tuple(r.id for r in records if r.view in test_views)
    else:
        if spec.train_subjects is None:
            chosen = {s for s in subjects if s % 2 == 1}
        elif spec.train_subjects == "random":
            rng = np.random.default_rng(seed)
            chosen = set(rng.choice(subjects, size=math.ceil(len(subjects) / 2), replace=False)
                         .tolist())
        else:
            chosen = {int(s) for s in spec.train_subjects}
            unknown = chosen - set(subjects)
            if unknown:
                raise ValueError(f"unknown subjects {sorted(unknown)}")
        train = tuple(r.id for r in records if r.subject in chosen)
        test = tuple(r.id for r in records if r.subject not in chosen)

    if not train or not test:
        raise ValueError(f"protocol {spec.protocol} leaves one side of the split empty")
    return [Fold(train=train, test=test)]


def write_split(path, spec, seed, folds):
    payload = {
        "protocol": spec.protocol,
        "seed": seed,
        "subset": spec.subset,
        "folds": [{"train": list(f.train), "test": list(f.test)} for f in folds],
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def read_split(path):
    payload = json.loads(Path(path).read_text())
    return payload, [Fold(train=tuple(f["train"]), test=tuple(f["test"])) for f in payload["folds"]]
