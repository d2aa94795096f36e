"""Skeleton sequences and their tensor time-series representations.

Representations (``N`` joints, ``M = N - 1`` rigid bodies, ``tau`` frames):

=====  ==========================  ======================================
kind   shape                       frame content
=====  ==========================  ======================================
2JP    ``(3N, tau)``               vec of the 3JP frame
2RB    ``(9M, tau)``               vec of the 3RB frame
3JP    ``(N, 3, tau)``             joint coordinates
3RB    ``(M, 9, tau)``             ``[v_i, v_j, v_i - v_j]`` per edge
3SM    ``(M(M-1), 6, tau)``        se(3) log of the relative body motion
4RB    ``(M, 9, V, tau)``          3RB stacked over camera views
=====  ==========================  ======================================

All vec operations are first-index-fastest (see :mod:`glds.tensor`).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "Topology",
    "SkeletonSequence",
    "REPRESENTATIONS",
    "load_topology",
    "normalize",
    "resample",
    "extract",
    "extract_multiview",
    "rigid_body_frames",
    "screw_motion_frames",
]

REPRESENTATIONS = ("2JP", "2RB", "3JP", "3RB", "3SM", "4RB")


@dataclass(frozen=True)
class Topology:
    """Skeleton graph: zero-based edge list and the hip-center joint."""

    name: str
    n_joints: int
    edges: tuple
    hip_index: int

    def __post_init__(self):
        if self.n_joints < 2:
            raise ValueError("a skeleton needs at least two joints")
        if not 0 <= self.hip_index < self.n_joints:
            raise ValueError(f"hip index {self.hip_index} out of range")
        for i, j in self.edges:
            if not (0 <= i < self.n_joints and 0 <= j < self.n_joints) or i == j:
                raise ValueError(f"invalid edge ({i}, {j})")


def load_topology(name_or_path):
    """Read a topology file.

    The format is ``key = value`` lines with ``#`` comments. Keys: ``name``,
    ``n_joints``, ``hip`` (1-based joint number) and ``edges`` (comma
    separated ``i-j`` pairs of 1-based joint numbers). Bundled names are
    ``msr20`` (MSR-Action3D joint order) and ``kinect20`` (Kinect SDK order).
    """
    path = Path(name_or_path)
    if not path.exists():
        path = resources.files("glds") / "data" / f"topology_{name_or_path}.txt"
        if not path.is_file():
            raise FileNotFoundError(f"unknown topology {name_or_path!r}")
    values = {}
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}: malformed line {raw!r}")
        values[key.strip()] = value.strip()
    try:
        edges = tuple(
            tuple(int(k) - 1 for k in pair.split("-"))
            for pair in values["edges"].replace("\n", ",").split(",")
            if pair.strip()
        )
        return Topology(
            name=values.get("name", path.stem),
            n_joints=int(values["n_joints"]),
            edges=edges,
            hip_index=int(values["hip"]) - 1,
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing key {exc.args[0]!r}") from None


@dataclass(frozen=True)
class SkeletonSequence:
    """Joint positions over time.

    ``joints`` has shape ``(tau, N, 3)``. ``confidence`` (``(tau, N)``) is kept
    when the source provides it but is never used for features.
    """

    joints: np.ndarray
    action: object = None
    subject: object = None
    trial: object = None
    view: object = None
    confidence: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        j = self.joints
        if j.ndim != 3 or j.shape[2] != 3:
            raise ValueError(f"joints must have shape (tau, N, 3), got {j.shape}")
        if j.shape[0] < 2:
            raise ValueError("a sequence needs at least two frames")
        if j.shape[1] < 2:
            raise ValueError("a skeleton needs at least two joints")

    @property
    def n_frames(self):
        return self.joints.shape[0]

    @property
    def n_joints(self):
        return self.joints.shape[1]


def normalize(seq, hip_index):
    """Translate every frame so that the hip joint sits at the origin."""
    if not 0 <= hip_index < seq.n_joints:
        raise ValueError(f"hip index {hip_index} out of range")
    centered = seq.joints - seq.joints[:, hip_index:hip_index + 1, :]
    return replace(seq, joints=centered)


def resample(seq, target_tau):
    """Linearly interpolate joint trajectories onto ``target_tau`` frames."""
    if target_tau < 2:
        raise ValueError("target_tau must be at least 2")
    tau = seq.n_frames
    if target_tau == tau:
        return seq
    pos = np.linspace(0.0, tau - 1, target_tau)
    lo = np.minimum(np.floor(pos).astype(int), tau - 2)
    w = (pos - lo)[:, None, None]
    joints = (1.0 - w) * seq.joints[lo] + w * seq.joints[lo + 1]
    joints[0], joints[-1] = seq.joints[0], seq.joints[-1]
    conf = None
    if seq.confidence is not None:
        conf = seq.confidence[np.rint(pos).astype(int)]
    return replace(seq, joints=joints, confidence=conf)


def _frames_last(frames):
    # (tau, ...) -> (..., tau)
    return np.moveaxis(frames, 0, -1)


def _vec_frames(frames):
    # (tau, a, b) -> (a * b, tau), each column a first-index-fastest vec
    return frames.transpose(0, 2, 1).reshape(frames.shape[0], -1).T


def rigid_body_frames(joints, edges):
    """``(tau, M, 9)`` array of ``[v_i, v_j, v_i - v_j]`` rows."""
    i = np.array([e[0] for e in edges])
    j = np.array([e[1] for e in edges])
    vi, vj = joints[:, i, :], joints[:, j, :]
    return np.concatenate([vi, vj, vi - vj], axis=2)


def _skew(w):
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -w[..., 2], w[..., 1]
    out[..., 1, 0], out[..., 1, 2] = w[..., 2], -w[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -w[..., 1], w[..., 0]
    return out


def _perpendicular(u):
    # odd in u, so opposite directions get opposite axes
    k = np.argmin(np.abs(u), axis=-1)
    basis = np.eye(3)[k]
    p = np.cross(u, basis)
    return p / np.linalg.norm(p, axis=-1, keepdims=True)


def _alignment_log(ua, ub):
    """Rotation vector of the minimal rotation taking unit ``ua`` onto ``ub``."""
    cross = np.cross(ua, ub)
    sin = np.linalg.norm(cross, axis=-1)
    cos = np.sum(ua * ub, axis=-1)
    theta = np.arctan2(sin, cos)
    axis = np.where(sin[..., None] > 1e-12, cross / np.maximum(sin, 1e-300)[..., None], 0.0)
    antiparallel = (sin <= 1e-12) & (cos < 0)
    if np.any(antiparallel):
        axis = np.where(antiparallel[..., None], _perpendicular(ua), axis)
    return theta[..., None] * axis


def _inverse_left_jacobian(omega):
    theta = np.linalg.norm(omega, axis=-1)
    k = _skew(omega)
    k2 = k @ k
    small = theta < 1e-6
    safe = np.where(small, 1.0, theta)
    coef = np.where(
        small,
        1.0 / 12.0,
        (1.0 - safe * np.sin(safe) / (2.0 * (1.0 - np.cos(safe)))) / safe**2,
    )
    return np.eye(3) - 0.5 * k + coef[..., None, None] * k2


def screw_motion_frames(joints, edges):
    """``(tau, M(M-1), 6)`` relative motions between ordered body pairs.

    For bodies ``a != b`` (row order: ``a`` outer, ``b`` inner) the motion is
    the minimal rotation turning ``a``'s direction ``v_j - v_i`` onto ``b``'s,
    combined with the translation between their start joints. The 6-vector is
    ``[omega, J(omega)^-1 t]``, the se(3) logarithm of that transform.
    Pairs involving a zero-length body are zero.
    """
    i = np.array([e[0] for e in edges])
    j = np.array([e[1] for e in edges])
    start = joints[:, i, :]
    direction = joints[:, j, :] - start
    length = np.linalg.norm(direction, axis=-1)
    degenerate = length < 1e-12
    unit = direction / np.where(degenerate, 1.0, length)[..., None]

    m = len(edges)
    a_idx, b_idx = np.array([(a, b) for a in range(m) for b in range(m) if a != b]).T
    omega = _alignment_log(unit[:, a_idx], unit[:, b_idx])
    t = start[:, b_idx] - start[:, a_idx]
    rho = np.einsum("...ij,...j->...i", _inverse_left_jacobian(omega), t)
    out = np.concatenate([omega, rho], axis=-1)
    bad = degenerate[:, a_idx] | degenerate[:, b_idx]
    if np.any(bad):
        warnings.warn(
            f"{int(bad.sum())} body pairs involve zero-length rigid bodies; set to zero",
            RuntimeWarning,
            stacklevel=2,
        )
        out[bad] = 0.0
    return out


def extract(seq, kind, edges):
    """Tensor time series of ``seq`` for a single-view representation.

    Parameters
    ----------
    seq : SkeletonSequence
        Usually already passed through :func:`normalize`.
    kind : {"2JP", "2RB", "3JP", "3RB", "3SM"}
    edges : sequence of (int, int)
        Zero-based rigid-body edges.

    Returns
    -------
    ndarray
        Time on the last axis.
    """
    joints = seq.joints
    if kind == "3JP":
        return _frames_last(joints)
    if kind == "2JP":
        return _vec_frames(joints)
    if kind in ("3RB", "2RB"):
        bodies = rigid_body_frames(joints, edges)
        return _frames_last(bodies) if kind == "3RB" else _vec_frames(bodies)
    if kind == "3SM":
        return _frames_last(screw_motion_frames(joints, edges))
    if kind == "4RB":
        raise ValueError("4RB needs several views; use extract_multiview")
    raise ValueError(f"unknown representation {kind!r}")


def extract_multiview(views, edges, kind="4RB"):
    """Stack per-view 3RB tensors into an ``(M, 9, V, tau)`` series.

    Views of different length are linearly resampled to the longest one.
    """
    if kind != "4RB":
        raise ValueError(f"unknown multiview representation {kind!r}")
    views = list(views)
    if not views:
        raise ValueError("need at least one view")
    if len({v.n_joints for v in views}) != 1:
        raise ValueError("views disagree on the joint count")
    tau = max(v.n_frames for v in views)
    aligned = [resample(v, tau) for v in views]
    return np.stack([extract(v, "3RB", edges) for v in aligned], axis=2)
