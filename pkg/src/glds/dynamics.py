"""Linear dynamical systems over vector and tensor time series.

A tensor time series is an ndarray whose last axis is time. The generalized
model treats each frame as a tensor and the observation matrix acts on it
through :func:`tensor_matrix_product`; identification goes through a Tucker
decomposition of the stacked series instead of a plain SVD.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .grassmann import GrassmannPoint
from .tensor import (_fix_signs, kron_factors, leading_left_singular_vectors, tucker, unfold,
                     unvec, vec)

__all__ = [
    "GldsModel",
    "RankWarning",
    "tensor_matrix_product",
    "pinv",
    "stabilize",
    "spectral_radius",
    "observability",
    "subspace_from_observability",
    "fit_lds",
    "fit_glds",
    "simulate_lds",
]

logger = logging.getLogger(__name__)

DEFAULT_MARGIN = 0.01
PINV_RCOND = 1e-10


class RankWarning(UserWarning):
    """A requested dimension exceeds the numerical rank of the data."""


@dataclass(frozen=True)
class GldsModel:
    """Identified system ``x(t+1) = A x(t)``, ``y(t) = C x(t)``.

    ``state_shape`` and ``obs_shape`` give the tensor shapes of hidden and
    observed frames; their products are ``A.shape[0]`` and ``C.shape[0]``.
    ``Q`` and ``R`` are residual covariances and are not used downstream.
    """

    A: np.ndarray
    C: np.ndarray
    state_shape: tuple
    obs_shape: tuple
    d: int
    Q: np.ndarray | None = None
    R: np.ndarray | None = None

    def __post_init__(self):
        n_state = int(np.prod(self.state_shape))
        n_obs = int(np.prod(self.obs_shape))
        if self.A.shape != (n_state, n_state):
            raise ValueError(f"A must be {n_state}x{n_state}, got {self.A.shape}")
        if self.C.shape != (n_obs, n_state):
            raise ValueError(f"C must be {n_obs}x{n_state}, got {self.C.shape}")

    @property
    def state_dim(self):
        return self.A.shape[0]

    @property
    def obs_dim(self):
        return self.C.shape[0]


def tensor_matrix_product(c, x, out_shape=None):
    """Apply matrix ``c`` to tensor ``x`` so that ``vec(result) == c @ vec(x)``.

    ``out_shape`` defaults to ``x.shape`` when ``c`` is square, otherwise to
    ``(c.shape[0],)``.
    """
    c = np.asarray(c)
    x = np.asarray(x)
    if c.ndim != 2 or c.shape[1] != x.size:
        raise ValueError(f"matrix with shape {c.shape} cannot act on a tensor of size {x.size}")
    if out_shape is None:
        out_shape = x.shape if c.shape[0] == x.size else (c.shape[0],)
    out_shape = tuple(out_shape)
    if int(np.prod(out_shape)) != c.shape[0]:
        raise ValueError(f"output shape {out_shape} does not hold {c.shape[0]} entries")
    return unvec(c @ vec(x), out_shape)


def pinv(a, rcond=PINV_RCOND):
    """Moore-Penrose inverse dropping singular values below ``rcond * s_max``."""
    return np.linalg.pinv(a, rcond=rcond)


def spectral_radius(a):
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def stabilize(a, margin=DEFAULT_MARGIN):
    """Scale ``a`` so its spectral radius is at most ``1 - margin``.

    Matrices that already satisfy the bound are returned unchanged, which also
    makes the operation idempotent.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not 0.0 < margin < 1.0:
        raise ValueError(f"margin must lie in (0, 1), got {margin}")
    target = 1.0 - margin
    rho = spectral_radius(a)
    if rho <= target + 1e-12:
        return a
    return a * (target / rho)


def observability(model, m):
    """Extended observability matrix ``[C; CA; ...; CA^m]``."""
    if m < 0:
        raise ValueError("m must be non-negative")
    blocks = [model.C]
    for _ in range(m):
        blocks.append(blocks[-1] @ model.A)
    return np.vstack(blocks)


def subspace_from_observability(o, d):
    """Span of the first ``d`` left singular vectors of ``o``."""
    o = np.asarray(o, dtype=float)
    if not 1 <= d <= min(o.shape):
        raise ValueError(f"d={d} must lie in [1, {min(o.shape)}]")
    s = np.linalg.svd(o, compute_uv=False)
    if s[0] == 0.0 or s[d - 1] <= s[0] * PINV_RCOND:
        warnings.warn(
            f"observability matrix has numerical rank below d={d}; basis completed arbitrarily",
            RankWarning,
            stacklevel=2,
        )
    return GrassmannPoint(leading_left_singular_vectors(o, d))


def _residual_cov(e):
    return e @ e.T / max(e.shape[1] - 1, 1)


def _finish(a, c, states, y, state_shape, obs_shape, d, margin):
    if margin is not None:
        a = stabilize(a, margin)
    q = _residual_cov(states[:, 1:] - a @ states[:, :-1])
    r = _residual_cov(y - c @ states)
    return GldsModel(A=a, C=c, state_shape=tuple(state_shape), obs_shape=tuple(obs_shape),
                     d=d, Q=q, R=r)


def fit_lds(y, d, margin=DEFAULT_MARGIN):
    """Closed-form SVD identification for a vector time series ``y`` (n x tau).

    ``C`` is the leading ``d`` left singular vectors; ``A`` solves the one-step
    least-squares problem on the state sequence ``S_d V_d^T`` through the shift
    matrices of the sequence. ``margin=None`` skips stabilization.

    ``d`` may exceed the numerical rank (or ``tau``); the basis is then
    completed with arbitrary orthonormal directions carrying zero energy and a
    :class:`RankWarning` is issued.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise ValueError("y must be a matrix (features x time)")
    n, tau = y.shape
    if tau < 2:
        raise ValueError("need at least two frames")
    if not 1 <= d <= n:
        raise ValueError(f"d={d} must lie in [1, {n}]")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")

    u, s, vt = np.linalg.svd(y, full_matrices=d > min(n, tau))
    if s[0] == 0.0:
        raise ValueError("rank zero observation")
    s = np.concatenate([s, np.zeros(max(d - s.size, 0))])
    if s[d - 1] <= s[0] * PINV_RCOND:
        warnings.warn(f"d={d} exceeds the numerical rank of the observations", RankWarning,
                      stacklevel=2)
    v = vt[:d].T
    if v.shape[1] < d:
        v = np.hstack([v, np.zeros((tau, d - v.shape[1]))])
    # flip whole singular triplets so C follows the largest-entry-positive rule
    idx = np.argmax(np.abs(u[:, :d]), axis=0)
    signs = np.where(u[idx, np.arange(d)] < 0, -1.0, 1.0)
    c = u[:, :d] * signs
    v = v * signs
    sigma = np.diag(s[:d])

    shifted = v[1:].T @ v[:-1]      # V^T D1 V
    lagged = v[:-1].T @ v[:-1]      # V^T D2 V
    a = sigma @ shifted @ pinv(lagged) @ pinv(sigma)
    states = sigma @ v.T
    return _finish(a, c, states, y, (d,), (n,), d, margin)


def fit_glds(series, ranks=None, d=5, m=5, margin=DEFAULT_MARGIN, temporal_rank=None,
             max_iter=25, tol=1e-7):
    """Identify a generalized LDS from a tensor time series and embed it.

    Parameters
    ----------
    series : ndarray
        Order-n array, time on the last axis.
    ranks : sequence of int, optional
        Tucker ranks of the n-1 frame modes; full mode sizes by default.
    d : int
        Dimension of the returned subspace.
    m : int
        Highest power of ``A`` in the observability matrix.
    margin : float or None
        Stability margin passed to :func:`stabilize`; ``None`` disables it.
    temporal_rank : int, optional
        Tucker rank of the time mode, ``d`` by default.

    Returns
    -------
    model : GldsModel
    point : GrassmannPoint
        Orthonormal basis of the leading ``d``-dimensional column space of the
        observability matrix, shape ``(J * (m + 1), d)``.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim < 2:
        raise ValueError("series needs at least one frame mode and a time mode")
    *frame_shape, tau = series.shape
    if tau < 2:
        raise ValueError("need at least two frames")
    if not np.all(np.isfinite(series)):
        raise ValueError("series contains non-finite values")
    ranks = tuple(frame_shape) if ranks is None else tuple(int(r) for r in ranks)
    if len(ranks) != len(frame_shape):
        raise ValueError(f"expected {len(frame_shape)} frame ranks, got {len(ranks)}")
    temporal_rank = d if temporal_rank is None else int(temporal_rank)
    if not 1 <= temporal_rank <= tau:
        raise ValueError(f"temporal rank {temporal_rank} must lie in [1, {tau}]")
    if m < 1:
        raise ValueError("m must be at least 1")
    if not 1 <= d <= int(np.prod(ranks)):
        raise ValueError(f"d={d} must lie in [1, {int(np.prod(ranks))}] (the state dimension)")

    decomposition = tucker(series, ranks + (temporal_rank,), max_iter=max_iter, tol=tol)
    *spatial, temporal = decomposition.factors
    c = kron_factors(spatial)
    core_t = unfold(decomposition.core, series.ndim - 1)   # temporal_rank x prod(ranks)
    states = (temporal @ core_t).T                         # prod(ranks) x tau

    # The states span at most temporal_rank directions P, so A = P B P^T with
    # B small. Stabilizing B scales A identically, and the top-d left singular
    # vectors of the observability matrix follow from [I; B; ...; B^m].
    p, b = _state_subspace(states)
    if margin is not None:
        b = stabilize(b, margin)
    a = p @ b @ p.T
    y = unfold(series, series.ndim - 1).T
    model = _finish(a, c, states, y, ranks, frame_shape, d, None)
    return model, GrassmannPoint(_observability_basis(c, p, b, m, d))


def _state_subspace(states):
    u, s, _ = np.linalg.svd(states, full_matrices=False)
    k = int(np.sum(s > s[0] * 1e-12)) if s.size and s[0] > 0 else 0
    p = u[:, :k]
    z = p.T @ states
    return p, z[:, 1:] @ pinv(z[:, :-1])


def _observability_basis(c, p, b, m, d):
    """Top-d left singular vectors of ``observability`` for ``A = P B P^T``.

    On the complement of ``P`` the observability matrix acts as ``[C; 0; ...]``
    with unit singular values; on ``P`` it is ``blockdiag(C P) [I; B; ...; B^m]``
    whose singular values are all at least one. The leading directions
    therefore come from the small stacked matrix, topped up from the
    complement when ``d`` exceeds the state rank.
    """
    n_obs, n = c.shape
    k = p.shape[1]
    cp = c @ p
    blocks = [np.eye(k)]
    for _ in range(m):
        blocks.append(blocks[-1] @ b)
    small = np.vstack(blocks)
    basis = np.zeros((n_obs * (m + 1), d))
    take = min(k, d)
    if take:
        w = np.linalg.svd(small, full_matrices=False)[0][:, :take]
        for j in range(m + 1):
            basis[j * n_obs:(j + 1) * n_obs, :take] = cp @ w[j * k:(j + 1) * k]
    if d > k:
        q = np.linalg.qr(p, mode="complete")[0] if k else np.eye(n)
        basis[:n_obs, k:] = c @ q[:, k:d]
    return _fix_signs(basis)


def simulate_lds(model, x0, steps, noise_scale=0.0, seed=0, process_noise_scale=None):
    """Roll the model forward from ``x0`` for ``steps`` frames.

    Gaussian observation noise has standard deviation ``noise_scale``; process
    noise uses ``process_noise_scale`` (defaults to ``noise_scale``).

    Returns
    -------
    ndarray
        Array of shape ``model.obs_shape + (steps,)``.
    """
    if steps < 2:
        raise ValueError("steps must be at least 2")
    x = vec(np.asarray(x0, dtype=float)).copy()
    if x.size != model.state_dim:
        raise ValueError(f"x0 has {x.size} entries, the model state has {model.state_dim}")
    process_noise_scale = noise_scale if process_noise_scale is None else process_noise_scale
    if process_noise_scale > 0 and spectral_radius(model.A) >= 1.0:
        warnings.warn("simulating an unstable model with process noise", RuntimeWarning,
                      stacklevel=2)
    rng = np.random.default_rng(seed)
    frames = np.empty((model.obs_dim, steps))
    for t in range(steps):
        frames[:, t] = model.C @ x
        if noise_scale > 0:
            frames[:, t] += noise_scale * rng.standard_normal(model.obs_dim)
        x = model.A @ x
        if process_noise_scale > 0:
            x = x + process_noise_scale * rng.standard_normal(model.state_dim)
    return frames.reshape(tuple(model.obs_shape) + (steps,), order="F")
