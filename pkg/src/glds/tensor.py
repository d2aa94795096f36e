"""Dense tensor algebra: vectorization, unfoldings, mode products and Tucker.

Tensors are plain :class:`numpy.ndarray` objects. The element ordering used by
:func:`vec` is first-index-fastest (Fortran order), so the flat offset of the
zero-based multi-index ``(i_1, ..., i_n)`` is
``sum_p i_p * prod(shape[:p])``. Unfoldings order their columns the same way
over the remaining modes in ascending order, which makes

    unfold(Z x_1 U1 ... x_N UN, n) == Un @ unfold(Z, n) @ kron(UN, ..., U(n+1), U(n-1), ..., U1).T

hold exactly. Modes are zero-based, like numpy axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

__all__ = [
    "TuckerFactors",
    "vec",
    "unvec",
    "unfold",
    "fold",
    "mode_product",
    "multi_mode_product",
    "kronecker",
    "kron_factors",
    "leading_left_singular_vectors",
    "tucker",
    "tucker_reconstruct",
]


def _check_mode(ndim, mode):
    if not 0 <= mode < ndim:
        raise ValueError(f"mode {mode} out of range for a tensor of order {ndim}")


def vec(tensor):
    """Flatten ``tensor`` first-index-fastest."""
    return np.asarray(tensor).ravel(order="F")


def unvec(vector, shape):
    """Inverse of :func:`vec`."""
    return np.asarray(vector).reshape(tuple(shape), order="F")


def unfold(tensor, mode):
    """Mode-``mode`` matricization of ``tensor``.

    Parameters
    ----------
    tensor : ndarray
    mode : int
        Zero-based mode index.

    Returns
    -------
    ndarray
        Matrix of shape ``(tensor.shape[mode], prod(other dims))``.
    """
    tensor = np.asarray(tensor)
    _check_mode(tensor.ndim, mode)
    return np.moveaxis(tensor, mode, 0).reshape(tensor.shape[mode], -1, order="F")


def fold(matrix, mode, shape):
    """Inverse of :func:`unfold` for a tensor of the given ``shape``."""
    matrix = np.asarray(matrix)
    shape = tuple(int(s) for s in shape)
    _check_mode(len(shape), mode)
    rest = shape[:mode] + shape[mode + 1:]
    if matrix.ndim != 2 or matrix.shape != (shape[mode], int(np.prod(rest))):
        raise ValueError(
            f"cannot fold a matrix of shape {matrix.shape} into {shape} along mode {mode}"
        )
    return np.moveaxis(matrix.reshape((shape[mode],) + rest, order="F"), 0, mode)


def mode_product(tensor, matrix, mode):
    """Mode-``mode`` product ``tensor x_mode matrix``.

    The mode's dimension ``I`` is replaced by ``matrix.shape[0]``; ``matrix``
    must have ``I`` columns.
    """
    tensor = np.asarray(tensor)
    matrix = np.asarray(matrix)
    _check_mode(tensor.ndim, mode)
    if matrix.ndim != 2 or matrix.shape[1] != tensor.shape[mode]:
        raise ValueError(
            f"matrix of shape {matrix.shape} does not match mode {mode} "
            f"of a tensor with shape {tensor.shape}"
        )
    return np.moveaxis(np.tensordot(matrix, tensor, axes=(1, mode)), 0, mode)


def multi_mode_product(tensor, matrices, skip=None, transpose=False):
    """Apply ``matrices[k]`` along mode ``k`` for every mode except ``skip``."""
    out = np.asarray(tensor)
    for k, m in enumerate(matrices):
        if k == skip:
            continue
        out = mode_product(out, m.T if transpose else m, k)
    return out


def kronecker(a, b):
    """Kronecker product; block ``(i, j)`` equals ``a[i, j] * b``."""
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def kron_factors(factors):
    """``kron(factors[-1], ..., factors[0])``, the descending-mode order."""
    return reduce(lambda acc, u: np.kron(u, acc), factors[1:], np.asarray(factors[0]))


def _fix_signs(u):
    # largest-magnitude entry of each column made non-negative
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def leading_left_singular_vectors(matrix, rank):
    """First ``rank`` left singular vectors of ``matrix``, sign-normalized.

    When ``rank`` exceeds the number of available singular vectors the basis is
    completed with an orthonormal complement from the full SVD.
    """
    matrix = np.asarray(matrix, dtype=float)
    rows, cols = matrix.shape
    if not 1 <= rank <= rows:
        raise ValueError(f"rank {rank} invalid for a matrix with {rows} rows")
    u, _, _ = np.linalg.svd(matrix, full_matrices=rank > min(rows, cols))
    return _fix_signs(u[:, :rank])


@dataclass(frozen=True)
class TuckerFactors:
    """Core tensor and one orthonormal factor matrix per mode.

    ``errors`` holds the relative reconstruction error after initialization
    and after each refinement sweep.
    """

    core: np.ndarray
    factors: tuple
    errors: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.core.ndim != len(self.factors):
            raise ValueError("need exactly one factor matrix per core mode")
        for n, u in enumerate(self.factors):
            if u.ndim != 2 or u.shape[1] != self.core.shape[n]:
                raise ValueError(
                    f"factor {n} has shape {u.shape}, core mode size is {self.core.shape[n]}"
                )

    @property
    def ranks(self):
        return self.core.shape

    @property
    def shape(self):
        return tuple(u.shape[0] for u in self.factors)


def tucker_reconstruct(factors):
    """``core x_1 U1 x_2 U2 ... x_N UN``."""
    return multi_mode_product(factors.core, factors.factors)


def _relative_error(tensor, norm, core, factors):
    # explicit residual; ||T||^2 - ||core||^2 loses everything below sqrt(eps)
    if norm == 0.0:
        return 0.0
    return float(np.linalg.norm(tensor - multi_mode_product(core, factors)) / norm)


def tucker(tensor, ranks, max_iter=25, tol=1e-7):
    """Truncated Tucker decomposition (HOSVD start, HOOI refinement).

    Parameters
    ----------
    tensor : ndarray
        Input of any order >= 1.
    ranks : sequence of int
        Target multilinear rank, ``1 <= ranks[n] <= tensor.shape[n]``.
    max_iter : int
        Maximum number of HOOI sweeps.
    tol : float
        Stop once the relative error improves by less than ``tol``.

    Returns
    -------
    TuckerFactors
    """
    tensor = np.asarray(tensor, dtype=float)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != tensor.ndim:
        raise ValueError(f"expected {tensor.ndim} ranks, got {len(ranks)}")
    for n, (r, size) in enumerate(zip(ranks, tensor.shape)):
        if not 1 <= r <= size:
            raise ValueError(f"rank {r} for mode {n} must lie in [1, {size}]")
    if not np.all(np.isfinite(tensor)):
        raise ValueError("tensor contains non-finite values")

    factors = [leading_left_singular_vectors(unfold(tensor, n), r) for n, r in enumerate(ranks)]
    core = multi_mode_product(tensor, factors, transpose=True)
    norm = float(np.linalg.norm(tensor))
    errors = [_relative_error(tensor, norm, core, factors)]

    if ranks != tensor.shape:
        for _ in range(max_iter):
            for n, r in enumerate(ranks):
                partial = multi_mode_product(tensor, factors, skip=n, transpose=True)
                factors[n] = leading_left_singular_vectors(unfold(partial, n), r)
            core = multi_mode_product(tensor, factors, transpose=True)
            errors.append(_relative_error(tensor, norm, core, factors))
            if errors[-2] - errors[-1] < tol:
                break
    return TuckerFactors(core=core, factors=tuple(factors), errors=tuple(errors))
