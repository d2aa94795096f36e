"""Subspaces through the projection embedding ``X -> X X^T``.

Everything here works with ``d x d`` cross-Gram blocks: the inner product of
two embedded subspaces is ``<X X^T, Y Y^T>_F = ||X^T Y||_F^2``, so the
``p x p`` projectors never need to be formed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "GrassmannPoint",
    "GrassmannDictionary",
    "project",
    "chordal_distance",
    "embedding_inner",
    "coding_objective",
    "sparse_code",
    "class_residuals",
    "classify_src",
    "nearest_neighbor",
    "save_dictionary",
    "load_dictionary",
]

ORTHONORMAL_TOL = 1e-10
_TIE_RTOL = 1e-12


class GrassmannPoint:
    """A subspace represented by a tall matrix with orthonormal columns."""

    __slots__ = ("basis",)

    def __init__(self, basis, check=True):
        basis = np.asarray(basis, dtype=float)
        if basis.ndim != 2:
            raise ValueError("basis must be a matrix")
        if check:
            p, d = basis.shape
            if d < 1 or p < d:
                raise ValueError(f"basis shape {basis.shape} is not tall")
            err = np.max(np.abs(basis.T @ basis - np.eye(d)))
            if err > ORTHONORMAL_TOL:
                raise ValueError(f"basis columns are not orthonormal (error {err:.2e})")
        self.basis = basis

    @classmethod
    def from_matrix(cls, matrix):
        """Orthonormalize the columns of ``matrix`` (via QR)."""
        q, _ = np.linalg.qr(np.asarray(matrix, dtype=float))
        return cls(q)

    @property
    def ambient_dim(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]

    def __repr__(self):
        return f"GrassmannPoint(ambient_dim={self.ambient_dim}, dim={self.dim})"


def _as_basis(x):
    return x.basis if isinstance(x, GrassmannPoint) else np.asarray(x, dtype=float)


def project(x):
    """Projector ``X X^T`` of the subspace; symmetric and idempotent."""
    if not isinstance(x, GrassmannPoint):
        x = GrassmannPoint(x)
    b = x.basis
    p = b @ b.T
    return (p + p.T) / 2.0


def embedding_inner(x, y):
    """``<X X^T, Y Y^T>_F`` computed as ``||X^T Y||_F^2``."""
    cross = _as_basis(x).T @ _as_basis(y)
    return float(np.sum(cross * cross))


def chordal_distance(x, y):
    """Frobenius distance between the projectors of ``x`` and ``y``.

    Equal to ``sqrt(2 d - 2 ||X^T Y||_F^2)`` but evaluated through the two
    projection residuals, which avoids the cancellation that would otherwise
    floor nearby distances at about ``sqrt(eps)``.
    """
    bx, by = _as_basis(x), _as_basis(y)
    if bx.shape != by.shape:
        raise ValueError(f"shape mismatch: {bx.shape} vs {by.shape}")
    ry = by - bx @ (bx.T @ by)
    rx = bx - by @ (by.T @ bx)
    return float(np.sqrt(np.sum(ry * ry) + np.sum(rx * rx)))


@dataclass(frozen=True)
class GrassmannDictionary:
    """Labelled atoms plus their cached embedding Gram matrix.

    ``atoms`` is an array of shape ``(n_atoms, p, d)``.
    """

    atoms: np.ndarray
    labels: tuple
    gram: np.ndarray = field(repr=False)

    @classmethod
    def from_points(cls, points, labels):
        bases = [_as_basis(pt) for pt in points]
        if not bases:
            raise ValueError("empty dictionary")
        if len(bases) != len(labels):
            raise ValueError("need exactly one label per atom")
        shapes = {b.shape for b in bases}
        if len(shapes) != 1:
            raise ValueError(f"atoms have mixed shapes: {sorted(shapes)}")
        atoms = np.stack(bases)
        return cls(atoms=atoms, labels=tuple(labels), gram=_gram(atoms))

    @property
    def n_atoms(self):
        return self.atoms.shape[0]

    @property
    def ambient_dim(self):
        return self.atoms.shape[1]

    @property
    def dim(self):
        return self.atoms.shape[2]

    @property
    def classes(self):
        """Distinct labels in first-appearance-independent sorted order."""
        return tuple(sorted(set(self.labels), key=_label_key))

    def kernel(self, query):
        """``<Q Q^T, D_j D_j^T>`` for every atom ``j``."""
        b = _as_basis(query)
        if b.shape != self.atoms.shape[1:]:
            raise ValueError(f"query shape {b.shape} does not match atoms {self.atoms.shape[1:]}")
        cross = np.einsum("pd,npe->nde", b, self.atoms)
        return np.einsum("nde,nde->n", cross, cross)


def _label_key(label):
    return (0, label, "") if isinstance(label, (int, np.integer)) else (1, 0, str(label))


def _gram(atoms):
    n, p, d = atoms.shape
    flat = atoms.transpose(1, 0, 2).reshape(p, n * d)
    cross = (flat.T @ flat).reshape(n, d, n, d)
    gram = np.einsum("idje,idje->ij", cross, cross)
    return (gram + gram.T) / 2.0


def coding_objective(y, kernel, gram, lam, self_inner):
    """``||X - sum_j y_j D_j||_F^2 + lam * ||y||_1`` via the kernel expansion."""
    y = np.asarray(y, dtype=float)
    return float(self_inner - 2.0 * kernel @ y + y @ gram @ y + lam * np.sum(np.abs(y)))


def _soft(value, threshold):
    return np.sign(value) * max(abs(value) - threshold, 0.0)


def sparse_code(query, dictionary, lam=None, tol=1e-8, max_iter=1000, affine=False,
                callback=None):
    """Sparse coefficients of ``query`` over the dictionary atoms.

    Minimizes ``||X X^T - sum_j y_j D_j D_j^T||_F^2 + lam * ||y||_1`` by
    cyclic coordinate descent with soft-thresholding. With ``affine=True``
    the coefficients are additionally constrained to sum to one and the
    problem is solved by ADMM instead.

    Parameters
    ----------
    query : GrassmannPoint or ndarray
    dictionary : GrassmannDictionary
    lam : float, optional
        Penalty weight; defaults to ``0.01 * d``.
    tol : float
        Stop when the largest coefficient change in a sweep drops below it.
    max_iter : int
        Maximum number of sweeps.
    callback : callable, optional
        Called as ``callback(y)`` after every sweep.

    Returns
    -------
    ndarray of shape (n_atoms,)
    """
    if lam is None:
        lam = 0.01 * dictionary.dim
    if lam < 0:
        raise ValueError("lam must be non-negative")
    kernel = dictionary.kernel(query)
    gram = dictionary.gram
    if not (np.all(np.isfinite(kernel)) and np.all(np.isfinite(gram))):
        raise ValueError("non-finite kernel values")
    if affine:
        return _admm_affine(kernel, gram, lam, tol, max_iter, callback)

    n = kernel.size
    y = np.zeros(n)
    diag = np.diag(gram).copy()
    grad = np.zeros(n)   # gram @ y, kept in sync
    for _ in range(max_iter):
        max_change = 0.0
        for j in range(n):
            if diag[j] <= 0.0:
                continue
            rho = kernel[j] - (grad[j] - diag[j] * y[j])
            new = _soft(rho, lam / 2.0) / diag[j]
            delta = new - y[j]
            if delta != 0.0:
                grad += gram[:, j] * delta
                y[j] = new
                max_change = max(max_change, abs(delta))
        if callback is not None:
            callback(y.copy())
        if max_change < tol:
            break
    return y


def _admm_affine(kernel, gram, lam, tol, max_iter, callback, rho=1.0):
    # min y'Gy - 2k'y + lam|z|_1  s.t. y == z, sum(y) == 1
    n = kernel.size
    ones = np.ones(n)
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = 2.0 * gram + rho * np.eye(n)
    kkt[:n, n] = ones
    kkt[n, :n] = ones
    kkt_inv = np.linalg.pinv(kkt)
    z = np.full(n, 1.0 / n)
    u = np.zeros(n)
    for _ in range(max_iter):
        rhs = np.concatenate([2.0 * kernel + rho * (z - u), [1.0]])
        y = (kkt_inv @ rhs)[:n]
        z_old = z
        z = np.sign(y + u) * np.maximum(np.abs(y + u) - lam / rho, 0.0)
        u = u + y - z
        if callback is not None:
            callback(z.copy())
        if max(np.max(np.abs(y - z)), rho * np.max(np.abs(z - z_old))) < tol:
            break
    return z


def class_residuals(query, dictionary, coefficients):
    """``||X X^T - sum_{j in c} y_j D_j D_j^T||_F^2`` for each class ``c``."""
    kernel = dictionary.kernel(query)
    self_inner = embedding_inner(query, query)
    labels = np.array(dictionary.labels, dtype=object)
    out = {}
    for c in dictionary.classes:
        mask = np.array([lab == c for lab in labels])
        yc = np.where(mask, coefficients, 0.0)
        out[c] = float(self_inner - 2.0 * kernel @ yc + yc @ dictionary.gram @ yc)
    return out


def _argmin_tiebreak(values):
    values = np.asarray(values, dtype=float)
    best = np.min(values)
    close = values <= best + _TIE_RTOL * (1.0 + abs(best))
    return int(np.flatnonzero(close)[0])


def classify_src(query, dictionary, lam=None, tol=1e-8, max_iter=1000, affine=False):
    """Sparse-representation classification.

    Returns the class whose atoms alone reconstruct the query best, together
    with the per-class residuals. Ties go to the lowest class in sorted order.
    """
    if dictionary.n_atoms == 0:
        raise ValueError("empty dictionary")
    y = sparse_code(query, dictionary, lam=lam, tol=tol, max_iter=max_iter, affine=affine)
    residuals = class_residuals(query, dictionary, y)
    classes = list(residuals)
    return classes[_argmin_tiebreak([residuals[c] for c in classes])], residuals


def nearest_neighbor(query, dictionary):
    """Label of the atom closest in chordal distance; ties go to the lower index."""
    if dictionary.n_atoms == 0:
        raise ValueError("empty dictionary")
    # chordal^2 = 2d - 2 * kernel, so the largest kernel is the nearest atom
    kernel = dictionary.kernel(query)
    return dictionary.labels[_argmin_tiebreak(-kernel)]


def save_dictionary(dictionary, path):
    """Write the dictionary as JSON.

    Field order: ``format``, ``ambient_dim``, ``subspace_dim``, ``n_atoms``,
    ``labels``, ``bases`` (each basis flattened row-major).
    """
    payload = {
        "format": "glds-grassmann-dictionary/1",
        "ambient_dim": dictionary.ambient_dim,
        "subspace_dim": dictionary.dim,
        "n_atoms": dictionary.n_atoms,
        "labels": [lab.item() if isinstance(lab, np.generic) else lab for lab in dictionary.labels],
        "bases": [atom.ravel(order="C").tolist() for atom in dictionary.atoms],
    }
    Path(path).write_text(json.dumps(payload))


def load_dictionary(path):
    payload = json.loads(Path(path).read_text())
    p, d = payload["ambient_dim"], payload["subspace_dim"]
    if len(payload["bases"]) != payload["n_atoms"] or len(payload["labels"]) != payload["n_atoms"]:
        raise ValueError(f"{path}: atom count does not match payload")
    atoms = [np.asarray(b, dtype=float).reshape(p, d) for b in payload["bases"]]
    return GrassmannDictionary.from_points(atoms, payload["labels"])
