"""scikit-learn compatible wrappers around the feature, embedding and coding steps.

The three stages compose into a :class:`sklearn.pipeline.Pipeline`::

    Pipeline([
        ("features", SkeletonFeatures(kind="3RB", topology="msr20")),
        ("subspaces", GLDSSubspaces(d=5)),
        ("classify", GrassmannSRC()),
    ])
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dynamics import DEFAULT_MARGIN, fit_glds, fit_lds, observability, subspace_from_observability
from .grassmann import GrassmannDictionary, class_residuals, nearest_neighbor, sparse_code
from .skeleton import extract, extract_multiview, load_topology, normalize
from .validation import check_sequences, check_series, check_subspaces

__all__ = ["SkeletonFeatures", "GLDSSubspaces", "GrassmannSRC", "GrassmannNearestNeighbor"]

logger = logging.getLogger(__name__)


def _map(func, items, n_jobs):
    if n_jobs is None or n_jobs == 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=None if n_jobs < 0 else n_jobs) as pool:
        return list(pool.map(func, items))


class SkeletonFeatures(TransformerMixin, BaseEstimator):
    """Turn skeleton sequences into tensor time series.

    Parameters
    ----------
    kind : str
        One of ``2JP, 2RB, 3JP, 3RB, 3SM, 4RB``. For ``4RB`` every sample is a
        list of per-view sequences.
    topology : str
        Bundled topology name or path to a topology file.
    center : bool
        Move the hip joint to the origin in every frame first.
    """

    def __init__(self, kind="3RB", topology="msr20", center=True):
        self.kind = kind
        self.topology = topology
        self.center = center

    def fit(self, X, y=None):
        check_sequences(X)
        self.topology_ = load_topology(self.topology)
        return self

    def _one(self, sample):
        topo = self.topology_
        views = sample if isinstance(sample, (list, tuple)) else [sample]
        if self.center:
            views = [normalize(v, topo.hip_index) for v in views]
        if self.kind == "4RB":
            return extract_multiview(views, topo.edges)
        if len(views) != 1:
            raise ValueError(f"{self.kind} takes single-view samples")
        return extract(views[0], self.kind, topo.edges)

    def transform(self, X):
        check_is_fitted(self, "topology_")
        return [self._one(s) for s in check_sequences(X)]


class GLDSSubspaces(TransformerMixin, BaseEstimator):
    """Map each tensor time series to the observability subspace of its model.

    Parameters
    ----------
    d : int
        Subspace dimension (and temporal Tucker rank).
    m : int, optional
        Highest power in the observability matrix; defaults to ``d``.
    ranks : sequence of int, optional
        Tucker ranks of the frame modes; full by default.
    method : {"glds", "lds"}
        ``"lds"`` flattens every frame and uses the plain SVD identification.
    margin : float
        Stability margin.
    n_jobs : int
        Worker threads for per-sequence fitting.

    Sequences shorter than ``d`` frames get a temporal rank equal to their
    length; the returned subspaces still have dimension ``d``.
    """

    def __init__(self, d=5, m=None, ranks=None, method="glds", margin=DEFAULT_MARGIN,
                 max_iter=25, tol=1e-7, n_jobs=1):
        self.d = d
        self.m = m
        self.ranks = ranks
        self.method = method
        self.margin = margin
        self.max_iter = max_iter
        self.tol = tol
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        if self.method not in ("glds", "lds"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.d < 1:
            raise ValueError("d must be positive")
        series = check_series(X)
        self.frame_shape_ = series[0].shape[:-1]
        return self

    def _one(self, series):
        m = self.d if self.m is None else self.m
        tau = series.shape[-1]
        if self.method == "lds":
            model = fit_lds(series.reshape(-1, tau, order="F"), self.d, margin=self.margin)
            return subspace_from_observability(observability(model, m), self.d).basis
        ranks = None if self.ranks is None else tuple(self.ranks)
        _, point = fit_glds(series, ranks=ranks, d=self.d, m=m, margin=self.margin,
                            temporal_rank=min(self.d, tau), max_iter=self.max_iter, tol=self.tol)
        return point.basis

    def transform(self, X):
        check_is_fitted(self, "frame_shape_")
        series = check_series(X)
        if series[0].shape[:-1] != self.frame_shape_:
            raise ValueError(f"frame shape {series[0].shape[:-1]} differs from the fitted "
                             f"{self.frame_shape_}")
        return np.stack(_map(self._one, series, self.n_jobs))


class _GrassmannClassifier(ClassifierMixin, BaseEstimator):
    def fit(self, X, y):
        X = check_subspaces(X)
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ValueError("need exactly one label per subspace")
        self.dictionary_ = GrassmannDictionary.from_points(list(X), list(y.tolist()))
        self.classes_ = np.array(self.dictionary_.classes)
        return self

    def _check_query(self, X):
        check_is_fitted(self, "dictionary_")
        X = check_subspaces(X)
        if X.shape[1:] != self.dictionary_.atoms.shape[1:]:
            raise ValueError(f"subspace shape {X.shape[1:]} differs from the dictionary's "
                             f"{self.dictionary_.atoms.shape[1:]}")
        return X


class GrassmannSRC(_GrassmannClassifier):
    """Sparse-representation classifier in the projection embedding.

    Training subspaces become the dictionary atoms. A query is coded over all
    atoms with an l1 penalty and assigned to the class whose atoms alone give
    the smallest reconstruction residual.

    Parameters
    ----------
    lam : float, optional
        Penalty weight, ``0.01 * d`` by default.
    affine : bool
        Constrain the coefficients to sum to one.
    """

    def __init__(self, lam=None, tol=1e-8, max_iter=1000, affine=False, n_jobs=1):
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter
        self.affine = affine
        self.n_jobs = n_jobs

    def _residuals(self, x):
        coef = sparse_code(x, self.dictionary_, lam=self.lam, tol=self.tol,
                           max_iter=self.max_iter, affine=self.affine)
        res = class_residuals(x, self.dictionary_, coef)
        return [res[c] for c in self.dictionary_.classes]

    def residuals(self, X):
        """Per-class residuals, shape ``(n_samples, n_classes)``."""
        X = self._check_query(X)
        return np.array(_map(self._residuals, list(X), self.n_jobs))

    def decision_function(self, X):
        return -self.residuals(X)

    def predict(self, X):
        res = self.residuals(X)
        out = []
        for row in res:
            best = np.min(row)
            out.append(int(np.flatnonzero(row <= best + 1e-12 * (1.0 + abs(best)))[0]))
        return self.classes_[out]


class GrassmannNearestNeighbor(_GrassmannClassifier):
    """1-nearest-neighbour under the chordal distance."""

    def predict(self, X):
        X = self._check_query(X)
        return np.array([nearest_neighbor(x, self.dictionary_) for x in X])
