"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np

from .grassmann import ORTHONORMAL_TOL, GrassmannPoint
from .skeleton import SkeletonSequence


def check_sequences(X):
    """List of :class:`SkeletonSequence` with one common joint count."""
    if isinstance(X, SkeletonSequence):
        raise TypeError("expected a list of SkeletonSequence, got a single sequence")
    X = list(X)
    if not X:
        raise ValueError("empty input")
    for k, seq in enumerate(X):
        if isinstance(seq, (list, tuple)):
            # multiview sample
            if not seq or not all(isinstance(v, SkeletonSequence) for v in seq):
                raise TypeError(f"sample {k}: expected SkeletonSequence views")
        elif not isinstance(seq, SkeletonSequence):
            raise TypeError(f"sample {k}: expected SkeletonSequence, got {type(seq).__name__}")
    return X


def check_series(X, min_frames=2):
    """List of finite tensor time series (time on the last axis)."""
    if isinstance(X, np.ndarray) and X.dtype != object:
        raise TypeError("expected a list of arrays (one series per sample)")
    out = []
    for k, s in enumerate(X):
        s = np.asarray(s, dtype=float)
        if s.ndim < 2:
            raise ValueError(f"sample {k}: a series needs a frame mode and a time mode")
        if s.shape[-1] < min_frames:
            raise ValueError(f"sample {k}: fewer than {min_frames} frames")
        if not np.all(np.isfinite(s)):
            raise ValueError(f"sample {k}: non-finite values")
        out.append(s)
    if not out:
        raise ValueError("empty input")
    if len({s.shape[:-1] for s in out}) != 1:
        raise ValueError("all series must share the same frame shape")
    return out


def check_subspaces(X, check_orthonormal=True):
    """Stack of orthonormal bases, shape ``(n_samples, p, d)``."""
    if isinstance(X, GrassmannPoint):
        raise TypeError("expected a collection of subspaces")
    if not isinstance(X, np.ndarray):
        X = np.stack([x.basis if isinstance(x, GrassmannPoint) else np.asarray(x) for x in X])
    X = np.asarray(X, dtype=float)
    if X.ndim != 3:
        raise ValueError(f"expected an array of shape (n_samples, p, d), got {X.shape}")
    n, p, d = X.shape
    if n == 0:
        raise ValueError("empty input")
    if p < d:
        raise ValueError(f"bases of shape ({p}, {d}) are not tall")
    if check_orthonormal:
        gram = np.einsum("npd,npe->nde", X, X)
        err = np.max(np.abs(gram - np.eye(d)))
        if err > ORTHONORMAL_TOL:
            raise ValueError(f"bases are not orthonormal (error {err:.2e})")
    return X
