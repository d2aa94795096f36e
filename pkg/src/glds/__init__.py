"""Tensor time-series dynamics on the Grassmann manifold for skeleton action recognition."""

__version__ = "0.1.0"

from .dynamics import GldsModel, fit_glds, fit_lds, observability, simulate_lds, stabilize
from .estimators import GLDSSubspaces, GrassmannNearestNeighbor, GrassmannSRC, SkeletonFeatures
from .grassmann import GrassmannDictionary, GrassmannPoint, chordal_distance, sparse_code
from .tensor import TuckerFactors, tucker, tucker_reconstruct, unfold, vec

__all__ = [
    "GldsModel", "fit_glds", "fit_lds", "observability", "simulate_lds", "stabilize",
    "GLDSSubspaces", "GrassmannNearestNeighbor", "GrassmannSRC", "SkeletonFeatures",
    "GrassmannDictionary", "GrassmannPoint", "chordal_distance", "sparse_code",
    "TuckerFactors", "tucker", "tucker_reconstruct", "unfold", "vec",
]
