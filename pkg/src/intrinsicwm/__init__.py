"""Sparse engine for intrinsic Whittle-Matern fields and Brown-Resnick extremes."""

from .gmrf import IntrinsicGmrf, ModelParams, build, density_intrinsic, fem_variogram, sample
from .inference import FitReport, ObservationSet, fit, loglik, posterior
from .meshing import Mesh, build_uniform, quality, refine
from .sparse import Factor, SparseSymMatrix, factor_ldl

__all__ = [
    "IntrinsicGmrf", "ModelParams", "build", "density_intrinsic",
    "fem_variogram", "sample", "FitReport", "ObservationSet", "fit",
    "loglik", "posterior", "Mesh", "build_uniform", "quality", "refine",
    "Factor", "SparseSymMatrix", "factor_ldl",
]

__version__ = "0.1.0"
