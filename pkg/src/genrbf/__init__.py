"""genRBF: a Gaussian RBF kernel for incomplete data.

Incomplete points are represented by the data Gaussian conditioned on their
affine subspace of completions; the kernel is the normalized L2 inner product
of these (smoothed) representations and reduces to the classical RBF kernel on
complete points.
"""

__version__ = "0.1.0"

from ._backend import name as backend
from .data import (DataFormatError, Dataset, IncompletePoint, StandardizationParams,
                   apply_standardization, fit_standardization, invert_standardization,
                   load_csv, write_csv)
from .density import EMDivergenceError, GaussianModel, estimate_em, log_likelihood_observed
from .kernel import (KernelError, KernelParams, embed_regularize, gaussian_l2_inner, gram,
                     gram_cross, kernel_value)
from .missingness import inject, inject_mar, inject_mcar, inject_nmar
from .representation import PointRepresentation, ambient_cov, condition, represent_dataset
from .subspace import MissingSubspacePoint, from_incomplete, transform_affine, whiten
from .svm import SvmModel, predict, train

__all__ = [
    "backend", "DataFormatError", "Dataset", "IncompletePoint", "StandardizationParams",
    "apply_standardization", "fit_standardization", "invert_standardization", "load_csv",
    "write_csv", "EMDivergenceError", "GaussianModel", "estimate_em",
    "log_likelihood_observed", "KernelError", "KernelParams", "embed_regularize",
    "gaussian_l2_inner", "gram", "gram_cross", "kernel_value", "inject", "inject_mar",
    "inject_mcar", "inject_nmar", "PointRepresentation", "ambient_cov", "condition",
    "represent_dataset", "MissingSubspacePoint", "from_incomplete", "transform_affine",
    "whiten", "SvmModel", "predict", "train",
]
