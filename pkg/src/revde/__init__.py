"""Differential evolution with reversible linear population transforms."""

from ._accel import NUMBA_ACTIVE, backend_name
from .transforms import (
    EigenReport,
    MatrixKind,
    Population,
    TransformMatrix,
    apply_triplet_transform,
    build_matrix,
    de_mutation,
    determinant,
    dex3_mutation,
    eigen_report,
    invert_triplet_transform,
    repair_bounds,
    sample_crossover_mask,
    select_survivors,
    uniform_crossover,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "NUMBA_ACTIVE",
    "backend_name",
    "MatrixKind",
    "TransformMatrix",
    "EigenReport",
    "Population",
    "de_mutation",
    "dex3_mutation",
    "build_matrix",
    "apply_triplet_transform",
    "invert_triplet_transform",
    "sample_crossover_mask",
    "uniform_crossover",
    "repair_bounds",
    "select_survivors",
    "determinant",
    "eigen_report",
]
