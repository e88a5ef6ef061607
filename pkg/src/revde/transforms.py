"""Population transformations for differential evolution and its triplet variants.

Candidates are plain 1-D float64 arrays; a :class:`Population` keeps the
members as an ``(N, D)`` matrix together with their cached objective
values.  The triplet variants are expressed through an explicit 3x3
operator (:class:`TransformMatrix`):

* ``ADE_M``  -- identity plus an antisymmetric part scaled by ``f``;
  applying it to a stacked triplet perturbs each member with the scaled
  difference of the other two.
* ``REVDE_R`` -- the operator obtained by feeding freshly generated
  rows back into the later ones; it has unit determinant and is
  invertible for every ``f``.

All functions are pure: inputs are never modified, randomness always
comes in through an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

__all__ = [
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


class MatrixKind(Enum):
    """The two triplet operators."""

    ADE_M = "ade_m"
    REVDE_R = "revde_r"


def _as_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector, got shape {v.shape}")
    return v


def _check_same_dim(*vectors: np.ndarray) -> int:
    dims = {v.shape[0] for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: got lengths {sorted(dims)}")
    return dims.pop()


def _check_scale(f: float) -> float:
    f = float(f)
    if not math.isfinite(f) or f < 0.0:
        raise ValueError(f"scaling factor must be finite and >= 0, got {f}")
    return f


@dataclass(frozen=True)
class TransformMatrix:
    """A 3x3 triplet operator together with the scale it was built from."""

    entries: np.ndarray
    kind: MatrixKind
    f: float

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.shape != (3, 3):
            raise ValueError(f"entries must be 3x3, got {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)


@dataclass(frozen=True)
class EigenReport:
    """Eigenvalues of a triplet operator, with real parts and moduli.

    Sorted by descending real part, then descending modulus, then
    descending imaginary part (so a conjugate pair lists ``+i`` first).
    """

    eigenvalues: tuple[complex, complex, complex]
    real_parts: tuple[float, float, float] = field(init=False)
    moduli: tuple[float, float, float] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "real_parts", tuple(z.real for z in self.eigenvalues))
        object.__setattr__(self, "moduli", tuple(abs(z) for z in self.eigenvalues))


@dataclass
class Population:
    """An ordered set of candidates plus evaluation bookkeeping.

    ``members`` is ``(N, D)``; ``values`` caches the objective value per
    member (``None`` until evaluated).  At least four members are
    required so a base plus a distinct triplet is always samplable.
    """

    members: np.ndarray
    values: np.ndarray | None = None
    generation: int = 0

    def __post_init__(self):
        self.members = np.asarray(self.members, dtype=np.float64)
        if self.members.ndim != 2:
            raise ValueError(f"members must be (N, D), got shape {self.members.shape}")
        n, d = self.members.shape
        if n < 4:
            raise ValueError(f"population needs at least 4 members, got {n}")
        if d < 1:
            raise ValueError("members must have dimensionality >= 1")
        if self.values is not None:
            self.values = np.asarray(self.values, dtype=np.float64)
            if self.values.shape != (n,):
                raise ValueError(
                    f"values must have shape ({n},), got {self.values.shape}"
                )
        if self.generation < 0:
            raise ValueError("generation must be non-negative")

    @property
    def size(self) -> int:
        return self.members.shape[0]

    @property
    def dim(self) -> int:
        return self.members.shape[1]

    @property
    def evaluated(self) -> bool:
        return self.values is not None

    def best_index(self) -> int:
        if self.values is None:
            raise ValueError("population has no cached objective values")
        return int(np.argmin(self.values))


def de_mutation(base, a, b, f: float) -> np.ndarray:
    """Perturb ``base`` by the scaled difference of two other candidates.

    Returns ``base + f * (a - b)`` as a fresh array.
    """
    base = _as_vector(base, "base")
    a = _as_vector(a, "a")
    b = _as_vector(b, "b")
    _check_same_dim(base, a, b)
    f = _check_scale(f)
    return base + f * (a - b)


def dex3_mutation(base, pairs: Sequence[tuple], f: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Three independent difference perturbations of one base candidate.

    ``pairs`` holds three ``(first, second)`` vector pairs; trial ``t`` is
    ``base + f * (first_t - second_t)``.
    """
    base = _as_vector(base, "base")
    if len(pairs) != 3:
        raise ValueError(f"expected exactly 3 difference pairs, got {len(pairs)}")
    f = _check_scale(f)
    out = []
    for t, (first, second) in enumerate(pairs, start=1):
        first = _as_vector(first, f"pair {t} first")
        second = _as_vector(second, f"pair {t} second")
        _check_same_dim(base, first, second)
        out.append(base + f * (first - second))
    return tuple(out)


def build_matrix(kind: MatrixKind, f: float) -> TransformMatrix:
    """Construct the 3x3 triplet operator for the given kind and scale.

    ``ADE_M`` is the identity plus an antisymmetric matrix in ``f``;
    ``REVDE_R`` is the operator that reuses freshly generated rows
    (its rows are polynomials in ``f`` up to degree three).  ``f = 0``
    yields the identity for both kinds.
    """
    kind = MatrixKind(kind)
    f = _check_scale(f)
    if kind is MatrixKind.ADE_M:
        entries = np.array(
            [
                [1.0, f, -f],
                [-f, 1.0, f],
                [f, -f, 1.0],
            ]
        )
    else:
        f2 = f * f
        f3 = f2 * f
        entries = np.array(
            [
                [1.0, f, -f],
                [-f, 1.0 - f2, f + f2],
                [f + f2, -f + f2 + f3, 1.0 - 2.0 * f2 - f3],
            ]
        )
    return TransformMatrix(entries=entries, kind=kind, f=f)


def _triplet_stack(x1, x2, x3) -> np.ndarray:
    x1 = _as_vector(x1, "x1")
    x2 = _as_vector(x2, "x2")
    x3 = _as_vector(x3, "x3")
    _check_same_dim(x1, x2, x3)
    return np.stack([x1, x2, x3])


def apply_triplet_transform(m: TransformMatrix, x1, x2, x3) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Apply the operator to a stacked triplet: rows of ``m.entries @ [x1;x2;x3]``."""
    stacked = _triplet_stack(x1, x2, x3)
    out = m.entries @ stacked
    return out[0], out[1], out[2]


def invert_triplet_transform(m: TransformMatrix, y1, y2, y3) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Recover the input triplet from transformed rows.

    Both operator kinds are non-singular for every ``f`` (unit
    determinant for ``REVDE_R``, ``1 + 3f^2`` for ``ADE_M``), so the
    adjugate solve is always well defined.
    """
    stacked = _triplet_stack(y1, y2, y3)
    det = determinant(m)
    e = m.entries
    adjugate = np.array(
        [
            [e[1, 1] * e[2, 2] - e[1, 2] * e[2, 1], e[0, 2] * e[2, 1] - e[0, 1] * e[2, 2], e[0, 1] * e[1, 2] - e[0, 2] * e[1, 1]],
            [e[1, 2] * e[2, 0] - e[1, 0] * e[2, 2], e[0, 0] * e[2, 2] - e[0, 2] * e[2, 0], e[0, 2] * e[1, 0] - e[0, 0] * e[1, 2]],
            [e[1, 0] * e[2, 1] - e[1, 1] * e[2, 0], e[0, 1] * e[2, 0] - e[0, 0] * e[2, 1], e[0, 0] * e[1, 1] - e[0, 1] * e[1, 0]],
        ]
    )
    out = (adjugate / det) @ stacked
    return out[0], out[1], out[2]


def sample_crossover_mask(dim: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Draw a boolean mask of independent Bernoulli(rate) bits."""
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"crossover rate must be in (0, 1], got {rate}")
    if dim < 1:
        raise ValueError("mask dimension must be >= 1")
    return rng.random(dim) < rate


def uniform_crossover(trial, parent, mask) -> np.ndarray:
    """Per-coordinate mix: trial where the mask bit is set, parent elsewhere."""
    trial = _as_vector(trial, "trial")
    parent = _as_vector(parent, "parent")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != trial.shape:
        raise ValueError(f"mask shape {mask.shape} does not match candidate shape {trial.shape}")
    _check_same_dim(trial, parent)
    return np.where(mask, trial, parent)


def repair_bounds(x, lower, upper) -> np.ndarray:
    """Clip every coordinate into ``[lower_d, upper_d]``.

    Accepts a single candidate ``(D,)`` or a batch ``(K, D)``; idempotent,
    and boundary values are legal.
    """
    x = np.asarray(x, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    if np.any(lower >= upper):
        raise ValueError("invalid bounds: lower must be < upper elementwise")
    if x.shape[-1] != lower.shape[-1]:
        raise ValueError(
            f"candidate dimensionality {x.shape[-1]} does not match bounds {lower.shape[-1]}"
        )
    return np.clip(x, lower, upper)


def select_survivors(
    old: Population,
    offspring: np.ndarray,
    offspring_values: np.ndarray,
    n: int | None = None,
) -> Population:
    """Deterministic survivor selection over parents plus offspring.

    Keeps the ``n`` candidates with the lowest objective value from the
    combined pool.  Ties prefer old-population members, then lower index;
    survivors are emitted in stable pool order, so a population whose
    offspring are all worse comes back unchanged.
    """
    if old.values is None:
        raise ValueError("old population has unevaluated members")
    offspring = np.asarray(offspring, dtype=np.float64)
    offspring_values = np.asarray(offspring_values, dtype=np.float64)
    if offspring.ndim != 2 or offspring.shape[1] != old.dim:
        raise ValueError(
            f"offspring must be (K, {old.dim}), got shape {offspring.shape}"
        )
    if offspring_values.shape != (offspring.shape[0],):
        raise ValueError("every offspring needs a cached objective value")
    if np.any(np.isnan(old.values)) or np.any(np.isnan(offspring_values)):
        raise ValueError("NaN objective value in selection pool (map to +inf first)")
    if n is None:
        n = old.size

    pool_values = np.concatenate([old.values, offspring_values])
    origin = np.concatenate(
        [np.zeros(old.size, dtype=np.int64), np.ones(offspring.shape[0], dtype=np.int64)]
    )
    index = np.concatenate(
        [np.arange(old.size), np.arange(offspring.shape[0])]
    )
    # lexsort's last key is the primary one
    order = np.lexsort((index, origin, pool_values))
    chosen = np.sort(order[:n])

    pool_members = np.concatenate([old.members, offspring])
    return Population(
        members=pool_members[chosen].copy(),
        values=pool_values[chosen].copy(),
        generation=old.generation + 1,
    )


def determinant(m: TransformMatrix | np.ndarray) -> float:
    """3x3 determinant by cofactor expansion along the first row."""
    e = m.entries if isinstance(m, TransformMatrix) else np.asarray(m, dtype=np.float64)
    if e.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {e.shape}")
    return float(
        e[0, 0] * (e[1, 1] * e[2, 2] - e[1, 2] * e[2, 1])
        - e[0, 1] * (e[1, 0] * e[2, 2] - e[1, 2] * e[2, 0])
        + e[0, 2] * (e[1, 0] * e[2, 1] - e[1, 1] * e[2, 0])
    )


def _solve_cubic(c2: float, c1: float, c0: float) -> list[complex]:
    """Roots of ``t^3 + c2 t^2 + c1 t + c0`` via Cardano with complex arithmetic."""
    shift = c2 / 3.0
    p = c1 - c2 * c2 / 3.0
    q = 2.0 * c2 **3 / 27.0 - c2 * c1 / 3.0 + c0
    if p == 0.0 and q == 0.0:
        return [complex(-shift)] * 3
    disc = cmath.sqrt((q / 2.0) ** 2 + (p / 3.0) ** 3)
    # pick the branch that avoids cancellation in -q/2 +/- disc
    u3 = -q / 2.0 + disc
    alt = -q / 2.0 - disc
    if abs(alt) > abs(u3):
        u3 = alt
    u = u3 ** (1.0 / 3.0)
    v = -p / (3.0 * u)
    omega = complex(-0.5, math.sqrt(3.0) / 2.0)
    roots = []
    for k in range(3):
        w = omega**k
        roots.append(w * u + w.conjugate() * v - shift)
    return roots


def eigen_report(m: TransformMatrix) -> EigenReport:
    """Eigenvalues of the operator via its cubic characteristic polynomial.

    The characteristic polynomial of a 3x3 matrix is
    ``lambda^3 - tr lambda^2 + s lambda - det`` with ``s`` the sum of the
    principal 2x2 minors; the cubic is solved in closed form, so no
    general eigensolver is involved.
    """
    e = m.entries
    trace = e[0, 0] + e[1, 1] + e[2, 2]
    minors = (
        e[1, 1] * e[2, 2] - e[1, 2] * e[2, 1]
        + e[0, 0] * e[2, 2] - e[0, 2] * e[2, 0]
        + e[0, 0] * e[1, 1] - e[0, 1] * e[1, 0]
    )
    det = determinant(m)
    roots = _solve_cubic(-trace, minors, -det)
    roots.sort(key=lambda z: (-z.real, -abs(z), -z.imag))
    return EigenReport(eigenvalues=tuple(roots))
