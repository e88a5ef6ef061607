"""Benchmark objective functions with their standard box constraints.

Each function comes in two forms: a scalar reference implementation
(``rastrigin(x)``) and a population-batch kernel (``rastrigin_batch(X)``)
used by the optimization loop.  The batch kernels are numba-compiled by
default with a vectorized numpy fallback (see :mod:`revde._accel`).

Note on Griewank: the sum term here is ``sqrt(x_d^2 / 4000)``, i.e.
``|x_d| / sqrt(4000)``, not the more common ``x_d^2 / 4000``.  Pass
``standard=True`` (CLI flag ``--griewank-standard``) for the
conventional quadratic form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import njit, select

__all__ = [
    "BenchmarkSpec",
    "BENCHMARK_NAMES",
    "get_benchmark",
    "griewank",
    "rastrigin",
    "salomon",
    "schwefel",
    "griewank_batch",
    "rastrigin_batch",
    "salomon_batch",
    "schwefel_batch",
]

_TWO_PI = 2.0 * np.pi
SCHWEFEL_CONSTANT = 418.9829

# search-space box per function: same interval in every coordinate
_BOUNDS = {
    "griewank": (-5.0, 5.0),
    "rastrigin": (-5.0, 5.0),
    "salomon": (-5.0, 5.0),
    "schwefel": (200.0, 500.0),
}
BENCHMARK_NAMES = tuple(sorted(_BOUNDS))


def _as_point(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"expected a 1-D point, got shape {x.shape}")
    return x


def _as_batch(x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] == 0:
        raise ValueError(f"expected a (K, D) batch, got shape {x.shape}")
    return x


# ----------------------------------------------------------------------
# scalar reference implementations
# ----------------------------------------------------------------------

def griewank(x, standard: bool = False) -> float:
    """Sum of per-coordinate terms minus a product of stretched cosines."""
    x = _as_point(x)
    if standard:
        s = np.sum(x * x / 4000.0)
    else:
        s = np.sum(np.sqrt(x * x / 4000.0))
    d = np.arange(1, x.size + 1, dtype=np.float64)
    return float(1.0 + s - np.prod(np.cos(x / np.sqrt(d))))


def rastrigin(x) -> float:
    x = _as_point(x)
    return float(10.0 * x.size + np.sum(x * x - 10.0 * np.cos(_TWO_PI * x)))


def salomon(x) -> float:
    x = _as_point(x)
    r = np.sqrt(np.sum(x * x))
    return float(1.0 - np.cos(_TWO_PI * r) + 0.1 * r)


def schwefel(x) -> float:
    x = _as_point(x)
    return float(SCHWEFEL_CONSTANT * x.size - np.sum(x * np.sin(np.sqrt(np.abs(x)))))


# ----------------------------------------------------------------------
# batch kernels: numpy form and numba form
# ----------------------------------------------------------------------

def _griewank_batch_numpy(x: np.ndarray, standard: bool) -> np.ndarray:
    if standard:
        s = np.sum(x * x / 4000.0, axis=1)
    else:
        s = np.sum(np.sqrt(x * x / 4000.0), axis=1)
    d = np.arange(1, x.shape[1] + 1, dtype=np.float64)
    return 1.0 + s - np.prod(np.cos(x / np.sqrt(d)), axis=1)


def _griewank_batch_loop(x: np.ndarray, standard: bool) -> np.ndarray:
    k, d = x.shape
    out = np.empty(k)
    for i in range(k):
        s = 0.0
        p = 1.0
        for j in range(d):
            v = x[i, j]
            if standard:
                s += v * v / 4000.0
            else:
                s += np.sqrt(v * v / 4000.0)
            p *= np.cos(v / np.sqrt(j + 1.0))
        out[i] = 1.0 + s - p
    return out


def _rastrigin_batch_numpy(x: np.ndarray) -> np.ndarray:
    return 10.0 * x.shape[1] + np.sum(x * x - 10.0 * np.cos(_TWO_PI * x), axis=1)


def _rastrigin_batch_loop(x: np.ndarray) -> np.ndarray:
    k, d = x.shape
    out = np.empty(k)
    for i in range(k):
        acc = 10.0 * d
        for j in range(d):
            v = x[i, j]
            acc += v * v - 10.0 * np.cos(_TWO_PI * v)
        out[i] = acc
    return out


def _salomon_batch_numpy(x: np.ndarray) -> np.ndarray:
    r = np.sqrt(np.sum(x * x, axis=1))
    return 1.0 - np.cos(_TWO_PI * r) + 0.1 * r


def _salomon_batch_loop(x: np.ndarray) -> np.ndarray:
    k, d = x.shape
    out = np.empty(k)
    for i in range(k):
        acc = 0.0
        for j in range(d):
            acc += x[i, j] * x[i, j]
        r = np.sqrt(acc)
        out[i] = 1.0 - np.cos(_TWO_PI * r) + 0.1 * r
    return out


def _schwefel_batch_numpy(x: np.ndarray) -> np.ndarray:
    return SCHWEFEL_CONSTANT * x.shape[1] - np.sum(x * np.sin(np.sqrt(np.abs(x))), axis=1)


def _schwefel_batch_loop(x: np.ndarray) -> np.ndarray:
    k, d = x.shape
    out = np.empty(k)
    for i in range(k):
        acc = SCHWEFEL_CONSTANT * d
        for j in range(d):
            v = x[i, j]
            acc -= v * np.sin(np.sqrt(np.abs(v)))
        out[i] = acc
    return out


_griewank_batch_numba = njit(cache=True)(_griewank_batch_loop)
_rastrigin_batch_numba = njit(cache=True)(_rastrigin_batch_loop)
_salomon_batch_numba = njit(cache=True)(_salomon_batch_loop)
_schwefel_batch_numba = njit(cache=True)(_schwefel_batch_loop)

_griewank_impl = select(_griewank_batch_numba, _griewank_batch_numpy)
_rastrigin_impl = select(_rastrigin_batch_numba, _rastrigin_batch_numpy)
_salomon_impl = select(_salomon_batch_numba, _salomon_batch_numpy)
_schwefel_impl = select(_schwefel_batch_numba, _schwefel_batch_numpy)


def griewank_batch(x, standard: bool = False) -> np.ndarray:
    return _griewank_impl(_as_batch(x), standard)


def rastrigin_batch(x) -> np.ndarray:
    return _rastrigin_impl(_as_batch(x))


def salomon_batch(x) -> np.ndarray:
    return _salomon_impl(_as_batch(x))


def schwefel_batch(x) -> np.ndarray:
    return _schwefel_impl(_as_batch(x))


# ----------------------------------------------------------------------
# named lookup for the harness
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkSpec:
    """A benchmark function instantiated at a dimensionality."""

    name: str
    dim: int
    lower: np.ndarray
    upper: np.ndarray
    griewank_standard: bool = False

    def evaluate(self, x) -> float:
        return float(self.batch(np.asarray(x, dtype=np.float64)[None, :])[0])

    def batch(self, x) -> np.ndarray:
        if self.name == "griewank":
            return griewank_batch(x, standard=self.griewank_standard)
        if self.name == "rastrigin":
            return rastrigin_batch(x)
        if self.name == "salomon":
            return salomon_batch(x)
        return schwefel_batch(x)


def get_benchmark(name: str, dim: int, griewank_standard: bool = False) -> BenchmarkSpec:
    """Look up a benchmark by name with its standard bounds at ``dim``."""
    key = name.strip().lower()
    if key not in _BOUNDS:
        raise ValueError(
            f"unknown benchmark {name!r}; expected one of {', '.join(BENCHMARK_NAMES)}"
        )
    if dim < 1:
        raise ValueError(f"dimensionality must be >= 1, got {dim}")
    lo, hi = _BOUNDS[key]
    return BenchmarkSpec(
        name=key,
        dim=dim,
        lower=np.full(dim, lo),
        upper=np.full(dim, hi),
        griewank_standard=griewank_standard,
    )
