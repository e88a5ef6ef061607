"""Generational optimization loop for the four DE variants.

The engine owns all randomness (a numpy Generator seeded from the run
config), batches offspring construction per generation, and records a
best-so-far trace entry for every single objective evaluation.  Objective
evaluations can be spread over a thread pool, capped by the
``REVDE_THREADS`` environment variable (unset/empty = serial, 0 = one
thread per CPU); results are stitched back in submission order so the
trace never depends on scheduling.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from ._util import fmt_float, atomic_write_text
from .transforms import (
    MatrixKind,
    Population,
    build_matrix,
    select_survivors,
)

__all__ = [
    "Method",
    "BoxBounds",
    "Objective",
    "RunConfig",
    "RunTrace",
    "RunSummary",
    "THREADS_ENV",
    "resolve_threads",
    "initialize_population",
    "run",
    "run_repeated",
    "write_trace_csv",
    "write_summary_csv",
]

THREADS_ENV = "REVDE_THREADS"


class Method(Enum):
    """The four optimizer variants."""

    DE = "de"
    DEX3 = "dex3"
    ADE = "ade"
    REVDE = "revde"

    @classmethod
    def from_string(cls, name: str) -> "Method":
        key = name.strip().lower()
        for member in cls:
            if member.value == key:
                return member
        valid = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown method {name!r}; expected one of {valid}")

    @property
    def offspring_per_slot(self) -> int:
        return 1 if self is Method.DE else 3

    @property
    def matrix_kind(self) -> Optional[MatrixKind]:
        if self is Method.ADE:
            return MatrixKind.ADE_M
        if self is Method.REVDE:
            return MatrixKind.REVDE_R
        return None

    # distinct indices drawn per slot: (i,j,k) for DE and the matrix
    # variants, (i,j,k,l,m,n,q) for DEx3
    @property
    def indices_per_slot(self) -> int:
        return 7 if self is Method.DEX3 else 3


def resolve_threads(value: Optional[str] = None) -> int:
    """Translate REVDE_THREADS (or an explicit override) into a pool size."""
    raw = os.environ.get(THREADS_ENV, "") if value is None else str(value)
    raw = raw.strip()
    if not raw:
        return 1
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if threads < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0, got {threads}")
    if threads == 0:
        return os.cpu_count() or 1
    return threads


@dataclass(frozen=True)
class BoxBounds:
    """Per-coordinate search box, lower_d < upper_d everywhere."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64)
        upper = np.asarray(self.upper, dtype=np.float64)
        if lower.ndim != 1 or lower.shape != upper.shape or lower.size == 0:
            raise ValueError(
                f"bounds must be equal-length 1-D vectors, got {lower.shape} and {upper.shape}"
            )
        if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
            raise ValueError("bounds must be finite")
        if not np.all(lower < upper):
            raise ValueError("every lower bound must be strictly below its upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


class Objective:
    """Black-box objective over a bounded search space.

    Wraps a batch evaluator ``fn(X: (K, D)) -> (K,)``.  Counts every
    candidate evaluation, maps NaN scores to +inf (flagged in
    ``nan_evaluations``) so a failing simulator region loses selection
    instead of crashing the run.
    """

    def __init__(
        self,
        batch_fn: Callable[[np.ndarray], np.ndarray],
        bounds: BoxBounds,
        name: str = "objective",
        threads: Optional[int] = None,
    ):
        self.batch_fn = batch_fn
        self.bounds = bounds
        self.name = name
        self.threads = resolve_threads(None if threads is None else threads)
        self.evaluation_counter = 0
        self.nan_evaluations = 0

    @classmethod
    def from_scalar(
        cls,
        fn: Callable[[np.ndarray], float],
        bounds: BoxBounds,
        name: str = "objective",
        threads: Optional[int] = None,
    ) -> "Objective":
        def batch(x: np.ndarray) -> np.ndarray:
            return np.array([fn(row) for row in x], dtype=np.float64)

        return cls(batch, bounds, name=name, threads=threads)

    @property
    def dim(self) -> int:
        return self.bounds.dim

    def evaluate(self, candidates: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(candidates, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(f"expected a (K, {self.dim}) batch, got shape {x.shape}")
        k = x.shape[0]
        if self.threads > 1 and k >= 2 * self.threads:
            chunks = np.array_split(x, self.threads)
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                parts = list(pool.map(self.batch_fn, chunks))
            values = np.concatenate([np.asarray(p, dtype=np.float64).ravel() for p in parts])
        else:
            values = np.asarray(self.batch_fn(x), dtype=np.float64).ravel()
        if values.shape != (k,):
            raise ValueError(
                f"evaluator returned shape {values.shape} for a batch of {k} candidates"
            )
        bad = np.isnan(values)
        if bad.any():
            self.nan_evaluations += int(bad.sum())
            values = np.where(bad, np.inf, values)
        self.evaluation_counter += k
        return values

    def __call__(self, x: np.ndarray) -> float:
        return float(self.evaluate(np.asarray(x, dtype=np.float64)[None, :])[0])


@dataclass(frozen=True)
class RunConfig:
    method: Method
    population_size: int
    generations: int
    f: float
    crossover_rate: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.method, str):
            object.__setattr__(self, "method", Method.from_string(self.method))
        if self.population_size < 4:
            raise ValueError(f"population_size must be >= 4, got {self.population_size}")
        if self.method is Method.DEX3 and self.population_size < 7:
            # Eq.-level contract: seven distinct indices per slot
            raise ValueError("dex3 needs population_size >= 7 (seven distinct indices)")
        if self.generations < 1:
            raise ValueError(f"generations must be >= 1, got {self.generations}")
        if not (self.f > 0.0):
            raise ValueError(f"scaling factor f must be positive, got {self.f}")
        if not (0.0 < self.crossover_rate <= 1.0):
            raise ValueError(f"crossover_rate must be in (0, 1], got {self.crossover_rate}")

    @property
    def total_evaluations(self) -> int:
        n, g = self.population_size, self.generations
        return n + g * n * self.method.offspring_per_slot


@dataclass
class RunTrace:
    """Per-evaluation best-so-far record for one run."""

    evaluation_index: np.ndarray
    best_objective: np.ndarray
    final_population: Population
    wall_time: float
    method: Method
    seed: int
    evaluations: int
    nan_evaluations: int
    # (generation, members copy, values copy) per generation when requested
    history: Optional[list] = None

    @property
    def records(self) -> list:
        return list(zip(self.evaluation_index.tolist(), self.best_objective.tolist()))

    @property
    def final_best(self) -> float:
        return float(self.best_objective[-1])


@dataclass
class RunSummary:
    """Mean/std of best-so-far across repeats, aligned on evaluation index."""

    evaluation_index: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    repeats: int


def initialize_population(bounds: BoxBounds, n: int, rng: np.random.Generator) -> Population:
    """Uniform coordinate-wise sample of n candidates inside the box."""
    if n < 4:
        raise ValueError(f"population size must be >= 4, got {n}")
    members = rng.uniform(bounds.lower, bounds.upper, size=(n, bounds.dim))
    return Population(members=members, values=None, generation=0)


def _sample_slot_indices(n: int, per_slot: int, rng: np.random.Generator) -> np.ndarray:
    idx = np.empty((n, per_slot), dtype=np.int64)
    for slot in range(n):
        idx[slot] = rng.choice(n, size=per_slot, replace=False)
    return idx


def _offspring_for_generation(
    population: Population,
    config: RunConfig,
    bounds: BoxBounds,
    rng: np.random.Generator,
) -> np.ndarray:
    """Mutation + crossover + bound repair for one generation, batched.

    Offspring are ordered slot-major (slot 0's trio, slot 1's trio, ...)
    so the trace is independent of any evaluation batching downstream.
    """
    method = config.method
    x = population.members
    n, d = x.shape
    f = config.f
    idx = _sample_slot_indices(n, method.indices_per_slot, rng)

    if method is Method.DE:
        trials = x[idx[:, 0]] + f * (x[idx[:, 1]] - x[idx[:, 2]])
        parents = x[idx[:, 0]]
    elif method is Method.DEX3:
        base = x[idx[:, 0]]
        trials = np.empty((n, 3, d))
        trials[:, 0] = base + f * (x[idx[:, 1]] - x[idx[:, 2]])
        trials[:, 1] = base + f * (x[idx[:, 3]] - x[idx[:, 4]])
        trials[:, 2] = base + f * (x[idx[:, 5]] - x[idx[:, 6]])
        trials = trials.reshape(3 * n, d)
        # all three trials perturb the same base, so it is the parent
        parents = np.repeat(base, 3, axis=0)
    else:
        m = build_matrix(method.matrix_kind, f).entries
        triplets = x[idx]                      # (n, 3, d)
        trials = (m @ triplets).reshape(3 * n, d)
        parents = triplets.reshape(3 * n, d)   # y1<->x_i, y2<->x_j, y3<->x_k

    mask = rng.random(trials.shape) < config.crossover_rate
    offspring = np.where(mask, trials, parents)
    np.clip(offspring, bounds.lower, bounds.upper, out=offspring)
    return offspring


def run(
    config: RunConfig,
    objective: Objective,
    keep_history: bool = False,
) -> RunTrace:
    """Execute G generations and return the full evaluation trace."""
    started = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    counter_before = objective.evaluation_counter
    nan_before = objective.nan_evaluations

    population = initialize_population(objective.bounds, config.population_size, rng)
    n = config.population_size
    total = config.total_evaluations
    best_stream = np.empty(total, dtype=np.float64)

    values = objective.evaluate(population.members)
    population = Population(members=population.members, values=values, generation=0)
    best_stream[:n] = np.minimum.accumulate(values)
    best = best_stream[n - 1]
    cursor = n

    history = None
    if keep_history:
        history = [(0, population.members.copy(), values.copy())]

    for _ in range(config.generations):
        offspring = _offspring_for_generation(population, config, objective.bounds, rng)
        off_values = objective.evaluate(offspring)
        k = off_values.size
        best_stream[cursor : cursor + k] = np.minimum(
            np.minimum.accumulate(off_values), best
        )
        best = best_stream[cursor + k - 1]
        cursor += k
        population = select_survivors(population, offspring, off_values)
        if keep_history:
            history.append(
                (population.generation, population.members.copy(), population.values.copy())
            )

    assert cursor == total
    return RunTrace(
        evaluation_index=np.arange(1, total + 1, dtype=np.int64),
        best_objective=best_stream,
        final_population=population,
        wall_time=time.perf_counter() - started,
        method=config.method,
        seed=config.seed,
        evaluations=objective.evaluation_counter - counter_before,
        nan_evaluations=objective.nan_evaluations - nan_before,
        history=history,
    )


def run_repeated(
    config: RunConfig,
    objective: Objective,
    repeats: int,
    keep_history: bool = False,
) -> tuple[list[RunTrace], RunSummary]:
    """Run ``repeats`` independent repetitions; repeat r uses seed+r."""
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    traces = []
    for r in range(repeats):
        rep_config = RunConfig(
            method=config.method,
            population_size=config.population_size,
            generations=config.generations,
            f=config.f,
            crossover_rate=config.crossover_rate,
            seed=config.seed + r,
        )
        traces.append(run(rep_config, objective, keep_history=keep_history))
    stacked = np.stack([t.best_objective for t in traces])
    summary = RunSummary(
        evaluation_index=traces[0].evaluation_index,
        mean=stacked.mean(axis=0),
        std=stacked.std(axis=0),
        repeats=repeats,
    )
    return traces, summary


def write_trace_csv(trace: RunTrace, path) -> None:
    lines = ["evaluation,best_objective"]
    for idx, val in zip(trace.evaluation_index, trace.best_objective):
        lines.append(f"{idx},{fmt_float(val)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_summary_csv(summary: RunSummary, path) -> None:
    lines = ["evaluation,mean,std"]
    for idx, mean, std in zip(summary.evaluation_index, summary.mean, summary.std):
        lines.append(f"{idx},{fmt_float(mean)},{fmt_float(std)}")
    atomic_write_text(path, "\n".join(lines) + "\n")
