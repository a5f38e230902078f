"""
Shifted-optimum benchmark problems, the random-search coverage model and the
origin-vs-shifted experiment that exposes zero-bias.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import mannwhitneyu

from .core import DimensionMismatchError, RandomStream, SearchBox
from .engines import ITERATORS, EngineConfig, initialize

__all__ = [
    "BASES",
    "BenchmarkProblem",
    "make_problem",
    "evaluate",
    "CoverageModel",
    "coverage_probability",
    "coverage_monte_carlo",
    "ExperimentResult",
    "run_experiment",
    "Verdict",
    "zero_bias_verdict",
    "ExperimentSpec",
]


def _sphere(z):
    return np.sum(z * z, axis=-1)


def _rastrigin(z):
    # separable; each term z^2 + 10 (1 - cos 2 pi z) is zero only at z = 0
    return np.sum(z * z + 10.0 * (1.0 - np.cos(2.0 * np.pi * z)), axis=-1)


def _abs_sum(z):
    return np.sum(np.abs(z), axis=-1)


BASES = {"sphere": _sphere, "rastrigin": _rastrigin, "abs_sum": _abs_sum}


@dataclass(frozen=True, eq=False)
class BenchmarkProblem:
    """Separable base function translated so its minimum sits at ``shift``."""

    name: str
    base: str
    box: SearchBox
    shift: np.ndarray

    def __post_init__(self):
        if self.base not in BASES:
            raise ValueError(f"unknown base {self.base!r}; choose from {sorted(BASES)}")
        shift = np.asarray(self.shift, dtype=float)
        if shift.shape != (self.box.dimension,):
            raise DimensionMismatchError("shift must match the box dimension")
        if not np.all((shift > self.box.lower) & (shift < self.box.upper)):
            raise ValueError("shift must lie strictly inside the box")
        object.__setattr__(self, "shift", shift)

    @property
    def dimension(self) -> int:
        return self.box.dimension

    def __call__(self, x) -> float:
        return evaluate(self, x)

    def batch(self, population) -> np.ndarray:
        population = np.asarray(population, dtype=float)
        return BASES[self.base](population - self.shift)


def make_problem(base: str = "sphere", dimension: int = 10, shift: float = 0.0,
                 lo: float = -100.0, hi: float = 100.0) -> BenchmarkProblem:
    """Problem on the cube ``[lo, hi]^D`` with optimum at ``shift * ones``."""
    box = SearchBox.cube(dimension, lo, hi)
    name = f"{base}-d{dimension}-shift{shift:g}"
    return BenchmarkProblem(name, base, box, np.full(dimension, float(shift)))


def evaluate(problem: BenchmarkProblem, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dimension,):
        raise DimensionMismatchError(f"expected {problem.dimension} coordinates, got shape {x.shape}")
    return float(BASES[problem.base](x - problem.shift))


# --------------------------------------------------------------------------
# Coverage model


@dataclass(frozen=True)
class CoverageModel:
    """Sequential random deployment covering a fraction ``va_over_vs`` per step."""

    va_over_vs: float
    horizon: int

    def __post_init__(self):
        if not 0 < self.va_over_vs <= 1:
            raise ValueError("va_over_vs must lie in (0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


def coverage_probability(model: CoverageModel, t: int) -> float:
    """Probability ``1 - (1 - Va/Vs)**t`` that the optimum was hit by step ``t``."""
    if not 0 <= t <= model.horizon:
        raise ValueError(f"t must lie in [0, {model.horizon}]")
    # expm1/log1p keep full precision for tiny ratios
    return float(-np.expm1(t * np.log1p(-model.va_over_vs))) if model.va_over_vs < 1 else float(t > 0)


def coverage_monte_carlo(va_over_vs: float, t: int, trials: int, stream: RandomStream,
                         chunk: int = 100_000) -> float:
    """Fraction of ``trials`` in which at least one of ``t`` uniform probes lands in the target."""
    hits = 0
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        probes = stream.random((n, t))
        hits += int(np.count_nonzero(probes.min(axis=1) < va_over_vs))
        done += n
    return hits / trials


# --------------------------------------------------------------------------
# Experiments


@dataclass(frozen=True)
class ExperimentResult:
    engine: str
    problem: str
    base: str
    shift: float
    seeds: tuple[int, ...]
    final_values: tuple[float, ...]
    final_distances: tuple[float, ...]

    @property
    def runs(self) -> int:
        return len(self.seeds)

    @property
    def mean(self) -> float:
        return float(np.mean(self.final_values))

    @property
    def median(self) -> float:
        return float(np.median(self.final_values))

    @property
    def stddev(self) -> float:
        return float(np.std(self.final_values))

    @property
    def mean_distance(self) -> float:
        return float(np.mean(self.final_distances))

    def to_dict(self) -> dict:
        return {
            "engine": self.engine,
            "problem": self.problem,
            "base": self.base,
            "shift": self.shift,
            "runs": self.runs,
            "seeds": list(self.seeds),
            "final_values": list(self.final_values),
            "final_distances": list(self.final_distances),
            "mean": self.mean,
            "median": self.median,
            "stddev": self.stddev,
            "mean_distance": self.mean_distance,
        }

    def rows(self):
        return zip(self.seeds, self.final_values, self.final_distances)


def run_experiment(engine: str, problem: BenchmarkProblem, config: EngineConfig,
                   runs: int, seeds: Sequence[int]) -> ExperimentResult:
    """
    Run ``engine`` once per seed to the full horizon and collect final results.

    The config's seed is ignored; each run seeds its own stream. Runs are
    sorted by seed so the result does not depend on input order.
    """
    if engine not in ITERATORS:
        raise ValueError(f"unknown engine {engine!r}; choose from {sorted(ITERATORS)}")
    if runs < 1 or runs != len(seeds):
        raise ValueError("runs must equal the number of seeds and be >= 1")
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    if config.dimension != problem.dimension or not (
        np.array_equal(config.box.lower, problem.box.lower) and np.array_equal(config.box.upper, problem.box.upper)
    ):
        raise DimensionMismatchError("engine config and problem disagree on the search box")
    iterate = ITERATORS[engine]
    finals, distances = [], []
    ordered = sorted(int(s) for s in seeds)
    for seed in ordered:
        state = initialize(config, problem, RandomStream(seed))
        while state.iteration < state.max_iterations:
            state = iterate(state, problem)
        finals.append(state.best_value)
        distances.append(float(np.linalg.norm(state.best_agent - problem.shift)))
    return ExperimentResult(
        engine=engine,
        problem=problem.name,
        base=problem.base,
        shift=float(problem.shift[0]) if np.all(problem.shift == problem.shift[0]) else float(np.linalg.norm(problem.shift)),
        seeds=tuple(ordered),
        final_values=tuple(finals),
        final_distances=tuple(distances),
    )


@dataclass(frozen=True)
class Verdict:
    verdict: str
    engine: str
    median_origin: float
    median_shifted: float
    degradation: float
    p_value: float
    factor: float
    alpha: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def zero_bias_verdict(result_origin: ExperimentResult, result_shifted: ExperimentResult,
                      factor: float = 10.0, alpha: float = 0.01) -> Verdict:
    """
    ``BIASED`` when the shifted problem's median final value exceeds the
    origin problem's by more than ``factor`` and a two-sided Mann-Whitney U
    test rejects equality at ``alpha``; otherwise ``INCONCLUSIVE``.
    """
    if (result_origin.engine, result_origin.base, result_origin.runs) != (
        result_shifted.engine, result_shifted.base, result_shifted.runs
    ):
        raise ValueError("comparison requires the same engine, base function and run count")
    m0, m1 = result_origin.median, result_shifted.median
    if m0 > 0:
        degradation = m1 / m0
    else:
        degradation = np.inf if m1 > 0 else 1.0
    a, b = np.asarray(result_origin.final_values), np.asarray(result_shifted.final_values)
    p = 1.0 if np.array_equal(np.sort(a), np.sort(b)) else float(mannwhitneyu(a, b, alternative="two-sided").pvalue)
    biased = degradation > factor and p < alpha
    return Verdict("BIASED" if biased else "INCONCLUSIVE", result_origin.engine, m0, m1,
                   float(degradation), p, factor, alpha)


@dataclass
class ExperimentSpec:
    """JSON experiment definition: one engine on an origin/shifted problem pair."""

    engine: str = "stoa"
    problem: str = "sphere"
    shift: float = 50.0
    D: int = 10
    N: int = 30
    T: int = 500
    runs: int = 30
    seeds: list[int] = field(default_factory=list)
    lower: float = -100.0
    upper: float = 100.0
    boundary: str = "clamp"
    factor: float = 10.0
    alpha: float = 0.01

    def __post_init__(self):
        if self.engine not in ITERATORS:
            raise ValueError(f"unknown engine {self.engine!r}; choose from {sorted(ITERATORS)}")
        if self.problem not in BASES:
            raise ValueError(f"unknown problem {self.problem!r}; choose from {sorted(BASES)}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.seeds and len(self.seeds) != self.runs:
            raise ValueError("seeds must list exactly `runs` entries")

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("experiment definition must be a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        return cls(**data)

    def resolved_seeds(self, base_seed: int) -> list[int]:
        return list(self.seeds) if self.seeds else [base_seed + i for i in range(self.runs)]

    def config(self) -> EngineConfig:
        return EngineConfig(population_size=self.N, max_iterations=self.T, dimension=self.D,
                            lower=self.lower, upper=self.upper, boundary=self.boundary)

    def problems(self) -> tuple[BenchmarkProblem, BenchmarkProblem]:
        return (make_problem(self.problem, self.D, 0.0, self.lower, self.upper),
                make_problem(self.problem, self.D, self.shift, self.lower, self.upper))

    def run(self, base_seed: int) -> tuple[ExperimentResult, ExperimentResult, Verdict]:
        seeds = self.resolved_seeds(base_seed)
        config = self.config()
        origin, shifted = self.problems()
        r0 = run_experiment(self.engine, origin, config, self.runs, seeds)
        r1 = run_experiment(self.engine, shifted, config, self.runs, seeds)
        return r0, r1, zero_bias_verdict(r0, r1, self.factor, self.alpha)
