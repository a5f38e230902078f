"""
Sooty tern (STOA) and tunicate swarm (TSA) population updates.

Every intermediate expression of both update rules is a standalone function so
the distribution lab can sample it in isolation, and the iterate functions can
tap each stage while stepping a population.

All stage functions accept a single agent of shape ``(D,)`` or a population of
shape ``(N, D)``. Quantities drawn once per agent (the spiral angle, the TSA
branch threshold) have shape ``(N,)`` for populations and are broadcast over
coordinates.

Notes
-----
The spiral radius uses ``exp(-theta)``. The originally published ``exp(+theta)``
reaches ``exp(2*pi) ~ 535.49`` and throws agents far outside any sensible box;
only the decaying form is implemented.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .core import (
    EPS_DIV,
    DimensionMismatchError,
    RandomStream,
    SearchBox,
    hadamard_div,
    hadamard_mul,
)
from . import io

__all__ = [
    "Stage",
    "StageTap",
    "make_taps",
    "SpiralDraw",
    "EngineConfig",
    "OptimizerState",
    "ExhaustedError",
    "stoa_collision_avoidance",
    "stoa_convergence",
    "stoa_step",
    "spiral_from_theta",
    "stoa_spiral",
    "stoa_update",
    "tsa_move_factor",
    "tsa_step",
    "tsa_vicinity",
    "tsa_swarm",
    "initialize",
    "stoa_iterate",
    "tsa_iterate",
    "uniform_search_iterate",
    "ITERATORS",
    "run",
    "write_trace_csv",
    "read_trace_csv",
]

ObjectiveFn = Callable[[np.ndarray], float]


class Stage(str, Enum):
    STOA_CA = "stoa_ca"
    STOA_CV = "stoa_cv"
    STOA_STEP = "stoa_step"
    STOA_SPIRAL_ALPHA = "stoa_spiral_alpha"
    STOA_SPIRAL_BETA = "stoa_spiral_beta"
    STOA_SPIRAL_GAMMA = "stoa_spiral_gamma"
    STOA_SPIRAL_RHO = "stoa_spiral_rho"
    STOA_UPDATE = "stoa_update"
    TSA_MOVEFACTOR = "tsa_movefactor"
    TSA_STEP = "tsa_step"
    TSA_VICINITY = "tsa_vicinity"
    TSA_SWARM = "tsa_swarm"

    @classmethod
    def parse(cls, name: str) -> "Stage":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown stage {name!r}; choose from {', '.join(s.value for s in cls)}") from None


STAGE_ORDER = {stage: i for i, stage in enumerate(Stage)}

# Scalar-per-agent quantities; tapped once per agent, recorded with dim = -1.
PER_AGENT_STAGES = frozenset(
    {Stage.STOA_SPIRAL_ALPHA, Stage.STOA_SPIRAL_BETA, Stage.STOA_SPIRAL_GAMMA, Stage.STOA_SPIRAL_RHO}
)


class StageTap:
    """
    Append-only record of the values produced by one stage.

    Non-finite values never enter the buffer; they are counted in
    :attr:`overflow` instead.
    """

    def __init__(self, stage: Stage):
        self.stage = Stage(stage)
        self.overflow = 0
        self._chunks: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []

    def __len__(self):
        return sum(chunk[3].size for chunk in self._chunks)

    def record(self, iteration: int, values) -> None:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
            dims = np.full(values.shape, -1)
        else:
            dims = np.broadcast_to(np.arange(values.shape[1]), values.shape)
        agents = np.broadcast_to(np.arange(values.shape[0])[:, None], values.shape)
        finite = np.isfinite(values)
        self.overflow += int(values.size - finite.sum())
        self._chunks.append(
            (
                np.full(int(finite.sum()), iteration),
                agents[finite].copy(),
                dims[finite].copy(),
                values[finite].copy(),
            )
        )

    def _column(self, k: int, dtype) -> np.ndarray:
        if not self._chunks:
            return np.empty(0, dtype=dtype)
        return np.concatenate([chunk[k] for chunk in self._chunks]).astype(dtype, copy=False)

    @property
    def samples(self) -> np.ndarray:
        return self._column(3, float)

    def rows(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(iteration, agent, dim, value)`` columns in recording order."""
        return (self._column(0, int), self._column(1, int), self._column(2, int), self.samples)


def make_taps(stages: Iterable[Stage | str] | None = None) -> dict[Stage, StageTap]:
    """Fresh taps for the given stages (all twelve when ``None``)."""
    selected = list(Stage) if stages is None else [Stage.parse(s) if isinstance(s, str) else Stage(s) for s in stages]
    return {stage: StageTap(stage) for stage in selected}


def _record(taps, stage, iteration, values):
    if taps and stage in taps:
        taps[stage].record(iteration, values)


# --------------------------------------------------------------------------
# STOA stages


def stoa_collision_avoidance(x_ca, t, T: int) -> np.ndarray:
    """Scale the position by the linearly decaying factor ``2 - 2t/T``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    t = np.asarray(t)
    if np.any(t < 0) or np.any(t > T):
        raise ValueError(f"t must lie in [0, {T}]")
    factor = 2.0 - 2.0 * t / T
    x_ca = np.asarray(x_ca, dtype=float)
    if factor.ndim:
        factor = factor.reshape(factor.shape + (1,) * (x_ca.ndim - factor.ndim))
    return x_ca * factor


def stoa_convergence(x_cv, best, stream: RandomStream | None = None, r=None) -> np.ndarray:
    """``0.5 * r * (best - x_cv)`` with fresh ``r ~ U(0,1)`` per coordinate."""
    x_cv = np.asarray(x_cv, dtype=float)
    best = np.asarray(best, dtype=float)
    if best.shape != x_cv.shape[x_cv.ndim - best.ndim:]:
        raise DimensionMismatchError(f"shape mismatch: {best.shape} vs {x_cv.shape}")
    if r is None:
        r = stream.random(x_cv.shape)
    return hadamard_mul(0.5 * np.asarray(r, dtype=float), np.broadcast_to(best - x_cv, x_cv.shape))


def stoa_step(x_ca_next, x_cv_next) -> np.ndarray:
    a = np.asarray(x_ca_next, dtype=float)
    b = np.asarray(x_cv_next, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a + b


@dataclass(frozen=True)
class SpiralDraw:
    """Spiral terms derived from one angle (or an array of angles)."""

    theta: float | np.ndarray
    rho: float | np.ndarray
    alpha: float | np.ndarray
    beta: float | np.ndarray
    gamma: float | np.ndarray

    @property
    def total(self):
        return self.alpha + self.beta + self.gamma


def spiral_from_theta(theta) -> SpiralDraw:
    theta = np.asarray(theta, dtype=float)
    rho = np.exp(-theta)
    draw = SpiralDraw(theta, rho, rho * np.sin(theta), rho * np.cos(theta), rho * theta)
    if theta.ndim == 0:
        return SpiralDraw(*(float(v) for v in (draw.theta, draw.rho, draw.alpha, draw.beta, draw.gamma)))
    return draw


def stoa_spiral(stream: RandomStream, size=None) -> SpiralDraw:
    """Draw ``theta ~ 2*pi*U(0,1)`` and derive the spiral terms."""
    return spiral_from_theta(2.0 * np.pi * stream.random(size))


def stoa_update(best, step, spiral: SpiralDraw) -> np.ndarray:
    """``best * step * (alpha + beta + gamma)``; the spiral sum scales all coordinates."""
    step = np.asarray(step, dtype=float)
    best = np.asarray(best, dtype=float)
    if best.shape != step.shape[step.ndim - best.ndim:]:
        raise DimensionMismatchError(f"shape mismatch: {best.shape} vs {step.shape}")
    total = np.asarray(spiral.total, dtype=float)
    if total.ndim:
        total = total.reshape(total.shape + (1,) * (step.ndim - total.ndim))
    return best * step * total


# --------------------------------------------------------------------------
# TSA stages


def tsa_move_factor(stream: RandomStream | None, dimension=None, r1=None, r2=None, r3=None) -> np.ndarray:
    """
    Movement factor ``(r1 + r2 - 2 r3) / (4 r3)``.

    ``r3`` is shared between numerator and denominator. Coordinates whose
    ``r3`` falls below ``EPS_DIV`` are redrawn before dividing.
    """
    shape = (dimension,) if np.isscalar(dimension) else dimension
    if r1 is None:
        r1 = stream.random(shape)
    if r2 is None:
        r2 = stream.random(shape)
    if r3 is None:
        r3 = stream.random(shape)
        low = r3 < EPS_DIV
        while np.any(low):
            r3[low] = stream.random(int(low.sum()))
            low = r3 < EPS_DIV
    r1, r2, r3 = (np.asarray(v, dtype=float) for v in (r1, r2, r3))
    return hadamard_div(r1 + r2 - 2.0 * r3, 4.0 * r3)


def tsa_step(best, x, stream: RandomStream | None = None, r4=None) -> np.ndarray:
    """``|best - r4 * x|`` with fresh ``r4 ~ U(0,1)`` per coordinate."""
    x = np.asarray(x, dtype=float)
    best = np.asarray(best, dtype=float)
    if best.shape != x.shape[x.ndim - best.ndim:]:
        raise DimensionMismatchError(f"shape mismatch: {best.shape} vs {x.shape}")
    if r4 is None:
        r4 = stream.random(x.shape)
    return np.abs(best - np.asarray(r4, dtype=float) * x)


def tsa_vicinity(best, a, step, stream: RandomStream | None = None, r5=None) -> np.ndarray:
    """
    ``best + a*step`` when ``r5 >= 0.5``, else ``best - a*step``.

    One threshold draw per agent: a scalar for a single agent, shape ``(N,)``
    for a population.
    """
    a = np.asarray(a, dtype=float)
    step = np.asarray(step, dtype=float)
    best = np.asarray(best, dtype=float)
    if a.shape != step.shape or best.shape != a.shape[a.ndim - best.ndim:]:
        raise DimensionMismatchError(f"shape mismatch: {best.shape}, {a.shape}, {step.shape}")
    if r5 is None:
        r5 = stream.random(a.shape[:-1] if a.ndim > 1 else None)
    sign = np.where(np.asarray(r5) >= 0.5, 1.0, -1.0)
    if sign.ndim:
        sign = sign.reshape(sign.shape + (1,) * (a.ndim - sign.ndim))
    return best + sign * (a * step)


def tsa_swarm(x, stream: RandomStream | None = None, r3=None) -> np.ndarray:
    """``x / (1 + r3)`` with fresh ``r3 ~ U(0,1)`` per coordinate."""
    x = np.asarray(x, dtype=float)
    if r3 is None:
        r3 = stream.random(x.shape)
    return hadamard_div(x, 1.0 + np.broadcast_to(np.asarray(r3, dtype=float), x.shape))


# --------------------------------------------------------------------------
# Steppable optimizers

BOUNDARY_POLICIES = ("record", "clamp")


@dataclass
class EngineConfig:
    """Serializable engine run configuration."""

    population_size: int = 30
    max_iterations: int = 500
    dimension: int = 10
    lower: float | list[float] = -100.0
    upper: float | list[float] = 100.0
    seed: int = 20250101
    boundary: str = "record"
    taps: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.boundary not in BOUNDARY_POLICIES:
            raise ValueError(f"boundary must be one of {BOUNDARY_POLICIES}")
        for name in self.taps:
            Stage.parse(name)
        self.box  # validates bounds

    @property
    def box(self) -> SearchBox:
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (self.dimension,))
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (self.dimension,))
        return SearchBox(lower.copy(), upper.copy())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EngineConfig":
        data = json.loads(text)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class OptimizerState:
    population: np.ndarray
    best_agent: np.ndarray
    best_value: float
    iteration: int
    max_iterations: int
    stream: RandomStream
    box: SearchBox
    boundary: str = "record"
    evaluations: int = 0


class ExhaustedError(RuntimeError):
    """Raised when stepping a state that already reached its iteration budget."""


def _evaluate(objective: ObjectiveFn, population: np.ndarray) -> np.ndarray:
    batch = getattr(objective, "batch", None)
    with np.errstate(over="ignore", invalid="ignore"):
        if batch is not None:
            values = np.asarray(batch(population), dtype=float)
        else:
            values = np.array([float(objective(agent)) for agent in population])
    return np.where(np.isnan(values), np.inf, values)


def _select(state: OptimizerState, population: np.ndarray, values: np.ndarray) -> OptimizerState:
    i = int(np.argmin(values))
    best_agent, best_value = state.best_agent, state.best_value
    if values[i] < best_value:
        best_agent, best_value = population[i].copy(), float(values[i])
    return replace(
        state,
        population=population,
        best_agent=best_agent,
        best_value=best_value,
        iteration=state.iteration + 1,
        evaluations=state.evaluations + len(values),
    )


def _apply_boundary(state: OptimizerState, population: np.ndarray) -> np.ndarray:
    if state.boundary == "clamp":
        return state.box.clip(population)
    return population


def initialize(config: EngineConfig, objective: ObjectiveFn, stream: RandomStream | None = None) -> OptimizerState:
    """Uniform initial population in the box, evaluated once."""
    box = config.box
    stream = stream if stream is not None else RandomStream(config.seed)
    population = box.lower + (box.upper - box.lower) * stream.random((config.population_size, box.dimension))
    values = _evaluate(objective, population)
    i = int(np.argmin(values))
    return OptimizerState(
        population=population,
        best_agent=population[i].copy(),
        best_value=float(values[i]),
        iteration=0,
        max_iterations=config.max_iterations,
        stream=stream,
        box=box,
        boundary=config.boundary,
        evaluations=len(values),
    )


def _check_budget(state: OptimizerState):
    if state.iteration >= state.max_iterations:
        raise ExhaustedError(f"iteration budget of {state.max_iterations} exhausted")


def stoa_iterate(state: OptimizerState, objective: ObjectiveFn, taps: dict | None = None) -> OptimizerState:
    """One STOA iteration over the whole population (synchronous update)."""
    _check_budget(state)
    t, X, best, stream = state.iteration, state.population, state.best_agent, state.stream
    with np.errstate(over="ignore", invalid="ignore"):
        x_ca = stoa_collision_avoidance(X, t, state.max_iterations)
        x_cv = stoa_convergence(X, best, stream)
        step = stoa_step(x_ca, x_cv)
        spiral = stoa_spiral(stream, size=X.shape[0])
        new = stoa_update(best, step, spiral)
    if taps:
        _record(taps, Stage.STOA_CA, t, x_ca)
        _record(taps, Stage.STOA_CV, t, x_cv)
        _record(taps, Stage.STOA_STEP, t, step)
        _record(taps, Stage.STOA_SPIRAL_ALPHA, t, spiral.alpha)
        _record(taps, Stage.STOA_SPIRAL_BETA, t, spiral.beta)
        _record(taps, Stage.STOA_SPIRAL_GAMMA, t, spiral.gamma)
        _record(taps, Stage.STOA_SPIRAL_RHO, t, spiral.rho)
        _record(taps, Stage.STOA_UPDATE, t, new)
    new = _apply_boundary(state, new)
    return _select(state, new, _evaluate(objective, new))


def tsa_iterate(state: OptimizerState, objective: ObjectiveFn, taps: dict | None = None) -> OptimizerState:
    """One TSA iteration over the whole population (synchronous update)."""
    _check_budget(state)
    t, X, best, stream = state.iteration, state.population, state.best_agent, state.stream
    with np.errstate(over="ignore", invalid="ignore"):
        a = tsa_move_factor(stream, X.shape)
        step = tsa_step(best, X, stream)
        vicinity = tsa_vicinity(best, a, step, stream)
        new = tsa_swarm(vicinity, stream)
    if taps:
        _record(taps, Stage.TSA_MOVEFACTOR, t, a)
        _record(taps, Stage.TSA_STEP, t, step)
        _record(taps, Stage.TSA_VICINITY, t, vicinity)
        _record(taps, Stage.TSA_SWARM, t, new)
    new = _apply_boundary(state, new)
    return _select(state, new, _evaluate(objective, new))


def uniform_search_iterate(state: OptimizerState, objective: ObjectiveFn, taps: dict | None = None) -> OptimizerState:
    """Baseline: redraw every agent uniformly in the box."""
    _check_budget(state)
    box = state.box
    new = box.lower + (box.upper - box.lower) * state.stream.random(state.population.shape)
    return _select(state, new, _evaluate(objective, new))


ITERATORS: dict[str, Callable[..., OptimizerState]] = {
    "stoa": stoa_iterate,
    "tsa": tsa_iterate,
    "random": uniform_search_iterate,
}


def run(engine: str, config: EngineConfig, objective: ObjectiveFn, taps: dict | None = None) -> OptimizerState:
    """Initialize and iterate ``engine`` until the iteration budget is spent."""
    try:
        iterate = ITERATORS[engine]
    except KeyError:
        raise ValueError(f"unknown engine {engine!r}; choose from {sorted(ITERATORS)}") from None
    state = initialize(config, objective)
    while state.iteration < state.max_iterations:
        state = iterate(state, objective, taps)
    return state


TRACE_HEADER = ("iteration", "agent", "dim", "stage", "value")


def write_trace_csv(taps: dict[Stage, StageTap], path) -> Path:
    """Write tapped values sorted by (iteration, stage, agent, dim)."""
    parts = []
    for stage, tap in taps.items():
        it, ag, dm, val = tap.rows()
        parts.append((it, np.full(it.size, STAGE_ORDER[stage]), ag, dm, val))
    if parts:
        it, st, ag, dm, val = (np.concatenate(col) for col in zip(*parts))
    else:
        it = st = ag = dm = np.empty(0, dtype=int)
        val = np.empty(0)
    order = np.lexsort((dm, ag, st, it))
    stages = list(Stage)
    rows = (
        (int(it[k]), int(ag[k]), int(dm[k]), stages[st[k]].value, float(val[k]))
        for k in order
    )
    return io.write_csv(path, TRACE_HEADER, rows)


def read_trace_csv(path) -> dict[str, np.ndarray]:
    return io.read_csv(path, {"iteration": int, "agent": int, "dim": int, "stage": str, "value": float})
