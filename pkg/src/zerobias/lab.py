"""
Monte Carlo density estimation of update-rule stages, closed-form arcsine
reference density, peak detection and zero-concentration metrics.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import io
from .core import RandomStream
from .engines import (
    STAGE_ORDER,
    Stage,
    stoa_collision_avoidance,
    stoa_convergence,
    stoa_spiral,
    stoa_step,
    stoa_update,
    tsa_move_factor,
    tsa_step,
    tsa_swarm,
    tsa_vicinity,
)

__all__ = [
    "DomainError",
    "EmpiricalDensity",
    "estimate_density",
    "write_density_csv",
    "read_density_csv",
    "arcsine_density",
    "arcsine_bin_density",
    "arcsine_l1",
    "density_at",
    "sine_of_uniform_samples",
    "cosine_of_uniform_samples",
    "AngleChannel",
    "angle_channel",
    "angle_channel_from_samples",
    "find_peaks",
    "theta_peak_locations",
    "BiasReport",
    "bias_report",
    "AuditProtocol",
    "stage_samples",
    "stage_audit",
]


class DomainError(ValueError):
    """Raised when an argument lies outside a function's domain."""


# --------------------------------------------------------------------------
# Histograms


def _bin_count(lo: float, hi: float, bin_width: float) -> int:
    # tolerate (hi - lo) / bin_width landing a hair above an integer
    return max(1, math.ceil((hi - lo) / bin_width - 1e-9))


@dataclass(frozen=True, eq=False)
class EmpiricalDensity:
    """
    Fixed-bin histogram on ``[lo, hi]``.

    Bins are left-closed and right-open except the last, which closes at
    ``hi`` and may be narrower than ``bin_width``. Densities are normalized by
    the total sample count, so out-of-range and non-finite samples lower the
    integral below one.
    """

    lo: float
    hi: float
    bin_width: float
    counts: np.ndarray
    total: int
    overflow_low: int = 0
    overflow_high: int = 0
    nonfinite: int = 0

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    @property
    def edges(self) -> np.ndarray:
        edges = self.lo + self.bin_width * np.arange(self.n_bins + 1)
        edges[-1] = self.hi
        return edges

    @property
    def widths(self) -> np.ndarray:
        widths = np.full(self.n_bins, self.bin_width)
        widths[-1] = self.hi - (self.lo + self.bin_width * (self.n_bins - 1))
        return widths

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[1:] + e[:-1])

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.total * self.widths)

    @property
    def outside(self) -> int:
        return self.overflow_low + self.overflow_high + self.nonfinite

    def integral(self) -> float:
        return float(np.sum(self.density * self.widths))

    def __add__(self, other: "EmpiricalDensity") -> "EmpiricalDensity":
        if (self.lo, self.hi, self.bin_width) != (other.lo, other.hi, other.bin_width):
            raise ValueError("cannot merge densities on different grids")
        return EmpiricalDensity(
            self.lo,
            self.hi,
            self.bin_width,
            self.counts + other.counts,
            self.total + other.total,
            self.overflow_low + other.overflow_low,
            self.overflow_high + other.overflow_high,
            self.nonfinite + other.nonfinite,
        )

    def bin_index(self, values) -> np.ndarray:
        """Bin index per value; -1 below ``lo``, ``n_bins`` above ``hi``."""
        values = np.asarray(values, dtype=float)
        idx = np.floor((values - self.lo) / self.bin_width).astype(np.int64)
        idx = np.clip(idx, 0, self.n_bins - 1)
        idx[values < self.lo] = -1
        idx[values > self.hi] = self.n_bins
        return idx


def estimate_density(samples, lo: float, hi: float, bin_width: float) -> EmpiricalDensity:
    """Histogram ``samples`` on ``[lo, hi]`` with the given bin width."""
    if not lo < hi:
        raise DomainError(f"need lo < hi, got {lo}, {hi}")
    if not bin_width > 0:
        raise DomainError("bin_width must be positive")
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ValueError("cannot estimate a density from an empty sample")
    finite = np.isfinite(samples)
    values = samples[finite]
    n_bins = _bin_count(lo, hi, bin_width)
    shell = EmpiricalDensity(float(lo), float(hi), float(bin_width), np.zeros(n_bins, dtype=np.int64), 0)
    idx = shell.bin_index(values)
    inside = (idx >= 0) & (idx < n_bins)
    counts = np.bincount(idx[inside], minlength=n_bins).astype(np.int64)
    return EmpiricalDensity(
        float(lo),
        float(hi),
        float(bin_width),
        counts,
        int(samples.size),
        int(np.sum(idx < 0)),
        int(np.sum(idx >= n_bins)),
        int(samples.size - finite.sum()),
    )


DENSITY_HEADER = ("bin_center", "density", "count")


def write_density_csv(density: EmpiricalDensity, path):
    rows = zip(density.centers, density.density, density.counts)
    return io.write_csv(path, DENSITY_HEADER, rows)


def read_density_csv(path) -> dict[str, np.ndarray]:
    return io.read_csv(path, {"count": int})


# --------------------------------------------------------------------------
# Arcsine reference


def arcsine_density(y):
    """
    Density of ``sin(theta)`` (or ``cos(theta)``) for ``theta ~ U(0, 2*pi)``.

    Returns ``1 / (pi * sqrt(1 - y**2))``; unbounded at the endpoints, so
    ``|y| >= 1`` raises :class:`DomainError`.
    """
    y_arr = np.asarray(y, dtype=float)
    if np.any(~(np.abs(y_arr) < 1)):
        raise DomainError("arcsine density is defined only for |y| < 1")
    out = 1.0 / (np.pi * np.sqrt(1.0 - y_arr * y_arr))
    return float(out) if out.ndim == 0 else out


def arcsine_bin_density(edges) -> np.ndarray:
    """Exact mean of the arcsine density over each bin, from the closed-form CDF."""
    edges = np.clip(np.asarray(edges, dtype=float), -1.0, 1.0)
    return (np.arcsin(edges[1:]) - np.arcsin(edges[:-1])) / (np.pi * np.diff(edges))


def arcsine_l1(density: EmpiricalDensity, limit: float = 0.99) -> tuple[float, float]:
    """
    L1 distance between a histogram and the arcsine law on bins inside
    ``|y| <= limit``.

    Each bin is compared with the exact bin-averaged reference. Returns
    ``(l1, excluded_mass)`` where ``excluded_mass`` is the empirical mass
    outside the compared bins.
    """
    e = density.edges
    keep = (e[:-1] >= -limit - 1e-12) & (e[1:] <= limit + 1e-12)
    ref = arcsine_bin_density(e)
    diff = np.abs(density.density - ref) * density.widths
    l1 = float(np.sum(diff[keep]))
    excluded = 1.0 - float(np.sum(density.counts[keep])) / density.total
    return l1, excluded


def density_at(density: EmpiricalDensity, y: float) -> float:
    """Density at ``y`` by linear interpolation between bin centers."""
    return float(np.interp(y, density.centers, density.density))


def sine_of_uniform_samples(stream: RandomStream, n: int) -> np.ndarray:
    """``n`` i.i.d. values of ``sin(theta)``, ``theta ~ U(0, 2*pi)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.sin(stream.uniform(0.0, 2.0 * np.pi, n))


def cosine_of_uniform_samples(stream: RandomStream, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.cos(stream.uniform(0.0, 2.0 * np.pi, n))


# --------------------------------------------------------------------------
# Angle channels and peaks


@dataclass(frozen=True, eq=False)
class AngleChannel:
    """
    Density of a trigonometric channel over ``[-1, 1]`` that remembers which
    angles fed each bin, as per-bin sums of ``sin(theta)`` and ``cos(theta)``.
    """

    channel: str
    density: EmpiricalDensity
    sin_sum: np.ndarray
    cos_sum: np.ndarray

    def mean_theta(self, k: int) -> float:
        """Circular mean of the angles that landed in bin ``k``, in ``[0, 2*pi)``."""
        return float(np.mod(np.arctan2(self.sin_sum[k], self.cos_sum[k]), 2.0 * np.pi))


_CHANNELS = {"sin": np.sin, "cos": np.cos}


def angle_channel_from_samples(theta, values, channel: str, resolution: float = 0.01) -> AngleChannel:
    theta = np.asarray(theta, dtype=float)
    values = np.asarray(values, dtype=float)
    if theta.shape != values.shape:
        raise ValueError("theta and values must align")
    density = estimate_density(values, -1.0, 1.0, resolution)
    idx = density.bin_index(values)
    n = density.n_bins
    inside = (idx >= 0) & (idx < n)
    sin_sum = np.bincount(idx[inside], weights=np.sin(theta[inside]), minlength=n)
    cos_sum = np.bincount(idx[inside], weights=np.cos(theta[inside]), minlength=n)
    return AngleChannel(channel, density, sin_sum, cos_sum)


def angle_channel(stream: RandomStream, n: int, channel: str, resolution: float = 0.01) -> AngleChannel:
    """Sample ``theta ~ U(0, 2*pi)`` and bin ``sin`` or ``cos`` of it."""
    if channel not in _CHANNELS:
        raise ValueError(f"channel must be one of {sorted(_CHANNELS)}")
    theta = stream.uniform(0.0, 2.0 * np.pi, n)
    return angle_channel_from_samples(theta, _CHANNELS[channel](theta), channel, resolution)


def find_peaks(density: EmpiricalDensity, factor: float = 2.0) -> np.ndarray:
    """
    Indices of bins that beat both neighbours and ``factor`` times the
    median bin density. Edge bins only need to beat their single neighbour.
    """
    d = density.density
    if d.size < 2:
        return np.empty(0, dtype=int)
    left = np.concatenate(([-np.inf], d[:-1]))
    right = np.concatenate((d[1:], [-np.inf]))
    mask = (d > left) & (d > right) & (d > factor * np.median(d))
    return np.flatnonzero(mask)


def theta_peak_locations(channel: AngleChannel) -> list[float]:
    """Angles, in ``[0, 2*pi)``, responsible for the peaks of a channel density."""
    density = channel.density
    if (density.lo, density.hi) != (-1.0, 1.0):
        raise DomainError("angle channel densities must span [-1, 1]")
    return sorted(channel.mean_theta(k) for k in find_peaks(density))


# --------------------------------------------------------------------------
# Zero-bias metrics


@dataclass(frozen=True)
class BiasReport:
    stage: str | None
    window: float
    near_zero_mass: float
    uniform_baseline: float
    concentration_ratio: float
    mode_bin_center: float
    l1_distance_to_uniform: float
    outside_mass: float

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "window": self.window,
            "near_zero_mass": self.near_zero_mass,
            "uniform_baseline": self.uniform_baseline,
            "concentration_ratio": self.concentration_ratio,
            "mode_bin_center": self.mode_bin_center,
            "l1_distance_to_uniform": self.l1_distance_to_uniform,
            "outside_mass": self.outside_mass,
        }


def bias_report(density: EmpiricalDensity, window: float, stage: str | None = None) -> BiasReport:
    """
    Concentration of probability mass in ``[-window, window]`` relative to a
    uniform law on the histogram span.

    The near-zero mass is taken over all samples, including those outside the
    span, with partially covered bins weighted by their overlap.
    """
    span = density.hi - density.lo
    if not (0 < window < span / 2):
        raise DomainError(f"window must lie in (0, {span / 2})")
    if not density.lo <= 0 <= density.hi:
        raise DomainError("histogram span must contain the origin")
    if density.total <= 0:
        raise ValueError("empty density")
    e = density.edges
    overlap = np.clip(np.minimum(e[1:], window) - np.maximum(e[:-1], -window), 0.0, None) / density.widths
    near = float(np.sum(density.counts * overlap) / density.total)
    baseline = 2.0 * window / span
    outside = density.outside / density.total
    l1 = float(np.sum(np.abs(density.density - 1.0 / span) * density.widths)) + outside
    return BiasReport(
        stage=stage,
        window=float(window),
        near_zero_mass=near,
        uniform_baseline=baseline,
        concentration_ratio=near / baseline,
        mode_bin_center=float(density.centers[int(np.argmax(density.counts))]),
        l1_distance_to_uniform=min(l1, 2.0),
        outside_mass=outside,
    )


# --------------------------------------------------------------------------
# Stage audits


def _default_stage_ranges() -> dict[str, tuple[float, float]]:
    # the convergence panel is drawn for differences x* - x within [-1, 1]
    return {Stage.STOA_CV.value: (-1.0, 1.0)}


@dataclass(frozen=True)
class AuditProtocol:
    """
    Sampling protocol for stage audits.

    Attributes
    ----------
    samples : int
        Monte Carlo sample count per stage.
    span_lo, span_hi : float
        Range of the uniformly distributed stage inputs, and histogram span.
    resolution : float
        Histogram bin width on the span.
    angle_resolution : float
        Bin width for the trigonometric channels.
    window : float
        Half-width of the near-zero window for :func:`bias_report`.
    seed : int
        Root seed; each stage and chunk gets its own substream.
    stages : tuple of str
        Stages to audit.
    stage_ranges : dict
        Per-stage input range overriding the span. The histogram span, bin
        width and window of that stage are rescaled by the same factor.
    horizon : int
        Iteration budget ``T`` used when drawing ``t`` for the collision
        factor ``2 - 2t/T``.
    chunk_size : int
        Samples per substream; fixes the draw layout independent of threads.
    """

    samples: int = 1_000_000
    span_lo: float = -100.0
    span_hi: float = 100.0
    resolution: float = 1.0
    angle_resolution: float = 0.01
    window: float = 1.0
    seed: int = 20250101
    stages: tuple[str, ...] = tuple(s.value for s in Stage)
    stage_ranges: dict = field(default_factory=_default_stage_ranges)
    horizon: int = 1000
    chunk_size: int = 1 << 18

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if not self.span_lo < self.span_hi:
            raise ValueError("span_lo must be < span_hi")
        if not self.resolution > 0 or not self.angle_resolution > 0:
            raise ValueError("resolutions must be positive")
        if not 0 < self.window < (self.span_hi - self.span_lo) / 2:
            raise ValueError("window must lie in (0, (span_hi - span_lo)/2)")
        if self.horizon < 1 or self.chunk_size < 1:
            raise ValueError("horizon and chunk_size must be >= 1")
        object.__setattr__(self, "stages", tuple(Stage.parse(s).value for s in self.stages))

    def stage_domain(self, stage: Stage) -> tuple[float, float, float, float]:
        """``(lo, hi, bin_width, window)`` for one stage."""
        lo, hi = self.stage_ranges.get(Stage(stage).value, (self.span_lo, self.span_hi))
        scale = (hi - lo) / (self.span_hi - self.span_lo)
        return float(lo), float(hi), self.resolution * scale, self.window * scale

    def echo(self) -> dict:
        return {
            "seed": self.seed,
            "n": self.samples,
            "span": [self.span_lo, self.span_hi],
            "resolution": self.resolution,
            "window": self.window,
            "angle_resolution": self.angle_resolution,
            "horizon": self.horizon,
            "stage_ranges": {k: list(v) for k, v in sorted(self.stage_ranges.items())},
        }


# Each sampler evaluates the update chain up to its stage on n independent
# one-dimensional agents (shape (n, 1)) whose inputs are uniform on [lo, hi).


def _inputs(stream, n, lo, hi):
    best = stream.uniform(lo, hi, (n, 1))
    x = stream.uniform(lo, hi, (n, 1))
    return best, x


def _stoa_chain(stream, n, lo, hi, horizon):
    best, x = _inputs(stream, n, lo, hi)
    t = stream.integers(0, horizon, n)
    x_ca = stoa_collision_avoidance(x, t, horizon)
    x_cv = stoa_convergence(x, best, stream)
    return best, stoa_step(x_ca, x_cv)


def _sample_stoa_ca(stream, n, lo, hi, horizon):
    x = stream.uniform(lo, hi, (n, 1))
    return stoa_collision_avoidance(x, stream.integers(0, horizon, n), horizon)


def _sample_stoa_cv(stream, n, lo, hi, horizon):
    diff = stream.uniform(lo, hi, (n, 1))
    return stoa_convergence(np.zeros_like(diff), diff, stream)


def _sample_stoa_step(stream, n, lo, hi, horizon):
    return _stoa_chain(stream, n, lo, hi, horizon)[1]


def _spiral_term(name):
    def sample(stream, n, lo, hi, horizon):
        return getattr(stoa_spiral(stream, n), name)

    return sample


def _sample_stoa_update(stream, n, lo, hi, horizon):
    best, step = _stoa_chain(stream, n, lo, hi, horizon)
    return stoa_update(best, step, stoa_spiral(stream, n))


def _tsa_chain(stream, n, lo, hi, upto):
    best, x = _inputs(stream, n, lo, hi)
    a = tsa_move_factor(stream, (n, 1))
    step = tsa_step(best, x, stream)
    if upto == Stage.TSA_STEP:
        return step
    vicinity = tsa_vicinity(best, a, step, stream)
    if upto == Stage.TSA_VICINITY:
        return vicinity
    return tsa_swarm(vicinity, stream)


STAGE_SAMPLERS: dict[Stage, Callable] = {
    Stage.STOA_CA: _sample_stoa_ca,
    Stage.STOA_CV: _sample_stoa_cv,
    Stage.STOA_STEP: _sample_stoa_step,
    Stage.STOA_SPIRAL_ALPHA: _spiral_term("alpha"),
    Stage.STOA_SPIRAL_BETA: _spiral_term("beta"),
    Stage.STOA_SPIRAL_GAMMA: _spiral_term("gamma"),
    Stage.STOA_SPIRAL_RHO: _spiral_term("rho"),
    Stage.STOA_UPDATE: _sample_stoa_update,
    Stage.TSA_MOVEFACTOR: lambda stream, n, lo, hi, horizon: tsa_move_factor(stream, (n, 1)),
    Stage.TSA_STEP: lambda stream, n, lo, hi, horizon: _tsa_chain(stream, n, lo, hi, Stage.TSA_STEP),
    Stage.TSA_VICINITY: lambda stream, n, lo, hi, horizon: _tsa_chain(stream, n, lo, hi, Stage.TSA_VICINITY),
    Stage.TSA_SWARM: lambda stream, n, lo, hi, horizon: _tsa_chain(stream, n, lo, hi, Stage.TSA_SWARM),
}


def _chunks(protocol: AuditProtocol, stage: Stage):
    n_chunks = -(-protocol.samples // protocol.chunk_size)
    for k in range(n_chunks):
        size = min(protocol.chunk_size, protocol.samples - k * protocol.chunk_size)
        yield RandomStream(protocol.seed, (STAGE_ORDER[stage], k)), size


def _draw(stage: Stage, protocol: AuditProtocol, stream: RandomStream, n: int) -> np.ndarray:
    lo, hi, _, _ = protocol.stage_domain(stage)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.asarray(STAGE_SAMPLERS[stage](stream, n, lo, hi, protocol.horizon), dtype=float).ravel()


def stage_samples(stage: Stage | str, protocol: AuditProtocol) -> np.ndarray:
    """Raw Monte Carlo samples of one stage under ``protocol``."""
    stage = Stage.parse(stage) if isinstance(stage, str) else Stage(stage)
    return np.concatenate([_draw(stage, protocol, s, n) for s, n in _chunks(protocol, stage)])


def stage_audit(stage: Stage | str, protocol: AuditProtocol, threads: int = 1) -> tuple[EmpiricalDensity, BiasReport]:
    """
    Estimate the density of one stage and its zero-concentration report.

    Samples are generated chunk by chunk from per-chunk substreams and the
    partial histograms are summed, so the result does not depend on
    ``threads``.
    """
    stage = Stage.parse(stage) if isinstance(stage, str) else Stage(stage)
    lo, hi, width, window = protocol.stage_domain(stage)

    def partial(job):
        stream, n = job
        return estimate_density(_draw(stage, protocol, stream, n), lo, hi, width)

    jobs = list(_chunks(protocol, stage))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(partial, jobs))
    else:
        parts = [partial(job) for job in jobs]
    density = parts[0]
    for part in parts[1:]:
        density = density + part
    return density, bias_report(density, window, stage.value)
