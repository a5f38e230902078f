"""
Numeric foundations: search box, agent vectors, elementwise arithmetic and
reproducible uniform random streams.

Agent vectors are plain 1-D ``numpy`` float arrays. Populations are 2-D arrays
of shape ``(N, D)``; the elementwise helpers broadcast over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "EPS_DIV",
    "InvalidRangeError",
    "DimensionMismatchError",
    "DivisionDegenerateError",
    "SearchBox",
    "RandomStream",
    "as_agent",
    "draw_uniform",
    "hadamard_mul",
    "hadamard_div",
]

# Only (sub)normal zeros are rejected; small divisors must survive so their
# heavy tails stay visible in the audited densities.
EPS_DIV = 1e-12

StreamId = Union[int, Sequence[int]]


class InvalidRangeError(ValueError):
    """Raised when an interval has ``lo >= hi``."""


class DimensionMismatchError(ValueError):
    """Raised when elementwise operands disagree in shape."""


class DivisionDegenerateError(ZeroDivisionError):
    """Raised when a divisor coordinate is (numerically) zero.

    Attributes
    ----------
    index : tuple of int
        Position of the first offending divisor coordinate.
    """

    def __init__(self, index):
        self.index = tuple(int(i) for i in index)
        super().__init__(f"divisor magnitude below {EPS_DIV:g} at index {self.index}")


@dataclass(frozen=True, eq=False)
class SearchBox:
    """Axis-aligned box ``[lower, upper]`` in ``D`` dimensions."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise DimensionMismatchError("lower and upper must be 1-D arrays of equal length")
        if lower.size < 1:
            raise ValueError("dimension must be >= 1")
        if not np.all(lower < upper):
            raise InvalidRangeError("lower must be strictly less than upper in every dimension")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def cube(cls, dimension: int, lo: float = -100.0, hi: float = 100.0) -> "SearchBox":
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        return cls(np.full(dimension, float(lo)), np.full(dimension, float(hi)))

    @property
    def dimension(self) -> int:
        return int(self.lower.size)

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "SearchBox":
        return cls(np.asarray(data["lower"], dtype=float), np.asarray(data["upper"], dtype=float))


def as_agent(x, dimension: int | None = None) -> np.ndarray:
    """Validate ``x`` as a finite agent vector, optionally of a given length."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise DimensionMismatchError(f"agent must be 1-D, got shape {x.shape}")
    if dimension is not None and x.size != dimension:
        raise DimensionMismatchError(f"agent has {x.size} coordinates, expected {dimension}")
    if not np.all(np.isfinite(x)):
        raise ValueError("agent coordinates must be finite")
    return x


class RandomStream:
    """
    Seeded uniform random stream addressed by ``(seed, stream_id)``.

    Backed by the counter-based Philox generator keyed through
    :class:`numpy.random.SeedSequence`, so distinct stream ids give
    independent sequences without any coordination, and the same address
    always replays the same draws.

    Parameters
    ----------
    seed : int or None
        Non-negative integer seed. ``None`` draws fresh OS entropy; the
        resolved value is kept in :attr:`seed` so the stream can be replayed.
    stream_id : int or sequence of int, optional
        Substream address. Nested substreams extend the tuple.
    """

    def __init__(self, seed: int | None, stream_id: StreamId = 0):
        if seed is None:
            seed = int(np.random.SeedSequence().entropy)
        seed = int(seed)
        if seed < 0:
            raise ValueError("seed must be non-negative")
        key = (int(stream_id),) if np.isscalar(stream_id) else tuple(int(s) for s in stream_id)
        self.seed = seed
        self.stream_id = key
        sequence = np.random.SeedSequence(seed, spawn_key=key)
        self._gen = np.random.Generator(np.random.Philox(sequence))

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id})"

    def substream(self, index: int) -> "RandomStream":
        """Independent child stream; does not advance this stream."""
        return RandomStream(self.seed, self.stream_id + (int(index),))

    def random(self, size=None):
        """Uniform draws on ``[0, 1)``."""
        return self._gen.random(size)

    def uniform(self, lo: float = 0.0, hi: float = 1.0, size=None):
        """Uniform draws on the half-open interval ``[lo, hi)``."""
        if not lo < hi:
            raise InvalidRangeError(f"need lo < hi, got lo={lo}, hi={hi}")
        out = lo + (hi - lo) * self._gen.random(size)
        # lo + (hi - lo) * u can round up to hi
        return np.minimum(out, np.nextafter(hi, lo))

    def integers(self, lo: int, hi: int, size=None):
        """Uniform integers on ``[lo, hi)``."""
        return self._gen.integers(lo, hi, size=size)


def draw_uniform(stream: RandomStream, dimension: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Draw one agent vector with i.i.d. coordinates uniform on ``[lo, hi)``."""
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    return stream.uniform(lo, hi, dimension)


def _check_shapes(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


def hadamard_mul(a, b) -> np.ndarray:
    """Elementwise product of two equally shaped vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_shapes(a, b)
    return a * b


def hadamard_div(a, b) -> np.ndarray:
    """
    Elementwise quotient ``a / b``.

    Raises
    ------
    DivisionDegenerateError
        If any ``|b|`` is below :data:`EPS_DIV`; carries the first offending
        index.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_shapes(a, b)
    bad = np.abs(b) < EPS_DIV
    if np.any(bad):
        raise DivisionDegenerateError(np.argwhere(bad)[0])
    return a / b
