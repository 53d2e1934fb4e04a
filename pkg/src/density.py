"""
Sample ingestion and the piecewise-constant K-modal density model.

Every density in the package is a step function: a KModalDensity is a
weighted concatenation of UnimodalPiece step densities, one per modal
interval. Partitions are half-open [lo, hi) with the rightmost interval
closed, so interval counts always add up to n.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import EmptyInput, NonFiniteValue

ArrayLike = Union[float, Sequence[float], np.ndarray]

logger = logging.getLogger('ModalFit')


def _frozen_array(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


def _scalar_or_array(x, values: np.ndarray):
    return float(values) if np.ndim(x) == 0 else values


@dataclass(frozen=True, eq=False)
class Sample:
    """Sorted finite observations with their tie structure."""

    values: np.ndarray
    unique_values: np.ndarray = field(init=False)
    tie_counts: np.ndarray = field(init=False)

    def __post_init__(self):
        values = _frozen_array(np.sort(np.asarray(self.values, dtype=float)))
        unique_values, tie_counts = np.unique(values, return_counts=True)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'unique_values', _frozen_array(unique_values))
        object.__setattr__(self, 'tie_counts', _frozen_array(tie_counts, dtype=int))

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def has_ties(self) -> bool:
        return self.unique_values.size < self.values.size

    @property
    def span(self) -> float:
        return float(self.values[-1] - self.values[0])

    def __len__(self) -> int:
        return self.n

    def select(self, interval: 'Interval') -> np.ndarray:
        """Observations falling in the interval, honouring its closure."""
        lo = np.searchsorted(self.values, interval.lo, side='left')
        hi = np.searchsorted(self.values, interval.hi, side='right' if interval.rightmost else 'left')
        return self.values[lo:hi]

    def count(self, interval: 'Interval') -> int:
        return int(self.select(interval).size)


def load_sample(raw: ArrayLike) -> Sample:
    """Validate raw observations and return them as a sorted Sample."""
    values = np.atleast_1d(np.asarray(raw, dtype=float)).ravel()
    if values.size == 0:
        raise EmptyInput("the sample is empty")

    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NonFiniteValue(int(bad[0]))

    sample = Sample(values)
    if sample.has_ties:
        logger.debug(f"Sample of {sample.n} points has {sample.n - sample.unique_values.size} tied observations")
    return sample


@dataclass(frozen=True)
class Interval:
    """[lo, hi), or [lo, hi] when it is the rightmost interval of a partition."""

    lo: float
    hi: float
    rightmost: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def is_finite(self) -> bool:
        return bool(np.isfinite(self.lo) and np.isfinite(self.hi))

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: ArrayLike):
        x = np.asarray(x, dtype=float)
        upper = x <= self.hi if self.rightmost else x < self.hi
        inside = (x >= self.lo) & upper
        return bool(inside) if np.ndim(x) == 0 else inside


@dataclass(frozen=True, eq=False)
class StepDensity:
    """
    Piecewise-constant density on [breakpoints[0], breakpoints[-1]].

    At an interior breakpoint the density takes the larger of its two
    neighbouring heights. For a unimodal step function this is the
    upper-semicontinuous version, the one on which the Grenander estimator
    attains its likelihood on both sides of the mode.
    """

    breakpoints: np.ndarray
    heights: np.ndarray

    def __post_init__(self):
        breakpoints = _frozen_array(self.breakpoints)
        heights = _frozen_array(self.heights)
        if breakpoints.size != heights.size + 1 or heights.size == 0:
            raise ValueError("a step density needs one more breakpoint than heights")
        if np.any(np.diff(breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(heights < 0) or not np.all(np.isfinite(heights)):
            raise ValueError("heights must be finite and non-negative")
        object.__setattr__(self, 'breakpoints', breakpoints)
        object.__setattr__(self, 'heights', heights)

    @property
    def support(self) -> Interval:
        return Interval(float(self.breakpoints[0]), float(self.breakpoints[-1]))

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def cell_masses(self) -> np.ndarray:
        return self.heights * self.widths

    @property
    def total_mass(self) -> float:
        return float(self.cell_masses.sum())

    def pdf(self, x: ArrayLike):
        x = np.asarray(x, dtype=float)
        b, h = self.breakpoints, self.heights
        last = h.size - 1
        right_cell = np.clip(np.searchsorted(b, x, side='right') - 1, 0, last)
        left_cell = np.clip(np.searchsorted(b, x, side='left') - 1, 0, last)
        values = np.maximum(h[right_cell], h[left_cell])
        inside = (x >= b[0]) & (x <= b[-1])
        return _scalar_or_array(x, np.where(inside, values, 0.0))

    def cdf(self, x: ArrayLike):
        x = np.asarray(x, dtype=float)
        cumulative = np.concatenate([[0.0], np.cumsum(self.cell_masses)])
        values = np.interp(x, self.breakpoints, cumulative, left=0.0, right=cumulative[-1])
        return _scalar_or_array(x, values)

    def log_likelihood(self, points: ArrayLike) -> float:
        with np.errstate(divide='ignore'):
            return float(np.sum(np.log(self.pdf(np.asarray(points, dtype=float)))))


@dataclass(frozen=True, eq=False)
class MonotoneFit(StepDensity):
    direction: str = 'non_increasing'

    def __post_init__(self):
        super().__post_init__()
        if self.direction not in ('non_decreasing', 'non_increasing'):
            raise ValueError(f"unknown direction '{self.direction}'")


@dataclass(frozen=True, eq=False)
class UnimodalPiece(StepDensity):
    """Unimodal step density on one modal interval, with its in-sample log-likelihood."""

    mode: float = 0.0
    loglik: float = 0.0

    def is_unimodal(self, rtol: float = 1e-12) -> bool:
        b, h = self.breakpoints, self.heights
        tol = rtol * max(float(h.max()), 1.0)
        rising = h[b[1:] <= self.mode]
        falling = h[b[:-1] >= self.mode]
        straddling = h[(b[:-1] < self.mode) & (b[1:] > self.mode)]
        ok = bool(np.all(np.diff(rising) >= -tol) and np.all(np.diff(falling) <= tol))
        if straddling.size:
            ok = ok and bool(straddling.max() >= h.max() - tol)
        return ok and self.support.lo <= self.mode <= self.support.hi


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Increasing interior knots; the infinite outer ends are implied."""

    interior: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        interior = _frozen_array(np.atleast_1d(np.asarray(self.interior, dtype=float)))
        if np.any(np.diff(interior) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, 'interior', interior)

    @property
    def K(self) -> int:
        return int(self.interior.size) + 1

    @property
    def boundaries(self) -> np.ndarray:
        return np.concatenate([[-np.inf], self.interior, [np.inf]])

    def intervals(self) -> List[Interval]:
        b = self.boundaries
        return [Interval(float(b[k]), float(b[k + 1]), rightmost=(k == self.K - 1)) for k in range(self.K)]

    def avoids(self, sample: Sample) -> bool:
        return not np.any(np.isin(self.interior, sample.unique_values))


@dataclass(frozen=True, eq=False)
class KModalDensity:
    """Weighted concatenation of unimodal step pieces, one per modal interval."""

    knots: KnotVector
    weights: np.ndarray
    pieces: Tuple[UnimodalPiece, ...]

    def __post_init__(self):
        weights = _frozen_array(self.weights)
        pieces = tuple(self.pieces)
        if weights.size != self.knots.K or len(pieces) != self.knots.K:
            raise ValueError("need one weight and one piece per modal interval")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        for k, (piece, interval) in enumerate(zip(pieces, self.knots.intervals())):
            lo, hi = piece.support.lo, piece.support.hi
            if lo < interval.lo or hi > interval.hi:
                raise ValueError(f"piece {k} support [{lo}, {hi}] leaves its modal interval")
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'pieces', pieces)

    @property
    def K(self) -> int:
        return self.knots.K

    def _membership(self, x: np.ndarray, k: int) -> np.ndarray:
        support = self.pieces[k].support
        upper = x <= support.hi if k == self.K - 1 else x < support.hi
        return (x >= support.lo) & upper

    def pdf(self, x: ArrayLike):
        x = np.asarray(x, dtype=float)
        values = np.zeros(x.shape)
        for k, piece in enumerate(self.pieces):
            member = self._membership(x, k)
            values = np.where(member, self.weights[k] * piece.pdf(x), values)
        return _scalar_or_array(x, values)

    def cdf(self, x: ArrayLike):
        x = np.asarray(x, dtype=float)
        values = np.zeros(x.shape)
        for weight, piece in zip(self.weights, self.pieces):
            values = values + weight * piece.cdf(x)
        return _scalar_or_array(x, np.clip(values, 0.0, 1.0))

    def log_likelihood(self, sample: Union[Sample, ArrayLike]) -> float:
        points = sample.values if isinstance(sample, Sample) else np.asarray(sample, dtype=float)
        with np.errstate(divide='ignore'):
            return float(np.sum(np.log(self.pdf(points))))

    def support_range(self) -> Tuple[float, float]:
        return float(self.pieces[0].support.lo), float(self.pieces[-1].support.hi)

    def step_function(self) -> Tuple[np.ndarray, np.ndarray]:
        """Edges and heights of the weighted density as one step function."""
        edges = [self.pieces[0].breakpoints[:1]]
        heights = []
        for weight, piece in zip(self.weights, self.pieces):
            if piece.breakpoints[0] > edges[-1][-1]:
                edges.append(piece.breakpoints[:1])
                heights.append(np.zeros(1))
            edges.append(piece.breakpoints[1:])
            heights.append(weight * piece.heights)
        return np.concatenate(edges), np.concatenate(heights)


def pdf_eval(f: KModalDensity, x: ArrayLike):
    return f.pdf(x)


def cdf_eval(f: KModalDensity, x: ArrayLike):
    return f.cdf(x)


def log_likelihood(f: KModalDensity, s: Union[Sample, ArrayLike]) -> float:
    """Sum of log densities; -inf when some observation has zero density."""
    return f.log_likelihood(s)


def check_density(f: KModalDensity, probe_points: int = 4001) -> List[str]:
    """Return the list of violated density invariants (empty when valid)."""
    problems = []
    if abs(float(f.weights.sum()) - 1.0) > 1e-12:
        problems.append('weights do not sum to 1')

    for k, piece in enumerate(f.pieces):
        if abs(piece.total_mass - 1.0) > 1e-9:
            problems.append(f'piece {k} integrates to {piece.total_mass!r}')
        if not piece.is_unimodal():
            problems.append(f'piece {k} is not unimodal around {piece.mode}')

    edges, heights = f.step_function()
    if abs(float(np.sum(heights * np.diff(edges))) - 1.0) > 1e-6:
        problems.append('density does not integrate to 1')

    lo, hi = f.support_range()
    pad = 0.05 * (hi - lo)
    probes = np.union1d(np.linspace(lo - pad, hi + pad, probe_points), edges)
    cdf = f.cdf(probes)
    if np.any(np.diff(cdf) < -1e-12):
        problems.append('cdf decreases')
    if abs(float(cdf[-1]) - 1.0) > 1e-6:
        problems.append('cdf does not reach 1')
    return problems
