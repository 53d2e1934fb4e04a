"""
Unimodal density fitters for a single modal interval.

Two fitters share one entry point, `fit_unimodal`:

* ``grenander_mle``: the maximum likelihood unimodal density. For a fixed
  mode it is Grenander's estimator on each side of the mode; the mode is
  searched over a finite candidate set that avoids the data, so the
  likelihood stays finite.
* ``histogram_unimodal``: an equal-width histogram projected onto the
  closest unimodal height sequence. It does not spike at the mode.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from sklearn.isotonic import isotonic_regression

from src.density import Interval, MonotoneFit, UnimodalPiece
from src.errors import DegenerateSample, LengthMismatch, NoInteriorPoints

FITTER_KINDS = ('grenander_mle', 'histogram_unimodal')
DIRECTIONS = ('non_decreasing', 'non_increasing')

logger = logging.getLogger('ModalFit')


@dataclass(frozen=True)
class FitterSpec:
    """Which unimodal fitter to use and how it is tuned."""

    kind: str = 'histogram_unimodal'
    histogram_bins: Optional[int] = None  # None: ceil(sqrt(points in the interval))
    mode_candidates_per_interval: int = 32
    min_points: int = 2

    def __post_init__(self):
        if self.kind not in FITTER_KINDS:
            raise ValueError(f"unknown fitter '{self.kind}', expected one of {FITTER_KINDS}")
        if self.histogram_bins is not None and self.histogram_bins < 2:
            raise ValueError("histogram_bins must be at least 2")
        if self.mode_candidates_per_interval < 1:
            raise ValueError("mode_candidates_per_interval must be positive")
        if self.min_points < 1:
            raise ValueError("min_points must be positive")

    @classmethod
    def from_config(cls, config=None, **overrides) -> 'FitterSpec':
        if config is None:
            from config.settings import Config
            config = Config()
        settings = {**config.fitter_defaults, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**settings)


def pava(values, weights=None, direction: str = 'non_decreasing') -> np.ndarray:
    """Weighted least-squares projection of `values` onto monotone sequences."""
    values = np.asarray(values, dtype=float)
    weights = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float)
    if values.shape != weights.shape:
        raise LengthMismatch(f"{values.size} values but {weights.size} weights")
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction '{direction}'")
    if np.any(weights <= 0):
        raise ValueError("weights must be positive")
    if values.size == 0:
        return values.copy()
    return isotonic_regression(values, sample_weight=weights, increasing=(direction == 'non_decreasing'))


def unimodal_regression(values, weights=None) -> Tuple[np.ndarray, int]:
    """
    Closest unimodal sequence in weighted least squares.

    Each position is tried as the last element of the rising part: an
    isotonic fit up to it and an antitonic fit after it. Returns the best
    fit and the index of its first maximum.
    """
    values = np.asarray(values, dtype=float)
    weights = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float)

    best_error, best_fit = np.inf, values
    for t in range(values.size):
        rising = pava(values[:t + 1], weights[:t + 1], 'non_decreasing')
        falling = pava(values[t + 1:], weights[t + 1:], 'non_increasing')
        fitted = np.concatenate([rising, falling])
        error = float(np.sum(weights * (values - fitted) ** 2))
        if error < best_error:
            best_error, best_fit = error, fitted
    return best_fit, int(np.argmax(best_fit))


def grenander_monotone(points, direction: str, support: Interval) -> MonotoneFit:
    """
    Grenander maximum likelihood monotone density on a finite support [a, b].

    For a non-increasing density the heights are the left derivatives of
    the least concave majorant of the empirical CDF started at (a, 0),
    followed by a zero cell from the last observation to b. The
    non-decreasing case is the mirror image, with a leading zero cell.
    Tied observations form one jump of several units of mass.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction '{direction}'")
    a, b = support.lo, support.hi
    if not support.is_finite:
        raise ValueError("the Grenander estimator needs a finite support")

    points = np.asarray(points, dtype=float)
    if points.size == 0:
        raise NoInteriorPoints(f"no observations inside [{a}, {b}]")
    if np.any(points <= a) or np.any(points >= b):
        raise ValueError(f"observations must lie strictly inside [{a}, {b}]")

    unique, counts = np.unique(points, return_counts=True)
    n = counts.sum()

    if direction == 'non_increasing':
        widths = np.diff(np.concatenate([[a], unique]))
        slopes = isotonic_regression(counts / (n * widths), sample_weight=widths, increasing=False)
        change = np.flatnonzero(slopes[1:] != slopes[:-1])
        breakpoints = np.concatenate([[a], unique[change], unique[-1:], [b]])
        heights = np.concatenate([slopes[change], slopes[-1:], [0.0]])
    else:
        widths = np.diff(np.concatenate([unique, [b]]))
        slopes = isotonic_regression(counts / (n * widths), sample_weight=widths, increasing=True)
        change = np.flatnonzero(slopes[1:] != slopes[:-1])
        breakpoints = np.concatenate([[a], unique[:1], unique[change + 1], [b]])
        heights = np.concatenate([[0.0], slopes[:1], slopes[change + 1]])

    return MonotoneFit(breakpoints=breakpoints, heights=heights, direction=direction)


def _require_finite(interval: Interval):
    if not interval.is_finite:
        raise ValueError(f"expected a finite interval, got [{interval.lo}, {interval.hi}]")


def fit_unimodal_known_mode(points, interval: Interval, mu: float) -> UnimodalPiece:
    """
    Maximum likelihood unimodal density with mode `mu` on a finite interval.

    Each side of the mode gets its Grenander fit scaled by the fraction of
    observations on that side. `mu` may sit on an endpoint, which gives a
    purely monotone fit.
    """
    _require_finite(interval)
    lo, hi = interval.lo, interval.hi
    if not lo <= mu <= hi:
        raise ValueError(f"mode {mu} lies outside [{lo}, {hi}]")

    points = np.asarray(points, dtype=float)
    if points.size == 0:
        raise NoInteriorPoints(f"no observations inside [{lo}, {hi}]")
    if np.any(points == mu):
        raise ValueError("the mode must avoid the observations")

    n = points.size
    left, right = points[points < mu], points[points > mu]
    breakpoints, heights = [np.array([lo])], []

    if mu > lo:
        if left.size:
            fit = grenander_monotone(left, 'non_decreasing', Interval(lo, mu))
            breakpoints.append(fit.breakpoints[1:])
            heights.append(fit.heights * (left.size / n))
        else:
            breakpoints.append(np.array([mu]))
            heights.append(np.zeros(1))

    if mu < hi:
        if right.size:
            fit = grenander_monotone(right, 'non_increasing', Interval(mu, hi))
            breakpoints.append(fit.breakpoints[1:])
            heights.append(fit.heights * (right.size / n))
        else:
            breakpoints.append(np.array([hi]))
            heights.append(np.zeros(1))

    piece = UnimodalPiece(
        breakpoints=np.concatenate(breakpoints),
        heights=np.concatenate(heights),
        mode=float(mu),
    )
    return dataclasses.replace(piece, loglik=piece.log_likelihood(points))


def clamp_interval(points, interval: Interval) -> Interval:
    """
    Replace infinite ends by the extreme observation padded by the mean
    spacing of the observations in the interval.
    """
    if interval.is_finite:
        return interval

    points = np.sort(np.asarray(points, dtype=float))
    if points.size == 0:
        raise NoInteriorPoints("cannot clamp an interval without observations")

    spread = points[-1] - points[0]
    pad = spread / (points.size - 1) if spread > 0 else 0.0
    if pad == 0.0:
        finite_ends = [end for end in (interval.lo, interval.hi) if np.isfinite(end)]
        if not finite_ends:
            raise DegenerateSample("all observations are equal")
        pad = min(abs(end - points[0]) for end in finite_ends)

    lo = interval.lo if np.isfinite(interval.lo) else points[0] - pad
    hi = interval.hi if np.isfinite(interval.hi) else points[-1] + pad
    return Interval(float(lo), float(hi), rightmost=interval.rightmost)


def mode_candidates(points, interval: Interval, spec: FitterSpec) -> np.ndarray:
    """
    Candidate modes for the maximum likelihood fitter: midpoints between
    consecutive distinct observations, the finite interval ends (purely
    monotone fits), and the midpoint of the clamped interval when fewer
    than two distinct observations are present. Interior midpoints are
    evenly thinned to the configured cap.

    A clamped end is never a candidate: a monotone fit anchored there
    would depend on the padding rather than on the data.
    """
    support = clamp_interval(points, interval)
    unique = np.unique(np.asarray(points, dtype=float))
    midpoints = 0.5 * (unique[:-1] + unique[1:])

    if unique.size < 2:
        middle = support.midpoint
        if unique.size and middle == unique[0]:
            middle = 0.5 * (support.lo + unique[0])
        midpoints = np.append(midpoints, middle)

    cap = spec.mode_candidates_per_interval
    if midpoints.size > cap:
        keep = np.unique(np.round(np.linspace(0, midpoints.size - 1, cap)).astype(int))
        midpoints = midpoints[keep]

    ends = [end for end in (interval.lo, interval.hi) if np.isfinite(end)]
    return np.unique(np.concatenate([ends, midpoints]))


def _fit_histogram_unimodal(points: np.ndarray, interval: Interval, spec: FitterSpec) -> UnimodalPiece:
    bins = spec.histogram_bins or max(2, math.ceil(math.sqrt(points.size)))
    edges = np.linspace(interval.lo, interval.hi, bins + 1)
    counts, _ = np.histogram(points, bins=edges)
    widths = np.diff(edges)

    fitted, peak = unimodal_regression(counts / (points.size * widths), widths)
    heights = fitted / np.sum(fitted * widths)

    piece = UnimodalPiece(breakpoints=edges, heights=heights, mode=float(edges[peak]))
    return dataclasses.replace(piece, loglik=piece.log_likelihood(points))


def fit_unimodal(points, interval: Interval, spec: FitterSpec) -> UnimodalPiece:
    """Fit a unimodal step density to the observations of one modal interval."""
    points = np.sort(np.asarray(points, dtype=float))
    if points.size == 0:
        raise NoInteriorPoints(f"no observations inside [{interval.lo}, {interval.hi})")
    support = clamp_interval(points, interval)

    if spec.kind == 'histogram_unimodal':
        return _fit_histogram_unimodal(points, support, spec)

    best = None
    for mu in mode_candidates(points, interval, spec):
        piece = fit_unimodal_known_mode(points, support, mu)
        if best is None or piece.loglik > best.loglik:
            best = piece

    logger.debug(f"Unimodal fit on [{support.lo:.4g}, {support.hi:.4g}]: "
                 f"{points.size} points, mode {best.mode:.4g}, loglik {best.loglik:.4f}")
    return best
