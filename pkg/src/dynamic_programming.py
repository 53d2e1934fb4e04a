"""
Knot search for K-modal densities.

Knots are picked among grid points g_2 < ... < g_M placed between order
statistics, so they never coincide with an observation. S[i, j] scores the
modal interval [g_i, g_{j+1}) with g_1 = -inf and g_{M+1} = +inf; the
recursion over D[m, k] finds the best split of the first m cells into k
modal intervals, and I[m, k] remembers where the k-th interval starts.
All tables use 1-based indices with an unused row and column 0.
"""

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from src.density import Interval, KModalDensity, KnotVector, Sample, UnimodalPiece
from src.errors import (
    DegenerateSample,
    EmptyModalInterval,
    InfeasibleK,
    OverlapViolation,
    TooFewPoints,
)
from src.unimodal import FitterSpec, fit_unimodal

DEFAULT_GRID_FACTOR = 5

logger = logging.getLogger('ModalFit')


@dataclass(frozen=True, eq=False)
class Grid:
    """Candidate knot locations g_2..g_M; g_1 = -inf and g_{M+1} = +inf are implied."""

    points: np.ndarray

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if np.any(np.diff(points) <= 0):
            raise ValueError("grid points must be strictly increasing")
        points.setflags(write=False)
        object.__setattr__(self, 'points', points)

    @property
    def M(self) -> int:
        return int(self.points.size) + 1

    def value(self, index: int) -> float:
        if index == 1:
            return -np.inf
        if index == self.M + 1:
            return np.inf
        if not 2 <= index <= self.M:
            raise IndexError(f"grid index {index} outside 1..{self.M + 1}")
        return float(self.points[index - 2])

    def interval(self, i: int, j: int) -> Interval:
        """Cells i..j, that is [g_i, g_{j+1})."""
        return Interval(self.value(i), self.value(j + 1), rightmost=(j == self.M))


@dataclass(eq=False)
class ScoreTables:
    S: np.ndarray
    D: Optional[np.ndarray] = None
    I: Optional[np.ndarray] = None

    @property
    def M(self) -> int:
        return self.S.shape[0] - 1


@dataclass(frozen=True)
class MultiGridConfig:
    """Local knot refinement: L subgrid points within radius r of each knot."""

    L: int = 5
    r: Optional[float] = None  # None: delta* (1/2 - 1/(2L))

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be at least 1")
        if self.r is not None and self.r <= 0:
            raise ValueError("r must be positive")

    def radius(self, delta_star: float) -> float:
        if self.r is not None:
            return self.r
        return delta_star * (0.5 - 0.5 / self.L)

    @classmethod
    def from_config(cls, config=None, **overrides) -> 'MultiGridConfig':
        if config is None:
            from config.settings import Config
            config = Config()
        settings = {**config.multigrid_defaults, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**settings)


@dataclass(frozen=True, eq=False)
class FitResult:
    density: KModalDensity
    knots: KnotVector
    loglik: float
    grid: Optional[Grid] = None
    refined: bool = False
    M: Optional[int] = None
    fitter: str = 'histogram_unimodal'
    coarse_loglik: Optional[float] = None
    snapped: bool = False
    tables: Optional[ScoreTables] = field(default=None, repr=False)

    @property
    def K(self) -> int:
        return self.knots.K

    @property
    def negative_loglik(self) -> float:
        return -self.loglik


def build_grid(sample: Sample, M: int) -> Grid:
    """
    Place M-1 grid points at midpoints of the gaps between consecutive
    order statistics nearest the j/M quantiles. Gaps inside blocks of ties
    are never used: each grid point takes the nearest distinct gap not yet
    taken, looking both ways, while leaving enough distinct gaps for the
    points still to come. Equal distances go to the later gap.
    """
    if M < 2:
        raise ValueError(f"grid size M must be at least 2, got {M}")
    n = sample.n
    if n < M:
        raise TooFewPoints(f"{n} observations cannot support a grid of size {M}")
    if sample.span == 0:
        raise DegenerateSample("all observations are equal")

    values = sample.values
    # gap g lies between order statistics g and g + 1 (1-based)
    gaps = np.flatnonzero(values[1:] != values[:-1]) + 1
    if gaps.size < M - 1:
        raise TooFewPoints(f"only {gaps.size} distinct gaps available for a grid of size {M}")

    points = []
    first = 0
    for j in range(1, M):
        target = np.floor(j * n / M + 0.5)
        last = gaps.size - (M - j)
        distance = np.abs(gaps[first:last + 1] - target)
        pos = first + int(np.flatnonzero(distance == distance.min())[-1])
        idx = gaps[pos]
        points.append(0.5 * (values[idx - 1] + values[idx]))
        first = pos + 1

    grid = Grid(np.array(points))
    logger.debug(f"Grid of size {M} spans [{grid.points[0]:.4g}, {grid.points[-1]:.4g}]")
    return grid


def score_interval(sample: Sample, interval: Interval, spec: FitterSpec) -> Tuple[float, Optional[UnimodalPiece]]:
    """Rescaled log-likelihood of the unimodal fit on one interval, -inf below min_points."""
    points = sample.select(interval)
    if points.size < spec.min_points:
        return -np.inf, None
    piece = fit_unimodal(points, interval, spec)
    return piece.loglik + points.size * np.log(points.size / sample.n), piece


def _score_cells(sample: Sample, grid: Grid, i: int, j: int, spec: FitterSpec) -> float:
    score, _ = score_interval(sample, grid.interval(i, j), spec)
    return score


def build_score_matrix(sample: Sample, grid: Grid, spec: FitterSpec, n_jobs: int = 1) -> np.ndarray:
    """S[i, j] for 1 <= i <= j <= M; every other entry is -inf."""
    M = grid.M
    pairs = [(i, j) for i in range(1, M + 1) for j in range(i, M + 1)]
    scores = Parallel(n_jobs=n_jobs)(delayed(_score_cells)(sample, grid, i, j, spec) for i, j in pairs)

    S = np.full((M + 1, M + 1), -np.inf)
    for (i, j), score in zip(pairs, scores):
        S[i, j] = score

    feasible = int(np.isfinite(S).sum())
    logger.info(f"📐 Score matrix built: {len(pairs)} intervals, {feasible} feasible")
    return S


def dp_tables(S: np.ndarray, K: int, require_feasible: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """
    D[m, 1] = S[1, m] and D[m, k] = max over i in [k-1, m-1] of
    D[i, k-1] + S[i+1, m]. I[m, k] is the maximising i plus one; ties go to
    the smallest i.
    """
    M = S.shape[0] - 1
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    if K > M:
        raise InfeasibleK(f"K = {K} modal intervals need at least {K} grid cells, got {M}")

    D = np.full((M + 1, K + 1), -np.inf)
    I = np.zeros((M + 1, K + 1), dtype=int)
    D[1:, 1] = S[1, 1:]
    I[1:, 1] = 1

    for k in range(2, K + 1):
        for m in range(k, M + 1):
            splits = np.arange(k - 1, m)
            candidates = D[splits, k - 1] + S[splits + 1, m]
            best = int(np.argmax(candidates))
            D[m, k] = candidates[best]
            I[m, k] = splits[best] + 1

    if require_feasible and D[M, K] == -np.inf:
        raise InfeasibleK(f"no feasible placement of {K} modal intervals on {M} grid cells")
    return D, I


def backtrack_starts(I: np.ndarray, M: int, K: int) -> List[int]:
    """Start cells b_1..b_K of the modal intervals, b_1 = 1."""
    starts = [0] * (K + 2)
    starts[K + 1] = M + 1
    last = M
    for k in range(K, 0, -1):
        starts[k] = int(I[last, k])
        last = starts[k] - 1
    return starts[1:K + 1]


def backtrack(D: np.ndarray, I: np.ndarray, grid: Grid, K: int) -> Tuple[KnotVector, float]:
    M = grid.M
    if D[M, K] == -np.inf:
        raise InfeasibleK(f"no feasible placement of {K} modal intervals")
    starts = backtrack_starts(I, M, K)
    knots = KnotVector(np.array([grid.value(b) for b in starts[1:]]))
    return knots, float(D[M, K])


def enumerate_knots(S: np.ndarray, K: int) -> Tuple[Tuple[int, ...], float]:
    """
    Brute-force optimum over every choice of K-1 interior start cells.
    Returns the start cells b_2..b_K and the total score.
    """
    M = S.shape[0] - 1
    best_starts, best_score = None, -np.inf
    for interior in itertools.combinations(range(2, M + 1), K - 1):
        bounds = (1, *interior, M + 1)
        score = sum(S[bounds[k], bounds[k + 1] - 1] for k in range(K))
        if best_starts is None or score > best_score:
            best_starts, best_score = interior, float(score)
    return best_starts, best_score


def assemble_density(sample: Sample, knots: KnotVector, spec: FitterSpec) -> KModalDensity:
    """Fit every modal interval and weight it by its share of the sample."""
    pieces, counts = [], []
    for k, interval in enumerate(knots.intervals()):
        points = sample.select(interval)
        if points.size < spec.min_points:
            raise EmptyModalInterval(
                f"modal interval {k + 1} [{interval.lo}, {interval.hi}) holds {points.size} "
                f"observations, need {spec.min_points}"
            )
        pieces.append(fit_unimodal(points, interval, spec))
        counts.append(points.size)
    return KModalDensity(knots=knots, weights=np.array(counts) / sample.n, pieces=tuple(pieces))


def _delta_star(sample: Sample, interior: np.ndarray) -> float:
    """Smallest spacing of the coarse knots with the sample minimum and maximum as outer anchors."""
    anchors = np.concatenate([[sample.values[0]], interior, [sample.values[-1]]])
    return float(np.min(np.diff(anchors)))


def _avoid_data(sample: Sample, point: float) -> float:
    """Shift a point that hits an observation halfway to the next distinct one."""
    unique = sample.unique_values
    pos = int(np.searchsorted(unique, point))
    if pos == unique.size or unique[pos] != point:
        return point
    if pos + 1 < unique.size:
        return point + 0.5 * (unique[pos + 1] - point)
    return point - 0.5 * (point - unique[pos - 1])


def _subgrid(sample: Sample, knot: float, radius: float, L: int) -> np.ndarray:
    if L == 1 or radius == 0:
        return np.array([knot])
    points = np.linspace(knot - radius, knot + radius, L)
    points[np.argmin(np.abs(points - knot))] = knot
    return np.unique([_avoid_data(sample, p) if p != knot else p for p in points])


def multigrid_refine(sample: Sample, coarse: FitResult, cfg: MultiGridConfig, spec: FitterSpec) -> FitResult:
    """
    Search L points around each coarse knot, every combination of them,
    and keep the best. Each coarse knot belongs to its own subgrid, so the
    result is never worse than the coarse fit.
    """
    if coarse.K == 1:
        return coarse

    interior = coarse.knots.interior
    delta_star = _delta_star(sample, interior)
    radius = cfg.radius(delta_star)
    if 2 * radius >= delta_star:
        raise OverlapViolation(f"search radius {radius:.4g} overlaps knots spaced {delta_star:.4g} apart")

    subgrids = [_subgrid(sample, knot, radius, cfg.L) for knot in interior]
    cache: Dict[Tuple[float, float], Tuple[float, Optional[UnimodalPiece], int]] = {}

    def fitted(lo: float, hi: float, rightmost: bool):
        if (lo, hi) not in cache:
            interval = Interval(lo, hi, rightmost=rightmost)
            score, piece = score_interval(sample, interval, spec)
            cache[(lo, hi)] = (score, piece, sample.count(interval))
        return cache[(lo, hi)]

    K = coarse.K
    best_score, best_bounds = -np.inf, None
    combinations = 0
    for combo in itertools.product(*subgrids):
        if np.any(np.diff(combo) <= 0):
            continue
        combinations += 1
        bounds = (-np.inf, *combo, np.inf)
        score = 0.0
        for k in range(K):
            score += fitted(bounds[k], bounds[k + 1], k == K - 1)[0]
            if score == -np.inf:
                break
        if score > best_score:
            best_score, best_bounds = score, bounds

    logger.info(f"🔎 Multigrid refinement: {combinations} knot combinations, {len(cache)} interval fits")

    if best_bounds is None or best_score <= coarse.loglik:
        return replace(coarse, refined=True, coarse_loglik=coarse.loglik)

    fits = [fitted(best_bounds[k], best_bounds[k + 1], k == K - 1) for k in range(K)]
    knots = KnotVector(np.array(best_bounds[1:-1]))
    density = KModalDensity(
        knots=knots,
        weights=np.array([count for _, _, count in fits]) / sample.n,
        pieces=tuple(piece for _, piece, _ in fits),
    )
    return replace(
        coarse,
        density=density,
        knots=knots,
        loglik=density.log_likelihood(sample),
        refined=True,
        coarse_loglik=coarse.loglik,
    )


def _flat_stretch(edges: np.ndarray, heights: np.ndarray, knot: float) -> Tuple[float, float]:
    """The run of equal-height cells on the lower side of a knot."""
    boundary = int(np.searchsorted(edges, knot))
    left, right = max(boundary - 1, 0), min(boundary, heights.size - 1)
    cell = left if heights[left] <= heights[right] else right
    first, last = cell, cell
    while first > 0 and heights[first - 1] == heights[cell]:
        first -= 1
    while last < heights.size - 1 and heights[last + 1] == heights[cell]:
        last += 1
    return float(edges[first]), float(edges[last + 1])


def snap_knots_to_valley(sample: Sample, result: FitResult, spec: FitterSpec) -> FitResult:
    """
    Move each knot to the middle of the flat valley of the fitted density
    it sits in, provided the new location avoids the data and keeps the
    knots ordered. The density is refitted on the moved knots.
    """
    if result.K == 1:
        return result

    edges, heights = result.density.step_function()
    lo, hi = result.density.support_range()
    moved = list(result.knots.interior)
    for k, knot in enumerate(result.knots.interior):
        start, end = _flat_stretch(edges, heights, knot)
        middle = 0.5 * (start + end)
        lower = moved[k - 1] if k > 0 else lo
        upper = result.knots.interior[k + 1] if k + 1 < len(moved) else hi
        if lower < middle < upper and not np.isin(middle, sample.unique_values):
            moved[k] = middle

    knots = KnotVector(np.array(moved))
    if np.array_equal(knots.interior, result.knots.interior):
        return replace(result, snapped=True)

    try:
        density = assemble_density(sample, knots, spec)
    except EmptyModalInterval as e:
        logger.warning(f"Keeping unsnapped knots: {e}")
        return result

    logger.info(f"🧲 Knots snapped to valleys: {np.round(knots.interior, 4).tolist()}")
    return replace(result, density=density, knots=knots, loglik=density.log_likelihood(sample), snapped=True)


def fit_kmodal(
    sample: Sample,
    K: int,
    M: Optional[int] = None,
    cfg: Optional[MultiGridConfig] = None,
    spec: Optional[FitterSpec] = None,
    n_jobs: int = 1,
    snap_knots: bool = False,
) -> FitResult:
    """Fit a density with K modal intervals: grid, scores, recursion, assembly, refinement."""
    spec = spec or FitterSpec()
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    if sample.n < K * spec.min_points:
        raise TooFewPoints(f"{sample.n} observations cannot fill {K} modal intervals of {spec.min_points}")

    if K == 1:
        knots = KnotVector()
        density = assemble_density(sample, knots, spec)
        loglik = density.log_likelihood(sample)
        logger.info(f"✅ Unimodal fit ({spec.kind}): loglik {loglik:.4f}")
        return FitResult(density=density, knots=knots, loglik=loglik, M=1, fitter=spec.kind)

    M = M or DEFAULT_GRID_FACTOR * K
    grid = build_grid(sample, M)
    S = build_score_matrix(sample, grid, spec, n_jobs=n_jobs)
    D, I = dp_tables(S, K)
    knots, loglik = backtrack(D, I, grid, K)
    density = assemble_density(sample, knots, spec)
    logger.info(f"✅ Knots for K={K}, M={M}: {np.round(knots.interior, 4).tolist()} (loglik {loglik:.4f})")

    result = FitResult(
        density=density,
        knots=knots,
        loglik=loglik,
        grid=grid,
        M=M,
        fitter=spec.kind,
        tables=ScoreTables(S=S, D=D, I=I),
    )
    if cfg is not None and cfg.L > 1:
        result = multigrid_refine(sample, result, cfg, spec)
    if snap_knots:
        result = snap_knots_to_valley(sample, result, spec)
    return result
