"""
Random Gaussian and Laplace mixtures for benchmarking the K selection rules.

Each replicate draws a mixture with 1 to 5 equally weighted components,
centers uniform on [0, 10] and standard deviations from Exp(1), counts its
true modes on a fine grid, samples from it and runs the configured
selection rule.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np
import scipy.stats
from joblib import Parallel, delayed

from src.density import Sample, load_sample
from src.errors import ModalFitError
from src.model_selection import SelectionConfig, select_k
from src.unimodal import FitterSpec

MIXTURE_KINDS = ('gaussian', 'laplace')
MAX_COMPONENTS = 5

SeedLike = Union[int, np.random.SeedSequence]

logger = logging.getLogger('ModalFit')


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    kind: str
    centers: np.ndarray
    sds: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in MIXTURE_KINDS:
            raise ValueError(f"unknown mixture kind '{self.kind}', expected one of {MIXTURE_KINDS}")
        centers = np.atleast_1d(np.asarray(self.centers, dtype=float))
        sds = np.atleast_1d(np.asarray(self.sds, dtype=float))
        weights = (np.full(centers.size, 1.0 / centers.size) if self.weights is None
                   else np.atleast_1d(np.asarray(self.weights, dtype=float)))

        if not 1 <= centers.size <= MAX_COMPONENTS:
            raise ValueError(f"a mixture has 1 to {MAX_COMPONENTS} components, got {centers.size}")
        if sds.shape != centers.shape or weights.shape != centers.shape:
            raise ValueError("centers, sds and weights must have one entry per component")
        if np.any(sds <= 0):
            raise ValueError("standard deviations must be positive")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")

        object.__setattr__(self, 'centers', centers)
        object.__setattr__(self, 'sds', sds)
        object.__setattr__(self, 'weights', weights)

    @property
    def n_components(self) -> int:
        return int(self.centers.size)

    @property
    def scales(self) -> np.ndarray:
        # Laplace scale b has standard deviation b * sqrt(2)
        return self.sds if self.kind == 'gaussian' else self.sds / np.sqrt(2.0)

    @property
    def family(self):
        return scipy.stats.norm if self.kind == 'gaussian' else scipy.stats.laplace

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return sum(w * self.family.pdf(x, loc=c, scale=s)
                   for w, c, s in zip(self.weights, self.centers, self.scales))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return sum(w * self.family.cdf(x, loc=c, scale=s)
                   for w, c, s in zip(self.weights, self.centers, self.scales))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'centers': self.centers.tolist(),
            'sds': self.sds.tolist(),
            'weights': self.weights.tolist(),
        }


@dataclass
class BenchmarkReport:
    kind: str
    method: str
    threshold: float
    n: int
    seed: int
    rows: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def B(self) -> int:
        return len(self.rows)

    @property
    def accuracy(self) -> int:
        return sum(bool(row['correct']) for row in self.rows)

    @property
    def failures(self) -> int:
        return sum(row['error'] is not None for row in self.rows)


def random_mixture(kind: str, seed: SeedLike) -> MixtureSpec:
    rng = np.random.default_rng(seed)
    count = int(rng.integers(1, MAX_COMPONENTS + 1))
    centers = rng.uniform(0.0, 10.0, size=count)
    sds = rng.exponential(1.0, size=count)
    return MixtureSpec(kind=kind, centers=centers, sds=sds)


def true_mode_count(mixture: MixtureSpec, grid_points: int = 2000) -> int:
    """
    Count the places where the mixture density turns from rising to
    falling, on a uniform grid merged with the component centers. Flat
    stretches are skipped, so a plateau counts once.
    """
    if grid_points < 1000:
        raise ValueError("mode counting needs at least 1000 grid points")
    spread = 5.0 * mixture.sds.max()
    x = np.union1d(
        np.linspace(mixture.centers.min() - spread, mixture.centers.max() + spread, grid_points),
        mixture.centers,
    )
    slopes = np.sign(np.diff(mixture.pdf(x)))
    slopes = slopes[slopes != 0]
    return int(np.sum((slopes[:-1] > 0) & (slopes[1:] < 0)))


def mode_count_is_stable(mixture: MixtureSpec) -> bool:
    return true_mode_count(mixture, 2000) == true_mode_count(mixture, 4000)


def sample_mixture(mixture: MixtureSpec, n: int, seed: SeedLike) -> Sample:
    if n < 1:
        raise ValueError("sample size must be positive")
    rng = np.random.default_rng(seed)
    components = rng.choice(mixture.n_components, size=n, p=mixture.weights)
    values = mixture.family.rvs(
        loc=mixture.centers[components],
        scale=mixture.scales[components],
        random_state=rng,
    )
    return load_sample(values)


def replicate_seed(seed: int, replicate: int) -> int:
    """Independent seed of one replicate, derived from the master seed by counter."""
    return int(np.random.SeedSequence(seed, spawn_key=(replicate,)).generate_state(1)[0])


def run_replicate(kind: str, n: int, sel: SelectionConfig, spec: FitterSpec,
                  seed: int, replicate: int = 0) -> Dict[str, Any]:
    mixture_seed, sample_seed = np.random.SeedSequence(seed).spawn(2)
    mixture = random_mixture(kind, mixture_seed)
    true_modes = true_mode_count(mixture)

    row = {
        'replicate': replicate,
        'seed': seed,
        'n_components': mixture.n_components,
        'true_modes': true_modes,
        'chosen_K': None,
        'correct': False,
        'stopped_reason': None,
        'error': None,
    }
    try:
        sample = sample_mixture(mixture, n, sample_seed)
        report = select_k(sample, sel, spec)
        row['chosen_K'] = report.chosen_K
        row['correct'] = report.chosen_K == true_modes
        row['stopped_reason'] = report.stopped_reason
    except ModalFitError as e:
        logger.error(f"Replicate {replicate} failed: {e}")
        row['error'] = e.code

    logger.info(f"🧪 Replicate {replicate}: {true_modes} true modes, chose K={row['chosen_K']}")
    return row


def run_benchmark(kind: str, B: int, n: int, sel: SelectionConfig, spec: FitterSpec,
                  seed: int, n_jobs: int = 1) -> BenchmarkReport:
    if B < 1:
        raise ValueError("the benchmark needs at least one replicate")
    if kind not in MIXTURE_KINDS:
        raise ValueError(f"unknown mixture kind '{kind}'")

    logger.info(f"🚀 Benchmark: {B} {kind} mixtures, n={n}, method {sel.method}")
    rows = Parallel(n_jobs=n_jobs)(
        delayed(run_replicate)(kind, n, sel, spec, replicate_seed(seed, b), b) for b in range(B)
    )

    threshold = sel.tau if sel.method == 'fit_measure' else sel.improvement
    report = BenchmarkReport(kind=kind, method=sel.method, threshold=threshold, n=n, seed=seed, rows=list(rows))
    logger.info(f"📊 Benchmark done: {report.accuracy}/{report.B} correct, {report.failures} failed")
    return report


def benchmark_summary(report: BenchmarkReport) -> Dict[str, Any]:
    return {
        'mixture': report.kind,
        'method': report.method,
        'threshold': report.threshold,
        'correct': report.accuracy,
        'B': report.B,
        'n': report.n,
        'seed': report.seed,
        'failed': report.failures,
    }
