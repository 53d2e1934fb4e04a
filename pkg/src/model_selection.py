"""
Choosing the number of modal intervals K.

Two rules are offered. The fit-measure rule takes the smallest K whose
fitted CDF is within tau of the empirical CDF in sup-norm. The
cross-validation rule increases K while the held-out log-likelihood keeps
improving by more than a relative threshold. Selection fits run with a
coarse multigrid; the chosen K is refitted at full quality afterwards.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.density import KModalDensity, Sample
from src.dynamic_programming import FitResult, MultiGridConfig, fit_kmodal
from src.errors import DegenerateSample, ModalFitError, TooFewPointsForFolds
from src.unimodal import FitterSpec

SELECTION_METHODS = ('fit_measure', 'cross_validation')
STOP_REASONS = ('threshold_met', 'k_max_reached', 'infeasible')

logger = logging.getLogger('ModalFit')


@dataclass(frozen=True)
class SelectionConfig:
    method: str = 'fit_measure'
    tau: float = 0.01
    folds: int = 5
    improvement: float = 0.01
    k_max: int = 5
    coarse_L: int = 3
    seed: int = 0
    grid_factor: int = 5
    M: Optional[int] = None  # fixed grid size for every K > 1
    n_jobs: int = 1

    def __post_init__(self):
        if self.method not in SELECTION_METHODS:
            raise ValueError(f"unknown selection method '{self.method}', expected one of {SELECTION_METHODS}")
        if not 0 <= self.tau <= 1:
            raise ValueError("tau must lie in [0, 1]")
        if self.folds < 2:
            raise ValueError("at least 2 folds are needed")
        if not 0 < self.improvement < 1:
            raise ValueError("improvement must lie in (0, 1)")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.coarse_L < 1 or self.grid_factor < 1:
            raise ValueError("coarse_L and grid_factor must be positive")
        if self.M is not None and self.M < 2:
            raise ValueError(f"grid size M must be at least 2, got {self.M}")

    @classmethod
    def from_config(cls, config=None, **overrides) -> 'SelectionConfig':
        if config is None:
            from config.settings import Config
            config = Config()
        settings = {**config.selection_defaults, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**settings)

    def grid_size(self, K: int) -> int:
        return self.M or self.grid_factor * K

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SelectionReport:
    chosen_K: int
    per_K: List[Dict[str, Any]]
    stopped_reason: str
    method: str
    config: SelectionConfig = field(default_factory=SelectionConfig)

    def scores(self, key: str) -> List[Optional[float]]:
        return [record.get(key) for record in self.per_K]


def supnorm_fit(f: KModalDensity, sample: Sample) -> float:
    """
    Kolmogorov distance between the fitted CDF and the ECDF. The fitted CDF
    is continuous, so the supremum is reached at an observation, just
    before or just after the ECDF jump there.
    """
    cumulative = np.cumsum(sample.tie_counts)
    upper = cumulative / sample.n
    lower = (cumulative - sample.tie_counts) / sample.n
    fitted = np.asarray(f.cdf(sample.unique_values))
    return float(max(np.max(np.abs(fitted - upper)), np.max(np.abs(fitted - lower))))


def _selection_fit(sample: Sample, K: int, cfg: SelectionConfig, spec: FitterSpec) -> FitResult:
    return fit_kmodal(
        sample,
        K,
        M=cfg.grid_size(K),
        cfg=MultiGridConfig(L=cfg.coarse_L),
        spec=spec,
        n_jobs=cfg.n_jobs,
    )


def _record(K: int, cfg: SelectionConfig) -> Dict[str, Any]:
    return {'K': K, 'M': cfg.grid_size(K) if K > 1 else 1, 'loglik': None,
            'fit_measure': None, 'cv_score': None, 'error': None}


def select_k_fit_measure(sample: Sample, cfg: SelectionConfig, spec: FitterSpec) -> SelectionReport:
    """Smallest K whose fitted CDF lies within tau of the ECDF."""
    per_K, chosen, reason = [], None, 'k_max_reached'

    for K in range(1, cfg.k_max + 1):
        record = _record(K, cfg)
        try:
            fit = _selection_fit(sample, K, cfg, spec)
        except ModalFitError as e:
            if K == 1:
                raise
            logger.warning(f"K={K} could not be fitted: {e}")
            record['error'] = e.code
            per_K.append(record)
            reason = 'infeasible'
            break

        record['loglik'] = fit.loglik
        record['fit_measure'] = supnorm_fit(fit.density, sample)
        per_K.append(record)
        logger.debug(f"K={K}: fit measure {record['fit_measure']:.5f}")

        if record['fit_measure'] <= cfg.tau:
            chosen, reason = K, 'threshold_met'
            break

    if chosen is None:
        chosen = _last_feasible(per_K)
    logger.info(f"🎯 Fit-measure selection chose K={chosen} ({reason})")
    return SelectionReport(chosen_K=chosen, per_K=per_K, stopped_reason=reason, method='fit_measure', config=cfg)


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold label of each sorted observation; depends only on (n, folds, seed)."""
    if folds > n:
        raise TooFewPointsForFolds(f"{folds} folds need at least {folds} observations, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=int)
    labels[order] = np.arange(n) % folds
    return labels


def cv_score(sample: Sample, K: int, cfg: SelectionConfig, spec: FitterSpec) -> float:
    """
    Mean over folds of the held-out log-likelihood of a K-modal fit on the
    remaining folds. Held-out points where the fit has no mass count at
    the floor density 1 / (n * range).
    """
    labels = fold_assignment(sample.n, cfg.folds, cfg.seed)
    if sample.span == 0:
        raise DegenerateSample("all observations are equal")
    floor = 1.0 / (sample.n * sample.span)

    rounds = []
    for fold in range(cfg.folds):
        training = Sample(sample.values[labels != fold])
        held_out = sample.values[labels == fold]
        fit = _selection_fit(training, K, cfg, spec)
        density = np.asarray(fit.density.pdf(held_out))
        rounds.append(float(np.sum(np.log(np.where(density > 0, density, floor)))))
    return float(np.mean(rounds))


def greedy_stop(scores: Sequence[float], improvement: float) -> Tuple[int, str]:
    """
    First K whose successor improves the score by at most `improvement`
    relative to |score(K)|; the last K when every step improves more.
    """
    for K in range(1, len(scores)):
        current, following = scores[K - 1], scores[K]
        gain = following - current
        relative = gain / abs(current) if current != 0 else np.sign(gain) * np.inf
        if relative <= improvement:
            return K, 'threshold_met'
    return len(scores), 'k_max_reached'


def select_k_cv(sample: Sample, cfg: SelectionConfig, spec: FitterSpec) -> SelectionReport:
    """Forward selection on the cross-validated log-likelihood."""
    fold_assignment(sample.n, cfg.folds, cfg.seed)
    per_K, scores, chosen, reason = [], [], None, 'k_max_reached'

    for K in range(1, cfg.k_max + 1):
        record = _record(K, cfg)
        try:
            record['cv_score'] = cv_score(sample, K, cfg, spec)
            record['loglik'] = _selection_fit(sample, K, cfg, spec).loglik
        except ModalFitError as e:
            if K == 1:
                raise
            logger.warning(f"K={K} could not be fitted: {e}")
            record['error'] = e.code
            per_K.append(record)
            reason = 'infeasible'
            break

        per_K.append(record)
        scores.append(record['cv_score'])
        logger.debug(f"K={K}: cross-validated log-likelihood {record['cv_score']:.4f}")

        if len(scores) >= 2:
            stop_at, why = greedy_stop(scores, cfg.improvement)
            if why == 'threshold_met':
                chosen, reason = stop_at, why
                break

    if chosen is None:
        chosen = _last_feasible(per_K)
    logger.info(f"🎯 Cross-validation selection chose K={chosen} ({reason})")
    return SelectionReport(chosen_K=chosen, per_K=per_K, stopped_reason=reason,
                           method='cross_validation', config=cfg)


def _last_feasible(per_K: List[Dict[str, Any]]) -> int:
    return [record['K'] for record in per_K if record['error'] is None][-1]


def select_k(sample: Sample, cfg: SelectionConfig, spec: FitterSpec) -> SelectionReport:
    if cfg.method == 'cross_validation':
        return select_k_cv(sample, cfg, spec)
    return select_k_fit_measure(sample, cfg, spec)


def refit_chosen(sample: Sample, report: SelectionReport, spec: FitterSpec,
                 multigrid: Optional[MultiGridConfig] = None, snap_knots: bool = False) -> FitResult:
    """Refit the selected K with the full-quality multigrid."""
    K = report.chosen_K
    return fit_kmodal(
        sample,
        K,
        M=report.config.grid_size(K),
        cfg=multigrid,
        spec=spec,
        n_jobs=report.config.n_jobs,
        snap_knots=snap_knots,
    )
