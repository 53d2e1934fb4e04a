#!/usr/bin/env python3
"""Test suite for the modal density fitting tool"""

import json
import os

import numpy as np
import pytest

from config.experiment_presets import DESK_BENCHMARK, GEYSER_FIT, THREE_GAUSSIANS
from config.settings import Config
from src.commands import run
from src.density import (
    Interval,
    KModalDensity,
    KnotVector,
    Sample,
    UnimodalPiece,
    cdf_eval,
    check_density,
    load_sample,
    log_likelihood,
    pdf_eval,
)
from src.dynamic_programming import (
    Grid,
    MultiGridConfig,
    _delta_star,
    _flat_stretch,
    _subgrid,
    assemble_density,
    backtrack,
    build_grid,
    build_score_matrix,
    dp_tables,
    enumerate_knots,
    fit_kmodal,
    multigrid_refine,
    score_interval,
    snap_knots_to_valley,
)
from src.errors import (
    DegenerateSample,
    EmptyInput,
    EmptyModalInterval,
    InfeasibleK,
    LengthMismatch,
    MalformedDensityFile,
    MultiColumnInput,
    NoInteriorPoints,
    NonFiniteValue,
    OverlapViolation,
    TooFewPoints,
    TooFewPointsForFolds,
)
from src.model_selection import (
    SelectionConfig,
    cv_score,
    fold_assignment,
    greedy_stop,
    refit_chosen,
    select_k,
    select_k_fit_measure,
    supnorm_fit,
)
from src.results_manager import density_from_dict, density_to_dict, fit_result_to_dict
from src.simulation import (
    MixtureSpec,
    benchmark_summary,
    mode_count_is_stable,
    random_mixture,
    run_benchmark,
    run_replicate,
    sample_mixture,
    true_mode_count,
)
from src.unimodal import (
    FitterSpec,
    clamp_interval,
    fit_unimodal,
    fit_unimodal_known_mode,
    grenander_monotone,
    mode_candidates,
    pava,
    unimodal_regression,
)
from src.utils import parse_sample_text, read_sample_file

slow = pytest.mark.skipif(os.getenv('MODALFIT_SLOW_TESTS') != '1',
                          reason='acceptance-scale run, set MODALFIT_SLOW_TESTS=1')

GRENANDER = FitterSpec(kind='grenander_mle')
HISTOGRAM = FitterSpec(kind='histogram_unimodal')


def uniform_density(lo=0.0, hi=1.0) -> KModalDensity:
    piece = UnimodalPiece(breakpoints=[lo, hi], heights=[1.0 / (hi - lo)], mode=0.5 * (lo + hi))
    return KModalDensity(knots=KnotVector(), weights=[1.0], pieces=(piece,))


def three_gaussians(n, seed) -> Sample:
    mixture = MixtureSpec(kind='gaussian', centers=THREE_GAUSSIANS['centers'], sds=THREE_GAUSSIANS['sds'])
    return sample_mixture(mixture, n, seed)


def assert_valid(density: KModalDensity):
    assert check_density(density) == []


def exhaustive_isotonic(values, weights):
    """Best non-decreasing fit by trying every partition into contiguous blocks."""
    n = len(values)
    best_error, best_fit = np.inf, None
    for mask in range(2 ** (n - 1)):
        cuts = [0] + [i + 1 for i in range(n - 1) if mask >> i & 1] + [n]
        means = [np.average(values[a:b], weights=weights[a:b]) for a, b in zip(cuts, cuts[1:])]
        if any(later < earlier for earlier, later in zip(means, means[1:])):
            continue
        fitted = np.concatenate([np.full(b - a, m) for (a, b), m in zip(zip(cuts, cuts[1:]), means)])
        error = np.sum(weights * (values - fitted) ** 2)
        if error < best_error:
            best_error, best_fit = error, fitted
    return best_fit


def concave_majorant(a, points):
    """Vertices of the least concave majorant of the ECDF started at (a, 0)."""
    unique, counts = np.unique(points, return_counts=True)
    xs = np.concatenate([[a], unique])
    ys = np.concatenate([[0.0], np.cumsum(counts) / len(points)])
    hull = []
    for x, y in zip(xs, ys):
        while len(hull) >= 2:
            (x0, y0), (x1, y1) = hull[-2], hull[-1]
            if (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) >= 0:
                hull.pop()
            else:
                break
        hull.append((x, y))
    return hull


@pytest.fixture(scope='module')
def coarse():
    sample = three_gaussians(600, seed=5)
    return sample, fit_kmodal(sample, 3, M=14, spec=HISTOGRAM)


@pytest.fixture(scope='module')
def geyser():
    return load_sample(read_sample_file(Config().FAITHFUL_PATH))


class TestSample:

    def test_load_sample_sorts(self):
        sample = load_sample([3, 1, 2])
        np.testing.assert_array_equal(sample.values, [1.0, 2.0, 3.0])

    def test_single_value(self):
        assert load_sample([5]).n == 1

    def test_non_finite_reports_index(self):
        with pytest.raises(NonFiniteValue) as excinfo:
            load_sample([1, np.nan])
        assert excinfo.value.index == 1
        assert excinfo.value.to_dict()['error'] == 'non_finite_value'

    def test_empty(self):
        with pytest.raises(EmptyInput):
            load_sample([])

    def test_ties_recorded(self):
        sample = load_sample([2, 1, 1])
        assert sample.has_ties
        np.testing.assert_array_equal(sample.unique_values, [1.0, 2.0])
        np.testing.assert_array_equal(sample.tie_counts, [2, 1])

    def test_select_honours_closure(self):
        sample = load_sample([0.0, 1.0, 2.0])
        assert sample.count(Interval(0.0, 2.0)) == 2
        assert sample.count(Interval(0.0, 2.0, rightmost=True)) == 3


class TestDensity:

    def test_uniform_pdf(self):
        f = uniform_density()
        assert pdf_eval(f, 0.5) == 1.0
        assert pdf_eval(f, -0.5) == 0.0

    def test_weighted_piece(self):
        left = UnimodalPiece(breakpoints=[-1.0, 0.0], heights=[1.0], mode=-0.5)
        right = UnimodalPiece(breakpoints=[0.0, 2.0], heights=[0.5], mode=1.0)
        f = KModalDensity(knots=KnotVector([0.0]), weights=[0.25, 0.75], pieces=(left, right))
        assert pdf_eval(f, 1.0) == pytest.approx(0.375)
        # continuous from the right at the knot
        assert pdf_eval(f, 0.0) == pytest.approx(0.375)
        assert_valid(f)

    def test_cdf(self):
        f = uniform_density()
        assert cdf_eval(f, 0.25) == pytest.approx(0.25)
        assert cdf_eval(f, 3.0) == 1.0
        assert cdf_eval(f, -3.0) == 0.0

        piece = UnimodalPiece(breakpoints=[0.0, 1.0, 2.0], heights=[0.25, 0.75], mode=1.0)
        g = KModalDensity(knots=KnotVector(), weights=[1.0], pieces=(piece,))
        assert cdf_eval(g, 1.5) == pytest.approx(0.625)

    def test_log_likelihood(self):
        f = uniform_density()
        assert log_likelihood(f, [0.2, 0.8]) == 0.0
        assert log_likelihood(f, [0.2, 1.5]) == -np.inf
        g = uniform_density(0.0, 0.5)
        assert log_likelihood(g, [0.1, 0.2, 0.3]) == pytest.approx(3 * np.log(2))

    def test_cdf_difference_matches_riemann_sum(self):
        piece = UnimodalPiece(breakpoints=[0.0, 1.0, 2.0, 4.0], heights=[0.1, 0.5, 0.2], mode=1.0)
        f = KModalDensity(knots=KnotVector(), weights=[1.0], pieces=(piece,))
        x = np.linspace(0.0, 4.0, 4001)
        riemann = np.sum(f.pdf(x[:-1]) * np.diff(x))
        assert f.cdf(4.0) - f.cdf(0.0) == pytest.approx(riemann, abs=1e-3)

    def test_rejects_bad_weights(self):
        piece = UnimodalPiece(breakpoints=[0.0, 1.0], heights=[1.0], mode=0.5)
        with pytest.raises(ValueError):
            KModalDensity(knots=KnotVector(), weights=[0.5], pieces=(piece,))

    def test_knots_must_increase(self):
        with pytest.raises(ValueError):
            KnotVector([2.0, 1.0])

    def test_interval_contains(self):
        assert Interval(0.0, 1.0).contains(0.0)
        assert not Interval(0.0, 1.0).contains(1.0)
        assert Interval(0.0, 1.0, rightmost=True).contains(1.0)


class TestPava:

    def test_examples(self):
        np.testing.assert_allclose(pava([1, 2, 3], direction='non_increasing'), [2, 2, 2])
        np.testing.assert_allclose(pava([3, 1, 2], direction='non_increasing'), [3, 1.5, 1.5])
        np.testing.assert_allclose(pava([1, 2, 2, 5]), [1, 2, 2, 5])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            pava([1, 2, 3], [1, 1])

    def test_weights_must_be_positive(self):
        with pytest.raises(ValueError):
            pava([1, 2], [1, 0])

    def test_matches_exhaustive_search(self):
        rng = np.random.default_rng(7)
        for _ in range(500):
            n = int(rng.integers(1, 9))
            values = rng.normal(size=n)
            weights = rng.uniform(0.1, 3.0, size=n)
            np.testing.assert_allclose(pava(values, weights), exhaustive_isotonic(values, weights), atol=1e-10)
            np.testing.assert_allclose(
                pava(values, weights, 'non_increasing'),
                -exhaustive_isotonic(-values, weights),
                atol=1e-10,
            )

    def test_preserves_weighted_mean(self):
        rng = np.random.default_rng(3)
        values, weights = rng.normal(size=30), rng.uniform(0.5, 2.0, size=30)
        fitted = pava(values, weights)
        assert np.all(np.diff(fitted) >= -1e-12)
        assert np.average(fitted, weights=weights) == pytest.approx(np.average(values, weights=weights))


class TestGrenander:

    def test_example_with_trailing_zero_cell(self):
        fit = grenander_monotone([1.0, 2.0, 4.0], 'non_increasing', Interval(0.0, 4.5))
        np.testing.assert_allclose(fit.breakpoints, [0.0, 2.0, 4.0, 4.5])
        np.testing.assert_allclose(fit.heights, [1 / 3, 1 / 6, 0.0])

    def test_single_point(self):
        fit = grenander_monotone([2.0], 'non_increasing', Interval(0.0, 3.0))
        np.testing.assert_allclose(fit.breakpoints, [0.0, 2.0, 3.0])
        np.testing.assert_allclose(fit.heights, [0.5, 0.0])

    def test_pooled_slope(self):
        fit = grenander_monotone([0.5, 1.5, 2.5], 'non_increasing', Interval(0.0, 3.0))
        np.testing.assert_allclose(fit.breakpoints, [0.0, 0.5, 2.5, 3.0])
        np.testing.assert_allclose(fit.heights, [2 / 3, 1 / 3, 0.0])

    def test_non_decreasing_has_leading_zero_cell(self):
        fit = grenander_monotone([1.0, 2.0, 4.0], 'non_decreasing', Interval(0.0, 5.0))
        np.testing.assert_allclose(fit.breakpoints, [0.0, 1.0, 4.0, 5.0])
        np.testing.assert_allclose(fit.heights, [0.0, 2 / 9, 1 / 3])
        assert fit.total_mass == pytest.approx(1.0)

    def test_no_interior_points(self):
        with pytest.raises(NoInteriorPoints):
            grenander_monotone([], 'non_increasing', Interval(0.0, 1.0))

    def test_matches_concave_majorant(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(1, 51))
            points = np.round(rng.exponential(1.0, size=n), 1) + 0.05
            a, b = 0.0, points.max() + 1.0
            fit = grenander_monotone(points, 'non_increasing', Interval(a, b))

            assert fit.total_mass == pytest.approx(1.0, abs=1e-9)
            hull = concave_majorant(a, points)
            for (x0, y0), (x1, y1) in zip(hull, hull[1:]):
                assert fit.pdf(0.5 * (x0 + x1)) == pytest.approx((y1 - y0) / (x1 - x0), abs=1e-10)
                assert fit.cdf(x1) == pytest.approx(y1, abs=1e-10)

    def test_beats_uniform(self):
        rng = np.random.default_rng(5)
        points = rng.uniform(0.1, 3.9, size=40)
        fit = grenander_monotone(points, 'non_increasing', Interval(0.0, 4.0))
        assert fit.log_likelihood(points) >= points.size * np.log(1 / 4.0)


class TestUnimodalFit:

    def test_known_mode_is_unimodal(self):
        rng = np.random.default_rng(2)
        points = np.sort(rng.normal(size=50))
        interval = Interval(points[0] - 0.5, points[-1] + 0.5)
        piece = fit_unimodal_known_mode(points, interval, 0.5 * (points[20] + points[21]))
        assert piece.is_unimodal()
        assert piece.total_mass == pytest.approx(1.0, abs=1e-9)
        assert piece.loglik == pytest.approx(piece.log_likelihood(points))

    def test_known_mode_at_endpoint_is_monotone(self):
        points = np.array([0.2, 0.4, 0.9])
        piece = fit_unimodal_known_mode(points, Interval(0.0, 1.0), 0.0)
        assert np.all(np.diff(piece.heights) <= 0)
        assert piece.mode == 0.0

    def test_known_mode_symmetric_points_mirror(self):
        left = np.array([1.0, 2.5, 3.0])
        points = np.concatenate([left, 8.0 - left[::-1]])
        piece = fit_unimodal_known_mode(points, Interval(0.0, 8.0), 4.0)
        np.testing.assert_allclose(piece.breakpoints, 8.0 - piece.breakpoints[::-1])
        np.testing.assert_allclose(piece.heights, piece.heights[::-1])
        assert piece.cdf(4.0) == pytest.approx(0.5)

    def test_known_mode_one_point_each_side(self):
        piece = fit_unimodal_known_mode([0.2, 0.8], Interval(0.0, 1.0), 0.5)
        np.testing.assert_allclose(piece.pdf(np.array([0.1, 0.3, 0.7, 0.9])), [0.0, 5 / 3, 5 / 3, 0.0])
        assert piece.cdf(0.5) == pytest.approx(0.5)
        assert piece.total_mass == pytest.approx(1.0)
        assert piece.loglik == pytest.approx(2 * np.log(5 / 3))

    def test_mle_beats_every_candidate(self):
        rng = np.random.default_rng(4)
        points = np.sort(rng.gamma(2.0, size=60))
        interval = Interval(0.0, points[-1] + 1.0)
        piece = fit_unimodal(points, interval, GRENANDER)
        for mu in mode_candidates(points, interval, GRENANDER):
            assert piece.loglik >= fit_unimodal_known_mode(points, interval, mu).loglik
        assert piece.is_unimodal()

    def test_candidates_avoid_data(self):
        points = np.array([1.0, 2.0, 2.0, 4.0])
        candidates = mode_candidates(points, Interval(0.0, 5.0), GRENANDER)
        np.testing.assert_allclose(candidates, [0.0, 1.5, 3.0, 5.0])
        assert not np.any(np.isin(candidates, points))

    def test_candidates_skip_clamped_ends(self):
        points = np.array([1.0, 2.0, 3.0])
        candidates = mode_candidates(points, Interval(-np.inf, 5.0), GRENANDER)
        np.testing.assert_allclose(candidates, [1.5, 2.5, 5.0])

    def test_candidates_thinned(self):
        points = np.arange(100.0)
        spec = FitterSpec(kind='grenander_mle', mode_candidates_per_interval=8)
        candidates = mode_candidates(points, Interval(-0.5, 99.5), spec)
        assert candidates.size == 10

    def test_clamp_interval(self):
        clamped = clamp_interval([1.0, 2.0, 3.0], Interval(-np.inf, np.inf, rightmost=True))
        assert (clamped.lo, clamped.hi) == (0.0, 4.0)
        assert clamped.rightmost

    def test_clamp_degenerate(self):
        with pytest.raises(DegenerateSample):
            clamp_interval([2.0, 2.0], Interval(-np.inf, np.inf))
        clamped = clamp_interval([2.0, 2.0], Interval(-np.inf, 3.0))
        assert clamped.lo == 1.0

    def test_histogram_fit(self):
        rng = np.random.default_rng(9)
        points = np.sort(rng.normal(size=400))
        interval = Interval(points[0] - 0.1, points[-1] + 0.1)
        piece = fit_unimodal(points, interval, HISTOGRAM)
        assert piece.heights.size == 20
        assert piece.is_unimodal()
        assert piece.total_mass == pytest.approx(1.0, abs=1e-9)
        assert piece.heights.max() <= 20 / interval.width * (1 + 1e-9)

    def test_histogram_fixed_bins(self):
        points = np.array([0.1, 0.2, 0.6, 0.7, 0.8])
        piece = fit_unimodal(points, Interval(0.0, 1.0), FitterSpec(histogram_bins=4))
        assert piece.heights.size == 4
        assert piece.is_unimodal()

    def test_unimodal_regression(self):
        fitted, peak = unimodal_regression([1.0, 3.0, 2.0])
        np.testing.assert_allclose(fitted, [1.0, 3.0, 2.0])
        assert peak == 1

        fitted, peak = unimodal_regression([1.0, 3.0, 1.0, 3.0, 1.0])
        rising, falling = fitted[:peak + 1], fitted[peak:]
        assert np.all(np.diff(rising) >= 0) and np.all(np.diff(falling) <= 0)

    def test_fitter_spec_validation(self):
        with pytest.raises(ValueError):
            FitterSpec(kind='kde')
        with pytest.raises(ValueError):
            FitterSpec(histogram_bins=1)


class TestGridAndScores:

    def test_grid_at_median_gap(self):
        grid = build_grid(load_sample([1, 2, 3, 4]), 2)
        np.testing.assert_allclose(grid.points, [2.5])

    def test_grid_uses_every_gap(self):
        grid = build_grid(load_sample([1, 2, 3, 4, 5]), 5)
        np.testing.assert_allclose(grid.points, [1.5, 2.5, 3.5, 4.5])

    def test_grid_skips_ties(self):
        grid = build_grid(load_sample([1, 1, 1, 1, 2, 3]), 2)
        np.testing.assert_allclose(grid.points, [1.5])

    def test_grid_looks_back_past_trailing_ties(self):
        grid = build_grid(load_sample([1, 2, 3, 3, 3, 3, 3, 3]), 3)
        np.testing.assert_allclose(grid.points, [1.5, 2.5])

    def test_grid_with_heavy_tie_block(self):
        rng = np.random.default_rng(0)
        values = np.concatenate([rng.normal(size=50), np.full(50, 10.0)])
        sample = load_sample(values)
        grid = build_grid(sample, 10)
        assert grid.points.size == 9
        assert np.all(np.diff(grid.points) > 0)
        assert not np.any(np.isin(grid.points, sample.values))
        assert grid.points[-1] == pytest.approx(0.5 * (values[:50].max() + 10.0))

        result = fit_kmodal(sample, 2, M=10, spec=HISTOGRAM)
        assert result.K == 2
        assert_valid(result.density)

    def test_grid_errors(self):
        with pytest.raises(DegenerateSample):
            build_grid(load_sample([2, 2, 2]), 2)
        with pytest.raises(TooFewPoints):
            build_grid(load_sample([1, 2]), 3)
        with pytest.raises(TooFewPoints):
            build_grid(load_sample([1, 1, 1, 2]), 3)

    def test_grid_indexing(self):
        grid = Grid([1.0, 2.0])
        assert grid.M == 3
        assert grid.value(1) == -np.inf and grid.value(4) == np.inf
        interval = grid.interval(2, 2)
        assert (interval.lo, interval.hi) == (1.0, 2.0)

    def test_score_with_uniform_piece(self):
        sample = load_sample([0.25, 0.75, 1.25, 1.75])
        score, piece = score_interval(sample, Interval(0.0, 1.0), FitterSpec(histogram_bins=2))
        np.testing.assert_allclose(piece.heights, [1.0, 1.0])
        assert score == pytest.approx(-2 * np.log(2))

    def test_whole_sample_score_is_fit_loglik(self):
        sample = three_gaussians(200, seed=1)
        grid = build_grid(sample, 5)
        S = build_score_matrix(sample, grid, HISTOGRAM)
        piece = fit_unimodal(sample.values, grid.interval(1, 5), HISTOGRAM)
        assert S[1, 5] == pytest.approx(piece.loglik)
        assert np.all(S[np.tril_indices(6, -1)] == -np.inf)

    def test_sparse_interval_scores_minus_infinity(self):
        sample = load_sample([0.0, 0.1, 0.2, 5.0, 10.0, 10.1, 10.2])
        score, piece = score_interval(sample, Interval(4.0, 6.0), GRENANDER)
        assert score == -np.inf and piece is None

    def test_score_depends_only_on_interval_points(self):
        rng = np.random.default_rng(12)
        values = rng.normal(size=120)
        sample = load_sample(values)
        grid = build_grid(sample, 6)
        interval = grid.interval(3, 4)

        inside = interval.contains(values)
        moved = values.copy()
        moved[~inside & (values < interval.lo)] -= 1.0
        moved[~inside & (values >= interval.hi)] += 1.0
        perturbed = load_sample(moved)

        for spec in (GRENANDER, HISTOGRAM):
            assert score_interval(sample, interval, spec)[0] == score_interval(perturbed, interval, spec)[0]


class TestDynamicProgramming:

    @pytest.fixture
    def small_table(self):
        S = np.full((4, 4), -np.inf)
        S[1, 1], S[1, 2], S[1, 3] = -5, -8, -12
        S[2, 2], S[2, 3], S[3, 3] = -4, -7, -3
        return S

    def test_recursion_example(self, small_table):
        D, I = dp_tables(small_table, 2)
        assert D[3, 2] == -11 and I[3, 2] == 3
        assert D[2, 2] == -9 and I[2, 2] == 2
        np.testing.assert_array_equal(D[1:, 1], small_table[1, 1:])
        assert np.all(I[1:, 1] == 1)

    def test_backtrack_example(self, small_table):
        grid = Grid([10.0, 20.0])
        D, I = dp_tables(small_table, 2)
        knots, loglik = backtrack(D, I, grid, 2)
        np.testing.assert_array_equal(knots.interior, [20.0])
        assert loglik == -11

    def test_one_interval(self, small_table):
        D, I = dp_tables(small_table, 1)
        knots, loglik = backtrack(D, I, Grid([10.0, 20.0]), 1)
        assert knots.K == 1 and loglik == -12

    def test_every_grid_point_when_k_equals_m(self, small_table):
        D, I = dp_tables(small_table, 3)
        knots, loglik = backtrack(D, I, Grid([10.0, 20.0]), 3)
        np.testing.assert_array_equal(knots.interior, [10.0, 20.0])
        assert loglik == -12

    def test_infeasible(self, small_table):
        with pytest.raises(InfeasibleK):
            dp_tables(small_table, 4)
        with pytest.raises(InfeasibleK):
            dp_tables(np.full((4, 4), -np.inf), 2)

    def test_enumeration_matches_example(self, small_table):
        starts, score = enumerate_knots(small_table, 2)
        assert starts == (3,) and score == -11

    def _check_against_enumeration(self, sample, M, spec):
        grid = build_grid(sample, M)
        S = build_score_matrix(sample, grid, spec)
        for K in (2, 3, 4):
            D, I = dp_tables(S, K)
            knots, loglik = backtrack(D, I, grid, K)
            starts, best = enumerate_knots(S, K)
            assert loglik == pytest.approx(best, abs=1e-10)
            np.testing.assert_array_equal(knots.interior, [grid.value(b) for b in starts])
            assert knots.avoids(sample)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(0)
        spec = FitterSpec(kind='grenander_mle', mode_candidates_per_interval=8)
        for _ in range(12):
            sample = load_sample(rng.normal(size=200) * rng.uniform(0.5, 3.0))
            self._check_against_enumeration(sample, int(rng.integers(6, 13)), spec)

    @slow
    @pytest.mark.slow
    def test_matches_enumeration_acceptance(self):
        rng = np.random.default_rng(100)
        for _ in range(100):
            values = rng.normal(size=200) + rng.choice([0.0, 4.0], size=200)
            self._check_against_enumeration(load_sample(values), int(rng.integers(6, 13)), GRENANDER)

    def _check_monotone_in_k(self, rng):
        spec = FitterSpec(kind='grenander_mle', mode_candidates_per_interval=1000)
        sample = load_sample(rng.normal(size=60) + rng.choice([0.0, 3.0], size=60))
        M = 8
        S = build_score_matrix(sample, build_grid(sample, M), spec)
        D, _ = dp_tables(S, 5, require_feasible=False)
        for k in range(1, 5):
            if np.isfinite(D[M, k]) and np.isfinite(D[M, k + 1]):
                assert D[M, k + 1] >= D[M, k] - 1e-9

    def test_likelihood_monotone_in_k(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            self._check_monotone_in_k(rng)

    @slow
    @pytest.mark.slow
    def test_likelihood_monotone_in_k_acceptance(self):
        rng = np.random.default_rng(50)
        for _ in range(50):
            self._check_monotone_in_k(rng)


class TestAssembly:

    def test_weights_are_counts(self):
        sample = load_sample([0.0, 1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0])
        density = assemble_density(sample, KnotVector([5.0]), HISTOGRAM)
        np.testing.assert_allclose(density.weights, [0.4, 0.6])
        assert_valid(density)

    def test_single_piece(self):
        sample = three_gaussians(300, seed=2)
        result = fit_kmodal(sample, 1, spec=GRENANDER)
        assert result.K == 1 and result.knots.interior.size == 0
        np.testing.assert_array_equal(result.density.weights, [1.0])
        assert_valid(result.density)

    def test_empty_modal_interval(self):
        sample = load_sample([0.0, 1.0, 2.0, 3.0, 10.0])
        with pytest.raises(EmptyModalInterval):
            assemble_density(sample, KnotVector([5.0]), HISTOGRAM)

    def test_loglik_matches_recursion(self):
        sample = three_gaussians(500, seed=3)
        for spec in (GRENANDER, HISTOGRAM):
            result = fit_kmodal(sample, 3, M=10, spec=spec)
            assert result.loglik == result.tables.D[10, 3]
            assert result.density.log_likelihood(sample) == pytest.approx(result.loglik, abs=1e-8)
            assert_valid(result.density)

    def test_forced_single_mode_loses_to_split(self):
        sample = load_sample(np.concatenate([np.arange(10) * 0.1, 5.0 + np.arange(10) * 0.1]))
        one = fit_kmodal(sample, 1, spec=GRENANDER)
        split = assemble_density(sample, KnotVector([2.95]), GRENANDER)
        assert one.loglik < split.log_likelihood(sample)
        assert one.loglik < sum(piece.loglik for piece in split.pieces)
        assert fit_kmodal(sample, 2, M=4, spec=GRENANDER).loglik > one.loglik

    def test_too_many_intervals(self):
        sample = three_gaussians(100, seed=4)
        with pytest.raises(InfeasibleK):
            fit_kmodal(sample, 3, M=2, spec=HISTOGRAM)
        with pytest.raises(TooFewPoints):
            fit_kmodal(load_sample([1.0, 2.0, 3.0]), 2, spec=HISTOGRAM)


class TestMultigrid:

    def test_identity_for_single_point_subgrids(self, coarse):
        sample, result = coarse
        refined = multigrid_refine(sample, result, MultiGridConfig(L=1), HISTOGRAM)
        np.testing.assert_array_equal(refined.knots.interior, result.knots.interior)
        assert refined.loglik == pytest.approx(result.loglik, abs=1e-9)

    def test_never_worse(self, coarse):
        sample, result = coarse
        for L in (3, 5):
            refined = multigrid_refine(sample, result, MultiGridConfig(L=L), HISTOGRAM)
            assert refined.refined
            assert refined.loglik >= result.loglik - 1e-9
            assert refined.density.log_likelihood(sample) == pytest.approx(refined.loglik, abs=1e-8)
            assert refined.knots.avoids(sample)
            assert_valid(refined.density)

    def test_subgrids_contain_knot(self, coarse):
        sample, result = coarse
        sizes = []
        for knot in result.knots.interior:
            subgrid = _subgrid(sample, knot, 0.3, 5)
            assert knot in subgrid
            assert not np.any(np.isin(subgrid, sample.values))
            sizes.append(subgrid.size)
        assert int(np.prod(sizes)) == 25

    def test_spacing_anchored_at_sample_extremes(self):
        sample = load_sample(np.arange(11.0))
        assert _delta_star(sample, np.array([1.5, 8.0])) == 1.5
        assert _delta_star(sample, np.array([4.0, 9.5])) == 0.5
        assert MultiGridConfig(L=5).radius(_delta_star(sample, np.array([5.0]))) == pytest.approx(2.0)

    def test_subgrid_moves_off_data(self):
        sample = load_sample([0.0, 1.0, 2.0, 3.0, 4.0])
        subgrid = _subgrid(sample, 1.5, 0.5, 3)
        np.testing.assert_allclose(subgrid, [1.5, 2.5])
        assert not np.any(np.isin(subgrid, sample.values))
        assert 1.5 in subgrid

    def test_overlap(self, coarse):
        sample, result = coarse
        with pytest.raises(OverlapViolation):
            multigrid_refine(sample, result, MultiGridConfig(L=3, r=100.0), HISTOGRAM)

    def test_single_interval_untouched(self):
        sample = three_gaussians(100, seed=6)
        result = fit_kmodal(sample, 1, spec=HISTOGRAM)
        assert multigrid_refine(sample, result, MultiGridConfig(L=5), HISTOGRAM) is result


class TestValleySnapping:

    def test_flat_stretch(self):
        edges = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
        heights = np.array([1.0, 0.0, 0.0, 1.0])
        assert _flat_stretch(edges, heights, 2.0) == (1.0, 3.0)

    def test_snap_moves_knot_into_gap(self):
        rng = np.random.default_rng(8)
        values = np.concatenate([rng.uniform(0, 1, 30), rng.uniform(5, 6, 30)])
        sample = load_sample(values)
        result = fit_kmodal(sample, 2, M=10, cfg=MultiGridConfig(L=5), spec=GRENANDER)
        snapped = snap_knots_to_valley(sample, result, GRENANDER)
        knot = snapped.knots.interior[0]
        assert snapped.snapped
        assert values[values < 3].max() < knot < values[values > 3].min()
        assert snapped.density.log_likelihood(sample) == pytest.approx(snapped.loglik)


class TestGeyser:

    def test_fixture_size(self, geyser):
        assert geyser.n == 272

    def test_two_modal_intervals_fit_well(self, geyser):
        spec = FitterSpec(kind=GEYSER_FIT['fitter'])
        two = fit_kmodal(geyser, GEYSER_FIT['k'], M=GEYSER_FIT['m'],
                         cfg=MultiGridConfig(L=GEYSER_FIT['multigrid_l']), spec=spec)
        one = fit_kmodal(geyser, 1, spec=spec)
        assert -two.loglik <= GEYSER_FIT['nll_bound']
        assert -two.loglik < -one.loglik
        assert two.coarse_loglik is not None and two.loglik >= two.coarse_loglik
        assert 58 < two.knots.interior[0] < 76
        assert_valid(two.density)


class TestKnotRecovery:

    def _knots(self, seed):
        sample = three_gaussians(THREE_GAUSSIANS['n'], seed)
        result = fit_kmodal(sample, THREE_GAUSSIANS['k'], M=THREE_GAUSSIANS['m'],
                            cfg=MultiGridConfig(L=THREE_GAUSSIANS['multigrid_l']), spec=HISTOGRAM)
        assert_valid(result.density)
        return result.knots.interior

    def test_recovers_valleys(self):
        knots = self._knots(seed=0)
        np.testing.assert_allclose(knots, THREE_GAUSSIANS['valleys'], atol=THREE_GAUSSIANS['tolerance'])

    @slow
    @pytest.mark.slow
    def test_recovers_valleys_across_seeds(self):
        hits = 0
        for seed in range(10):
            knots = self._knots(seed)
            hits += bool(np.all(np.abs(knots - THREE_GAUSSIANS['valleys']) <= THREE_GAUSSIANS['tolerance']))
        assert hits >= 9


class TestSelection:

    def test_supnorm_examples(self):
        n = 4
        f = uniform_density(0.0, float(n))
        sample = load_sample(np.arange(1, n + 1) - 0.5)
        assert supnorm_fit(f, sample) == pytest.approx(0.5 / n)
        assert supnorm_fit(uniform_density(0.0, 2.0), load_sample([1.0])) == pytest.approx(0.5)
        assert supnorm_fit(uniform_density(), load_sample([5.0, 6.0])) == pytest.approx(1.0)

    def test_greedy_stop(self):
        assert greedy_stop([-100, -99.5, -99.4], 0.01) == (1, 'threshold_met')
        assert greedy_stop([-100, -90, -89.9], 0.01) == (2, 'threshold_met')
        assert greedy_stop([-100, -90, -80], 0.01) == (3, 'k_max_reached')

    def test_fold_assignment(self):
        labels = fold_assignment(23, 5, seed=1)
        sizes = np.bincount(labels, minlength=5)
        assert sizes.max() - sizes.min() <= 1 and sizes.sum() == 23
        np.testing.assert_array_equal(labels, fold_assignment(23, 5, seed=1))
        with pytest.raises(TooFewPointsForFolds):
            fold_assignment(3, 5, seed=0)

    def test_threshold_one_picks_one(self):
        sample = three_gaussians(300, seed=7)
        report = select_k_fit_measure(sample, SelectionConfig(tau=1.0), HISTOGRAM)
        assert report.chosen_K == 1 and report.stopped_reason == 'threshold_met'

    def test_threshold_zero_runs_out(self):
        sample = three_gaussians(300, seed=7)
        report = select_k_fit_measure(sample, SelectionConfig(tau=0.0, k_max=2), HISTOGRAM)
        assert report.chosen_K == 2 and report.stopped_reason == 'k_max_reached'
        assert [record['K'] for record in report.per_K] == [1, 2]

    def test_fit_measure_picks_first_below_threshold(self):
        sample = three_gaussians(600, seed=8)
        report = select_k(sample, SelectionConfig(tau=0.03, k_max=4), HISTOGRAM)
        measures = report.scores('fit_measure')
        chosen = report.chosen_K
        assert all(m > 0.03 for m in measures[:chosen - 1])
        if report.stopped_reason == 'threshold_met':
            assert measures[chosen - 1] <= 0.03

    def test_cv_score_deterministic_and_order_free(self):
        rng = np.random.default_rng(9)
        values = rng.normal(size=150)
        cfg = SelectionConfig(method='cross_validation', seed=3)
        first = cv_score(load_sample(values), 1, cfg, HISTOGRAM)
        again = cv_score(load_sample(rng.permutation(values)), 1, cfg, HISTOGRAM)
        assert first == again

    def test_cv_prefers_three_intervals(self):
        sample = three_gaussians(600, seed=10)
        cfg = SelectionConfig(method='cross_validation', seed=0)
        assert cv_score(sample, 3, cfg, HISTOGRAM) > cv_score(sample, 1, cfg, HISTOGRAM)

    def test_too_few_points_for_folds(self):
        cfg = SelectionConfig(method='cross_validation', folds=5)
        with pytest.raises(TooFewPointsForFolds):
            select_k(load_sample([1.0, 2.0, 3.0]), cfg, HISTOGRAM)

    def test_reports_reproducible(self):
        sample = three_gaussians(300, seed=11)
        cfg = SelectionConfig(method='cross_validation', k_max=3, seed=4)
        assert select_k(sample, cfg, HISTOGRAM).per_K == select_k(sample, cfg, HISTOGRAM).per_K

    def test_refit_uses_full_multigrid(self):
        sample = three_gaussians(400, seed=12)
        report = select_k(sample, SelectionConfig(tau=0.05, k_max=3), HISTOGRAM)
        refit = refit_chosen(sample, report, HISTOGRAM, MultiGridConfig(L=5))
        assert refit.K == report.chosen_K
        assert_valid(refit.density)

    def test_fixed_grid_size(self):
        sample = three_gaussians(300, seed=7)
        cfg = SelectionConfig(tau=0.0, k_max=2, M=3)
        report = select_k(sample, cfg, HISTOGRAM)
        assert [record['M'] for record in report.per_K] == [1, 3]
        refit = refit_chosen(sample, report, HISTOGRAM, MultiGridConfig(L=3))
        assert refit.M == 3 and refit.grid.points.size == 2
        with pytest.raises(ValueError):
            SelectionConfig(M=1)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SelectionConfig(method='dip_test')
        with pytest.raises(ValueError):
            SelectionConfig(folds=1)

    @slow
    @pytest.mark.slow
    def test_benchmark_accuracy(self):
        B, n = DESK_BENCHMARK['replicates'], DESK_BENCHMARK['n']
        measure = run_benchmark('gaussian', B, n, SelectionConfig(tau=0.01), HISTOGRAM, seed=0)
        assert measure.accuracy >= 10
        cv = run_benchmark('gaussian', B, n, SelectionConfig(method='cross_validation'), HISTOGRAM, seed=0)
        assert cv.accuracy >= 8

        strict, loose = [], []
        for seed in range(3):
            strict.append(run_benchmark('gaussian', B, n, SelectionConfig(tau=0.01), HISTOGRAM, seed).accuracy)
            loose.append(run_benchmark('gaussian', B, n, SelectionConfig(tau=0.05), HISTOGRAM, seed).accuracy)
        assert np.mean(strict) >= np.mean(loose)


class TestSimulation:

    def test_random_mixture_reproducible(self):
        first, second = random_mixture('gaussian', 42), random_mixture('gaussian', 42)
        np.testing.assert_array_equal(first.centers, second.centers)
        np.testing.assert_array_equal(first.sds, second.sds)
        assert 1 <= first.n_components <= 5
        np.testing.assert_allclose(first.weights, 1 / first.n_components)

    def test_component_count_uniform(self):
        counts = np.bincount([random_mixture('laplace', seed).n_components for seed in range(10_000)],
                             minlength=6)[1:]
        assert np.all(np.abs(counts - 2000) <= 4 * 40)

    def test_true_mode_count(self):
        assert true_mode_count(MixtureSpec('gaussian', [3.0], [1.0])) == 1
        assert true_mode_count(MixtureSpec('laplace', [3.0], [0.5])) == 1
        assert true_mode_count(MixtureSpec('gaussian', [0.0, 5.0, 10.0], [1.0, 1.0, 1.0])) == 3
        assert true_mode_count(MixtureSpec('gaussian', [0.0, 1.5], [1.0, 1.0])) == 1
        with pytest.raises(ValueError):
            true_mode_count(MixtureSpec('gaussian', [0.0], [1.0]), grid_points=100)

    def test_mode_count_mostly_stable(self):
        unstable = [seed for seed in range(200) if not mode_count_is_stable(random_mixture('gaussian', seed))]
        assert len(unstable) <= 10, f"unstable mode counts for seeds {unstable}"

    def test_sample_mixture(self):
        mixture = MixtureSpec('gaussian', [0.0], [1.0])
        assert sample_mixture(mixture, 1, 0).n == 1
        np.testing.assert_array_equal(sample_mixture(mixture, 50, 3).values, sample_mixture(mixture, 50, 3).values)
        big = sample_mixture(mixture, 100_000, 1)
        assert abs(big.values.mean()) <= 4 / np.sqrt(big.n)

    def test_empirical_cdf_close_to_truth(self):
        n = 10_000
        for seed in range(20):
            mixture = random_mixture('laplace', seed)
            sample = sample_mixture(mixture, n, seed + 1000)
            truth = mixture.cdf(sample.values)
            ranks = np.arange(1, n + 1) / n
            distance = max(np.max(np.abs(truth - ranks)), np.max(np.abs(truth - ranks + 1 / n)))
            assert distance <= 2 * 1.36 / np.sqrt(n)

    def test_replicate_reproducible(self):
        cfg = SelectionConfig(tau=0.05, k_max=2)
        assert run_replicate('gaussian', 300, cfg, HISTOGRAM, seed=17) == \
            run_replicate('gaussian', 300, cfg, HISTOGRAM, seed=17)

    def test_benchmark_report(self):
        report = run_benchmark('gaussian', 2, 300, SelectionConfig(tau=0.05, k_max=2), HISTOGRAM, seed=1)
        assert report.B == 2 and [row['replicate'] for row in report.rows] == [0, 1]
        assert report.accuracy == sum(row['correct'] for row in report.rows)
        summary = benchmark_summary(report)
        assert summary['mixture'] == 'gaussian' and summary['threshold'] == 0.05 and summary['B'] == 2
        with pytest.raises(ValueError):
            run_benchmark('gaussian', 0, 300, SelectionConfig(), HISTOGRAM, seed=1)

    def test_single_component_replicate(self):
        def mixture_of(seed):
            return random_mixture('gaussian', np.random.SeedSequence(seed).spawn(2)[0])

        seed = next(s for s in range(1000) if mixture_of(s).n_components == 1)
        row = run_replicate('gaussian', 500, SelectionConfig(tau=0.05, k_max=3), HISTOGRAM, seed=seed)
        assert row['n_components'] == 1 and row['true_modes'] == 1
        assert row['error'] is None and row['chosen_K'] >= 1


class TestSerialization:

    def test_round_trip(self):
        sample = three_gaussians(400, seed=13)
        result = fit_kmodal(sample, 2, M=10, cfg=MultiGridConfig(L=3), spec=GRENANDER)
        payload = json.loads(json.dumps(fit_result_to_dict(result)))
        loaded = density_from_dict(payload)

        lo, hi = result.density.support_range()
        x = np.linspace(lo - 1, hi + 1, 1000)
        np.testing.assert_allclose(loaded.pdf(x), result.density.pdf(x), rtol=0, atol=1e-12)
        np.testing.assert_allclose(loaded.cdf(x), result.density.cdf(x), rtol=0, atol=1e-12)
        assert len(payload['curve']) == 512
        assert payload['K'] == 2 and payload['M'] == 10

    def test_malformed(self):
        with pytest.raises(MalformedDensityFile):
            density_from_dict({'knots': []})
        with pytest.raises(MalformedDensityFile):
            density_from_dict({'knots': [], 'weights': [0.5], 'pieces': []})

    def test_curve_optional(self):
        payload = density_to_dict(uniform_density(), curve_resolution=None)
        assert 'curve' not in payload


class TestInput:

    def test_header_comments_and_blanks(self):
        text = "# waiting times\nwaiting\n\n1.5\n2 # inline\n3\n"
        np.testing.assert_array_equal(parse_sample_text(text), [1.5, 2.0, 3.0])

    def test_whitespace_separated(self):
        np.testing.assert_array_equal(parse_sample_text("1 2\t3\n4"), [1.0, 2.0, 3.0, 4.0])

    def test_trailing_comma(self):
        np.testing.assert_array_equal(parse_sample_text("x,\n1,\n2,\n"), [1.0, 2.0])

    def test_multi_column(self):
        with pytest.raises(MultiColumnInput):
            parse_sample_text("a,b\n1,2\n")

    def test_bad_value(self):
        with pytest.raises(NonFiniteValue):
            load_sample(parse_sample_text("1\n2\nNaN\n"))

    def test_config_validation(self, monkeypatch):
        monkeypatch.setenv('MODALFIT_TAU', '2')
        with pytest.raises(ValueError):
            Config()
        monkeypatch.setenv('MODALFIT_TAU', '0.05')
        assert SelectionConfig.from_config(Config()).tau == 0.05


class TestCommandLine:

    @staticmethod
    def last_json(text):
        return json.loads(text.strip().splitlines()[-1])

    def test_fit_single_interval(self, capsys):
        assert run(['fit', '--k', '1', '--fitter', 'grenander_mle']) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload['knots'] == [] and len(payload['pieces']) == 1

    def test_fit_geyser_to_file(self, tmp_path, capsys):
        out, curve = tmp_path / 'fit.json', tmp_path / 'curve.csv'
        status = run(['fit', '--k', '2', '--m', '10', '--multigrid-l', '15', '--fitter', 'grenander_mle',
                      '--out', str(out), '--curve-csv', str(curve), '--curve', '64'])
        assert status == 0
        payload = json.loads(out.read_text())
        assert payload['negative_loglik'] <= 1050
        assert len(payload['knots']) == 1
        assert curve.read_text().splitlines()[0] == 'x,pdf,cdf'
        assert len(curve.read_text().splitlines()) == 65
        assert 'negative_loglik' in capsys.readouterr().out

    def test_fit_is_deterministic(self, tmp_path):
        first, second = tmp_path / 'a.json', tmp_path / 'b.json'
        assert run(['fit', '--k', '2', '--out', str(first)]) == 0
        assert run(['fit', '--k', '2', '--out', str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()

    def test_missing_file(self, tmp_path, capsys):
        assert run(['fit', str(tmp_path / 'absent.csv')]) == 1
        assert self.last_json(capsys.readouterr().err)['error'] == 'io_error'

    def test_multi_column_file(self, tmp_path, capsys):
        data = tmp_path / 'two.csv'
        data.write_text('a,b\n1,2\n3,4\n')
        assert run(['fit', str(data)]) == 1
        assert self.last_json(capsys.readouterr().err)['error'] == 'multi_column_input'

    def test_invalid_method(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            run(['select', '--method', 'dip'])
        assert excinfo.value.code == 2
        assert self.last_json(capsys.readouterr().err)['error'] == 'usage_error'

    def test_zero_replicates(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            run(['simulate', '--replicates', '0'])
        assert excinfo.value.code == 2

    def test_select_with_loose_threshold(self, tmp_path):
        out = tmp_path / 'select.json'
        assert run(['select', '--tau', '1', '--out', str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload['selection']['chosen_K'] == 1
        assert payload['fit']['knots'] == []

    def test_simulate_is_deterministic(self, tmp_path):
        outputs = []
        for name in ('first', 'second'):
            out = tmp_path / f'{name}.json'
            assert run(['simulate', '--replicates', '2', '--n', '500', '--k-max', '3',
                        '--seed', '5', '--out', str(out)]) == 0
            outputs.append((out.read_bytes(), (tmp_path / f'{name}.csv').read_bytes()))
        assert outputs[0] == outputs[1]
        rows = outputs[0][1].decode().strip().splitlines()
        assert len(rows) == 3
        assert json.loads(outputs[0][0])['B'] == 2

    def test_eval(self, tmp_path, capsys):
        fit = tmp_path / 'fit.json'
        assert run(['fit', '--k', '2', '--out', str(fit)]) == 0
        capsys.readouterr()

        payload = json.loads(fit.read_text())
        knot = payload['knots'][0]
        query = tmp_path / 'query.txt'
        query.write_text(f"{knot!r}\n")
        assert run(['eval', str(fit), '--points', '0,70', '--query', str(query)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == 'x,pdf,cdf'
        assert lines[1] == '0.0,0.0,0.0'

        density = density_from_dict(payload)
        x, pdf, cdf = (float(v) for v in lines[3].split(','))
        assert pdf == density.pdf(knot)
        assert pdf == payload['weights'][1] * density.pieces[1].pdf(knot)

    def test_eval_needs_points(self, tmp_path, capsys):
        fit = tmp_path / 'fit.json'
        assert run(['fit', '--k', '1', '--out', str(fit)]) == 0
        assert run(['eval', str(fit)]) == 2
        assert self.last_json(capsys.readouterr().err)['error'] == 'invalid_argument'

    def test_eval_malformed(self, tmp_path, capsys):
        broken = tmp_path / 'broken.json'
        broken.write_text('{"knots": [1.0]}')
        assert run(['eval', str(broken), '--points', '1']) == 1
        assert self.last_json(capsys.readouterr().err)['error'] == 'malformed_density_file'

    def test_select_honours_grid_size(self, tmp_path):
        out = tmp_path / 'select.json'
        assert run(['select', '--tau', '0', '--k-max', '2', '--m', '3', '--out', str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload['fit']['M'] == 3
        assert [record['M'] for record in payload['selection']['per_K']] == [1, 3]
        assert payload['selection']['config']['M'] == 3

    def test_grid_size_too_small(self, capsys):
        assert run(['fit', '--k', '2', '--m', '1']) == 2
        assert self.last_json(capsys.readouterr().err)['error'] == 'invalid_argument'

    def test_select_is_deterministic(self, tmp_path):
        first, second = tmp_path / 'a.json', tmp_path / 'b.json'
        for out in (first, second):
            assert run(['select', '--method', 'cross_validation', '--k-max', '3', '--seed', '2',
                        '--out', str(out)]) == 0
        assert first.read_bytes() == second.read_bytes()

    def test_eval_is_deterministic(self, tmp_path):
        fit = tmp_path / 'fit.json'
        assert run(['fit', '--k', '2', '--out', str(fit)]) == 0
        first, second = tmp_path / 'a.csv', tmp_path / 'b.csv'
        for out in (first, second):
            assert run(['eval', str(fit), '--points', '45,60,75,90', '--out', str(out)]) == 0
        assert first.read_bytes() == second.read_bytes()
        assert len(first.read_text().splitlines()) == 5

    def test_cross_validation_on_three_gaussians(self, tmp_path):
        data = Config().THREE_GAUSSIANS_PATH
        outputs = []
        for name in ('first', 'second'):
            out = tmp_path / f'{name}.json'
            assert run(['select', data, '--method', 'cross_validation', '--seed', '0', '--out', str(out)]) == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

        payload = json.loads(outputs[0])
        assert payload['selection']['chosen_K'] == 3
        assert payload['selection']['stopped_reason'] == 'threshold_met'
        low, high = payload['fit']['knots']
        assert 1.0 < low < 4.0 and 6.0 < high < 9.0

    def test_undecodable_input(self, tmp_path, capsys):
        data = tmp_path / 'utf16.csv'
        data.write_bytes(b'\xff\xfe1\x002\x00')
        assert run(['fit', str(data)]) == 1
        assert self.last_json(capsys.readouterr().err)['error'] == 'io_error'

    def test_bad_environment_setting(self, monkeypatch, capsys):
        monkeypatch.setenv('MODALFIT_TAU', '2')
        assert run(['fit']) == 2
        assert self.last_json(capsys.readouterr().err)['error'] == 'invalid_argument'

    def test_unexpected_failure(self, monkeypatch, capsys):
        def explode(*args, **kwargs):
            raise RuntimeError('boom')

        monkeypatch.setattr('src.commands.fit_kmodal', explode)
        assert run(['fit', '--k', '2']) == 1
        error = self.last_json(capsys.readouterr().err)
        assert error['error'] == 'internal_error'
        assert 'boom' in error['message']
