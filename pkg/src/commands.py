"""
Command-line front end: fit, select, simulate and eval subcommands.

Results go to stdout (or --out), logs to stderr. Failures are reported as
a JSON object {"error": code, "message": ...} on stderr; the exit status is
2 for usage errors and 1 for runtime errors.
"""

import argparse
import json
import logging
import sys
from typing import Dict, List, Optional

import numpy as np

from config.settings import FITTER_KINDS, SELECTION_METHODS, Config
from src.density import Sample, load_sample
from src.dynamic_programming import MultiGridConfig, fit_kmodal
from src.errors import ModalFitError
from src.model_selection import SelectionConfig, refit_chosen, select_k
from src.results_manager import ResultsManager, evaluation_frame
from src.simulation import MIXTURE_KINDS, run_benchmark
from src.unimodal import FitterSpec
from src.utils import parse_points, read_sample_file, setup_logging

USAGE_ERROR = 2
RUNTIME_ERROR = 1


def _emit_error(code: str, message: str):
    sys.stderr.write(json.dumps({'error': code, 'message': message}) + '\n')


class JsonArgumentParser(argparse.ArgumentParser):
    """ArgumentParser reporting usage errors as JSON."""

    def error(self, message):
        _emit_error('usage_error', message)
        sys.exit(USAGE_ERROR)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _bins(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError(f"a histogram needs at least 2 bins, got {text}")
    return value


def _unit_fraction(text: str) -> float:
    value = float(text)
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {text}")
    return value


def _open_fraction(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def build_parser(config: Optional[Config] = None) -> JsonArgumentParser:
    config = config or Config()
    parser = JsonArgumentParser(prog='modalfit', description='K-modal density fitting by dynamic programming')
    parser.add_argument('--log-level', default=config.LOG_LEVEL, help='logging level (logs go to stderr)')
    commands = parser.add_subparsers(dest='command', required=True)

    def fitter_options(sub):
        sub.add_argument('--fitter', choices=FITTER_KINDS, default=config.DEFAULT_FITTER)
        sub.add_argument('--bins', type=_bins, default=config.HISTOGRAM_BINS,
                         help='histogram bins per modal interval (default: ceil(sqrt(n)))')
        sub.add_argument('--mode-candidates', type=_positive_int, default=config.MODE_CANDIDATES)
        sub.add_argument('--min-points', type=_positive_int, default=config.MIN_POINTS)
        sub.add_argument('--n-jobs', type=int, default=config.N_JOBS)

    def refinement_options(sub):
        sub.add_argument('--m', type=_positive_int, default=None, help='grid size M (default: 5K)')
        sub.add_argument('--multigrid-l', type=_positive_int, default=config.MULTIGRID_L)
        sub.add_argument('--multigrid-r', type=_positive_float, default=None,
                         help='search radius (default: delta* (1/2 - 1/(2L)))')
        sub.add_argument('--snap-knots', action='store_true', help='move knots to the middle of their valleys')
        sub.add_argument('--curve', type=_positive_int, default=config.CURVE_RESOLUTION,
                         help='points of the exported pdf/cdf curve')
        sub.add_argument('--curve-csv', default=None, help='also write the curve as CSV')

    def selection_options(sub):
        sub.add_argument('--method', choices=SELECTION_METHODS, default='fit_measure')
        sub.add_argument('--tau', type=_unit_fraction, default=config.TAU)
        sub.add_argument('--folds', type=int, default=config.FOLDS)
        sub.add_argument('--improvement', type=_open_fraction, default=config.IMPROVEMENT)
        sub.add_argument('--k-max', type=_positive_int, default=config.K_MAX)
        sub.add_argument('--coarse-l', type=_positive_int, default=config.COARSE_L)
        sub.add_argument('--seed', type=int, default=config.SEED)

    fit = commands.add_parser('fit', help='fit a K-modal density')
    fit.add_argument('input', nargs='?', default=config.FAITHFUL_PATH, help='one column of observations')
    fit.add_argument('--k', type=_positive_int, default=2)
    fit.add_argument('--out', default=None)
    fitter_options(fit)
    refinement_options(fit)

    select = commands.add_parser('select', help='choose K and fit it')
    select.add_argument('input', nargs='?', default=config.FAITHFUL_PATH)
    select.add_argument('--out', default=None)
    fitter_options(select)
    refinement_options(select)
    selection_options(select)

    simulate = commands.add_parser('simulate', help='run the random mixture benchmark')
    simulate.add_argument('--kind', choices=MIXTURE_KINDS, default='gaussian')
    simulate.add_argument('--replicates', type=_positive_int, default=20)
    simulate.add_argument('--n', type=_positive_int, default=2000)
    simulate.add_argument('--out', default=None, help='summary JSON; the per-replicate CSV goes beside it')
    fitter_options(simulate)
    selection_options(simulate)

    evaluate = commands.add_parser('eval', help='evaluate a saved density')
    evaluate.add_argument('density', help='JSON written by fit or select')
    evaluate.add_argument('--points', default=None, help='query points separated by commas')
    evaluate.add_argument('--query', default=None, help='file with one query point per line')
    evaluate.add_argument('--out', default=None)

    return parser


class ModalFitController:
    """Runs one subcommand from parsed arguments and the environment configuration."""

    def __init__(self, args: argparse.Namespace, config: Optional[Config] = None):
        self.args = args
        self.config = config or Config()
        self.logger = logging.getLogger('ModalFit')
        self.results = ResultsManager(curve_resolution=getattr(args, 'curve', self.config.CURVE_RESOLUTION))
        self.session_stats: Dict[str, object] = {'command': args.command, 'observations': 0}
        self.spec: Optional[FitterSpec] = None
        self.multigrid: Optional[MultiGridConfig] = None
        self.selection: Optional[SelectionConfig] = None

    def validate_options(self):
        """Build the settings objects of the command, rejecting bad combinations before any work starts."""
        args = self.args
        if args.command == 'eval':
            if args.points is None and args.query is None:
                raise ValueError("give query points with --points or --query")
            return

        if args.n_jobs == 0:
            raise ValueError("--n-jobs must not be 0")
        self.spec = self._fitter_spec()
        if args.command in ('fit', 'select'):
            if args.m is not None and args.m < 2:
                raise ValueError(f"grid size --m must be at least 2, got {args.m}")
            self.multigrid = self._multigrid()
        if args.command in ('select', 'simulate'):
            self.selection = self._selection_config()

    def dispatch(self) -> int:
        handlers = {
            'fit': self.cmd_fit,
            'select': self.cmd_select,
            'simulate': self.cmd_simulate,
            'eval': self.cmd_eval,
        }
        status = handlers[self.args.command]()
        self.logger.debug(f"Session stats: {self.session_stats}")
        return status

    def _fitter_spec(self) -> FitterSpec:
        return FitterSpec(
            kind=self.args.fitter,
            histogram_bins=self.args.bins,
            mode_candidates_per_interval=self.args.mode_candidates,
            min_points=self.args.min_points,
        )

    def _multigrid(self) -> MultiGridConfig:
        return MultiGridConfig(L=self.args.multigrid_l, r=self.args.multigrid_r)

    def _selection_config(self) -> SelectionConfig:
        return SelectionConfig.from_config(
            self.config,
            method=self.args.method,
            tau=self.args.tau,
            folds=self.args.folds,
            improvement=self.args.improvement,
            k_max=self.args.k_max,
            coarse_L=self.args.coarse_l,
            seed=self.args.seed,
            M=getattr(self.args, 'm', None),
            n_jobs=self.args.n_jobs,
        )

    def _load(self, path: str) -> Sample:
        sample = load_sample(read_sample_file(path))
        self.session_stats['observations'] = sample.n
        self.logger.info(f"📥 Loaded {sample.n} observations from {path}")
        return sample

    def _print_summary(self, lines: List[str]):
        if self.args.out is not None:
            sys.stdout.write('\n'.join(lines) + '\n')

    def cmd_fit(self) -> int:
        args = self.args
        sample = self._load(args.input)
        result = fit_kmodal(
            sample,
            args.k,
            M=args.m or self.config.default_grid_size(args.k),
            cfg=self.multigrid,
            spec=self.spec,
            n_jobs=args.n_jobs,
            snap_knots=args.snap_knots,
        )
        self.results.save_fit(result, args.out)
        if args.curve_csv:
            self.results.save_curve(result.density, args.curve_csv)

        self._print_summary([
            f"loglik: {result.loglik:.6f}",
            f"negative_loglik: {result.negative_loglik:.6f}",
            f"knots: {', '.join(f'{knot:.6f}' for knot in result.knots.interior)}",
        ])
        return 0

    def cmd_select(self) -> int:
        args = self.args
        sample = self._load(args.input)
        report = select_k(sample, self.selection, self.spec)
        refit = refit_chosen(sample, report, self.spec, multigrid=self.multigrid, snap_knots=args.snap_knots)
        self.results.save_selection(report, refit, args.out)
        if args.curve_csv:
            self.results.save_curve(refit.density, args.curve_csv)

        self._print_summary([
            f"chosen_K: {report.chosen_K}",
            f"stopped_reason: {report.stopped_reason}",
            f"M: {refit.M}",
            f"loglik: {refit.loglik:.6f}",
        ])
        return 0

    def cmd_simulate(self) -> int:
        args = self.args
        report = run_benchmark(
            args.kind,
            args.replicates,
            args.n,
            self.selection,
            self.spec,
            seed=args.seed,
            n_jobs=args.n_jobs,
        )
        self.results.save_benchmark(report, args.out)
        self._print_summary([f"correct: {report.accuracy}/{report.B}"])
        return 0

    def cmd_eval(self) -> int:
        args = self.args
        density = self.results.load_density(args.density)
        points = []
        if args.points is not None:
            points.append(parse_points(args.points))
        if args.query is not None:
            points.append(read_sample_file(args.query))
        x = np.concatenate(points)
        self.results.write_csv(evaluation_frame(density, x), args.out)
        return 0


def run(argv: Optional[List[str]] = None) -> int:
    try:
        config = Config()
    except ValueError as e:
        _emit_error('invalid_argument', f"bad environment setting: {e}")
        return USAGE_ERROR

    args = build_parser(config).parse_args(argv)
    setup_logging(level=args.log_level)
    logger = logging.getLogger('ModalFit')

    try:
        controller = ModalFitController(args, config)
        controller.validate_options()
    except ValueError as e:
        _emit_error('invalid_argument', str(e))
        return USAGE_ERROR

    try:
        return controller.dispatch()
    except ModalFitError as e:
        logger.error(f"❌ {e}")
        sys.stderr.write(json.dumps(e.to_dict()) + '\n')
        return RUNTIME_ERROR
    except UnicodeDecodeError as e:
        _emit_error('io_error', f"input is not UTF-8 text: {e}")
        return RUNTIME_ERROR
    except OSError as e:
        _emit_error('io_error', str(e))
        return RUNTIME_ERROR
    except Exception as e:
        logger.exception(f"💥 Unexpected failure: {e}")
        _emit_error('internal_error', f"{type(e).__name__}: {e}")
        return RUNTIME_ERROR
