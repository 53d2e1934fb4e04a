"""
JSON and CSV export of fitted densities, selection reports and benchmarks.

A fitted density is stored as its knots, weights and pieces, which is
enough to evaluate it exactly after loading; the exported curve is a
convenience for plotting and is ignored on load.
"""

import json
import logging
import os
import sys
from typing import Any, Dict, Mapping, Optional

import numpy as np
import pandas as pd

from src.density import KModalDensity, KnotVector, UnimodalPiece
from src.dynamic_programming import FitResult
from src.errors import MalformedDensityFile
from src.model_selection import SelectionReport
from src.simulation import BenchmarkReport, benchmark_summary

BENCHMARK_COLUMNS = [
    'replicate', 'seed', 'n_components', 'true_modes', 'chosen_K',
    'correct', 'stopped_reason', 'error',
]

logger = logging.getLogger('ModalFit')


def curve_frame(density: KModalDensity, resolution: int = 512) -> pd.DataFrame:
    """pdf and cdf on evenly spaced points covering the supports padded by 5%."""
    lo, hi = density.support_range()
    pad = 0.05 * (hi - lo)
    x = np.linspace(lo - pad, hi + pad, resolution)
    return evaluation_frame(density, x)


def evaluation_frame(density: KModalDensity, x) -> pd.DataFrame:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return pd.DataFrame({'x': x, 'pdf': density.pdf(x), 'cdf': density.cdf(x)})


def density_to_dict(density: KModalDensity, curve_resolution: Optional[int] = 512) -> Dict[str, Any]:
    payload = {
        'K': density.K,
        'knots': density.knots.interior.tolist(),
        'weights': density.weights.tolist(),
        'pieces': [
            {
                'support': [float(piece.support.lo), float(piece.support.hi)],
                'breakpoints': piece.breakpoints.tolist(),
                'heights': piece.heights.tolist(),
                'mode': piece.mode,
                'loglik': piece.loglik,
            }
            for piece in density.pieces
        ],
    }
    if curve_resolution:
        payload['curve'] = curve_frame(density, curve_resolution).to_numpy().tolist()
    return payload


def density_from_dict(payload: Mapping[str, Any]) -> KModalDensity:
    """Rebuild a density from `density_to_dict` output (or a fit or select document)."""
    if isinstance(payload, Mapping) and 'fit' in payload:
        payload = payload['fit']
    try:
        pieces = tuple(
            UnimodalPiece(
                breakpoints=np.asarray(piece['breakpoints'], dtype=float),
                heights=np.asarray(piece['heights'], dtype=float),
                mode=float(piece['mode']),
                loglik=float(piece.get('loglik', 0.0)),
            )
            for piece in payload['pieces']
        )
        return KModalDensity(
            knots=KnotVector(np.asarray(payload['knots'], dtype=float)),
            weights=np.asarray(payload['weights'], dtype=float),
            pieces=pieces,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedDensityFile(f"not a valid density document: {e}") from e


def fit_result_to_dict(result: FitResult, curve_resolution: Optional[int] = 512) -> Dict[str, Any]:
    return {
        **density_to_dict(result.density, curve_resolution),
        'M': result.M,
        'fitter': result.fitter,
        'loglik': result.loglik,
        'negative_loglik': result.negative_loglik,
        'coarse_loglik': result.coarse_loglik,
        'refined': result.refined,
        'snapped': result.snapped,
        'grid': result.grid.points.tolist() if result.grid is not None else [],
    }


def selection_report_to_dict(report: SelectionReport) -> Dict[str, Any]:
    return {
        'chosen_K': report.chosen_K,
        'method': report.method,
        'stopped_reason': report.stopped_reason,
        'per_K': report.per_K,
        'config': report.config.to_dict(),
    }


def benchmark_frame(report: BenchmarkReport) -> pd.DataFrame:
    return pd.DataFrame(report.rows, columns=BENCHMARK_COLUMNS)


class ResultsManager:
    """Writes command outputs; a missing path means standard output."""

    def __init__(self, curve_resolution: int = 512):
        self.curve_resolution = curve_resolution
        self.logger = logging.getLogger('ModalFit')

    def write_json(self, payload: Dict[str, Any], path: Optional[str] = None):
        text = json.dumps(payload, indent=2) + '\n'
        if path is None:
            sys.stdout.write(text)
            return
        self._ensure_parent(path)
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write(text)
        self.logger.info(f"💾 Saved {path}")

    def write_csv(self, frame: pd.DataFrame, path: Optional[str] = None):
        if path is None:
            frame.to_csv(sys.stdout, index=False, lineterminator='\n')
            return
        self._ensure_parent(path)
        frame.to_csv(path, index=False, lineterminator='\n')
        self.logger.info(f"💾 Saved {path}")

    def save_fit(self, result: FitResult, path: Optional[str] = None):
        self.write_json(fit_result_to_dict(result, self.curve_resolution), path)

    def save_curve(self, density: KModalDensity, path: str):
        self.write_csv(curve_frame(density, self.curve_resolution), path)

    def save_selection(self, report: SelectionReport, refit: FitResult, path: Optional[str] = None):
        self.write_json({
            'selection': selection_report_to_dict(report),
            'fit': fit_result_to_dict(refit, self.curve_resolution),
        }, path)

    def save_benchmark(self, report: BenchmarkReport, path: Optional[str] = None):
        """JSON summary at `path` and the per-replicate CSV beside it."""
        summary = benchmark_summary(report)
        if path is None:
            self.write_json({'summary': summary, 'replicates': report.rows})
            return
        self.write_json(summary, path)
        self.write_csv(benchmark_frame(report), os.path.splitext(path)[0] + '.csv')

    def load_density(self, path: str) -> KModalDensity:
        try:
            with open(path, encoding='utf-8') as handle:
                payload = json.load(handle)
        except json.JSONDecodeError as e:
            raise MalformedDensityFile(f"{path} is not valid JSON: {e}") from e
        return density_from_dict(payload)

    @staticmethod
    def _ensure_parent(path: str):
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
