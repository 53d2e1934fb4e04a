import os
from dotenv import load_dotenv
from typing import Any, Dict, Optional

# Load environment variables
load_dotenv()

FITTER_KINDS = ('grenander_mle', 'histogram_unimodal')
SELECTION_METHODS = ('fit_measure', 'cross_validation')


def _env_flag(name: str, default: str = 'False') -> bool:
    return os.getenv(name, default).strip().lower() in ('1', 'true', 'yes')


def _env_optional_int(name: str) -> Optional[int]:
    raw = os.getenv(name, '').strip()
    return int(raw) if raw else None


class Config:
    """
    Centralized configuration for the modal density fitting tool.
    Every default can be overridden through the environment or a .env file.
    """

    def __init__(self):
        self.load_config()

    def load_config(self):
        """Load all configuration settings from environment variables"""

        # Unimodal fitter
        self.DEFAULT_FITTER = os.getenv('MODALFIT_FITTER', 'histogram_unimodal')
        self.HISTOGRAM_BINS = _env_optional_int('MODALFIT_HISTOGRAM_BINS')
        self.MODE_CANDIDATES = int(os.getenv('MODALFIT_MODE_CANDIDATES', 32))
        self.MIN_POINTS = int(os.getenv('MODALFIT_MIN_POINTS', 2))

        # Knot search
        self.GRID_FACTOR = int(os.getenv('MODALFIT_GRID_FACTOR', 5))
        self.MULTIGRID_L = int(os.getenv('MODALFIT_MULTIGRID_L', 5))

        # Selection of K
        self.TAU = float(os.getenv('MODALFIT_TAU', 0.01))
        self.FOLDS = int(os.getenv('MODALFIT_FOLDS', 5))
        self.IMPROVEMENT = float(os.getenv('MODALFIT_IMPROVEMENT', 0.01))
        self.K_MAX = int(os.getenv('MODALFIT_K_MAX', 5))
        self.COARSE_L = int(os.getenv('MODALFIT_COARSE_L', 3))

        # Reproducibility and execution
        self.SEED = int(os.getenv('MODALFIT_SEED', 0))
        self.N_JOBS = int(os.getenv('MODALFIT_N_JOBS', 1))
        self.CURVE_RESOLUTION = int(os.getenv('MODALFIT_CURVE_RESOLUTION', 512))

        # Logging
        self.LOG_LEVEL = os.getenv('MODALFIT_LOG_LEVEL', 'INFO').upper()
        self.LOG_TO_FILE = _env_flag('MODALFIT_LOG_TO_FILE')

        # File Paths
        self.BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        self.DATA_DIR = os.path.join(self.BASE_DIR, 'data')
        self.LOG_DIR = os.path.join(self.DATA_DIR, 'logs')
        self.FAITHFUL_PATH = os.path.join(self.DATA_DIR, 'faithful_waiting.csv')
        self.THREE_GAUSSIANS_PATH = os.path.join(self.DATA_DIR, 'three_gaussians.csv')

        self.validate()

        if self.LOG_TO_FILE:
            self.ensure_directories()

    def validate(self):
        """Reject settings the fitting code cannot honour"""
        if self.DEFAULT_FITTER not in FITTER_KINDS:
            raise ValueError(f"MODALFIT_FITTER must be one of {FITTER_KINDS}, got '{self.DEFAULT_FITTER}'")
        if self.HISTOGRAM_BINS is not None and self.HISTOGRAM_BINS < 2:
            raise ValueError("MODALFIT_HISTOGRAM_BINS must be at least 2")
        if self.MODE_CANDIDATES < 1 or self.MIN_POINTS < 1:
            raise ValueError("MODALFIT_MODE_CANDIDATES and MODALFIT_MIN_POINTS must be positive")
        if self.GRID_FACTOR < 1 or self.MULTIGRID_L < 1 or self.COARSE_L < 1:
            raise ValueError("grid factor and subgrid sizes must be positive")
        if not 0 <= self.TAU <= 1:
            raise ValueError("MODALFIT_TAU must lie in [0, 1]")
        if not 0 < self.IMPROVEMENT < 1:
            raise ValueError("MODALFIT_IMPROVEMENT must lie in (0, 1)")
        if self.FOLDS < 2:
            raise ValueError("MODALFIT_FOLDS must be at least 2")
        if self.K_MAX < 1:
            raise ValueError("MODALFIT_K_MAX must be at least 1")
        if self.CURVE_RESOLUTION < 2:
            raise ValueError("MODALFIT_CURVE_RESOLUTION must be at least 2")

    def ensure_directories(self):
        """Create necessary directories if they don't exist"""
        for directory in [self.DATA_DIR, self.LOG_DIR]:
            os.makedirs(directory, exist_ok=True)

    @property
    def fitter_defaults(self) -> Dict[str, Any]:
        """Keyword arguments for FitterSpec"""
        return {
            'kind': self.DEFAULT_FITTER,
            'histogram_bins': self.HISTOGRAM_BINS,
            'mode_candidates_per_interval': self.MODE_CANDIDATES,
            'min_points': self.MIN_POINTS,
        }

    @property
    def selection_defaults(self) -> Dict[str, Any]:
        """Keyword arguments for SelectionConfig (method excluded)"""
        return {
            'tau': self.TAU,
            'folds': self.FOLDS,
            'improvement': self.IMPROVEMENT,
            'k_max': self.K_MAX,
            'coarse_L': self.COARSE_L,
            'seed': self.SEED,
            'grid_factor': self.GRID_FACTOR,
            'n_jobs': self.N_JOBS,
        }

    @property
    def multigrid_defaults(self) -> Dict[str, Any]:
        """Keyword arguments for MultiGridConfig"""
        return {'L': self.MULTIGRID_L, 'r': None}

    def default_grid_size(self, k: int) -> int:
        return self.GRID_FACTOR * k


# Global configuration instance
config = Config()
