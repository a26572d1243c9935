"""
Configuration management for the fairness inference project.
Holds estimator and learner defaults, output locations and environment overrides.
"""

import os
import json
import itertools
from pathlib import Path
from typing import Dict, Any, List

from .errors import ConfigError


class Config:
    """Project-wide defaults, overridable through environment variables"""

    def __init__(self):
        self.project_root = Path(__file__).parent.parent.parent
        self.data_dir = self.project_root / "data"
        self.output_dir = Path(os.getenv('FAIRTL_OUTPUT_DIR', str(self.project_root / "outputs")))

        self.runtime_config = {
            'threads': int(os.getenv('FAIRTL_THREADS', '1')),
            'seed': 20250101,
        }

        # Estimator settings
        self.estimator_config = {
            'threshold': 0.5,
            'level': 0.95,
            'propensity_clip': 1e-3,
            'probability_floor': 1e-6,
            'truncation_warning_fraction': 0.05,
            'calibration_fraction': 0.25,
            'min_calibration_rows': 50,
            'knn_neighbors': 5,
        }

        # Learner defaults
        self.learner_config = {
            'ridge': 1e-6,
            'max_iter': 100,
            'tol': 1e-10,
            'n_estimators': 200,
            'max_depth': 3,
            'learning_rate': 0.1,
            'subsample': 1.0,
            'cv_folds': 5,
            'candidates': ['constant', 'logistic', 'gbt'],
            'min_rows': 10,
        }

        self.split_config = {
            'real_data_ratio': 0.6,
            'simulation_ratio': 0.5,
        }

        self.simulation_config = {
            'n_mc': 1_000_000,
            'replicates': 100,
            'shapley_permutations': 20,
        }

    def get_threads(self) -> int:
        """Default worker count, never below one"""
        return max(1, self.runtime_config['threads'])

    def validate_directories(self):
        """Ensure all required directories exist"""
        directories = [
            self.data_dir / "raw",
            self.output_dir / "reports",
            self.output_dir / "studies",
        ]

        for directory in directories:
            directory.mkdir(parents=True, exist_ok=True)

    def as_dict(self) -> Dict[str, Any]:
        return {
            'runtime': dict(self.runtime_config),
            'estimator': dict(self.estimator_config),
            'learner': dict(self.learner_config),
            'split': dict(self.split_config),
            'simulation': dict(self.simulation_config),
        }

    def save_config(self, filename: str = "config.json") -> Path:
        """Save resolved defaults to file"""
        safe_config = self.as_dict()
        safe_config['directories'] = {
            'data': str(self.data_dir),
            'output': str(self.output_dir),
        }

        config_path = self.output_dir / filename
        config_path.parent.mkdir(parents=True, exist_ok=True)
        with open(config_path, 'w') as f:
            json.dump(safe_config, f, indent=2, sort_keys=True)
        return config_path


def load_study_config(path: Path) -> Dict[str, Any]:
    """
    Read a declarative study file and expand its grid into cells.

    The file is JSON with scalar settings and a ``grid`` mapping each axis
    (``dgp``, ``metric``, ``estimator``, ``n``) to a list of values.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Study config not found: {path}")
    with open(path, 'r') as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Study config {path} is not valid JSON: {e}") from e

    grid = raw.get('grid')
    if not isinstance(grid, dict):
        raise ConfigError("Study config needs a 'grid' object")
    missing = [axis for axis in ('dgp', 'metric', 'n') if axis not in grid]
    if missing:
        raise ConfigError(f"Study grid is missing axes: {missing}")

    resolved = {
        'master_seed': int(raw.get('master_seed', config.runtime_config['seed'])),
        'replicates': int(raw.get('replicates', config.simulation_config['replicates'])),
        'n_mc': int(raw.get('n_mc', config.simulation_config['n_mc'])),
        'split_ratio': float(raw.get('split_ratio', config.split_config['simulation_ratio'])),
        'level': float(raw.get('level', config.estimator_config['level'])),
        'threads': int(raw.get('threads', config.get_threads())),
        'grid': grid,
    }
    resolved['cells'] = expand_grid(grid)
    return resolved


def expand_grid(grid: Dict[str, List[Any]]) -> List[Dict[str, Any]]:
    """Cartesian product of the grid axes, in a fixed axis order"""
    estimators = grid.get('estimator') or [{}]
    cells = []
    for dgp, metric, estimator, n in itertools.product(grid['dgp'], grid['metric'], estimators, grid['n']):
        cells.append({'dgp': dgp, 'metric': metric, 'estimator': estimator, 'n': int(n)})
    return cells


# Global config instance
config = Config()
