# Solver and run configuration for holoweld
"""
Grid, solver, tower and ledger settings for every construction.
"""

import json
import logging
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from errors import ConfigurationError

logger = logging.getLogger(__name__)

load_dotenv(override=True)

# Grid resolution settings
GRID_DEFAULTS = {
    'window_nodes_per_unit': 8,  # h <= 1/(8C) for window and subharmonic fields
    'weld_nodes_per_unit': 32,  # h <= 1/(32C) for cutoffs and welds
    'weld_margin': 0.25,  # margin around the union of windows
    'window_margin': 1.0,  # margin around the union of windows for P-checks
    'patch_n': 257,  # samples per edge for patches on S_1
}

# Minimal-norm d-bar solver settings
SOLVER_DEFAULTS = {
    'degree': 16,  # polynomial degree of the holomorphic subspace
    'max_iterations': 8,  # defect-correction sweeps
    'tolerance': 1e-9,  # relative interior residual
    'lsqr_iterations': 400,  # polishing iterations when sweeps stall
    'coefficient_rtol': 1e-12,  # dropped polynomial coefficients
}

# Window construction settings
WINDOW_DEFAULTS = {
    'C': 8.0,
    'points': 'random:6',
    'extent': 10.0,  # half edge of the sampling box for random configurations
    'subharmonic_radius_nodes': 2.0,  # circle radius in grid spacings
    'tol_factor': 10.0,
}

# Gluing settings
GLUE_DEFAULTS = {
    'C': 8.0,
    'B': 10.0,
    'M': 400.0,
    'points': 'random:2',
    'extent': 3.0,
    'patch_degree': 3,
    'holomorphy_factor': 50.0,
    'e1_eps': 0.01,
    'stability': False,  # also weld at h/2 and compare the E1 cores
}

# Tower model settings
TOWER_DEFAULTS = {
    'D': 100.0,
    'levels': 3,
    'eps': 0.01,
    'placements': 1000,
    'classes': 2,
    'fibers_per_class': 4,
    'points_per_class': 6,
    'delta': 0.01,  # fineness of the partition of the top-level fibers, absolute units
}

# Inductive construction settings
CONSTRUCT_DEFAULTS = {
    'D': 100.0,
    'B': 10.0,
    'levels': 3,
    'desk': True,
    'ratio_override': 8.0,  # C_n used for welding in the desk regime
    'classes': 2,
    'fibers_per_class': 3,
    'points_per_class': 1,  # one weld point per class keeps the weld grid near 641 nodes per edge
    'patch_n': 129,  # samples per edge of each patch on S_1
    'modulus_n': 129,  # samples per edge for the modulus of continuity
    'degree': 4,  # polynomial degree of the welds; patches of the next level extrapolate it
    'jitter': 1e-7,
    'base_mass': 199.0 / 200.0,
    'M': None,  # per-level weld M, None for the hypothesis minimum
}

# Growth ledger settings
LEDGER_DEFAULTS = {
    'B': 20.0,
    'D': 100.0,
    'eps': 0.5,
    'mmax': 1e9,
    'grid': 'geometric',
    'points_per_decade': 20,
    'chunk': 2_000_000,
}


def get_thread_count() -> int:
    """Worker count capped by HOLOWELD_THREADS"""
    raw = os.getenv('HOLOWELD_THREADS')
    if raw is None or raw == '':
        return max(1, min(4, os.cpu_count() or 1))
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"expected a positive integer, got {raw!r}", path='HOLOWELD_THREADS')
    if value < 1:
        raise ConfigurationError(f"expected a positive integer, got {value}", path='HOLOWELD_THREADS')
    return value


PARALLELISM = {
    'max_workers': get_thread_count(),
    'ordered_merge': True,  # results always merged in submission order
}


@dataclass(frozen=True)
class SolverConfig:
    """Settings of the minimal-norm d-bar solve"""
    degree: int = SOLVER_DEFAULTS['degree']
    max_iterations: int = SOLVER_DEFAULTS['max_iterations']
    tolerance: float = SOLVER_DEFAULTS['tolerance']
    lsqr_iterations: int = SOLVER_DEFAULTS['lsqr_iterations']
    coefficient_rtol: float = SOLVER_DEFAULTS['coefficient_rtol']

    def __post_init__(self):
        if self.degree < 0:
            raise ConfigurationError(f"degree must be >= 0, got {self.degree}", path='solver.degree')
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1", path='solver.max_iterations')
        if not 0 < self.tolerance < 1:
            raise ConfigurationError("tolerance must lie in (0, 1)", path='solver.tolerance')
        if self.lsqr_iterations < 0:
            raise ConfigurationError("lsqr_iterations must be >= 0", path='solver.lsqr_iterations')

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> 'SolverConfig':
        data = dict(data or {})
        unknown = set(data) - set(SOLVER_DEFAULTS)
        if unknown:
            raise ConfigurationError(f"unknown keys {sorted(unknown)}", path='solver')
        return cls(**data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# Allowed keys and numeric ranges per command
_RANGES = {
    'windows': {'C': (1.0, None), 'extent': (0.0, None), 'tol_factor': (0.0, None),
                'subharmonic_radius_nodes': (2.0, None)},
    'shglue': {'C': (7.0, None), 'M': (0.0, None), 'extent': (0.0, None)},
    'glue': {'C': (1.0, None), 'B': (1.0, None), 'M': (0.0, None), 'extent': (0.0, None),
             'patch_degree': (0, 12), 'holomorphy_factor': (0.0, None), 'e1_eps': (0.0, None)},
    'towers': {'D': (0.0, None), 'levels': (2, 8), 'eps': (0.0, 1.0), 'placements': (1, None),
               'classes': (1, None), 'fibers_per_class': (1, None), 'points_per_class': (1, None),
               'delta': (0.0, None)},
    'construct': {'D': (0.0, None), 'B': (1.0, None), 'levels': (1, 4), 'ratio_override': (7.0, None),
                  'classes': (1, None), 'fibers_per_class': (1, None), 'points_per_class': (1, None),
                  'patch_n': (9, None), 'modulus_n': (9, None), 'degree': (0, 32), 'M': (0.0, None),
                  'jitter': (0.0, None), 'base_mass': (0.0, 1.0)},
    'ledger': {'B': (0.0, None), 'D': (0.0, None), 'eps': (0.0, None), 'mmax': (3, 1e10),
               'points_per_decade': (1, None), 'chunk': (1000, None)},
}

_DEFAULTS = {
    'windows': WINDOW_DEFAULTS,
    'shglue': {**GLUE_DEFAULTS, 'M': 5.0},
    'glue': GLUE_DEFAULTS,
    'towers': TOWER_DEFAULTS,
    'construct': CONSTRUCT_DEFAULTS,
    'ledger': LEDGER_DEFAULTS,
}


@dataclass
class RunConfig:
    """Validated parameters of one CLI command"""
    command: str
    seed: int = 0
    out_dir: Path = Path('output')
    timestamp: Optional[str] = None
    params: Dict[str, Any] = field(default_factory=dict)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.command not in _DEFAULTS:
            raise ConfigurationError(f"unknown command {self.command!r}", path='command')
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigurationError(f"seed must be a nonnegative integer, got {self.seed!r}", path='seed')
        defaults = _DEFAULTS[self.command]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ConfigurationError(f"unknown keys {sorted(unknown)}", path=self.command)
        for key, (lo, hi) in _RANGES[self.command].items():
            value = self.params.get(key, defaults.get(key))
            if value is None:
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigurationError(f"expected a number, got {value!r}", path=f"{self.command}.{key}")
            if lo is not None and value < lo:
                raise ConfigurationError(f"must be >= {lo}, got {value}", path=f"{self.command}.{key}")
            if hi is not None and value > hi:
                raise ConfigurationError(f"must be <= {hi}, got {value}", path=f"{self.command}.{key}")

    def get(self, key: str, default: Any = None) -> Any:
        if key in self.params:
            return self.params[key]
        return _DEFAULTS[self.command].get(key, default)

    def resolved(self) -> Dict[str, Any]:
        """Defaults merged with explicit parameters"""
        merged = dict(_DEFAULTS[self.command])
        merged.update(self.params)
        return merged


def load_config_file(path: Path) -> Dict[str, Any]:
    """Read a JSON config file, reporting parse failures with their location"""
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise ConfigurationError(f"file not found: {path}", path='config')
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}", path='config')
    if not isinstance(data, dict):
        raise ConfigurationError("top level must be an object", path='config')
    return data


def build_run_config(command: str, file_data: Optional[Dict[str, Any]] = None,
                     overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Merge a config file and CLI overrides into a validated RunConfig

    Args:
        command: Subcommand name
        file_data: Parsed --config file (may carry seed, out, timestamp, solver, params)
        overrides: Flags given on the command line (None values are ignored)

    Returns:
        Validated RunConfig
    """
    data = dict(file_data or {})
    flags = {k: v for k, v in (overrides or {}).items() if v is not None}

    params = dict(data.get(command, data.get('params', {})) or {})
    if not isinstance(params, dict):
        raise ConfigurationError("parameters must be an object", path=command)

    seed = flags.pop('seed', data.get('seed', 0))
    out_dir = Path(flags.pop('out', data.get('out', os.getenv('HOLOWELD_OUTPUT_DIR', 'output'))))
    timestamp = flags.pop('timestamp', data.get('timestamp'))
    solver = SolverConfig.from_dict(data.get('solver'))

    params.update(flags)
    logger.debug(f"Run config for {command}: {params}")
    return RunConfig(command=command, seed=seed, out_dir=out_dir, timestamp=timestamp,
                     params=params, solver=solver)
