import math
from datetime import datetime
from typing import Any, Optional

import numpy as np

RNG_NAME = "numpy.PCG64"


def make_rng(seed: int) -> np.random.Generator:
    """Seeded 64-bit generator used for every random choice"""
    return np.random.Generator(np.random.PCG64(int(seed)))


def run_timestamp(fixed: Optional[str] = None) -> str:
    """Timestamp used in artifact names"""
    if fixed:
        return fixed
    return datetime.now().strftime('%Y%m%dT%H%M%S')


def log_cosh(t):
    """log cosh(t) without overflow"""
    a = np.abs(np.asarray(t, dtype=float))
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def log_of_log_sum(log_x: float, c: float) -> float:
    """log(c + x) where x = e^log_x may be far beyond the float range"""
    if c <= 0:
        return log_x
    return float(np.logaddexp(math.log(c), log_x))


def to_builtin(value: Any) -> Any:
    """Convert numpy scalars and non-finite floats to JSON-safe values"""
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_builtin(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, (complex, np.complexfloating)):
        return {'re': to_builtin(value.real), 'im': to_builtin(value.imag)}
    return value
