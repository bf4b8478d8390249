"""
Exception types shared by the holoweld modules
Check failures are report entries, not exceptions
"""
from typing import List, Optional


class ConfigurationError(ValueError):
    """Invalid run configuration or point configuration"""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ResolutionError(ValueError):
    """Grid too coarse for the requested operation"""


class HypothesisError(ValueError):
    """A construction hypothesis does not hold at the chosen parameters"""


class PatchInputError(ValueError):
    """Patch fields violate sign, bound or holomorphy requirements"""


class GeometryError(ValueError):
    """Supports or windows overlap where they must be separated"""


class EvaluationError(ValueError):
    """A sampled function produced a non-finite value"""


class CoverError(ValueError):
    """A cover does not contain every point it must cover"""


class DbarSolverError(RuntimeError):
    """The d-bar solve did not reach its residual tolerance"""

    def __init__(self, message: str, history: List[float]):
        self.history = list(history)
        super().__init__(f"{message} (residual history: {', '.join(f'{r:.3e}' for r in self.history)})")
