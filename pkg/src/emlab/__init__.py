"""emlab: EM as a KL-regularized proximal method, with geometry and diagnostics."""

from . import bregman, diagnostics, em, expfam, experiments, geometry, numerics, proximal
from .errors import (
    ConfigError,
    DomainError,
    DualDomainError,
    EmlabError,
    InfeasibleError,
    ModelInconsistencyError,
    NonConvergenceError,
)

__version__ = "0.1.0"

__all__ = [
    "bregman",
    "diagnostics",
    "em",
    "expfam",
    "experiments",
    "geometry",
    "numerics",
    "proximal",
    "EmlabError",
    "DomainError",
    "DualDomainError",
    "NonConvergenceError",
    "InfeasibleError",
    "ModelInconsistencyError",
    "ConfigError",
]
