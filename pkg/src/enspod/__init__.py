"""Ensemble reduced-order modelling of incompressible flow with a POD
differential filter on the convection term."""
from ._accel import backend
from .errors import (
    Asymmetric,
    ConfigError,
    DegenerateEpsilon,
    EnsPodError,
    InvalidGeometry,
    InvariantViolation,
    ParseError,
    PhaseError,
    RankDeficient,
    SingularMatrix,
)

__version__ = "0.1.0"

__all__ = [
    "Asymmetric",
    "ConfigError",
    "DegenerateEpsilon",
    "EnsPodError",
    "InvalidGeometry",
    "InvariantViolation",
    "ParseError",
    "PhaseError",
    "RankDeficient",
    "SingularMatrix",
    "backend",
]
