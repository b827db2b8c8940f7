"""Phase-space analysis of rotationally symmetric shrinking Ricci solitons."""

__version__ = "0.1.0"

from .phase_core import (  # noqa: E402
    DomainError,
    LocalState,
    PhasePoint,
    SolitonParams,
    phi,
)
from .integrate import Termination, Tolerances, Trajectory, integrate, integrate_both  # noqa: E402

__all__ = [
    "__version__",
    "DomainError",
    "LocalState",
    "PhasePoint",
    "SolitonParams",
    "phi",
    "Termination",
    "Tolerances",
    "Trajectory",
    "integrate",
    "integrate_both",
]
