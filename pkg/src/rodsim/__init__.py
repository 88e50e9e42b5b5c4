"""Two-robot rod transport with implicit communication through shared dynamics."""

from rodsim.dynamics import RodParams, eval_dynamics, euler_substep

__all__ = ["RodParams", "eval_dynamics", "euler_substep"]
__version__ = "0.1.0"
