"""Differentiable-chemistry physics-informed solvers for stiff hydrogen
reaction systems, with classical stiff reference solvers for ground truth.
"""

__version__ = "0.1.0"

from . import autodiff
from . import chemistry
from . import oracle
from . import runio
from . import pinn

__all__ = ["autodiff", "chemistry", "oracle", "runio", "pinn", "__version__"]
