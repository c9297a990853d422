"""Physics-informed solvers for the stiff hydrogen reaction problems.

The subpackage splits into the network layer (dense nets over a flat
parameter vector), collocation sampling, the constrained prediction heads,
loss assembly, and the training/inference drivers.
"""

from .networks import MLP, BranchedNet
from .training import (RunConfig, train, infer_alpha, add_noise, metrics,
                       evaluate_run, TrainingError)

__all__ = [
    "MLP", "BranchedNet", "RunConfig", "train", "infer_alpha", "add_noise",
    "metrics", "evaluate_run", "TrainingError",
]
