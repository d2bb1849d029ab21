"""Gradient low-rank projection at desk scale.

The optimizer keeps its stateful moments in a compact subspace spanned by
the leading singular directions of the current gradient, refreshing that
subspace on a fixed schedule, so full-parameter training runs with
adaptor-free low-rank optimizer memory. Alongside the optimizers the
package ships numerical checks of the underlying theory (gradients of
chained reversible nets, stable-rank decay, fixed-subspace contraction)
and symbolic/numeric memory accounting.
"""

from . import harness, linalg, memory, models, optim, theory
from .projector import Projector

__all__ = [
    "harness", "linalg", "memory", "models", "optim", "theory", "Projector",
]

__version__ = "0.1.0"
