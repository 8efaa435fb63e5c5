"""Small reverse-mode autodiff engine over numpy arrays."""

from seqstruct.diffcore import ops
from seqstruct.diffcore.checkpoint import load_checkpoint, save_checkpoint
from seqstruct.diffcore.gradcheck import grad_check
from seqstruct.diffcore.optim import Adam
from seqstruct.diffcore.tensor import NonFiniteError, ShapeError, Tensor, no_grad

__all__ = [
    "Adam",
    "NonFiniteError",
    "ShapeError",
    "Tensor",
    "grad_check",
    "load_checkpoint",
    "no_grad",
    "ops",
    "save_checkpoint",
]
