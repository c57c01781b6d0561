from . import ops
from .gradcheck import GradCheckReport, grad_check, relative_error
from .ops import cosine, cosine_value, matmul, softmax
from .tape import Matrix, Tape, active_tape, as_matrix

__all__ = [
    "GradCheckReport",
    "Matrix",
    "Tape",
    "active_tape",
    "as_matrix",
    "cosine",
    "cosine_value",
    "grad_check",
    "matmul",
    "ops",
    "relative_error",
    "softmax",
]
