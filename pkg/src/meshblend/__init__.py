"""meshblend: concept-blending mesh deformation.

Per-face Jacobian fields are optimized through a differentiable Poisson
solve, guided by score distillation against a pluggable denoiser backend,
with weighted multi-concept activation blending and attention-derived
localized control.
"""

__version__ = "0.1.0"

from .mesh import Mesh, load_mesh, save_mesh
from .poisson import (
    GradientOperator,
    JacobianField,
    identity_mask_assign,
    jacobians_of_map,
    poisson_solve,
    poisson_solve_adjoint,
)

__all__ = [
    "Mesh",
    "load_mesh",
    "save_mesh",
    "GradientOperator",
    "JacobianField",
    "jacobians_of_map",
    "poisson_solve",
    "poisson_solve_adjoint",
    "identity_mask_assign",
    "__version__",
]
