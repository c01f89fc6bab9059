"""Von Karman rod toolkit.

Subpackages cover the stored-energy model (`material`), cross-section meshes
and cell problems (`mesh2d`, `cell`), the clamped 1D rod spaces and static
solves (`rod1d`), conservative time integration (`dynamics`), rescaling
diagnostics for 3D deformation fields (`rescale`) and the JSON/CSV pipeline
(`config`, `cli`).
"""

from .material import MaterialModel, isotropic_hooke
from .mesh2d import CrossSectionMesh, generate_mesh, load_mesh, normalize, refine, save_mesh
from .cell import (
    CorrectorBasis,
    EffectiveStiffness,
    effective_stiffness,
    solve_correctors,
    stress_and_moments,
)

__all__ = [
    "MaterialModel",
    "isotropic_hooke",
    "CrossSectionMesh",
    "generate_mesh",
    "load_mesh",
    "normalize",
    "refine",
    "save_mesh",
    "CorrectorBasis",
    "EffectiveStiffness",
    "effective_stiffness",
    "solve_correctors",
    "stress_and_moments",
]
