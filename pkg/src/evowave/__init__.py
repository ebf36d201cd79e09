"""Energy-conserving simulation of coupled elastic and acoustic waves.

The spatial operator is assembled from skew "mother" operators so that it is
skew by construction; the material law is a cellwise positive block diagonal
and time stepping uses the Cayley (Crank-Nicolson) map.
"""

from .evo import (
    CertificationError,
    SolverError,
    SourceTerm,
    StateVector,
    Trajectory,
    dense_expm_oracle,
    energy,
    pulse_source,
    run,
    solve_shifted,
    step_crank_nicolson,
)
from .grid import FieldLayout, Grid, Label, checkerboard_grid, half_space_grid
from .linop import BlockOperator, LinearOperator, adjoint_check, skew_defect
from .materials import (
    MaterialLaw,
    PositivityReport,
    RationalPositivityReport,
    assemble_M0,
    check_positivity_M0,
    check_positivity_rational,
    congruence_transform,
    isotropic_stiffness,
)
from .operators import (
    acoustic_operator,
    build_coupled_A,
    build_grad_dirichlet,
    descendant,
    elasticity_operator,
    mother,
    order_dependence_example,
    spatial_operator,
    weak_div,
)
from .transmission import (
    InterfaceFace,
    InterfaceResidualReport,
    classify_interface,
    normal_velocity_jump,
    reflection_benchmark,
    traction_balance_residual,
)

__version__ = "0.1.0"

__all__ = [
    "BlockOperator",
    "CertificationError",
    "FieldLayout",
    "Grid",
    "InterfaceFace",
    "InterfaceResidualReport",
    "Label",
    "LinearOperator",
    "MaterialLaw",
    "PositivityReport",
    "RationalPositivityReport",
    "SolverError",
    "SourceTerm",
    "StateVector",
    "Trajectory",
    "acoustic_operator",
    "adjoint_check",
    "assemble_M0",
    "build_coupled_A",
    "build_grad_dirichlet",
    "check_positivity_M0",
    "check_positivity_rational",
    "checkerboard_grid",
    "classify_interface",
    "congruence_transform",
    "dense_expm_oracle",
    "descendant",
    "elasticity_operator",
    "energy",
    "half_space_grid",
    "isotropic_stiffness",
    "mother",
    "normal_velocity_jump",
    "order_dependence_example",
    "pulse_source",
    "reflection_benchmark",
    "run",
    "skew_defect",
    "solve_shifted",
    "spatial_operator",
    "step_crank_nicolson",
    "traction_balance_residual",
    "weak_div",
]
