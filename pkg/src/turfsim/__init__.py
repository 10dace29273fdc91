"""Finite-element simulation of two-gang territory formation.

Gangs u and v diffuse while drifting away from the rival's graffiti (w is
sprayed by v, z by u).  The package provides consistent-mass Galerkin,
order-preserving low-order, and flux-corrected (Zalesak-limited) time
stepping on structured bilinear meshes, plus the diagnostics and presets
for the standard segregation experiments.
"""

from .afc import (
    LimiterWorkspace,
    assemble_fluxes,
    build_artificial_diffusion,
    corrected_rhs_increment,
    low_order_operator,
    prelimit,
    zalesak_limit,
)
from .config import ConfigError, OutputToggles, RunConfig, parse_config, render_config
from .diagnostics import (
    ClassificationGrid,
    DiagonalSnapshot,
    LyapunovSample,
    SteadyStateReport,
    classify,
    detect_steady_state,
    diagonal_snapshot,
    lyapunov,
    overlap_measure,
    total_mass,
)
from .fem import (
    FeFunction,
    QuadratureRule,
    assemble_mass,
    assemble_rate_load,
    assemble_stiffness,
    assemble_transport,
    build_pattern,
    evaluate_gradient_at_quad,
    lump_mass,
)
from .mesh import Rectangle, StructuredQuadMesh, build_mesh, diagonal_nodes, node_neighbors
from .model import (
    Equilibrium,
    InitialCondition,
    ModelParams,
    RateFunction,
    RateKind,
    StateFields,
    apply_scaling,
    homogeneous_equilibrium,
)
from .presets import PRESETS, ExperimentPreset, execute_config, list_presets, run_preset
from .sparse import (
    SingularMatrixError,
    SolveFailure,
    SparseMatrix,
    SparsityPattern,
    dump_coordinate,
    is_diagonally_dominant,
    is_z_matrix,
    solve,
)
from .stepper import (
    DivergenceError,
    RunResult,
    Scheme,
    Simulator,
    StepReport,
    TimeConfig,
    advance,
    check_timestep_condition,
    run,
)

__version__ = "0.1.0"
