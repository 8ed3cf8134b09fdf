"""Relaxation dynamics view of neural forward passes with ADR weight kernels."""
from .field import (
    Activation,
    Boundary,
    Field,
    Grid1D,
    GridMismatchError,
    apply_activation,
    loss_distance,
    make_uniform_grid,
    norm,
    norm_sq,
)
from .kernels import (
    ContinuumKernel,
    DenseKernel,
    ExplainReport,
    MomentProfile,
    TridiagonalKernel,
    assemble_adr_stencil,
    assemble_heterogeneous_adr,
    capacity_report,
    explain_kernel,
    identity_kernel,
    kernel_moments,
    moment_convergence_scan,
    sample_continuum_kernel,
)
from .dynamics import (
    AttractorResult,
    DivergenceError,
    RelaxConfig,
    Trajectory,
    evolve,
    find_attractor,
    liouvillean_residual,
    local_equilibrium,
    relaxation_step,
    weight_transform,
)
from .discretize import (
    BasisKind,
    ClusterSet,
    QuadratureRule,
    build_cluster_set,
    cluster_equilibrium,
    delta_basis_sample,
    gauss_legendre_rule,
    quadrature_update,
    sample_quadrature_tensors,
)
from .training import (
    ADRParams,
    GradientMode,
    ParamMode,
    TrainConfig,
    TrainResult,
    fit,
    gradient,
    parameter_count,
    running_loss,
    terminal_loss,
)

__version__ = "0.1.0"
