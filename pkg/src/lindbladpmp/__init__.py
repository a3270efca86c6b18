"""Coherence-constrained quantum state-transfer optimization for Markovian
open systems: Lindblad propagation, Uhlmann fidelity, adjoint (costate)
dynamics with constraint multipliers, and an indirect grid-maximization
solver, instantiated on a driven three-level Lambda atom."""

from .constraints import (
    CoherenceSpec,
    MultiplierTrack,
    build_multiplier_track,
    coherence,
    coherence_gradient,
    coherence_squared,
    constraint_values,
    update_multipliers,
)
from .costate import (
    AdjointGenerator,
    adjoint_generator,
    adjoint_rhs,
    control_gradient,
    d0,
    g_operator,
    propagate_backward,
)
from .dynamics import (
    HamiltonianModel,
    LindbladChannel,
    check_density_matrix,
    dissipator,
    liouvillian,
    master_rhs,
    propagate_forward,
)
from .errors import (
    ConfigError,
    ConstraintError,
    DegenerateSpectrumError,
    DimensionError,
    LindbladPMPError,
    NotPositiveSemidefiniteError,
    PropagationError,
)
from .fidelity import (
    TargetState,
    TerminalGradient,
    fidelity,
    fidelity_trace_norm,
    terminal_costate,
)
from .lambda_atom import LambdaAtomModel, default_problem, target_state
from .linalg import (
    cayley_hamilton_sqrt_coeffs,
    devectorize,
    hermitian_sqrt,
    kron,
    matrix_exponential,
    vectorize,
)
from .solver import (
    ControlGrids,
    ControlSchedule,
    Problem,
    SolveReport,
    SolverConfig,
    maximize_hamiltonian,
    pontryagin_hamiltonian,
    solve,
)

__version__ = "0.1.0"
