"""capbound: certified upper bounds on the capacity of 2-D constrained systems."""

__version__ = "0.1.0"

from .constraint import (
    ConstraintSpec,
    ForbiddenWindow,
    is_valid,
    make_builtin,
    nib,
    rll,
    unconstrained,
    verify_symmetry,
)
from .lattice import (
    Configuration,
    IndexSet,
    entropy,
    order_compare,
    rect,
    restrict,
    shift,
    window_predecessors,
)
from .patches import MarginalMap, PatchSet, enumerate_patches, marginal_map
from .program import (
    ConcaveProgram,
    LinearSystem,
    assemble_program,
    build_linear_system,
    objective_gradient,
    objective_value,
)
from .scheme import (
    Scheme,
    SchemeTerm,
    derive_contexts,
    irs_scheme,
    simple_scheme,
    skip_scheme,
    validate_scheme,
)
from .simplex import LPProblem, LPResult, lp_maximize
from .solver import (
    SolveContext,
    SolveOptions,
    SolveResult,
    certify_bound,
    solve_concave,
)
from .stripe import (
    TransferGraph,
    build_transfer_graph,
    perron_eigenvalue,
    stripe_report,
    stripe_upper_bound,
)
