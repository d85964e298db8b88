"""dyknet: dual block-coordinate optimization over unreliable directed networks.

A library and CLI simulator for the push-sum style protocol in which nodes
broadcast mass/weight shares along directed edges, absorb delayed deliveries,
and perform dual block minimization steps (proximal or affine-minorant),
while tracking the dual surrogate objective and duality gap.
"""

from .graph import (
    DuplicateEdgeError,
    GraphError,
    GraphTopology,
    InvalidEdgeError,
    InvalidEndpointError,
    InvalidNodeError,
    NotStronglyConnectedError,
    SelfLoopError,
    build_topology,
    out_degree,
    out_neighbors,
)
from .objectives import (
    AffineFunction,
    DimensionMismatchError,
    NonPositiveScaleError,
    ObjectiveError,
    ObjectiveSpec,
    OutsideConjugateDomainError,
    PROXIMABLE,
    QuadraticFunction,
    SUBDIFFERENTIABLE,
    affine_objective,
    bundle_prox,
    conjugate_value,
    eval_objective,
    make_seeded_quadratic,
    prox,
    quadratic_objective,
    subgradient,
    tangent_minorant,
    zero_objective,
)
from .protocol import (
    NumericalInstabilityError,
    SimState,
    initialize,
    op_broadcast,
    op_deliver,
    op_local_min,
    primal_estimate,
)
from .metrics import (
    MetricsRecord,
    ReferenceSolution,
    SingularSystemError,
    consensus_residual,
    conservation_residuals,
    dual_surrogate,
    duality_gap,
    s_weighted_error,
    solve_centralized,
)
from .scheduler import (
    DeliveryWindowReport,
    InvariantViolationError,
    MetricsLog,
    SchedulePolicy,
    ScheduleEvent,
    TraceExhaustedError,
    broadcast,
    check_delivery_window,
    deliver,
    generate_round,
    load_trace,
    local_min,
    run,
    save_trace,
)
from .config import (
    ExperimentConfig,
    ParseError,
    ValidationError,
    build_policy,
    build_problem,
    build_state,
    emit_config,
    parse_config,
    two_cycle_preset,
)
from .kernels import NUMBA_ENABLED, backend_name

__version__ = "0.1.0"
