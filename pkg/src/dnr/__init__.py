"""Distribution network reconfiguration: model, power flow, loss-driven switching."""

from .caseio import (
    ParseError,
    ValidationError,
    parse_case,
    trace_to_json,
    write_native_case,
    write_report,
)
from .exchange import (
    InitialInfeasibleError,
    Move,
    RejectReason,
    Rejection,
    SearchOptions,
    SearchTrace,
    SurrogateMode,
    evaluate_candidate,
    improve,
)
from .model import (
    Branch,
    Bus,
    BusKind,
    Configuration,
    ConfigurationError,
    Island,
    NetworkCase,
    NotRadialError,
    SwitchState,
    Violation,
    all_closed_config,
    config_from_states,
    default_config,
    is_radial,
    islands,
    make_config,
    validate_case,
)
from .objective import (
    ConstraintCheck,
    ObjectiveReport,
    compare,
    evaluate_fo,
    sort_key,
)
from .powerflow import (
    BranchFlow,
    IslandResult,
    NotConvergedError,
    PowerFlowSolution,
    SingularBranchError,
    SolverOptions,
    branch_flows,
    build_admittance,
    solve_all_islands,
    solve_gauss_seidel,
    solve_network,
    solve_newton_raphson,
)
from .surrogate import (
    FeatureVector,
    LinearModel,
    featurize,
    fit,
    model_from_json,
    model_to_json,
    rank_candidates,
)
from .topology import (
    ForestBuildResult,
    FundamentalLoop,
    UnreachableError,
    adjacent_switches,
    build_spanning_forest,
    fundamental_loop,
    weights_from_flow,
)

__version__ = "0.1.0"
