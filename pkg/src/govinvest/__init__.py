"""Government investment, location dynamics and new business creation."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    ConvergenceError,
    DomainError,
    InfeasibleError,
    ModelError,
    ParameterError,
    SimulationError,
)
from .model_core import (  # noqa: E402
    DEFAULT_CALIBRATION,
    NO_NET_CREATION,
    EconomyState,
    FunctionalForms,
    ModelParams,
    adjustment_cost,
    business_creation,
    creative_destruction,
    labor_aggregate,
    marginal_adjustment_cost,
    production,
    production_gradient,
)
from .dynamics import (  # noqa: E402
    LocationMapConfig,
    Trajectory,
    capital_step,
    immigration_steady_state,
    immigration_step,
    location_step,
    simulate,
)
from .equilibrium import (  # noqa: E402
    Closure,
    LeaderEquilibrium,
    SteadyState,
    compare_regimes,
    follower_G,
    leader_G,
    solve_follower,
    solve_leader,
)
from .transcription import FocResiduals, finite_horizon_optimize  # noqa: E402
from .analysis import (  # noqa: E402
    FixedPoint,
    SignTable,
    classify_stability,
    cobweb,
    comparative_statics,
    find_fixed_points,
)
from .econometrics import (  # noqa: E402
    RegressionResult,
    SyntheticCrossSection,
    generate_cross_section,
    misspecification_report,
    ols,
)
from .scenario import Scenario, parse_scenario  # noqa: E402
