"""Equilibrium pricing, simulation, and verification for an intraday power market."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    AgentSpec,
    MarketScenario,
    ScenarioError,
    TimeGrid,
    forecast_volatility,
    load_scenario,
    optimal_production,
)
from .riccati import (  # noqa: F401
    RiccatiTable,
    a_coefficient,
    closed_form_y2,
    discount_curve,
    jump_sizes,
    solve_all,
    solve_riccati,
    y2_at,
)
from .nojump import (  # noqa: F401
    WeightCurves,
    compute_weights,
    decompose_price,
    price,
    trading_rate,
    volatility_curve,
)
from .jump import (  # noqa: F401
    MatrixState,
    invert_rank_one,
    large_n_price,
    price_general,
    rate_general,
    two_agent_ell,
    two_agent_solve,
    x_drift_general,
    y1_vector,
)
from .pathsim import (  # noqa: F401
    Ensemble,
    RngPlan,
    evaluate_cost,
    simulate_chains,
    simulate_demands,
    simulate_equilibrium,
)
from .analysis import (  # noqa: F401
    classify_monotonicity,
    lambda_sweep,
    martingale_test,
    realized_volatility,
    samuelson_sweep,
)
from .oracle import (  # noqa: F401
    DiscreteGame,
    convergence_report,
    game_from_scenario,
    solve_discrete_equilibrium,
)
