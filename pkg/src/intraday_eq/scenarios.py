"""Ready-made scenarios used by the verification suite and shipped as JSON.

The two agent-type mixes reproduce the published volatility illustrations;
the two-agent outage scenario reproduces the single-outage study. Horizons
for the mixes and the outage study were calibrated so the documented
qualitative shapes appear within the stated parameter ranges.
"""

from __future__ import annotations

from .model import AgentSpec, MarketScenario

__all__ = [
    "homogeneous",
    "two_agent_deterministic",
    "low_volatility",
    "table1_left_types",
    "table1_right_types",
    "table1_left",
    "table1_right",
    "two_agent_jump",
    "hetero_drift",
    "BUILTIN_BUILDERS",
]

DEFAULT_STEPS = 500


def homogeneous(steps: int = DEFAULT_STEPS) -> MarketScenario:
    """Two identical agents, unit friction and unit cost slope; zeta^2(0) = 0.5."""
    agent = dict(gamma=1.0, eta=2.0, cost_states=(2.0,), sigma_sq=1.0, sigma0_sq=0.0, rho=0.0)
    return MarketScenario(
        agents=(AgentSpec(d0=10.0, **agent), AgentSpec(d0=0.0, **agent)),
        horizon=1.0, grid_steps=steps,
    )


def two_agent_deterministic(steps: int = DEFAULT_STEPS) -> MarketScenario:
    """Perfect forecasts, demands (10, 0): price 5 and rates (5/3, -5/3) forever."""
    agent = dict(gamma=1.0, eta=2.0, cost_states=(2.0,))
    return MarketScenario(
        agents=(AgentSpec(d0=10.0, **agent), AgentSpec(d0=0.0, **agent)),
        horizon=1.0, grid_steps=steps,
    )


def low_volatility(steps: int = DEFAULT_STEPS) -> MarketScenario:
    """Homogeneous pair with tiny forecast noise; drift injections stand out."""
    agent = dict(gamma=1.0, eta=2.0, cost_states=(2.0,), sigma_sq=0.01, sigma0_sq=0.0, rho=0.0)
    return MarketScenario(
        agents=(AgentSpec(d0=10.0, **agent), AgentSpec(d0=0.0, **agent)),
        horizon=1.0, grid_steps=steps,
    )


def table1_left_types() -> tuple[AgentSpec, AgentSpec]:
    """The two agent types of the first volatility illustration (no common noise)."""
    type1 = AgentSpec(gamma=0.1, eta=5.0, cost_states=(10.0,),
                      sigma_sq=20.0, sigma0_sq=5.0, rho=0.0, d0=10.0)
    type2 = AgentSpec(gamma=100.0, eta=5.0, cost_states=(10.0,),
                      sigma_sq=0.0, sigma0_sq=0.0, rho=0.0, d0=10.0)
    return type1, type2


def table1_right_types() -> tuple[AgentSpec, AgentSpec]:
    """The second illustration's types: opposite exposure to the common noise."""
    type1 = AgentSpec(gamma=1.0, eta=5.0, cost_states=(2.0,),
                      sigma_sq=1.0, sigma0_sq=0.0, rho=1.0, d0=10.0)
    type2 = AgentSpec(gamma=1.0, eta=5.0, cost_states=(1.0,),
                      sigma_sq=0.1, sigma0_sq=10.0, rho=-1.0, d0=10.0)
    return type1, type2


MIX_HORIZON = 4.0


def table1_left(steps: int = DEFAULT_STEPS) -> MarketScenario:
    """One agent of each first-illustration type."""
    return MarketScenario(agents=table1_left_types(), horizon=MIX_HORIZON, grid_steps=steps)


def table1_right(steps: int = DEFAULT_STEPS) -> MarketScenario:
    return MarketScenario(agents=table1_right_types(), horizon=MIX_HORIZON, grid_steps=steps)


def two_agent_jump(lam: float = 0.2, steps: int = DEFAULT_STEPS) -> MarketScenario:
    """Single-outage study: stable mid-cost producer vs cheap producer at risk.

    Horizon 3 puts the buyer/seller switch of the at-risk agent inside
    intensities [0, 1].
    """
    agent1 = AgentSpec(gamma=1.0, eta=30.0, cost_states=(5.0,), d0=10.0)
    agent2 = AgentSpec(gamma=1.0, eta=30.0, cost_states=(0.1, 10.0), initial_state=0,
                       intensity=((-lam, lam), (0.0, 0.0)), d0=10.0)
    return MarketScenario(agents=(agent1, agent2), horizon=3.0, grid_steps=steps)


def hetero_drift(steps: int = DEFAULT_STEPS) -> MarketScenario:
    """Three heterogeneous deterministic agents with nonzero forecast drifts."""
    return MarketScenario(
        agents=(
            AgentSpec(gamma=0.5, eta=2.0, cost_states=(2.0,), mu=1.0, d0=10.0, x0=0.0),
            AgentSpec(gamma=2.0, eta=2.0, cost_states=(2.0,), mu=-1.0, d0=-3.0, x0=1.0),
            AgentSpec(gamma=1.3, eta=5.0, cost_states=(5.0,), mu=0.3, d0=4.0, x0=-2.0),
        ),
        horizon=2.0, grid_steps=steps,
    )


BUILTIN_BUILDERS = {
    "homogeneous": homogeneous,
    "two_agent_deterministic": two_agent_deterministic,
    "low_volatility": low_volatility,
    "table1_left": table1_left,
    "table1_right": table1_right,
    "two_agent_jump": two_agent_jump,
    "hetero_drift": hetero_drift,
}


def scenario_document(scenario: MarketScenario) -> dict:
    """JSON-ready document for a scenario (inverse of load_scenario)."""
    return {
        "horizon": scenario.horizon,
        "grid_steps": scenario.grid_steps,
        "agents": [
            {
                "gamma": a.gamma, "eta": a.eta, "mu": a.mu,
                "sigma_sq": a.sigma_sq, "sigma0_sq": a.sigma0_sq, "rho": a.rho,
                "d0": a.d0, "x0": a.x0,
                "cost_states": list(a.cost_states),
                "initial_state": a.initial_state,
                "intensity": [list(row) for row in a.intensity],
            }
            for a in scenario.agents
        ],
    }
