"""Monte Carlo simulation of demand, outage, price, and inventory paths.

Demands use exact Gaussian increments (the forecast volatility is
deterministic, evaluated at the left node). Outage chains are sampled in
continuous time and projected onto the grid. Inventories follow the
equilibrium feedback rate with a forward-Euler update, so clearing holds
node by node up to roundoff.

Every path owns derived random streams (one for the common noise, one per
agent for idiosyncratic noise, one per agent for the outage chain), keyed by
``(master_seed, path, stream)``, so ensembles are bitwise reproducible no
matter how work is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import AgentSpec, MarketScenario, forecast_volatility
from .nojump import compute_weights, price as nojump_price, trading_rates
from .riccati import RiccatiTable, solve_all
from .jump import feedback_rates, two_agent_solve

__all__ = [
    "RngPlan",
    "Ensemble",
    "CostEstimate",
    "simulate_demands",
    "simulate_chains",
    "simulate_equilibrium",
    "evaluate_cost",
    "MODES",
]

MODES = ("nojump-closed-form", "two-agent-jump", "large-n-approx")

_COMMON_STREAM = 0


@dataclass(frozen=True)
class RngPlan:
    """Derives one independent random stream per (path, stream) pair."""

    master_seed: int

    def seed(self, path: int, stream: int) -> np.random.SeedSequence:
        return np.random.SeedSequence((self.master_seed, path, stream))

    def generator(self, path: int, stream: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed(path, stream)))

    def idiosyncratic_stream(self, agent: int) -> int:
        return 1 + agent

    def chain_stream(self, n_agents: int, agent: int) -> int:
        return 1 + n_agents + agent


@dataclass
class Ensemble:
    """Joint trajectories of one simulation run.

    Arrays are indexed (node, agent, path) except prices (node, path) and the
    common-noise increments (step, path). ``rates[k]`` is the feedback rate
    applied over [t_k, t_{k+1}); the last row holds the terminal-node rate.
    """

    scenario: MarketScenario
    mode: str
    demands: np.ndarray        # (K+1, N, P)
    chain_states: np.ndarray   # (K+1, N, P) int8
    inventories: np.ndarray    # (K+1, N, P)
    rates: np.ndarray          # (K+1, N, P)
    prices: np.ndarray         # (K+1, P)
    common_increments: np.ndarray  # (K, P)
    master_seed: int
    clearing_max: float

    @property
    def n_paths(self) -> int:
        return self.prices.shape[1]

    @property
    def grid_points(self) -> np.ndarray:
        return self.scenario.grid.points


def simulate_demands(scenario: MarketScenario, plan: RngPlan, n_paths: int):
    """Demand-forecast paths for every agent.

    Returns ``(demands, common_increments)`` with shapes (K+1, N, P) and
    (K, P). Increments use N(0, dt) noise scaled by the left-node
    volatility, so cross-agent increment correlation is rho_i*rho_j by
    construction.
    """
    grid = scenario.grid
    K, N = grid.steps, scenario.n_agents
    dt = grid.dt
    sqrt_dt = math.sqrt(dt)

    z0 = np.empty((K, n_paths))
    zi = np.empty((K, N, n_paths))
    for p in range(n_paths):
        z0[:, p] = plan.generator(p, _COMMON_STREAM).standard_normal(K)
        for i in range(N):
            zi[:, i, p] = plan.generator(p, plan.idiosyncratic_stream(i)).standard_normal(K)
    dW0 = z0 * sqrt_dt
    dWi = zi * sqrt_dt

    sig = np.stack([
        forecast_volatility(a, grid.points[:-1], scenario.horizon) for a in scenario.agents
    ], axis=1)  # (K, N)
    rho = np.array([a.rho for a in scenario.agents])
    mu = scenario.mus()

    incr = mu[None, :, None] * dt + sig[:, :, None] * (
        rho[None, :, None] * dW0[:, None, :]
        + np.sqrt(1.0 - rho**2)[None, :, None] * dWi
    )
    demands = np.empty((K + 1, N, n_paths))
    demands[0] = scenario.d0()[:, None]
    np.cumsum(incr, axis=0, out=demands[1:])
    demands[1:] += demands[0]
    return demands, dW0


def _sample_chain(agent: AgentSpec, rng: np.random.Generator, horizon: float):
    """Event times of one outage chain: list of (time, new_state)."""
    lam = agent.intensity_matrix()
    state = agent.initial_state
    t = 0.0
    events = []
    while True:
        rate = -lam[state, state]
        if rate <= 0.0:
            break
        t += rng.exponential(1.0 / rate)
        if t >= horizon:
            break
        weights = lam[state].clip(min=0.0)
        weights[state] = 0.0
        state = int(rng.choice(len(weights), p=weights / weights.sum()))
        events.append((t, state))
    return events


def _project_events(events, initial_state: int, points: np.ndarray) -> np.ndarray:
    states = np.full(points.shape[0], initial_state, dtype=np.int8)
    for t_event, new_state in events:
        states[points >= t_event] = new_state
    return states


def simulate_chains(scenario: MarketScenario, plan: RngPlan, n_paths: int) -> np.ndarray:
    """Outage-chain states at grid nodes, shape (K+1, N, P)."""
    grid = scenario.grid
    N = scenario.n_agents
    states = np.empty((grid.steps + 1, N, n_paths), dtype=np.int8)
    for i, agent in enumerate(scenario.agents):
        if not agent.has_jumps:
            states[:, i, :] = agent.initial_state
            continue
        for p in range(n_paths):
            rng = plan.generator(p, plan.chain_stream(N, i))
            events = _sample_chain(agent, rng, scenario.horizon)
            states[:, i, p] = _project_events(events, agent.initial_state, grid.points)
    return states


def simulate_equilibrium(scenario: MarketScenario, plan: RngPlan, n_paths: int,
                         mode: str = "nojump-closed-form",
                         tables: list[RiccatiTable] | None = None) -> Ensemble:
    """Simulate the joint equilibrium under the selected evaluator.

    Modes: ``nojump-closed-form`` (constant costs, zero drift),
    ``large-n-approx`` (any chain structure, coupling neglected), and
    ``two-agent-jump`` (exact single-outage two-agent solve per path).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose one of {MODES}")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if tables is None:
        tables = solve_all(scenario)
    grid = scenario.grid
    K, N = grid.steps, scenario.n_agents
    dt = grid.dt

    if mode == "two-agent-jump":
        return _simulate_two_agent(scenario, tables, plan, n_paths)

    demands, dW0 = simulate_demands(scenario, plan, n_paths)
    if mode == "nojump-closed-form":
        weights = compute_weights(scenario, tables)  # validates the preconditions
        chain_states = np.empty((K + 1, N, n_paths), dtype=np.int8)
        for i, a in enumerate(scenario.agents):
            chain_states[:, i, :] = a.initial_state
    else:
        chain_states = simulate_chains(scenario, plan, n_paths)

    inventories = np.empty((K + 1, N, n_paths))
    rates = np.empty((K + 1, N, n_paths))
    prices = np.empty((K + 1, n_paths))
    inventories[0] = scenario.x0()[:, None]

    epsilons = np.array([a.marginal_cost_slope() for a in scenario.agents])
    gammas = scenario.gammas()
    mus = scenario.mus()
    clearing_max = 0.0

    for k in range(K + 1):
        t = grid.points[k]
        D, X = demands[k], inventories[k]
        if mode == "nojump-closed-form":
            cps = epsilons[:, None] * (D - X)
            p = nojump_price(weights, cps, t)
            q = trading_rates(weights, cps, p, t)
        else:
            y2 = np.stack([
                tables[i].values[chain_states[k, i], k] for i in range(N)
            ])
            q, p = feedback_rates(gammas, mus, scenario.horizon, t, y2, D, X)
        rates[k] = q
        prices[k] = p
        clearing_max = max(clearing_max, float(np.max(np.abs(q.sum(axis=0)))))
        if k < K:
            inventories[k + 1] = X + q * dt

    return Ensemble(
        scenario=scenario, mode=mode, demands=demands, chain_states=chain_states,
        inventories=inventories, rates=rates, prices=prices,
        common_increments=dW0, master_seed=plan.master_seed,
        clearing_max=clearing_max,
    )


def _simulate_two_agent(scenario: MarketScenario, tables, plan: RngPlan,
                        n_paths: int) -> Ensemble:
    grid = scenario.grid
    K = grid.steps
    lam = scenario.agents[1].intensity[0][1]
    demands = np.empty((K + 1, 2, n_paths))
    for i, a in enumerate(scenario.agents):
        demands[:, i, :] = (a.d0 + a.mu * grid.points)[:, None]
    chain_states = np.zeros((K + 1, 2, n_paths), dtype=np.int8)
    inventories = np.empty((K + 1, 2, n_paths))
    rates = np.empty((K + 1, 2, n_paths))
    prices = np.empty((K + 1, n_paths))

    x01, x02 = scenario.agents[0].x0, scenario.agents[1].x0
    for p in range(n_paths):
        jump_time = None
        if lam > 0.0:
            rng = plan.generator(p, plan.chain_stream(2, 1))
            draw = rng.exponential(1.0 / lam)
            jump_time = draw if draw < scenario.horizon else None
        path = two_agent_solve(scenario, tables, jump_time)
        inventories[:, 0, p] = path.x1
        inventories[:, 1, p] = x02 + x01 - path.x1
        rates[:, 0, p] = path.rate1
        rates[:, 1, p] = -path.rate1
        prices[:, p] = path.price
        chain_states[:, 1, p] = path.state2

    return Ensemble(
        scenario=scenario, mode="two-agent-jump", demands=demands,
        chain_states=chain_states, inventories=inventories, rates=rates,
        prices=prices, common_increments=np.zeros((K, n_paths)),
        master_seed=plan.master_seed, clearing_max=0.0,
    )


@dataclass(frozen=True)
class CostEstimate:
    """Monte Carlo cost estimate with its standard error."""

    mean: float
    se: float
    per_path: np.ndarray


def evaluate_cost(scenario: MarketScenario, agent: int, ensemble: Ensemble,
                  rates: np.ndarray | None = None) -> CostEstimate:
    """Expected total cost of an agent under a given rate path.

    Trading cost is integrated with the trapezoid rule against the
    ensemble's price paths; the terminal penalty uses the terminal cost
    state per path. ``rates`` defaults to the agent's equilibrium rates and
    may be any (K+1, P) array sharing the ensemble's paths (the inventory is
    rebuilt from it with the same forward-Euler update).
    """
    spec = scenario.agents[agent]
    grid = scenario.grid
    dt = grid.dt
    q = ensemble.rates[:, agent, :] if rates is None else np.asarray(rates, dtype=float)
    if q.shape != ensemble.prices.shape:
        raise ValueError(f"rates must have shape {ensemble.prices.shape}")

    integrand = q * (ensemble.prices + spec.gamma * q)
    w = np.full(grid.steps + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    trading = w @ integrand

    x_terminal = spec.x0 + dt * np.sum(q[:-1], axis=0)
    residual = ensemble.demands[-1, agent, :] - x_terminal
    states = np.asarray(spec.cost_states)[ensemble.chain_states[-1, agent, :]]
    eps_T = spec.eta * states / (spec.eta + states)
    penalty = 0.5 * eps_T * residual**2

    per_path = trading + penalty
    mean = float(per_path.mean())
    se = float(per_path.std(ddof=1) / math.sqrt(len(per_path))) if len(per_path) > 1 else 0.0
    return CostEstimate(mean=mean, se=se, per_path=per_path)
