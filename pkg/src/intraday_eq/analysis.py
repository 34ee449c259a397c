"""Statistical verification of the model's structural claims.

Covers the martingale drift tests for prices and rates, realized-volatility
estimation against the analytic curve, the volatility-shape sweep over agent
mixes, and the outage-probability sweep for the two-agent case. All sweep
outputs are deterministic given the scenario; only the drift and volatility
tests consume simulated ensembles.

The pooled drift statistic standardizes each node's mean increment by its
standard error and averages the per-node z-scores with a 1/sqrt(K) scaling,
so it is standard normal under the martingale null (increments across nodes
are uncorrelated).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .model import AgentSpec, MarketScenario
from .nojump import compute_weights, volatility_curve
from .pathsim import Ensemble
from .riccati import solve_all
from .jump import two_agent_solve

__all__ = [
    "EnsembleStats",
    "MartingaleReport",
    "RealizedVolatility",
    "AlphaSweepPoint",
    "LambdaSweepPoint",
    "ensemble_stats",
    "martingale_test",
    "realized_volatility",
    "samuelson_sweep",
    "lambda_sweep",
    "classify_monotonicity",
    "is_concave",
    "mixed_market",
    "inject_price_drift",
    "inject_rate_drift",
    "worker_count",
]

_DEGENERATE_SD = 1e-14


def worker_count() -> int:
    """Worker cap for sweep parallelism, from INTRADAY_EQ_THREADS."""
    env = os.environ.get("INTRADAY_EQ_THREADS", "")
    try:
        n = int(env)
    except ValueError:
        n = 0
    return max(1, n) if n > 0 else max(1, os.cpu_count() or 1)


@dataclass(frozen=True)
class EnsembleStats:
    """Cross-path statistics per grid node plus per-path terminal diagnostics."""

    drift_mean: np.ndarray       # (K,) mean price increment per node
    drift_se: np.ndarray         # (K,)
    qv_rate: np.ndarray          # (K,) realized quadratic-variation rate
    clearing_max: float
    terminal_residuals: np.ndarray  # (N, P) demand minus inventory at delivery

    def __post_init__(self) -> None:
        if np.any(self.drift_se < 0) or not np.all(np.isfinite(self.drift_mean)):
            raise ValueError("ensemble statistics must be finite with non-negative errors")


def ensemble_stats(ensemble: Ensemble) -> EnsembleStats:
    dp = np.diff(ensemble.prices, axis=0)
    n = dp.shape[1]
    dt = ensemble.scenario.grid.dt
    se = dp.std(axis=1, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(dp.shape[0])
    return EnsembleStats(
        drift_mean=dp.mean(axis=1),
        drift_se=se,
        qv_rate=(dp**2).mean(axis=1) / dt,
        clearing_max=ensemble.clearing_max,
        terminal_residuals=ensemble.demands[-1] - ensemble.inventories[-1],
    )


@dataclass(frozen=True)
class MartingaleReport:
    """Drift z-statistics for the price and each agent's rate."""

    node_z_price: np.ndarray
    pooled_z_price: float
    pooled_z_rates: np.ndarray  # (N,)
    degenerate_price: bool
    degenerate_rates: np.ndarray  # (N,) bool

    def passed(self, bound: float = 3.0) -> bool:
        ok_price = self.degenerate_price or abs(self.pooled_z_price) < bound
        ok_rates = np.all(self.degenerate_rates | (np.abs(self.pooled_z_rates) < bound))
        return bool(ok_price and ok_rates)


def _pooled_z(increments: np.ndarray) -> tuple[np.ndarray, float, bool]:
    """Per-node and pooled z for (K, P) increments; flags degenerate variance."""
    n = increments.shape[1]
    sd = increments.std(axis=1, ddof=1)
    live = sd > _DEGENERATE_SD * max(1.0, float(np.abs(increments).max(initial=0.0)))
    if not np.any(live):
        return np.zeros(increments.shape[0]), 0.0, True
    z = np.zeros(increments.shape[0])
    z[live] = increments[live].mean(axis=1) / (sd[live] / math.sqrt(n))
    pooled = float(z[live].sum() / math.sqrt(int(live.sum())))
    return z, pooled, False


def martingale_test(ensemble: Ensemble) -> MartingaleReport:
    """Zero-drift test for the price and every rate process.

    Needs at least 100 paths. Degenerate (deterministic) processes are
    reported as such rather than failed.
    """
    if ensemble.n_paths < 100:
        raise ValueError("martingale test needs at least 100 paths")
    node_z, pooled, degenerate = _pooled_z(np.diff(ensemble.prices, axis=0))
    n_agents = ensemble.scenario.n_agents
    pooled_rates = np.zeros(n_agents)
    degen_rates = np.zeros(n_agents, dtype=bool)
    for i in range(n_agents):
        _, pooled_rates[i], degen_rates[i] = _pooled_z(np.diff(ensemble.rates[:, i, :], axis=0))
    return MartingaleReport(
        node_z_price=node_z,
        pooled_z_price=pooled,
        pooled_z_rates=pooled_rates,
        degenerate_price=degenerate,
        degenerate_rates=degen_rates,
    )


@dataclass(frozen=True)
class RealizedVolatility:
    """Empirical squared-volatility curve with pointwise standard errors."""

    t: np.ndarray          # (K,) left node of each increment
    zeta_sq: np.ndarray    # (K,)
    se: np.ndarray         # (K,)


def realized_volatility(ensemble: Ensemble) -> RealizedVolatility:
    """Per-node realized variance rate mean((dP)^2)/dt across paths."""
    if ensemble.scenario.has_jumps:
        raise ValueError("realized volatility targets the no-jump dynamics")
    dp_sq = np.diff(ensemble.prices, axis=0) ** 2
    dt = ensemble.scenario.grid.dt
    n = dp_sq.shape[1]
    se = dp_sq.std(axis=1, ddof=1) / math.sqrt(n) / dt if n > 1 else np.zeros(dp_sq.shape[0])
    return RealizedVolatility(
        t=ensemble.grid_points[:-1],
        zeta_sq=dp_sq.mean(axis=1) / dt,
        se=se,
    )


def classify_monotonicity(values, rtol: float = 1e-9) -> str:
    """Classify a curve as flat, increasing, decreasing, or non-monotone.

    Differences within ``rtol`` of the curve's scale count as zero, so
    roundoff plateaus do not flip the class.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return "flat"
    d = np.diff(v)
    tol = rtol * max(float(np.max(np.abs(v))), 1e-300)
    pos = bool(np.any(d > tol))
    neg = bool(np.any(d < -tol))
    if pos and neg:
        return "non-monotone"
    if pos:
        return "increasing"
    if neg:
        return "decreasing"
    return "flat"


def is_concave(values, rtol: float = 1e-9) -> bool:
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return True
    tol = rtol * max(float(np.max(np.abs(v))), 1e-300)
    return bool(np.all(np.diff(v, 2) <= tol))


def mixed_market(type1: AgentSpec, type2: AgentSpec, alpha: float, n_agents: int,
                 horizon: float, grid_steps: int) -> MarketScenario:
    """Market with round(alpha*N) type-1 agents and the rest type-2."""
    n1 = round(alpha * n_agents)
    n1 = min(max(n1, 0), n_agents)
    agents = (type1,) * n1 + (type2,) * (n_agents - n1)
    return MarketScenario(agents=agents, horizon=horizon, grid_steps=grid_steps)


@dataclass(frozen=True)
class AlphaSweepPoint:
    alpha: float
    t: np.ndarray
    zeta_sq: np.ndarray
    classification: str
    concave: bool


def samuelson_sweep(type1: AgentSpec, type2: AgentSpec, alphas, n_agents: int,
                    horizon: float, grid_steps: int = 500) -> list[AlphaSweepPoint]:
    """Analytic squared-volatility curves across agent-mix proportions.

    For each proportion the market holds round(alpha*N) type-1 agents; each
    curve is classified by the sign pattern of its finite differences.
    Deterministic; grid points are shared across proportions.
    """
    alphas = list(alphas)
    if not alphas:
        raise ValueError("alphas must be non-empty")

    # identical agents share one Riccati solution; solve each type once
    proto = MarketScenario(agents=(type1, type2), horizon=horizon, grid_steps=grid_steps)
    type_tables = solve_all(proto)

    def one(alpha: float) -> AlphaSweepPoint:
        scenario = mixed_market(type1, type2, alpha, n_agents, horizon, grid_steps)
        n1 = sum(1 for a in scenario.agents if a is type1)
        tables = [type_tables[0]] * n1 + [type_tables[1]] * (n_agents - n1)
        weights = compute_weights(scenario, tables)
        curve = volatility_curve(scenario, weights)
        return AlphaSweepPoint(
            alpha=alpha,
            t=scenario.grid.points,
            zeta_sq=curve.values,
            classification=classify_monotonicity(curve.values),
            concave=is_concave(curve.values),
        )

    if len(alphas) > 1 and worker_count() > 1:
        with ThreadPoolExecutor(max_workers=min(worker_count(), len(alphas))) as pool:
            return list(pool.map(one, alphas))
    return [one(a) for a in alphas]


@dataclass(frozen=True)
class LambdaSweepPoint:
    lam: float
    p0: float
    q2_0: float


def lambda_sweep(scenario: MarketScenario, lambdas) -> list[LambdaSweepPoint]:
    """Time-0 price and agent-2 rate across outage intensities.

    The scenario must fit the exact two-agent solve; each intensity replaces
    the pre-outage escape rate of agent 2's chain. Purely deterministic (the
    time-0 equilibrium needs no simulation).
    """
    lambdas = list(lambdas)
    if not lambdas:
        raise ValueError("lambdas must be non-empty")

    def one(lam: float) -> LambdaSweepPoint:
        if lam < 0:
            raise ValueError(f"intensity must be >= 0, got {lam}")
        a1, a2 = scenario.agents
        a2_mod = replace(a2, intensity=((-lam, lam), (0.0, 0.0)))
        mod = MarketScenario(agents=(a1, a2_mod), horizon=scenario.horizon,
                             grid_steps=scenario.grid_steps)
        tables = solve_all(mod)
        path = two_agent_solve(mod, tables, jump_time=None)
        return LambdaSweepPoint(lam=lam, p0=float(path.price[0]), q2_0=float(-path.rate1[0]))

    if len(lambdas) > 1 and worker_count() > 1:
        with ThreadPoolExecutor(max_workers=min(worker_count(), len(lambdas))) as pool:
            return list(pool.map(one, lambdas))
    return [one(l) for l in lambdas]


def inject_price_drift(ensemble: Ensemble, per_step_bias: float) -> Ensemble:
    """Copy of the ensemble with a deterministic bias added to each price step."""
    prices = ensemble.prices + per_step_bias * np.arange(ensemble.prices.shape[0])[:, None]
    return replace_ensemble(ensemble, prices=prices)


def inject_rate_drift(ensemble: Ensemble, agent: int, per_step_bias: float) -> Ensemble:
    rates = ensemble.rates.copy()
    rates[:, agent, :] += per_step_bias * np.arange(rates.shape[0])[:, None]
    return replace_ensemble(ensemble, rates=rates)


def replace_ensemble(ensemble: Ensemble, **kwargs) -> Ensemble:
    fields = dict(
        scenario=ensemble.scenario, mode=ensemble.mode, demands=ensemble.demands,
        chain_states=ensemble.chain_states, inventories=ensemble.inventories,
        rates=ensemble.rates, prices=ensemble.prices,
        common_increments=ensemble.common_increments,
        master_seed=ensemble.master_seed, clearing_max=ensemble.clearing_max,
    )
    fields.update(kwargs)
    return Ensemble(**fields)
