"""Closed-form equilibrium for constant production costs and unbiased forecasts.

With no outage jumps and zero forecast drift the equilibrium price is a
convex combination of the agents' forecasted marginal costs,

    P(t) = sum_i F_i(t) * c_i   with  c_i = eps_i * (D_i - X_i),

where eps_i = eta_i*e_i/(eta_i+e_i), f_i(t) = gamma_i + eps_i*(T-t)/2,
G(t) = (sum_j 1/f_j(t))^-1 and F_i = G/f_i. Each agent trades toward the
price gap: q_i = (c_i - P) / (2 f_i(t)), and the rates clear exactly.

The price volatility is deterministic,

    zeta(t)^2 = sum_i (1-rho_i^2) (eps_i F_i sigma_i(t))^2
              + (sum_i rho_i eps_i F_i sigma_i(t))^2,

and the price decomposes into a fundamental part driven by the demand
forecasts plus a permanent-impact part linear in the accumulated trades.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AgentSpec, MarketScenario, TimeGrid, forecast_volatility
from .riccati import RiccatiTable

__all__ = [
    "WeightCurves",
    "VolatilityCurve",
    "compute_weights",
    "price",
    "trading_rate",
    "trading_rates",
    "volatility_curve",
    "zeta_sq_homogeneous",
    "zeta_sq_identical",
    "decompose_price",
]


@dataclass(frozen=True)
class WeightCurves:
    """Deterministic equilibrium weight functions sampled on the grid.

    Rows are agents, columns grid nodes. ``F`` sums to one across agents at
    every node and ``pi`` coincides with ``F`` in this no-jump setting.
    """

    grid: TimeGrid
    gammas: np.ndarray     # (N,)
    epsilons: np.ndarray   # (N,)
    f: np.ndarray          # (N, K+1)
    F: np.ndarray          # (N, K+1)
    G: np.ndarray          # (K+1,)
    a: np.ndarray          # (N, K+1)
    pi: np.ndarray         # (N, K+1)
    theta: np.ndarray      # (K+1,)
    gamma_bar: float

    @property
    def n_agents(self) -> int:
        return self.gammas.shape[0]

    def f_at(self, t):
        """Liquidity-adjusted depth gamma_i + eps_i*(T-t)/2 (exact, linear in t)."""
        tau = np.atleast_1d(self.grid.horizon - np.asarray(t, dtype=float))
        out = self.gammas[:, None] + 0.5 * self.epsilons[:, None] * tau[None, :]
        return out[:, 0] if np.ndim(t) == 0 else out

    def F_at(self, t):
        f = self.f_at(t)
        return (1.0 / f) / np.sum(1.0 / f, axis=0)

    def G_at(self, t):
        return 1.0 / np.sum(1.0 / self.f_at(t), axis=0)


def compute_weights(scenario: MarketScenario, tables: list[RiccatiTable]) -> WeightCurves:
    """Equilibrium weight curves for a no-jump, drift-free scenario.

    Raises ``ValueError`` when the scenario has active outage jumps or a
    nonzero forecast drift; those cases live in the jump machinery.
    """
    if scenario.has_jumps:
        raise ValueError("scenario has active outage jumps; use the jump equilibrium module")
    if not scenario.drift_free:
        raise ValueError("scenario has nonzero forecast drift; use the jump equilibrium module")
    if len(tables) != scenario.n_agents:
        raise ValueError(f"expected {scenario.n_agents} Riccati tables, got {len(tables)}")

    grid = scenario.grid
    tau = grid.horizon - grid.points  # (K+1,)
    gammas = scenario.gammas()
    epsilons = np.array([a.marginal_cost_slope() for a in scenario.agents])

    f = gammas[:, None] + 0.5 * epsilons[:, None] * tau[None, :]
    G = 1.0 / np.sum(1.0 / f, axis=0)
    F = G[None, :] / f

    a = np.stack([
        tau * tables[i].values[scenario.agents[i].initial_state] / gammas[i]
        for i in range(scenario.n_agents)
    ])
    one_minus_a_over_gamma = (1.0 - a) / gammas[:, None]
    pi = one_minus_a_over_gamma / np.sum(one_minus_a_over_gamma, axis=0)
    theta = np.sum(a / gammas[:, None], axis=0)
    gamma_bar = 1.0 / np.sum(1.0 / gammas)

    curves = WeightCurves(grid, gammas, epsilons, f, F, G, a, pi, theta, gamma_bar)
    _validate_curves(curves)
    return curves


def _validate_curves(w: WeightCurves) -> None:
    if np.any(w.F <= 0):
        raise ValueError("weight curve F must be strictly positive")
    if np.max(np.abs(w.F.sum(axis=0) - 1.0)) > 1e-9:
        raise ValueError("weight curves F must sum to one at every node")
    if np.max(np.abs(w.pi.sum(axis=0) - 1.0)) > 1e-9:
        raise ValueError("weight curves pi must sum to one at every node")
    if np.any(1.0 - w.gamma_bar * w.theta <= 0):
        raise ValueError("1 - gamma_bar * theta must stay strictly positive")


def price(weights: WeightCurves, marginal_costs, t):
    """Equilibrium price sum_i F_i(t) * c_i; a convex combination of the inputs.

    ``marginal_costs`` holds eps_i*(D_i - X_i) per agent; shape (N,) or
    (N, paths).
    """
    c = np.asarray(marginal_costs, dtype=float)
    F = weights.F_at(t)
    out = np.einsum("i,i...->...", F, c)
    return float(out) if out.ndim == 0 else out


def trading_rate(weights: WeightCurves, agent: int, marginal_cost, p, t):
    """Optimal rate (c_i - P) / (2 f_i(t)) for one agent."""
    f = weights.f_at(t)[agent]
    out = (np.asarray(marginal_cost, dtype=float) - p) / (2.0 * f)
    return float(out) if np.ndim(out) == 0 else out


def trading_rates(weights: WeightCurves, marginal_costs, p, t) -> np.ndarray:
    """All agents' rates at once; they sum to zero when ``p`` clears the inputs."""
    c = np.asarray(marginal_costs, dtype=float)
    f = weights.f_at(t)
    return (c - p) / (2.0 * f.reshape(f.shape + (1,) * (c.ndim - 1)))


@dataclass(frozen=True)
class VolatilityCurve:
    """Deterministic squared price volatility on the grid."""

    grid: TimeGrid
    values: np.ndarray  # (K+1,)

    def __post_init__(self) -> None:
        if np.any(self.values < 0):
            raise ValueError("squared volatility must be non-negative")


def volatility_curve(scenario: MarketScenario, weights: WeightCurves) -> VolatilityCurve:
    """Squared price volatility on the grid for a no-jump, drift-free scenario."""
    pts = scenario.grid.points
    sig = np.stack([
        forecast_volatility(a, pts, scenario.horizon) for a in scenario.agents
    ])  # (N, K+1)
    rho = np.array([a.rho for a in scenario.agents])
    term = weights.epsilons[:, None] * weights.F * sig
    values = np.sum((1.0 - rho[:, None] ** 2) * term**2, axis=0) + np.sum(rho[:, None] * term, axis=0) ** 2
    return VolatilityCurve(scenario.grid, values)


def zeta_sq_homogeneous(gamma: float, rho: float, sigma_sq: float, sigma0_sq: float,
                        terminal_weights, horizon: float, t):
    """Squared volatility when sigma, gamma, rho are shared but costs differ.

    ``terminal_weights`` are the per-agent terminal Riccati values
    eta*e/(2*(eta+e)).
    """
    yT = np.asarray(terminal_weights, dtype=float)
    tau = np.atleast_1d(horizon - np.asarray(t, dtype=float))
    sig_sq = sigma_sq * tau + sigma0_sq
    fi = gamma + yT[:, None] * tau[None, :]  # f_i, since eps_i/2 equals the terminal weight
    G = 1.0 / np.sum(1.0 / fi, axis=0)
    terms = 2.0 * yT[:, None] / fi
    out = (1.0 - rho**2) * sig_sq * G**2 * np.sum(terms**2, axis=0) \
        + rho**2 * sig_sq * G**2 * np.sum(terms, axis=0) ** 2
    return float(out[0]) if np.ndim(t) == 0 else out


def zeta_sq_identical(n_agents: int, rho: float, sigma_sq: float, sigma0_sq: float,
                      terminal_weight: float, horizon: float, t):
    """Squared volatility for fully identical agents: decreasing in t.

    4*(1-rho^2)/N * Y_T^2 * sig^2(t) + 4*rho^2 * Y_T^2 * sig^2(t).
    """
    tau = horizon - np.asarray(t, dtype=float)
    sig_sq = sigma_sq * tau + sigma0_sq
    out = (4.0 * (1.0 - rho**2) / n_agents + 4.0 * rho**2) * terminal_weight**2 * sig_sq
    return float(out) if np.ndim(t) == 0 else out


def decompose_price(weights: WeightCurves, demands, inventories, x0, t):
    """Split the price into fundamental and permanent-impact components.

    Returns ``(fundamental, impact_coefficients, impact_term)`` where
    fundamental = sum_i F_i eps_i (D_i - x0_i), the coefficients are
    eps_i*F_i(t), and the impact term is -sum_i F_i eps_i (X_i - x0_i)
    (the accumulated trades), so fundamental + impact reconstructs the
    price exactly. For identical agents the impact term is identically
    zero by market clearing.
    """
    D = np.asarray(demands, dtype=float)
    X = np.asarray(inventories, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    coeff = weights.epsilons * weights.F_at(t)
    extra = (1,) * (D.ndim - 1)
    coeff_b = coeff.reshape(coeff.shape + extra)
    x0_b = x0.reshape(x0.shape + extra)
    fundamental = np.sum(coeff_b * (D - x0_b), axis=0)
    impact = -np.sum(coeff_b * (X - x0_b), axis=0)
    if fundamental.ndim == 0:
        return float(fundamental), coeff, float(impact)
    return fundamental, coeff, impact
