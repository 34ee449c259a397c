"""Independent discrete-time brute-force equilibrium, used as ground truth.

The game is discretized on K uniform steps: each agent picks a rate per step,
pays q*(P + gamma*q)*dt while trading, and a terminal quadratic imbalance
penalty. Stacking every agent's first-order conditions together with the
per-step clearing constraints gives one dense linear system in all rates and
prices, solved directly. No code is shared with the equilibrium evaluators.

Valid ground truth only for the deterministic slice (perfect forecasts, no
outages): there the continuous feedback equilibrium is deterministic, so the
open-loop discrete game converges to the same object.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MarketScenario

__all__ = [
    "OracleError",
    "DiscreteGame",
    "game_from_scenario",
    "solve_discrete_equilibrium",
    "convergence_report",
    "ConvergenceReport",
]

RESIDUAL_TOL = 1e-9
EXACTNESS_FLOOR = 1e-9


class OracleError(RuntimeError):
    """The stacked equilibrium system could not be solved reliably."""


@dataclass(frozen=True)
class DiscreteGame:
    """Deterministic discrete market: K steps of length dt, N agents."""

    steps: int
    dt: float
    gammas: np.ndarray       # (N,)
    epsilons: np.ndarray     # (N,)
    demand_paths: np.ndarray  # (N, K+1)
    x0: np.ndarray           # (N,)

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if np.any(self.gammas <= 0) or np.any(self.epsilons <= 0):
            raise ValueError("gammas and epsilons must be strictly positive")
        n = len(self.gammas)
        if self.demand_paths.shape != (n, self.steps + 1):
            raise ValueError(f"demand_paths must have shape ({n}, {self.steps + 1})")

    @property
    def n_agents(self) -> int:
        return len(self.gammas)


def game_from_scenario(scenario: MarketScenario, steps: int) -> DiscreteGame:
    """Discretize a deterministic no-jump scenario (sigma = 0, constant costs)."""
    if scenario.has_jumps:
        raise ValueError("the discrete oracle covers no-jump scenarios only")
    if any(a.sigma_sq != 0.0 or a.sigma0_sq != 0.0 for a in scenario.agents):
        raise ValueError("the discrete oracle needs deterministic demands (sigma = 0)")
    ts = np.linspace(0.0, scenario.horizon, steps + 1)
    demands = np.stack([a.d0 + a.mu * ts for a in scenario.agents])
    return DiscreteGame(
        steps=steps,
        dt=scenario.horizon / steps,
        gammas=scenario.gammas(),
        epsilons=np.array([a.marginal_cost_slope() for a in scenario.agents]),
        demand_paths=demands,
        x0=scenario.x0(),
    )


def solve_discrete_equilibrium(game: DiscreteGame) -> tuple[np.ndarray, np.ndarray]:
    """Solve the stacked first-order and clearing conditions.

    Unknowns are the N*K rates and the K prices. Agent i's condition at step
    k reads P[k] + 2*gamma_i*q_i[k] + eps_i*dt*sum_j q_i[j] =
    eps_i*(D_i[K] - x0_i); clearing forces sum_i q_i[k] = 0 at every step.
    Returns ``(rates, prices)`` with shapes (N, K) and (K,).
    """
    N, K = game.n_agents, game.steps
    n = N * K + K
    A = np.zeros((n, n))
    rhs = np.zeros(n)
    target = game.epsilons * (game.demand_paths[:, -1] - game.x0)
    for i in range(N):
        rows = slice(i * K, (i + 1) * K)
        block = np.full((K, K), game.epsilons[i] * game.dt)
        block[np.diag_indices(K)] += 2.0 * game.gammas[i]
        A[rows, rows] = block
        A[rows, N * K:] = np.eye(K)
        rhs[i * K:(i + 1) * K] = target[i]
    for k in range(K):
        A[N * K + k, np.arange(N) * K + k] = 1.0
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as err:
        cond = np.linalg.cond(A)
        raise OracleError(f"singular equilibrium system (condition estimate {cond:.3e})") from err
    residual = np.max(np.abs(A @ sol - rhs))
    scale = max(1.0, np.max(np.abs(rhs)))
    if residual > RESIDUAL_TOL * scale:
        raise OracleError(f"solver residual {residual:.3e} exceeds tolerance")
    rates = sol[: N * K].reshape(N, K)
    prices = sol[N * K:]
    return rates, prices


@dataclass(frozen=True)
class ConvergenceReport:
    """Oracle-vs-closed-form errors across grid refinements."""

    steps: tuple[int, ...]
    max_err_price: tuple[float, ...]
    max_err_rate: tuple[float, ...]
    fitted_order: float | None
    errors_decreasing: bool
    at_exactness_floor: bool

    @property
    def converged(self) -> bool:
        """Monotone decay with order >= 0.9, or errors already at roundoff."""
        if self.at_exactness_floor:
            return True
        return self.errors_decreasing and self.fitted_order is not None \
            and self.fitted_order >= 0.9


def convergence_report(scenario: MarketScenario, step_counts,
                       target_price: float, target_rates) -> ConvergenceReport:
    """Compare the discrete oracle against closed-form targets as K grows.

    ``target_price`` and ``target_rates`` come from the continuous
    machinery (constant in time on the deterministic slice). When every
    error is below the exactness floor the discrete game has reproduced the
    continuous solution to roundoff and the order fit is reported as None.
    """
    step_counts = tuple(int(k) for k in step_counts)
    target_rates = np.asarray(target_rates, dtype=float)
    errs_p, errs_q = [], []
    for K in step_counts:
        rates, prices = solve_discrete_equilibrium(game_from_scenario(scenario, K))
        errs_p.append(float(np.max(np.abs(prices - target_price))))
        errs_q.append(float(np.max(np.abs(rates - target_rates[:, None]))))
    errs_p_arr = np.array(errs_p)
    floor = bool(np.all(errs_p_arr < EXACTNESS_FLOOR))
    decreasing = bool(np.all(np.diff(errs_p_arr) < 0))
    order = None
    if not floor and np.all(errs_p_arr > 0):
        slope = np.polyfit(np.log(step_counts), np.log(errs_p_arr), 1)[0]
        order = float(-slope)
    return ConvergenceReport(
        steps=step_counts,
        max_err_price=tuple(errs_p),
        max_err_rate=tuple(errs_q),
        fitted_order=order,
        errors_decreasing=decreasing,
        at_exactness_floor=floor,
    )
