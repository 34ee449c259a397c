"""Riccati system of the regime-switching terminal-penalty weight.

Per agent, one coupled ODE per cost state e:

    y_e'(t) = y_e(t)^2 / gamma - sum_e' y_e'(t) * intensity[e][e'],
    y_e(T)  = eta*e / (2*(eta+e)),

integrated backward from T with classical fixed-step RK4 (in the
time-to-delivery variable, where the system reads
y' = -y^2/gamma + intensity @ y). Every component stays non-negative;
tiny negative roundoff within -1e-12 is clamped to zero and counted,
anything below that tolerance raises.

The solved table is evaluated at grid nodes exactly and linearly
interpolated in between (O(dt^2), below all downstream tolerances).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AgentSpec, MarketScenario, TimeGrid

__all__ = [
    "RiccatiError",
    "RiccatiTable",
    "solve_riccati",
    "solve_riccati_batch",
    "solve_all",
    "closed_form_y2",
    "y2_at",
    "jump_sizes",
    "a_coefficient",
    "discount_curve",
]

NEGATIVE_CLAMP_TOL = 1e-12


class RiccatiError(RuntimeError):
    """Integrator produced values the theory forbids (negative or non-finite)."""


@dataclass(frozen=True)
class RiccatiTable:
    """Per-agent solution on a time grid: values[e, k] = y_e(t_k)."""

    agent_index: int
    grid: TimeGrid
    cost_states: tuple[float, ...]
    gamma: float
    values: np.ndarray  # shape (n_states, steps + 1)
    clamp_count: int = 0

    @property
    def n_states(self) -> int:
        return len(self.cost_states)

    def terminal_values(self) -> np.ndarray:
        return self.values[:, -1]


def _stage_counts(y_over_gamma_max: float, dt: float, floor: int) -> int:
    # Explicit RK4 needs h * max|df/dy| well inside its stability interval;
    # df/dy ~ 2y/gamma, so keep h*y/gamma <= 0.25.
    need = int(np.ceil(4.0 * dt * max(y_over_gamma_max, 0.0))) if y_over_gamma_max > 0 else 1
    return max(floor, need)


def solve_riccati_batch(gammas, terminal_values, intensities, grid: TimeGrid,
                        substeps: int = 10) -> tuple[np.ndarray, int]:
    """Solve a stack of independent Riccati systems on one grid.

    gammas: (B,), terminal_values: (B, M), intensities: (B, M, M) with rows
    padded by zeros for agents with fewer states. Returns (values, clamps)
    where values has shape (B, M, K+1) with node K holding the terminal
    condition exactly, and clamps counts clamped roundoff negatives per batch
    entry.
    """
    gammas = np.asarray(gammas, dtype=float)
    yT = np.asarray(terminal_values, dtype=float)
    lam = np.asarray(intensities, dtype=float)
    B, M = yT.shape
    K = grid.steps
    dt = grid.dt
    inv_gamma = (1.0 / gammas)[:, None]

    values = np.empty((B, M, K + 1))
    values[:, :, K] = yT
    y = yT.copy()

    def rhs(y):
        return -y * y * inv_gamma + np.einsum("bij,bj->bi", lam, y)

    for k in range(K, 0, -1):
        n = _stage_counts(float(np.max(y * inv_gamma)), dt, substeps)
        h = dt / n
        for _ in range(n):
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * h * k1)
            k3 = rhs(y + 0.5 * h * k2)
            k4 = rhs(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        values[:, :, k - 1] = y

    if not np.all(np.isfinite(values)):
        raise RiccatiError("non-finite value in Riccati solve")
    low = values.min()
    if low < -NEGATIVE_CLAMP_TOL:
        raise RiccatiError(
            f"negative Riccati value {low} below the {-NEGATIVE_CLAMP_TOL} tolerance; "
            "the solution must be non-negative"
        )
    clamps = np.count_nonzero(values < 0.0, axis=(1, 2))
    if clamps.any():
        np.clip(values, 0.0, None, out=values)
    return values, clamps


def solve_riccati(agent: AgentSpec, grid: TimeGrid, substeps: int = 10,
                  agent_index: int = 0) -> RiccatiTable:
    """Solve the coupled Riccati system for one agent on ``grid``.

    ``substeps`` is the minimum number of internal RK4 steps per grid step;
    it is raised automatically when the quadratic term would destabilise an
    explicit step.
    """
    yT = np.array([agent.terminal_penalty_weight(e) for e in agent.cost_states])
    values, clamps = solve_riccati_batch(
        np.array([agent.gamma]), yT[None, :], agent.intensity_matrix()[None, :, :],
        grid, substeps=substeps,
    )
    vals = values[0]
    vals.flags.writeable = False
    return RiccatiTable(
        agent_index=agent_index,
        grid=grid,
        cost_states=agent.cost_states,
        gamma=agent.gamma,
        values=vals,
        clamp_count=int(clamps[0]),
    )


def solve_all(scenario: MarketScenario, substeps: int = 10) -> list[RiccatiTable]:
    """Solve every agent of a scenario (one batched integration)."""
    M = max(a.n_states for a in scenario.agents)
    B = scenario.n_agents
    yT = np.zeros((B, M))
    lam = np.zeros((B, M, M))
    for i, a in enumerate(scenario.agents):
        m = a.n_states
        yT[i, :m] = [a.terminal_penalty_weight(e) for e in a.cost_states]
        lam[i, :m, :m] = a.intensity_matrix()
    values, clamps = solve_riccati_batch(scenario.gammas(), yT, lam, scenario.grid)
    tables = []
    for i, a in enumerate(scenario.agents):
        vals = values[i, : a.n_states].copy()
        vals.flags.writeable = False
        tables.append(RiccatiTable(i, scenario.grid, a.cost_states, a.gamma, vals, int(clamps[i])))
    return tables


def closed_form_y2(agent: AgentSpec, state_value: float, t, horizon: float):
    """No-jump solution Y_T / (1 + Y_T*(T-t)/gamma) with Y_T = eta*e/(2*(eta+e)).

    Exact for a constant cost state; used as an oracle for the solver.
    """
    yT = agent.terminal_penalty_weight(state_value)
    t_arr = np.asarray(t, dtype=float)
    out = yT / (1.0 + yT * (horizon - t_arr) / agent.gamma)
    return float(out) if t_arr.ndim == 0 else out


def _interp_row(table: RiccatiTable, state: int, t):
    if not 0 <= state < table.n_states:
        raise ValueError(f"unknown state index {state}; table has {table.n_states} states")
    return np.interp(t, table.grid.points, table.values[state])


def y2_at(table: RiccatiTable, state: int, t):
    """Value y_state(t), linearly interpolated between grid nodes."""
    return _interp_row(table, state, t)


def jump_sizes(table: RiccatiTable, from_state: int, t) -> np.ndarray:
    """Vector over target states of y_e'(t) - y_from(t) (zero on the diagonal)."""
    if not 0 <= from_state < table.n_states:
        raise ValueError(f"unknown state index {from_state}; table has {table.n_states} states")
    here = np.interp(t, table.grid.points, table.values[from_state])
    return np.array([np.interp(t, table.grid.points, table.values[e]) - here
                     for e in range(table.n_states)])


def a_coefficient(table: RiccatiTable, state: int, t):
    """Remaining-horizon weight (T - t) * y_state(t) / gamma, in [0, 1)."""
    y = _interp_row(table, state, t)
    return (table.grid.horizon - np.asarray(t, dtype=float)) * y / table.gamma


def discount_curve(table: RiccatiTable, state) -> np.ndarray:
    """Cumulative discount exp(-(1/gamma) * int_0^t y ds) on the grid nodes.

    ``state`` is a single state index (constant regime) or an array of
    per-node state indices. Trapezoid quadrature; starts at 1 and is
    non-increasing.
    """
    pts = table.grid.points
    if np.isscalar(state) or np.asarray(state).ndim == 0:
        y = table.values[int(state)]
    else:
        idx = np.asarray(state, dtype=int)
        if idx.shape != pts.shape:
            raise ValueError(f"state path must have {pts.shape[0]} entries, got {idx.shape}")
        y = table.values[idx, np.arange(pts.shape[0])]
    integral = np.concatenate(([0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(pts))))
    return np.exp(-integral / table.gamma)
