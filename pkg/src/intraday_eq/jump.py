"""Equilibrium machinery with production-cost jumps.

Three levels are implemented:

* the general matrix formulas for the adjustment vector, the price, and the
  inventory drift at a frozen state of the market (regime values, demands,
  inventories), with the cross-agent jump coupling ``b`` taken as an input
  that defaults to zero;
* the exact two-agent case where only the second agent can suffer a single
  outage (her chain jumps once from the low-cost to the high-cost state and
  is absorbed), solved by integrating a linear ODE for agent 1's inventory
  piecewise between jump times;
* the large-N approximation, which is the general formula with ``b`` forced
  to zero.

The coupling term requires conditional expectations of martingale
integrands that have no computable closed form; the two cases above are
exactly the ones where it vanishes or can be neglected, so ``b`` is exposed
for experimentation but never derived here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MarketScenario
from .riccati import RiccatiTable

__all__ = [
    "MatrixState",
    "TwoAgentJumpState",
    "TwoAgentPath",
    "invert_rank_one",
    "y1_vector",
    "price_general",
    "x_drift_general",
    "rate_general",
    "rates_general",
    "large_n_price",
    "feedback_rates",
    "two_agent_state",
    "two_agent_ell",
    "two_agent_solve",
]

_THETA_TOL = 1e-12


@dataclass(frozen=True)
class MatrixState:
    """Frozen market state feeding the matrix equilibrium formulas.

    ``y2`` holds each agent's current regime value, ``b`` the jump-coupling
    input (zero unless supplied). Construction fails unless
    1 - gamma_bar*theta stays strictly positive, which valid regime values
    guarantee.
    """

    t: float
    horizon: float
    gammas: np.ndarray
    y2: np.ndarray
    demands: np.ndarray
    inventories: np.ndarray
    mus: np.ndarray | None = None
    b: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = len(self.gammas)
        for name in ("gammas", "y2", "demands", "inventories"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
            object.__setattr__(self, name, arr)
        for name in ("mus", "b"):
            arr = getattr(self, name)
            arr = np.zeros(n) if arr is None else np.asarray(arr, dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
            object.__setattr__(self, name, arr)
        if np.any(self.gammas <= 0):
            raise ValueError("gammas must be strictly positive")
        if 1.0 - self.gamma_bar * self.theta <= _THETA_TOL:
            raise ValueError(
                "1 - gamma_bar*theta is not strictly positive; regime values are invalid"
            )

    @property
    def n_agents(self) -> int:
        return len(self.gammas)

    @property
    def delta(self) -> np.ndarray:
        return self.y2 * (self.demands - self.inventories)

    @property
    def a(self) -> np.ndarray:
        return (self.horizon - self.t) * self.y2 / self.gammas

    @property
    def a_tilde(self) -> np.ndarray:
        return self.mus * self.gammas * self.a

    @property
    def theta(self) -> float:
        return float(np.sum(self.a / self.gammas))

    @property
    def gamma_bar(self) -> float:
        return 1.0 / float(np.sum(1.0 / self.gammas))

    def rhs(self) -> np.ndarray:
        """The shared input vector 2*delta + 2*a_tilde + gamma_bar*b/gamma."""
        return 2.0 * self.delta + 2.0 * self.a_tilde + self.gamma_bar * self.b / self.gammas

    @classmethod
    def from_tables(cls, scenario: MarketScenario, tables: list[RiccatiTable],
                    chain_states, demands, inventories, t: float,
                    b=None) -> "MatrixState":
        states = np.asarray(chain_states, dtype=int)
        y2 = np.array([
            np.interp(t, tables[i].grid.points, tables[i].values[states[i]])
            for i in range(scenario.n_agents)
        ])
        return cls(
            t=t, horizon=scenario.horizon, gammas=scenario.gammas(), y2=y2,
            demands=np.asarray(demands, dtype=float),
            inventories=np.asarray(inventories, dtype=float),
            mus=scenario.mus(), b=b,
        )


def invert_rank_one(a, gammas) -> np.ndarray:
    """Inverse of I - gamma_bar * A * J for the rank-one matrix A = a 1^T.

    Returns I + gamma_bar/(1 - gamma_bar*theta) * A * J, which multiplies the
    original matrix back to the identity.
    """
    a = np.asarray(a, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    gamma_bar = 1.0 / np.sum(1.0 / gammas)
    theta = np.sum(a / gammas)
    denom = 1.0 - gamma_bar * theta
    if denom <= _THETA_TOL:
        raise ValueError(f"1 - gamma_bar*theta = {denom} is not strictly positive")
    return np.eye(len(a)) + (gamma_bar / denom) * np.outer(a, 1.0 / gammas)


def price_general(state: MatrixState) -> float:
    """Clearing price gamma_bar/(1-gamma_bar*theta) * sum_i rhs_i / gamma_i."""
    denom = 1.0 - state.gamma_bar * state.theta
    return float(state.gamma_bar / denom * np.sum(state.rhs() / state.gammas))


def y1_vector(state: MatrixState) -> np.ndarray:
    """Per-agent linear adjustment of the value process at the frozen state."""
    denom = 1.0 - state.gamma_bar * state.theta
    s = np.sum(state.rhs() / state.gammas)
    return (state.gamma_bar / denom) * s * state.a \
        + 2.0 * state.a_tilde + state.gamma_bar * state.b / state.gammas


def x_drift_general(state: MatrixState) -> np.ndarray:
    """Inventory drift via the full matrix product; components sum to zero.

    Kept as the literal matrix expression so it can cross-check the
    componentwise rate formulas.
    """
    n = state.n_agents
    J = np.diag(1.0 / state.gammas)
    A = np.outer(state.a, np.ones(n))
    denom = 1.0 - state.gamma_bar * state.theta
    M = np.eye(n) - (state.gamma_bar / denom) * (np.ones((n, n)) - A) @ J
    return 0.5 * J @ M @ state.rhs()


def rates_general(state: MatrixState) -> np.ndarray:
    """All agents' optimal rates (drift-free case) in one vector."""
    if np.any(state.mus != 0.0):
        raise ValueError("rate formula requires zero forecast drift for every agent")
    one_minus_a = 1.0 - state.a
    if np.any(one_minus_a <= 0.0):
        raise ValueError("1 - a must stay strictly positive; inputs are corrupted")
    p = price_general(state)
    core = (2.0 * state.delta + state.gamma_bar * state.b / state.gammas) / one_minus_a
    return one_minus_a / (2.0 * state.gammas) * (core - p)


def rate_general(state: MatrixState, agent: int) -> float:
    """One agent's optimal rate; agrees with the inventory drift component."""
    return float(rates_general(state)[agent])


def large_n_price(scenario: MarketScenario, tables: list[RiccatiTable],
                  chain_states, demands, inventories, t: float) -> float:
    """Price with the jump coupling neglected (exact when no jumps are active).

    The neglected term is O(1/N) in the number of agents.
    """
    state = MatrixState.from_tables(scenario, tables, chain_states, demands,
                                    inventories, t, b=None)
    return price_general(state)


def feedback_rates(gammas, mus, horizon: float, t: float, y2, demands, inventories):
    """Vectorized rates and price over paths with the coupling set to zero.

    ``y2``, ``demands``, ``inventories`` have shape (N, paths). Returns
    ``(rates, price)`` of shapes (N, paths) and (paths,).
    """
    gammas = np.asarray(gammas, dtype=float)[:, None]
    mus = np.asarray(mus, dtype=float)[:, None]
    delta = y2 * (demands - inventories)
    a = (horizon - t) * y2 / gammas
    a_tilde = mus * gammas * a
    theta = np.sum(a / gammas, axis=0)
    gamma_bar = 1.0 / np.sum(1.0 / gammas)
    r = 2.0 * delta + 2.0 * a_tilde
    p = gamma_bar / (1.0 - gamma_bar * theta) * np.sum(r / gammas, axis=0)
    y1 = a * p + 2.0 * a_tilde
    rates = (2.0 * delta + y1 - p) / (2.0 * gammas)
    return rates, p


# ---------------------------------------------------------------------------
# Exact two-agent outage case
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoAgentJumpState:
    """Snapshot of the two-agent solve: the linear map x -> ell(t, x)."""

    t: float
    x1: float
    d1: float
    d2: float
    state2: int
    lam2: float
    ell_intercept: float
    ell_slope: float

    def ell(self, x: float) -> float:
        return self.ell_intercept + self.ell_slope * x


class _TwoAgentKernel:
    """Precomputed pieces of the two-agent solve shared by all evaluations."""

    def __init__(self, scenario: MarketScenario, tables: list[RiccatiTable]):
        if scenario.n_agents != 2:
            raise ValueError("the exact jump solve needs exactly two agents")
        a1, a2 = scenario.agents
        if a1.has_jumps:
            raise ValueError("agent 0 must have a constant cost state (no jumps)")
        if a2.n_states != 2:
            raise ValueError("agent 1 must have exactly two cost states")
        if a2.initial_state != 0:
            raise ValueError("agent 1 must start in its first (pre-outage) cost state")
        if any(v != 0.0 for v in a2.intensity[1]):
            raise ValueError("agent 1's second cost state must be absorbing")
        if any(a.sigma_sq != 0.0 or a.sigma0_sq != 0.0 for a in scenario.agents):
            raise ValueError("the exact jump solve requires perfect forecasts (sigma = 0)")
        self.scenario = scenario
        self.horizon = scenario.horizon
        self.g1, self.g2 = a1.gamma, a2.gamma
        self.mu1, self.mu2 = a1.mu, a2.mu
        self.d01, self.d02 = a1.d0, a2.d0
        self.x01, self.x02 = a1.x0, a2.x0
        self.lam2 = a2.intensity[0][1]
        self.gamma_bar = 1.0 / (1.0 / self.g1 + 1.0 / self.g2)
        grid = scenario.grid
        self._pts = grid.points
        self._dt = grid.dt
        self._y1row = tables[0].values[a1.initial_state]
        self._y2rows = tables[1].values  # rows: pre-outage, post-outage

    def _interp(self, row: np.ndarray, t: float) -> float:
        u = t / self._dt
        k = min(int(u), len(row) - 2)
        frac = u - k
        return row[k] * (1.0 - frac) + row[k + 1] * frac

    def demands(self, t: float) -> tuple[float, float]:
        return self.d01 + self.mu1 * t, self.d02 + self.mu2 * t

    def pieces(self, t: float, x: float, state2: int):
        """Returns (ell, core, a1) at (t, x); core is ell/a1 continued to t=T."""
        y1 = self._interp(self._y1row, t)
        y2 = self._interp(self._y2rows[state2], t)
        tau = self.horizon - t
        a1 = tau * y1 / self.g1
        a2 = tau * y2 / self.g2
        theta = a1 / self.g1 + a2 / self.g2
        denom = 1.0 - self.gamma_bar * theta
        d1, d2 = self.demands(t)
        inner = (2.0 * y1 * (d1 - x) + 2.0 * self.mu1 * self.g1 * a1) / self.g1 \
            + (2.0 * y2 * (d2 - self.x02 - self.x01 + x) + 2.0 * self.mu2 * self.g2 * a2) / self.g2
        core = self.gamma_bar / denom * inner + 2.0 * self.mu1 * self.g1
        return a1 * core, core, a1, y1, d1

    def price(self, t: float, x: float, state2: int) -> float:
        ell, core, a1, _, _ = self.pieces(t, x, state2)
        # core - 2*mu1*g1*a1 equals ell/a1 - 2*mu1*g1*a1 wherever a1 > 0 and
        # extends it continuously to t = T
        return core - 2.0 * self.mu1 * self.g1 * a1

    def rate1(self, t: float, x: float, state2: int) -> float:
        ell, core, a1, y1, d1 = self.pieces(t, x, state2)
        p = core - 2.0 * self.mu1 * self.g1 * a1
        return (2.0 * y1 * (d1 - x) + ell - p) / (2.0 * self.g1)

    def ode_rhs(self, t: float, x: float, state2: int) -> float:
        ell, core, a1, y1, d1 = self.pieces(t, x, state2)
        # (1 - 1/a1) * ell written through core so t -> T stays finite
        return y1 * (d1 - x) / self.g1 + self.mu1 * a1 + (ell - core) / (2.0 * self.g1)


def two_agent_state(scenario: MarketScenario, tables: list[RiccatiTable],
                    t: float, x1: float, state2: int) -> TwoAgentJumpState:
    """Snapshot with the linear-in-inventory coefficients at time ``t``."""
    kern = _TwoAgentKernel(scenario, tables)
    ell0, _, _, _, _ = kern.pieces(t, 0.0, state2)
    ell1, _, _, _, _ = kern.pieces(t, 1.0, state2)
    d1, d2 = kern.demands(t)
    return TwoAgentJumpState(
        t=t, x1=x1, d1=d1, d2=d2, state2=state2, lam2=kern.lam2,
        ell_intercept=ell0, ell_slope=ell1 - ell0,
    )


def two_agent_ell(scenario: MarketScenario, tables: list[RiccatiTable],
                  t: float, x: float, state2: int = 0) -> float:
    """The linear-in-inventory map driving the two-agent solve."""
    kern = _TwoAgentKernel(scenario, tables)
    ell, _, _, _, _ = kern.pieces(t, x, state2)
    return ell


@dataclass(frozen=True)
class TwoAgentPath:
    """One deterministic trajectory conditioned on an outage time."""

    grid_points: np.ndarray
    x1: np.ndarray
    price: np.ndarray
    rate1: np.ndarray
    state2: np.ndarray
    jump_time: float | None
    price_pre_jump: float | None = None
    price_post_jump: float | None = None

    @property
    def rate2(self) -> np.ndarray:
        return -self.rate1

    def x2(self, x01: float, x02: float) -> np.ndarray:
        return x02 + x01 - self.x1


def _rk4_span(kern: _TwoAgentKernel, t0: float, t1: float, x: float, state2: int,
              substeps: int) -> float:
    span = t1 - t0
    if span <= 0:
        return x
    n = max(1, substeps)
    h = span / n
    t = t0
    for _ in range(n):
        k1 = kern.ode_rhs(t, x, state2)
        k2 = kern.ode_rhs(t + 0.5 * h, x + 0.5 * h * k1, state2)
        k3 = kern.ode_rhs(t + 0.5 * h, x + 0.5 * h * k2, state2)
        k4 = kern.ode_rhs(t + h, x + h * k3, state2)
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return x


def two_agent_solve(scenario: MarketScenario, tables: list[RiccatiTable],
                    jump_time: float | None = None, substeps: int = 2) -> TwoAgentPath:
    """Integrate the two-agent equilibrium conditioned on one outage time.

    ``jump_time`` is the (exact, possibly off-grid) time agent 1's partner
    jumps to the high-cost state; ``None`` means no outage before delivery.
    Integration is piecewise RK4, restarting from the exact jump time.
    """
    kern = _TwoAgentKernel(scenario, tables)
    grid = scenario.grid
    pts = grid.points
    K = grid.steps
    tau = None
    if jump_time is not None and 0.0 <= jump_time < grid.horizon:
        tau = float(jump_time)

    x = kern.x01
    x_path = np.empty(K + 1)
    states = np.zeros(K + 1, dtype=np.int64)
    x_path[0] = x
    state = 0
    price_pre = price_post = None
    for k in range(K):
        t0, t1 = pts[k], pts[k + 1]
        if tau is not None and t0 <= tau < t1 and state == 0:
            x = _rk4_span(kern, t0, tau, x, 0, substeps)
            price_pre = kern.price(tau, x, 0)
            state = 1
            price_post = kern.price(tau, x, 1)
            x = _rk4_span(kern, tau, t1, x, 1, substeps)
        else:
            x = _rk4_span(kern, t0, t1, x, state, substeps)
        x_path[k + 1] = x
        states[k + 1] = state
    # node k carries the regime holding at t_k (the chain is right-continuous)
    if tau is not None:
        states = (pts >= tau).astype(np.int64)

    price = np.array([kern.price(pts[k], x_path[k], int(states[k])) for k in range(K + 1)])
    rate1 = np.array([kern.rate1(pts[k], x_path[k], int(states[k])) for k in range(K + 1)])
    return TwoAgentPath(
        grid_points=pts, x1=x_path, price=price, rate1=rate1, state2=states,
        jump_time=tau, price_pre_jump=price_pre, price_post_jump=price_post,
    )
