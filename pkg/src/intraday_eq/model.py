"""Domain types, scenario configuration, and validation for the N-agent market.

A scenario bundles the per-agent parameters (trading friction, imbalance
penalty, demand-forecast dynamics, outage chain) with a delivery horizon and a
uniform time grid. Scenario documents are plain JSON; ``load_scenario``
validates both the schema and every parameter invariant and raises
:class:`ScenarioError` naming the offending field.

Units are MW for power, hours for time, and a generic currency; no unit
system is enforced in code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "ScenarioError",
    "AgentSpec",
    "MarketScenario",
    "TimeGrid",
    "load_scenario",
    "forecast_volatility",
    "optimal_production",
]


class ScenarioError(ValueError):
    """A scenario document or parameter set violates the schema or an invariant."""


def _require_finite(name: str, value: float) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{name} must be a number, got {value!r}") from None
    if not math.isfinite(value):
        raise ScenarioError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class AgentSpec:
    """All model parameters of one market participant.

    ``cost_states`` lists the marginal-cost coefficients the agent's outage
    chain can visit; ``intensity`` is the chain's generator matrix over those
    states (rows sum to zero). A single state with a 1x1 zero matrix models a
    constant production cost.

    gamma:      liquidity cost coefficient (currency*h/MW^2, > 0)
    eta:        imbalance penalty coefficient (> 0)
    mu:         demand-forecast drift (MW/h)
    sigma_sq:   forecast variance slope (MW^2/h, >= 0)
    sigma0_sq:  residual forecast variance (MW^2, >= 0)
    rho:        correlation with the common noise, in [-1, 1]
    d0:         initial demand forecast (MW)
    x0:         initial inventory (MW)
    """

    gamma: float
    eta: float
    mu: float = 0.0
    sigma_sq: float = 0.0
    sigma0_sq: float = 0.0
    rho: float = 0.0
    d0: float = 0.0
    x0: float = 0.0
    cost_states: tuple[float, ...] = (1.0,)
    initial_state: int = 0
    intensity: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self) -> None:
        for name in ("gamma", "eta", "mu", "sigma_sq", "sigma0_sq", "rho", "d0", "x0"):
            object.__setattr__(self, name, _require_finite(name, getattr(self, name)))
        if self.gamma <= 0:
            raise ScenarioError(f"gamma must be > 0, got {self.gamma}")
        if self.eta <= 0:
            raise ScenarioError(f"eta must be > 0, got {self.eta}")
        if self.sigma_sq < 0:
            raise ScenarioError(f"sigma_sq must be >= 0, got {self.sigma_sq}")
        if self.sigma0_sq < 0:
            raise ScenarioError(f"sigma0_sq must be >= 0, got {self.sigma0_sq}")
        if not -1.0 <= self.rho <= 1.0:
            raise ScenarioError(f"rho must lie in [-1, 1], got {self.rho}")

        states = tuple(_require_finite(f"cost_states[{i}]", e) for i, e in enumerate(self.cost_states))
        if len(states) == 0:
            raise ScenarioError("cost_states must be non-empty")
        if any(e <= 0 for e in states):
            raise ScenarioError(f"cost_states must all be > 0, got {states}")
        object.__setattr__(self, "cost_states", states)

        if not isinstance(self.initial_state, (int, np.integer)) or isinstance(self.initial_state, bool):
            raise ScenarioError(f"initial_state must be an integer index, got {self.initial_state!r}")
        if not 0 <= self.initial_state < len(states):
            raise ScenarioError(
                f"initial_state must index cost_states (0..{len(states) - 1}), got {self.initial_state}"
            )

        m = len(states)
        raw = self.intensity if self.intensity is not None else tuple((0.0,) * m for _ in range(m))
        rows = []
        if len(raw) != m:
            raise ScenarioError(f"intensity must be a {m}x{m} matrix, got {len(raw)} rows")
        for i, row in enumerate(raw):
            row = tuple(_require_finite(f"intensity[{i}][{j}]", v) for j, v in enumerate(row))
            if len(row) != m:
                raise ScenarioError(f"intensity row {i} must have {m} entries, got {len(row)}")
            if abs(sum(row)) > 1e-9 * max(1.0, max(abs(v) for v in row)):
                raise ScenarioError(f"intensity row {i} must sum to 0, got {sum(row)}")
            for j, v in enumerate(row):
                if i == j and v > 0:
                    raise ScenarioError(f"intensity diagonal entry [{i}][{i}] must be <= 0, got {v}")
                if i != j and v < 0:
                    raise ScenarioError(f"intensity off-diagonal entry [{i}][{j}] must be >= 0, got {v}")
            rows.append(row)
        object.__setattr__(self, "intensity", tuple(rows))

    @property
    def n_states(self) -> int:
        return len(self.cost_states)

    @property
    def has_jumps(self) -> bool:
        """True if any transition of the outage chain has positive rate."""
        return any(v > 0 for i, row in enumerate(self.intensity) for j, v in enumerate(row) if i != j)

    def marginal_cost_slope(self, state_value: float | None = None) -> float:
        """Effective quadratic-penalty slope eta*e/(eta+e) for a cost state."""
        e = self.cost_states[self.initial_state] if state_value is None else float(state_value)
        return self.eta * e / (self.eta + e)

    def terminal_penalty_weight(self, state_value: float | None = None) -> float:
        """Terminal weight eta*e/(2*(eta+e)) of the squared residual demand."""
        return 0.5 * self.marginal_cost_slope(state_value)

    def intensity_matrix(self) -> np.ndarray:
        return np.array(self.intensity, dtype=float)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < t_1 < ... < t_K = horizon."""

    horizon: float
    steps: int

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ScenarioError(f"horizon must be > 0, got {self.horizon}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ScenarioError(f"grid steps must be a positive integer, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @cached_property
    def points(self) -> np.ndarray:
        pts = np.linspace(0.0, self.horizon, self.steps + 1)
        pts.flags.writeable = False
        return pts


@dataclass(frozen=True)
class MarketScenario:
    """A market of N agents sharing one delivery horizon and time grid."""

    agents: tuple[AgentSpec, ...]
    horizon: float
    grid_steps: int = 500

    def __post_init__(self) -> None:
        agents = tuple(self.agents)
        if len(agents) < 1:
            raise ScenarioError("agents must contain at least one agent")
        for i, a in enumerate(agents):
            if not isinstance(a, AgentSpec):
                raise ScenarioError(f"agents[{i}] must be an AgentSpec")
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "horizon", _require_finite("horizon", self.horizon))
        if self.horizon <= 0:
            raise ScenarioError(f"horizon must be > 0, got {self.horizon}")
        if int(self.grid_steps) != self.grid_steps or self.grid_steps < 2:
            raise ScenarioError(f"grid_steps must be an integer >= 2, got {self.grid_steps}")
        object.__setattr__(self, "grid_steps", int(self.grid_steps))

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @cached_property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.horizon, self.grid_steps)

    @property
    def has_jumps(self) -> bool:
        return any(a.has_jumps for a in self.agents)

    @property
    def drift_free(self) -> bool:
        return all(a.mu == 0.0 for a in self.agents)

    def replace_steps(self, steps: int) -> "MarketScenario":
        return MarketScenario(self.agents, self.horizon, steps)

    def gammas(self) -> np.ndarray:
        return np.array([a.gamma for a in self.agents])

    def mus(self) -> np.ndarray:
        return np.array([a.mu for a in self.agents])

    def x0(self) -> np.ndarray:
        return np.array([a.x0 for a in self.agents])

    def d0(self) -> np.ndarray:
        return np.array([a.d0 for a in self.agents])


_SCENARIO_KEYS = {"horizon", "grid_steps", "agents"}
_AGENT_KEYS = {
    "gamma", "eta", "mu", "sigma_sq", "sigma0_sq", "rho", "d0", "x0",
    "cost_states", "initial_state", "intensity",
}


def _agent_from_mapping(doc: dict, where: str) -> AgentSpec:
    unknown = set(doc) - _AGENT_KEYS
    if unknown:
        raise ScenarioError(f"{where}: unknown key {sorted(unknown)[0]!r}")
    missing = {"gamma", "eta"} - set(doc)
    if missing:
        raise ScenarioError(f"{where}: missing required key {sorted(missing)[0]!r}")
    kwargs = dict(doc)
    if "cost_states" in kwargs:
        if not isinstance(kwargs["cost_states"], (list, tuple)) or not kwargs["cost_states"]:
            raise ScenarioError(f"{where}: cost_states must be a non-empty array of numbers")
        kwargs["cost_states"] = tuple(kwargs["cost_states"])
    if "intensity" in kwargs and kwargs["intensity"] is not None:
        if not isinstance(kwargs["intensity"], (list, tuple)):
            raise ScenarioError(f"{where}: intensity must be an array of arrays")
        kwargs["intensity"] = tuple(tuple(row) for row in kwargs["intensity"])
    try:
        return AgentSpec(**kwargs)
    except ScenarioError as err:
        raise ScenarioError(f"{where}: {err}") from None


def load_scenario(source) -> MarketScenario:
    """Build a validated :class:`MarketScenario` from a configuration document.

    ``source`` may be a mapping already parsed from JSON, a path to a JSON
    file, or an open text file. Raises :class:`ScenarioError` naming the
    offending field on any schema or invariant violation.
    """
    if isinstance(source, MarketScenario):
        return source
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    elif hasattr(source, "read"):
        doc = json.load(source)
    elif isinstance(source, dict):
        doc = source
    else:
        raise ScenarioError(f"unsupported scenario source type: {type(source).__name__}")

    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    unknown = set(doc) - _SCENARIO_KEYS
    if unknown:
        raise ScenarioError(f"unknown key {sorted(unknown)[0]!r}")
    for key in ("horizon", "grid_steps", "agents"):
        if key not in doc:
            raise ScenarioError(f"missing required key {key!r}")
    if not isinstance(doc["agents"], (list, tuple)) or not doc["agents"]:
        raise ScenarioError("agents must be a non-empty array")
    agents = tuple(
        _agent_from_mapping(a, f"agents[{i}]") if isinstance(a, dict)
        else _raise_agent_type(i)
        for i, a in enumerate(doc["agents"])
    )
    return MarketScenario(agents=agents, horizon=doc["horizon"], grid_steps=doc["grid_steps"])


def _raise_agent_type(i: int):
    raise ScenarioError(f"agents[{i}] must be a JSON object")


def forecast_volatility(agent: AgentSpec, t, horizon: float):
    """Instantaneous demand-forecast volatility sqrt(sigma_sq*(T-t) + sigma0_sq).

    Non-increasing in ``t``. Accepts scalar or array ``t`` in [0, horizon].
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > horizon * (1 + 1e-12)):
        raise ValueError(f"t must lie in [0, {horizon}], got {t}")
    out = np.sqrt(agent.sigma_sq * np.maximum(horizon - t_arr, 0.0) + agent.sigma0_sq)
    return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


def optimal_production(agent: AgentSpec, terminal_cost_state: float, residual: float,
                       constrained: bool = False) -> float:
    """Optimal terminal production for a residual demand D_T - X_T.

    Unconstrained: eta/(eta+e) * residual. With the non-negativity
    constraint, the same value floored at zero.
    """
    e = float(terminal_cost_state)
    if not any(math.isclose(e, s, rel_tol=1e-12, abs_tol=1e-12) for s in agent.cost_states):
        raise ValueError(f"terminal_cost_state {e} is not one of the agent's cost_states")
    xi = agent.eta / (agent.eta + e) * residual
    if constrained and xi < 0.0:
        return 0.0
    return xi
