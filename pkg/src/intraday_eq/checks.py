"""Named verification checks backing the ``check`` command and the test suite.

Each check returns a :class:`CheckResult` with a one-line detail string, so
failures are individually named. Statistical checks pin the master seed;
the documented path counts keep every check at desk scale.

Power note for the drift fault injection: a bias of 0.01*dt per step shifts
the pooled drift z-score by about sqrt(T)/zeta at 10^4 paths. On the
published two-type scenarios zeta is around 29, so the shift is ~0.07 and no
test at any sane size could see it; the injection therefore runs on a
low-volatility scenario (zeta about 0.05, shift about 20) where the test has
power near one. The no-bias half runs on the two-type scenarios as stated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import analysis, jump, nojump, oracle, pathsim, riccati, scenarios
from .model import AgentSpec, MarketScenario, ScenarioError, load_scenario

__all__ = ["CheckResult", "run_all", "CRITERIA"]

DEFAULT_PATHS = 10_000


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


class _Context:
    """Lazily built, shared ensembles and tables for the whole run."""

    def __init__(self, seed: int, n_paths: int):
        self.seed = seed
        self.n_paths = n_paths
        self._ensembles: dict[str, pathsim.Ensemble] = {}
        self._tables: dict[str, list] = {}

    def tables(self, name: str, scenario: MarketScenario):
        if name not in self._tables:
            self._tables[name] = riccati.solve_all(scenario)
        return self._tables[name]

    def ensemble(self, name: str, scenario: MarketScenario, mode: str,
                 n_paths: int | None = None) -> pathsim.Ensemble:
        if name not in self._ensembles:
            plan = pathsim.RngPlan(self.seed)
            self._ensembles[name] = pathsim.simulate_equilibrium(
                scenario, plan, n_paths or self.n_paths, mode=mode,
                tables=self.tables(name, scenario),
            )
        return self._ensembles[name]


def _result(name: str, passed: bool, detail: str) -> CheckResult:
    return CheckResult(name=name, passed=bool(passed), detail=detail)


# --- criterion 1 -----------------------------------------------------------

def check_riccati_closed_form(ctx: _Context) -> CheckResult:
    agent = AgentSpec(gamma=1.0, eta=2.0, cost_states=(2.0,))
    from .model import TimeGrid

    grid = TimeGrid(1.0, 500)
    table = riccati.solve_riccati(agent, grid, substeps=10)
    exact = riccati.closed_form_y2(agent, 2.0, grid.points, 1.0)
    max_err = float(np.max(np.abs(table.values[0] - exact)))

    errs = []
    for steps in (8, 16, 32):
        g = TimeGrid(1.0, steps)
        t = riccati.solve_riccati(agent, g, substeps=1)
        errs.append(float(np.max(np.abs(
            t.values[0] - riccati.closed_form_y2(agent, 2.0, g.points, 1.0)))))
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    ok = max_err < 1e-8 and all(12.0 <= r <= 22.0 for r in ratios)
    return _result(
        "riccati closed-form agreement",
        ok,
        f"max node error {max_err:.2e} (< 1e-8); halving ratios "
        + ", ".join(f"{r:.1f}" for r in ratios) + " (~16x)",
    )


# --- criterion 2 -----------------------------------------------------------

def check_riccati_positivity(ctx: _Context, n_agents: int = 1000) -> CheckResult:
    rng = np.random.default_rng(ctx.seed)
    from .model import TimeGrid

    grid = TimeGrid(1.0, 500)
    max_m = 4
    gammas = np.exp(rng.uniform(np.log(0.01), np.log(100.0), n_agents))
    yT = np.zeros((n_agents, max_m))
    lam = np.zeros((n_agents, max_m, max_m))
    for b in range(n_agents):
        eta = math.exp(rng.uniform(math.log(0.1), math.log(100.0)))
        m = int(rng.integers(1, max_m + 1))
        states = np.exp(rng.uniform(np.log(0.1), np.log(100.0), m))
        intensity = np.zeros((m, m))
        if m > 1:
            intensity[:] = rng.uniform(0.0, 2.0, (m, m))
            np.fill_diagonal(intensity, 0.0)
            np.fill_diagonal(intensity, -intensity.sum(axis=1))
        # AgentSpec re-validates the draw
        AgentSpec(gamma=gammas[b], eta=eta, cost_states=tuple(states),
                  intensity=tuple(tuple(row) for row in intensity))
        yT[b, :m] = 0.5 * eta * states / (eta + states)
        lam[b, :m, :m] = intensity
    try:
        values, clamps = riccati.solve_riccati_batch(gammas, yT, lam, grid, substeps=10)
    except riccati.RiccatiError as err:
        return _result("riccati positivity", False, f"solver rejected a draw: {err}")
    negatives = int(np.count_nonzero(values < 0.0))
    return _result(
        "riccati positivity",
        negatives == 0,
        f"{n_agents} randomized agents, min value {values.min():.1e}, "
        f"{int(clamps.sum())} roundoff clamps, {negatives} entries below 0",
    )


# --- criterion 3 -----------------------------------------------------------

def check_horizon_weight_identity(ctx: _Context) -> CheckResult:
    worst = 0.0
    for name, builder in (("homogeneous", scenarios.homogeneous),
                          ("table1_left", scenarios.table1_left),
                          ("hetero_drift", scenarios.hetero_drift)):
        scenario = builder()
        tables = ctx.tables(name, scenario)
        pts = scenario.grid.points
        for i, agent in enumerate(scenario.agents):
            y = tables[i].values[agent.initial_state]
            seg = 0.5 * (y[1:] + y[:-1]) * np.diff(pts)
            tail = np.concatenate((seg[::-1].cumsum()[::-1], [0.0]))
            a = (scenario.horizon - pts) * y / agent.gamma
            worst = max(worst, float(np.max(np.abs(a - (1.0 - np.exp(-tail / agent.gamma))))))
    return _result(
        "remaining-horizon weight identity",
        worst < 1e-6,
        f"max |a - (1 - discount to delivery)| = {worst:.2e} (< 1e-6)",
    )


# --- criterion 4 -----------------------------------------------------------

def check_rank_one_inverse(ctx: _Context, trials: int = 1000) -> CheckResult:
    rng = np.random.default_rng(ctx.seed + 1)
    worst_prod = 0.0
    worst_inv = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 9))
        a = rng.uniform(0.0, 1.0, n)
        gammas = np.exp(rng.uniform(np.log(0.01), np.log(100.0), n))
        gamma_bar = 1.0 / np.sum(1.0 / gammas)
        direct = np.eye(n) - gamma_bar * np.outer(a, 1.0 / gammas)
        inv = jump.invert_rank_one(a, gammas)
        worst_prod = max(worst_prod, float(np.max(np.abs(inv @ direct - np.eye(n)))))
        dense = np.linalg.inv(direct)
        rel = np.max(np.abs(inv - dense) / (1.0 + np.abs(dense)))
        worst_inv = max(worst_inv, float(rel))
    ok = worst_prod < 1e-10 and worst_inv < 1e-9
    return _result(
        "rank-one inverse identity",
        ok,
        f"{trials} draws: max |product - I| = {worst_prod:.2e} (< 1e-10), "
        f"max relative gap to dense inverse = {worst_inv:.2e}",
    )


# --- criterion 5 -----------------------------------------------------------

def check_clearing(ctx: _Context) -> CheckResult:
    runs = [
        ("homogeneous", scenarios.homogeneous(), "nojump-closed-form"),
        ("table1_left", scenarios.table1_left(), "nojump-closed-form"),
        ("table1_right", scenarios.table1_right(), "nojump-closed-form"),
        ("two_agent_jump_largen", scenarios.two_agent_jump(), "large-n-approx"),
    ]
    worst = 0.0
    for name, scenario, mode in runs:
        ens = ctx.ensemble(name, scenario, mode)
        worst = max(worst, ens.clearing_max)
    return _result(
        "market clearing",
        worst < 1e-10,
        f"max |sum of rates| over {len(runs)} ensembles x {ctx.n_paths} paths "
        f"= {worst:.2e} (< 1e-10)",
    )


# --- criterion 6 -----------------------------------------------------------

def check_martingale(ctx: _Context) -> CheckResult:
    details = []
    ok = True
    for name, scenario in (("table1_left", scenarios.table1_left()),
                           ("table1_right", scenarios.table1_right())):
        ens = ctx.ensemble(name, scenario, "nojump-closed-form")
        rep = analysis.martingale_test(ens)
        ok &= rep.passed(3.0)
        details.append(
            f"{name}: |z_P|={abs(rep.pooled_z_price):.2f}, "
            f"max|z_q|={float(np.max(np.abs(rep.pooled_z_rates))):.2f}"
        )

    low = ctx.ensemble("low_volatility", scenarios.low_volatility(), "nojump-closed-form")
    bias = 0.01 * low.scenario.grid.dt
    rep_p = analysis.martingale_test(analysis.inject_price_drift(low, bias))
    rep_q = analysis.martingale_test(analysis.inject_rate_drift(low, 0, bias))
    detected = abs(rep_p.pooled_z_price) > 3.0 and abs(rep_q.pooled_z_rates[0]) > 3.0
    ok &= detected
    details.append(
        f"injected 0.01*dt drift: |z_P|={abs(rep_p.pooled_z_price):.1f}, "
        f"|z_q0|={abs(rep_q.pooled_z_rates[0]):.1f} (both > 3)"
    )
    return _result("martingale drift", ok, "; ".join(details))


# --- criterion 7 -----------------------------------------------------------

def check_volatility_law(ctx: _Context) -> CheckResult:
    scenario = scenarios.homogeneous()
    ens = ctx.ensemble("homogeneous", scenario, "nojump-closed-form")
    realized = analysis.realized_volatility(ens)
    agent = scenario.agents[0]
    target = nojump.zeta_sq_identical(
        scenario.n_agents, agent.rho, agent.sigma_sq, agent.sigma0_sq,
        agent.terminal_penalty_weight(), scenario.horizon, realized.t,
    )
    mask = realized.t <= 0.9 * scenario.horizon
    rel = np.abs(realized.zeta_sq[mask] - target[mask]) / target[mask]
    worst = float(np.max(rel))
    return _result(
        "volatility law",
        worst < 0.05,
        f"max relative error {100 * worst:.2f}% over t <= 0.9T "
        f"(target at t=0: {target[0]:.3f}, < 5%)",
    )


# --- criterion 8 -----------------------------------------------------------

def check_deterministic_solution(ctx: _Context) -> CheckResult:
    scenario = scenarios.two_agent_deterministic()
    ens = ctx.ensemble("two_agent_deterministic", scenario, "nojump-closed-form",
                       n_paths=4)
    err_p = float(np.max(np.abs(ens.prices - 5.0)))
    err_q = float(np.max(np.abs(ens.rates[:, 0, :] - 5.0 / 3.0)))
    report = oracle.convergence_report(
        scenario, (25, 50, 100, 200),
        target_price=5.0, target_rates=np.array([5.0 / 3.0, -5.0 / 3.0]),
    )
    branch = ("errors at roundoff floor" if report.at_exactness_floor
              else f"fitted order {report.fitted_order:.2f}")
    ok = err_p < 1e-6 and err_q < 1e-6 and report.converged
    return _result(
        "deterministic exact solution",
        ok,
        f"max |P - 5| = {err_p:.2e}, max |q1 - 5/3| = {err_q:.2e} (< 1e-6); "
        f"oracle max error {max(report.max_err_price):.2e}, {branch}",
    )


# --- criterion 9 -----------------------------------------------------------

def check_oracle_agreement(ctx: _Context) -> CheckResult:
    scenario = scenarios.hetero_drift()
    tables = ctx.tables("hetero_drift", scenario)
    state = jump.MatrixState.from_tables(
        scenario, tables, [a.initial_state for a in scenario.agents],
        scenario.d0(), scenario.x0(), t=0.0,
    )
    target_price = jump.price_general(state)
    target_rates = jump.x_drift_general(state)
    report = oracle.convergence_report(scenario, (25, 50, 100, 200),
                                       target_price, target_rates)
    final = report.max_err_price[-1]
    decay = report.errors_decreasing or report.at_exactness_floor
    ok = final < 5e-2 and decay
    branch = ("roundoff floor" if report.at_exactness_floor else "monotone decay")
    return _result(
        "oracle agreement with drift",
        ok,
        f"errors {['%.1e' % e for e in report.max_err_price]} ({branch}); "
        f"final {final:.2e} (< 5e-2)",
    )


# --- criterion 10 ----------------------------------------------------------

def check_volatility_shapes(ctx: _Context) -> CheckResult:
    t1, t2 = scenarios.table1_left_types()
    left = analysis.samuelson_sweep(t1, t2, [1.0, 0.115, 0.05, 0.005, 0.0],
                                    n_agents=200, horizon=scenarios.MIX_HORIZON)
    by_alpha = {p.alpha: p for p in left}
    checks = [
        by_alpha[1.0].classification == "decreasing",
        by_alpha[0.115].classification == "decreasing" and by_alpha[0.115].concave,
        by_alpha[0.05].classification == "non-monotone",
        by_alpha[0.005].classification == "increasing",
        by_alpha[0.0].classification == "flat" and float(np.max(by_alpha[0.0].zeta_sq)) == 0.0,
    ]
    r1, r2 = scenarios.table1_right_types()
    right = analysis.samuelson_sweep(r1, r2, [1.0, 0.75, 0.5],
                                     n_agents=200, horizon=scenarios.MIX_HORIZON)
    right_classes = [p.classification for p in right]
    checks.append(right_classes == ["decreasing", "non-monotone", "increasing"])
    detail = (
        "first mix: " + ", ".join(
            f"a={p.alpha:g}:{p.classification}{'(concave)' if p.alpha == 0.115 and p.concave else ''}"
            for p in left)
        + "; second mix at a=1/0.75/0.5: " + "/".join(right_classes)
    )
    return _result("volatility shape sweep", all(checks), detail)


# --- criterion 11 ----------------------------------------------------------

def check_outage_study(ctx: _Context) -> CheckResult:
    base = scenarios.two_agent_jump()
    lams = np.linspace(0.0, 1.0, 21)
    points = analysis.lambda_sweep(base, lams)
    p0 = np.array([p.p0 for p in points])
    q2 = np.array([p.q2_0 for p in points])
    increasing_p = bool(np.all(np.diff(p0) > 0))
    increasing_q = bool(np.all(np.diff(q2) > 0))
    sign_change = bool(q2[0] < 0 < q2[-1])

    ens = ctx.ensemble("two_agent_jump_paths", base, "two-agent-jump", n_paths=64)
    tables = ctx.tables("two_agent_jump_paths", base)
    plan = pathsim.RngPlan(ctx.seed)
    lam = base.agents[1].intensity[0][1]
    jumps_seen = 0
    upward = True
    for p in range(64):
        draw = plan.generator(p, plan.chain_stream(2, 1)).exponential(1.0 / lam)
        if draw < base.horizon:
            path = jump.two_agent_solve(base, tables, draw)
            jumps_seen += 1
            upward &= path.price_post_jump > path.price_pre_jump
    ok = increasing_p and increasing_q and sign_change and jumps_seen > 0 and upward
    return _result(
        "outage study",
        ok,
        f"P0 strictly increasing: {increasing_p}; q2_0 strictly increasing with "
        f"sign change: {increasing_q and sign_change} "
        f"(range {q2[0]:.2f}..{q2[-1]:.2f}); upward price jump on all "
        f"{jumps_seen} outage paths: {upward}",
    )


# --- criterion 12 ----------------------------------------------------------

def check_variational_optimality(ctx: _Context) -> CheckResult:
    scenario = scenarios.homogeneous()
    ens = ctx.ensemble("homogeneous", scenario, "nojump-closed-form")
    pts = scenario.grid.points
    base = pathsim.evaluate_cost(scenario, 0, ens)
    windows = [(0.0, 0.25), (0.25, 0.5), (0.5, 1.0)]
    worst_margin = math.inf
    n_checks = 0
    for lo, hi in windows:
        bump = ((pts >= lo * scenario.horizon) & (pts < hi * scenario.horizon)).astype(float)
        for delta in (-1.0, -0.1, 0.1, 1.0):
            pert = ens.rates[:, 0, :] + delta * bump[:, None]
            cost = pathsim.evaluate_cost(scenario, 0, ens, rates=pert)
            diff = cost.per_path - base.per_path
            se = float(diff.std(ddof=1) / math.sqrt(len(diff)))
            margin = float(diff.mean()) + 2.0 * se
            worst_margin = min(worst_margin, margin)
            n_checks += 1
    return _result(
        "variational optimality",
        worst_margin >= 0.0,
        f"{n_checks} bump perturbations: min of mean(cost increase) + 2 SE "
        f"= {worst_margin:.3e} (>= 0)",
    )


# --- extra module-level probes (run by `check` alongside the criteria) ------

def check_scenario_validation(ctx: _Context) -> CheckResult:
    good = scenarios.scenario_document(scenarios.homogeneous())
    try:
        load_scenario(good)
    except ScenarioError as err:
        return _result("scenario validation", False, f"valid document rejected: {err}")
    bad = scenarios.scenario_document(scenarios.homogeneous())
    bad["agents"][0]["rho"] = 1.5
    try:
        load_scenario(bad)
        return _result("scenario validation", False, "rho = 1.5 was accepted")
    except ScenarioError as err:
        named = "rho" in str(err)
        return _result("scenario validation", named,
                       f"rho violation rejected, message names field: {named}")


def check_weights_invariants(ctx: _Context, scenario: MarketScenario | None = None) -> CheckResult:
    scenario = scenario or scenarios.homogeneous()
    if scenario.has_jumps or not scenario.drift_free:
        return _result("weight invariants", True, "skipped (jump or drift scenario)")
    tables = riccati.solve_all(scenario)
    try:
        w = nojump.compute_weights(scenario, tables)
    except ValueError as err:
        return _result("weight invariants", False, str(err))
    sum_f = float(np.max(np.abs(w.F.sum(axis=0) - 1.0)))
    sum_pi = float(np.max(np.abs(w.pi.sum(axis=0) - 1.0)))
    ok = sum_f < 1e-9 and sum_pi < 1e-9 and np.all(1.0 - w.gamma_bar * w.theta > 0)
    return _result("weight invariants", ok,
                   f"max |sum F - 1| = {sum_f:.1e}, max |sum pi - 1| = {sum_pi:.1e}")


CRITERIA = (
    ("1", check_riccati_closed_form),
    ("2", check_riccati_positivity),
    ("3", check_horizon_weight_identity),
    ("4", check_rank_one_inverse),
    ("5", check_clearing),
    ("6", check_martingale),
    ("7", check_volatility_law),
    ("8", check_deterministic_solution),
    ("9", check_oracle_agreement),
    ("10", check_volatility_shapes),
    ("11", check_outage_study),
    ("12", check_variational_optimality),
)


def run_all(seed: int = 42, n_paths: int = DEFAULT_PATHS,
            scenario: MarketScenario | None = None) -> list[CheckResult]:
    """Run every acceptance criterion plus the module probes."""
    ctx = _Context(seed, n_paths)
    results = [
        check_scenario_validation(ctx),
        check_weights_invariants(ctx, scenario),
    ]
    for label, fn in CRITERIA:
        res = fn(ctx)
        results.append(CheckResult(f"criterion {label}: {res.name}", res.passed, res.detail))
    return results
