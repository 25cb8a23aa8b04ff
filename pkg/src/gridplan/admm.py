"""Distributed solve: iterate agent subproblems and operator price updates.

One iteration solves every prosumer's subproblem against the last published
foreign values (Jacobi), then the TSO's subproblem (against iteration-k
prosumer values under the ``jacobi`` schedule, or the fresh k+1 values under
``gauss_seidel``), then lets the operators move the prices along the coupling
residuals.  The loop stops when both the primal residual (coupling violations,
equivalently the price movement per unit penalty) and the dual residual
(penalty-scaled movement of the coupled variables) fall below tolerance.

Subproblem structure is constant across iterations, so each agent keeps one
warm-started solver whose cost vector and bounds are refreshed in place; a
penalty change (residual balancing) rebuilds the solver.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from gridplan import agents as ag
from gridplan.agents import AgentView, IterationValues, Penalties, Subproblem
from gridplan.model import (
    CAP_INEQUALITY,
    MARKET_MIXED,
    MARKET_P2P,
    MARKET_POOL,
    PlanningSolution,
    PriceSet,
    Scenario,
    annualized_prosumer_cost,
    differentiation_cost,
    tso_capex,
    validate_scenario,
)
from gridplan.qpcore import (
    STATUS_DUAL_INFEASIBLE,
    STATUS_PRIMAL_INFEASIBLE,
    QpSolver,
    SolverSettings,
)

JACOBI = "jacobi"
GAUSS_SEIDEL = "gauss_seidel"


class AdmmError(RuntimeError):
    pass


class SubproblemError(AdmmError):
    def __init__(self, agent: str, iteration: int, status: str):
        super().__init__(f"subproblem of agent {agent!r} failed at iteration {iteration}: {status}")
        self.agent = agent
        self.iteration = iteration


class DivergenceError(AdmmError):
    pass


@dataclass(frozen=True)
class AdmmConfig:
    """Penalty weights, stopping rule and schedule of the distributed solve."""

    q_trade: float = 1.0
    q_grid: float = 1.0
    q_pool: float = 1.0
    q_co2: float = 1.0
    max_iter: int = 2000
    eps_primal: float = 1e-4
    eps_dual: float = 1e-4
    schedule: str = JACOBI
    residual_balancing: bool = False
    balancing_every: int = 25
    subproblem_eps: float = 1e-7
    subproblem_polish: bool = False
    snapshot_every: int = 0

    def __post_init__(self):
        if min(self.q_trade, self.q_grid, self.q_pool, self.q_co2) <= 0:
            raise ValueError("penalty parameters must be > 0")
        if self.eps_primal <= 0 or self.eps_dual <= 0 or self.max_iter < 1:
            raise ValueError("tolerances must be > 0 and max_iter >= 1")
        if self.schedule not in (JACOBI, GAUSS_SEIDEL):
            raise ValueError(f"unknown schedule {self.schedule!r}")

    def penalties(self) -> Penalties:
        return Penalties(trade=self.q_trade, grid=self.q_grid, pool=self.q_pool, co2=self.q_co2)


@dataclass
class ConvergenceTrace:
    """Per-iteration residual norms, objective estimates and price snapshots."""

    primal: list[float] = field(default_factory=list)
    dual: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    snapshots: list[tuple[int, PriceSet]] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    stop_reason: str = ""

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iteration,primal,dual,objective\n")
            for i, (p, d, o) in enumerate(zip(self.primal, self.dual, self.objective), start=1):
                fh.write(f"{i},{p!r},{d!r},{o!r}\n")


def residuals(
    vals: IterationValues, prev: IterationValues, s: Scenario, cfg: AdmmConfig
) -> tuple[float, float]:
    """Infinity norms of the coupling violations and the scaled iterate change.

    Primal: reciprocity gaps, trade/arbitrage gaps, pool gaps, and the carbon
    cap violation (one-sided under an inequality cap).  Dual: penalty-scaled
    change of every coupled variable between the two iterates.
    """
    primal = 0.0
    dual = 0.0
    if s.market in (MARKET_P2P, MARKET_MIXED):
        for a, c in s.unordered_pairs():
            for t in range(s.time_steps):
                gap = vals.trades.get((a, c, t), 0.0) + vals.trades.get((c, a, t), 0.0)
                primal = max(primal, abs(gap))
        for n, m in s.ordered_pairs():
            for t in range(s.time_steps):
                gap = vals.trades.get((n, m, t), 0.0) - vals.tso_bilateral.get((n, m, t), 0.0)
                primal = max(primal, abs(gap))
                delta = vals.trades.get((n, m, t), 0.0) - prev.trades.get((n, m, t), 0.0)
                dual = max(dual, cfg.q_trade * abs(delta), cfg.q_grid * abs(delta))
                dz = vals.tso_bilateral.get((n, m, t), 0.0) - prev.tso_bilateral.get((n, m, t), 0.0)
                dual = max(dual, cfg.q_grid * abs(dz))
    if s.market in (MARKET_POOL, MARKET_MIXED):
        for p in s.prosumers:
            for t in range(s.time_steps):
                gap = vals.pool_injections.get((p.id, t), 0.0) - vals.tso_pool.get((p.id, t), 0.0)
                primal = max(primal, abs(gap))
                dn = vals.pool_injections.get((p.id, t), 0.0) - prev.pool_injections.get(
                    (p.id, t), 0.0
                )
                dz = vals.tso_pool.get((p.id, t), 0.0) - prev.tso_pool.get((p.id, t), 0.0)
                dual = max(dual, cfg.q_pool * abs(dn), cfg.q_pool * abs(dz))
    total_e = sum(vals.emissions.values())
    prev_e = sum(prev.emissions.values())
    if s.carbon_cap_mode == CAP_INEQUALITY:
        primal = max(primal, max(0.0, total_e - s.carbon_cap))
    else:
        primal = max(primal, abs(total_e - s.carbon_cap))
    dual = max(dual, cfg.q_co2 * abs(total_e - prev_e))
    return primal, dual


def run_admm(
    s: Scenario,
    cfg: AdmmConfig = AdmmConfig(),
    warm_start: PlanningSolution | None = None,
) -> tuple[PlanningSolution, ConvergenceTrace]:
    """Run the distributed negotiation for the scenario's market design.

    Raises :class:`SubproblemError` if an agent's QP fails and
    :class:`DivergenceError` when the residuals blow up.  Reaching
    ``max_iter`` is not an error: the trace records ``converged=False``.
    """
    violations = validate_scenario(s)
    if violations:
        raise AdmmError("invalid scenario: " + "; ".join(str(v) for v in violations))
    runner = _Runner(s, cfg, warm_start)
    return runner.run()


# ---------------------------------------------------------------------------
# internals
# ---------------------------------------------------------------------------

_PROSUMER_BUILDERS = {
    MARKET_P2P: ag.prosumer_subproblem_p2p,
    MARKET_POOL: ag.prosumer_subproblem_pool,
    MARKET_MIXED: ag.prosumer_subproblem_mixed,
}
_TSO_BUILDERS = {
    MARKET_P2P: ag.tso_subproblem_p2p,
    MARKET_POOL: ag.tso_subproblem_pool,
    MARKET_MIXED: ag.tso_subproblem_mixed,
}


class _Agent:
    """Cached solver for one agent; rebuilt only when penalties change."""

    def __init__(self, name: str, settings: SolverSettings):
        self.name = name
        self.settings = settings
        self.sub: Subproblem | None = None
        self.solver: QpSolver | None = None
        self.x: np.ndarray | None = None
        self.y: np.ndarray | None = None

    def solve(self, sub: Subproblem, iteration: int) -> np.ndarray:
        if self.solver is None:
            self.solver = QpSolver(sub.prob, self.settings)
            if self.x is not None:
                self.solver.warm_start(x=self.x, y=self.y)
        else:
            self.solver.update(q=sub.prob.q, lower=sub.prob.lower, upper=sub.prob.upper)
        self.sub = sub
        res = self.solver.solve()
        if res.status in (STATUS_PRIMAL_INFEASIBLE, STATUS_DUAL_INFEASIBLE):
            raise SubproblemError(self.name, iteration, res.status)
        self.x = res.x
        self.y = res.y
        return res.x

    def reset_solver(self) -> None:
        self.solver = None


class _Runner:
    def __init__(self, s: Scenario, cfg: AdmmConfig, warm: PlanningSolution | None):
        self.s = s
        self.cfg = cfg
        self.pen = cfg.penalties()
        settings = SolverSettings(
            eps_abs=cfg.subproblem_eps,
            eps_rel=cfg.subproblem_eps,
            polish=cfg.subproblem_polish,
            adaptive_rho=True,
        )
        self.agents = {p.id: _Agent(p.id, settings) for p in s.prosumers}
        self.tso = _Agent("tso", settings)
        self.prices = PriceSet() if warm is None else warm.prices
        self.vals = self._initial_values(warm)
        self.threads = max(1, int(os.environ.get("GRIDPLAN_THREADS", "1")))
        self.warm = warm

    def _initial_values(self, warm: PlanningSolution | None) -> IterationValues:
        if warm is None:
            return IterationValues()
        pool_inj = dict(warm.trades_pool)
        return IterationValues(
            trades=dict(warm.trades_bilateral),
            tso_bilateral=dict(warm.tso_arbitrage_bilateral),
            pool_injections=pool_inj,
            tso_pool=dict(warm.tso_arbitrage_pool),
            emissions=dict(warm.emissions),
        )

    # -- view assembly ------------------------------------------------------

    def _prosumer_view(self, pid: str) -> AgentView:
        s, vals = self.s, self.vals
        total_e = sum(vals.emissions.values())
        return AgentView(
            prices=self.prices,
            penalties=self.pen,
            neighbor_trades={
                (m, t): vals.trades.get((m, pid, t), 0.0)
                for m in s.neighbors(pid)
                for t in range(s.time_steps)
            },
            tso_bilateral={
                (m, t): vals.tso_bilateral.get((pid, m, t), 0.0)
                for m in s.neighbors(pid)
                for t in range(s.time_steps)
            },
            tso_pool={t: vals.tso_pool.get((pid, t), 0.0) for t in range(s.time_steps)},
            other_emissions=total_e - vals.emissions.get(pid, 0.0),
        )

    def _tso_view(self, trades, pool_inj) -> AgentView:
        return AgentView(
            prices=self.prices,
            penalties=self.pen,
            trades=trades,
            pool_net=pool_inj,
        )

    # -- decode ---------------------------------------------------------------

    def _decode_prosumer(self, pid: str, sub: Subproblem, x: np.ndarray):
        s = self.s
        trades, nets = {}, {}
        if s.market in (MARKET_P2P, MARKET_MIXED):
            for m in s.neighbors(pid):
                for t in range(s.time_steps):
                    trades[(pid, m, t)] = sub.value(x, ("tr+", pid, m, t)) - sub.value(
                        x, ("tr-", pid, m, t)
                    )
        if s.market == MARKET_POOL:
            p = s.prosumer(pid)
            for t in range(s.time_steps):
                net = -float(p.demand[t])
                for tech in s.generation_techs:
                    net += sub.value(x, ("p", tech.id, pid, t))
                for tech in s.storage_techs:
                    net += sub.value(x, ("pout", tech.id, pid, t)) - sub.value(
                        x, ("pin", tech.id, pid, t)
                    )
                nets[(pid, t)] = net
        if s.market == MARKET_MIXED:
            for t in range(s.time_steps):
                nets[(pid, t)] = sub.value(x, ("ppool", pid, t))
        return trades, nets, sub.value(x, ("e", pid))

    def _decode_tso(self, sub: Subproblem, x: np.ndarray):
        s = self.s
        z_bi, z_pool = {}, {}
        if s.market in (MARKET_P2P, MARKET_MIXED):
            for n, m in s.ordered_pairs():
                for t in range(s.time_steps):
                    z_bi[(n, m, t)] = sub.value(x, ("z", n, m, t))
        if s.market in (MARKET_POOL, MARKET_MIXED):
            for p in s.prosumers:
                for t in range(s.time_steps):
                    z_pool[(p.id, t)] = sub.value(x, ("zp", p.id, t))
        return z_bi, z_pool

    # -- main loop ------------------------------------------------------------

    def run(self) -> tuple[PlanningSolution, ConvergenceTrace]:
        s, cfg = self.s, self.cfg
        trace = ConvergenceTrace()
        build_pros = _PROSUMER_BUILDERS[s.market]
        build_tso = _TSO_BUILDERS[s.market]
        best_primal = np.inf
        grew_windows = 0

        if self.warm is not None:
            for p in s.prosumers:
                self.agents[p.id].x = None  # seeded through the first subproblem solve below
        pros_order = [p.id for p in s.prosumers]

        for it in range(1, cfg.max_iter + 1):

            def solve_one(pid: str):
                sub = build_pros(s, pid, self._prosumer_view(pid))
                agent = self.agents[pid]
                if agent.solver is None and self.warm is not None:
                    agent.solver = QpSolver(sub.prob, agent.settings)
                    agent.solver.warm_start(x=_seed_prosumer(sub, s, pid, self.warm, self))
                x = agent.solve(sub, it)
                return pid, sub, x

            if self.threads > 1 and len(pros_order) > 1:
                with ThreadPoolExecutor(max_workers=min(self.threads, len(pros_order))) as ex:
                    results = list(ex.map(solve_one, pros_order))
            else:
                results = [solve_one(pid) for pid in pros_order]

            new_trades, new_nets, new_e = {}, {}, {}
            for pid, sub, x in results:
                trades, nets, e = self._decode_prosumer(pid, sub, x)
                new_trades.update(trades)
                new_nets.update(nets)
                new_e[pid] = e

            if cfg.schedule == GAUSS_SEIDEL:
                tso_view = self._tso_view(new_trades, new_nets)
            else:
                tso_view = self._tso_view(dict(self.vals.trades), dict(self.vals.pool_injections))
            tso_sub = build_tso(s, tso_view)
            if self.tso.solver is None and self.warm is not None:
                self.tso.solver = QpSolver(tso_sub.prob, self.tso.settings)
                self.tso.solver.warm_start(x=_seed_tso(tso_sub, s, self.warm))
            tso_x = self.tso.solve(tso_sub, it)
            new_zbi, new_zpool = self._decode_tso(tso_sub, tso_x)

            prev = self.vals
            self.vals = IterationValues(
                trades=new_trades,
                tso_bilateral=new_zbi,
                pool_injections=new_nets,
                tso_pool=new_zpool,
                emissions=new_e,
            )

            old_prices = self.prices
            self._update_prices()

            r_prim, r_dual = residuals(self.vals, prev, s, cfg)
            r_prim = max(r_prim, self._carbon_residual(old_prices))
            objective = self._objective_estimate(results, tso_sub, tso_x)
            trace.primal.append(r_prim)
            trace.dual.append(r_dual)
            trace.objective.append(objective)
            if cfg.snapshot_every and it % cfg.snapshot_every == 0:
                trace.snapshots.append((it, self.prices))
            trace.iterations = it

            scale = 1.0 + self._coupled_magnitude()
            if r_prim <= cfg.eps_primal * scale and r_dual <= cfg.eps_dual * scale:
                trace.converged = True
                trace.stop_reason = "converged"
                break
            if not np.isfinite(r_prim) or not np.isfinite(r_dual) or r_prim > 1e9 * scale:
                raise DivergenceError(f"residuals blew up at iteration {it} (primal {r_prim:.2e})")
            best_primal = min(best_primal, r_prim)
            if it % 200 == 0:
                window_best = min(trace.primal[-200:])
                if window_best > 1e3 * max(best_primal, 1e-12):
                    grew_windows += 1
                    if grew_windows >= 3:
                        raise DivergenceError(
                            f"primal residual grew for {grew_windows} consecutive windows"
                        )
                else:
                    grew_windows = 0
            if cfg.residual_balancing and it % cfg.balancing_every == 0:
                self._rebalance(prev)
        else:
            trace.stop_reason = "max_iter"

        if not trace.stop_reason:
            trace.stop_reason = "max_iter"
        sol = self._assemble(results, tso_sub, tso_x)
        return sol, trace

    # -- operators ------------------------------------------------------------

    def _update_prices(self) -> None:
        s, cfg = self.s, self.cfg
        prices = self.prices
        if s.market in (MARKET_P2P, MARKET_MIXED):
            prices = ag.update_p2p_prices(s, prices, self.vals, self.pen.trade, self.pen.grid)
        if s.market in (MARKET_POOL, MARKET_MIXED):
            prices = ag.update_pool_price(s, prices, self.vals, self.pen.pool)
        carbon = ag.update_carbon_price(
            prices.carbon_price,
            sum(self.vals.emissions.values()),
            s.carbon_cap,
            self.pen.co2,
            s.carbon_cap_mode,
        )
        self.prices = replace(prices, carbon_price=carbon)

    def _carbon_residual(self, old_prices: PriceSet) -> float:
        return abs(self.prices.carbon_price - old_prices.carbon_price) / self.pen.co2

    def _coupled_magnitude(self) -> float:
        mags = [1.0]
        for d in (
            self.vals.trades,
            self.vals.tso_bilateral,
            self.vals.pool_injections,
            self.vals.tso_pool,
        ):
            if d:
                mags.append(max(abs(v) for v in d.values()))
        return max(mags)

    def _rebalance(self, prev: IterationValues) -> None:
        """Per-family residual balancing: double/halve a Q when its primal and
        dual residuals drift apart by more than 10x."""
        s, cfg = self.s, self.cfg
        changed = False
        fam = self._family_residuals(prev)
        q = {"trade": self.pen.trade, "grid": self.pen.grid, "pool": self.pen.pool, "co2": self.pen.co2}
        for name, (rp, rd) in fam.items():
            if rp > 10.0 * rd and q[name] < 1e8:
                q[name] = min(q[name] * 2.0, 1e8)
                changed = True
            elif rd > 10.0 * rp and q[name] > 1e-4:
                q[name] = max(q[name] / 2.0, 1e-4)
                changed = True
        if changed:
            self.pen = Penalties(trade=q["trade"], grid=q["grid"], pool=q["pool"], co2=q["co2"])
            for agent in list(self.agents.values()) + [self.tso]:
                agent.reset_solver()

    def _family_residuals(self, prev: IterationValues) -> dict[str, tuple[float, float]]:
        s = self.s
        vals = self.vals
        out = {}
        if s.market in (MARKET_P2P, MARKET_MIXED):
            rp = max(
                (
                    abs(vals.trades.get((a, c, t), 0.0) + vals.trades.get((c, a, t), 0.0))
                    for a, c in s.unordered_pairs()
                    for t in range(s.time_steps)
                ),
                default=0.0,
            )
            rd = self.pen.trade * max(
                (
                    abs(vals.trades.get(k, 0.0) - prev.trades.get(k, 0.0))
                    for k in set(vals.trades) | set(prev.trades)
                ),
                default=0.0,
            )
            out["trade"] = (rp, rd)
            rp = max(
                (
                    abs(vals.trades.get(k, 0.0) - vals.tso_bilateral.get(k, 0.0))
                    for k in set(vals.trades) | set(vals.tso_bilateral)
                ),
                default=0.0,
            )
            rd = self.pen.grid * max(
                (
                    abs(vals.tso_bilateral.get(k, 0.0) - prev.tso_bilateral.get(k, 0.0))
                    for k in set(vals.tso_bilateral) | set(prev.tso_bilateral)
                ),
                default=0.0,
            )
            out["grid"] = (rp, rd)
        if s.market in (MARKET_POOL, MARKET_MIXED):
            rp = max(
                (
                    abs(vals.pool_injections.get(k, 0.0) - vals.tso_pool.get(k, 0.0))
                    for k in set(vals.pool_injections) | set(vals.tso_pool)
                ),
                default=0.0,
            )
            rd = self.pen.pool * max(
                (
                    abs(vals.tso_pool.get(k, 0.0) - prev.tso_pool.get(k, 0.0))
                    for k in set(vals.tso_pool) | set(prev.tso_pool)
                ),
                default=0.0,
            )
            out["pool"] = (rp, rd)
        total_e = sum(vals.emissions.values())
        prev_e = sum(prev.emissions.values())
        if s.carbon_cap_mode == CAP_INEQUALITY:
            rp = max(0.0, total_e - self.s.carbon_cap)
        else:
            rp = abs(total_e - self.s.carbon_cap)
        out["co2"] = (rp, self.pen.co2 * abs(total_e - prev_e))
        return out

    # -- objective and assembly ------------------------------------------------

    def _objective_estimate(self, results, tso_sub: Subproblem, tso_x: np.ndarray) -> float:
        s = self.s
        total = 0.0
        for pid, sub, x in results:
            for tech in s.technologies:
                total += tech.capex_fom * sub.value(x, ("k", tech.id, pid)) / tech.annuity
                if tech.is_storage:
                    total += (
                        tech.storage_capex_fom * sub.value(x, ("ks", tech.id, pid)) / tech.annuity
                    )
            for tech in s.generation_techs:
                for t in range(s.time_steps):
                    total += tech.vom * sub.value(x, ("p", tech.id, pid, t))
            p = s.prosumer(pid)
            if s.market in (MARKET_P2P, MARKET_MIXED):
                for m in s.neighbors(pid):
                    pref = p.preferences.get(m, 0.0)
                    if pref:
                        for t in range(s.time_steps):
                            total += pref * abs(self.vals.trades.get((pid, m, t), 0.0))
        for line in s.lines:
            total += (
                line.length * line.capex_fom * tso_sub.value(tso_x, ("kl", line.id)) / line.annuity
            )
        return total

    def _assemble(self, results, tso_sub: Subproblem, tso_x: np.ndarray) -> PlanningSolution:
        s = self.s
        gen_invest, storage_invest = {}, {}
        production, charge, discharge, soc = {}, {}, {}, {}
        for pid, sub, x in results:
            for tech in s.technologies:
                gen_invest[(tech.id, pid)] = sub.value(x, ("k", tech.id, pid))
                if tech.is_storage:
                    storage_invest[(tech.id, pid)] = sub.value(x, ("ks", tech.id, pid))
            for tech in s.generation_techs:
                for t in range(s.time_steps):
                    production[(tech.id, pid, t)] = sub.value(x, ("p", tech.id, pid, t))
            for tech in s.storage_techs:
                for t in range(s.time_steps):
                    charge[(tech.id, pid, t)] = sub.value(x, ("pin", tech.id, pid, t))
                    discharge[(tech.id, pid, t)] = sub.value(x, ("pout", tech.id, pid, t))
                    soc[(tech.id, pid, t)] = sub.value(x, ("soc", tech.id, pid, t))
        line_invest = {line.id: tso_sub.value(tso_x, ("kl", line.id)) for line in s.lines}
        flows = {
            (line.id, t): tso_sub.value(tso_x, ("f", line.id, t))
            for line in s.lines
            for t in range(s.time_steps)
        }
        sol = PlanningSolution(
            market=s.market,
            gen_invest=gen_invest,
            storage_invest=storage_invest,
            line_invest=line_invest,
            production=production,
            charge=charge,
            discharge=discharge,
            soc=soc,
            trades_bilateral=dict(self.vals.trades),
            trades_pool=dict(self.vals.pool_injections),
            tso_arbitrage_bilateral=dict(self.vals.tso_bilateral),
            tso_arbitrage_pool=dict(self.vals.tso_pool),
            flows=flows,
            emissions=dict(self.vals.emissions),
            prices=self.prices,
            objective=0.0,
        )
        objective = tso_capex(s, sol)
        for p in s.prosumers:
            objective += annualized_prosumer_cost(s, sol, p.id)
            objective += differentiation_cost(s, sol, p.id)
        return replace(sol, objective=objective)


def _seed_prosumer(sub: Subproblem, s: Scenario, pid: str, sol: PlanningSolution, runner: _Runner):
    """Initial subproblem iterate taken from a full planning solution."""
    x = np.zeros(sub.prob.num_vars)
    for i, name in enumerate(sub.vars.names()):
        kind = name[0]
        if kind == "k":
            x[i] = sol.gen_invest.get((name[1], name[2]), 0.0)
        elif kind == "ks":
            x[i] = sol.storage_invest.get((name[1], name[2]), 0.0)
        elif kind == "p":
            x[i] = sol.production.get((name[1], name[2], name[3]), 0.0)
        elif kind == "pin":
            x[i] = sol.charge.get((name[1], name[2], name[3]), 0.0)
        elif kind == "pout":
            x[i] = sol.discharge.get((name[1], name[2], name[3]), 0.0)
        elif kind == "soc":
            x[i] = sol.soc.get((name[1], name[2], name[3]), 0.0)
        elif kind == "e":
            x[i] = sol.emissions.get(name[1], 0.0)
        elif kind == "tr+":
            x[i] = max(sol.trades_bilateral.get((name[1], name[2], name[3]), 0.0), 0.0)
        elif kind == "tr-":
            x[i] = max(-sol.trades_bilateral.get((name[1], name[2], name[3]), 0.0), 0.0)
        elif kind == "ppool":
            x[i] = sol.trades_pool.get((name[1], name[2]), 0.0)
        elif kind == "co2_slack":
            total_e = sum(sol.emissions.values())
            lam = sol.prices.carbon_price
            x[i] = max(0.0, total_e - s.carbon_cap + lam / runner.pen.co2)
    return x


def _seed_tso(sub: Subproblem, s: Scenario, sol: PlanningSolution):
    x = np.zeros(sub.prob.num_vars)
    for i, name in enumerate(sub.vars.names()):
        kind = name[0]
        if kind == "z":
            x[i] = sol.tso_arbitrage_bilateral.get((name[1], name[2], name[3]), 0.0)
        elif kind == "zp":
            x[i] = sol.tso_arbitrage_pool.get((name[1], name[2]), 0.0)
        elif kind == "kl":
            x[i] = sol.line_invest.get(name[1], 0.0)
        elif kind == "f":
            x[i] = sol.flows.get((name[1], name[2]), 0.0)
    return x
