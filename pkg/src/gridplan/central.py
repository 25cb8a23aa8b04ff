"""Centralized planning programs for the three market designs.

Each design assembles one sparse LP over all prosumers plus the TSO:

* p2p   -- objective sum f_n + g + sum I_{n,m} |p_{n,m,t}| with per-prosumer
           balance, reciprocity rows (one per unordered pair, the dual is the
           trade price shared by both orientations), grid-coupling rows
           (prosumer trade = TSO arbitrage, dual = grid price) and the carbon
           cap.
* pool  -- objective sum f_n + g; per-node balance net injection = TSO pool
           arbitrage (dual = nodal price); the TSO's pool trades sum to zero
           per step.
* mixed -- both trade families; a fixed fraction phi_n of the net injection
           settles bilaterally, the rest in the pool.

Absolute values are linearized by a nonnegative split p = p+ - p-, which
keeps every program a pure LP and the duals clean.  Prices are read from the
tagged coupling rows of the solved program.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from gridplan import qpcore
from gridplan.model import (
    CAP_EQUALITY,
    MARKET_MIXED,
    MARKET_P2P,
    MARKET_POOL,
    PlanningSolution,
    PriceSet,
    Scenario,
    validate_scenario,
)
from gridplan.network import build_ptdf
from gridplan.qpcore import QpSolution, QuadraticProgram, SolverSettings

INF = np.inf


class BuildError(ValueError):
    pass


class InfeasibleError(RuntimeError):
    """The planning program has no feasible point (or the solver failed)."""


class VariableIndex:
    """Bijection between symbolic variable identities and flat columns."""

    def __init__(self):
        self._by_name: dict[tuple, int] = {}
        self._names: list[tuple] = []

    def add(self, name: tuple) -> int:
        if name in self._by_name:
            raise BuildError(f"variable {name} added twice")
        col = len(self._names)
        self._by_name[name] = col
        self._names.append(name)
        return col

    def col(self, name: tuple) -> int:
        return self._by_name[name]

    def name(self, col: int) -> tuple:
        return self._names[col]

    def __contains__(self, name: tuple) -> bool:
        return name in self._by_name

    def __len__(self) -> int:
        return len(self._names)

    def names(self) -> tuple[tuple, ...]:
        return tuple(self._names)


class ConstraintTag:
    """Bijection between semantic row tags and row positions."""

    def __init__(self):
        self._by_tag: dict[tuple, int] = {}
        self._tags: list[tuple] = []

    def add(self, tag: tuple) -> int:
        if tag in self._by_tag:
            raise BuildError(f"row {tag} added twice")
        row = len(self._tags)
        self._by_tag[tag] = row
        self._tags.append(tag)
        return row

    def row(self, tag: tuple) -> int:
        return self._by_tag[tag]

    def tag(self, row: int) -> tuple:
        return self._tags[row]

    def __contains__(self, tag: tuple) -> bool:
        return tag in self._by_tag

    def __len__(self) -> int:
        return len(self._tags)

    def tags(self) -> tuple[tuple, ...]:
        return tuple(self._tags)


class ProgramBuilder:
    """Incremental sparse QP assembly with named columns and tagged rows.

    Variable bounds become identity rows tagged ("bound",) + name, so every
    multiplier is addressable by tag.  Quadratic terms accumulate into P;
    ``constant`` collects objective offsets from completed squares so that
    ``objective(x) + constant`` reproduces the modelled expression exactly.
    """

    def __init__(self):
        self.vars = VariableIndex()
        self.rows = ConstraintTag()
        self._cost: list[float] = []
        self._bounds: list[tuple[float, float]] = []
        self._rdata: list[list[tuple[int, float]]] = []
        self._rlo: list[float] = []
        self._rhi: list[float] = []
        self._pq: dict[tuple[int, int], float] = {}
        self.constant = 0.0

    def add_var(self, name: tuple, cost: float = 0.0, lb: float = -INF, ub: float = INF) -> int:
        col = self.vars.add(name)
        self._cost.append(cost)
        self._bounds.append((lb, ub))
        return col

    def add_cost(self, col: int, cost: float) -> None:
        self._cost[col] += cost

    def add_quad(self, col_i: int, col_j: int, value: float) -> None:
        """Add value to P[i, j] (and P[j, i]); diagonal adds once."""
        if value == 0.0:
            return
        i, j = (col_i, col_j) if col_i <= col_j else (col_j, col_i)
        self._pq[(i, j)] = self._pq.get((i, j), 0.0) + value

    def add_square(self, cols: list[int], coefs: list[float], offset: float, weight: float) -> None:
        """Add weight/2 * (sum_j coefs[j] x_cols[j] + offset)^2 to the objective."""
        if weight == 0.0:
            return
        for a, ca in zip(cols, coefs):
            for b, cb in zip(cols, coefs):
                if a <= b:
                    self.add_quad(a, b, weight * ca * cb)
        for a, ca in zip(cols, coefs):
            self.add_cost(a, weight * ca * offset)
        self.constant += 0.5 * weight * offset * offset

    def add_row(self, tag: tuple, coeffs: list[tuple[int, float]], lo: float, hi: float) -> int:
        row = self.rows.add(tag)
        self._rdata.append(list(coeffs))
        self._rlo.append(lo)
        self._rhi.append(hi)
        return row

    def build(self) -> QuadraticProgram:
        n = len(self.vars)
        rows = list(self._rdata)
        lo = list(self._rlo)
        hi = list(self._rhi)
        for col, (lb, ub) in enumerate(self._bounds):
            if lb != -INF or ub != INF:
                self.rows.add(("bound",) + self.vars.name(col))
                rows.append([(col, 1.0)])
                lo.append(lb)
                hi.append(ub)
        data, ri, ci = [], [], []
        for r, entries in enumerate(rows):
            for col, coef in entries:
                if coef != 0.0:
                    ri.append(r)
                    ci.append(col)
                    data.append(coef)
        A = sp.csc_matrix((data, (ri, ci)), shape=(len(rows), n))
        pd, pi, pj = [], [], []
        for (i, j), v in sorted(self._pq.items()):
            pi.append(i)
            pj.append(j)
            pd.append(v)
            if i != j:
                pi.append(j)
                pj.append(i)
                pd.append(v)
        P = sp.csc_matrix((pd, (pi, pj)), shape=(n, n))
        return QuadraticProgram(
            P=P,
            q=np.array(self._cost),
            A=A,
            lower=np.array(lo),
            upper=np.array(hi),
            variable_names=tuple("/".join(map(str, nm)) for nm in self.vars.names()),
        )


# ---------------------------------------------------------------------------
# shared blocks
# ---------------------------------------------------------------------------


def add_prosumer_physics(b: ProgramBuilder, s: Scenario, pid: str) -> None:
    """Investment, dispatch, storage and emission-accounting block of one prosumer.

    Adds everything except the design-specific balance rows: generation
    limits against invested-plus-existing capacity, cyclic state-of-charge
    dynamics, charge/discharge limited by the storage conversion capacity,
    and the emission account e_n = sum_fossil W_i sum_t p.
    """
    p = s.prosumer(pid)
    T = s.time_steps
    for tech in s.technologies:
        b.add_var(("k", tech.id, pid), cost=tech.capex_fom / tech.annuity, lb=0.0)
        if tech.is_storage:
            b.add_var(("ks", tech.id, pid), cost=tech.storage_capex_fom / tech.annuity, lb=0.0)
    for tech in s.generation_techs:
        avail = p.availability.get(tech.id)
        existing = p.existing_gen_cap.get(tech.id, 0.0)
        kcol = b.vars.col(("k", tech.id, pid))
        for t in range(T):
            e = 1.0 if avail is None else float(avail[t])
            col = b.add_var(("p", tech.id, pid, t), cost=tech.vom, lb=0.0)
            b.add_row(("genlim", tech.id, pid, t), [(col, 1.0), (kcol, -e)], -INF, e * existing)
    for tech in s.storage_techs:
        kcol = b.vars.col(("k", tech.id, pid))
        kscol = b.vars.col(("ks", tech.id, pid))
        existing_power = p.existing_gen_cap.get(tech.id, 0.0)
        existing_energy = p.existing_storage_energy.get(tech.id, 0.0)
        for t in range(T):
            b.add_var(("pin", tech.id, pid, t), lb=0.0)
            b.add_var(("pout", tech.id, pid, t), lb=0.0)
            b.add_var(("soc", tech.id, pid, t), lb=0.0)
        for t in range(T):
            pin = b.vars.col(("pin", tech.id, pid, t))
            pout = b.vars.col(("pout", tech.id, pid, t))
            soc = b.vars.col(("soc", tech.id, pid, t))
            soc_prev = b.vars.col(("soc", tech.id, pid, (t - 1) % T))
            b.add_row(
                ("socdyn", tech.id, pid, t),
                [(soc, 1.0), (soc_prev, -1.0), (pin, -tech.charge_eff), (pout, 1.0 / tech.discharge_eff)],
                0.0,
                0.0,
            )
            b.add_row(("socmax", tech.id, pid, t), [(soc, 1.0), (kscol, -1.0)], -INF, existing_energy)
            b.add_row(("chargemax", tech.id, pid, t), [(pin, 1.0), (kcol, -1.0)], -INF, existing_power)
            b.add_row(("dischargemax", tech.id, pid, t), [(pout, 1.0), (kcol, -1.0)], -INF, existing_power)
    ecol = b.add_var(("e", pid))
    coeffs = [(ecol, 1.0)]
    for tech in s.fossil_techs:
        for t in range(T):
            coeffs.append((b.vars.col(("p", tech.id, pid, t)), -tech.emission_factor))
    b.add_row(("emis", pid), coeffs, 0.0, 0.0)


def net_injection_coeffs(b: ProgramBuilder, s: Scenario, pid: str, t: int) -> list[tuple[int, float]]:
    """Columns of the net injection expression: production + discharge - charge."""
    out = []
    for tech in s.generation_techs:
        out.append((b.vars.col(("p", tech.id, pid, t)), 1.0))
    for tech in s.storage_techs:
        out.append((b.vars.col(("pout", tech.id, pid, t)), 1.0))
        out.append((b.vars.col(("pin", tech.id, pid, t)), -1.0))
    return out


def add_trade_split(b: ProgramBuilder, s: Scenario, pid: str, family: str) -> None:
    """Nonnegative split pair per directed trade; both halves priced at I_{n,m}."""
    p = s.prosumer(pid)
    for m in s.neighbors(pid):
        pref = p.preferences.get(m, 0.0)
        for t in range(s.time_steps):
            b.add_var((family + "+", pid, m, t), cost=pref, lb=0.0)
            b.add_var((family + "-", pid, m, t), cost=pref, lb=0.0)


def trade_cols(b: ProgramBuilder, family: str, n: str, m: str, t: int) -> list[tuple[int, float]]:
    return [(b.vars.col((family + "+", n, m, t)), 1.0), (b.vars.col((family + "-", n, m, t)), -1.0)]


def add_tso_block(b: ProgramBuilder, s: Scenario, injection_of) -> None:
    """Line investment, PTDF flow definition and thermal limits.

    ``injection_of(pid, t)`` returns the TSO-side injection expression at the
    prosumer's node as a coefficient list.
    """
    ptdf = build_ptdf(s.lines, s.num_nodes, s.slack_node)
    by_node = {p.node: p.id for p in s.prosumers}
    for line in s.lines:
        b.add_var(("kl", line.id), cost=line.length * line.capex_fom / line.annuity, lb=0.0)
    for t in range(s.time_steps):
        for li, line in enumerate(s.lines):
            fcol = b.add_var(("f", line.id, t))
            coeffs = [(fcol, 1.0)]
            for node in range(s.num_nodes):
                w = float(ptdf.entries[li, node])
                if w == 0.0 or node not in by_node:
                    continue
                for col, coef in injection_of(by_node[node], t):
                    coeffs.append((col, -w * coef))
            b.add_row(("flowdef", line.id, t), coeffs, 0.0, 0.0)
            klcol = b.vars.col(("kl", line.id))
            b.add_row(("flowub", line.id, t), [(fcol, 1.0), (klcol, -1.0)], -INF, line.existing_cap)
            b.add_row(("flowlb", line.id, t), [(fcol, 1.0), (klcol, 1.0)], -line.existing_cap, INF)


def add_carbon_cap(b: ProgramBuilder, s: Scenario) -> None:
    coeffs = [(b.vars.col(("e", p.id)), 1.0) for p in s.prosumers]
    lo = s.carbon_cap if s.carbon_cap_mode == CAP_EQUALITY else -INF
    b.add_row(("cap",), coeffs, lo, s.carbon_cap)


def _require(s: Scenario, market: str) -> None:
    if s.market != market:
        raise BuildError(f"scenario is tagged {s.market!r}, builder expects {market!r}")
    violations = validate_scenario(s)
    if violations:
        raise BuildError("invalid scenario: " + "; ".join(str(v) for v in violations))


# ---------------------------------------------------------------------------
# design-specific builders
# ---------------------------------------------------------------------------


def build_p2p_centralized(s: Scenario) -> tuple[QuadraticProgram, VariableIndex, ConstraintTag]:
    _require(s, MARKET_P2P)
    b = ProgramBuilder()
    for p in s.prosumers:
        add_prosumer_physics(b, s, p.id)
        add_trade_split(b, s, p.id, "tr")
    for p in s.prosumers:
        for t in range(s.time_steps):
            coeffs = net_injection_coeffs(b, s, p.id, t)
            for m in s.neighbors(p.id):
                coeffs += [(c, -w) for c, w in trade_cols(b, "tr", p.id, m, t)]
            b.add_row(("balance", p.id, t), coeffs, float(p.demand[t]), float(p.demand[t]))
    for p in s.prosumers:
        for m in s.neighbors(p.id):
            for t in range(s.time_steps):
                b.add_var(("z", p.id, m, t))
    for a, c in s.unordered_pairs():
        for t in range(s.time_steps):
            coeffs = trade_cols(b, "tr", a, c, t) + trade_cols(b, "tr", c, a, t)
            b.add_row(("recip", a, c, t), coeffs, 0.0, 0.0)
    for n, m in s.ordered_pairs():
        for t in range(s.time_steps):
            coeffs = trade_cols(b, "tr", n, m, t) + [(b.vars.col(("z", n, m, t)), -1.0)]
            b.add_row(("grid", n, m, t), coeffs, 0.0, 0.0)

    def injection(pid: str, t: int):
        return [(b.vars.col(("z", pid, m, t)), 1.0) for m in s.neighbors(pid)]

    add_tso_block(b, s, injection)
    add_carbon_cap(b, s)
    return b.build(), b.vars, b.rows


def build_pool_centralized(s: Scenario) -> tuple[QuadraticProgram, VariableIndex, ConstraintTag]:
    _require(s, MARKET_POOL)
    b = ProgramBuilder()
    for p in s.prosumers:
        add_prosumer_physics(b, s, p.id)
    for p in s.prosumers:
        for t in range(s.time_steps):
            b.add_var(("zp", p.id, t))
    for p in s.prosumers:
        for t in range(s.time_steps):
            coeffs = net_injection_coeffs(b, s, p.id, t) + [(b.vars.col(("zp", p.id, t)), -1.0)]
            b.add_row(("pool_balance", p.id, t), coeffs, float(p.demand[t]), float(p.demand[t]))
    for t in range(s.time_steps):
        coeffs = [(b.vars.col(("zp", p.id, t)), 1.0) for p in s.prosumers]
        b.add_row(("zsum", t), coeffs, 0.0, 0.0)

    def injection(pid: str, t: int):
        return [(b.vars.col(("zp", pid, t)), 1.0)]

    add_tso_block(b, s, injection)
    add_carbon_cap(b, s)
    return b.build(), b.vars, b.rows


def build_mixed_centralized(s: Scenario) -> tuple[QuadraticProgram, VariableIndex, ConstraintTag]:
    _require(s, MARKET_MIXED)
    b = ProgramBuilder()
    for p in s.prosumers:
        add_prosumer_physics(b, s, p.id)
        add_trade_split(b, s, p.id, "tr")
        for t in range(s.time_steps):
            b.add_var(("ppool", p.id, t))
    for p in s.prosumers:
        phi = p.phi
        for t in range(s.time_steps):
            net = net_injection_coeffs(b, s, p.id, t)
            coeffs = [(c, phi * w) for c, w in net]
            for m in s.neighbors(p.id):
                coeffs += [(c, -w) for c, w in trade_cols(b, "tr", p.id, m, t)]
            b.add_row(("balance_bi", p.id, t), coeffs, phi * float(p.demand[t]), phi * float(p.demand[t]))
            coeffs = [(c, (1.0 - phi) * w) for c, w in net]
            coeffs.append((b.vars.col(("ppool", p.id, t)), -1.0))
            rhs = (1.0 - phi) * float(p.demand[t])
            b.add_row(("balance_pool", p.id, t), coeffs, rhs, rhs)
    for p in s.prosumers:
        for m in s.neighbors(p.id):
            for t in range(s.time_steps):
                b.add_var(("z", p.id, m, t))
        for t in range(s.time_steps):
            b.add_var(("zp", p.id, t))
    for a, c in s.unordered_pairs():
        for t in range(s.time_steps):
            coeffs = trade_cols(b, "tr", a, c, t) + trade_cols(b, "tr", c, a, t)
            b.add_row(("recip", a, c, t), coeffs, 0.0, 0.0)
    for n, m in s.ordered_pairs():
        for t in range(s.time_steps):
            coeffs = trade_cols(b, "tr", n, m, t) + [(b.vars.col(("z", n, m, t)), -1.0)]
            b.add_row(("grid", n, m, t), coeffs, 0.0, 0.0)
    for p in s.prosumers:
        for t in range(s.time_steps):
            b.add_row(
                ("poolcouple", p.id, t),
                [(b.vars.col(("ppool", p.id, t)), 1.0), (b.vars.col(("zp", p.id, t)), -1.0)],
                0.0,
                0.0,
            )
    # the pool side is pure spatial arbitrage, so the TSO's pool trades sum
    # to zero per step exactly as in the pool-only design
    for t in range(s.time_steps):
        coeffs = [(b.vars.col(("zp", p.id, t)), 1.0) for p in s.prosumers]
        b.add_row(("zsum", t), coeffs, 0.0, 0.0)

    def injection(pid: str, t: int):
        cols = [(b.vars.col(("z", pid, m, t)), 1.0) for m in s.neighbors(pid)]
        cols.append((b.vars.col(("zp", pid, t)), 1.0))
        return cols

    add_tso_block(b, s, injection)
    add_carbon_cap(b, s)
    return b.build(), b.vars, b.rows


_BUILDERS = {
    MARKET_P2P: build_p2p_centralized,
    MARKET_POOL: build_pool_centralized,
    MARKET_MIXED: build_mixed_centralized,
}


# ---------------------------------------------------------------------------
# solve + extraction
# ---------------------------------------------------------------------------


def solve_centralized(s: Scenario, settings: SolverSettings | None = None) -> PlanningSolution:
    """Solve the scenario's centralized program and read prices from the duals."""
    prob, vix, rix = _BUILDERS[s.market](s)
    settings = settings or SolverSettings(eps_abs=1e-8, eps_rel=1e-8)
    qsol = qpcore.solve_qp(prob, settings)
    if qsol.status in (qpcore.STATUS_PRIMAL_INFEASIBLE, qpcore.STATUS_DUAL_INFEASIBLE):
        raise InfeasibleError(f"centralized {s.market} program: {qsol.status}")
    if qsol.status != qpcore.STATUS_OPTIMAL:
        raise InfeasibleError(
            f"centralized {s.market} program did not converge "
            f"(primal {qsol.primal_residual:.2e}, dual {qsol.dual_residual:.2e})"
        )
    sol = extract_solution(s, qsol, vix, rix)
    findings = audit_physical(s, sol)
    if findings:
        raise InfeasibleError("solution failed the physical audit: " + "; ".join(findings))
    return sol


def extract_solution(
    s: Scenario, qsol: QpSolution, vix: VariableIndex, rix: ConstraintTag
) -> PlanningSolution:
    x, y = qsol.x, qsol.y
    T = s.time_steps

    def val(name: tuple) -> float:
        return float(x[vix.col(name)])

    gen_invest, storage_invest = {}, {}
    production, charge, discharge, soc = {}, {}, {}, {}
    emissions = {}
    for p in s.prosumers:
        for tech in s.technologies:
            gen_invest[(tech.id, p.id)] = val(("k", tech.id, p.id))
            if tech.is_storage:
                storage_invest[(tech.id, p.id)] = val(("ks", tech.id, p.id))
        for tech in s.generation_techs:
            for t in range(T):
                production[(tech.id, p.id, t)] = val(("p", tech.id, p.id, t))
        for tech in s.storage_techs:
            for t in range(T):
                charge[(tech.id, p.id, t)] = val(("pin", tech.id, p.id, t))
                discharge[(tech.id, p.id, t)] = val(("pout", tech.id, p.id, t))
                soc[(tech.id, p.id, t)] = val(("soc", tech.id, p.id, t))
        emissions[p.id] = val(("e", p.id))

    line_invest = {line.id: val(("kl", line.id)) for line in s.lines}
    flows = {(line.id, t): val(("f", line.id, t)) for line in s.lines for t in range(T)}

    trades_bilateral, tso_bilateral = {}, {}
    trades_pool, tso_pool = {}, {}
    trade_price, grid_price, nodal_price = {}, {}, {}
    if s.market in (MARKET_P2P, MARKET_MIXED):
        for n, m in s.ordered_pairs():
            for t in range(T):
                trades_bilateral[(n, m, t)] = val(("tr+", n, m, t)) - val(("tr-", n, m, t))
                tso_bilateral[(n, m, t)] = val(("z", n, m, t))
                grid_price[(n, m, t)] = float(y[rix.row(("grid", n, m, t))])
        for a, c in s.unordered_pairs():
            for t in range(T):
                price = float(y[rix.row(("recip", a, c, t))])
                trade_price[(a, c, t)] = price
                trade_price[(c, a, t)] = price
    if s.market == MARKET_POOL:
        for p in s.prosumers:
            for t in range(T):
                tso_pool[(p.id, t)] = val(("zp", p.id, t))
                nodal_price[(p.id, t)] = float(y[rix.row(("pool_balance", p.id, t))])
                # the prosumer's pool trade is its net injection
                net = -float(p.demand[t])
                for tech in s.generation_techs:
                    net += production[(tech.id, p.id, t)]
                for tech in s.storage_techs:
                    net += discharge[(tech.id, p.id, t)] - charge[(tech.id, p.id, t)]
                trades_pool[(p.id, t)] = net
    if s.market == MARKET_MIXED:
        for p in s.prosumers:
            for t in range(T):
                trades_pool[(p.id, t)] = val(("ppool", p.id, t))
                tso_pool[(p.id, t)] = val(("zp", p.id, t))
                nodal_price[(p.id, t)] = float(y[rix.row(("poolcouple", p.id, t))])
    carbon_price = float(y[rix.row(("cap",))])

    prices = PriceSet(
        trade_price=trade_price,
        grid_price=grid_price,
        nodal_price=nodal_price,
        carbon_price=carbon_price,
    )
    return PlanningSolution(
        market=s.market,
        gen_invest=gen_invest,
        storage_invest=storage_invest,
        line_invest=line_invest,
        production=production,
        charge=charge,
        discharge=discharge,
        soc=soc,
        trades_bilateral=trades_bilateral,
        trades_pool=trades_pool,
        tso_arbitrage_bilateral=tso_bilateral,
        tso_arbitrage_pool=tso_pool,
        flows=flows,
        emissions=emissions,
        prices=prices,
        objective=float(qsol.objective),
    )


# ---------------------------------------------------------------------------
# physical audit
# ---------------------------------------------------------------------------


def audit_physical(
    s: Scenario,
    sol: PlanningSolution,
    local_tol: float = 1e-5,
    coupling_tol: float | None = None,
) -> list[str]:
    """Re-check a solution against the raw constraints; returns violations.

    ``local_tol`` guards constraints every single agent enforces on its own
    variables (balances, limits, storage dynamics, flow definition).
    ``coupling_tol`` (default: same) guards the cross-agent couplings --
    reciprocity, trade/arbitrage agreement and the carbon cap -- which an
    ADMM solution only meets to its convergence tolerance.
    """
    if coupling_tol is None:
        coupling_tol = local_tol
    T = s.time_steps
    out: list[str] = []
    scale = max(1.0, max((float(np.max(p.demand)) if len(p.demand) else 0.0) for p in s.prosumers))
    ltol = local_tol * scale
    ctol = coupling_tol * scale

    for p in s.prosumers:
        for t in range(T):
            net = sol.net_injection(s, p.id, t)
            if s.market == MARKET_P2P:
                traded = sum(sol.trades_bilateral.get((p.id, m, t), 0.0) for m in s.neighbors(p.id))
                gap = abs(net - traded)
                if gap > ltol:
                    out.append(f"balance {p.id}@{t}: gap {gap:.2e}")
            elif s.market == MARKET_POOL:
                traded = sol.trades_pool.get((p.id, t), 0.0)
                if abs(net - traded) > ltol:
                    out.append(f"balance {p.id}@{t}: gap {abs(net - traded):.2e}")
            else:
                bi = sum(sol.trades_bilateral.get((p.id, m, t), 0.0) for m in s.neighbors(p.id))
                pool = sol.trades_pool.get((p.id, t), 0.0)
                if abs(p.phi * net - bi) > ltol:
                    out.append(f"balance_bi {p.id}@{t}: gap {abs(p.phi * net - bi):.2e}")
                if abs((1.0 - p.phi) * net - pool) > ltol:
                    out.append(f"balance_pool {p.id}@{t}: gap {abs((1 - p.phi) * net - pool):.2e}")
        for tech in s.generation_techs:
            cap = sol.gen_invest.get((tech.id, p.id), 0.0) + p.existing_gen_cap.get(tech.id, 0.0)
            avail = p.availability.get(tech.id)
            for t in range(T):
                prod = sol.production.get((tech.id, p.id, t), 0.0)
                limit = cap * (1.0 if avail is None else float(avail[t]))
                if prod < -ltol or prod > limit + ltol:
                    out.append(f"genlim {tech.id}/{p.id}@{t}: {prod:.4f} vs {limit:.4f}")
        for tech in s.storage_techs:
            energy_cap = sol.storage_invest.get((tech.id, p.id), 0.0) + p.existing_storage_energy.get(
                tech.id, 0.0
            )
            power_cap = sol.gen_invest.get((tech.id, p.id), 0.0) + p.existing_gen_cap.get(tech.id, 0.0)
            for t in range(T):
                state = sol.soc.get((tech.id, p.id, t), 0.0)
                if state < -ltol or state > energy_cap + ltol:
                    out.append(f"soc {tech.id}/{p.id}@{t}: {state:.4f} vs {energy_cap:.4f}")
                for nm, v in (("pin", sol.charge), ("pout", sol.discharge)):
                    val = v.get((tech.id, p.id, t), 0.0)
                    if val < -ltol or val > power_cap + ltol:
                        out.append(f"{nm} {tech.id}/{p.id}@{t}: {val:.4f} vs {power_cap:.4f}")
                prev = sol.soc.get((tech.id, p.id, (t - 1) % T), 0.0)
                expect = (
                    prev
                    + tech.charge_eff * sol.charge.get((tech.id, p.id, t), 0.0)
                    - sol.discharge.get((tech.id, p.id, t), 0.0) / tech.discharge_eff
                )
                if abs(state - expect) > ltol:
                    out.append(f"socdyn {tech.id}/{p.id}@{t}: gap {abs(state - expect):.2e}")
        expected_e = sum(
            tech.emission_factor * sol.production.get((tech.id, p.id, t), 0.0)
            for tech in s.fossil_techs
            for t in range(T)
        )
        if abs(sol.emissions.get(p.id, 0.0) - expected_e) > ltol:
            out.append(f"emis {p.id}: gap {abs(sol.emissions.get(p.id, 0.0) - expected_e):.2e}")

    if s.market in (MARKET_P2P, MARKET_MIXED):
        for a, c in s.unordered_pairs():
            for t in range(T):
                gap = abs(
                    sol.trades_bilateral.get((a, c, t), 0.0) + sol.trades_bilateral.get((c, a, t), 0.0)
                )
                if gap > ctol:
                    out.append(f"reciprocity {a}~{c}@{t}: gap {gap:.2e}")
        for n, m in s.ordered_pairs():
            for t in range(T):
                gap = abs(
                    sol.trades_bilateral.get((n, m, t), 0.0)
                    - sol.tso_arbitrage_bilateral.get((n, m, t), 0.0)
                )
                if gap > ctol:
                    out.append(f"grid {n}->{m}@{t}: gap {gap:.2e}")
    if s.market in (MARKET_POOL, MARKET_MIXED):
        for t in range(T):
            zsum = sum(sol.tso_arbitrage_pool.get((p.id, t), 0.0) for p in s.prosumers)
            if abs(zsum) > max(1e-6 * scale, 1e-9):
                out.append(f"zsum @{t}: {zsum:.2e}")
        for p in s.prosumers:
            for t in range(T):
                gap = abs(
                    sol.trades_pool.get((p.id, t), 0.0) - sol.tso_arbitrage_pool.get((p.id, t), 0.0)
                )
                if gap > ctol:
                    out.append(f"poolcouple {p.id}@{t}: gap {gap:.2e}")

    ptdf = build_ptdf(s.lines, s.num_nodes, s.slack_node)
    by_node = {p.node: p.id for p in s.prosumers}
    for t in range(T):
        inj = np.zeros(s.num_nodes)
        for node, pid in by_node.items():
            if s.market == MARKET_P2P:
                inj[node] = sum(
                    sol.tso_arbitrage_bilateral.get((pid, m, t), 0.0) for m in s.neighbors(pid)
                )
            elif s.market == MARKET_POOL:
                inj[node] = sol.tso_arbitrage_pool.get((pid, t), 0.0)
            else:
                inj[node] = sol.tso_arbitrage_pool.get((pid, t), 0.0) + sum(
                    sol.tso_arbitrage_bilateral.get((pid, m, t), 0.0) for m in s.neighbors(pid)
                )
        expect = ptdf.entries @ inj
        for li, line in enumerate(s.lines):
            f = sol.flows.get((line.id, t), 0.0)
            if abs(f - expect[li]) > ltol:
                out.append(f"flowdef {line.id}@{t}: gap {abs(f - expect[li]):.2e}")
            limit = line.existing_cap + sol.line_invest.get(line.id, 0.0)
            if abs(f) > limit + ltol:
                out.append(f"flowlim {line.id}@{t}: |{f:.4f}| vs {limit:.4f}")

    total_e = sum(sol.emissions.values())
    if s.carbon_cap_mode == CAP_EQUALITY:
        if abs(total_e - s.carbon_cap) > ctol:
            out.append(f"carbon: |{total_e:.6f} - {s.carbon_cap:.6f}| > tol")
    elif total_e > s.carbon_cap + ctol:
        out.append(f"carbon: {total_e:.6f} exceeds cap {s.carbon_cap:.6f}")

    for (key, v) in list(sol.gen_invest.items()) + list(sol.storage_invest.items()):
        if v < -ltol:
            out.append(f"invest {key}: negative {v:.2e}")
    for lid, v in sol.line_invest.items():
        if v < -ltol:
            out.append(f"invest line {lid}: negative {v:.2e}")
    return out
