"""Local subproblems of the prosumers and the TSO, and the operator price updates.

Every ADMM iteration minimizes, per agent, the design's augmented Lagrangian
restricted to that agent's own variables: foreign quantities (the neighbours'
trades toward the agent, the TSO's arbitrage values, the other prosumers'
total emissions) are frozen at their last published values, Jacobi style.

For a directed pair (n, m) the prosumer n objective carries n's own price and
penalty terms

    lambda_trade[n,m,t] * (p[n,m,t] + p_bar[m,n,t])
    + Q_trade/2 * (p[n,m,t] + p_bar[m,n,t])^2
    + lambda_grid[n,m,t] * (p[n,m,t] - z_bar[n,m,t])
    + Q_grid/2 * (p[n,m,t] - z_bar[n,m,t])^2

while the mirrored terms indexed (m, n) belong to the neighbour's subproblem;
this single-sided split is exactly what makes the decentralized fixed point
coincide with the centralized KKT point (one reciprocity row per unordered
pair, its dual shared by both orientations).

The shared carbon penalty is decomposed per prosumer by freezing the other
prosumers' emissions.  Under an equality cap the plain quadratic is used;
under an inequality cap the penalty takes the hinge (projected augmented
Lagrangian) form via a slack variable, whose multiplier update is precisely
the projected carbon price update max(0, lambda + Q (sum e - CAP)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from gridplan.central import (
    ConstraintTag,
    ProgramBuilder,
    VariableIndex,
    add_prosumer_physics,
    add_trade_split,
    add_tso_block,
    net_injection_coeffs,
    trade_cols,
)
from gridplan.model import CAP_INEQUALITY, PriceSet, Scenario
from gridplan.qpcore import QpSolution, QuadraticProgram


@dataclass(frozen=True)
class Penalties:
    """Quadratic penalty weights, one scalar per coupling family."""

    trade: float = 1.0
    grid: float = 1.0
    pool: float = 1.0
    co2: float = 1.0


@dataclass(frozen=True)
class AgentView:
    """Frozen foreign data one agent sees at an iteration.

    Prosumer n reads ``neighbor_trades`` (the neighbours' trades toward n,
    keyed (m, t)), ``tso_bilateral`` (the TSO's arbitrage on n's directed
    pairs, keyed (m, t)), ``tso_pool`` (keyed t) and ``other_emissions``.
    The TSO reads ``trades`` (all directed prosumer trades, keyed (n, m, t))
    and ``pool_net`` (net injections or pool trades, keyed (n, t)).
    """

    prices: PriceSet
    penalties: Penalties
    neighbor_trades: Mapping[tuple[str, int], float] = field(default_factory=dict)
    tso_bilateral: Mapping[tuple[str, int], float] = field(default_factory=dict)
    tso_pool: Mapping[int, float] = field(default_factory=dict)
    other_emissions: float = 0.0
    trades: Mapping[tuple[str, str, int], float] = field(default_factory=dict)
    pool_net: Mapping[tuple[str, int], float] = field(default_factory=dict)


@dataclass(frozen=True)
class Subproblem:
    """One agent's QP plus the decode maps and the dropped objective constant."""

    prob: QuadraticProgram
    vars: VariableIndex
    rows: ConstraintTag
    constant: float

    def value(self, x: np.ndarray, name: tuple) -> float:
        return float(x[self.vars.col(name)])

    def objective_value(self, x: np.ndarray) -> float:
        """Modelled objective including the constant completing the squares."""
        return self.prob.objective(x) + self.constant


def _carbon_terms(b: ProgramBuilder, s: Scenario, pid: str, view: AgentView) -> None:
    lam = view.prices.carbon_price
    q = view.penalties.co2
    gap = view.other_emissions - s.carbon_cap
    ecol = b.vars.col(("e", pid))
    if s.carbon_cap_mode == CAP_INEQUALITY:
        # hinge form: Q/2 * max(0, e + E_other - CAP + lambda/Q)^2 - lambda^2/(2Q)
        scol = b.add_var(("co2_slack", pid), lb=0.0)
        b.add_quad(scol, scol, q)
        b.add_row(("co2_hinge", pid), [(scol, 1.0), (ecol, -1.0)], gap + lam / q, np.inf)
        b.constant -= lam * lam / (2.0 * q)
    else:
        b.add_cost(ecol, lam)
        b.constant += lam * gap
        b.add_square([ecol], [1.0], gap, q)


def _bilateral_terms(b: ProgramBuilder, s: Scenario, pid: str, view: AgentView) -> None:
    for m in s.neighbors(pid):
        for t in range(s.time_steps):
            lam_tr = view.prices.trade_price.get((pid, m, t), 0.0)
            lam_gr = view.prices.grid_price.get((pid, m, t), 0.0)
            p_bar = view.neighbor_trades.get((m, t), 0.0)
            z_bar = view.tso_bilateral.get((m, t), 0.0)
            cols = trade_cols(b, "tr", pid, m, t)
            ids = [c for c, _ in cols]
            signs = [w for _, w in cols]
            for c, w in cols:
                b.add_cost(c, w * (lam_tr + lam_gr))
            b.constant += lam_tr * p_bar - lam_gr * z_bar
            b.add_square(ids, signs, p_bar, view.penalties.trade)
            b.add_square(ids, signs, -z_bar, view.penalties.grid)


def prosumer_subproblem_p2p(s: Scenario, pid: str, view: AgentView) -> Subproblem:
    """Prosumer block of the P2P augmented Lagrangian, balance row retained."""
    b = ProgramBuilder()
    add_prosumer_physics(b, s, pid)
    add_trade_split(b, s, pid, "tr")
    p = s.prosumer(pid)
    for t in range(s.time_steps):
        coeffs = net_injection_coeffs(b, s, pid, t)
        for m in s.neighbors(pid):
            coeffs += [(c, -w) for c, w in trade_cols(b, "tr", pid, m, t)]
        b.add_row(("balance", pid, t), coeffs, float(p.demand[t]), float(p.demand[t]))
    _bilateral_terms(b, s, pid, view)
    _carbon_terms(b, s, pid, view)
    return Subproblem(b.build(), b.vars, b.rows, b.constant)


def prosumer_subproblem_pool(s: Scenario, pid: str, view: AgentView) -> Subproblem:
    """Pool prosumer: no balance row, the net injection meets the TSO in the penalty."""
    b = ProgramBuilder()
    add_prosumer_physics(b, s, pid)
    p = s.prosumer(pid)
    q = view.penalties.pool
    for t in range(s.time_steps):
        lam = view.prices.nodal_price.get((pid, t), 0.0)
        z_bar = view.tso_pool.get(t, 0.0)
        net = net_injection_coeffs(b, s, pid, t)
        offset = -float(p.demand[t]) - z_bar
        for c, w in net:
            b.add_cost(c, w * lam)
        b.constant += lam * offset
        b.add_square([c for c, _ in net], [w for _, w in net], offset, q)
    _carbon_terms(b, s, pid, view)
    return Subproblem(b.build(), b.vars, b.rows, b.constant)


def prosumer_subproblem_mixed(s: Scenario, pid: str, view: AgentView) -> Subproblem:
    """Mixed prosumer: phi-split balances plus both families of price terms."""
    b = ProgramBuilder()
    add_prosumer_physics(b, s, pid)
    add_trade_split(b, s, pid, "tr")
    p = s.prosumer(pid)
    for t in range(s.time_steps):
        b.add_var(("ppool", pid, t))
    phi = p.phi
    for t in range(s.time_steps):
        net = net_injection_coeffs(b, s, pid, t)
        coeffs = [(c, phi * w) for c, w in net]
        for m in s.neighbors(pid):
            coeffs += [(c, -w) for c, w in trade_cols(b, "tr", pid, m, t)]
        b.add_row(("balance_bi", pid, t), coeffs, phi * float(p.demand[t]), phi * float(p.demand[t]))
        coeffs = [(c, (1.0 - phi) * w) for c, w in net]
        coeffs.append((b.vars.col(("ppool", pid, t)), -1.0))
        rhs = (1.0 - phi) * float(p.demand[t])
        b.add_row(("balance_pool", pid, t), coeffs, rhs, rhs)
    _bilateral_terms(b, s, pid, view)
    q = view.penalties.pool
    for t in range(s.time_steps):
        lam = view.prices.nodal_price.get((pid, t), 0.0)
        z_bar = view.tso_pool.get(t, 0.0)
        col = b.vars.col(("ppool", pid, t))
        b.add_cost(col, lam)
        b.constant -= lam * z_bar
        b.add_square([col], [1.0], -z_bar, q)
    _carbon_terms(b, s, pid, view)
    return Subproblem(b.build(), b.vars, b.rows, b.constant)


def tso_subproblem_p2p(s: Scenario, view: AgentView) -> Subproblem:
    """TSO block: line investment cost minus grid revenue plus coupling penalty."""
    b = ProgramBuilder()
    for n, m in s.ordered_pairs():
        for t in range(s.time_steps):
            b.add_var(("z", n, m, t))

    def injection(pid: str, t: int):
        return [(b.vars.col(("z", pid, m, t)), 1.0) for m in s.neighbors(pid)]

    add_tso_block(b, s, injection)
    q = view.penalties.grid
    for n, m in s.ordered_pairs():
        for t in range(s.time_steps):
            col = b.vars.col(("z", n, m, t))
            lam = view.prices.grid_price.get((n, m, t), 0.0)
            p_bar = view.trades.get((n, m, t), 0.0)
            b.add_cost(col, -lam)
            b.constant += lam * p_bar
            b.add_square([col], [-1.0], p_bar, q)
    return Subproblem(b.build(), b.vars, b.rows, b.constant)


def tso_subproblem_pool(s: Scenario, view: AgentView) -> Subproblem:
    """Pool TSO: zero-sum arbitrage per step, nodal revenue, coupling penalty."""
    b = ProgramBuilder()
    for p in s.prosumers:
        for t in range(s.time_steps):
            b.add_var(("zp", p.id, t))
    for t in range(s.time_steps):
        b.add_row(("zsum", t), [(b.vars.col(("zp", p.id, t)), 1.0) for p in s.prosumers], 0.0, 0.0)

    def injection(pid: str, t: int):
        return [(b.vars.col(("zp", pid, t)), 1.0)]

    add_tso_block(b, s, injection)
    q = view.penalties.pool
    for p in s.prosumers:
        for t in range(s.time_steps):
            col = b.vars.col(("zp", p.id, t))
            lam = view.prices.nodal_price.get((p.id, t), 0.0)
            net_bar = view.pool_net.get((p.id, t), 0.0)
            b.add_cost(col, -lam)
            b.constant += lam * net_bar
            b.add_square([col], [-1.0], net_bar, q)
    return Subproblem(b.build(), b.vars, b.rows, b.constant)


def tso_subproblem_mixed(s: Scenario, view: AgentView) -> Subproblem:
    """Mixed TSO: both arbitrage families feed the same PTDF flows."""
    b = ProgramBuilder()
    for n, m in s.ordered_pairs():
        for t in range(s.time_steps):
            b.add_var(("z", n, m, t))
    for p in s.prosumers:
        for t in range(s.time_steps):
            b.add_var(("zp", p.id, t))
    for t in range(s.time_steps):
        b.add_row(("zsum", t), [(b.vars.col(("zp", p.id, t)), 1.0) for p in s.prosumers], 0.0, 0.0)

    def injection(pid: str, t: int):
        cols = [(b.vars.col(("z", pid, m, t)), 1.0) for m in s.neighbors(pid)]
        cols.append((b.vars.col(("zp", pid, t)), 1.0))
        return cols

    add_tso_block(b, s, injection)
    qg = view.penalties.grid
    qp = view.penalties.pool
    for n, m in s.ordered_pairs():
        for t in range(s.time_steps):
            col = b.vars.col(("z", n, m, t))
            lam = view.prices.grid_price.get((n, m, t), 0.0)
            p_bar = view.trades.get((n, m, t), 0.0)
            b.add_cost(col, -lam)
            b.constant += lam * p_bar
            b.add_square([col], [-1.0], p_bar, qg)
    for p in s.prosumers:
        for t in range(s.time_steps):
            col = b.vars.col(("zp", p.id, t))
            lam = view.prices.nodal_price.get((p.id, t), 0.0)
            pp_bar = view.pool_net.get((p.id, t), 0.0)
            b.add_cost(col, -lam)
            b.constant += lam * pp_bar
            b.add_square([col], [-1.0], pp_bar, qp)
    return Subproblem(b.build(), b.vars, b.rows, b.constant)


# ---------------------------------------------------------------------------
# operator price updates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IterationValues:
    """Fresh (iteration k+1) coupled values the operators settle on."""

    trades: Mapping[tuple[str, str, int], float] = field(default_factory=dict)
    tso_bilateral: Mapping[tuple[str, str, int], float] = field(default_factory=dict)
    pool_injections: Mapping[tuple[str, int], float] = field(default_factory=dict)
    tso_pool: Mapping[tuple[str, int], float] = field(default_factory=dict)
    emissions: Mapping[str, float] = field(default_factory=dict)


def update_p2p_prices(
    s: Scenario, prices: PriceSet, vals: IterationValues, q_trade: float, q_grid: float
) -> PriceSet:
    """Trade price moves on the reciprocity residual, grid price on the
    trade/arbitrage mismatch; both orientations of a pair share the trade
    price because the residual is symmetric."""
    trade_price = dict(prices.trade_price)
    grid_price = dict(prices.grid_price)
    for a, c in s.unordered_pairs():
        for t in range(s.time_steps):
            residual = vals.trades.get((a, c, t), 0.0) + vals.trades.get((c, a, t), 0.0)
            new = trade_price.get((a, c, t), 0.0) + q_trade * residual
            trade_price[(a, c, t)] = new
            trade_price[(c, a, t)] = new
    for n, m in s.ordered_pairs():
        for t in range(s.time_steps):
            residual = vals.trades.get((n, m, t), 0.0) - vals.tso_bilateral.get((n, m, t), 0.0)
            grid_price[(n, m, t)] = grid_price.get((n, m, t), 0.0) + q_grid * residual
    return PriceSet(
        trade_price=trade_price,
        grid_price=grid_price,
        nodal_price=dict(prices.nodal_price),
        carbon_price=prices.carbon_price,
    )


def update_pool_price(
    s: Scenario, prices: PriceSet, vals: IterationValues, q_pool: float
) -> PriceSet:
    """Nodal price moves on the prosumer-side minus TSO-side pool residual."""
    nodal = dict(prices.nodal_price)
    for p in s.prosumers:
        for t in range(s.time_steps):
            residual = vals.pool_injections.get((p.id, t), 0.0) - vals.tso_pool.get((p.id, t), 0.0)
            nodal[(p.id, t)] = nodal.get((p.id, t), 0.0) + q_pool * residual
    return PriceSet(
        trade_price=dict(prices.trade_price),
        grid_price=dict(prices.grid_price),
        nodal_price=nodal,
        carbon_price=prices.carbon_price,
    )


def update_carbon_price(
    lam: float, total_emissions: float, cap: float, q_co2: float, mode: str
) -> float:
    """Carbon price walks up the cap excess; nonnegative under an inequality cap."""
    new = lam + q_co2 * (total_emissions - cap)
    if mode == CAP_INEQUALITY:
        new = max(0.0, new)
    return new
