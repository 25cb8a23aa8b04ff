"""Per-agent cost/benefit decomposition and money-conservation audits.

``settle`` evaluates each agent's own objective at the solved point and the
solved prices: a prosumer pays its planning cost, its energy trades (bilateral
at the pair's trade price, pool at the nodal price), grid charges, product
differentiation charges and carbon permits; the TSO pays line CapEx and
collects congestion rent from the arbitrage it sells; the carbon revenue is
booked to a government line so the system closes.  Prices keep the sign
convention they were solved in, so "cash" lines can legitimately be negative
(a revenue).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from gridplan.model import (
    CAP_EQUALITY,
    MARKET_MIXED,
    MARKET_P2P,
    MARKET_POOL,
    PlanningSolution,
    Scenario,
    annualized_prosumer_cost,
    differentiation_cost,
    tso_capex,
)


@dataclass(frozen=True)
class ProsumerSettlement:
    agent: str
    planning_cost: float
    trade_cash: float
    grid_cost: float
    differentiation_cost: float
    carbon_cost: float
    total: float
    trade_cash_bilateral: float = 0.0
    trade_cash_pool: float = 0.0


@dataclass(frozen=True)
class Transfers:
    """Money that changes hands inside the system, enumerated explicitly."""

    bilateral_net: float
    grid: float
    pool: float
    carbon: float


@dataclass(frozen=True)
class SettlementReport:
    market: str
    prosumers: Mapping[str, ProsumerSettlement]
    tso_capex: float
    tso_congestion_revenue: float
    tso_total: float
    carbon_revenue: float
    transfers: Transfers
    system_total: float

    def rows(self) -> list[dict]:
        """Flat rows (one per agent plus TSO/government/system) for tabular IO."""
        out = []
        for pid in sorted(self.prosumers):
            ps = self.prosumers[pid]
            out.append(
                {
                    "agent": pid,
                    "planning_cost": ps.planning_cost,
                    "trade_cash": ps.trade_cash,
                    "grid_cost": ps.grid_cost,
                    "differentiation_cost": ps.differentiation_cost,
                    "carbon_cost": ps.carbon_cost,
                    "total": ps.total,
                }
            )
        out.append(
            {
                "agent": "tso",
                "planning_cost": self.tso_capex,
                "trade_cash": -self.tso_congestion_revenue,
                "grid_cost": 0.0,
                "differentiation_cost": 0.0,
                "carbon_cost": 0.0,
                "total": self.tso_total,
            }
        )
        out.append(
            {
                "agent": "government",
                "planning_cost": 0.0,
                "trade_cash": 0.0,
                "grid_cost": 0.0,
                "differentiation_cost": 0.0,
                "carbon_cost": -self.carbon_revenue,
                "total": -self.carbon_revenue,
            }
        )
        out.append(
            {
                "agent": "system",
                "planning_cost": "",
                "trade_cash": "",
                "grid_cost": "",
                "differentiation_cost": "",
                "carbon_cost": "",
                "total": self.system_total,
            }
        )
        return out


@dataclass(frozen=True)
class Finding:
    code: str
    message: str
    magnitude: float

    def __str__(self) -> str:
        return f"{self.code}: {self.message} ({self.magnitude:.3e})"


class SettlementError(ValueError):
    pass


def _check_prices(s: Scenario, sol: PlanningSolution) -> None:
    prices = sol.prices
    if s.market in (MARKET_P2P, MARKET_MIXED) and s.ordered_pairs():
        for n, m in s.ordered_pairs():
            if (n, m, 0) not in prices.trade_price or (n, m, 0) not in prices.grid_price:
                raise SettlementError(f"missing trade/grid prices for pair ({n}, {m}); instance unsolved?")
    if s.market in (MARKET_POOL, MARKET_MIXED):
        for p in s.prosumers:
            if (p.id, 0) not in prices.nodal_price:
                raise SettlementError(f"missing nodal price for {p.id}; instance unsolved?")


def settle(s: Scenario, sol: PlanningSolution) -> SettlementReport:
    """Decompose the solved instance into each agent's own costs and benefits."""
    _check_prices(s, sol)
    prices = sol.prices
    prosumers: dict[str, ProsumerSettlement] = {}
    for p in s.prosumers:
        planning = annualized_prosumer_cost(s, sol, p.id)
        diff = differentiation_cost(s, sol, p.id)
        bilateral = 0.0
        grid = 0.0
        if s.market in (MARKET_P2P, MARKET_MIXED):
            for m in s.neighbors(p.id):
                for t in range(s.time_steps):
                    trade = sol.trades_bilateral.get((p.id, m, t), 0.0)
                    bilateral += prices.trade_price.get((p.id, m, t), 0.0) * trade
                    grid += prices.grid_price.get((p.id, m, t), 0.0) * trade
        pool = 0.0
        if s.market in (MARKET_POOL, MARKET_MIXED):
            for t in range(s.time_steps):
                pool += prices.nodal_price.get((p.id, t), 0.0) * sol.trades_pool.get((p.id, t), 0.0)
        carbon = prices.carbon_price * sol.emissions.get(p.id, 0.0)
        trade_cash = bilateral + pool
        total = planning + trade_cash + grid + diff + carbon
        prosumers[p.id] = ProsumerSettlement(
            agent=p.id,
            planning_cost=planning,
            trade_cash=trade_cash,
            grid_cost=grid,
            differentiation_cost=diff,
            carbon_cost=carbon,
            total=total,
            trade_cash_bilateral=bilateral,
            trade_cash_pool=pool,
        )

    capex = tso_capex(s, sol)
    rent = 0.0
    if s.market in (MARKET_P2P, MARKET_MIXED):
        for n, m in s.ordered_pairs():
            for t in range(s.time_steps):
                rent += prices.grid_price.get((n, m, t), 0.0) * sol.tso_arbitrage_bilateral.get(
                    (n, m, t), 0.0
                )
    if s.market in (MARKET_POOL, MARKET_MIXED):
        for p in s.prosumers:
            for t in range(s.time_steps):
                rent += prices.nodal_price.get((p.id, t), 0.0) * sol.tso_arbitrage_pool.get(
                    (p.id, t), 0.0
                )
    tso_total = capex - rent

    carbon_revenue = prices.carbon_price * sum(sol.emissions.values())
    transfers = Transfers(
        bilateral_net=sum(ps.trade_cash_bilateral for ps in prosumers.values()),
        grid=sum(ps.grid_cost for ps in prosumers.values()),
        pool=sum(ps.trade_cash_pool for ps in prosumers.values()),
        carbon=carbon_revenue,
    )
    system_total = sum(ps.total for ps in prosumers.values()) + tso_total - carbon_revenue
    return SettlementReport(
        market=s.market,
        prosumers=prosumers,
        tso_capex=capex,
        tso_congestion_revenue=rent,
        tso_total=tso_total,
        carbon_revenue=carbon_revenue,
        transfers=transfers,
        system_total=system_total,
    )


def audit_money(
    s: Scenario, sol: PlanningSolution, report: SettlementReport, tol: float = 1e-4
) -> list[Finding]:
    """Conservation checks; an empty list means every transfer nets out.

    (a) bilateral energy payments net to zero across prosumers, (b) grid
    payments by prosumers equal the TSO's bilateral receipts (pool payments
    equal the TSO's pool receipts), (c) carbon payments equal price times cap
    when the cap binds.  Tolerances scale with the money volume.
    """
    out: list[Finding] = []
    scale = max(
        1.0,
        sum(abs(ps.planning_cost) + abs(ps.trade_cash) + abs(ps.grid_cost) for ps in report.prosumers.values()),
        abs(report.tso_capex) + abs(report.tso_congestion_revenue),
    )
    limit = tol * scale

    if s.market in (MARKET_P2P, MARKET_MIXED):
        gap = report.transfers.bilateral_net
        if abs(gap) > limit:
            out.append(Finding("BILATERAL_CASH", "bilateral payments do not net to zero", abs(gap)))
        prices = sol.prices
        tso_grid = 0.0
        for n, m in s.ordered_pairs():
            for t in range(s.time_steps):
                tso_grid += prices.grid_price.get((n, m, t), 0.0) * sol.tso_arbitrage_bilateral.get(
                    (n, m, t), 0.0
                )
        gap = report.transfers.grid - tso_grid
        if abs(gap) > limit:
            out.append(Finding("GRID_CASH", "prosumer grid payments != TSO grid receipts", abs(gap)))
    if s.market in (MARKET_POOL, MARKET_MIXED):
        prices = sol.prices
        tso_pool = 0.0
        for p in s.prosumers:
            for t in range(s.time_steps):
                tso_pool += prices.nodal_price.get((p.id, t), 0.0) * sol.tso_arbitrage_pool.get(
                    (p.id, t), 0.0
                )
        gap = report.transfers.pool - tso_pool
        if abs(gap) > limit:
            out.append(Finding("POOL_CASH", "prosumer pool payments != TSO pool receipts", abs(gap)))

    lam = sol.prices.carbon_price
    binding = s.carbon_cap_mode == CAP_EQUALITY or lam > tol
    if binding:
        expected = lam * s.carbon_cap
        gap = report.carbon_revenue - expected
        if abs(gap) > limit:
            out.append(
                Finding("CARBON_CASH", "carbon payments != carbon price times cap", abs(gap))
            )
    return out
