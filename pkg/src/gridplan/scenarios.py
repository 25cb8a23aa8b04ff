"""Reference desk-scale scenarios used by the tests, scripts and docs.

All builders are deterministic (literal data, no RNG) and return valid
scenarios.  The workhorse is a three-node triangle with solar, gas and a
battery over 24 steps; variants drop the battery or tighten the carbon cap
until it binds.
"""

from __future__ import annotations

import math
from dataclasses import replace

from gridplan.model import (
    CAP_INEQUALITY,
    MARKET_P2P,
    Line,
    Prosumer,
    Scenario,
    Technology,
)


def _solar_profile(steps: int, peak: float) -> list[float]:
    # daylight bump between steps 6 and 18
    out = []
    for t in range(steps):
        x = math.sin(math.pi * (t - 6) / 12.0) if 6 <= t <= 18 else 0.0
        out.append(round(peak * max(x, 0.0), 6))
    return out


def _demand_profile(steps: int, base: float, swing: float, phase: int) -> list[float]:
    return [
        round(base + swing * (0.5 + 0.5 * math.sin(2 * math.pi * (t - phase) / steps)), 6)
        for t in range(steps)
    ]


def technologies(include_storage: bool = True) -> list[Technology]:
    techs = [
        Technology(id="solar", kind="generation", capex_fom=876.0, annuity=10.0, vom=0.1),
        Technology(
            id="gas",
            kind="fossil_generation",
            capex_fom=450.0,
            annuity=15.0,
            vom=25.0,
            emission_factor=0.4,
        ),
    ]
    if include_storage:
        techs.append(
            Technology(
                id="battery",
                kind="storage",
                capex_fom=120.0,
                annuity=12.0,
                vom=0.0,
                charge_eff=0.95,
                discharge_eff=0.95,
                storage_capex_fom=80.0,
            )
        )
    return techs


def triangle(
    market: str = MARKET_P2P,
    storage: bool = True,
    carbon_cap: float = 1e6,
    preferences: float = 0.0,
    phi: float = 1.0,
    time_steps: int = 24,
    line_cap: float = 6.0,
    carbon_cap_mode: str = CAP_INEQUALITY,
) -> Scenario:
    """Three prosumers on a triangle grid with solar, gas and optional battery.

    Node 0 is sunny and lightly loaded, node 1 is the load centre, node 2 is
    in between; gas is cheap enough to carry the night unless the carbon cap
    pushes investment into solar plus storage.
    """
    T = time_steps
    techs = technologies(include_storage=storage)
    avail = {
        "a": _solar_profile(T, 0.95),
        "b": _solar_profile(T, 0.55),
        "c": _solar_profile(T, 0.75),
    }
    prosumers = [
        Prosumer(
            id="a",
            node=0,
            demand=_demand_profile(T, 1.0, 1.0, 9),
            existing_gen_cap={"solar": 1.0, "gas": 1.0},
            availability={"solar": avail["a"]},
            preferences={"b": preferences, "c": preferences},
            phi=phi,
        ),
        Prosumer(
            id="b",
            node=1,
            demand=_demand_profile(T, 3.0, 2.0, 3),
            existing_gen_cap={"gas": 2.0},
            availability={"solar": avail["b"]},
            preferences={"a": preferences, "c": preferences},
            phi=phi,
        ),
        Prosumer(
            id="c",
            node=2,
            demand=_demand_profile(T, 2.0, 1.0, 6),
            existing_gen_cap={"solar": 0.5},
            availability={"solar": avail["c"]},
            preferences={"a": preferences, "b": preferences},
            phi=phi,
        ),
    ]
    lines = [
        Line(id="l01", from_node=0, to_node=1, reactance=0.1, length=80.0, existing_cap=line_cap, capex_fom=12.0, annuity=20.0),
        Line(id="l12", from_node=1, to_node=2, reactance=0.1, length=60.0, existing_cap=line_cap, capex_fom=12.0, annuity=20.0),
        Line(id="l02", from_node=0, to_node=2, reactance=0.1, length=100.0, existing_cap=line_cap, capex_fom=12.0, annuity=20.0),
    ]
    graph = {"a": {"b", "c"}, "b": {"a", "c"}, "c": {"a", "b"}}
    return Scenario(
        prosumers=prosumers,
        technologies=techs,
        lines=lines,
        num_nodes=3,
        time_steps=T,
        comm_graph=graph,
        carbon_cap=carbon_cap,
        carbon_cap_mode=carbon_cap_mode,
        market=market,
        slack_node=0,
    )


def triangle_binding_cap(market: str = MARKET_P2P, carbon_cap: float = 40.0, **kw) -> Scenario:
    """Triangle variant whose carbon cap binds.

    Clean assets are priced up (solar 3504, battery 480/320) so the
    unconstrained optimum burns gas (about 72.8 tCO2 over the day); the
    default cap of 40 forces roughly half of that back out and the carbon
    price comes out strictly positive.
    """
    base = triangle(market=market, storage=True, carbon_cap=carbon_cap, **kw)
    techs = []
    for t in base.technologies:
        if t.id == "solar":
            techs.append(replace(t, capex_fom=3504.0))
        elif t.id == "battery":
            techs.append(replace(t, capex_fom=480.0, storage_capex_fom=320.0))
        else:
            techs.append(t)
    return replace(base, technologies=tuple(techs))


def two_node_carbon(market: str = MARKET_P2P, carbon_cap: float = 12.0, time_steps: int = 6) -> Scenario:
    """Fossil node feeding a demand node, with expensive firm clean backup.

    Existing capacity covers demand, so no investment is required; gas
    (vom 1, emission factor 1) undercuts the clean unit (vom 5) unless the
    cap forces a swap.  With total demand 24 and cap 12 the cap binds and the
    carbon price settles at the variable-cost spread of 4.
    """
    T = time_steps
    techs = [
        Technology(id="gas", kind="fossil_generation", capex_fom=100.0, annuity=10.0, vom=1.0, emission_factor=1.0),
        Technology(id="clean", kind="generation", capex_fom=200.0, annuity=10.0, vom=5.0),
    ]
    prosumers = [
        Prosumer(
            id="g",
            node=0,
            demand=[0.0] * T,
            existing_gen_cap={"gas": 10.0, "clean": 10.0},
        ),
        Prosumer(
            id="d",
            node=1,
            demand=[4.0] * T,
            existing_gen_cap={},
        ),
    ]
    lines = [
        Line(id="l01", from_node=0, to_node=1, reactance=0.1, length=50.0, existing_cap=10.0, capex_fom=10.0, annuity=20.0)
    ]
    graph = {"g": {"d"}, "d": {"g"}}
    return Scenario(
        prosumers=prosumers,
        technologies=techs,
        lines=lines,
        num_nodes=2,
        time_steps=T,
        comm_graph=graph,
        carbon_cap=carbon_cap,
        market=market,
        slack_node=0,
    )


def two_node_line(market: str = MARKET_P2P, line_cap: float = 2.0, time_steps: int = 4) -> Scenario:
    """Cheap generator node exporting to a pure consumer across one line."""
    T = time_steps
    techs = [Technology(id="gen", kind="generation", capex_fom=50.0, annuity=10.0, vom=2.0)]
    prosumers = [
        Prosumer(id="src", node=0, demand=[0.0] * T, existing_gen_cap={"gen": 20.0}),
        Prosumer(id="snk", node=1, demand=[3.0] * T),
    ]
    lines = [
        Line(id="l01", from_node=0, to_node=1, reactance=0.2, length=40.0, existing_cap=line_cap, capex_fom=5.0, annuity=10.0)
    ]
    graph = {"src": {"snk"}, "snk": {"src"}}
    return Scenario(
        prosumers=prosumers,
        technologies=techs,
        lines=lines,
        num_nodes=2,
        time_steps=T,
        comm_graph=graph,
        carbon_cap=1e6,
        market=market,
        slack_node=0,
    )


def zero_demand(market: str = MARKET_P2P, time_steps: int = 3) -> Scenario:
    """Nothing to serve: the all-zero solution is optimal with objective 0."""
    techs = technologies(include_storage=True)
    prosumers = [
        Prosumer(id="a", node=0, demand=[0.0] * time_steps),
        Prosumer(id="b", node=1, demand=[0.0] * time_steps),
    ]
    lines = [
        Line(id="l01", from_node=0, to_node=1, reactance=0.1, length=10.0, existing_cap=1.0, capex_fom=5.0, annuity=10.0)
    ]
    graph = {"a": {"b"}, "b": {"a"}}
    return Scenario(
        prosumers=prosumers,
        technologies=techs,
        lines=lines,
        num_nodes=2,
        time_steps=time_steps,
        comm_graph=graph,
        carbon_cap=1e6,
        market=market,
        slack_node=0,
    )


def congested_pool(time_steps: int = 4) -> Scenario:
    """Three nodes, one cheap producer, thin lines: nodal prices split."""
    techs = [
        Technology(id="cheap", kind="generation", capex_fom=40.0, annuity=10.0, vom=1.0),
        Technology(id="local", kind="generation", capex_fom=40.0, annuity=10.0, vom=30.0),
    ]
    T = time_steps
    prosumers = [
        Prosumer(id="a", node=0, demand=[0.0] * T, existing_gen_cap={"cheap": 30.0}),
        Prosumer(id="b", node=1, demand=[4.0] * T, existing_gen_cap={"local": 30.0}),
        Prosumer(id="c", node=2, demand=[4.0] * T, existing_gen_cap={"local": 30.0}),
    ]
    lines = [
        Line(id="l01", from_node=0, to_node=1, reactance=0.1, length=30.0, existing_cap=1.5, capex_fom=200.0, annuity=5.0),
        Line(id="l12", from_node=1, to_node=2, reactance=0.1, length=30.0, existing_cap=1.5, capex_fom=200.0, annuity=5.0),
        Line(id="l02", from_node=0, to_node=2, reactance=0.1, length=30.0, existing_cap=1.5, capex_fom=200.0, annuity=5.0),
    ]
    graph = {"a": {"b", "c"}, "b": {"a", "c"}, "c": {"a", "b"}}
    return Scenario(
        prosumers=prosumers,
        technologies=techs,
        lines=lines,
        num_nodes=3,
        time_steps=T,
        comm_graph=graph,
        carbon_cap=1e6,
        market="pool",
        slack_node=0,
    )
