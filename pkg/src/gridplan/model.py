"""Domain types, scenario assembly and validation.

A scenario bundles the physical system (prosumers with generation/storage
assets and demand, transmission lines) with the market design under which it
is planned.  Prosumer n sits at its own transmission node; the communication
graph lists who may trade bilaterally with whom.  All energy quantities are
MWh per time step, capacities MW (energy capacity of storage: MWh), money is
a unitless "currency".
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

GENERATION = "generation"
FOSSIL = "fossil_generation"
STORAGE = "storage"
TECH_KINDS = (GENERATION, FOSSIL, STORAGE)

MARKET_P2P = "p2p"
MARKET_POOL = "pool"
MARKET_MIXED = "mixed"
MARKETS = (MARKET_P2P, MARKET_POOL, MARKET_MIXED)

CAP_EQUALITY = "equality"
CAP_INEQUALITY = "inequality"


def _freeze(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Technology:
    """One investable technology.

    Storage technologies carry two capacities: a conversion capacity in MW
    (``capex_fom`` per MW) bounding charge/discharge power, and an energy
    capacity in MWh (``storage_capex_fom`` per MWh) bounding the state of
    charge.  ``emission_factor`` (tCO2/MWh) is present exactly for fossil
    generation.
    """

    id: str
    kind: str
    capex_fom: float
    annuity: float
    vom: float = 0.0
    charge_eff: float | None = None
    discharge_eff: float | None = None
    storage_capex_fom: float | None = None
    emission_factor: float | None = None

    @property
    def is_storage(self) -> bool:
        return self.kind == STORAGE

    @property
    def is_generation(self) -> bool:
        return self.kind in (GENERATION, FOSSIL)

    @property
    def is_fossil(self) -> bool:
        return self.kind == FOSSIL


@dataclass(frozen=True)
class Prosumer:
    """Aggregated producer/consumer at one transmission node.

    ``availability`` maps generation tech id -> per-step capacity factor in
    [0, 1]; ``preferences`` maps neighbour prosumer id -> per-MWh product
    differentiation charge; ``phi`` is the fraction of net injection traded
    bilaterally under the mixed design.
    """

    id: str
    node: int
    demand: np.ndarray
    existing_gen_cap: Mapping[str, float] = field(default_factory=dict)
    existing_storage_energy: Mapping[str, float] = field(default_factory=dict)
    availability: Mapping[str, np.ndarray] = field(default_factory=dict)
    preferences: Mapping[str, float] = field(default_factory=dict)
    phi: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "demand", _freeze(self.demand))
        object.__setattr__(
            self, "availability", {k: _freeze(v) for k, v in self.availability.items()}
        )
        object.__setattr__(self, "existing_gen_cap", dict(self.existing_gen_cap))
        object.__setattr__(self, "existing_storage_energy", dict(self.existing_storage_energy))
        object.__setattr__(self, "preferences", dict(self.preferences))


@dataclass(frozen=True)
class Line:
    """Transmission corridor; positive flow runs from ``from_node`` to ``to_node``."""

    id: str
    from_node: int
    to_node: int
    reactance: float
    length: float
    existing_cap: float
    capex_fom: float
    annuity: float


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance: one market design on one physical system."""

    prosumers: tuple[Prosumer, ...]
    technologies: tuple[Technology, ...]
    lines: tuple[Line, ...]
    num_nodes: int
    time_steps: int
    comm_graph: Mapping[str, frozenset[str]]
    carbon_cap: float
    market: str
    carbon_cap_mode: str = CAP_INEQUALITY
    slack_node: int = 0

    def __post_init__(self):
        object.__setattr__(self, "prosumers", tuple(self.prosumers))
        object.__setattr__(self, "technologies", tuple(self.technologies))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(
            self, "comm_graph", {k: frozenset(v) for k, v in self.comm_graph.items()}
        )

    # -- lookup helpers -----------------------------------------------------

    def prosumer(self, pid: str) -> Prosumer:
        for p in self.prosumers:
            if p.id == pid:
                return p
        raise KeyError(f"unknown prosumer {pid!r}")

    def technology(self, tid: str) -> Technology:
        for tech in self.technologies:
            if tech.id == tid:
                return tech
        raise KeyError(f"unknown technology {tid!r}")

    @property
    def generation_techs(self) -> tuple[Technology, ...]:
        return tuple(t for t in self.technologies if t.is_generation)

    @property
    def storage_techs(self) -> tuple[Technology, ...]:
        return tuple(t for t in self.technologies if t.is_storage)

    @property
    def fossil_techs(self) -> tuple[Technology, ...]:
        return tuple(t for t in self.technologies if t.is_fossil)

    def neighbors(self, pid: str) -> tuple[str, ...]:
        return tuple(sorted(self.comm_graph.get(pid, frozenset())))

    def ordered_pairs(self) -> tuple[tuple[str, str], ...]:
        """All directed trade pairs (n, m) with m in the neighbourhood of n."""
        pairs = []
        for p in self.prosumers:
            for m in self.neighbors(p.id):
                pairs.append((p.id, m))
        return tuple(pairs)

    def unordered_pairs(self) -> tuple[tuple[str, str], ...]:
        seen = []
        for n, m in self.ordered_pairs():
            key = (n, m) if n < m else (m, n)
            if key not in seen:
                seen.append(key)
        return tuple(seen)

    def with_market(self, market: str, phi: float | None = None) -> "Scenario":
        """Same physical data under another market design (optionally overriding phi)."""
        prosumers = self.prosumers
        if phi is not None:
            prosumers = tuple(replace(p, phi=phi) for p in prosumers)
        return replace(self, market=market, prosumers=prosumers)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


@dataclass(frozen=True)
class PriceSet:
    """Prices recovered from the coupling constraints of a solved instance.

    Prices are recorded exactly as the duals come out of the centralized
    program (or the ADMM operators); no economic sign is imposed.  The trade
    price is shared by both orientations of a pair.
    """

    trade_price: Mapping[tuple[str, str, int], float] = field(default_factory=dict)
    grid_price: Mapping[tuple[str, str, int], float] = field(default_factory=dict)
    nodal_price: Mapping[tuple[str, int], float] = field(default_factory=dict)
    carbon_price: float = 0.0


@dataclass(frozen=True)
class PlanningSolution:
    """Investments, dispatch, trades, flows, prices and emissions of one solve.

    Maps irrelevant to the scenario's market design stay empty (e.g. no
    bilateral trades in a pool solution).
    """

    market: str
    gen_invest: Mapping[tuple[str, str], float]
    storage_invest: Mapping[tuple[str, str], float]
    line_invest: Mapping[str, float]
    production: Mapping[tuple[str, str, int], float]
    charge: Mapping[tuple[str, str, int], float]
    discharge: Mapping[tuple[str, str, int], float]
    soc: Mapping[tuple[str, str, int], float]
    trades_bilateral: Mapping[tuple[str, str, int], float]
    trades_pool: Mapping[tuple[str, int], float]
    tso_arbitrage_bilateral: Mapping[tuple[str, str, int], float]
    tso_arbitrage_pool: Mapping[tuple[str, int], float]
    flows: Mapping[tuple[str, int], float]
    emissions: Mapping[str, float]
    prices: PriceSet
    objective: float

    def net_injection(self, s: Scenario, pid: str, t: int) -> float:
        """Production - demand + discharge - charge of prosumer pid at step t."""
        p = s.prosumer(pid)
        total = -float(p.demand[t])
        for tech in s.generation_techs:
            total += self.production.get((tech.id, pid, t), 0.0)
        for tech in s.storage_techs:
            total += self.discharge.get((tech.id, pid, t), 0.0)
            total -= self.charge.get((tech.id, pid, t), 0.0)
        return total


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validate_scenario(s: Scenario) -> list[Violation]:
    """Collect every invariant violation; an empty list means the scenario is valid.

    Violations are data, not exceptions: loaders and the CLI forward them
    verbatim.
    """
    out: list[Violation] = []
    add = lambda code, msg: out.append(Violation(code, msg))  # noqa: E731

    if s.market not in MARKETS:
        add("MARKET_UNKNOWN", f"market {s.market!r} not one of {MARKETS}")
    if s.carbon_cap_mode not in (CAP_EQUALITY, CAP_INEQUALITY):
        add("CAP_MODE_UNKNOWN", f"carbon_cap_mode {s.carbon_cap_mode!r}")
    if s.carbon_cap < 0:
        add("CAP_NEGATIVE", f"carbon_cap = {s.carbon_cap}")
    if s.time_steps < 1:
        add("TIME_EMPTY", "time_steps must be >= 1")
    if not (0 <= s.slack_node < s.num_nodes):
        add("SLACK_RANGE", f"slack_node {s.slack_node} outside 0..{s.num_nodes - 1}")

    tech_ids = set()
    for tech in s.technologies:
        if tech.id in tech_ids:
            add("TECH_DUPLICATE", f"technology id {tech.id!r} repeated")
        tech_ids.add(tech.id)
        if tech.kind not in TECH_KINDS:
            add("TECH_KIND", f"{tech.id}: kind {tech.kind!r}")
            continue
        if tech.annuity <= 0:
            add("TECH_ANNUITY", f"{tech.id}: annuity {tech.annuity} must be > 0")
        if tech.capex_fom < 0:
            add("TECH_CAPEX", f"{tech.id}: capex_fom {tech.capex_fom} < 0")
        if tech.vom < 0:
            add("TECH_VOM", f"{tech.id}: vom {tech.vom} < 0")
        if tech.is_storage:
            for name, eff in (("charge_eff", tech.charge_eff), ("discharge_eff", tech.discharge_eff)):
                if eff is None or not (0.0 < eff <= 1.0):
                    add("TECH_EFFICIENCY", f"{tech.id}: {name} {eff} outside (0, 1]")
            if tech.storage_capex_fom is None or tech.storage_capex_fom < 0:
                add("TECH_STORAGE_CAPEX", f"{tech.id}: storage_capex_fom {tech.storage_capex_fom}")
        if tech.is_fossil:
            if tech.emission_factor is None or tech.emission_factor < 0:
                add("TECH_EMISSION", f"{tech.id}: emission_factor {tech.emission_factor}")
        elif tech.emission_factor is not None:
            add("TECH_EMISSION", f"{tech.id}: emission_factor only valid for fossil generation")

    pros_ids = set()
    nodes_seen = set()
    for p in s.prosumers:
        if p.id in pros_ids:
            add("PROSUMER_DUPLICATE", f"prosumer id {p.id!r} repeated")
        pros_ids.add(p.id)
        if not (0 <= p.node < s.num_nodes):
            add("PROSUMER_NODE", f"{p.id}: node {p.node} outside 0..{s.num_nodes - 1}")
        elif p.node in nodes_seen:
            add("NODE_SHARED", f"{p.id}: node {p.node} already hosts a prosumer")
        nodes_seen.add(p.node)
        if len(p.demand) != s.time_steps:
            add("DEMAND_LENGTH", f"{p.id}: demand has {len(p.demand)} steps, expected {s.time_steps}")
        for tid, cap in p.existing_gen_cap.items():
            if tid not in tech_ids:
                add("PROSUMER_TECH", f"{p.id}: existing_gen_cap references unknown tech {tid!r}")
            if cap < 0:
                add("CAPACITY_NEGATIVE", f"{p.id}/{tid}: existing capacity {cap} < 0")
        for tid, cap in p.existing_storage_energy.items():
            if tid not in tech_ids:
                add("PROSUMER_TECH", f"{p.id}: existing_storage_energy references unknown tech {tid!r}")
            if cap < 0:
                add("CAPACITY_NEGATIVE", f"{p.id}/{tid}: existing storage energy {cap} < 0")
        for tid, series in p.availability.items():
            if tid not in tech_ids:
                add("PROSUMER_TECH", f"{p.id}: availability references unknown tech {tid!r}")
            if len(series) != s.time_steps:
                add("AVAILABILITY_LENGTH", f"{p.id}/{tid}: {len(series)} steps, expected {s.time_steps}")
            elif len(series) and (series.min() < 0.0 or series.max() > 1.0):
                add("AVAILABILITY_RANGE", f"{p.id}/{tid}: values outside [0, 1]")
        for m, pref in p.preferences.items():
            if pref < 0:
                add("PREFERENCE_NEGATIVE", f"{p.id}->{m}: preference {pref} < 0")
            if m not in s.comm_graph.get(p.id, frozenset()):
                add("PREFERENCE_EDGE", f"{p.id}->{m}: preference without a communication edge")
        if not (0.0 <= p.phi <= 1.0):
            add("PHI_RANGE", f"{p.id}: phi {p.phi} outside [0, 1]")

    if len(nodes_seen) < s.num_nodes:
        missing = sorted(set(range(s.num_nodes)) - nodes_seen)
        add("NODE_EMPTY", f"nodes without a prosumer: {missing}")

    for n, nbrs in s.comm_graph.items():
        if n not in pros_ids:
            add("GRAPH_UNKNOWN", f"comm_graph mentions unknown prosumer {n!r}")
            continue
        for m in nbrs:
            if m == n:
                add("GRAPH_SELF", f"{n}: self edge in comm_graph")
            elif m not in pros_ids:
                add("GRAPH_UNKNOWN", f"{n}: edge to unknown prosumer {m!r}")
            elif n not in s.comm_graph.get(m, frozenset()):
                add("GRAPH_ASYMMETRIC", f"edge {n}->{m} has no reverse edge")

    line_ids = set()
    for line in s.lines:
        if line.id in line_ids:
            add("LINE_DUPLICATE", f"line id {line.id!r} repeated")
        line_ids.add(line.id)
        if line.from_node == line.to_node:
            add("LINE_SELF", f"{line.id}: from_node == to_node")
        for node in (line.from_node, line.to_node):
            if not (0 <= node < s.num_nodes):
                add("LINE_NODE", f"{line.id}: node {node} outside 0..{s.num_nodes - 1}")
        if line.reactance <= 0:
            add("LINE_REACTANCE", f"{line.id}: reactance {line.reactance} must be > 0")
        if line.existing_cap < 0:
            add("LINE_CAPACITY", f"{line.id}: existing_cap {line.existing_cap} < 0")
        if line.annuity <= 0:
            add("LINE_ANNUITY", f"{line.id}: annuity {line.annuity} must be > 0")
        if line.length < 0:
            add("LINE_LENGTH", f"{line.id}: length {line.length} < 0")

    if s.num_nodes > 1 and not _connected(s):
        add("NETWORK_DISCONNECTED", "transmission network is not connected")

    return out


def _connected(s: Scenario) -> bool:
    adj: dict[int, set[int]] = {i: set() for i in range(s.num_nodes)}
    for line in s.lines:
        if 0 <= line.from_node < s.num_nodes and 0 <= line.to_node < s.num_nodes:
            adj[line.from_node].add(line.to_node)
            adj[line.to_node].add(line.from_node)
    seen = {0}
    stack = [0]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == s.num_nodes


# ---------------------------------------------------------------------------
# cost primitives
# ---------------------------------------------------------------------------


def annualized_prosumer_cost(s: Scenario, sol: PlanningSolution, pid: str) -> float:
    """Planning cost of one prosumer: annualized CapEx+FOM plus VOM.

    sum_i C_i k_{i} / A_i  +  sum_{i in storage} CS_i ks_i / A_i
    +  sum_t sum_{i in generation} B_i p_{i,t}
    """
    s.prosumer(pid)  # raises KeyError for unknown ids
    total = 0.0
    for tech in s.technologies:
        k = sol.gen_invest.get((tech.id, pid), 0.0)
        total += tech.capex_fom * k / tech.annuity
        if tech.is_storage:
            ks = sol.storage_invest.get((tech.id, pid), 0.0)
            total += tech.storage_capex_fom * ks / tech.annuity
    for tech in s.generation_techs:
        for t in range(s.time_steps):
            total += tech.vom * sol.production.get((tech.id, pid, t), 0.0)
    return total


def tso_capex(s: Scenario, sol: PlanningSolution) -> float:
    """Annualized transmission CapEx+FOM: sum_l length_l C_l k_l / A_l."""
    return sum(
        line.length * line.capex_fom * sol.line_invest.get(line.id, 0.0) / line.annuity
        for line in s.lines
    )


def differentiation_cost(s: Scenario, sol: PlanningSolution, pid: str) -> float:
    """Product differentiation charge sum_t sum_m I_{n,m} |p_{n,m,t}|."""
    p = s.prosumer(pid)
    total = 0.0
    for m in s.neighbors(pid):
        pref = p.preferences.get(m, 0.0)
        if pref == 0.0:
            continue
        for t in range(s.time_steps):
            total += pref * abs(sol.trades_bilateral.get((pid, m, t), 0.0))
    return total
