"""Collection-network domain model.

A network is a directed tree of junctions, storage tanks and outfalls joined
by gravity conduits and pumps.  Every non-outfall node drains through exactly
one outgoing link, so the path from any node to its outfall is unique.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping, Union


class NetworkError(ValueError):
    """Raised when a query cannot be answered for the given network."""


class ArterialUndefinedError(NetworkError):
    """The network has no tanks or pumps, so no arterial network exists."""


@dataclass(frozen=True)
class Junction:
    id: str
    invert_elev: float
    rim_elev: float
    base_inflow: float = 0.0
    pattern_id: str | None = None
    coord: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class StorageTank:
    id: str
    invert_elev: float
    max_depth: float
    surface_area: float
    coord: tuple[float, float] = (0.0, 0.0)
    base_inflow: float = 0.0
    pattern_id: str | None = None


@dataclass(frozen=True)
class Outfall:
    id: str
    invert_elev: float
    coord: tuple[float, float] = (0.0, 0.0)
    # Water-surface elevation of a fixed-stage boundary; None means free outfall.
    fixed_stage: float | None = None


@dataclass(frozen=True)
class Conduit:
    id: str
    from_node: str
    to_node: str
    length: float
    manning_n: float
    diameter: float
    offset_up: float = 0.0
    offset_dn: float = 0.0


@dataclass(frozen=True)
class Pump:
    id: str
    from_node: str
    to_node: str
    rated_flow: float
    start_depth: float
    stop_depth: float


Node = Union[Junction, StorageTank, Outfall]
Link = Union[Conduit, Pump]


@dataclass(frozen=True)
class Violation:
    kind: str
    component: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    warnings: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def format(self) -> str:
        if self.ok and not self.warnings:
            return "network valid"
        lines = ["network valid" if self.ok else f"{len(self.violations)} violation(s)"]
        lines += [f"  error   {v}" for v in self.violations]
        lines += [f"  warning {w}" for w in self.warnings]
        return "\n".join(lines)


@dataclass(frozen=True)
class Network:
    """Immutable collection network.

    Construction performs no checks; call :func:`validate` for a report.
    Topology helpers assume a valid network.
    """

    junctions: tuple[Junction, ...] = ()
    tanks: tuple[StorageTank, ...] = ()
    outfalls: tuple[Outfall, ...] = ()
    conduits: tuple[Conduit, ...] = ()
    pumps: tuple[Pump, ...] = ()
    patterns: Mapping[str, tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("junctions", "tanks", "outfalls", "conduits", "pumps"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(
            self, "patterns", {k: tuple(v) for k, v in dict(self.patterns).items()}
        )

    def __getstate__(self):
        # drop cached topology; it is rebuilt lazily after unpickling
        return {f: getattr(self, f) for f in _NETWORK_FIELDS}

    def __setstate__(self, state):
        self.__dict__.update(state)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.junctions == other.junctions
            and self.tanks == other.tanks
            and self.outfalls == other.outfalls
            and self.conduits == other.conduits
            and self.pumps == other.pumps
            and dict(self.patterns) == dict(other.patterns)
        )

    __hash__ = None  # type: ignore[assignment]

    # --- lookups -----------------------------------------------------------

    @cached_property
    def nodes(self) -> Mapping[str, Node]:
        out: dict[str, Node] = {}
        for n in (*self.junctions, *self.tanks, *self.outfalls):
            out.setdefault(n.id, n)
        return out

    @cached_property
    def links(self) -> Mapping[str, Link]:
        out: dict[str, Link] = {}
        for k in (*self.conduits, *self.pumps):
            out.setdefault(k.id, k)
        return out

    @cached_property
    def outfall_ids(self) -> frozenset[str]:
        return frozenset(o.id for o in self.outfalls)

    @cached_property
    def tank_ids(self) -> frozenset[str]:
        return frozenset(t.id for t in self.tanks)

    @cached_property
    def demand_nodes(self) -> tuple[str, ...]:
        """Non-outfall node ids in declaration order."""
        return tuple(n.id for n in (*self.junctions, *self.tanks))

    @cached_property
    def outgoing(self) -> Mapping[str, Link]:
        out: dict[str, Link] = {}
        for k in self.links.values():
            out.setdefault(k.from_node, k)
        return out

    @cached_property
    def incoming(self) -> Mapping[str, tuple[Link, ...]]:
        out: dict[str, list[Link]] = {nid: [] for nid in self.nodes}
        for k in self.links.values():
            out.setdefault(k.to_node, []).append(k)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def topo_order(self) -> tuple[str, ...]:
        """Node ids ordered so every node precedes its downstream node."""
        indeg = {nid: 0 for nid in self.nodes}
        for k in self.links.values():
            if k.to_node in indeg and k.from_node in indeg:
                indeg[k.to_node] += 1
        ready = [nid for nid in self.nodes if indeg[nid] == 0]
        order = []
        while ready:
            nid = ready.pop()
            order.append(nid)
            link = self.outgoing.get(nid)
            if link is not None and link.to_node in indeg:
                indeg[link.to_node] -= 1
                if indeg[link.to_node] == 0:
                    ready.append(link.to_node)
        if len(order) != len(self.nodes):
            raise NetworkError("flow-direction graph contains a cycle")
        # stable, reproducible order: ready.pop() is deterministic for fixed input
        return tuple(order)

    def slope(self, conduit: Conduit | str) -> float:
        c = self.links[conduit] if isinstance(conduit, str) else conduit
        up = self.nodes[c.from_node].invert_elev + c.offset_up
        dn = self.nodes[c.to_node].invert_elev + c.offset_dn
        return (up - dn) / c.length

    def total_inflow(self) -> float:
        return math.fsum(n.base_inflow for n in (*self.junctions, *self.tanks))

    def replace(self, **changes) -> "Network":
        kw = dict(
            junctions=self.junctions, tanks=self.tanks, outfalls=self.outfalls,
            conduits=self.conduits, pumps=self.pumps, patterns=self.patterns,
        )
        kw.update(changes)
        return Network(**kw)


_NETWORK_FIELDS = ("junctions", "tanks", "outfalls", "conduits", "pumps", "patterns")


@dataclass(frozen=True)
class ArterialMapping:
    """Full-network node -> arterial node that receives its wastewater."""

    targets: Mapping[str, str]

    def __post_init__(self):
        object.__setattr__(self, "targets", dict(self.targets))

    def __getitem__(self, node_id: str) -> str:
        return self.targets[node_id]

    def __len__(self) -> int:
        return len(self.targets)

    def __iter__(self):
        return iter(self.targets)

    def members(self, arterial_node: str) -> list[str]:
        return [k for k, v in self.targets.items() if v == arterial_node]

    @classmethod
    def identity(cls, node_ids: Iterable[str]) -> "ArterialMapping":
        return cls({n: n for n in node_ids})


# --- validation --------------------------------------------------------------


def validate(network: Network) -> ValidationReport:
    report = ValidationReport()
    bad = report.violations.append
    warn = report.warnings.append

    seen: set[str] = set()
    for n in (*network.junctions, *network.tanks, *network.outfalls):
        if n.id in seen:
            bad(Violation("duplicate id", n.id, f"node id {n.id!r} declared twice"))
        seen.add(n.id)
    seen = set()
    for k in (*network.conduits, *network.pumps):
        if k.id in seen:
            bad(Violation("duplicate id", k.id, f"link id {k.id!r} declared twice"))
        seen.add(k.id)

    if not network.outfalls:
        bad(Violation("no outfall", "", "network has no outfall"))

    for j in network.junctions:
        if j.rim_elev < j.invert_elev:
            bad(Violation("invalid field", j.id, f"junction {j.id}: rim below invert"))
        if j.base_inflow < 0:
            bad(Violation("invalid field", j.id, f"junction {j.id}: negative base inflow"))
    for t in network.tanks:
        if not t.max_depth > 0:
            bad(Violation("invalid field", t.id, f"tank {t.id}: max_depth must be > 0"))
        if not t.surface_area > 0:
            bad(Violation("invalid field", t.id, f"tank {t.id}: surface_area must be > 0"))
        if t.base_inflow < 0:
            bad(Violation("invalid field", t.id, f"tank {t.id}: negative base inflow"))

    nodes = network.nodes
    dangling = False
    for k in network.links.values():
        for end in (k.from_node, k.to_node):
            if end not in nodes:
                dangling = True
                bad(Violation("dangling endpoint", k.id,
                              f"link {k.id} references missing node {end!r}"))
    for c in network.conduits:
        if not (c.length > 0 and c.manning_n > 0 and c.diameter > 0):
            bad(Violation("invalid field", c.id,
                          f"conduit {c.id}: length, roughness and diameter must be > 0"))
    for p in network.pumps:
        if p.from_node in nodes and p.from_node not in network.tank_ids:
            bad(Violation("invalid field", p.id, f"pump {p.id} must draw from a storage tank"))
        if not p.rated_flow > 0:
            bad(Violation("invalid field", p.id, f"pump {p.id}: rated_flow must be > 0"))
        if not (p.start_depth > p.stop_depth >= 0):
            bad(Violation("invalid field", p.id,
                          f"pump {p.id}: need start_depth > stop_depth >= 0"))
        tank = nodes.get(p.from_node)
        if isinstance(tank, StorageTank) and p.start_depth > tank.max_depth:
            bad(Violation("invalid field", p.id,
                          f"pump {p.id}: start_depth exceeds tank max_depth"))

    out_count: dict[str, int] = {}
    for k in network.links.values():
        out_count[k.from_node] = out_count.get(k.from_node, 0) + 1
    for nid, cnt in out_count.items():
        if nid in network.outfall_ids:
            bad(Violation("non-tree topology", nid, f"outfall {nid} has an outgoing link"))
        elif cnt > 1:
            bad(Violation("non-tree topology", nid,
                          f"node {nid} has {cnt} outgoing links"))

    if dangling or any(v.kind == "non-tree topology" for v in report.violations):
        return report

    try:
        network.topo_order
    except NetworkError:
        bad(Violation("cycle", "", "flow-direction graph contains a cycle"))
        return report

    for nid in network.demand_nodes:
        cur = nid
        while cur not in network.outfall_ids:
            link = network.outgoing.get(cur)
            if link is None:
                bad(Violation("unreachable outfall", nid,
                              f"node {nid} has no path to an outfall"))
                break
            cur = link.to_node

    for c in network.conduits:
        if c.from_node in nodes and c.to_node in nodes and network.slope(c) <= 0:
            warn(Violation("nonpositive slope", c.id,
                           f"conduit {c.id} has slope {network.slope(c):.6g}"))
    return report


# --- path queries --------------------------------------------------------------


def downstream_links(network: Network, node: str) -> tuple[Link, ...]:
    """All links (conduits and pumps) from `node` to its outfall."""
    if node not in network.nodes:
        raise NetworkError(f"unknown node {node!r}")
    path = []
    cur = node
    visited = set()
    while cur not in network.outfall_ids:
        link = network.outgoing.get(cur)
        if link is None or cur in visited:
            raise NetworkError(f"node {node!r} has no downstream path to an outfall")
        visited.add(cur)
        path.append(link)
        cur = link.to_node
    return tuple(path)


def downstream_path(network: Network, node: str) -> tuple[Conduit, ...]:
    """Ordered gravity conduits from `node` to the outfall (pumps excluded)."""
    return tuple(k for k in downstream_links(network, node) if isinstance(k, Conduit))


def extract_arterial(network: Network) -> tuple[Network, ArterialMapping]:
    """Arterial network: tanks, pumps, their aggregation nodes and everything downstream.

    Each excluded node's inflow is moved to the first retained node on its
    downstream path (for capillary areas draining to a tank, that is the
    upstream end of the conduit entering the tank).
    """
    if not network.tanks and not network.pumps:
        raise ArterialUndefinedError("arterial network undefined: no tanks or pumps")

    keep: set[str] = set(network.outfall_ids)
    seeds = set(network.tank_ids) | {p.from_node for p in network.pumps}
    for nid in (*network.tank_ids, *network.outfall_ids):
        # outfall-adjacent nodes keep inflow from basins without a pump station
        for k in network.incoming[nid]:
            seeds.add(k.from_node)
    for nid in sorted(seeds):
        keep.add(nid)
        for link in downstream_links(network, nid):
            keep.add(link.to_node)

    mapping: dict[str, str] = {}
    for nid in reversed(network.topo_order):  # downstream first
        if nid in keep:
            mapping[nid] = nid
        else:
            mapping[nid] = mapping[network.outgoing[nid].to_node]

    inflows: dict[str, list[float]] = {nid: [] for nid in keep}
    for n in (*network.junctions, *network.tanks):
        inflows[mapping[n.id]].append(n.base_inflow)

    def _agg(node):
        total = math.fsum(inflows[node.id])
        if total == node.base_inflow:
            return node
        return replace(node, base_inflow=total)

    arterial = Network(
        junctions=[_agg(j) for j in network.junctions if j.id in keep],
        tanks=[_agg(t) for t in network.tanks if t.id in keep],
        outfalls=[o for o in network.outfalls if o.id in keep],
        conduits=[c for c in network.conduits if c.from_node in keep and c.to_node in keep],
        pumps=[p for p in network.pumps if p.from_node in keep],
        patterns=network.patterns,
    )
    targets = {nid: mapping[nid] for nid in network.demand_nodes}
    return arterial, ArterialMapping(targets)
