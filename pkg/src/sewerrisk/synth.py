"""Seeded synthetic sewer networks with Manning-sized pipes and pump stations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hydraulics.geometry import manning_full_flow
from .network import Conduit, Junction, Network, Outfall, Pump, StorageTank

COMMERCIAL_DIAMETERS = (0.2, 0.25, 0.3, 0.375, 0.45, 0.525, 0.6, 0.675, 0.75, 0.9, 1.05,
                        1.2, 1.35, 1.5, 1.8, 2.1, 2.4)
# inflows are multiples of this, so every partial sum of loads is exact in binary
INFLOW_QUANTUM = 2.0 ** -20


@dataclass(frozen=True)
class SynthesisParams:
    node_count: int = 500
    pump_count: int = 3
    tank_count: int | None = None  # defaults to pump_count
    diameter_range: tuple[float, float] = (0.2, 2.4)
    slope_range: tuple[float, float] = (0.004, 0.02)
    manning_n: float = 0.013
    inflow_range: tuple[float, float] = (0.0005, 0.003)
    length_range: tuple[float, float] = (30.0, 90.0)
    target_utilization: float = 0.5
    branching: float = 12.0  # mean look-back when choosing a parent; larger = bushier

    def __post_init__(self):
        tanks = self.pump_count if self.tank_count is None else self.tank_count
        if self.node_count < 2:
            raise ValueError("node_count must be at least 2 (one junction and the outfall)")
        if self.pump_count < 0 or tanks < self.pump_count:
            raise ValueError("every pump needs its own tank: tank_count >= pump_count >= 0")
        if tanks > self.node_count - 2:
            raise ValueError("too many tanks for the node count")
        if not 0 < self.target_utilization < 0.8:
            raise ValueError("target utilization must lie in (0, 0.8)")
        lo, hi = self.diameter_range
        if not 0 < lo <= hi:
            raise ValueError("invalid diameter range")
        if not 0 < self.slope_range[0] <= self.slope_range[1]:
            raise ValueError("invalid slope range")
        if not 0 <= self.inflow_range[0] <= self.inflow_range[1]:
            raise ValueError("invalid inflow range")
        if self.manning_n <= 0 or self.branching <= 0:
            raise ValueError("manning_n and branching must be positive")

    @property
    def tanks(self) -> int:
        return self.pump_count if self.tank_count is None else self.tank_count


def _quantize(q: float) -> float:
    return round(q / INFLOW_QUANTUM) * INFLOW_QUANTUM


def _subtree_sizes(parent: np.ndarray) -> np.ndarray:
    size = np.ones(parent.size, dtype=np.int64)
    for i in range(parent.size - 1, 0, -1):
        size[parent[i]] += size[i]
    return size


def generate_synthetic(params: SynthesisParams, seed: int) -> Network:
    """A random tree draining to one outfall, sized so no pipe exceeds the target utilization.

    Node 0 is the outfall; node i > 0 drains to an earlier node.  Pump stations
    sit on nodes with large upstream areas; each pump lifts from a wet well to
    the next node downstream and is rated at twice the wet well's design
    inflow.  Pipes get the smallest commercial diameter that carries the
    design flow at the target fraction of full-pipe capacity (never smaller
    than any pipe upstream).
    """
    rng = np.random.default_rng(seed)
    n = params.node_count

    parent = np.zeros(n, dtype=np.int64)
    for i in range(2, n):
        back = int(rng.exponential(params.branching))
        parent[i] = max(1, i - 1 - back)
    parent[1] = 0
    size = _subtree_sizes(parent)

    # stations on large, not-too-large upstream areas
    lo_sz, hi_sz = max(3, n // 20), max(4, (3 * n) // 5)
    candidates = [i for i in range(2, n) if lo_sz <= size[i] <= hi_sz]
    rng.shuffle(candidates)
    candidates += [i for i in rng.permutation(np.arange(2, n)) if i not in set(candidates)]
    n_tanks = params.tanks
    tank_nodes = sorted(int(i) for i in candidates[:n_tanks])
    pump_nodes = set(tank_nodes[:params.pump_count]) if params.pump_count else set()
    is_tank = np.zeros(n, dtype=bool)
    is_tank[tank_nodes] = True

    length = rng.uniform(*params.length_range, size=n)
    slope = rng.uniform(*params.slope_range, size=n)
    angle = rng.uniform(0.0, 2 * math.pi, size=n)
    inflow = np.array([_quantize(q) for q in rng.uniform(*params.inflow_range, size=n)])
    inflow[0] = 0.0
    inflow[is_tank] = 0.0
    cover = rng.uniform(1.5, 3.5, size=n)

    # design flows, upstream first; a pump passes on its rated flow
    design = inflow.copy()
    rated = np.zeros(n)
    for i in range(n - 1, 0, -1):
        if i in pump_nodes:
            rated[i] = _quantize(2.0 * design[i]) or INFLOW_QUANTUM
            design[parent[i]] += rated[i]
        else:
            design[parent[i]] += design[i]

    d_lo, d_hi = params.diameter_range
    sizes = [d for d in COMMERCIAL_DIAMETERS if d_lo <= d <= d_hi] or [d_lo]
    diameter = np.zeros(n)
    for i in range(n - 1, 0, -1):
        if i in pump_nodes:
            continue
        need = max((diameter[c] for c in np.flatnonzero(parent == i) if c not in pump_nodes),
                   default=sizes[0])
        d = next((s for s in sizes if s >= need and design[i] <= params.target_utilization
                  * manning_full_flow(s, params.manning_n, slope[i])), None)
        if d is None:
            # largest size cannot carry it at this slope: steepen the pipe instead
            d = max(sizes[-1], need)
            full = manning_full_flow(d, params.manning_n, 1.0)
            slope[i] = max(slope[i], (design[i] / (params.target_utilization * full)) ** 2 * 1.01)
        diameter[i] = d

    coord = np.zeros((n, 2))
    for i in range(1, n):
        p = parent[i]
        coord[i] = coord[p] + length[i] * np.array([math.cos(angle[i]), math.sin(angle[i])])

    # inverts from the outfall upward; wet wells sit below their receiving node
    invert = np.zeros(n)
    tank_depth = np.zeros(n)
    inlet_offset = np.zeros(n)
    for i in range(1, n):
        p = parent[i]
        if is_tank[i]:
            tank_depth[i] = float(rng.uniform(3.0, 5.0))
        if i in pump_nodes:
            invert[i] = invert[p] - float(rng.uniform(2.0, 4.0))
        else:
            # pipes entering a wet well discharge above its maximum water level;
            # elsewhere crowns are matched, so a small lateral drops into a larger sewer
            if is_tank[p]:
                inlet_offset[i] = tank_depth[p]
            elif p != 0 and p not in pump_nodes:
                inlet_offset[i] = max(0.0, diameter[p] - diameter[i])
            invert[i] = invert[p] + inlet_offset[i] + slope[i] * length[i]

    def nid(i: int) -> str:
        if i == 0:
            return "OUT1"
        return f"T{i}" if is_tank[i] else f"J{i}"

    def r6(x: float) -> float:
        return round(float(x), 6)

    junctions, tanks, conduits, pumps = [], [], [], []
    for i in range(1, n):
        xy = (r6(coord[i, 0]), r6(coord[i, 1]))
        if is_tank[i]:
            design_in = max(design[i], INFLOW_QUANTUM)
            start, stop = 0.5 * tank_depth[i], 0.15 * tank_depth[i]
            area = max(4.0, design_in * 600.0 / (start - stop))
            tanks.append(StorageTank(nid(i), r6(invert[i]), r6(tank_depth[i]), r6(area), xy))
            if i in pump_nodes:
                pumps.append(Pump(f"P{i}", nid(i), nid(parent[i]), float(rated[i]),
                                  r6(start), r6(stop)))
        else:
            rim = invert[i] + diameter[i] + cover[i]
            junctions.append(Junction(nid(i), r6(invert[i]), r6(rim), float(inflow[i]),
                                      None, xy))
        if i not in pump_nodes:
            conduits.append(Conduit(f"C{i}", nid(i), nid(parent[i]), r6(length[i]),
                                    params.manning_n, float(diameter[i]), 0.0,
                                    r6(inlet_offset[i])))
    return Network(junctions=junctions, tanks=tanks, outfalls=[Outfall("OUT1", 0.0, (0.0, 0.0))],
                   conduits=conduits, pumps=pumps)
