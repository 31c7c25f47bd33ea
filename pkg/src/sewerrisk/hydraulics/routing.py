"""Solver configuration, results and the array form of a (damaged) network."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping

import numpy as np

from ..network import Network, StorageTank
from .geometry import manning_full_flow

if TYPE_CHECKING:
    from ..damage import DamagedNetwork

JUNCTION, TANK, OUTFALL = 0, 1, 2
OUT_NONE, OUT_CONDUIT, OUT_PUMP = 0, 1, 2
INERTIA_MODES = {"off": 0, "on": 1, "damped": 2}
# bed slope used for the I_80 capacity of flat or adverse conduits
MIN_CAPACITY_SLOPE = 1e-3


class RoutingError(RuntimeError):
    pass


class AdverseSlopeError(RoutingError):
    pass


class SolverInstabilityError(RoutingError):
    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1.0
    duration: float = 86400.0
    inertial_terms: str = "on"
    slot_width_fraction: float = 0.01
    min_node_surface_area: float = 1.0
    gravity: float = 9.81
    record_series: bool = False
    series_interval: float = 60.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("routing step must be positive")
        if not self.duration >= self.dt:
            raise ValueError("duration must be at least one routing step")
        if not 0 < self.slot_width_fraction <= 0.05:
            raise ValueError("slot_width_fraction must lie in (0, 0.05]")
        if self.inertial_terms not in INERTIA_MODES:
            raise ValueError(f"inertial_terms must be one of {sorted(INERTIA_MODES)}")
        if not self.min_node_surface_area > 0:
            raise ValueError("min_node_surface_area must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass(frozen=True)
class Hydrograph:
    """Piecewise-constant inflow multipliers on a fixed step.

    `repeat=True` cycles the values (diurnal patterns); otherwise the last
    value is held to the end of the run.
    """

    step: float
    values: tuple[float, ...]
    repeat: bool = False


@dataclass(eq=False)
class RoutingResult:
    conduit_ids: tuple[str, ...]
    max_abs_flow: np.ndarray
    final_flow: np.ndarray
    final_depth: np.ndarray
    node_ids: tuple[str, ...]
    final_node_depth: np.ndarray
    inflow_volume: float
    outflow_volume: float
    stored_volume: float
    ponded_volume: float
    overflow_volume: float
    max_courant: float = 0.0
    series_times: np.ndarray | None = None
    series_flows: np.ndarray | None = None
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def continuity_error(self) -> float:
        """Signed fraction of inflow volume not accounted for."""
        if self.inflow_volume <= 0:
            return 0.0
        residual = (self.inflow_volume - self.outflow_volume - self.stored_volume
                    - self.ponded_volume - self.overflow_volume)
        return residual / self.inflow_volume

    def _idx(self, conduit_id: str) -> int:
        if not self._index:
            self._index.update({c: i for i, c in enumerate(self.conduit_ids)})
        return self._index[conduit_id]

    def max_flow(self, conduit_id: str) -> float:
        return float(self.max_abs_flow[self._idx(conduit_id)])

    def flow(self, conduit_id: str) -> float:
        return float(self.final_flow[self._idx(conduit_id)])

    def depth(self, conduit_id: str) -> float:
        return float(self.final_depth[self._idx(conduit_id)])

    def node_depth(self, node_id: str) -> float:
        return float(self.final_node_depth[self.node_ids.index(node_id)])

    def series_csv(self) -> str:
        """Flow time series as CSV `t,conduit_id,flow` (empty body if not recorded)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "conduit_id", "flow"])
        if self.series_times is not None:
            for t, row in zip(self.series_times, self.series_flows):
                for cid, q in zip(self.conduit_ids, row):
                    w.writerow([repr(float(t)), cid, repr(float(q))])
        return buf.getvalue()


class NetworkArrays:
    """Flat numpy form of a network, shared by both solvers."""

    def __init__(self, network: Network):
        self.network = network
        nodes = list(network.nodes.values())
        self.node_ids = tuple(n.id for n in nodes)
        idx = {nid: i for i, nid in enumerate(self.node_ids)}
        self.node_index = idx
        nn = len(nodes)
        self.kind = np.zeros(nn, dtype=np.int64)
        self.invert = np.array([n.invert_elev for n in nodes], dtype=float)
        self.max_depth = np.full(nn, 1e6)
        self.tank_area = np.zeros(nn)
        self.out_stage = np.full(nn, np.nan)
        self.base_inflow = np.zeros(nn)
        self.pattern_of = np.full(nn, -1, dtype=np.int64)
        pattern_names = sorted(network.patterns)
        for i, n in enumerate(nodes):
            if n.id in network.outfall_ids:
                self.kind[i] = OUTFALL
                if n.fixed_stage is not None:
                    self.out_stage[i] = n.fixed_stage - n.invert_elev
            elif isinstance(n, StorageTank):
                self.kind[i] = TANK
                self.max_depth[i] = n.max_depth
                self.tank_area[i] = n.surface_area
                self.base_inflow[i] = n.base_inflow
            else:
                self.kind[i] = JUNCTION
                self.max_depth[i] = n.rim_elev - n.invert_elev
                self.base_inflow[i] = n.base_inflow
            pid = getattr(n, "pattern_id", None)
            if pid is not None and pid in network.patterns:
                self.pattern_of[i] = pattern_names.index(pid)
        self.patterns = [Hydrograph(3600.0, network.patterns[p], repeat=True)
                         for p in pattern_names]

        self.topo = np.array([idx[n] for n in network.topo_order], dtype=np.int64)

        cs = network.conduits
        self.conduit_ids = tuple(c.id for c in cs)
        self.c_up = np.array([idx[c.from_node] for c in cs], dtype=np.int64)
        self.c_dn = np.array([idx[c.to_node] for c in cs], dtype=np.int64)
        self.c_len = np.array([c.length for c in cs], dtype=float)
        self.c_n = np.array([c.manning_n for c in cs], dtype=float)
        self.c_diam = np.array([c.diameter for c in cs], dtype=float)
        self.c_offup = np.array([c.offset_up for c in cs], dtype=float)
        self.c_offdn = np.array([c.offset_dn for c in cs], dtype=float)
        self.c_slope = np.array([network.slope(c) for c in cs], dtype=float)
        self.q_full = np.array(
            [manning_full_flow(c.diameter, c.manning_n, s) if s > 0 else np.nan
             for c, s in zip(cs, self.c_slope)], dtype=float)
        self.q_full_pm = np.array(
            [manning_full_flow(c.diameter, c.manning_n, max(abs(s), MIN_CAPACITY_SLOPE))
             if not s > 0 else q for c, s, q in zip(cs, self.c_slope, self.q_full)],
            dtype=float)

        ps = network.pumps
        self.pump_ids = tuple(p.id for p in ps)
        self.p_tank = np.array([idx[p.from_node] for p in ps], dtype=np.int64)
        self.p_to = np.array([idx[p.to_node] for p in ps], dtype=np.int64)
        self.p_rated = np.array([p.rated_flow for p in ps], dtype=float)
        self.p_start = np.array([p.start_depth for p in ps], dtype=float)
        self.p_stop = np.array([p.stop_depth for p in ps], dtype=float)

        self.tank_nodes = np.array([idx[t.id] for t in network.tanks], dtype=np.int64)

        self.out_kind = np.zeros(nn, dtype=np.int64)
        self.out_idx = np.full(nn, -1, dtype=np.int64)
        for k, c in enumerate(cs):
            self.out_kind[idx[c.from_node]] = OUT_CONDUIT
            self.out_idx[idx[c.from_node]] = k
        for k, p in enumerate(ps):
            self.out_kind[idx[p.from_node]] = OUT_PUMP
            self.out_idx[idx[p.from_node]] = k

        adj: list[list[tuple[int, int]]] = [[] for _ in range(nn)]
        for k in range(len(cs)):
            adj[self.c_up[k]].append((k, 1))
            adj[self.c_dn[k]].append((k, 0))
        self.adj_ptr = np.zeros(nn + 1, dtype=np.int64)
        self.adj_ptr[1:] = np.cumsum([len(a) for a in adj])
        flat = [e for a in adj for e in a]
        self.adj_c = np.array([e[0] for e in flat], dtype=np.int64)
        self.adj_up = np.array([e[1] for e in flat], dtype=np.int64)

        tops = [self.invert[i] + (self.max_depth[i] if self.kind[i] != OUTFALL else 0.0)
                for i in range(nn)]
        self.relief = max(max(tops) - float(self.invert.min()), 1.0) if nn else 1.0

    @classmethod
    def of(cls, network: Network) -> "NetworkArrays":
        cache = network.__dict__.setdefault("_cache", {})
        arr = cache.get("arrays")
        if arr is None:
            arr = cache["arrays"] = cls(network)
        return arr


def connectivity_masks(arr: NetworkArrays, damaged: "DamagedNetwork"):
    """(connected nodes, routed conduit factors, active pumps) for one scenario.

    A node is connected when its unique chain of surviving links reaches an
    outfall; conduits and pumps count as routed only when their upstream node
    is connected.
    """
    nn = len(arr.node_ids)
    alive = np.ones(nn, dtype=bool)
    if len(arr.tank_nodes):
        alive[arr.tank_nodes] = damaged.tank_alive
    c_ok = (damaged.conduit_factor > 0) & alive[arr.c_up] & alive[arr.c_dn]
    p_ok = damaged.pump_alive & alive[arr.p_tank] & alive[arr.p_to]

    connected = np.zeros(nn, dtype=bool)
    for i in arr.topo[::-1]:  # downstream first
        if arr.kind[i] == OUTFALL:
            connected[i] = True
            continue
        if not alive[i]:
            continue
        k = arr.out_idx[i]
        if arr.out_kind[i] == OUT_CONDUIT and c_ok[k]:
            connected[i] = connected[arr.c_dn[k]]
        elif arr.out_kind[i] == OUT_PUMP and p_ok[k]:
            connected[i] = connected[arr.p_to[k]]

    cf = np.where(c_ok & connected[arr.c_up], damaged.conduit_factor, 0.0)
    pa = p_ok & connected[arr.p_tank] if len(arr.p_tank) else p_ok
    return connected, cf, pa


def scenario_arrays(arr: NetworkArrays, damaged: "DamagedNetwork",
                    inflows: Mapping[str, float | Hydrograph] | None):
    """Connectivity masks plus lateral inflow tables (zeroed at disconnected nodes)."""
    connected, cf, pa = connectivity_masks(arr, damaged)
    base, series_of, tables = _lateral_tables(arr, inflows)
    base = np.where(connected, base, 0.0)
    return connected, cf, pa, base, series_of, tables


def _lateral_tables(arr: NetworkArrays, inflows):
    nn = len(arr.node_ids)
    if inflows is None:
        base = arr.base_inflow.copy()
        series_of = arr.pattern_of.copy()
        hydros = list(arr.patterns)
    else:
        base = np.zeros(nn)
        series_of = np.full(nn, -1, dtype=np.int64)
        hydros = []
        for nid, q in inflows.items():
            i = arr.node_index[nid]
            if isinstance(q, Hydrograph):
                base[i] = 1.0
                series_of[i] = len(hydros)
                hydros.append(q)
            else:
                base[i] = float(q)
    width = max([len(h.values) for h in hydros], default=1)
    tab = np.ones((max(len(hydros), 1), width))
    tab_dt = np.ones(max(len(hydros), 1))
    tab_len = np.ones(max(len(hydros), 1), dtype=np.int64)
    tab_rep = np.zeros(max(len(hydros), 1), dtype=np.bool_)
    for s, h in enumerate(hydros):
        tab[s, :len(h.values)] = h.values
        tab_dt[s] = h.step
        tab_len[s] = len(h.values)
        tab_rep[s] = h.repeat
    return base, series_of, (tab, tab_dt, tab_len, tab_rep)


def as_damaged(network_or_view) -> "DamagedNetwork":
    from ..damage import DamagedNetwork

    if isinstance(network_or_view, DamagedNetwork):
        return network_or_view
    return DamagedNetwork.undamaged(network_or_view)


def series_stride(config: SolverConfig) -> tuple[int, int]:
    """(steps between records, number of records); (0, 0) when not recording."""
    if not config.record_series:
        return 0, 0
    stride = max(1, int(round(config.series_interval / config.dt)))
    return stride, config.n_steps // stride


def effective_n(arr: NetworkArrays, factor: np.ndarray) -> np.ndarray:
    """Manning n scaled by 1/c (unchanged where c is 1 or the link is not routed)."""
    safe = np.where(factor > 0, factor, 1.0)
    return np.where((factor > 0) & (factor < 1.0), arr.c_n / safe, arr.c_n)
