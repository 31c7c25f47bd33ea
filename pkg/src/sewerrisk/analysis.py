"""Connectivity and nodal performance measures (PM) for one damage scenario."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .damage import DamagedNetwork
from .hydraulics.dynamic import route_dynamic
from .hydraulics.kinematic import route_kinematic
from .hydraulics.routing import NetworkArrays, RoutingResult, SolverConfig, connectivity_masks
from .network import Conduit, Network, NetworkError, downstream_path

UTILIZATION_LIMIT = 0.8


class Fidelity(enum.Enum):
    DYNAMIC = "D"
    KINEMATIC = "K"
    CONNECTIVITY = "C"


class CapacityBasis(enum.Enum):
    """Which capacity a damaged pipe's maximum flow is compared against."""

    EFFECTIVE = "effective"  # c * Q_full
    ORIGINAL = "original"  # Q_full of the undamaged pipe


@dataclass(frozen=True)
class ConnectivityResult:
    connected: frozenset[str]

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.connected

    def indicator(self, node_id: str) -> int:
        return int(node_id in self.connected)


def connected_nodes(damaged: DamagedNetwork) -> ConnectivityResult:
    """Nodes with a chain of surviving conduits and pumps down to an outfall."""
    arr = NetworkArrays.of(damaged.network)
    mask = connectivity_masks(arr, damaged)[0]
    return ConnectivityResult(frozenset(n for n, c in zip(arr.node_ids, mask) if c))


def pm_connectivity(node: str, connectivity: ConnectivityResult) -> int:
    return connectivity.indicator(node)


def flagged_conduits(routing: RoutingResult, damaged: DamagedNetwork,
                     basis: CapacityBasis = CapacityBasis.EFFECTIVE) -> np.ndarray:
    """Boolean mask of conduits whose max flow exceeds 80% of capacity (strictly)."""
    arr = NetworkArrays.of(damaged.network)
    if tuple(routing.conduit_ids) != arr.conduit_ids:
        raise ValueError("routing result does not belong to this network")
    cap = arr.q_full_pm
    if basis is CapacityBasis.EFFECTIVE:
        cap = cap * damaged.conduit_factor
    routed = damaged.conduit_factor > 0
    return routed & (routing.max_abs_flow > UTILIZATION_LIMIT * cap)


def pm_flow(node: str, routing: RoutingResult, damaged: DamagedNetwork,
            path: tuple[Conduit, ...] | None = None,
            basis: CapacityBasis = CapacityBasis.EFFECTIVE) -> float:
    """Flow PM: 0 when disconnected, else 1 - (flagged conduits on the path) / n_i.

    `path` defaults to the node's downstream path in the undamaged network.
    A connected node with an empty path (an outfall) scores 1.
    """
    if node not in connected_nodes(damaged):
        return 0.0
    if path is None:
        path = downstream_path(damaged.network, node)
    if not path:
        return 1.0
    index = {cid: i for i, cid in enumerate(routing.conduit_ids)}
    missing = [c.id for c in path if c.id not in index]
    if missing:
        raise ValueError(f"no routing record for path conduits {missing}")
    flags = flagged_conduits(routing, damaged, basis)
    over = sum(bool(flags[index[c.id]]) for c in path)
    return 1.0 - over / len(path)


class PathIndex:
    """Sparse node-by-conduit incidence of the undamaged downstream paths.

    Rows follow `NetworkArrays.node_ids`, so one matrix-vector product turns a
    per-conduit flag vector into per-node counts of flagged path conduits.
    """

    def __init__(self, network: Network):
        arr = NetworkArrays.of(network)
        rows, cols = [], []
        lengths = np.zeros(len(arr.node_ids), dtype=np.int64)
        cidx = {cid: k for k, cid in enumerate(arr.conduit_ids)}
        for i, nid in enumerate(arr.node_ids):
            if nid in network.outfall_ids:
                continue
            try:
                path = downstream_path(network, nid)
            except NetworkError:
                continue
            lengths[i] = len(path)
            rows.extend([i] * len(path))
            cols.extend(cidx[c.id] for c in path)
        self.lengths = lengths
        self.matrix = sparse.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(len(arr.node_ids), len(arr.conduit_ids)))

    @classmethod
    def of(cls, network: Network) -> "PathIndex":
        cache = network.__dict__.setdefault("_cache", {})
        idx = cache.get("paths")
        if idx is None:
            idx = cache["paths"] = cls(network)
        return idx

    def pm(self, connected: np.ndarray, flags: np.ndarray) -> np.ndarray:
        counts = self.matrix @ flags.astype(float)
        n = np.where(self.lengths > 0, self.lengths, 1)
        pm = np.where(self.lengths > 0, 1.0 - counts / n, 1.0)
        return np.where(connected, pm, 0.0)


def scenario_pm(damaged: DamagedNetwork, fidelity: Fidelity,
                config: SolverConfig | None = None,
                basis: CapacityBasis = CapacityBasis.EFFECTIVE) -> np.ndarray:
    """PM of every node (in `NetworkArrays.node_ids` order) for one damaged network."""
    arr = NetworkArrays.of(damaged.network)
    connected = connectivity_masks(arr, damaged)[0]
    if fidelity is Fidelity.CONNECTIVITY:
        return connected.astype(float)
    solver = route_dynamic if fidelity is Fidelity.DYNAMIC else route_kinematic
    routing = solver(damaged, None, config)
    flags = flagged_conduits(routing, damaged, basis)
    return PathIndex.of(damaged.network).pm(connected, flags)
