"""Batched Monte Carlo estimation of nodal PM with a delta-based stopping rule.

Every scenario is a pure function of (seed, simulation index), and batch
results are accumulated in index order, so the estimates do not depend on
the number of worker processes.
"""

from __future__ import annotations

import enum
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .analysis import CapacityBasis, Fidelity, scenario_pm
from .damage import DamagedNetwork, DamageModel, apply_scenario, derive_seed, sample_scenario
from .hydraulics.routing import NetworkArrays, RoutingError, SolverConfig
from .network import ArterialMapping, Network, NetworkError, extract_arterial


class Granularity(enum.Enum):
    FULL = "F"
    ARTERIAL = "A"


@dataclass(frozen=True)
class ModelSpec:
    granularity: Granularity
    fidelity: Fidelity

    @property
    def name(self) -> str:
        return self.fidelity.value + self.granularity.value

    @classmethod
    def from_name(cls, name: str) -> "ModelSpec":
        for spec in ALL_MODELS:
            if spec.name == name.upper():
                return spec
        raise ValueError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")

    def __str__(self) -> str:
        return self.name


ALL_MODELS = tuple(
    ModelSpec(g, f) for g in (Granularity.FULL, Granularity.ARTERIAL)
    for f in (Fidelity.DYNAMIC, Fidelity.KINEMATIC, Fidelity.CONNECTIVITY)
)
MODEL_NAMES = tuple(m.name for m in ALL_MODELS)


@dataclass(frozen=True)
class NodePmEstimate:
    node_id: str
    mean: float
    n: int
    delta: float


@dataclass(frozen=True)
class ConvergenceConfig:
    batch_size: int = 100
    target: float = 0.1
    max_simulations: int = 10_000

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.target > 0:
            raise ValueError("target must be positive")
        if self.max_simulations < 1:
            raise ValueError("max_simulations must be at least 1")


class ScenarioFailure(RuntimeError):
    """A single scenario could not be evaluated; carries what is needed to replay it."""

    def __init__(self, model: str, seed: int, sim_index: int, cause: Exception):
        super().__init__(f"model {model}: scenario (seed={seed}, index={sim_index}) failed: "
                         f"{cause}")
        self.model = model
        self.seed = seed
        self.sim_index = sim_index
        self.cause = cause

    def __reduce__(self):
        return (ScenarioFailure, (self.model, self.seed, self.sim_index, self.cause))


def delta_pm(pm_mean: float, n: int) -> float:
    """sqrt((1-p)/(N p)) with p clamped to 1/N; exactly 0 when the mean is 1."""
    if n < 1:
        raise ValueError("N must be at least 1")
    if pm_mean >= 1.0:
        return 0.0
    p = max(pm_mean, 1.0 / n)
    return math.sqrt((1.0 - p) / (n * p))


def delta_pm_array(means: np.ndarray, n: int) -> np.ndarray:
    p = np.maximum(means, 1.0 / n)
    d = np.sqrt(np.clip(1.0 - p, 0.0, None) / (n * p))
    return np.where(means >= 1.0, 0.0, d)


@dataclass
class BatchOutcome:
    sums: np.ndarray
    n: int
    average_delta: float
    converged: bool
    history: list[tuple[int, float]] = field(default_factory=list)


def run_batches(sample: Callable[[int, int], np.ndarray], n_nodes: int, demand: np.ndarray,
                conv: ConvergenceConfig) -> BatchOutcome:
    """Drive `sample(start, count) -> (count, n_nodes)` PM arrays to convergence.

    Stops at the first batch boundary where the mean delta over the `demand`
    nodes drops below the target, or when the simulation cap is reached.
    """
    sums = np.zeros(n_nodes)
    n = 0
    history = []
    while True:
        count = min(conv.batch_size, conv.max_simulations - n)
        block = np.asarray(sample(n, count), dtype=float)
        if block.shape != (count, n_nodes):
            raise ValueError(f"sampler returned shape {block.shape}, expected {(count, n_nodes)}")
        for row in block:
            sums += row
        n += count
        avg = float(delta_pm_array(sums[demand] / n, n).mean()) if demand.any() else 0.0
        history.append((n, avg))
        if avg < conv.target:
            return BatchOutcome(sums, n, avg, True, history)
        if n >= conv.max_simulations:
            return BatchOutcome(sums, n, avg, False, history)


@dataclass
class ModelRunResult:
    spec: ModelSpec
    estimates: dict[str, NodePmEstimate]
    total_time: float
    time_per_simulation: float
    n_simulations: int
    average_delta: float
    converged: bool
    seed: int
    routed_nodes: tuple[str, ...] = ()

    def pm(self, node_ids) -> np.ndarray:
        return np.array([self.estimates[n].mean for n in node_ids])

    def summary(self, timings: bool = True) -> str:
        status = "converged" if self.converged else "NOT converged (simulation cap reached)"
        lines = [
            f"model: {self.spec.name}",
            f"simulations: {self.n_simulations}",
            f"average delta_pm: {self.average_delta:.6f}",
            f"status: {status}",
            f"seed: {self.seed}",
        ]
        if timings:
            lines += [f"total time [s]: {self.total_time:.3g}",
                      f"time per simulation [s]: {self.time_per_simulation:.3g}"]
        return "\n".join(lines)


# --- scenario evaluation (also runs inside worker processes) -------------------

_WORKER: dict = {}


def _init_worker(network, fidelity, damage, config, basis, seed):
    _WORKER.update(network=network, fidelity=fidelity, damage=damage, config=config,
                   basis=basis, seed=seed)


def _evaluate_range(start: int, count: int) -> np.ndarray:
    w = _WORKER
    net = w["network"]
    out = np.empty((count, len(NetworkArrays.of(net).node_ids)))
    for j in range(count):
        idx = start + j
        try:
            scenario = sample_scenario(w["damage"], net, w["seed"], idx)
            out[j] = scenario_pm(apply_scenario(net, scenario), w["fidelity"], w["config"],
                                 w["basis"])
        except (RoutingError, FloatingPointError) as exc:
            raise ScenarioFailure(w.get("name", "?"), w["seed"], idx, exc) from exc
    return out


def _chunks(start: int, count: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, count))
    edges = [start + (count * p) // parts for p in range(parts + 1)]
    return [(a, b - a) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _warm_up(network: Network, fidelity: Fidelity, config: SolverConfig) -> None:
    """Compile the solver kernels outside the timed region."""
    if fidelity is Fidelity.CONNECTIVITY:
        return
    short = SolverConfig(dt=config.dt, duration=config.dt * 2,
                         inertial_terms=config.inertial_terms,
                         slot_width_fraction=config.slot_width_fraction,
                         min_node_surface_area=config.min_node_surface_area,
                         gravity=config.gravity)
    try:
        scenario_pm(DamagedNetwork.undamaged(network), fidelity, short)
    except RoutingError:
        pass


def model_network(network: Network, spec: ModelSpec) -> tuple[Network, ArterialMapping]:
    if spec.granularity is Granularity.ARTERIAL:
        return extract_arterial(network)
    return network, ArterialMapping.identity(network.demand_nodes)


def scenario_seed(master_seed: int, spec: ModelSpec, crn: bool) -> int:
    """Common random numbers share one stream across models; otherwise each gets its own."""
    return master_seed if crn else derive_seed(master_seed, spec.name)


def run_model(network: Network, spec: ModelSpec, damage: DamageModel | None = None,
              config: SolverConfig | None = None, conv: ConvergenceConfig | None = None,
              master_seed: int = 0, *, workers: int = 1, crn: bool = False,
              basis: CapacityBasis = CapacityBasis.EFFECTIVE) -> ModelRunResult:
    """Estimate the PM of every node of `network` under one of the six models.

    Arterial results are expanded so that every full-network node carries
    the estimate of the arterial node its wastewater is assigned to.
    """
    damage = damage or DamageModel.default()
    config = config or SolverConfig()
    conv = conv or ConvergenceConfig()
    routed, mapping = model_network(network, spec)
    arr = NetworkArrays.of(routed)
    demand = np.array([nid not in routed.outfall_ids for nid in arr.node_ids])
    seed = scenario_seed(master_seed, spec, crn)

    _warm_up(routed, spec.fidelity, config)
    init = (routed, spec.fidelity, damage, config, basis, seed)
    t0 = time.perf_counter()
    if workers <= 1:
        _init_worker(*init)
        _WORKER["name"] = spec.name
        outcome = run_batches(_evaluate_range, len(arr.node_ids), demand, conv)
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=init) as pool:
            def sample(start, count):
                parts = _chunks(start, count, workers)
                futures = [pool.submit(_evaluate_range, a, c) for a, c in parts]
                try:
                    return np.concatenate([f.result() for f in futures])
                except ScenarioFailure as exc:
                    raise ScenarioFailure(spec.name, exc.seed, exc.sim_index, exc.cause) from exc

            outcome = run_batches(sample, len(arr.node_ids), demand, conv)
    elapsed = time.perf_counter() - t0

    n = outcome.n
    means = outcome.sums / n
    deltas = delta_pm_array(means, n)
    routed_est = {
        nid: NodePmEstimate(nid, float(m), n, float(d))
        for nid, m, d in zip(arr.node_ids, means, deltas)
    }
    return ModelRunResult(
        spec=spec,
        estimates=expand_to_full(routed_est, mapping, network),
        total_time=elapsed,
        time_per_simulation=elapsed / n,
        n_simulations=n,
        average_delta=outcome.average_delta,
        converged=outcome.converged,
        seed=seed,
        routed_nodes=arr.node_ids,
    )


def expand_to_full(estimates: Mapping[str, NodePmEstimate], mapping: ArterialMapping,
                   network: Network) -> dict[str, NodePmEstimate]:
    """Give every node of the full `network` the estimate of the node it drains to."""
    out: dict[str, NodePmEstimate] = {}
    for nid in network.nodes:
        if nid in network.outfall_ids:
            target = nid
        else:
            try:
                target = mapping[nid]
            except KeyError:
                raise NetworkError(f"arterial mapping has no entry for node {nid}") from None
        est = estimates.get(target)
        if est is None:
            raise NetworkError(f"no estimate for node {target} (target of {nid})")
        out[nid] = est if target == nid else NodePmEstimate(nid, est.mean, est.n, est.delta)
    return out
