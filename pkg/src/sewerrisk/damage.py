"""Categorical damage models, reproducible scenario sampling and damaged-network views."""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .hydraulics.geometry import EffectiveConduit
from .network import Conduit, Network, NetworkError

TANK, PUMP, PIPE = 0, 1, 2
CLASS_NAMES = ("tanks", "pumps", "pipes")


class DamageModelError(ValueError):
    pass


@dataclass(frozen=True)
class DamageState:
    """Undamaged (factor 1), failed (factor 0) or a reduced capacity factor in (0, 1)."""

    factor: float

    def __post_init__(self):
        if not 0.0 <= self.factor <= 1.0:
            raise DamageModelError(f"capacity factor must be in [0, 1], got {self.factor}")

    @property
    def failed(self) -> bool:
        return self.factor == 0.0

    @property
    def undamaged(self) -> bool:
        return self.factor == 1.0

    @classmethod
    def parse(cls, text: str) -> "DamageState":
        t = text.strip().lower()
        if t == "undamaged":
            return UNDAMAGED
        if t == "failed":
            return FAILED
        if t.startswith("capacity:"):
            c = float(t.split(":", 1)[1])
            if not 0.0 < c < 1.0:
                raise DamageModelError(f"capacity factor must lie in (0, 1): {text!r}")
            return cls(c)
        raise DamageModelError(f"unknown damage state {text!r}")

    def __str__(self) -> str:
        if self.undamaged:
            return "undamaged"
        if self.failed:
            return "failed"
        return f"capacity:{self.factor:g}"


UNDAMAGED = DamageState(1.0)
FAILED = DamageState(0.0)


def capacity(c: float) -> DamageState:
    if not 0.0 < c < 1.0:
        raise DamageModelError(f"capacity factor must lie in (0, 1), got {c}")
    return DamageState(c)


@dataclass(frozen=True)
class DamageStateDistribution:
    entries: tuple[tuple[DamageState, float], ...]

    def __post_init__(self):
        entries = tuple((s, float(p)) for s, p in self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise DamageModelError("empty damage-state distribution")
        if any(p < 0 for _, p in entries):
            raise DamageModelError("negative damage-state probability")
        total = math.fsum(p for _, p in entries)
        if abs(total - 1.0) > 1e-12:
            raise DamageModelError(f"probabilities sum to {total!r}, not 1")

    @property
    def factors(self) -> np.ndarray:
        return np.array([s.factor for s, _ in self.entries])

    @property
    def cumulative(self) -> np.ndarray:
        cum = np.cumsum([p for _, p in self.entries])
        cum[-1] = 1.0
        return cum

    def probability(self, state: DamageState) -> float:
        return math.fsum(p for s, p in self.entries if s == state)

    def failure_probability(self) -> float:
        return self.probability(FAILED)

    @classmethod
    def certain(cls, state: DamageState = UNDAMAGED) -> "DamageStateDistribution":
        return cls(((state, 1.0),))


@dataclass(frozen=True)
class DamageModel:
    tanks: DamageStateDistribution
    pumps: DamageStateDistribution
    pipes: DamageStateDistribution

    @classmethod
    def default(cls) -> "DamageModel":
        """Assumed damage-state probabilities for tanks, pumps and pipes."""
        return cls(
            tanks=DamageStateDistribution(((UNDAMAGED, 0.9), (FAILED, 0.1))),
            pumps=DamageStateDistribution(((UNDAMAGED, 0.9), (FAILED, 0.1))),
            pipes=DamageStateDistribution((
                (UNDAMAGED, 0.85),
                (DamageState(0.5), 0.10),
                (DamageState(0.1), 0.04),
                (FAILED, 0.01),
            )),
        )

    @classmethod
    def undamaged(cls) -> "DamageModel":
        d = DamageStateDistribution.certain()
        return cls(d, d, d)

    def for_class(self, cls_code: int) -> DamageStateDistribution:
        return (self.tanks, self.pumps, self.pipes)[cls_code]

    @classmethod
    def from_config(cls, source: str | Path | configparser.ConfigParser,
                    section: str = "damage") -> "DamageModel":
        """Read per-class `state probability` lists from an INI-style file.

        Example::

            [damage]
            tanks = undamaged 0.9, failed 0.1
            pipes = undamaged 0.85, capacity:0.5 0.1, capacity:0.1 0.04, failed 0.01

        Classes that are not listed keep the default distribution.
        """
        if isinstance(source, configparser.ConfigParser):
            cp = source
        else:
            cp = configparser.ConfigParser()
            path = Path(source)
            if not path.exists():
                raise DamageModelError(f"damage config not found: {path}")
            cp.read(path)
        if not cp.has_section(section):
            raise DamageModelError(f"config has no [{section}] section")
        base = cls.default()
        kw = {}
        for name in CLASS_NAMES:
            if cp.has_option(section, name):
                kw[name] = parse_distribution(cp.get(section, name))
            else:
                kw[name] = getattr(base, name)
        return cls(**kw)

    def to_config(self) -> str:
        lines = ["[damage]"]
        for name in CLASS_NAMES:
            dist = getattr(self, name)
            lines.append(f"{name} = " + ", ".join(f"{s} {p!r}" for s, p in dist.entries))
        return "\n".join(lines) + "\n"


def parse_distribution(text: str) -> DamageStateDistribution:
    entries = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split()
        if len(parts) != 2:
            raise DamageModelError(f"expected `state probability`, got {item!r}")
        entries.append((DamageState.parse(parts[0]), float(parts[1])))
    return DamageStateDistribution(tuple(entries))


# --- counter-based streams ------------------------------------------------------

def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def stable_key(text: str) -> int:
    """64-bit key of a string, stable across processes and Python versions."""
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


@lru_cache(maxsize=256)
def _keys(ids: tuple[str, ...]) -> np.ndarray:
    return np.array([stable_key(i) for i in ids], dtype=np.uint64)


def component_uniforms(master_seed: int, sim_index: int, ids: Sequence[str]) -> np.ndarray:
    """U(0,1) draws, one per component, each a pure function of (seed, index, id)."""
    keys = _keys(tuple(ids))
    s = _splitmix64(np.array([master_seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    s = _splitmix64(s ^ np.uint64(sim_index & 0xFFFFFFFFFFFFFFFF))
    z = _splitmix64(_splitmix64(s ^ keys))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def derive_seed(master_seed: int, label: str) -> int:
    """Independent stream seed for a labelled sub-experiment."""
    z = _splitmix64(np.array([(master_seed ^ stable_key(label)) & 0xFFFFFFFFFFFFFFFF],
                             dtype=np.uint64))
    return int(z[0])


# --- scenarios --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ComponentTable:
    ids: tuple[str, ...]
    classes: np.ndarray  # TANK / PUMP / PIPE per component

    @classmethod
    def of(cls, network: Network) -> "ComponentTable":
        cache = network.__dict__.setdefault("_cache", {})
        tab = cache.get("components")
        if tab is None:
            ids = (
                tuple(c.id for c in network.conduits)
                + tuple(p.id for p in network.pumps)
                + tuple(t.id for t in network.tanks)
            )
            classes = np.array(
                [PIPE] * len(network.conduits) + [PUMP] * len(network.pumps)
                + [TANK] * len(network.tanks), dtype=np.int8,
            )
            tab = cache["components"] = cls(ids, classes)
        return tab


@dataclass(frozen=True)
class DamageScenario:
    """One Monte Carlo draw: a capacity factor for every damageable component.

    Factors are stored in the order of :class:`ComponentTable` (conduits,
    pumps, tanks); 1 = undamaged, 0 = failed.
    """

    ids: tuple[str, ...]
    factors: np.ndarray
    master_seed: int | None = None
    sim_index: int | None = None

    @cached_property
    def states(self) -> dict[str, DamageState]:
        return {i: DamageState(float(f)) for i, f in zip(self.ids, self.factors)}

    def __getitem__(self, component_id: str) -> DamageState:
        return self.states[component_id]

    def __eq__(self, other):
        if not isinstance(other, DamageScenario):
            return NotImplemented
        return self.states == other.states

    __hash__ = None  # type: ignore[assignment]

    @classmethod
    def from_states(cls, states: Mapping[str, DamageState]) -> "DamageScenario":
        ids = tuple(states)
        return cls(ids, np.array([states[i].factor for i in ids], dtype=float))

    @classmethod
    def undamaged(cls, network: Network) -> "DamageScenario":
        tab = ComponentTable.of(network)
        return cls(tab.ids, np.ones(len(tab.ids)))


def sample_scenario(model: DamageModel, network: Network, master_seed: int,
                    sim_index: int) -> DamageScenario:
    tab = ComponentTable.of(network)
    u = component_uniforms(master_seed, sim_index, tab.ids)
    factors = np.empty(len(tab.ids))
    for cls_code in (TANK, PUMP, PIPE):
        sel = tab.classes == cls_code
        if not sel.any():
            continue
        dist = model.for_class(cls_code)
        idx = np.searchsorted(dist.cumulative, u[sel], side="right")
        idx = np.minimum(idx, len(dist.entries) - 1)
        factors[sel] = dist.factors[idx]
    return DamageScenario(tab.ids, factors, master_seed, sim_index)


@dataclass(frozen=True, eq=False)
class DamagedNetwork:
    """Read-only view of a network under one damage scenario.

    Arrays follow the network's declaration order: `conduit_factor` for
    conduits (0 = failed), `pump_alive` for pumps, `tank_alive` for tanks.
    A failed tank also takes out its pump and every link touching it.
    """

    network: Network
    conduit_factor: np.ndarray
    pump_alive: np.ndarray
    tank_alive: np.ndarray
    scenario: DamageScenario | None = None

    @classmethod
    def undamaged(cls, network: Network) -> "DamagedNetwork":
        return cls(
            network,
            np.ones(len(network.conduits)),
            np.ones(len(network.pumps), dtype=bool),
            np.ones(len(network.tanks), dtype=bool),
        )

    @cached_property
    def failed(self) -> frozenset[str]:
        net = self.network
        out = {c.id for c, f in zip(net.conduits, self.conduit_factor) if f == 0.0}
        out |= {p.id for p, a in zip(net.pumps, self.pump_alive) if not a}
        out |= {t.id for t, a in zip(net.tanks, self.tank_alive) if not a}
        return frozenset(out)

    @cached_property
    def dead_nodes(self) -> frozenset[str]:
        return frozenset(t.id for t, a in zip(self.network.tanks, self.tank_alive) if not a)

    def link_survives(self, link_id: str) -> bool:
        link = self.network.links[link_id]
        if link_id in self.failed:
            return False
        return link.from_node not in self.dead_nodes and link.to_node not in self.dead_nodes

    def capacity_factor(self, conduit_id: str) -> float:
        i = self._conduit_index[conduit_id]
        return float(self.conduit_factor[i])

    def effective(self, conduit: Conduit | str) -> EffectiveConduit:
        c = self.network.links[conduit] if isinstance(conduit, str) else conduit
        f = self.capacity_factor(c.id)
        if f == 0.0:
            raise NetworkError(f"conduit {c.id} has failed")
        return EffectiveConduit(c, f, self.network.slope(c))

    @cached_property
    def _conduit_index(self) -> dict[str, int]:
        return {c.id: i for i, c in enumerate(self.network.conduits)}

    def routed_network(self) -> Network:
        """The surviving components as a plain network (capacity factors dropped)."""
        net = self.network
        return net.replace(
            tanks=[t for t in net.tanks if t.id not in self.dead_nodes],
            conduits=[c for c in net.conduits if self.link_survives(c.id)],
            pumps=[p for p in net.pumps if self.link_survives(p.id)],
        )


def apply_scenario(network: Network, scenario: DamageScenario) -> DamagedNetwork:
    tab = ComponentTable.of(network)
    if scenario.ids == tab.ids:
        factors = np.asarray(scenario.factors, dtype=float)
    else:
        known = set(tab.ids)
        unknown = [i for i in scenario.ids if i not in known]
        if unknown:
            raise NetworkError(f"scenario references unknown components: {unknown[:5]}")
        states = scenario.states
        factors = np.array([states[i].factor if i in states else 1.0 for i in tab.ids])
    nc, npmp = len(network.conduits), len(network.pumps)
    for i, cls_code in enumerate(tab.classes):
        if cls_code != PIPE and 0.0 < factors[i] < 1.0:
            raise DamageModelError(f"{tab.ids[i]}: partial damage applies to pipes only")
    return DamagedNetwork(
        network,
        conduit_factor=factors[:nc].copy(),
        pump_alive=factors[nc:nc + npmp] > 0.0,
        tank_alive=factors[nc + npmp:] > 0.0,
        scenario=scenario,
    )


def empirical_frequencies(model: DamageModel, network: Network, master_seed: int,
                          n: int) -> dict[str, dict[DamageState, float]]:
    """State frequencies per class over `n` sampled scenarios (diagnostic helper)."""
    tab = ComponentTable.of(network)
    counts: dict[str, dict[DamageState, int]] = {name: {} for name in CLASS_NAMES}
    totals = dict.fromkeys(CLASS_NAMES, 0)
    for i in range(n):
        sc = sample_scenario(model, network, master_seed, i)
        for cls_code, f in zip(tab.classes, sc.factors):
            name = CLASS_NAMES[cls_code]
            st = DamageState(float(f))
            counts[name][st] = counts[name].get(st, 0) + 1
            totals[name] += 1
    return {
        name: {s: c / totals[name] for s, c in cnt.items()} for name, cnt in counts.items()
        if totals[name]
    }
