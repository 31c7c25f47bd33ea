"""Circular cross-section geometry and Manning conveyance (SI units)."""

from __future__ import annotations

import math
from dataclasses import dataclass

from numba import njit

from ..network import Conduit, Network

# SWMM's max section factor of a circular pipe occurs at 0.938 D (~1.076 Q_full)
SF_MAX_DEPTH_RATIO = 0.9382


@njit(cache=True)
def circ_area(d, y):
    if y <= 0.0:
        return 0.0
    if y >= d:
        return math.pi * d * d / 4.0
    theta = 2.0 * math.acos(1.0 - 2.0 * y / d)
    return d * d / 8.0 * (theta - math.sin(theta))


@njit(cache=True)
def slot_area(d, y, slot_width):
    """Flow area with a Preissmann slot of the given width above the crown."""
    if y <= 0.0:
        return 0.0
    if y < d:
        return circ_area(d, y)
    return math.pi * d * d / 4.0 + slot_width * (y - d)


@njit(cache=True)
def circ_perimeter(d, y):
    if y <= 0.0:
        return 0.0
    if y >= d:
        return math.pi * d
    return d * math.acos(1.0 - 2.0 * y / d)


@njit(cache=True)
def circ_hrad(d, y):
    if y <= 0.0:
        return 0.0
    if y >= d:
        return d / 4.0
    theta = 2.0 * math.acos(1.0 - 2.0 * y / d)
    return d / 4.0 * (1.0 - math.sin(theta) / theta)


@njit(cache=True)
def slot_width_at(d, y, slot_width):
    """Top width, including the slot above the crown."""
    if y <= 0.0:
        return 0.0
    if y >= d:
        return slot_width
    r = 1.0 - 2.0 * y / d
    return d * math.sqrt(max(1.0 - r * r, 0.0))


@njit(cache=True)
def manning_flow(d, n, slope, y):
    """Manning normal flow at depth y (capped at full-pipe geometry)."""
    if y <= 0.0 or slope <= 0.0:
        return 0.0
    yy = min(y, d)
    if yy >= d:
        a = math.pi * d * d / 4.0
        r = d / 4.0
    else:
        theta = 2.0 * math.acos(1.0 - 2.0 * yy / d)
        a = d * d / 8.0 * (theta - math.sin(theta))
        r = d / 4.0 * (1.0 - math.sin(theta) / theta)
    return a * r ** (2.0 / 3.0) * math.sqrt(slope) / n


@njit(cache=True)
def normal_depth_kernel(d, n, slope, q):
    """Depth at which Manning flow equals q; D when q exceeds the max conveyance."""
    if q <= 0.0:
        return 0.0
    if slope <= 0.0:
        return d
    hi = SF_MAX_DEPTH_RATIO * d
    if manning_flow(d, n, slope, hi) <= q:
        return d
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if manning_flow(d, n, slope, mid) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * d:
            break
    return 0.5 * (lo + hi)


# --- public API -----------------------------------------------------------------


def _check_depth(diameter: float, depth: float) -> None:
    if diameter <= 0:
        raise ValueError(f"diameter must be positive, got {diameter}")
    if depth < 0 or depth > diameter:
        raise ValueError(f"depth {depth} outside [0, {diameter}]")


def area_of_depth(diameter: float, depth: float) -> float:
    """Circular-segment flow area (m^2) for 0 <= depth <= diameter."""
    _check_depth(diameter, depth)
    return float(circ_area(diameter, depth))


def hyd_radius_of_depth(diameter: float, depth: float) -> float:
    _check_depth(diameter, depth)
    return float(circ_hrad(diameter, depth))


def top_width_of_depth(diameter: float, depth: float) -> float:
    _check_depth(diameter, depth)
    return float(slot_width_at(diameter, depth, 0.0)) if depth < diameter else 0.0


@dataclass(frozen=True)
class SectionGeometry:
    diameter: float

    @property
    def a_full(self) -> float:
        return math.pi * self.diameter**2 / 4.0

    @property
    def r_full(self) -> float:
        return self.diameter / 4.0

    def area(self, depth: float) -> float:
        return area_of_depth(self.diameter, depth)

    def hyd_radius(self, depth: float) -> float:
        return hyd_radius_of_depth(self.diameter, depth)


def manning_full_flow(diameter: float, manning_n: float, slope: float) -> float:
    if slope <= 0:
        raise ValueError(f"full-flow capacity requires a positive slope, got {slope:.6g}")
    a = math.pi * diameter**2 / 4.0
    return a * (diameter / 4.0) ** (2.0 / 3.0) * math.sqrt(slope) / manning_n


def full_flow_capacity(conduit: Conduit, network: Network | None = None,
                       slope: float | None = None) -> float:
    """Manning full-pipe capacity Q_full (m^3/s) of an undamaged conduit.

    The bed slope comes from `slope` if given, otherwise from the end
    inverts in `network`.
    """
    if slope is None:
        if network is None:
            raise TypeError("need either a network or an explicit slope")
        slope = network.slope(conduit)
    return manning_full_flow(conduit.diameter, conduit.manning_n, slope)


def normal_depth(diameter: float, manning_n: float, slope: float, flow: float) -> float:
    return float(normal_depth_kernel(diameter, manning_n, slope, flow))


@dataclass(frozen=True)
class EffectiveConduit:
    """A conduit whose Manning conveyance is scaled by a capacity factor c in (0, 1]."""

    conduit: Conduit
    capacity_factor: float
    slope: float

    def __post_init__(self):
        if not 0 < self.capacity_factor <= 1:
            raise ValueError(f"capacity factor must lie in (0, 1], got {self.capacity_factor}")

    @property
    def n_eff(self) -> float:
        if self.capacity_factor == 1.0:
            return self.conduit.manning_n
        return self.conduit.manning_n / self.capacity_factor

    @property
    def q_full(self) -> float:
        return manning_full_flow(self.conduit.diameter, self.conduit.manning_n, self.slope)

    @property
    def q_cap(self) -> float:
        return self.capacity_factor * self.q_full
