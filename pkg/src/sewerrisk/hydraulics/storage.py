"""Wet-well storage with an on/off constant-rate pump."""

from __future__ import annotations

from dataclasses import dataclass

from numba import njit

from ..network import Pump, StorageTank


@njit(cache=True)
def pump_step(volume, pump_on, inflow, area, max_depth, rated, start_depth, stop_depth,
              dt, pump_alive):
    """Advance one tank by dt.  Returns (volume, pump_on, pumped_flow, overflow, deficit).

    Volumes in m^3, flows in m^3/s.  Overflow and deficit are volumes for this step.
    """
    v = volume + inflow * dt
    deficit = 0.0
    if v < 0.0:
        deficit = -v
        v = 0.0
    depth = v / area
    if not pump_alive:
        pump_on = False
    elif pump_on and depth <= stop_depth:
        pump_on = False
    elif not pump_on and depth >= start_depth:
        pump_on = True
    pumped = 0.0
    if pump_on:
        pumped = min(rated, v / dt)
        v -= pumped * dt
    cap = area * max_depth
    overflow = 0.0
    if v > cap:
        overflow = v - cap
        v = cap
    return v, pump_on, pumped, overflow, deficit


@dataclass(frozen=True)
class TankState:
    volume: float = 0.0
    pump_on: bool = False
    overflow_volume: float = 0.0

    def depth(self, tank: StorageTank) -> float:
        return self.volume / tank.surface_area


def simulate_storage_pump(tank: StorageTank, pump: Pump, inflow: float, state: TankState,
                          dt: float) -> tuple[TankState, float]:
    """One routing step of a tank feeding its pump; returns (new state, pumped flow).

    Water above the tank's max depth is dropped as overflow and accumulated
    in the returned state, not routed anywhere.
    """
    if pump.from_node != tank.id:
        raise ValueError(f"pump {pump.id} does not draw from tank {tank.id}")
    v, on, pumped, over, _ = pump_step(
        state.volume, state.pump_on, inflow, tank.surface_area, tank.max_depth,
        pump.rated_flow, pump.start_depth, pump.stop_depth, dt, True,
    )
    return TankState(v, bool(on), state.overflow_volume + over), float(pumped)
