"""Kinematic-wave routing: each conduit is a nonlinear reservoir on the Manning rating.

Nodes are visited upstream-first within every step, so nothing downstream can
influence an upstream conduit.  Conduit inflow is limited to the effective
capacity; the surplus ponds at the upstream node and is offered again later.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np
from numba import njit

from .geometry import circ_area, manning_flow, slot_width_at
from .routing import (
    JUNCTION, OUT_CONDUIT, OUT_PUMP, OUTFALL, AdverseSlopeError, Hydrograph,
    NetworkArrays, RoutingResult, SolverConfig, as_damaged, effective_n, scenario_arrays,
    series_stride,
)
from .storage import pump_step


@njit(cache=True)
def lateral_inflow(n, t, base, series_of, tab, tab_dt, tab_len, tab_rep):
    b = base[n]
    s = series_of[n]
    if s < 0 or b == 0.0:
        return b
    j = int(t / tab_dt[s])
    m = tab_len[s]
    if j >= m:
        j = j % m if tab_rep[s] else m - 1
    return b * tab[s, j]


@njit(cache=True)
def _reservoir_depth(length, d, n, slope, qcap, dt, rhs, y0):
    """Depth y solving L*A(y) + dt*min(qcap, Q_manning(y)) = rhs."""
    if rhs <= 0.0:
        return 0.0
    lo = 0.0
    hi = d
    y = y0
    if y <= 0.0 or y >= d:
        y = 0.5 * d
    for _ in range(80):
        a = circ_area(d, y)
        q = manning_flow(d, n, slope, y)
        capped = q >= qcap
        if capped:
            q = qcap
        g = length * a + dt * q - rhs
        if g > 0.0:
            hi = y
        else:
            lo = y
        if abs(g) <= 1e-13 * rhs:
            return y
        w = slot_width_at(d, y, 0.0)
        deriv = length * w
        if not capped and a > 0.0 and w > 0.0:
            p = d * math.acos(1.0 - 2.0 * y / d)
            deriv += dt * q * (5.0 / 3.0 * w / a - 2.0 / 3.0 * (2.0 * d / w) / p)
        y_new = y - g / deriv if deriv > 0.0 else -1.0
        if not (lo < y_new < hi):
            y_new = 0.5 * (lo + hi)
        if abs(y_new - y) <= 1e-14 * d:
            return y_new
        y = y_new
    return y


@njit(cache=True)
def _kinematic_kernel(topo, kind, out_kind, out_idx, node_active, max_depth, tank_area,
                      c_dn, c_len, c_diam, c_neff, c_slope, c_qcap, c_active,
                      p_to, p_rated, p_start, p_stop, p_active,
                      base, series_of, tab, tab_dt, tab_len, tab_rep,
                      dt, n_steps, stride, series_out):
    nn = topo.size
    nc = c_dn.size
    acc = np.zeros(nn)
    pond = np.zeros(nn)
    tank_vol = np.zeros(nn)
    pump_on = np.zeros(nn, dtype=np.bool_)
    cvol = np.zeros(nc)
    cdepth = np.zeros(nc)
    qout = np.zeros(nc)
    qmax = np.zeros(nc)
    v_in = 0.0
    v_out = 0.0
    v_over = 0.0
    v_deficit = 0.0
    rec = 0
    for step in range(n_steps):
        t = step * dt
        for ii in range(nn):
            i = topo[ii]
            if not node_active[i]:
                continue
            lat = lateral_inflow(i, t, base, series_of, tab, tab_dt, tab_len, tab_rep)
            v_in += lat * dt
            total = lat + acc[i]
            acc[i] = 0.0
            if kind[i] == OUTFALL:
                v_out += total * dt
                continue
            k = out_idx[i]
            if out_kind[i] == OUT_PUMP and p_active[k]:
                v, on, pumped, over, deficit = pump_step(
                    tank_vol[i], pump_on[i], total, tank_area[i], max_depth[i],
                    p_rated[k], p_start[k], p_stop[k], dt, True)
                tank_vol[i] = v
                pump_on[i] = on
                v_over += over
                v_deficit += deficit
                acc[p_to[k]] += pumped
                continue
            if out_kind[i] != OUT_CONDUIT or not c_active[k]:
                continue
            held = pond[i] if kind[i] == JUNCTION else tank_vol[i]
            offered = total + held / dt
            q_in = min(offered, c_qcap[k])
            if q_in < 0.0:
                q_in = 0.0
            left = (offered - q_in) * dt
            if kind[i] == JUNCTION:
                pond[i] = left
            else:
                cap = tank_area[i] * max_depth[i]
                if left > cap:
                    v_over += left - cap
                    left = cap
                tank_vol[i] = left
            rhs = cvol[k] + dt * q_in
            y = _reservoir_depth(c_len[k], c_diam[k], c_neff[k], c_slope[k], c_qcap[k],
                                 dt, rhs, cdepth[k])
            v_new = c_len[k] * circ_area(c_diam[k], y)
            if v_new > rhs:
                v_new = rhs
            q_o = (rhs - v_new) / dt
            cvol[k] = v_new
            cdepth[k] = y
            qout[k] = q_o
            acc[c_dn[k]] += q_o
            m = q_in if q_in > q_o else q_o
            if m > qmax[k]:
                qmax[k] = m
        if stride > 0 and (step + 1) % stride == 0 and rec < series_out.shape[0]:
            for k in range(nc):
                series_out[rec, k] = qout[k]
            rec += 1
    stored = 0.0
    for k in range(nc):
        stored += cvol[k]
    ponded = 0.0
    for i in range(nn):
        stored += tank_vol[i]
        ponded += pond[i]
    totals = np.array([v_in, v_out, stored, ponded, v_over, v_deficit])
    return qmax, qout, cdepth, totals


def route_kinematic(network, inflows: Mapping[str, float | Hydrograph] | None = None,
                    config: SolverConfig | None = None) -> RoutingResult:
    """Kinematic-wave routing over the connected part of a (damaged) network.

    `network` is a Network or a DamagedNetwork.  `inflows` replaces the
    network's own dry-weather loads when given (node id -> constant flow or
    Hydrograph of flows).
    """
    config = config or SolverConfig()
    damaged = as_damaged(network)
    arr = NetworkArrays.of(damaged.network)
    connected, cf, pump_active, base, series_of, tables = scenario_arrays(arr, damaged, inflows)
    routed = cf > 0
    bad = routed & ~(arr.c_slope > 0)
    if bad.any():
        cid = arr.conduit_ids[int(np.flatnonzero(bad)[0])]
        raise AdverseSlopeError(
            f"kinematic routing requires positive slope (conduit {cid} has slope "
            f"{arr.c_slope[bad][0]:.6g})")
    qcap = np.where(routed, cf * np.nan_to_num(arr.q_full), 0.0)
    n_eff = effective_n(arr, cf)
    stride, nrec = series_stride(config)
    series = np.zeros((nrec, len(arr.conduit_ids)))
    qmax, qout, cdepth, totals = _kinematic_kernel(
        arr.topo, arr.kind, arr.out_kind, arr.out_idx, connected, arr.max_depth, arr.tank_area,
        arr.c_dn, arr.c_len, arr.c_diam, n_eff, arr.c_slope, qcap, routed,
        arr.p_to, arr.p_rated, arr.p_start, arr.p_stop, pump_active,
        base, series_of, *tables,
        float(config.dt), config.n_steps, stride, series,
    )
    v_in, v_out, stored, ponded, over, deficit = totals
    return RoutingResult(
        conduit_ids=arr.conduit_ids,
        max_abs_flow=qmax,
        final_flow=qout,
        final_depth=cdepth,
        node_ids=arr.node_ids,
        final_node_depth=np.zeros(len(arr.node_ids)),
        inflow_volume=float(v_in),
        outflow_volume=float(v_out),
        stored_volume=float(stored - deficit),
        ponded_volume=float(ponded),
        overflow_volume=float(over),
        series_times=(np.arange(1, nrec + 1) * stride * config.dt) if stride else None,
        series_flows=series if stride else None,
    )
