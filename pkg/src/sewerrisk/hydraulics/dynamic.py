"""Dynamic-wave routing: link momentum coupled with node continuity.

One computational element per conduit.  Link flows follow the SWMM-style
semi-implicit momentum update (implicit friction, head-difference pressure
term, optional inertial terms).  Node continuity is written on stored volume,
with half of each adjacent conduit's volume assigned to either end node, and a
Preissmann slot above the crown so surcharge needs no separate regime.
Volumes are updated from the exact link fluxes and then converted back to
heads, which keeps the mass balance closed to rounding.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np
from numba import njit

from .geometry import circ_hrad, manning_flow, normal_depth_kernel, slot_area, slot_width_at
from .kinematic import lateral_inflow
from .routing import (
    INERTIA_MODES, OUT_PUMP, OUTFALL, TANK, Hydrograph, NetworkArrays, RoutingResult,
    SolverConfig, SolverInstabilityError, as_damaged, effective_n, scenario_arrays,
    series_stride,
)
from .storage import pump_step

_OK, _NAN, _RUNAWAY = 0, 1, 2


@njit(cache=True)
def _junction_volume(i, y, amin, adj_ptr, adj_c, adj_up, c_len, c_diam, c_offup, c_offdn,
                     c_on, slot_w):
    v = amin * y
    dv = amin
    for e in range(adj_ptr[i], adj_ptr[i + 1]):
        k = adj_c[e]
        if not c_on[k]:
            continue
        off = c_offup[k] if adj_up[e] else c_offdn[k]
        yy = y - off
        if yy > 0.0:
            v += 0.5 * c_len[k] * slot_area(c_diam[k], yy, slot_w[k])
            dv += 0.5 * c_len[k] * slot_width_at(c_diam[k], yy, slot_w[k])
    return v, dv


@njit(cache=True)
def _junction_depth(i, target, y0, ymax, amin, adj_ptr, adj_c, adj_up, c_len, c_diam,
                    c_offup, c_offdn, c_on, slot_w):
    """Invert the (monotone) volume-depth relation of a junction."""
    if target <= 0.0:
        return 0.0
    lo = 0.0
    hi = ymax
    y = min(max(y0, 0.0), ymax)
    for _ in range(60):
        v, dv = _junction_volume(i, y, amin, adj_ptr, adj_c, adj_up, c_len, c_diam,
                                 c_offup, c_offdn, c_on, slot_w)
        g = v - target
        if g > 0.0:
            hi = y
        else:
            lo = y
        if abs(g) <= 1e-12 * target:
            return y
        y_new = y - g / dv
        if not (lo < y_new < hi):
            y_new = 0.5 * (lo + hi)
        if abs(y_new - y) <= 1e-13 * (1.0 + ymax):
            return y_new
        y = y_new
    return y


@njit(cache=True)
def _dynamic_kernel(topo, kind, out_kind, out_idx, node_active, invert, max_depth, tank_area,
                    out_stage, adj_ptr, adj_c, adj_up,
                    c_up, c_dn, c_len, c_diam, c_neff, c_slope, c_offup, c_offdn, c_on,
                    p_to, p_rated, p_start, p_stop, p_active,
                    base, series_of, tab, tab_dt, tab_len, tab_rep,
                    dt, n_steps, g, slot_frac, amin, inertia, head_limit,
                    stride, series_out):
    nn = topo.size
    nc = c_up.size
    slot_w = slot_frac * c_diam
    y = np.zeros(nn)
    vol = np.zeros(nn)
    vmax = np.full(nn, np.inf)
    pond = np.zeros(nn)
    pump_on = np.zeros(nn, dtype=np.bool_)
    pump_in = np.zeros(nn)
    lat = np.zeros(nn)
    q = np.zeros(nc)
    a_mid_old = np.zeros(nc)
    y_mid = np.zeros(nc)
    qmax = np.zeros(nc)
    alpha = np.zeros(nc)
    beta = np.zeros(nc)
    e1 = np.zeros(nc)
    e2 = np.zeros(nc)
    lim = np.zeros(nc)
    hn = np.zeros(nn)
    d_el = np.ones(nn)
    o_el = np.zeros(nn)
    r_el = np.zeros(nn)
    unknown = np.zeros(nn, dtype=np.bool_)
    for i in range(nn):
        unknown[i] = node_active[i] and kind[i] != OUTFALL and kind[i] != TANK
    for i in range(nn):
        if kind[i] != OUTFALL and kind[i] != TANK and node_active[i]:
            vmax[i] = _junction_volume(i, max_depth[i], amin, adj_ptr, adj_c, adj_up, c_len,
                                       c_diam, c_offup, c_offdn, c_on, slot_w)[0]
    v_in = 0.0
    v_out = 0.0
    v_over = 0.0
    v_deficit = 0.0
    courant = 0.0
    rec = 0
    for step in range(n_steps):
        t = step * dt
        for i in range(nn):
            if node_active[i]:
                lat[i] = lateral_inflow(i, t, base, series_of, tab, tab_dt, tab_len, tab_rep)
        # link momentum, linear in the unknown end heads: Q = alpha - beta*(e2*H2 - e1*H1)
        for k in range(nc):
            if not c_on[k]:
                continue
            d = c_diam[k]
            w = slot_w[k]
            u = c_up[k]
            dn = c_dn[k]
            z1 = invert[u] + c_offup[k]
            z2 = invert[dn] + c_offdn[k]
            h1 = invert[u] + y[u]
            h2 = invert[dn] + y[dn]
            y1 = max(h1 - z1, 0.0)
            y2 = max(h2 - z2, 0.0)
            ym = 0.5 * (y1 + y2)
            a1 = slot_area(d, y1, w)
            a2 = slot_area(d, y2, w)
            am = slot_area(d, ym, w)
            rm = circ_hrad(d, ym)
            q_old = q[k]
            v = q_old / am if am > 1e-10 else 0.0
            tw = slot_width_at(d, ym, w)
            froude = 0.0
            if am > 1e-10 and tw > 0.0:
                froude = abs(v) / math.sqrt(g * am / tw)
            sigma = 0.0
            if inertia == 1:
                sigma = 1.0
            elif inertia == 2:
                if froude < 0.5:
                    sigma = 1.0
                elif froude < 1.0:
                    sigma = 2.0 * (1.0 - froude)
            dq1 = 0.0
            if rm > 0.0:
                dq1 = dt * g * c_neff[k] ** 2 * abs(v) / rm ** (4.0 / 3.0)
            dq3 = 2.0 * v * (am - a_mid_old[k]) * sigma
            dq4 = dt * v * v * (a2 - a1) / c_len[k] * sigma
            b = dt * g * am / (c_len[k] * (1.0 + dq1))
            al = (q_old + dq3 + dq4) / (1.0 + dq1)
            # an end whose node head sits below the conduit invert sees the invert
            e1[k] = 1.0 if h1 > z1 else 0.0
            e2[k] = 1.0 if h2 > z2 else 0.0
            al -= b * ((1.0 - e2[k]) * z2 - (1.0 - e1[k]) * z1)
            # an inlet above the downstream water surface is rating-controlled: normal
            # flow for the upstream depth enters the head solve as a known flux; as the
            # downstream surface submerges the inlet the flux blends linearly into the
            # momentum equation.  Normal flow also caps the momentum flow when the water
            # surface is steeper than the bed or the inlet is steep (supercritical at
            # normal flow for the upstream depth).
            lim[k] = -1.0
            if c_slope[k] > 0.0 and y1 < d:
                qn1 = 0.0
                sub = 0.0 if h2 <= z1 else 1.0
                if y1 > 0.0:
                    qn1 = manning_flow(d, c_neff[k], c_slope[k], y1)
                    sub = min(max((h2 - z1) / y1, 0.0), 1.0)
                    fr1 = (qn1 / a1) / math.sqrt(g * a1 / slot_width_at(d, y1, w))
                    if y2 < y1 or fr1 >= 1.0:
                        lim[k] = qn1
                if sub < 1.0:
                    al = (1.0 - sub) * qn1 + sub * al
                    b *= sub
            alpha[k] = al
            beta[k] = b
            a_mid_old[k] = am
            y_mid[k] = ym
            if am > 1e-10 and tw > 0.0:
                cr = dt * (abs(q_old) / am + math.sqrt(g * am / tw)) / c_len[k]
                if cr > courant:
                    courant = cr

        # implicit junction heads: eliminate leaves toward the roots of the conduit forest
        for i in range(nn):
            hn[i] = invert[i] + y[i]
        for ii in range(nn):
            i = topo[ii]
            if not unknown[i]:
                continue
            _, area_s = _junction_volume(i, y[i], amin, adj_ptr, adj_c, adj_up, c_len, c_diam,
                                         c_offup, c_offdn, c_on, slot_w)
            dg = area_s
            rg = area_s * hn[i] + dt * (lat[i] + pump_in[i])
            og = 0.0
            for e in range(adj_ptr[i], adj_ptr[i + 1]):
                k = adj_c[e]
                if not c_on[k]:
                    continue
                tb = dt * beta[k]
                if adj_up[e]:
                    dg += tb * e1[k]
                    rg -= dt * alpha[k]
                    dn = c_dn[k]
                    if unknown[dn]:
                        og = -tb * e2[k]
                    else:
                        rg += tb * e2[k] * hn[dn]
                else:
                    dg += tb * e2[k]
                    rg += dt * alpha[k]
                    u = c_up[k]
                    if unknown[u]:
                        dg += tb * e1[k] * o_el[u] / d_el[u]
                        rg += tb * e1[k] * r_el[u] / d_el[u]
                    else:
                        rg += tb * e1[k] * hn[u]
            d_el[i] = dg
            o_el[i] = og
            r_el[i] = rg
        for ii in range(nn - 1, -1, -1):
            i = topo[ii]
            if not unknown[i]:
                continue
            hp = 0.0
            if o_el[i] != 0.0:
                hp = hn[c_dn[out_idx[i]]]
            hn[i] = (r_el[i] - o_el[i] * hp) / d_el[i]
        for k in range(nc):
            if not c_on[k]:
                continue
            qn = alpha[k] - beta[k] * (e2[k] * hn[c_dn[k]] - e1[k] * hn[c_up[k]])
            if qn > 0.0 and 0.0 <= lim[k] < qn:
                qn = lim[k]
            q[k] = qn

        # node continuity, upstream first; outflows limited to the water available
        for ii in range(nn):
            i = topo[ii]
            if not node_active[i]:
                continue
            li = lat[i]
            v_in += li * dt
            q_in = li + pump_in[i]
            pump_in[i] = 0.0
            q_out = 0.0
            for e in range(adj_ptr[i], adj_ptr[i + 1]):
                k = adj_c[e]
                if not c_on[k]:
                    continue
                f = -q[k] if adj_up[e] else q[k]
                if f >= 0.0:
                    q_in += f
                else:
                    q_out -= f
            if kind[i] == OUTFALL:
                v_out += (q_in - q_out) * dt
                # boundary depth for the next step
                if not math.isnan(out_stage[i]):
                    y[i] = max(out_stage[i], 0.0)
                else:
                    yb = 0.0
                    for e in range(adj_ptr[i], adj_ptr[i + 1]):
                        k = adj_c[e]
                        if c_on[k] and not adj_up[e] and q[k] > 0.0 and c_slope[k] > 0.0:
                            yn = normal_depth_kernel(c_diam[k], c_neff[k], c_slope[k], q[k])
                            yn += c_offdn[k]
                            if yn > yb:
                                yb = yn
                    y[i] = yb
                continue
            avail = vol[i] + pond[i] + q_in * dt
            if q_out * dt > avail and q_out > 0.0:
                scale = max(avail, 0.0) / (q_out * dt)
                for e in range(adj_ptr[i], adj_ptr[i + 1]):
                    k = adj_c[e]
                    if not c_on[k]:
                        continue
                    if adj_up[e] and q[k] > 0.0:
                        q[k] *= scale
                    elif not adj_up[e] and q[k] < 0.0:
                        # reverse flow into an already-updated upstream node
                        qs = q[k] * scale
                        ui = c_up[k]
                        vol[ui] -= (qs - q[k]) * dt
                        q[k] = qs
                        if vol[ui] < 0.0:
                            v_deficit -= vol[ui]
                            vol[ui] = 0.0
                        if kind[ui] == TANK:
                            y[ui] = vol[ui] / tank_area[ui]
                        else:
                            y[ui] = _junction_depth(ui, vol[ui], y[ui], max_depth[ui], amin,
                                                    adj_ptr, adj_c, adj_up, c_len, c_diam,
                                                    c_offup, c_offdn, c_on, slot_w)
                q_out *= scale
            net = q_in - q_out
            if kind[i] == TANK:
                k = out_idx[i]
                if out_kind[i] == OUT_PUMP and p_active[k]:
                    vn, on, pumped, over, deficit = pump_step(
                        vol[i], pump_on[i], net, tank_area[i], max_depth[i], p_rated[k],
                        p_start[k], p_stop[k], dt, True)
                    pump_on[i] = on
                    pump_in[p_to[k]] += pumped
                else:
                    vn = vol[i] + net * dt
                    deficit = 0.0
                    if vn < 0.0:
                        deficit = -vn
                        vn = 0.0
                    over = 0.0
                    cap = tank_area[i] * max_depth[i]
                    if vn > cap:
                        over = vn - cap
                        vn = cap
                vol[i] = vn
                v_over += over
                v_deficit += deficit
                y[i] = vn / tank_area[i]
            else:
                vn = vol[i] + net * dt
                if vn < 0.0:
                    r = min(pond[i], -vn)
                    pond[i] -= r
                    vn += r
                    if vn < 0.0:
                        v_deficit -= vn
                        vn = 0.0
                if pond[i] > 0.0 and vn < vmax[i]:
                    r = min(pond[i], vmax[i] - vn)
                    pond[i] -= r
                    vn += r
                if vn > vmax[i]:
                    pond[i] += vn - vmax[i]
                    vn = vmax[i]
                vol[i] = vn
                y[i] = _junction_depth(i, vn, y[i], max_depth[i], amin, adj_ptr, adj_c,
                                       adj_up, c_len, c_diam, c_offup, c_offdn, c_on, slot_w)
            if not (y[i] == y[i]):
                return qmax, q, y_mid, y, np.zeros(6), courant, _NAN, step
            if invert[i] + y[i] - invert.min() > head_limit:
                return qmax, q, y_mid, y, np.zeros(6), courant, _RUNAWAY, step

        for k in range(nc):
            aq = abs(q[k])
            if aq != aq:
                return qmax, q, y_mid, y, np.zeros(6), courant, _NAN, step
            if aq > qmax[k]:
                qmax[k] = aq
        if stride > 0 and (step + 1) % stride == 0 and rec < series_out.shape[0]:
            for k in range(nc):
                series_out[rec, k] = q[k]
            rec += 1

    stored = 0.0
    ponded = 0.0
    for i in range(nn):
        stored += vol[i]
        ponded += pond[i]
    stored += pump_in.sum()  # pumped in the last step, not yet delivered
    totals = np.array([v_in, v_out, stored, ponded, v_over, v_deficit])
    return qmax, q, y_mid, y, totals, courant, _OK, n_steps


def route_dynamic(network, inflows: Mapping[str, float | Hydrograph] | None = None,
                  config: SolverConfig | None = None) -> RoutingResult:
    """Dynamic-wave routing over the connected part of a (damaged) network.

    Arguments as for `route_kinematic`; adverse and flat conduits are allowed.
    Raises SolverInstabilityError when a head turns NaN or rises more than
    ten times the network relief above its lowest invert.
    """
    config = config or SolverConfig()
    damaged = as_damaged(network)
    arr = NetworkArrays.of(damaged.network)
    connected, cf, pump_active, base, series_of, tables = scenario_arrays(arr, damaged, inflows)
    routed = cf > 0
    n_eff = effective_n(arr, cf)
    stride, nrec = series_stride(config)
    series = np.zeros((nrec, len(arr.conduit_ids)))
    qmax, qfin, ymid, ynode, totals, courant, status, step = _dynamic_kernel(
        arr.topo, arr.kind, arr.out_kind, arr.out_idx, connected, arr.invert, arr.max_depth,
        arr.tank_area, arr.out_stage, arr.adj_ptr, arr.adj_c, arr.adj_up,
        arr.c_up, arr.c_dn, arr.c_len, arr.c_diam, n_eff, arr.c_slope, arr.c_offup,
        arr.c_offdn, routed,
        arr.p_to, arr.p_rated, arr.p_start, arr.p_stop, pump_active,
        base, series_of, *tables,
        float(config.dt), config.n_steps, float(config.gravity),
        float(config.slot_width_fraction), float(config.min_node_surface_area),
        INERTIA_MODES[config.inertial_terms], 10.0 * arr.relief, stride, series,
    )
    if status != _OK:
        what = "non-finite head or flow" if status == _NAN else "head above 10x network relief"
        raise SolverInstabilityError(
            f"dynamic routing unstable: {what} at step {step} (t={step * config.dt:g} s)",
            step=int(step), time=step * config.dt)
    v_in, v_out, stored, ponded, over, deficit = totals
    return RoutingResult(
        conduit_ids=arr.conduit_ids,
        max_abs_flow=qmax,
        final_flow=qfin,
        final_depth=ymid,
        node_ids=arr.node_ids,
        final_node_depth=ynode,
        inflow_volume=float(v_in),
        outflow_volume=float(v_out),
        stored_volume=float(stored - deficit),
        ponded_volume=float(ponded),
        overflow_volume=float(over),
        max_courant=float(courant),
        series_times=(np.arange(1, nrec + 1) * stride * config.dt) if stride else None,
        series_flows=series if stride else None,
    )
