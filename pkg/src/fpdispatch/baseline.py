"""Independent dispatch oracles for validating the FP engine.

:func:`brute_force_dispatch` certifies tiny cases by exhaustive grid
search: every free generator output (all units but one, per timestep) and
every free storage flow (all steps but the last, which the net-zero cycle
constraint determines) is enumerated on an MW grid, the remaining unit
covers the balance exactly, and the cheapest feasible combination wins.
Real losses are handled only on topologies with at most two lines, by
solving the exact nonlinear flow with voltages pinned flat at 1.0 per
unit; any larger tiny case must be lossless (every line g = 0), and is
then treated as a copper plate. Reactive dispatch is outside the oracle's
scope. Evaluation order never affects the result: candidates are scanned
in odometer order and ties keep the earlier (lexicographically smaller)
schedule.

:func:`equal_sharing_dispatch` is the analytic equal power-sharing
baseline: one common per-unit loading across all units meets the total
load each timestep, storage idle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .netmodel import NetworkCase, efficiency, fuel_rate

__all__ = [
    "OracleResult",
    "TinyCaseError",
    "InfeasibleDispatchError",
    "check_tiny",
    "brute_force_dispatch",
    "equal_sharing_dispatch",
]

_MAX_GRID_POINTS = 10**8


class TinyCaseError(ValueError):
    """Case too large (or otherwise unsuitable) for the brute-force oracle."""


class InfeasibleDispatchError(ValueError):
    """No feasible schedule exists for the requested dispatch rule."""


@dataclass
class OracleResult:
    """A certified schedule: (T, unit) MW arrays plus total fuel."""

    p_mw: np.ndarray
    p_ess_mw: np.ndarray
    fuel_liters: float


def check_tiny(case: NetworkCase):
    """Enforce the oracle's size limits; raises :class:`TinyCaseError`."""
    if len(case.buses) > 3:
        raise TinyCaseError("oracle handles at most 3 buses")
    if len(case.generators) > 3:
        raise TinyCaseError("oracle handles at most 3 generators")
    if case.horizon > 2:
        raise TinyCaseError("oracle handles at most 2 timesteps")
    if len(case.storage) > 1:
        raise TinyCaseError("oracle handles at most 1 storage unit")
    lossy = any(ln.g != 0.0 for ln in case.lines)
    if lossy and len(case.lines) > 2:
        raise TinyCaseError("lossy cases limited to 2 lines")


def brute_force_dispatch(case: NetworkCase, step: float) -> OracleResult:
    """Certified global grid optimum of the fuel objective.

    `step` is the MW grid resolution for every free dimension. Raises
    :class:`InfeasibleDispatchError` when no grid point satisfies all the
    limits, :class:`TinyCaseError` when the case exceeds the oracle's
    scope or the grid would top 10^8 points.
    """
    check_tiny(case)
    if step <= 0.0:
        raise ValueError("step must be positive")
    lossy = any(ln.g != 0.0 for ln in case.lines)
    if lossy:
        return _lossy_scan(case, step)
    return _lossless_scan(case, step)


def _elim_unit(case: NetworkCase) -> int:
    caps = [g.p_max for g in case.generators]
    return int(np.argmax(caps))


def _grid_dims(case: NetworkCase, step: float, elim: int):
    counts, offs, kinds, ts, units = [], [], [], [], []
    for t in range(case.horizon):
        for i, g in enumerate(case.generators):
            if i == elim:
                continue
            n = int(math.floor((g.p_max - g.p_min) / step + 1e-9)) + 1
            counts.append(n)
            offs.append(g.p_min)
            kinds.append(0)
            ts.append(t)
            units.append(i)
    for t in range(case.horizon - 1):
        for j, st in enumerate(case.storage):
            span = st.max_charge_mw + st.max_discharge_mw
            n = int(math.floor(span / step + 1e-9)) + 1
            counts.append(n)
            offs.append(-st.max_charge_mw)
            kinds.append(1)
            ts.append(t)
            units.append(j)
    total = 1
    for n in counts:
        total *= n
        if total > _MAX_GRID_POINTS:
            raise TinyCaseError(
                f"grid would exceed {_MAX_GRID_POINTS} points; increase step"
            )
    return (
        np.asarray(counts, dtype=np.int64),
        np.asarray(offs, dtype=float),
        np.full(len(counts), step, dtype=float),
        np.asarray(kinds, dtype=np.int64),
        np.asarray(ts, dtype=np.int64),
        np.asarray(units, dtype=np.int64),
    )


def _storage_arrays(case: NetworkCase):
    ns = len(case.storage)
    get = lambda f: np.asarray([f(s) for s in case.storage], dtype=float)
    return dict(
        st_cap=get(lambda s: s.capacity_mwh),
        st_eta=get(lambda s: s.eta),
        st_emin=get(lambda s: s.soc_min * s.capacity_mwh),
        st_emax=get(lambda s: s.soc_max * s.capacity_mwh),
        st_e0=get(lambda s: s.e0_mwh),
        st_cmax=get(lambda s: s.max_charge_mw),
        st_dmax=get(lambda s: s.max_discharge_mw),
    ) if ns else dict(
        st_cap=np.zeros(0), st_eta=np.zeros(0), st_emin=np.zeros(0),
        st_emax=np.zeros(0), st_e0=np.zeros(0), st_cmax=np.zeros(0),
        st_dmax=np.zeros(0),
    )


def _gen_arrays(case: NetworkCase):
    get = lambda f: np.asarray([f(g) for g in case.generators], dtype=float)
    return dict(
        g_pmin=get(lambda g: g.p_min), g_pmax=get(lambda g: g.p_max),
        g_dr=get(lambda g: g.ramp_down), g_ur=get(lambda g: g.ramp_up),
        g_a=get(lambda g: g.a), g_b=get(lambda g: g.b), g_c=get(lambda g: g.c),
        g_pbase=get(lambda g: g.p_base),
    )


def _lossless_scan(case: NetworkCase, step: float) -> OracleResult:
    T, ng, ns = case.horizon, len(case.generators), len(case.storage)
    elim = _elim_unit(case)
    counts, offs, steps, kinds, ts, units = _grid_dims(case, step, elim)
    net_load = case.p_load.sum(axis=1)
    fuel, flat = _kernels.grid_scan(
        counts, offs, steps, kinds, ts, units,
        T, ng, ns, elim, net_load,
        **_gen_arrays(case), **_storage_arrays(case),
        dt=case.dt_hours, alpha=case.alpha_mwh_per_liter,
    )
    if not np.isfinite(fuel):
        raise InfeasibleDispatchError("no feasible point on the dispatch grid")
    p = flat[: ng * T].reshape(T, ng)
    pb = flat[ng * T:].reshape(T, ns) if ns else np.zeros((T, 0))
    return OracleResult(p_mw=p, p_ess_mw=pb, fuel_liters=float(fuel))


# ---------------------------------------------------------------------------
# lossy evaluation: exact flow on a flat-voltage radial chain


def _line_send(g, b, theta):
    """From-end real power of a flat-voltage line at angle difference theta.

    Series y = g - j*b; sending power g*(1 - cos t) + b*sin t, receiving
    end delivers b*sin t - g*(1 - cos t) into the far bus.
    """
    return g * (1.0 - math.cos(theta)) + b * math.sin(theta)


def _solve_line_angle(g, b, target):
    """Angle with sending power equal to target; None when unreachable."""
    theta = 0.0
    for _ in range(60):
        f = _line_send(g, b, theta) - target
        if abs(f) < 1e-13:
            return theta
        d = g * math.sin(theta) + b * math.cos(theta)
        if abs(d) < 1e-12:
            return None
        theta -= f / d
        if abs(theta) > 0.5 * math.pi:
            return None
    return None


def _lossy_scan(case: NetworkCase, step: float) -> OracleResult:
    """Odometer scan with per-point exact flow on a <= 2-line chain.

    The eliminated unit's bus is the slack; every other bus's net
    injection is pushed through the chain toward it with voltages flat at
    1.0 pu, so losses are exact for the fixed-voltage operating rule.
    """
    T, ng, ns = case.horizon, len(case.generators), len(case.storage)
    elim = _elim_unit(case)
    slack_bus = case.bus_pos[case.generators[elim].bus]
    order = _chain_order(case, slack_bus)
    counts, offs, steps, kinds, ts, units = _grid_dims(case, step, elim)
    ga = _gen_arrays(case)
    sa = _storage_arrays(case)
    sb = case.mva_base

    nd = len(counts)
    total = int(np.prod(counts)) if nd else 1
    best_fuel = math.inf
    best_p = None
    best_pb = None
    pg = np.zeros((T, ng))
    pb = np.zeros((T, max(ns, 1)))
    for idx in range(total):
        rem = idx
        for k in range(nd - 1, -1, -1):
            rem, r = divmod(rem, counts[k])
            val = offs[k] + steps[k] * r
            if kinds[k] == 0:
                pg[ts[k], units[k]] = val
            else:
                pb[ts[k], units[k]] = val
        if ns and not _storage_ok(case, pb, sa):
            continue
        ok = True
        for t in range(T):
            slack_p = _chain_slack_mw(case, order, slack_bus, pg, pb, t, elim, sb)
            if slack_p is None:
                ok = False
                break
            if not (ga["g_pmin"][elim] - 1e-9 <= slack_p <= ga["g_pmax"][elim] + 1e-9):
                ok = False
                break
            pg[t, elim] = slack_p
        if not ok:
            continue
        if not _ramps_ok(case, pg):
            continue
        fuel = 0.0
        for t in range(T):
            for i, g in enumerate(case.generators):
                eta = efficiency(g, pg[t, i] / g.p_base)
                if eta <= 0.0:
                    ok = False
                    break
                fuel += pg[t, i] / eta
            if not ok:
                break
        if not ok:
            continue
        fuel = fuel * case.dt_hours / case.alpha_mwh_per_liter
        if fuel < best_fuel:
            best_fuel = fuel
            best_p = pg.copy()
            best_pb = pb[:, :ns].copy()
    if best_p is None:
        raise InfeasibleDispatchError("no feasible point on the dispatch grid")
    return OracleResult(p_mw=best_p, p_ess_mw=best_pb, fuel_liters=best_fuel)


def _chain_order(case: NetworkCase, slack_pos: int):
    """Leaf-to-root processing order of (bus, line, sign toward parent)."""
    nb = len(case.buses)
    adj = [[] for _ in range(nb)]
    for li, ln in enumerate(case.lines):
        i, k = case.bus_pos[ln.from_bus], case.bus_pos[ln.to_bus]
        adj[i].append((k, li))
        adj[k].append((i, li))
    parent = {slack_pos: (None, None)}
    orderbfs = [slack_pos]
    seen = {slack_pos}
    qi = 0
    while qi < len(orderbfs):
        cur = orderbfs[qi]
        qi += 1
        for nxt, li in adj[cur]:
            if nxt not in seen:
                seen.add(nxt)
                parent[nxt] = (cur, li)
                orderbfs.append(nxt)
    if len(seen) != nb:
        raise TinyCaseError("lossy oracle requires a connected network")
    return [(bus, parent[bus][0], parent[bus][1]) for bus in reversed(orderbfs)
            if parent[bus][0] is not None]


def _chain_slack_mw(case, order, slack_pos, pg, pb, t, elim, sb):
    """Slack-unit MW after pushing all net injections through the chain."""
    inj = -case.p_load[t].astype(float).copy()
    for i, g in enumerate(case.generators):
        if i != elim:
            inj[case.bus_pos[g.bus]] += pg[t, i]
    for j, st in enumerate(case.storage):
        inj[case.bus_pos[st.bus]] += pb[t, j]
    inj = inj / sb
    for bus, par, li in order:
        ln = case.lines[li]
        theta = _solve_line_angle(ln.g, ln.b, inj[bus])
        if theta is None:
            return None
        if abs(_line_send(ln.g, ln.b, theta)) * sb > ln.rating_mw + 1e-6:
            return None
        delivered = ln.b * math.sin(theta) - ln.g * (1.0 - math.cos(theta))
        inj[par] += delivered
    return -inj[slack_pos] * sb


def _storage_ok(case, pb, sa) -> bool:
    T = case.horizon
    for j in range(len(case.storage)):
        pb[T - 1, j] = -pb[: T - 1, j].sum()
        if not (-sa["st_cmax"][j] - 1e-12 <= pb[T - 1, j] <= sa["st_dmax"][j] + 1e-12):
            return False
        e = sa["st_e0"][j]
        for t in range(T):
            e -= sa["st_eta"][j] * pb[t, j] * case.dt_hours
            if not (sa["st_emin"][j] - 1e-9 <= e <= sa["st_emax"][j] + 1e-9):
                return False
    return True


def _ramps_ok(case, pg) -> bool:
    for i, g in enumerate(case.generators):
        for t in range(case.horizon - 1):
            d = pg[t + 1, i] - pg[t, i]
            if d < -g.ramp_down - 1e-9 or d > g.ramp_up + 1e-9:
                return False
    return True


def equal_sharing_dispatch(case: NetworkCase) -> OracleResult:
    """Equal per-unit loading meeting total load each timestep, lossless.

    All units run at the common fraction p_t = total load / total rated
    capacity; storage stays idle. Raises
    :class:`InfeasibleDispatchError` naming the first violating timestep
    when the common loading leaves any unit's operating box or breaks a
    ramp limit.
    """
    T, ng = case.horizon, len(case.generators)
    cap_total = sum(g.p_base for g in case.generators)
    p_mw = np.zeros((T, ng))
    prev = None
    for t in range(T):
        share = case.p_load[t].sum() / cap_total
        for i, g in enumerate(case.generators):
            out = share * g.p_base
            if out < g.p_min - 1e-9 or out > g.p_max + 1e-9:
                raise InfeasibleDispatchError(
                    f"timestep {t}: equal loading {share:.6g} pushes {g.id} "
                    f"outside [{g.p_min}, {g.p_max}] MW"
                )
            if prev is not None:
                d = out - prev[i]
                if d < -g.ramp_down - 1e-9 or d > g.ramp_up + 1e-9:
                    raise InfeasibleDispatchError(
                        f"timestep {t}: equal loading violates ramp of {g.id}"
                    )
            p_mw[t, i] = out
        prev = p_mw[t]
    fuel = sum(
        fuel_rate(g, float(p_mw[t, i]), case.alpha_mwh_per_liter) * case.dt_hours
        for t in range(T)
        for i, g in enumerate(case.generators)
    )
    return OracleResult(
        p_mw=p_mw, p_ess_mw=np.zeros((T, len(case.storage))), fuel_liters=fuel
    )
