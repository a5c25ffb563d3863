"""Convex relaxation of the multi-period dispatch problem.

Voltage products are lifted into per-timestep variables

    u_i = V_i^2 / sqrt(2),
    W_R_ik = V_i V_k cos(theta_ik),    W_I_ik = V_i V_k sin(theta_ik),

which make the bus injections and line flows linear, couple through the
rotated-cone inequality W_R^2 + W_I^2 <= 2 u_i u_k (tight exactly when the
lift is realizable), and leave only the angle relation
theta_ik = arctan(W_I/W_R) nonlinear; that one is Taylor-linearized around
the current expansion point and refreshed between outer iterations.

One W_R/W_I pair is stored per undirected line; the reverse direction
reuses it with W_R_ki = W_R_ik and W_I_ki = -W_I_ik, so the realizability
symmetry holds structurally. Line admittances follow the convention of
:class:`fpdispatch.netmodel.LineSpec` (series y = g - j*b): bus-matrix
diagonals accumulate +g / -b and off-diagonals are -g / +b.

The fuel surrogate enters through per-generator epigraphs: w >= p^2 for
the squared-output term, and the chain {t*s >= 1, s <= eta(p), v >= t^2}
for the squared reciprocal efficiency; eta's concavity (a <= 0) makes the
cap s <= a*w + b*p + c exact at the optimum where w = p^2.

All dispatch power variables are per-unit of each generator's own rating
(p = P / p_base); storage power is in MW and energy in MWh; network
quantities are per-unit on the system MVA base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fractional import AuxiliaryState
from .netmodel import NetworkCase

__all__ = [
    "RelaxedOPFModel",
    "FlowVariables",
    "DispatchVariables",
    "LinearizationPoint",
    "DegeneratePointError",
    "UnsupportedCurvatureError",
    "SQRT2",
    "lift_voltage",
    "angle_linearization",
    "injection_expressions",
    "line_flow_expressions",
    "cone_constraints",
    "storage_constraints",
    "operational_bounds",
    "epigraph_objective",
    "build_model",
]

SQRT2 = math.sqrt(2.0)

#: Expansion points closer to the origin than this (squared norm) are refused.
_POINT_FLOOR = 1e-8


class DegeneratePointError(ValueError):
    """Angle linearization requested at (or too near) the W-plane origin."""


class UnsupportedCurvatureError(ValueError):
    """A convex efficiency curve (a > 0) cannot be capped conically."""


class RelaxedOPFModel:
    """Variable registry plus linear rows, cone memberships, and objective.

    Constraints reference variables by index; `eq_rows`/`ineq_rows` hold
    (columns, coefficients, rhs) triples with inequalities read as
    `coeffs . x <= rhs`. Cones are tagged tuples consumed by
    :func:`fpdispatch.socp.assemble`. Models are built once per outer
    iteration and never mutated afterwards.
    """

    def __init__(self):
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.eq_rows: list[tuple[list[int], list[float], float]] = []
        self.ineq_rows: list[tuple[list[int], list[float], float]] = []
        self.cones: list[tuple] = []
        self._obj: dict[int, float] = {}
        self.index: dict[str, int] = {}

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def objective(self) -> np.ndarray:
        out = np.zeros(self.n_vars)
        for i, v in self._obj.items():
            out[i] = v
        return out

    def add_var(self, name: str, lb: float = -np.inf, ub: float = np.inf) -> int:
        idx = len(self.names)
        self.names.append(name)
        self.index[name] = idx
        self.lb.append(lb)
        self.ub.append(ub)
        return idx

    def set_bounds(self, idx: int, lb: float, ub: float):
        self.lb[idx] = lb
        self.ub[idx] = ub

    def add_eq(self, cols, vals, rhs: float):
        self.eq_rows.append((list(cols), list(vals), float(rhs)))

    def add_ineq(self, cols, vals, rhs: float):
        self.ineq_rows.append((list(cols), list(vals), float(rhs)))

    def add_square(self, w: int, x: int):
        """Record w >= x^2."""
        self.cones.append(("square", w, x))

    def add_hyper(self, a: int, b: int):
        """Record a*b >= 1 (a, b >= 0)."""
        self.cones.append(("hyper", a, b))

    def add_rcone(self, indices):
        """Record 2*x0*x1 >= sum of squared tail entries."""
        self.cones.append(("rcone", tuple(indices)))

    def add_obj(self, idx: int, coef: float):
        self._obj[idx] = self._obj.get(idx, 0.0) + coef


@dataclass
class FlowVariables:
    """Model indices of the lifted flow variables, all shaped (count, T)."""

    u: np.ndarray
    wr: np.ndarray
    wi: np.ndarray
    theta: np.ndarray


@dataclass
class DispatchVariables:
    """Model indices of dispatch, storage, and epigraph variables."""

    p: np.ndarray
    q: np.ndarray
    pb: np.ndarray
    e: np.ndarray
    w: np.ndarray
    s: np.ndarray
    t: np.ndarray
    v: np.ndarray


class LinearizationPoint:
    """Per-line, per-timestep Taylor expansion points (W_R^q, W_I^q)."""

    def __init__(self, wr: np.ndarray, wi: np.ndarray):
        wr = np.asarray(wr, dtype=float)
        wi = np.asarray(wi, dtype=float)
        if wr.shape != wi.shape:
            raise ValueError("wr and wi shapes differ")
        if np.any(wr * wr + wi * wi < _POINT_FLOOR):
            raise DegeneratePointError("expansion point too close to the origin")
        self.wr = wr
        self.wi = wi

    @classmethod
    def flat(cls, n_lines: int, horizon: int) -> "LinearizationPoint":
        """Flat-voltage start: every point at (1, 0)."""
        return cls(np.ones((n_lines, horizon)), np.zeros((n_lines, horizon)))

    def refreshed(self, wr, wi, floor: float = 1e-4) -> "LinearizationPoint":
        """Move the points to solved values, floored away from the origin.

        Points with norm below `floor` are pulled back toward (1, 0), which
        keeps the next linearization well conditioned.
        """
        wr = np.asarray(wr, dtype=float).copy()
        wi = np.asarray(wi, dtype=float).copy()
        nrm = np.sqrt(wr * wr + wi * wi)
        bad = nrm < floor
        wr[bad] = 1.0
        wi[bad] = 0.0
        return LinearizationPoint(wr, wi)


def lift_voltage(v_from: float, v_to: float, theta: float) -> tuple[float, float, float]:
    """Map a voltage pair and angle difference to (u_from, W_R, W_I).

    Satisfies W_R^2 + W_I^2 = 2 * u_from * u_to exactly, with u_to obtained
    by lifting the swapped pair.
    """
    if v_from <= 0.0 or v_to <= 0.0:
        raise ValueError("voltages must be positive")
    u = v_from * v_from / SQRT2
    prod = v_from * v_to
    return u, prod * math.cos(theta), prod * math.sin(theta)


def angle_linearization(wr_q: float, wi_q: float) -> tuple[float, float, float]:
    """Coefficients (c_wr, c_wi, rhs) of the linearized angle equality

        theta + c_wr * W_R + c_wi * W_I = rhs,

    the first-order expansion of theta = arctan(W_I / W_R) around
    (wr_q, wi_q). Exact at the expansion point; the constant terms of the
    expansion cancel, leaving rhs = atan2(wi_q, wr_q).
    """
    den = wr_q * wr_q + wi_q * wi_q
    if den < _POINT_FLOOR:
        raise DegeneratePointError(
            f"expansion point ({wr_q}, {wi_q}) too close to the origin"
        )
    return wi_q / den, -wr_q / den, math.atan2(wi_q, wr_q)


# ---------------------------------------------------------------------------
# case topology helpers


def _bus_admittance(case: NetworkCase):
    """Diagonal (G_ii, B_ii) per bus position, from series y = g - j*b."""
    nb = len(case.buses)
    gd = np.zeros(nb)
    bd = np.zeros(nb)
    for ln in case.lines:
        i, k = case.bus_pos[ln.from_bus], case.bus_pos[ln.to_bus]
        gd[i] += ln.g
        gd[k] += ln.g
        bd[i] -= ln.b
        bd[k] -= ln.b
    return gd, bd


def _incidence(case: NetworkCase):
    """Per bus position: list of (line index, +1 if the bus is the from end)."""
    inc = [[] for _ in case.buses]
    for li, ln in enumerate(case.lines):
        inc[case.bus_pos[ln.from_bus]].append((li, 1.0))
        inc[case.bus_pos[ln.to_bus]].append((li, -1.0))
    return inc


def injection_expressions(case: NetworkCase, flow: FlowVariables, t: int):
    """Linear expressions of the per-unit bus injections at timestep t.

    Returns (p_exprs, q_exprs), one (cols, vals) pair per bus position:

        P_inj = sqrt(2) u_i G_ii + sum_k (G_ik W_R_ik + B_ik W_I_ik)
        Q_inj = -sqrt(2) u_i B_ii + sum_k (G_ik W_I_ik - B_ik W_R_ik)

    with Y-bus off-diagonals G_ik = -g, B_ik = +b and the W symmetry
    W_R_ki = W_R_ik, W_I_ki = -W_I_ik folded into the coefficients.
    """
    gd, bd = _bus_admittance(case)
    inc = _incidence(case)
    p_exprs, q_exprs = [], []
    for pos in range(len(case.buses)):
        pc = [flow.u[pos, t]]
        pv = [SQRT2 * gd[pos]]
        qc = [flow.u[pos, t]]
        qv = [-SQRT2 * bd[pos]]
        for li, sgn in inc[pos]:
            ln = case.lines[li]
            g_ik, b_ik = -ln.g, ln.b
            pc.extend([flow.wr[li, t], flow.wi[li, t]])
            pv.extend([g_ik, b_ik * sgn])
            qc.extend([flow.wi[li, t], flow.wr[li, t]])
            qv.extend([g_ik * sgn, -b_ik])
        p_exprs.append((pc, pv))
        q_exprs.append((qc, qv))
    return p_exprs, q_exprs


def line_flow_expressions(case: NetworkCase, flow: FlowVariables, t: int):
    """Per-line from-end flow expressions at timestep t, per-unit:

        P_ik = sqrt(2) u_i G_ik - (G_ik W_R_ik + B_ik W_I_ik)
        Q_ik = -sqrt(2) u_i B_ik + (B_ik W_R_ik - G_ik W_I_ik)

    with the same Y-bus off-diagonal coefficients as the injections.
    """
    p_exprs, q_exprs = [], []
    for li, ln in enumerate(case.lines):
        pos = case.bus_pos[ln.from_bus]
        g_ik, b_ik = -ln.g, ln.b
        pc = [flow.u[pos, t], flow.wr[li, t], flow.wi[li, t]]
        pv = [SQRT2 * g_ik, -g_ik, -b_ik]
        qc = [flow.u[pos, t], flow.wr[li, t], flow.wi[li, t]]
        qv = [-SQRT2 * b_ik, b_ik, -g_ik]
        p_exprs.append((pc, pv))
        q_exprs.append((qc, qv))
    return p_exprs, q_exprs


def cone_constraints(case: NetworkCase, flow: FlowVariables, t: int):
    """Rotated-cone tuples (u_i, u_k, W_R, W_I) for every line at timestep t."""
    out = []
    for li, ln in enumerate(case.lines):
        i = case.bus_pos[ln.from_bus]
        k = case.bus_pos[ln.to_bus]
        out.append((flow.u[i, t], flow.u[k, t], flow.wr[li, t], flow.wi[li, t]))
    return out


def storage_constraints(model: RelaxedOPFModel, case: NetworkCase, dv: DispatchVariables):
    """Energy recursion, net-zero cycling, and SOC/rate limits per unit.

    E_t = E_{t-1} - eta_b * P^r_t * dt with E_{-1} = E0; the rate box and
    the SOC window become variable bounds, and sum_t P^r_t = 0 closes the
    cycle so E_T returns to E0 when eta_b = 1.
    """
    T = case.horizon
    dt = case.dt_hours
    for j, st in enumerate(case.storage):
        model.set_bounds(dv.pb[j, 0], -st.max_charge_mw, st.max_discharge_mw)
        coef = st.eta * dt
        model.add_eq([dv.e[j, 0], dv.pb[j, 0]], [1.0, coef], st.e0_mwh)
        for t in range(1, T):
            model.set_bounds(dv.pb[j, t], -st.max_charge_mw, st.max_discharge_mw)
            model.add_eq(
                [dv.e[j, t], dv.e[j, t - 1], dv.pb[j, t]], [1.0, -1.0, coef], 0.0
            )
        for t in range(T):
            model.set_bounds(
                dv.e[j, t], st.soc_min * st.capacity_mwh, st.soc_max * st.capacity_mwh
            )
        model.add_eq([dv.pb[j, t] for t in range(T)], [1.0] * T, 0.0)


def operational_bounds(model: RelaxedOPFModel, case: NetworkCase, flow: FlowVariables,
                       dv: DispatchVariables):
    """Generator boxes, lifted-voltage and angle windows, and ramp rows.

    Ramps constrain the MW change p_base * (p_{t+1} - p_t) within
    [-ramp_down, +ramp_up] for consecutive timesteps.
    """
    T = case.horizon
    for i, g in enumerate(case.generators):
        plo, phi = g.p_min / g.p_base, g.p_max / g.p_base
        for t in range(T):
            model.set_bounds(dv.p[i, t], plo, phi)
            model.set_bounds(dv.q[i, t], g.q_min, g.q_max)
        for t in range(T - 1):
            cols = [dv.p[i, t + 1], dv.p[i, t]]
            model.add_ineq(cols, [g.p_base, -g.p_base], g.ramp_up)
            model.add_ineq(cols, [-g.p_base, g.p_base], g.ramp_down)
    for pos, bus in enumerate(case.buses):
        ulo = bus.v_min * bus.v_min / SQRT2
        uhi = bus.v_max * bus.v_max / SQRT2
        for t in range(T):
            model.set_bounds(flow.u[pos, t], ulo, uhi)
    for li, ln in enumerate(case.lines):
        bi = case.buses[case.bus_pos[ln.from_bus]]
        bk = case.buses[case.bus_pos[ln.to_bus]]
        tlo = bi.theta_min - bk.theta_max
        thi = bi.theta_max - bk.theta_min
        for t in range(T):
            model.set_bounds(flow.theta[li, t], tlo, thi)


def epigraph_objective(model: RelaxedOPFModel, case: NetworkCase,
                       aux: AuxiliaryState, dv: DispatchVariables):
    """Per-(generator, timestep) fuel-surrogate epigraphs and objective.

    Emits w >= p^2, t*s >= 1, v >= t^2 and the concave cap
    s - a*w - b*p <= c; the objective collects
    (1/2) * (zeta * p_base^2 * w + beta * v) * dt per term, matching the
    weighted surrogate in MW units. Auxiliary pairs are indexed
    t * n_gen + i.
    """
    T = case.horizon
    ng = len(case.generators)
    if len(aux) != ng * T:
        raise ValueError(f"need {ng * T} auxiliary pairs, got {len(aux)}")
    dt = case.dt_hours
    for i, g in enumerate(case.generators):
        if g.a > 0.0:
            raise UnsupportedCurvatureError(
                f"generator {g.id}: efficiency curve opens upward (a = {g.a})"
            )
        for t in range(T):
            zeta = aux.zeta[t * ng + i]
            beta = aux.beta[t * ng + i]
            model.add_square(dv.w[i, t], dv.p[i, t])
            model.add_hyper(dv.t[i, t], dv.s[i, t])
            model.add_square(dv.v[i, t], dv.t[i, t])
            if g.a < 0.0:
                model.add_ineq(
                    [dv.s[i, t], dv.w[i, t], dv.p[i, t]], [1.0, -g.a, -g.b], g.c
                )
            else:
                model.add_ineq([dv.s[i, t], dv.p[i, t]], [1.0, -g.b], g.c)
            model.add_obj(dv.w[i, t], 0.5 * zeta * g.p_base * g.p_base * dt)
            model.add_obj(dv.v[i, t], 0.5 * beta * dt)


def build_model(case: NetworkCase, aux: AuxiliaryState, points: LinearizationPoint,
                off_units: tuple[int, ...] = (), equal_loading: bool = False):
    """Assemble the full relaxed dispatch model for one outer iteration.

    `off_units` pins the listed generator positions at zero output (both
    real and reactive); `equal_loading` ties the per-unit outputs of all
    remaining units together each timestep. Returns
    (model, flow_vars, dispatch_vars).
    """
    T = case.horizon
    nb, nl = len(case.buses), len(case.lines)
    ng, ns = len(case.generators), len(case.storage)
    if points.wr.shape != (nl, T):
        raise ValueError(f"need expansion points shaped {(nl, T)}, got {points.wr.shape}")
    model = RelaxedOPFModel()

    def grid(prefix, count, ids):
        arr = np.empty((count, T), dtype=np.int64)
        for j in range(count):
            for t in range(T):
                arr[j, t] = model.add_var(f"{prefix}[{ids[j]},{t}]")
        return arr

    bus_ids = [b.id for b in case.buses]
    line_ids = [f"{ln.from_bus}-{ln.to_bus}" for ln in case.lines]
    gen_ids = [g.id for g in case.generators]
    st_ids = [s.id for s in case.storage]

    flow = FlowVariables(
        u=grid("u", nb, bus_ids),
        wr=grid("WR", nl, line_ids),
        wi=grid("WI", nl, line_ids),
        theta=grid("th", nl, line_ids),
    )
    dv = DispatchVariables(
        p=grid("p", ng, gen_ids),
        q=grid("q", ng, gen_ids),
        pb=grid("pb", ns, st_ids),
        e=grid("E", ns, st_ids),
        w=grid("w", ng, gen_ids),
        s=grid("s", ng, gen_ids),
        t=grid("that", ng, gen_ids),
        v=grid("v", ng, gen_ids),
    )
    for i in range(ng):
        for t in range(T):
            model.set_bounds(dv.w[i, t], 0.0, np.inf)
            model.set_bounds(dv.s[i, t], 0.0, np.inf)
            model.set_bounds(dv.t[i, t], 0.0, np.inf)
            model.set_bounds(dv.v[i, t], 0.0, np.inf)

    operational_bounds(model, case, flow, dv)
    storage_constraints(model, case, dv)
    epigraph_objective(model, case, aux, dv)

    gens_at = [[] for _ in range(nb)]
    for i, g in enumerate(case.generators):
        gens_at[case.bus_pos[g.bus]].append(i)
    st_at = [[] for _ in range(nb)]
    for j, s in enumerate(case.storage):
        st_at[case.bus_pos[s.bus]].append(j)

    sb = case.mva_base
    for t in range(T):
        p_exprs, q_exprs = injection_expressions(case, flow, t)
        for pos in range(nb):
            cols, vals = list(p_exprs[pos][0]), list(p_exprs[pos][1])
            for i in gens_at[pos]:
                cols.append(dv.p[i, t])
                vals.append(-case.generators[i].p_base / sb)
            for j in st_at[pos]:
                cols.append(dv.pb[j, t])
                vals.append(-1.0 / sb)
            model.add_eq(cols, vals, -case.p_load[t, pos] / sb)
            cols, vals = list(q_exprs[pos][0]), list(q_exprs[pos][1])
            for i in gens_at[pos]:
                cols.append(dv.q[i, t])
                vals.append(-1.0 / sb)
            model.add_eq(cols, vals, -case.q_load[t, pos] / sb)

        pf, qf = line_flow_expressions(case, flow, t)
        for li, ln in enumerate(case.lines):
            lim_p = ln.rating_mw / sb
            lim_q = ln.rating_mvar / sb
            model.add_ineq(pf[li][0], pf[li][1], lim_p)
            model.add_ineq(pf[li][0], [-v for v in pf[li][1]], lim_p)
            model.add_ineq(qf[li][0], qf[li][1], lim_q)
            model.add_ineq(qf[li][0], [-v for v in qf[li][1]], lim_q)

        for tup in cone_constraints(case, flow, t):
            model.add_rcone(tup)

        for li in range(nl):
            c_wr, c_wi, rhs = angle_linearization(points.wr[li, t], points.wi[li, t])
            model.add_eq(
                [flow.theta[li, t], flow.wr[li, t], flow.wi[li, t]],
                [1.0, c_wr, c_wi],
                rhs,
            )

    for i in off_units:
        for t in range(T):
            model.set_bounds(dv.p[i, t], 0.0, 0.0)
            model.set_bounds(dv.q[i, t], 0.0, 0.0)
    if equal_loading:
        active = [i for i in range(ng) if i not in set(off_units)]
        for t in range(T):
            ref = active[0]
            for i in active[1:]:
                model.add_eq([dv.p[i, t], dv.p[ref, t]], [1.0, -1.0], 0.0)

    return model, flow, dv
