"""Outer fractional-programming loop and dispatch solution assembly.

One engine iteration solves the conic dispatch subproblem for the current
auxiliary pairs, recovers each generator's (output, 1/efficiency) ratio
term, refreshes the pairs by their closed-form update, evaluates the
cutting-function diagnostic, and re-linearizes the angle equality around
the solved lifted variables. The loop stops when the true ratio objective
settles (two consecutive relative changes at or below the outer
tolerance), keeping the best iterate seen; the surrogate is guaranteed
nonincreasing only across the solve/update pair inside one linearization
point, so the best-so-far guard covers re-linearization wobble.

Fuel accounting is always recomputed from the reported schedule through
the exact ratio (never from the surrogate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import fractional, relaxation, socp
from .fractional import AuxiliaryState, RatioTerm
from .netmodel import NetworkCase, efficiency, fuel_rate, validate_case

__all__ = [
    "SolverConfig",
    "DispatchSolution",
    "VariantResult",
    "solve_dispatch",
    "compute_fuel",
    "recover_state",
    "compare_models",
    "variant_units",
    "EXIT_CODES",
]

EXIT_CODES = {
    "optimal": 0,
    "infeasible": 1,
    "iteration-limit": 3,
    "numerical-failure": 3,
}

_VARIANTS = ("full", "A", "B", "C")


@dataclass(frozen=True)
class SolverConfig:
    """Engine settings; all tolerances strictly positive."""

    outer_tol: float = 1e-6
    max_outer: int = 500
    inner_tol: float = 1e-8
    inner_max_iter: int = 200
    clamp: float = fractional.DEFAULT_CLAMP
    origin_floor: float = 1e-4
    variant: str = "full"

    def __post_init__(self):
        if min(self.outer_tol, self.inner_tol, self.clamp, self.origin_floor) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1 or self.inner_max_iter < 1:
            raise ValueError("iteration limits must be >= 1")
        if self.variant not in _VARIANTS:
            raise ValueError(f"variant must be one of {_VARIANTS}")


@dataclass
class DispatchSolution:
    """Converged (or best-effort) schedule with traces and diagnostics.

    Schedules are (T, unit) arrays; `soc` is the per-step state of charge
    fraction; `v` and `theta` are the recovered bus voltages and line
    angle differences. The trace lists hold one entry per outer iteration.
    """

    status: str
    p_mw: np.ndarray
    q_mvar: np.ndarray
    p_ess_mw: np.ndarray
    soc: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    fuel_liters: float
    outer_iterations: int
    inner_iterations: int
    objective_trace: list[float]
    surrogate_trace: list[float]
    post_update_surrogate_trace: list[float]
    equiv_gap_trace: list[float]
    cone_gap_trace: list[float]
    cut_max_trace: list[float]
    equivalence_gap: float
    max_cone_gap: float
    max_cone_violation: float
    angle_error: float
    message: str = ""
    variant: str = "full"
    gen_ids: tuple[str, ...] = ()
    ess_ids: tuple[str, ...] = ()


@dataclass
class VariantResult:
    """Per-variant outcome of a model comparison run."""

    name: str
    status: str
    fuel_liters: float
    cumulative_fuel: np.ndarray
    solution: DispatchSolution | None = None


def _terms_from_dispatch(case: NetworkCase, p_pu: np.ndarray) -> list[RatioTerm]:
    """Ratio terms (A in MW, C = 1/eta) ordered t*n_gen + i."""
    terms = []
    for t in range(case.horizon):
        for i, g in enumerate(case.generators):
            p = max(float(p_pu[i, t]), 0.0)
            eta = efficiency(g, p)
            terms.append(RatioTerm(gen=i, t=t, a=p * g.p_base, c=1.0 / eta))
    return terms


def variant_units(case: NetworkCase, variant: str) -> tuple[tuple[int, ...], bool]:
    """Resolve a variant selector to (positions fixed off, equal-loading flag).

    Unit classes follow rated capacity: the largest-capacity units are the
    main class, the smallest the auxiliary class. Variant A keeps only the
    main class, B keeps one unit of each class (the first by position), C
    keeps everything but ties all per-unit outputs together.
    """
    ng = len(case.generators)
    if variant == "full":
        return (), False
    if variant == "C":
        return (), True
    caps = [g.p_base for g in case.generators]
    cmax, cmin = max(caps), min(caps)
    if variant == "A":
        off = tuple(i for i in range(ng) if caps[i] != cmax)
        return off, False
    if variant == "B":
        main = next(i for i in range(ng) if caps[i] == cmax)
        if cmin == cmax:
            aux = next((i for i in range(ng) if i != main), main)
        else:
            aux = next(i for i in range(ng) if caps[i] == cmin)
        keep = {main, aux}
        return tuple(i for i in range(ng) if i not in keep), False
    raise ValueError(f"unknown variant {variant!r}")


def solve_dispatch(case: NetworkCase, config: SolverConfig = SolverConfig()) -> DispatchSolution:
    """Run the alternating conic-solve / auxiliary-update iteration.

    The case must validate cleanly (raises ValueError otherwise). Returns
    the best iterate by true ratio objective; `status` is "optimal" on
    convergence, "infeasible" when a subproblem has no feasible point,
    "iteration-limit" or "numerical-failure" otherwise.
    """
    problems = validate_case(case)
    if problems:
        raise ValueError("invalid case: " + "; ".join(problems))

    T = case.horizon
    ng = len(case.generators)
    off_units, equal_loading = variant_units(case, config.variant)

    aux = AuxiliaryState.ones(ng * T)
    points = relaxation.LinearizationPoint.flat(len(case.lines), T)

    traces = {k: [] for k in ("objective", "surrogate", "post_update",
                              "equiv_gap", "cone_gap", "cut_max")}
    best = None
    best_obj = math.inf
    inner_total = 0
    status = "iteration-limit"
    message = ""
    prev_obj = None
    settled = 0
    rising = 0

    for it in range(1, config.max_outer + 1):
        model, flow, dv = relaxation.build_model(
            case, aux, points, off_units=off_units, equal_loading=equal_loading
        )
        prob = socp.assemble(model)
        sol = socp.solve(prob, tol=config.inner_tol, max_iter=config.inner_max_iter)
        inner_total += sol.iterations
        if sol.status in ("infeasible", "unbounded"):
            status = "infeasible"
            message = (
                f"conic subproblem {sol.status} at outer iteration {it} "
                f"(eq residual {sol.max_eq_residual:.3e}, "
                f"cone residual {sol.max_cone_residual:.3e})"
            )
            break
        if sol.status != "optimal" and max(sol.max_eq_residual, sol.max_cone_residual) > 1e-6:
            status = "numerical-failure"
            message = f"conic solve returned {sol.status} at outer iteration {it}"
            break

        p_pu = sol.x[dv.p]
        terms = _terms_from_dispatch(case, p_pu)
        obj = fractional.ratio_sum(terms, case.dt_hours)
        sur_pre = fractional.surrogate(terms, aux, case.dt_hours)

        new_zeta, new_beta = [], []
        for term in terms:
            z, b = fractional.auxiliary_update(term.a, term.c, config.clamp)
            new_zeta.append(z)
            new_beta.append(b)
        new_aux = AuxiliaryState(zeta=tuple(new_zeta), beta=tuple(new_beta))
        cut_max = max(
            fractional.cutting_violation(z, b)
            for z, b in zip(new_aux.zeta, new_aux.beta)
        )
        sur_post = fractional.surrogate(terms, new_aux, case.dt_hours)
        gap = fractional.equivalence_gap(terms, new_aux, case.dt_hours)

        u_sol = sol.x[flow.u]
        wr_sol = sol.x[flow.wr]
        wi_sol = sol.x[flow.wi]
        slack = 2.0 * _cone_products(case, u_sol) - (wr_sol**2 + wi_sol**2)
        cone_gap = float(np.max(slack)) if slack.size else 0.0
        cone_violation = float(max(0.0, -np.min(slack))) if slack.size else 0.0

        traces["objective"].append(obj)
        traces["surrogate"].append(sur_pre)
        traces["post_update"].append(sur_post)
        traces["equiv_gap"].append(gap)
        traces["cone_gap"].append(cone_gap)
        traces["cut_max"].append(cut_max)

        if obj < best_obj:
            best_obj = obj
            best = (sol.x.copy(), flow, dv, new_aux, terms, gap, cone_gap, cone_violation)

        if prev_obj is not None:
            rel = abs(obj - prev_obj) / (1.0 + abs(prev_obj))
            settled = settled + 1 if rel <= config.outer_tol else 0
            rising = rising + 1 if obj > prev_obj + config.outer_tol * (1.0 + abs(prev_obj)) else 0
            if settled >= 2:
                status = "optimal"
                break
            if rising >= 10:
                status = "numerical-failure"
                message = "objective failed to decrease for 10 consecutive iterations"
                break
        prev_obj = obj

        aux = new_aux
        points = points.refreshed(wr_sol, wi_sol, config.origin_floor)

    if best is None:
        empty = np.zeros((T, 0))
        return DispatchSolution(
            status=status, p_mw=np.zeros((T, ng)), q_mvar=np.zeros((T, ng)),
            p_ess_mw=empty, soc=empty, v=np.zeros((T, len(case.buses))),
            theta=np.zeros((T, len(case.lines))), fuel_liters=math.nan,
            outer_iterations=len(traces["objective"]) + (1 if status != "optimal" else 0),
            inner_iterations=inner_total,
            objective_trace=traces["objective"], surrogate_trace=traces["surrogate"],
            post_update_surrogate_trace=traces["post_update"],
            equiv_gap_trace=traces["equiv_gap"], cone_gap_trace=traces["cone_gap"],
            cut_max_trace=traces["cut_max"], equivalence_gap=math.nan,
            max_cone_gap=math.nan, max_cone_violation=math.nan,
            angle_error=math.nan, message=message, variant=config.variant,
            gen_ids=tuple(g.id for g in case.generators),
            ess_ids=tuple(s.id for s in case.storage),
        )

    x, flow, dv, aux_fin, terms, gap, cone_gap, cone_violation = best
    p_mw = (x[dv.p] * np.array([g.p_base for g in case.generators])[:, None]).T
    q_mvar = x[dv.q].T if ng else np.zeros((T, 0))
    ns = len(case.storage)
    if ns:
        p_ess = x[dv.pb].T
        caps = np.array([s.capacity_mwh for s in case.storage])
        soc = x[dv.e].T / caps[None, :]
    else:
        p_ess = np.zeros((T, 0))
        soc = np.zeros((T, 0))
    v, theta, angle_err = recover_state(
        case, x[flow.u], x[flow.wr], x[flow.wi], x[flow.theta]
    )

    solution = DispatchSolution(
        status=status,
        p_mw=p_mw, q_mvar=q_mvar, p_ess_mw=p_ess, soc=soc, v=v.T, theta=theta.T,
        fuel_liters=math.nan,
        outer_iterations=len(traces["objective"]),
        inner_iterations=inner_total,
        objective_trace=traces["objective"],
        surrogate_trace=traces["surrogate"],
        post_update_surrogate_trace=traces["post_update"],
        equiv_gap_trace=traces["equiv_gap"],
        cone_gap_trace=traces["cone_gap"],
        cut_max_trace=traces["cut_max"],
        equivalence_gap=gap,
        max_cone_gap=cone_gap,
        max_cone_violation=cone_violation,
        angle_error=angle_err,
        message=message,
        variant=config.variant,
        gen_ids=tuple(g.id for g in case.generators),
        ess_ids=tuple(s.id for s in case.storage),
    )
    solution.fuel_liters = compute_fuel(solution, case)
    return solution


def _cone_products(case: NetworkCase, u_sol: np.ndarray) -> np.ndarray:
    """u_i * u_k per line/timestep for the relaxation-gap report."""
    if not case.lines:
        return np.zeros((0, u_sol.shape[1] if u_sol.ndim > 1 else 0))
    fi = np.array([case.bus_pos[ln.from_bus] for ln in case.lines])
    ti = np.array([case.bus_pos[ln.to_bus] for ln in case.lines])
    return u_sol[fi] * u_sol[ti]


def compute_fuel(solution: DispatchSolution, case: NetworkCase) -> float:
    """Total liters burned by the reported schedule via the exact ratio.

    (1/alpha) * sum_t sum_i P / eta(P / p_base) * dt, recomputed from
    `p_mw` so no surrogate value leaks into the accounting.
    """
    total = 0.0
    for t in range(solution.p_mw.shape[0]):
        for i, g in enumerate(case.generators):
            p = float(solution.p_mw[t, i])
            total += fuel_rate(g, p, case.alpha_mwh_per_liter) * case.dt_hours
    return total


def recover_state(case: NetworkCase, u, wr, wi, theta_lin):
    """Bus voltages and exact line angles from the lifted variables.

    V_i = (sqrt(2) u_i)^(1/2); theta_ik = atan2(W_I, W_R) evaluated
    exactly (NaN where W_R = W_I = 0 leaves the angle undefined). Returns
    (v, theta, max |theta_exact - theta_linearized|) with the undefined
    entries excluded from the discrepancy.
    """
    v = np.sqrt(relaxation.SQRT2 * np.maximum(np.asarray(u, dtype=float), 0.0))
    wr = np.asarray(wr, dtype=float)
    wi = np.asarray(wi, dtype=float)
    defined = (wr != 0.0) | (wi != 0.0)
    theta = np.full(wr.shape, np.nan)
    theta[defined] = np.arctan2(wi[defined], wr[defined])
    if np.any(defined):
        err = float(np.max(np.abs(theta[defined] - np.asarray(theta_lin)[defined])))
    else:
        err = 0.0
    return v, theta, err


def _per_step_fuel(solution: DispatchSolution, case: NetworkCase) -> np.ndarray:
    out = np.zeros(solution.p_mw.shape[0])
    for t in range(out.shape[0]):
        for i, g in enumerate(case.generators):
            out[t] += fuel_rate(g, float(solution.p_mw[t, i]),
                                case.alpha_mwh_per_liter) * case.dt_hours
    return out


def compare_models(case: NetworkCase, variants: tuple[str, ...] = ("A", "B", "C"),
                   config: SolverConfig = SolverConfig()) -> list[VariantResult]:
    """Solve the proposed model plus the requested dispatch variants.

    Returns one entry per model ("proposed" first) with total and
    per-timestep cumulative fuel; an infeasible variant is reported as
    such without failing the others.
    """
    results = []
    for name in ("full",) + tuple(variants):
        label = "proposed" if name == "full" else name
        sol = solve_dispatch(case, replace(config, variant=name))
        if sol.status in ("optimal",):
            cum = np.cumsum(_per_step_fuel(sol, case))
            results.append(VariantResult(label, sol.status, sol.fuel_liters, cum, sol))
        else:
            results.append(
                VariantResult(label, sol.status, math.nan,
                              np.full(case.horizon, math.nan), sol)
            )
    return results
