"""Rotated-quadratic-cone standard form and the conic solve contract.

A :class:`ConicProblem` is the solver-facing normal form: a linear
objective over bounded variables with linear equalities, linear
inequalities, and cone memberships on ordered variable tuples. A rotated
cone on (x0, x1, x2, ..) means 2*x0*x1 >= sum_j x_j^2 with x0, x1 >= 0; a
general quadratic cone means x0 >= ||(x1, ..)||.

:func:`assemble` lowers a relaxation model into this form, materializing
one fixed constant variable per squared epigraph (value 1/2) and per
hyperbolic constraint (value sqrt(2)) so every quadratic piece is exactly
one uniform cone membership. :func:`solve` hands the form to the embedded
interior-point method (:mod:`fpdispatch._ipm`); rotated cones are mapped
to plain second-order cones internally by the orthogonal rotation of
their two head coordinates. Solves are deterministic for fixed inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._ipm import ConeLP, solve_conelp

__all__ = [
    "ConicProblem",
    "ConicSolution",
    "ResidualReport",
    "AssemblyError",
    "assemble",
    "solve",
    "residuals",
    "dump_problem",
]

_SQRT2 = math.sqrt(2.0)


class AssemblyError(ValueError):
    """A constraint references a variable outside the registry."""


@dataclass
class ConicProblem:
    """Standard-form conic program (minimize ``obj @ x``)."""

    n: int
    obj: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    eq_cols: list[np.ndarray]
    eq_vals: list[np.ndarray]
    eq_rhs: np.ndarray
    ineq_cols: list[np.ndarray]
    ineq_vals: list[np.ndarray]
    ineq_rhs: np.ndarray
    rcones: list[tuple[int, ...]]
    qcones: list[tuple[int, ...]] = field(default_factory=list)
    names: list[str] = field(default_factory=list)


@dataclass
class ConicSolution:
    """Solve outcome: status, primal point, and scaled residual summary.

    `max_eq_residual` / `max_cone_residual` are scaled by 1 + the data
    norm of their family, so `status == "optimal"` implies both are at or
    below the requested tolerance.
    """

    status: str
    x: np.ndarray
    objective: float
    max_eq_residual: float
    max_cone_residual: float
    iterations: int


@dataclass
class ResidualReport:
    """Per-family maximum absolute violations at a primal point."""

    equality: float
    bounds: float
    cone: float

    @property
    def worst(self) -> float:
        return max(self.equality, self.bounds, self.cone)


def assemble(model) -> ConicProblem:
    """Lower a relaxation model into the conic standard form.

    Quadratic pieces arrive as tagged constraints: ("square", w, x) for
    w >= x^2, ("hyper", a, b) for a*b >= 1, and ("rcone", indices) for a
    direct rotated-cone membership. The first two get a fresh fixed-value
    head variable each; linear rows and bounds pass through unchanged.
    """
    n = model.n_vars
    names = list(model.names)
    lb = list(model.lb)
    ub = list(model.ub)
    obj = np.zeros(n + _n_fixed(model))
    obj[:n] = model.objective
    rcones: list[tuple[int, ...]] = []

    def check(idx_tuple, what):
        for i in idx_tuple:
            if not (0 <= i < n):
                raise AssemblyError(f"{what} references unregistered variable {i}")

    nxt = n
    for cone in model.cones:
        tag = cone[0]
        if tag == "square":
            _, w, xv = cone
            check((w, xv), "squared epigraph")
            names.append(f"_half{nxt}")
            lb.append(0.5)
            ub.append(0.5)
            rcones.append((w, nxt, xv))
            nxt += 1
        elif tag == "hyper":
            _, a, bv = cone
            check((a, bv), "hyperbolic constraint")
            names.append(f"_rt2{nxt}")
            lb.append(_SQRT2)
            ub.append(_SQRT2)
            rcones.append((a, bv, nxt))
            nxt += 1
        elif tag == "rcone":
            check(cone[1], "rotated cone")
            rcones.append(tuple(cone[1]))
        else:  # pragma: no cover - builder emits only the three tags
            raise AssemblyError(f"unknown cone tag {tag!r}")

    eq_cols, eq_vals, eq_rhs = [], [], []
    for cols, vals, rhs in model.eq_rows:
        check(cols, "equality row")
        eq_cols.append(np.asarray(cols, dtype=np.int64))
        eq_vals.append(np.asarray(vals, dtype=float))
        eq_rhs.append(rhs)
    ineq_cols, ineq_vals, ineq_rhs = [], [], []
    for cols, vals, rhs in model.ineq_rows:
        check(cols, "inequality row")
        ineq_cols.append(np.asarray(cols, dtype=np.int64))
        ineq_vals.append(np.asarray(vals, dtype=float))
        ineq_rhs.append(rhs)

    return ConicProblem(
        n=nxt,
        obj=obj,
        lb=np.asarray(lb, dtype=float),
        ub=np.asarray(ub, dtype=float),
        eq_cols=eq_cols,
        eq_vals=eq_vals,
        eq_rhs=np.asarray(eq_rhs, dtype=float),
        ineq_cols=ineq_cols,
        ineq_vals=ineq_vals,
        ineq_rhs=np.asarray(ineq_rhs, dtype=float),
        rcones=rcones,
        names=names,
    )


def _n_fixed(model) -> int:
    return sum(1 for cone in model.cones if cone[0] in ("square", "hyper"))


def _rows_to_csr(cols_list, vals_list, n, nrows):
    if nrows == 0:
        return sp.csr_matrix((0, n))
    indptr = np.zeros(nrows + 1, dtype=np.int64)
    for i, cols in enumerate(cols_list):
        indptr[i + 1] = indptr[i] + len(cols)
    indices = np.concatenate(cols_list) if cols_list else np.zeros(0, dtype=np.int64)
    data = np.concatenate(vals_list) if vals_list else np.zeros(0)
    return sp.csr_matrix((data, indices, indptr), shape=(nrows, n))


def _to_conelp(problem: ConicProblem):
    """Translate to `min c'x : Ax=b, Gx+s=h, s in orthant x SOCs`.

    Bounds become orthant rows (fixed variables become equalities); each
    rotated cone contributes a SOC block through the rotation
    (x0+x1, x0-x1)/sqrt(2) of its head pair.
    """
    n = problem.n
    A_cols = list(problem.eq_cols)
    A_vals = list(problem.eq_vals)
    b = list(problem.eq_rhs)

    G_cols, G_vals, h = [], [], []
    for cols, vals, rhs in zip(problem.ineq_cols, problem.ineq_vals, problem.ineq_rhs):
        G_cols.append(cols)
        G_vals.append(vals)
        h.append(rhs)
    one = np.ones(1)
    for i in range(n):
        lo, hi = problem.lb[i], problem.ub[i]
        if lo == hi:
            A_cols.append(np.array([i], dtype=np.int64))
            A_vals.append(one)
            b.append(lo)
            continue
        if np.isfinite(hi):
            G_cols.append(np.array([i], dtype=np.int64))
            G_vals.append(one)
            h.append(hi)
        if np.isfinite(lo):
            G_cols.append(np.array([i], dtype=np.int64))
            G_vals.append(-one)
            h.append(-lo)
    l = len(h)

    soc_sizes = []
    inv = 1.0 / _SQRT2
    for tup in problem.rcones:
        x0, x1 = tup[0], tup[1]
        tail = tup[2:]
        soc_sizes.append(2 + len(tail))
        G_cols.append(np.array([x0, x1], dtype=np.int64))
        G_vals.append(np.array([-inv, -inv]))
        h.append(0.0)
        G_cols.append(np.array([x0, x1], dtype=np.int64))
        G_vals.append(np.array([-inv, inv]))
        h.append(0.0)
        for j in tail:
            G_cols.append(np.array([j], dtype=np.int64))
            G_vals.append(-one)
            h.append(0.0)
    for tup in problem.qcones:
        soc_sizes.append(len(tup))
        for j in tup:
            G_cols.append(np.array([j], dtype=np.int64))
            G_vals.append(-one)
            h.append(0.0)

    A = _rows_to_csr(A_cols, A_vals, n, len(b))
    G = _rows_to_csr(G_cols, G_vals, n, len(h))
    return ConeLP(
        c=problem.obj.astype(float),
        A=A,
        b=np.asarray(b, dtype=float),
        G=G,
        h=np.asarray(h, dtype=float),
        l=l,
        soc_sizes=soc_sizes,
    )


_STATUS_MAP = {
    "optimal": "optimal",
    "primal-infeasible": "infeasible",
    "dual-infeasible": "unbounded",
    "iteration-limit": "iteration-limit",
    "numerical-failure": "numerical-failure",
}


def solve(problem: ConicProblem, tol: float = 1e-8, max_iter: int = 200) -> ConicSolution:
    """Solve the conic program; statuses cover infeasible/unbounded inputs.

    On "optimal" the primal point is feasible to `tol` in the scaled sense
    (violations divided by 1 + the family's data norm) and the objective
    is within `tol` of optimal as certified by the duality gap. An
    iteration-limited solve returns the best iterate found.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    bad = problem.lb > problem.ub
    if np.any(bad):
        return ConicSolution(
            status="infeasible",
            x=np.zeros(problem.n),
            objective=np.nan,
            max_eq_residual=np.inf,
            max_cone_residual=np.inf,
            iterations=0,
        )
    lp = _to_conelp(problem)
    # normalize the objective so certificate/convergence tests stay honest
    # when auxiliary weights blow the coefficient range up (argmin invariant)
    c_scale = max(1.0, float(np.max(np.abs(lp.c))) if lp.c.size else 1.0)
    lp.c = lp.c / c_scale
    res = solve_conelp(lp, tol=tol, max_iter=max_iter)
    rep = residuals(problem, res.x)
    eq_scale = 1.0 + (float(np.max(np.abs(problem.eq_rhs))) if len(problem.eq_rhs) else 0.0)
    return ConicSolution(
        status=_STATUS_MAP[res.status],
        x=res.x,
        objective=float(problem.obj @ res.x),
        max_eq_residual=rep.equality / eq_scale,
        max_cone_residual=rep.cone,
        iterations=res.iterations,
    )


def residuals(problem: ConicProblem, x: np.ndarray) -> ResidualReport:
    """Maximum absolute violations of a primal point, per constraint family.

    Rotated cones report max(0, sum x_j^2 - 2*x0*x1); bound residuals
    cover both variable boxes and linear inequality rows.
    """
    eq = 0.0
    for cols, vals, rhs in zip(problem.eq_cols, problem.eq_vals, problem.eq_rhs):
        eq = max(eq, abs(float(vals @ x[cols]) - rhs))
    bound = 0.0
    for cols, vals, rhs in zip(problem.ineq_cols, problem.ineq_vals, problem.ineq_rhs):
        bound = max(bound, float(vals @ x[cols]) - rhs)
    finite_ub = np.isfinite(problem.ub)
    finite_lb = np.isfinite(problem.lb)
    if np.any(finite_ub):
        bound = max(bound, float(np.max(x[finite_ub] - problem.ub[finite_ub])))
    if np.any(finite_lb):
        bound = max(bound, float(np.max(problem.lb[finite_lb] - x[finite_lb])))
    cone = 0.0
    for tup in problem.rcones:
        tail = sum(float(x[j]) ** 2 for j in tup[2:])
        cone = max(cone, tail - 2.0 * float(x[tup[0]]) * float(x[tup[1]]))
        cone = max(cone, -float(x[tup[0]]), -float(x[tup[1]]))
    for tup in problem.qcones:
        tail = math.sqrt(sum(float(x[j]) ** 2 for j in tup[1:]))
        cone = max(cone, tail - float(x[tup[0]]))
    return ResidualReport(equality=eq, bounds=max(bound, 0.0), cone=max(cone, 0.0))


def dump_problem(problem: ConicProblem) -> str:
    """Plain-text dump of the standard form for external cross-checking.

    Format: one `# section` header per block; `obj col value` triplets,
    `bnd col lo hi`, `eq row col value` / `eqrhs row value` triplets (same
    for `ineq`), then `rcone idx...` / `qcone idx...` lines listing each
    cone's ordered variable tuple.
    """
    out = [f"# conic problem: n={problem.n} eq={len(problem.eq_rhs)} "
           f"ineq={len(problem.ineq_rhs)} rcones={len(problem.rcones)} "
           f"qcones={len(problem.qcones)}"]
    out.append("# objective")
    for i, v in enumerate(problem.obj):
        if v != 0.0:
            out.append(f"obj {i} {v!r}")
    out.append("# bounds")
    for i in range(problem.n):
        lo, hi = problem.lb[i], problem.ub[i]
        if np.isfinite(lo) or np.isfinite(hi):
            out.append(f"bnd {i} {lo!r} {hi!r}")
    out.append("# equalities")
    for r, (cols, vals, rhs) in enumerate(
        zip(problem.eq_cols, problem.eq_vals, problem.eq_rhs)
    ):
        for ccc, v in zip(cols, vals):
            out.append(f"eq {r} {ccc} {v!r}")
        out.append(f"eqrhs {r} {rhs!r}")
    out.append("# inequalities (row . x <= rhs)")
    for r, (cols, vals, rhs) in enumerate(
        zip(problem.ineq_cols, problem.ineq_vals, problem.ineq_rhs)
    ):
        for ccc, v in zip(cols, vals):
            out.append(f"ineq {r} {ccc} {v!r}")
        out.append(f"ineqrhs {r} {rhs!r}")
    out.append("# cones")
    for tup in problem.rcones:
        out.append("rcone " + " ".join(str(i) for i in tup))
    for tup in problem.qcones:
        out.append("qcone " + " ".join(str(i) for i in tup))
    return "\n".join(out) + "\n"
