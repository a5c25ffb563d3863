"""Primal-dual interior-point core for the cone LP standard form

    minimize    c'x
    subject to  A x = b
                G x + s = h,   s in K

with K a product of a nonnegative orthant (leading `l` rows of G) and
second-order cones. The homogeneous self-dual embedding is used, so primal
and dual infeasibility come out as certificates rather than failures.
Scaling points are Nesterov-Todd; search directions are Mehrotra
predictor-corrector; the KKT systems are solved by sparse LU with static
regularization plus iterative refinement.

All cone-wise vector work is delegated to the kernels in
:mod:`fpdispatch._kernels`, which carry the numba/numpy dual path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels as K

__all__ = ["ConeLP", "ConeLPResult", "solve_conelp"]

_STEP_DAMP = 0.99
_REG = 1e-9
_REFINE_ROUNDS = 3


@dataclass
class ConeLP:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    l: int
    soc_sizes: list[int] = field(default_factory=list)


@dataclass
class ConeLPResult:
    status: str
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    iterations: int
    primal_obj: float
    gap: float
    pres: float
    dres: float


class _KKT:
    """Sparse KKT solver for [0 A' G'; A 0 0; G 0 -W^2] systems.

    The full quasi-definite three-block form is factored (eliminating the
    cone block squares the scaling's condition number and costs the last
    digits near convergence). The structural triplets are static; only
    the -W^2 values (orthant diagonal, dense SOC blocks, computed by the
    numba/numpy kernel) are refreshed per interior-point iteration, and a
    static +/- delta regularization keeps the LU stable, with iterative
    refinement against the unregularized matrix.
    """

    def __init__(self, prob: ConeLP, layout: K.ConeLayout):
        n = prob.c.shape[0]
        p = prob.b.shape[0]
        m = prob.h.shape[0]
        self.n, self.p, self.m = n, p, m
        self.layout = layout
        A = prob.A.tocoo()
        G = prob.G.tocoo()
        rows = [A.row + n, A.col, G.row + n + p, G.col]
        cols = [A.col, A.row + n, G.col, G.row + n + p]
        data = [A.data, A.data, G.data, G.data]
        w_rows = [np.arange(layout.l)]
        w_cols = [np.arange(layout.l)]
        for k in range(layout.nsoc):
            o = layout.l + layout.starts[k]
            sz = layout.sizes[k]
            rr, cc = np.meshgrid(np.arange(sz), np.arange(sz), indexing="ij")
            w_rows.append(o + rr.ravel())
            w_cols.append(o + cc.ravel())
        w_rows = np.concatenate(w_rows).astype(np.int64)
        w_cols = np.concatenate(w_cols).astype(np.int64)
        rows.append(w_rows + n + p)
        cols.append(w_cols + n + p)
        data.append(np.zeros(len(w_rows)))
        # the z-block regularization shares the -W^2 diagonal slots, so it
        # is folded into those values at refactor time instead
        self._w_diag = w_rows == w_cols
        dim = n + p + m
        rows.append(np.arange(n + p))
        cols.append(np.arange(n + p))
        data.append(np.concatenate([np.full(n, _REG), np.full(p, -_REG)]))
        rows = np.concatenate([np.asarray(r, dtype=np.int64) for r in rows])
        cols = np.concatenate([np.asarray(ccc, dtype=np.int64) for ccc in cols])
        self.static = np.concatenate(data)
        nw = len(w_rows)
        self.w_slice = slice(self.static.shape[0] - (n + p) - nw,
                             self.static.shape[0] - (n + p))
        self.reg_slice = slice(self.static.shape[0] - (n + p), None)
        self.dim = dim
        # fixed csc pattern: build once, then refresh values through the
        # coo->csc scatter map (duplicates impossible by construction)
        proto = sp.coo_matrix(
            (np.arange(1.0, self.static.shape[0] + 1), (rows, cols)),
            shape=(dim, dim),
        ).tocsc()
        self._csc = proto
        self._scatter = (proto.data - 1.0).astype(np.int64)
        self.M_exact = None
        self.factor = None

    def refactor(self, d, betas, wbar):
        w2 = -K.w2_values(d, betas, wbar, self.layout, inverse=False)
        exact = self.static.copy()
        exact[self.w_slice] = w2
        exact[self.reg_slice] = 0.0
        Me = self._csc.copy()
        Me.data = exact[self._scatter]
        self.M_exact = Me
        vals = self.static.copy()
        vals[self.w_slice] = w2 - _REG * self._w_diag
        M = self._csc.copy()
        M.data = vals[self._scatter]
        self.factor = spla.splu(M)

    def solve(self, bx, by, bz):
        r = np.concatenate([bx, by, bz])
        u = self.factor.solve(r)
        for _ in range(_REFINE_ROUNDS):
            resid = r - self.M_exact @ u
            if np.linalg.norm(resid) <= 1e-13 * (1.0 + np.linalg.norm(r)):
                break
            u = u + self.factor.solve(resid)
        n, p = self.n, self.p
        return u[:n], u[n:n + p], u[n + p:]


def _norm(v):
    return float(np.linalg.norm(v))


def solve_conelp(prob: ConeLP, tol: float = 1e-8, max_iter: int = 200) -> ConeLPResult:
    """Run the homogeneous embedding to optimality or a certificate."""
    n = prob.c.shape[0]
    p = prob.b.shape[0]
    m = prob.h.shape[0]
    c, b, h = prob.c, prob.b, prob.h
    A, G = prob.A.tocsr(), prob.G.tocsr()

    if m == 0:
        return _solve_equality_only(prob, tol)

    layout = K.ConeLayout(prob.l, prob.soc_sizes)
    kkt = _KKT(prob, layout)
    nu = layout.degree

    ident_d = np.ones(layout.l)
    ident_b = np.ones(layout.nsoc)
    ident_w = np.zeros(layout.soc_len)
    ident_w[layout.starts] = 1.0
    try:
        kkt.refactor(ident_d, ident_b, ident_w)
    except RuntimeError:
        return _fail(n, p, m, "numerical-failure")

    # primal init: Ax = b, Gx + s = h with s least-norm, then shift interior
    x, y, zt = kkt.solve(np.zeros(n), b, h)
    s = K.interior_shift(-zt, layout)
    # dual init: A'y + G'z = -c, then shift z interior
    _, y, z = kkt.solve(-c, np.zeros(p), np.zeros(m))
    z = K.interior_shift(z, layout)
    tau, kappa = 1.0, 1.0

    norm_b = 1.0 + _norm(b)
    norm_h = 1.0 + _norm(h)
    norm_c = 1.0 + _norm(c)

    best = None
    best_score = np.inf
    status = "iteration-limit"
    iters = 0

    for iters in range(1, max_iter + 1):
        rx = -(A.T @ y) - (G.T @ z) - c * tau
        ry = A @ x - b * tau
        rz = G @ x + s - h * tau
        rt = kappa + float(c @ x + b @ y + h @ z)
        mu = (float(s @ z) + tau * kappa) / (nu + 1)

        # convergence on the normalized candidate
        xh, yh, zh, sh = x / tau, y / tau, z / tau, s / tau
        pres = max(_norm(A @ xh - b) / norm_b, _norm(G @ xh + sh - h) / norm_h)
        dres = _norm(A.T @ yh + G.T @ zh + c) / norm_c
        pobj = float(c @ xh)
        gap = float(sh @ zh)
        relgap = gap / max(1.0, abs(pobj))
        score = max(pres, dres, relgap)
        if score < best_score:
            best_score = score
            best = (xh.copy(), yh.copy(), zh.copy(), sh.copy(), pobj, gap, pres, dres)
        if pres <= tol and dres <= tol and (gap <= tol or relgap <= tol):
            status = "optimal"
            break

        # infeasibility certificates
        byhz = float(b @ y + h @ z)
        if byhz < 0.0:
            cert = _norm(A.T @ y + G.T @ z) / norm_c / (-byhz)
            if cert <= tol:
                status = "primal-infeasible"
                sc = -1.0 / byhz
                best = (xh, y * sc, z * sc, sh, pobj, gap, pres, dres)
                break
        cx = float(c @ x)
        if cx < 0.0:
            cert = max(_norm(A @ x) / norm_b, _norm(G @ x + s) / norm_h) / (-cx)
            if cert <= tol:
                status = "dual-infeasible"
                sc = -1.0 / cx
                best = (x * sc, yh, zh, s * sc, pobj, gap, pres, dres)
                break

        try:
            d, betas, wbar, lam = K.nt_scaling(s, z, layout)
            if not np.all(np.isfinite(lam)):
                status = "numerical-failure"
                break
            kkt.refactor(d, betas, wbar)
            x1, y1, z1 = kkt.solve(-c, b, h)
        except (RuntimeError, FloatingPointError):
            status = "numerical-failure"
            break

        def direction(bx, by, bz, btau, bs, bkappa):
            ds_t = K.jordan_solve(lam, bs, layout)
            wds = K.apply_scaling(ds_t, d, betas, wbar, layout)
            x2, y2, z2 = kkt.solve(bx, by, bz - wds)
            den = float(c @ x1 + b @ y1 + h @ z1) - kappa / tau
            num = btau - bkappa / tau - float(c @ x2 + b @ y2 + h @ z2)
            dtau = num / den
            dx = x2 + dtau * x1
            dy = y2 + dtau * y1
            dz = z2 + dtau * z1
            wdz = K.apply_scaling(dz, d, betas, wbar, layout)
            ds = K.apply_scaling(ds_t - wdz, d, betas, wbar, layout)
            dkappa = (bkappa - kappa * dtau) / tau
            return dx, dy, dz, dtau, ds, dkappa, wdz, ds_t

        lam_lam = K.jordan_mul(lam, lam, layout)

        # predictor
        aff = direction(rx, -ry, -rz, -rt, -lam_lam, -tau * kappa)
        dxa, dya, dza, dta, dsa, dka, wdza, dsta = aff
        alpha_aff = min(
            K.step_to_boundary(s, dsa, layout),
            K.step_to_boundary(z, dza, layout),
            (-tau / dta) if dta < 0 else np.inf,
            (-kappa / dka) if dka < 0 else np.inf,
            1.0,
        )
        sigma = (1.0 - alpha_aff) ** 3

        # corrector (Mehrotra): correct with the scaled affine cross term
        eta = 1.0 - sigma
        corr = K.jordan_mul(dsta - wdza, wdza, layout)
        bs = -lam_lam - corr + sigma * mu * layout.unit
        bkap = -tau * kappa - dta * dka + sigma * mu
        dx, dy, dz, dtau, ds, dkappa, _, _ = direction(
            eta * rx, -eta * ry, -eta * rz, -eta * rt, bs, bkap
        )

        alpha = _STEP_DAMP * min(
            K.step_to_boundary(s, ds, layout),
            K.step_to_boundary(z, dz, layout),
            (-tau / dtau) if dtau < 0 else np.inf,
            (-kappa / dkappa) if dkappa < 0 else np.inf,
        )
        alpha = min(alpha, 1.0)
        if not np.isfinite(alpha) or alpha <= 1e-12:
            status = "numerical-failure"
            break

        x += alpha * dx
        y += alpha * dy
        z += alpha * dz
        s += alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa
        if not (np.isfinite(tau) and tau > 0.0 and np.isfinite(kappa)):
            status = "numerical-failure"
            break

    xh, yh, zh, sh, pobj, gap, pres, dres = best
    return ConeLPResult(
        status=status, x=xh, y=yh, z=zh, s=sh, iterations=iters,
        primal_obj=pobj, gap=gap, pres=pres, dres=dres,
    )


def _solve_equality_only(prob: ConeLP, tol: float) -> ConeLPResult:
    """Degenerate instance with no cone rows: plain equality-constrained LP."""
    n, p = prob.c.shape[0], prob.b.shape[0]
    empty = np.zeros(0)
    if p == 0:
        status = "optimal" if not np.any(prob.c) else "dual-infeasible"
        return ConeLPResult(status, np.zeros(n), empty, empty, empty, 0, 0.0, 0.0, 0.0, 0.0)
    M = sp.bmat(
        [[sp.eye(n) * _REG, prob.A.T], [prob.A, -sp.eye(p) * _REG]], format="csc"
    )
    rhs = np.concatenate([-prob.c, prob.b])
    u = spla.splu(M).solve(rhs)
    x, y = u[:n], u[n:]
    pres = _norm(prob.A @ x - prob.b) / (1.0 + _norm(prob.b))
    dres = _norm(prob.A.T @ y + prob.c) / (1.0 + _norm(prob.c))
    ok = pres <= max(tol, 1e-6) and dres <= max(tol, 1e-6)
    return ConeLPResult(
        "optimal" if ok else "primal-infeasible", x, y, empty, empty, 1,
        float(prob.c @ x), 0.0, pres, dres,
    )


def _fail(n, p, m, status):
    return ConeLPResult(status, np.zeros(n), np.zeros(p), np.zeros(m), np.zeros(m),
                        0, np.nan, np.nan, np.nan, np.nan)
