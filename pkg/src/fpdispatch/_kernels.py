"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Two families live here:

* per-cone vector operations used inside every interior-point iteration
  (Nesterov-Todd scalings, Jordan products, step-to-boundary), applied to
  a long slack vector holding an orthant part followed by many small
  second-order-cone blocks;
* the brute-force dispatch oracle's grid scan.

Each kernel has two implementations with identical semantics: a loop
version compiled with ``numba.njit`` and a vectorized numpy version.
Setting ``FPDISPATCH_DISABLE_NUMBA=1`` in the environment (or a missing
numba install) selects the numpy path; ``USING_NUMBA`` reports the choice.
``benchmarks/bench_kernels.py`` times one path against the other.

Cone block structure is described by a :class:`ConeLayout`: the orthant
length ``l`` plus start offsets and sizes of the SOC blocks within the
tail ``v[l:]`` of each vector.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "USING_NUMBA",
    "ConeLayout",
    "nt_scaling",
    "apply_scaling",
    "jordan_mul",
    "jordan_solve",
    "step_to_boundary",
    "interior_shift",
    "grid_scan",
]

_disable = os.environ.get("FPDISPATCH_DISABLE_NUMBA", "").strip() not in ("", "0")
if not _disable:
    try:
        from numba import njit as _njit

        USING_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USING_NUMBA = False
else:
    USING_NUMBA = False

_BIG_STEP = 1e20


class ConeLayout:
    """Orthant length plus SOC block offsets/sizes, with cached index maps.

    `starts`/`sizes` are relative to the SOC tail (element 0 of block k is
    ``v[l + starts[k]]``). The derived arrays serve the numpy fallback:
    `heads` flags block leads, `block_of` maps each tail element to its
    block, and `expand` scatters one scalar per block over its elements.
    """

    def __init__(self, l: int, sizes):
        self.l = int(l)
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.nsoc = len(self.sizes)
        self.starts = np.zeros(self.nsoc, dtype=np.int64)
        if self.nsoc:
            self.starts[1:] = np.cumsum(self.sizes)[:-1]
        self.soc_len = int(self.sizes.sum()) if self.nsoc else 0
        self.dim = self.l + self.soc_len
        self.degree = self.l + self.nsoc
        self.heads = np.zeros(self.soc_len, dtype=bool)
        self.heads[self.starts] = True if self.nsoc else False
        self.block_of = np.repeat(np.arange(self.nsoc, dtype=np.int64), self.sizes)
        # identity element of the cone product: ones on the orthant, e0 per block
        self.unit = np.zeros(self.dim)
        self.unit[: self.l] = 1.0
        self.unit[self.l + self.starts] = 1.0

    def seg_sum(self, v: np.ndarray) -> np.ndarray:
        """Per-block sums over a SOC-tail-length vector."""
        if not self.nsoc:
            return np.zeros(0)
        return np.add.reduceat(v, self.starts)


def _neg_tail(v, layout):
    """Apply the hyperbolic reflection J (negate non-head elements) blockwise."""
    out = np.where(layout.heads, v, -v)
    return out


# ---------------------------------------------------------------------------
# numba loop kernels (operate on raw arrays)

if USING_NUMBA:

    @_njit(cache=True)
    def _nt_scaling_nb(s, z, l, starts, sizes):
        m = s.shape[0]
        nsoc = starts.shape[0]
        d = np.empty(l)
        lam = np.empty(m)
        betas = np.empty(nsoc)
        wbar = np.empty(m - l)
        for i in range(l):
            d[i] = np.sqrt(s[i] / z[i])
            lam[i] = np.sqrt(s[i] * z[i])
        for k in range(nsoc):
            o = l + starts[k]
            n = sizes[k]
            sres = s[o] * s[o]
            zres = z[o] * z[o]
            dot = s[o] * z[o]
            for j in range(1, n):
                sres -= s[o + j] * s[o + j]
                zres -= z[o + j] * z[o + j]
                dot += s[o + j] * z[o + j]
            snorm = np.sqrt(sres)
            znorm = np.sqrt(zres)
            gamma = np.sqrt((1.0 + dot / (snorm * znorm)) * 0.5)
            beta = np.sqrt(snorm / znorm)
            betas[k] = beta
            c0 = 0.5 / gamma
            w0 = c0 * (s[o] / snorm + z[o] / znorm)
            # half vector v = (w + e0)/sqrt(2 (w0 + 1)): H(v)^2 z maps to s
            tden = np.sqrt(2.0 * (w0 + 1.0))
            wbar[starts[k]] = (w0 + 1.0) / tden
            for j in range(1, n):
                wbar[starts[k] + j] = c0 * (s[o + j] / snorm - z[o + j] / znorm) / tden
            # lam = W z = beta * (2*v*(v.z) - J z)
            v0 = wbar[starts[k]]
            wz = v0 * z[o]
            for j in range(1, n):
                wz += wbar[starts[k] + j] * z[o + j]
            lam[o] = beta * (2.0 * v0 * wz - z[o])
            for j in range(1, n):
                lam[o + j] = beta * (2.0 * wbar[starts[k] + j] * wz + z[o + j])
        return d, betas, wbar, lam

    @_njit(cache=True)
    def _apply_scaling_nb(x, d, betas, wbar, l, starts, sizes, inverse):
        m = x.shape[0]
        out = np.empty(m)
        for i in range(l):
            out[i] = x[i] / d[i] if inverse else x[i] * d[i]
        for k in range(starts.shape[0]):
            o = l + starts[k]
            n = sizes[k]
            w0 = wbar[starts[k]]
            if inverse:
                # W^-1 x = (1/beta) * (2*(J wbar)((J wbar).x) - J x)
                wx = w0 * x[o]
                for j in range(1, n):
                    wx -= wbar[starts[k] + j] * x[o + j]
                scale = 1.0 / betas[k]
                out[o] = scale * (2.0 * w0 * wx - x[o])
                for j in range(1, n):
                    out[o + j] = scale * (-2.0 * wbar[starts[k] + j] * wx + x[o + j])
            else:
                wx = w0 * x[o]
                for j in range(1, n):
                    wx += wbar[starts[k] + j] * x[o + j]
                beta = betas[k]
                out[o] = beta * (2.0 * w0 * wx - x[o])
                for j in range(1, n):
                    out[o + j] = beta * (2.0 * wbar[starts[k] + j] * wx + x[o + j])
        return out

    @_njit(cache=True)
    def _jordan_mul_nb(u, v, l, starts, sizes):
        m = u.shape[0]
        out = np.empty(m)
        for i in range(l):
            out[i] = u[i] * v[i]
        for k in range(starts.shape[0]):
            o = l + starts[k]
            n = sizes[k]
            dot = 0.0
            for j in range(n):
                dot += u[o + j] * v[o + j]
            out[o] = dot
            for j in range(1, n):
                out[o + j] = u[o] * v[o + j] + v[o] * u[o + j]
        return out

    @_njit(cache=True)
    def _jordan_solve_nb(lam, r, l, starts, sizes):
        m = lam.shape[0]
        out = np.empty(m)
        for i in range(l):
            out[i] = r[i] / lam[i]
        for k in range(starts.shape[0]):
            o = l + starts[k]
            n = sizes[k]
            tail2 = 0.0
            lr = 0.0
            for j in range(1, n):
                tail2 += lam[o + j] * lam[o + j]
                lr += lam[o + j] * r[o + j]
            det = lam[o] * lam[o] - tail2
            u0 = (lam[o] * r[o] - lr) / det
            out[o] = u0
            for j in range(1, n):
                out[o + j] = (r[o + j] - u0 * lam[o + j]) / lam[o]
        return out

    @_njit(cache=True)
    def _step_to_boundary_nb(u, du, l, starts, sizes):
        alpha = _BIG_STEP
        for i in range(l):
            if du[i] < 0.0:
                a = -u[i] / du[i]
                if a < alpha:
                    alpha = a
        for k in range(starts.shape[0]):
            o = l + starts[k]
            n = sizes[k]
            a2 = du[o] * du[o]
            b2 = u[o] * du[o]
            c2 = u[o] * u[o]
            for j in range(1, n):
                a2 -= du[o + j] * du[o + j]
                b2 -= u[o + j] * du[o + j]
                c2 -= u[o + j] * u[o + j]
            b2 *= 2.0
            if c2 < 0.0:
                c2 = 0.0
            a = _soc_quad_step(a2, b2, c2)
            if a < alpha:
                alpha = a
        return alpha

    @_njit(cache=True)
    def _soc_quad_step(a, b, c):
        # smallest positive root of a*t^2 + b*t + c with c >= 0
        if abs(a) < 1e-300:
            if b < 0.0:
                return -c / b
            return _BIG_STEP
        disc = b * b - 4.0 * a * c
        if disc < 0.0:
            return _BIG_STEP
        sq = np.sqrt(disc)
        if b >= 0.0:
            q = -0.5 * (b + sq)
        else:
            q = -0.5 * (b - sq)
        best = _BIG_STEP
        if abs(a) > 0.0:
            r1 = q / a
            if r1 > 0.0 and r1 < best:
                best = r1
        if abs(q) > 0.0:
            r2 = c / q
            if r2 > 0.0 and r2 < best:
                best = r2
        return best

    @_njit(cache=True)
    def _max_violation_nb(s, l, starts, sizes):
        worst = -_BIG_STEP
        for i in range(l):
            if -s[i] > worst:
                worst = -s[i]
        for k in range(starts.shape[0]):
            o = l + starts[k]
            n = sizes[k]
            tail = 0.0
            for j in range(1, n):
                tail += s[o + j] * s[o + j]
            v = np.sqrt(tail) - s[o]
            if v > worst:
                worst = v
        return worst


# ---------------------------------------------------------------------------
# numpy fallback kernels (vectorized across blocks)


def _nt_scaling_np(s, z, layout):
    l = layout.l
    d = np.sqrt(s[:l] / z[:l])
    lam = np.empty(layout.dim)
    lam[:l] = np.sqrt(s[:l] * z[:l])
    if not layout.nsoc:
        return d, np.zeros(0), np.zeros(0), lam
    sv, zv = s[l:], z[l:]
    heads = layout.heads
    s_head = sv[heads]
    z_head = zv[heads]
    sres = 2.0 * s_head * s_head - layout.seg_sum(sv * sv)
    zres = 2.0 * z_head * z_head - layout.seg_sum(zv * zv)
    snorm = np.sqrt(sres)
    znorm = np.sqrt(zres)
    dot = layout.seg_sum(sv * zv) / (snorm * znorm)
    gamma = np.sqrt((1.0 + dot) * 0.5)
    betas = np.sqrt(snorm / znorm)
    sn_e = snorm[layout.block_of]
    zn_e = znorm[layout.block_of]
    c0 = (0.5 / gamma)[layout.block_of]
    sbar = sv / sn_e
    zbar_j = np.where(heads, zv, -zv) / zn_e
    wbar = c0 * (sbar + zbar_j)
    # half vector v = (w + e0)/sqrt(2 (w0 + 1))
    w_head = wbar[layout.starts]
    tden = np.sqrt(2.0 * (w_head + 1.0))[layout.block_of]
    wbar = np.where(heads, wbar + 1.0, wbar) / tden
    wz = layout.seg_sum(wbar * zv)
    wz_e = wz[layout.block_of]
    jz = np.where(heads, zv, -zv)
    lam[l:] = betas[layout.block_of] * (2.0 * wbar * wz_e - jz)
    return d, betas, wbar, lam


def _apply_scaling_np(x, d, betas, wbar, layout, inverse):
    l = layout.l
    out = np.empty(layout.dim)
    out[:l] = x[:l] / d if inverse else x[:l] * d
    if not layout.nsoc:
        return out
    xv = x[l:]
    heads = layout.heads
    jx = np.where(heads, xv, -xv)
    if inverse:
        jw = np.where(heads, wbar, -wbar)
        wx = layout.seg_sum(jw * xv)[layout.block_of]
        out[l:] = (2.0 * jw * wx - jx) / betas[layout.block_of]
    else:
        wx = layout.seg_sum(wbar * xv)[layout.block_of]
        out[l:] = betas[layout.block_of] * (2.0 * wbar * wx - jx)
    return out


def _jordan_mul_np(u, v, layout):
    l = layout.l
    out = np.empty(layout.dim)
    out[:l] = u[:l] * v[:l]
    if not layout.nsoc:
        return out
    uv, vv = u[l:], v[l:]
    dots = layout.seg_sum(uv * vv)
    u_head = uv[layout.starts][layout.block_of]
    v_head = vv[layout.starts][layout.block_of]
    tail = u_head * vv + v_head * uv
    tail[layout.starts] = dots
    out[l:] = tail
    return out


def _jordan_solve_np(lam, r, layout):
    l = layout.l
    out = np.empty(layout.dim)
    out[:l] = r[:l] / lam[:l]
    if not layout.nsoc:
        return out
    lv, rv = lam[l:], r[l:]
    heads = layout.heads
    lam_head = lv[layout.starts]
    r_head = rv[layout.starts]
    tail2 = layout.seg_sum(np.where(heads, 0.0, lv * lv))
    lr = layout.seg_sum(np.where(heads, 0.0, lv * rv))
    det = lam_head * lam_head - tail2
    u0 = (lam_head * r_head - lr) / det
    u0_e = u0[layout.block_of]
    tail = (rv - u0_e * lv) / lam_head[layout.block_of]
    tail[layout.starts] = u0
    out[l:] = tail
    return out


def _step_to_boundary_np(u, du, layout):
    l = layout.l
    alpha = _BIG_STEP
    neg = du[:l] < 0.0
    if np.any(neg):
        alpha = min(alpha, float(np.min(-u[:l][neg] / du[:l][neg])))
    if not layout.nsoc:
        return alpha
    uv, dv = u[l:], du[l:]
    heads = layout.heads
    sgn = np.where(heads, 1.0, -1.0)
    a = layout.seg_sum(sgn * dv * dv)
    b = 2.0 * layout.seg_sum(sgn * uv * dv)
    c = np.maximum(layout.seg_sum(sgn * uv * uv), 0.0)
    for k in range(layout.nsoc):
        s = _soc_quad_step_py(a[k], b[k], c[k])
        if s < alpha:
            alpha = s
    return alpha


def _soc_quad_step_py(a, b, c):
    if abs(a) < 1e-300:
        if b < 0.0:
            return -c / b
        return _BIG_STEP
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return _BIG_STEP
    sq = np.sqrt(disc)
    q = -0.5 * (b + sq) if b >= 0.0 else -0.5 * (b - sq)
    best = _BIG_STEP
    r1 = q / a
    if r1 > 0.0 and r1 < best:
        best = r1
    if abs(q) > 0.0:
        r2 = c / q
        if 0.0 < r2 < best:
            best = r2
    return best


def _max_violation_np(s, layout):
    l = layout.l
    worst = float(np.max(-s[:l])) if l else -_BIG_STEP
    if layout.nsoc:
        sv = s[l:]
        tail2 = layout.seg_sum(np.where(layout.heads, 0.0, sv * sv))
        v = np.sqrt(tail2) - sv[layout.starts]
        worst = max(worst, float(np.max(v)))
    return worst


# ---------------------------------------------------------------------------
# public dispatchers


def nt_scaling(s, z, layout: ConeLayout):
    """Nesterov-Todd scaling point of (s, z): orthant diagonal `d`, per-SOC
    `betas` and unit-hyperbolic vectors `wbar`, and the scaled point `lam`."""
    if USING_NUMBA:
        return _nt_scaling_nb(s, z, layout.l, layout.starts, layout.sizes)
    return _nt_scaling_np(s, z, layout)


def apply_scaling(x, d, betas, wbar, layout: ConeLayout, inverse: bool = False):
    """Apply the NT scaling W (or its inverse) blockwise; W is symmetric."""
    if USING_NUMBA:
        return _apply_scaling_nb(x, d, betas, wbar, layout.l, layout.starts,
                                 layout.sizes, inverse)
    return _apply_scaling_np(x, d, betas, wbar, layout, inverse)


def jordan_mul(u, v, layout: ConeLayout):
    if USING_NUMBA:
        return _jordan_mul_nb(u, v, layout.l, layout.starts, layout.sizes)
    return _jordan_mul_np(u, v, layout)


def jordan_solve(lam, r, layout: ConeLayout):
    """Solve lam o u = r for u in the Jordan algebra of the cone product."""
    if USING_NUMBA:
        return _jordan_solve_nb(lam, r, layout.l, layout.starts, layout.sizes)
    return _jordan_solve_np(lam, r, layout)


def step_to_boundary(u, du, layout: ConeLayout) -> float:
    """Largest step alpha with u + alpha*du still in the cone (capped large)."""
    if USING_NUMBA:
        return float(_step_to_boundary_nb(u, du, layout.l, layout.starts, layout.sizes))
    return float(_step_to_boundary_np(u, du, layout))


if USING_NUMBA:

    @_njit(cache=True)
    def _w2_values_nb(d, betas, wbar, l, starts, sizes, inverse):
        total = l
        for k in range(sizes.shape[0]):
            total += sizes[k] * sizes[k]
        out = np.empty(total)
        for i in range(l):
            di = d[i] * d[i]
            out[i] = 1.0 / di if inverse else di
        pos = l
        for k in range(starts.shape[0]):
            o = starts[k]
            n = sizes[k]
            b2 = betas[k] * betas[k]
            scale = 1.0 / b2 if inverse else b2
            # H(v) = 2 v v' - J (use Jv in place of v for the inverse)
            H = np.empty((n, n))
            for r in range(n):
                vr = wbar[o + r]
                if inverse and r > 0:
                    vr = -vr
                for ccc in range(n):
                    vc = wbar[o + ccc]
                    if inverse and ccc > 0:
                        vc = -vc
                    H[r, ccc] = 2.0 * vr * vc
                H[r, r] += -1.0 if r == 0 else 1.0
            for r in range(n):
                for ccc in range(n):
                    acc = 0.0
                    for q in range(n):
                        acc += H[r, q] * H[q, ccc]
                    out[pos + r * n + ccc] = scale * acc
            pos += n * n
        return out


def _w2_values_np(d, betas, wbar, layout, inverse):
    di = d * d
    parts = [1.0 / di if inverse else di]
    chunks = {}
    for k in range(layout.nsoc):
        chunks.setdefault(int(layout.sizes[k]), []).append(k)
    block_vals = [None] * layout.nsoc
    for sz, ks in chunks.items():
        idx = np.array([layout.starts[k] for k in ks])
        V = np.stack([wbar[i:i + sz] for i in idx])
        if inverse:
            V[:, 1:] *= -1.0
        J = np.diag(np.concatenate([[1.0], -np.ones(sz - 1)]))
        H = 2.0 * np.einsum("bi,bj->bij", V, V) - J[None, :, :]
        H2 = np.einsum("bij,bjk->bik", H, H)
        b2 = np.array([betas[k] for k in ks]) ** 2
        H2 *= (1.0 / b2 if inverse else b2)[:, None, None]
        for pos, k in enumerate(ks):
            block_vals[k] = H2[pos].ravel()
    parts.extend(block_vals)
    return np.concatenate(parts) if parts else np.zeros(0)


def w2_values(d, betas, wbar, layout: ConeLayout, inverse: bool):
    """Values of the block-diagonal W^2 (or W^-2) in canonical COO order:
    orthant diagonal entries first, then each SOC block dense row-major."""
    if USING_NUMBA:
        return _w2_values_nb(d, betas, wbar, layout.l, layout.starts,
                             layout.sizes, inverse)
    return _w2_values_np(d, betas, wbar, layout, inverse)


def interior_shift(s, layout: ConeLayout) -> np.ndarray:
    """Shift s onto the cone interior: s + (1 + worst violation) * unit,
    applied only when s is not already safely interior."""
    if USING_NUMBA:
        worst = float(_max_violation_nb(s, layout.l, layout.starts, layout.sizes))
    else:
        worst = _max_violation_np(s, layout)
    if worst >= -1e-8:
        return s + (1.0 + worst) * layout.unit
    return s.copy()


# ---------------------------------------------------------------------------
# brute-force oracle grid scan
#
# Free dimensions (generator outputs except one eliminated unit per
# timestep, storage flows except each unit's last step) are enumerated in
# odometer order; the eliminated quantities follow from the power balance
# and the storage net-zero condition. The scan keeps the first strictly
# better candidate, which makes the winner lexicographically smallest
# among fuel ties in the enumeration order.


def _grid_scan_py(counts, offs, steps, dim_kind, dim_t, dim_unit,
                  T, n_gen, n_st, elim, net_load,
                  g_pmin, g_pmax, g_dr, g_ur, g_a, g_b, g_c, g_pbase,
                  st_cap, st_eta, st_emin, st_emax, st_e0, st_cmax, st_dmax,
                  dt, alpha):
    nd = counts.shape[0]
    total = 1
    for k in range(nd):
        total *= counts[k]
    best_fuel = np.inf
    best = np.full(n_gen * T + n_st * T, np.nan)
    pg = np.empty((T, n_gen))
    pb = np.empty((T, max(n_st, 1)))
    for idx in range(total):
        rem = idx
        for k in range(nd - 1, -1, -1):
            q = rem // counts[k]
            r = rem - q * counts[k]
            rem = q
            val = offs[k] + steps[k] * r
            if dim_kind[k] == 0:
                pg[dim_t[k], dim_unit[k]] = val
            else:
                pb[dim_t[k], dim_unit[k]] = val
        ok = True
        # storage: last step closes the net-zero balance
        for u in range(n_st):
            acc = 0.0
            for t in range(T - 1):
                acc += pb[t, u]
            pb[T - 1, u] = -acc
            e = st_e0[u]
            for t in range(T):
                f = pb[t, u]
                if f < -st_cmax[u] - 1e-12 or f > st_dmax[u] + 1e-12:
                    ok = False
                    break
                e = e - st_eta[u] * f * dt
                if e < st_emin[u] - 1e-9 or e > st_emax[u] + 1e-9:
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            continue
        # eliminated generator covers the residual balance each step
        for t in range(T):
            tot = net_load[t]
            for u in range(n_st):
                tot -= pb[t, u]
            for i in range(n_gen):
                if i != elim:
                    tot -= pg[t, i]
            if tot < g_pmin[elim] - 1e-9 or tot > g_pmax[elim] + 1e-9:
                ok = False
                break
            pg[t, elim] = tot
        if not ok:
            continue
        for i in range(n_gen):
            for t in range(T - 1):
                d = pg[t + 1, i] - pg[t, i]
                if d < -g_dr[i] - 1e-9 or d > g_ur[i] + 1e-9:
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            continue
        fuel = 0.0
        for t in range(T):
            for i in range(n_gen):
                p = pg[t, i] / g_pbase[i]
                eta = g_a[i] * p * p + g_b[i] * p + g_c[i]
                if eta <= 0.0:
                    ok = False
                    break
                fuel += pg[t, i] / eta
            if not ok:
                break
        if not ok:
            continue
        fuel = fuel * dt / alpha
        if fuel < best_fuel:
            best_fuel = fuel
            for t in range(T):
                for i in range(n_gen):
                    best[t * n_gen + i] = pg[t, i]
                for u in range(n_st):
                    best[n_gen * T + t * n_st + u] = pb[t, u]
    return best_fuel, best


if USING_NUMBA:
    _grid_scan_nb = _njit(cache=True)(_grid_scan_py)


def grid_scan(counts, offs, steps, dim_kind, dim_t, dim_unit,
              T, n_gen, n_st, elim, net_load,
              g_pmin, g_pmax, g_dr, g_ur, g_a, g_b, g_c, g_pbase,
              st_cap, st_eta, st_emin, st_emax, st_e0, st_cmax, st_dmax,
              dt, alpha):
    """Exhaustive scan over the free dispatch grid; returns (fuel, schedule).

    `schedule` is generator outputs in (t, unit) order followed by storage
    flows; fuel is +inf when no grid point is feasible.
    """
    args = (counts, offs, steps, dim_kind, dim_t, dim_unit,
            int(T), int(n_gen), int(n_st), int(elim), net_load,
            g_pmin, g_pmax, g_dr, g_ur, g_a, g_b, g_c, g_pbase,
            st_cap, st_eta, st_emin, st_emax, st_e0, st_cmax, st_dmax,
            float(dt), float(alpha))
    if USING_NUMBA:
        return _grid_scan_nb(*args)
    return _grid_scan_py(*args)
