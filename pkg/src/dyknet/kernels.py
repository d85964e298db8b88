"""Hot numerical kernels shared by the protocol, metrics and run loop.

Every function in this module is written as plain scalar/loop code so the
same source can run two ways:

* compiled with ``numba.njit(cache=True)`` (the default when numba imports),
* as ordinary Python over numpy arrays (the fallback path).

Set ``DYKNET_NUMBA=0`` in the environment to force the fallback.  Reductions
are explicit loops rather than ``np.sum``/``np.dot`` on purpose: both
backends then execute the exact same floating-point operation order, so a
simulation produces bit-identical output no matter which path runs.

Function variants are encoded as small integers (see ``FN_*``), with the
parameters packed into per-node rows: ``fn_v`` holds the rank-one direction
of a quadratic or the gradient of an affine, ``fn_r`` the ridge, ``fn_b``
the quadratic's linear term and ``fn_c`` the scalar offset.
"""

import math
import os

import numpy as np


def _numba_requested() -> bool:
    flag = os.environ.get("DYKNET_NUMBA", "auto").strip().lower()
    if flag in ("0", "false", "off", "no"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = _numba_requested()

if NUMBA_ENABLED:
    from numba import njit as _njit

    def _jit(fn):
        return _njit(cache=True)(fn)

else:

    def _jit(fn):
        return fn


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "python"


# event tags
EV_BROADCAST = 0
EV_DELIVER = 1
EV_LOCAL_MIN = 2

# objective variants
FN_ZERO = 0
FN_AFFINE = 1
FN_QUADRATIC = 2

# node treatments
TREAT_PROX = 0
TREAT_SUBDIFF = 1

# status codes returned by kernels
OK = 0
UNSTABLE_WEIGHT = 1      # node weight below S_FLOOR in a local-min step
CONJUGATE_DOMAIN = 2     # dual variable left the conjugate's domain

S_FLOOR = 1e-12
CONJ_RTOL = 1e-9


@_jit
def dot(u, w):
    t = 0.0
    for k in range(u.shape[0]):
        t += u[k] * w[k]
    return t


@_jit
def sqnorm(u):
    t = 0.0
    for k in range(u.shape[0]):
        t += u[k] * u[k]
    return t


@_jit
def ridge_solve(v, ridge, w):
    # solve (v v^T + ridge I) out = w by rank-one downdate, O(m)
    vv = sqnorm(v)
    vw = dot(v, w)
    coef = vw / (ridge * (ridge + vv))
    out = np.empty(w.shape[0])
    for k in range(w.shape[0]):
        out[k] = w[k] / ridge - v[k] * coef
    return out


@_jit
def quad_value(v, r, b, c, x):
    vx = dot(v, x)
    return 0.5 * (vx * vx + r * sqnorm(x)) + dot(b, x) + c


@_jit
def quad_gradient(v, r, b, x):
    vx = dot(v, x)
    out = np.empty(x.shape[0])
    for k in range(x.shape[0]):
        out[k] = v[k] * vx + r * x[k] + b[k]
    return out


@_jit
def quad_conjugate(v, r, b, c, z):
    u = np.empty(z.shape[0])
    for k in range(z.shape[0]):
        u[k] = z[k] - b[k]
    t = ridge_solve(v, r, u)
    return 0.5 * dot(u, t) - c


@_jit
def fn_value(kind, v, r, b, c, x):
    if kind == FN_ZERO:
        return 0.0
    if kind == FN_AFFINE:
        return dot(v, x) + c
    return quad_value(v, r, b, c, x)


@_jit
def fn_subgradient(kind, v, r, b, c, x):
    if kind == FN_ZERO:
        return np.zeros(x.shape[0])
    if kind == FN_AFFINE:
        return v.copy()
    return quad_gradient(v, r, b, x)


@_jit
def fn_prox(kind, v, r, b, c, s, center):
    # argmin_x f(x) + (s/2) ||x - center||^2
    if kind == FN_ZERO:
        return center.copy()
    if kind == FN_AFFINE:
        out = np.empty(center.shape[0])
        for k in range(center.shape[0]):
            out[k] = center[k] - v[k] / s
        return out
    w = np.empty(center.shape[0])
    for k in range(center.shape[0]):
        w[k] = s * center[k] - b[k]
    return ridge_solve(v, r + s, w)


@_jit
def fn_conjugate(kind, v, r, b, c, z):
    if kind == FN_ZERO:
        if math.sqrt(sqnorm(z)) > CONJ_RTOL:
            return np.nan, CONJUGATE_DOMAIN
        return 0.0, OK
    if kind == FN_AFFINE:
        d2 = 0.0
        for k in range(z.shape[0]):
            d2 += (z[k] - v[k]) * (z[k] - v[k])
        if math.sqrt(d2) > CONJ_RTOL * (1.0 + math.sqrt(sqnorm(v))):
            return np.nan, CONJUGATE_DOMAIN
        return -c, OK
    return quad_conjugate(v, r, b, c, z), OK


@_jit
def bundle_argmin(a1, b1, a2, b2, s, center):
    """Minimize max(a1.x+b1, a2.x+b2) + (s/2)||x-center||^2 exactly.

    Returns the minimizer and the max-of-pieces value there.  Tries each
    piece's unconstrained minimizer first; if neither is feasible for the
    max, the solution sits on the kink set and the active convex
    combination of gradients has a closed form.
    """
    m = a1.shape[0]
    x1 = np.empty(m)
    for k in range(m):
        x1[k] = center[k] - a1[k] / s
    f1x1 = dot(a1, x1) + b1
    f2x1 = dot(a2, x1) + b2
    if f1x1 >= f2x1:
        return x1, f1x1
    x2 = np.empty(m)
    for k in range(m):
        x2[k] = center[k] - a2[k] / s
    f2x2 = dot(a2, x2) + b2
    f1x2 = dot(a1, x2) + b1
    if f2x2 >= f1x2:
        return x2, f2x2
    d = np.empty(m)
    for k in range(m):
        d[k] = a1[k] - a2[k]
    dn2 = sqnorm(d)
    theta = s * (dot(d, center) + b1 - b2 - dot(d, a2) / s) / dn2
    if theta < 0.0:
        theta = 0.0
    elif theta > 1.0:
        theta = 1.0
    x = np.empty(m)
    for k in range(m):
        x[k] = center[k] - (theta * a1[k] + (1.0 - theta) * a2[k]) / s
    f1x = dot(a1, x) + b1
    f2x = dot(a2, x) + b2
    return x, max(f1x, f2x)


@_jit
def apply_broadcast(i, y, s, sigma_y, sigma_s, x, deg_out):
    d = float(deg_out[i] + 1)
    m = y.shape[1]
    s[i] = s[i] / d
    sigma_s[i] = sigma_s[i] + s[i]
    for k in range(m):
        y[i, k] = y[i, k] / d
        sigma_y[i, k] = sigma_y[i, k] + y[i, k]
        x[i, k] = y[i, k] / s[i]


@_jit
def apply_deliver(e, y, s, sigma_y, sigma_s, rho_y, rho_s, x, edge_src, edge_dst):
    i = edge_src[e]
    j = edge_dst[e]
    m = y.shape[1]
    s[j] = s[j] + (sigma_s[i] - rho_s[e])
    rho_s[e] = sigma_s[i]
    for k in range(m):
        y[j, k] = y[j, k] + (sigma_y[i, k] - rho_y[e, k])
        rho_y[e, k] = sigma_y[i, k]
        x[j, k] = y[j, k] / s[j]


@_jit
def apply_local_min(j, y, s, z, x, mino_a, mino_b, treat,
                    fn_kind, fn_v, fn_r, fn_b, fn_c):
    sj = s[j]
    if sj < S_FLOOR:
        return UNSTABLE_WEIGHT
    m = y.shape[1]
    w = np.empty(m)
    xt = np.empty(m)
    for k in range(m):
        w[k] = y[j, k] + z[j, k]
        xt[k] = w[k] / sj
    peak = 0.0
    if treat[j] == TREAT_PROX:
        xn = fn_prox(fn_kind[j], fn_v[j], fn_r[j], fn_b[j], fn_c[j], sj, xt)
    else:
        g = fn_subgradient(fn_kind[j], fn_v[j], fn_r[j], fn_b[j], fn_c[j], x[j])
        toff = fn_value(fn_kind[j], fn_v[j], fn_r[j], fn_b[j], fn_c[j], x[j]) - dot(g, x[j])
        xn, peak = bundle_argmin(mino_a[j], mino_b[j], g, toff, sj, xt)
    # z := w - s*x keeps y + z bit-exactly conserved across the step
    for k in range(m):
        t = sj * xn[k]
        z[j, k] = w[k] - t
        y[j, k] = t
        x[j, k] = xn[k]
    if treat[j] == TREAT_SUBDIFF:
        for k in range(m):
            mino_a[j, k] = z[j, k]
        mino_b[j] = peak - dot(z[j], xn)
    return OK


@_jit
def apply_event(tag, arg, y, s, sigma_y, sigma_s, rho_y, rho_s, z, x,
                mino_a, mino_b, treat, fn_kind, fn_v, fn_r, fn_b, fn_c,
                deg_out, edge_src, edge_dst):
    if tag == EV_BROADCAST:
        apply_broadcast(arg, y, s, sigma_y, sigma_s, x, deg_out)
        return OK
    if tag == EV_DELIVER:
        apply_deliver(arg, y, s, sigma_y, sigma_s, rho_y, rho_s, x, edge_src, edge_dst)
        return OK
    return apply_local_min(arg, y, s, z, x, mino_a, mino_b, treat,
                           fn_kind, fn_v, fn_r, fn_b, fn_c)


@_jit
def dual_surrogate_value(y, s, sigma_y, sigma_s, rho_y, rho_s, z, x,
                         mino_a, mino_b, treat, fn_kind, fn_v, fn_r, fn_b, fn_c,
                         edge_src):
    n = y.shape[0]
    m = y.shape[1]
    tot = 0.0
    for i in range(n):
        if treat[i] == TREAT_SUBDIFF:
            d2 = 0.0
            for k in range(m):
                d2 += (z[i, k] - mino_a[i, k]) * (z[i, k] - mino_a[i, k])
            if math.sqrt(d2) > CONJ_RTOL * (1.0 + math.sqrt(sqnorm(mino_a[i]))):
                return np.nan, CONJUGATE_DOMAIN
            tot += -mino_b[i]
        else:
            val, st = fn_conjugate(fn_kind[i], fn_v[i], fn_r[i], fn_b[i], fn_c[i], z[i])
            if st != OK:
                return np.nan, st
            tot += val
        tot += 0.5 * s[i] * sqnorm(x[i])
    for e in range(edge_src.shape[0]):
        i = edge_src[e]
        fs = sigma_s[i] - rho_s[e]
        if fs > 0.0:
            fy2 = 0.0
            for k in range(m):
                fy2 += (sigma_y[i, k] - rho_y[e, k]) * (sigma_y[i, k] - rho_y[e, k])
            tot += 0.5 * fy2 / fs
    return tot, OK


@_jit
def s_weighted_error_value(s, sigma_y, sigma_s, rho_y, rho_s, x, x_star, edge_src):
    n = x.shape[0]
    m = x.shape[1]
    tot = 0.0
    for i in range(n):
        d2 = 0.0
        for k in range(m):
            d2 += (x_star[k] - x[i, k]) * (x_star[k] - x[i, k])
        tot += 0.5 * s[i] * d2
    for e in range(edge_src.shape[0]):
        i = edge_src[e]
        fs = sigma_s[i] - rho_s[e]
        if fs > 0.0:
            d2 = 0.0
            for k in range(m):
                xe = (sigma_y[i, k] - rho_y[e, k]) / fs
                d2 += (x_star[k] - xe) * (x_star[k] - xe)
            tot += 0.5 * fs * d2
    return tot


@_jit
def consensus_residual_value(x):
    n = x.shape[0]
    m = x.shape[1]
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            d2 = 0.0
            for k in range(m):
                d2 += (x[i, k] - x[j, k]) * (x[i, k] - x[j, k])
            if d2 > worst:
                worst = d2
    return math.sqrt(worst)


@_jit
def conservation_residuals(y, s, sigma_y, sigma_s, rho_y, rho_s, z, mbar, edge_src):
    n = y.shape[0]
    m = y.shape[1]
    ws = 0.0
    for i in range(n):
        ws += s[i]
    for e in range(edge_src.shape[0]):
        ws += sigma_s[edge_src[e]] - rho_s[e]
    wres = abs(ws - float(n))
    mres2 = 0.0
    for k in range(m):
        acc = 0.0
        for i in range(n):
            acc += y[i, k] + z[i, k]
        for e in range(edge_src.shape[0]):
            acc += sigma_y[edge_src[e], k] - rho_y[e, k]
        acc -= float(n) * mbar[k]
        mres2 += acc * acc
    return wres, math.sqrt(mres2)


@_jit
def total_weight(s, sigma_s, rho_s, edge_src):
    t = 0.0
    for i in range(s.shape[0]):
        t += s[i]
    for e in range(edge_src.shape[0]):
        t += sigma_s[edge_src[e]] - rho_s[e]
    return t


@_jit
def metrics_row(out, row, y, s, sigma_y, sigma_s, rho_y, rho_s, z, x,
                mino_a, mino_b, treat, fn_kind, fn_v, fn_r, fn_b, fn_c,
                edge_src, mbar, x_star, sum_f_star):
    surr, st = dual_surrogate_value(y, s, sigma_y, sigma_s, rho_y, rho_s, z, x,
                                    mino_a, mino_b, treat, fn_kind, fn_v, fn_r,
                                    fn_b, fn_c, edge_src)
    if st != OK:
        return st
    n = y.shape[0]
    m = y.shape[1]
    d2 = 0.0
    m2 = 0.0
    for k in range(m):
        d2 += (x_star[k] - mbar[k]) * (x_star[k] - mbar[k])
        m2 += mbar[k] * mbar[k]
    tw = total_weight(s, sigma_s, rho_s, edge_src)
    gap = 0.5 * tw * d2 + sum_f_star - 0.5 * float(n) * m2 + surr
    serr = s_weighted_error_value(s, sigma_y, sigma_s, rho_y, rho_s, x, x_star, edge_src)
    cres = consensus_residual_value(x)
    wres, mres = conservation_residuals(y, s, sigma_y, sigma_s, rho_y, rho_s, z,
                                        mbar, edge_src)
    out[row, 0] = surr
    out[row, 1] = gap
    out[row, 2] = serr
    out[row, 3] = cres
    out[row, 4] = wres
    out[row, 5] = mres
    return OK


@_jit
def run_chunk(ev_tag, ev_arg, y, s, sigma_y, sigma_s, rho_y, rho_s, z, x,
              mino_a, mino_b, treat, fn_kind, fn_v, fn_r, fn_b, fn_c,
              deg_out, edge_src, edge_dst, mbar, x_star, sum_f_star,
              out, record_each):
    """Apply a batch of encoded events, filling metric rows as requested.

    Returns ``(status, position)``; position is the index of the offending
    event when status is nonzero, -1 otherwise.
    """
    for t in range(ev_tag.shape[0]):
        st = apply_event(ev_tag[t], ev_arg[t], y, s, sigma_y, sigma_s, rho_y,
                         rho_s, z, x, mino_a, mino_b, treat, fn_kind, fn_v,
                         fn_r, fn_b, fn_c, deg_out, edge_src, edge_dst)
        if st != OK:
            return st, t
        if record_each:
            st = metrics_row(out, t, y, s, sigma_y, sigma_s, rho_y, rho_s, z, x,
                             mino_a, mino_b, treat, fn_kind, fn_v, fn_r, fn_b,
                             fn_c, edge_src, mbar, x_star, sum_f_star)
            if st != OK:
                return st, t
    if not record_each:
        st = metrics_row(out, 0, y, s, sigma_y, sigma_s, rho_y, rho_s, z, x,
                         mino_a, mino_b, treat, fn_kind, fn_v, fn_r, fn_b,
                         fn_c, edge_src, mbar, x_star, sum_f_star)
        if st != OK:
            return st, ev_tag.shape[0] - 1
    return OK, -1
