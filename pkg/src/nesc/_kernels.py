"""Compiled fixed-step integrators for quadratic games.

One kernel per controller variant, classical RK4 throughout. All problem
data arrives as plain arrays; nothing is read from module globals (numba
freezes globals at compile time). Each kernel records every stride-th
sample into a preallocated output array and returns

    (recorded, status, bad_index, bad_step)

with status 0 = ok, 1 = non-finite state (bad_index is the flat state
component), 2 = singular scaling matrix (bad_index is the agent).

State layouts match nesc.sim.StateLayout:
    fullinfo  [x(n), u(m)]
    inesc     [x(n), uhat(m), per agent: yhat, etahat, c(k), theta(k), Sigma(k*k)]
    baseline  [x(n), eta(N), xi(N), uhat(N)]
"""

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_SINGULAR = 2

_COND_LIMIT = 1e12


@njit(cache=True)
def _cost_value(Qs, qv, rv, i, x, n):
    y = rv[i]
    for a in range(n):
        acc = 0.0
        for b in range(n):
            acc += Qs[i, a, b] * x[b]
        y += (0.5 * acc + qv[i, a]) * x[a]
    return y


@njit(cache=True)
def _first_nonfinite(z):
    for a in range(z.shape[0]):
        if not np.isfinite(z[a]):
            return a
    return -1


@njit(cache=True)
def integrate_fullinfo(z0, h, steps, stride, out, Jx, g0, B, tau_ch):
    n = Jx.shape[0]
    m = tau_ch.shape[0]
    dim = n + m
    z = z0.copy()
    k1 = np.zeros(dim)
    k2 = np.zeros(dim)
    k3 = np.zeros(dim)
    k4 = np.zeros(dim)
    zt = np.zeros(dim)
    for a in range(dim):
        out[0, a] = z[a]
    rec = 1
    for s in range(steps):
        for stage in range(4):
            if stage == 0:
                src = z
                dst = k1
            elif stage == 1:
                for a in range(dim):
                    zt[a] = z[a] + 0.5 * h * k1[a]
                src = zt
                dst = k2
            elif stage == 2:
                for a in range(dim):
                    zt[a] = z[a] + 0.5 * h * k2[a]
                src = zt
                dst = k3
            else:
                for a in range(dim):
                    zt[a] = z[a] + h * k3[a]
                src = zt
                dst = k4
            for a in range(n):
                acc = -src[a]
                for c in range(m):
                    acc += B[a, c] * src[n + c]
                dst[a] = acc
            for c in range(m):
                acc = 0.0
                for a in range(n):
                    fx_a = g0[a]
                    for b in range(n):
                        fx_a += Jx[a, b] * src[b]
                    acc += B[a, c] * fx_a
                dst[n + c] = -acc / tau_ch[c]
        for a in range(dim):
            z[a] += (h / 6.0) * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a])
        bad = _first_nonfinite(z)
        if bad >= 0:
            return rec, STATUS_NONFINITE, bad, s + 1
        if (s + 1) % stride == 0:
            for a in range(dim):
                out[rec, a] = z[a]
            rec += 1
    return rec, STATUS_OK, -1, -1


@njit(cache=True)
def _inesc_rhs(t, src, dst, Qs, qv, rv, B, n_off, m_off, est_off, k_off,
               tau, amp, freq, phase, K, kT, sigma, th_lo, th_hi, u, w, sloc):
    n = n_off[-1]
    m = m_off[-1]
    N = n_off.shape[0] - 1
    for c in range(m):
        u[c] = src[n + c] + amp[c] * np.sin(freq[c] * t + phase[c])
    for a in range(n):
        acc = -src[a]
        for c in range(m):
            acc += B[a, c] * u[c]
        dst[a] = acc
    for i in range(N):
        k = m_off[i + 1] - m_off[i] + 1
        base = est_off[i]
        y = _cost_value(Qs, qv, rv, i, src, n)
        e = y - src[base]
        eh = src[base + 1]
        # w = c (e - etahat) - sigma theta
        for j in range(k):
            w[j] = src[base + 2 + j] * (e - eh) - sigma[i] * src[base + 2 + k + j]
        # copy Sigma, solve in place (partial-pivot Gaussian elimination)
        maxdiag = 0.0
        for a in range(k):
            for b in range(k):
                sloc[a, b] = src[base + 2 + 2 * k + a * k + b]
            d = abs(sloc[a, a])
            if d > maxdiag:
                maxdiag = d
        for col in range(k):
            p = col
            mx = abs(sloc[col, col])
            for rr in range(col + 1, k):
                v = abs(sloc[rr, col])
                if v > mx:
                    mx = v
                    p = rr
            if p != col:
                for cc in range(k):
                    tmp = sloc[col, cc]
                    sloc[col, cc] = sloc[p, cc]
                    sloc[p, cc] = tmp
                tmp = w[col]
                w[col] = w[p]
                w[p] = tmp
            piv = sloc[col, col]
            apiv = abs(piv)
            if apiv <= 0.0 or maxdiag / apiv > _COND_LIMIT:
                return i + 1
            for rr in range(col + 1, k):
                fac = sloc[rr, col] / piv
                for cc in range(col, k):
                    sloc[rr, cc] -= fac * sloc[col, cc]
                w[rr] -= fac * w[col]
        for rr in range(k - 1, -1, -1):
            acc = w[rr]
            for cc in range(rr + 1, k):
                acc -= sloc[rr, cc] * w[cc]
            w[rr] = acc / sloc[rr, rr]
        # tangent-cone projection at the box
        for j in range(k):
            th = src[base + 2 + k + j]
            if (th <= th_lo[k_off[i] + j] and w[j] < 0.0) or (
                    th >= th_hi[k_off[i] + j] and w[j] > 0.0):
                w[j] = 0.0
        for j in range(k):
            dst[base + 2 + k + j] = w[j]
        # yhat: regressor [1, u_i] dot theta + K e + c dot theta_dot
        acc = src[base + 2 + k]
        for j in range(1, k):
            acc += u[m_off[i] + j - 1] * src[base + 2 + k + j]
        for j in range(k):
            acc += src[base + 2 + j] * w[j]
        dst[base] = acc + K[i] * e
        dst[base + 1] = -K[i] * eh
        dst[base + 2] = -K[i] * src[base + 2] + 1.0
        for j in range(1, k):
            dst[base + 2 + j] = -K[i] * src[base + 2 + j] + u[m_off[i] + j - 1]
        for a in range(k):
            for b in range(k):
                v = src[base + 2 + a] * src[base + 2 + b] \
                    - kT[i] * src[base + 2 + 2 * k + a * k + b]
                if a == b:
                    v += sigma[i]
                dst[base + 2 + 2 * k + a * k + b] = v
        for j in range(1, k):
            dst[n + m_off[i] + j - 1] = -src[base + 2 + k + j] / tau[i]
    return 0


@njit(cache=True)
def integrate_inesc(z0, h, steps, stride, out, Qs, qv, rv, B, n_off, m_off,
                    est_off, k_off, tau, amp, freq, phase, K, kT, sigma,
                    th_lo, th_hi):
    dim = z0.shape[0]
    N = n_off.shape[0] - 1
    m = m_off[-1]
    kmax = 0
    for i in range(N):
        k = m_off[i + 1] - m_off[i] + 1
        if k > kmax:
            kmax = k
    z = z0.copy()
    k1 = np.zeros(dim)
    k2 = np.zeros(dim)
    k3 = np.zeros(dim)
    k4 = np.zeros(dim)
    zt = np.zeros(dim)
    u = np.zeros(m)
    w = np.zeros(kmax)
    sloc = np.zeros((kmax, kmax))
    for a in range(dim):
        out[0, a] = z[a]
    rec = 1
    t = 0.0
    for s in range(steps):
        for stage in range(4):
            if stage == 0:
                tt = t
                src = z
                dst = k1
            elif stage == 1:
                tt = t + 0.5 * h
                for a in range(dim):
                    zt[a] = z[a] + 0.5 * h * k1[a]
                src = zt
                dst = k2
            elif stage == 2:
                tt = t + 0.5 * h
                for a in range(dim):
                    zt[a] = z[a] + 0.5 * h * k2[a]
                src = zt
                dst = k3
            else:
                tt = t + h
                for a in range(dim):
                    zt[a] = z[a] + h * k3[a]
                src = zt
                dst = k4
            sing = _inesc_rhs(tt, src, dst, Qs, qv, rv, B, n_off, m_off,
                              est_off, k_off, tau, amp, freq, phase,
                              K, kT, sigma, th_lo, th_hi, u, w, sloc)
            if sing != 0:
                return rec, STATUS_SINGULAR, sing - 1, s + 1
        for a in range(dim):
            z[a] += (h / 6.0) * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a])
        # post-step hooks: clamp theta to its box, re-symmetrize Sigma
        for i in range(N):
            k = m_off[i + 1] - m_off[i] + 1
            base = est_off[i]
            for j in range(k):
                lo = th_lo[k_off[i] + j]
                hi = th_hi[k_off[i] + j]
                if z[base + 2 + k + j] < lo:
                    z[base + 2 + k + j] = lo
                elif z[base + 2 + k + j] > hi:
                    z[base + 2 + k + j] = hi
            for a in range(k):
                for b in range(a + 1, k):
                    av = 0.5 * (z[base + 2 + 2 * k + a * k + b]
                                + z[base + 2 + 2 * k + b * k + a])
                    z[base + 2 + 2 * k + a * k + b] = av
                    z[base + 2 + 2 * k + b * k + a] = av
        bad = _first_nonfinite(z)
        if bad >= 0:
            return rec, STATUS_NONFINITE, bad, s + 1
        t = (s + 1) * h
        if (s + 1) % stride == 0:
            for a in range(dim):
                out[rec, a] = z[a]
            rec += 1
    return rec, STATUS_OK, -1, -1


@njit(cache=True)
def integrate_baseline(z0, h, steps, stride, out, Qs, qv, rv, B, n_off,
                       omega_h, omega_l, omega, kgain, A):
    n = n_off[-1]
    N = n_off.shape[0] - 1
    dim = n + 3 * N
    z = z0.copy()
    k1 = np.zeros(dim)
    k2 = np.zeros(dim)
    k3 = np.zeros(dim)
    k4 = np.zeros(dim)
    zt = np.zeros(dim)
    for a in range(dim):
        out[0, a] = z[a]
    rec = 1
    t = 0.0
    for s in range(steps):
        for stage in range(4):
            if stage == 0:
                tt = t
                src = z
                dst = k1
            elif stage == 1:
                tt = t + 0.5 * h
                for a in range(dim):
                    zt[a] = z[a] + 0.5 * h * k1[a]
                src = zt
                dst = k2
            elif stage == 2:
                tt = t + 0.5 * h
                for a in range(dim):
                    zt[a] = z[a] + 0.5 * h * k2[a]
                src = zt
                dst = k3
            else:
                tt = t + h
                for a in range(dim):
                    zt[a] = z[a] + h * k3[a]
                src = zt
                dst = k4
            for a in range(n):
                acc = -src[a]
                for i in range(N):
                    acc += B[a, i] * (src[n + 2 * N + i]
                                      + A[i] * np.sin(omega[i] * tt))
                dst[a] = acc
            for i in range(N):
                y = _cost_value(Qs, qv, rv, i, src, n)
                eta = src[n + i]
                xi = src[n + N + i]
                probe = A[i] * np.sin(omega[i] * tt)
                dst[n + i] = -omega_h[i] * eta + omega_h[i] * y
                dst[n + N + i] = -omega_l[i] * xi + omega_l[i] * (y - eta) * probe
                dst[n + 2 * N + i] = -kgain[i] * A[i] * xi
        for a in range(dim):
            z[a] += (h / 6.0) * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a])
        bad = _first_nonfinite(z)
        if bad >= 0:
            return rec, STATUS_NONFINITE, bad, s + 1
        t = (s + 1) * h
        if (s + 1) % stride == 0:
            for a in range(dim):
                out[rec, a] = z[a]
            rec += 1
    return rec, STATUS_OK, -1, -1
