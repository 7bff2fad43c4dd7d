# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 kernel for H = h(p) - eps2*G(t,q,p) with polynomial h and
polynomial-coefficient Fourier G.  Mirrors ``_pykernels.rk4`` term for term."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, isfinite, INFINITY

cnp.import_array()

cdef enum:
    MAXN = 8
    MAXD = 16

cdef double TWO_PI = 6.283185307179586


cdef inline double _ipow(double x, int e) noexcept nogil:
    cdef double r = 1.0
    cdef int i
    if e < 0:
        return 0.0
    for i in range(e):
        r *= x
    return r


cdef struct Model:
    int n
    int nh
    int ng
    const double* hc
    const int* he
    const int* gk
    const double* ga
    const double* gb
    const int* ge
    const double* p0
    double eps2


cdef void _field(Model* M, double t, const double* y, double* dy, double* jac,
                 double* dtg, bint want_jac) noexcept nogil:
    cdef int n = M.n
    cdef int d = 2 * n
    cdef int i, k, j, l
    cdef double gh[MAXN]
    cdef double Hh[MAXN * MAXN]
    cdef double Gq[MAXN]
    cdef double Gp[MAXN]
    cdef double Gqq[MAXN * MAXN]
    cdef double Gqp[MAXN * MAXN]
    cdef double Gpp[MAXN * MAXN]
    cdef double dp[MAXN]
    cdef double dP[MAXN]
    cdef double ddP[MAXN * MAXN]
    cdef double Gt = 0.0
    cdef double c, v, phase, cs, sn, T, Tp, P
    cdef const int* e
    cdef const int* kk

    for i in range(n):
        gh[i] = 0.0
        Gq[i] = 0.0
        Gp[i] = 0.0
        dp[i] = y[n + i] - M.p0[i]
        for k in range(n):
            Hh[i * n + k] = 0.0
            Gqq[i * n + k] = 0.0
            Gqp[i * n + k] = 0.0
            Gpp[i * n + k] = 0.0

    # integrable part
    for j in range(M.nh):
        c = M.hc[j]
        e = M.he + j * n
        for i in range(n):
            if e[i] == 0:
                continue
            v = c * e[i]
            for l in range(n):
                v *= _ipow(y[n + l], e[l] - 1 if l == i else e[l])
            gh[i] += v
            if want_jac:
                for k in range(i, n):
                    if k == i:
                        if e[i] < 2:
                            continue
                        v = c * e[i] * (e[i] - 1)
                        for l in range(n):
                            v *= _ipow(y[n + l], e[l] - 2 if l == i else e[l])
                    else:
                        if e[k] == 0:
                            continue
                        v = c * e[i] * e[k]
                        for l in range(n):
                            v *= _ipow(y[n + l], e[l] - 1 if (l == i or l == k) else e[l])
                    Hh[i * n + k] += v
                    if k != i:
                        Hh[k * n + i] += v

    # perturbation
    for j in range(M.ng):
        kk = M.gk + j * (n + 1)
        e = M.ge + j * n
        phase = kk[0] * t
        for i in range(n):
            phase += kk[1 + i] * y[i]
        phase *= TWO_PI
        cs = cos(phase)
        sn = sin(phase)
        T = M.ga[j] * cs + M.gb[j] * sn
        Tp = M.gb[j] * cs - M.ga[j] * sn
        P = 1.0
        for l in range(n):
            P *= _ipow(dp[l], e[l])
        for i in range(n):
            if e[i] == 0:
                dP[i] = 0.0
            else:
                v = e[i]
                for l in range(n):
                    v *= _ipow(dp[l], e[l] - 1 if l == i else e[l])
                dP[i] = v
        Gt += TWO_PI * kk[0] * P * Tp
        for i in range(n):
            Gq[i] += TWO_PI * kk[1 + i] * P * Tp
            Gp[i] += dP[i] * T
        if want_jac:
            for i in range(n):
                for k in range(i, n):
                    if k == i:
                        if e[i] < 2:
                            v = 0.0
                        else:
                            v = e[i] * (e[i] - 1)
                            for l in range(n):
                                v *= _ipow(dp[l], e[l] - 2 if l == i else e[l])
                    else:
                        if e[i] == 0 or e[k] == 0:
                            v = 0.0
                        else:
                            v = e[i] * e[k]
                            for l in range(n):
                                v *= _ipow(dp[l], e[l] - 1 if (l == i or l == k) else e[l])
                    ddP[i * n + k] = v
                    ddP[k * n + i] = v
            for i in range(n):
                for k in range(n):
                    Gqq[i * n + k] -= TWO_PI * TWO_PI * kk[1 + i] * kk[1 + k] * P * T
                    Gqp[i * n + k] += TWO_PI * kk[1 + i] * Tp * dP[k]
                    Gpp[i * n + k] += ddP[i * n + k] * T

    for i in range(n):
        dy[i] = gh[i] - M.eps2 * Gp[i]
        dy[n + i] = M.eps2 * Gq[i]
    dtg[0] = M.eps2 * Gt
    if want_jac:
        for i in range(n):
            for k in range(n):
                jac[i * d + k] = -M.eps2 * Gqp[k * n + i]
                jac[i * d + n + k] = Hh[i * n + k] - M.eps2 * Gpp[i * n + k]
                jac[(n + i) * d + k] = M.eps2 * Gqq[i * n + k]
                jac[(n + i) * d + n + k] = M.eps2 * Gqp[i * n + k]


cdef void _matmul(const double* A, const double* B, double* C, int d) noexcept nogil:
    cdef int i, j, k
    cdef double s
    for i in range(d):
        for j in range(d):
            s = 0.0
            for k in range(d):
                s += A[i * d + k] * B[k * d + j]
            C[i * d + j] = s


def field(model, t, y, double eps2, bint want_jac=False):
    """Vector field for a batch; same return convention as ``_pykernels.field``."""
    cdef double[:, ::1] Y = np.array(y, dtype=np.float64, order="C")
    cdef Py_ssize_t N = Y.shape[0]
    cdef double[::1] T = np.array(np.broadcast_to(np.asarray(t, dtype=np.float64), (N,)), order="C")
    cdef Model M
    arrays = _bind(model, eps2, &M)
    d = 2 * M.n
    out = np.empty((N, d))
    jac = np.empty((N, d, d)) if want_jac else np.empty((N, 1, 1))
    dtg = np.empty(N)
    cdef double[:, ::1] O = out
    cdef double[:, :, ::1] Jm = jac
    cdef double[::1] G = dtg
    cdef Py_ssize_t a
    with nogil:
        for a in range(N):
            _field(&M, T[a], &Y[a, 0], &O[a, 0], &Jm[a, 0, 0], &G[a], want_jac)
    return out, (jac if want_jac else None), dtg


cdef object _bind(model, double eps2, Model* M):
    n = int(model.n)
    if n > MAXN:
        raise ValueError(f"compiled kernel supports n <= {MAXN}")
    hc = np.array(model.hc, dtype=np.float64, order="C")
    he = np.array(model.he, dtype=np.int32, order="C")
    gk = np.array(model.gk, dtype=np.int32, order="C")
    ga = np.array(model.ga, dtype=np.float64, order="C")
    gb = np.array(model.gb, dtype=np.float64, order="C")
    ge = np.array(model.ge, dtype=np.int32, order="C")
    p0 = np.array(model.p0, dtype=np.float64, order="C")
    cdef double[::1] hc_v = hc if hc.size else np.zeros(1)
    cdef int[::1] he_v = he.ravel() if he.size else np.zeros(1, np.int32)
    cdef int[::1] gk_v = gk.ravel() if gk.size else np.zeros(1, np.int32)
    cdef double[::1] ga_v = ga if ga.size else np.zeros(1)
    cdef double[::1] gb_v = gb if gb.size else np.zeros(1)
    cdef int[::1] ge_v = ge.ravel() if ge.size else np.zeros(1, np.int32)
    cdef double[::1] p0_v = p0
    M.n = n
    M.nh = hc.shape[0]
    M.ng = ga.shape[0]
    M.hc = &hc_v[0]
    M.he = &he_v[0]
    M.gk = &gk_v[0]
    M.ga = &ga_v[0]
    M.gb = &gb_v[0]
    M.ge = &ge_v[0]
    M.p0 = &p0_v[0]
    M.eps2 = eps2
    # keep buffers alive for the caller's scope
    return (hc_v, he_v, gk_v, ga_v, gb_v, ge_v, p0_v)


def rk4(model, y0, t0, double h, long nsteps, double eps2, bint tangent=False,
        box_lo=None, box_hi=None, long record_every=0):
    """Fixed-step RK4 for a batch; same return convention as ``_pykernels.rk4``."""
    cdef Model M
    arrays = _bind(model, eps2, &M)
    cdef int d = 2 * M.n
    y = np.array(y0, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t N = y.shape[0]
    if y.shape[1] != d:
        raise ValueError("state dimension mismatch")
    tt = np.array(np.broadcast_to(np.asarray(t0, dtype=np.float64), (N,)), order="C")
    lo = np.full(d, -INFINITY) if box_lo is None else np.array(box_lo, dtype=np.float64, order="C")
    hi = np.full(d, INFINITY) if box_hi is None else np.array(box_hi, dtype=np.float64, order="C")
    jac = np.empty((N, d, d)) if tangent else np.empty((N, 1, 1))
    e = np.zeros(N)
    escape = np.full(N, -1, dtype=np.int64)
    cdef long nrec = nsteps // record_every + 1 if record_every > 0 else 1
    rec = np.empty((N, nrec, d)) if record_every > 0 else np.empty((N, 1, 1))

    cdef double[:, ::1] Y = y
    cdef double[::1] T0 = tt
    cdef double[::1] LO = lo
    cdef double[::1] HI = hi
    cdef double[:, :, ::1] JJ = jac
    cdef double[::1] E = e
    cdef long long[::1] ESC = escape
    cdef double[:, :, ::1] REC = rec

    cdef double k1[MAXD]
    cdef double k2[MAXD]
    cdef double k3[MAXD]
    cdef double k4[MAXD]
    cdef double tmp[MAXD]
    cdef double J1[MAXD * MAXD]
    cdef double J2[MAXD * MAXD]
    cdef double J3[MAXD * MAXD]
    cdef double J4[MAXD * MAXD]
    cdef double W[MAXD * MAXD]
    cdef double M1[MAXD * MAXD]
    cdef double M2[MAXD * MAXD]
    cdef double M3[MAXD * MAXD]
    cdef double M4[MAXD * MAXD]
    cdef double Wt[MAXD * MAXD]
    cdef double g1, g2, g3, g4, t, ee
    cdef Py_ssize_t a
    cdef long s
    cdef int i, dd = d * d
    cdef bint out
    cdef bint check = bool(np.isfinite(lo).any() or np.isfinite(hi).any())
    cdef double* yy

    with nogil:
        for a in range(N):
            yy = &Y[a, 0]
            t = T0[a]
            ee = 0.0
            if tangent:
                for i in range(dd):
                    W[i] = 0.0
                for i in range(d):
                    W[i * d + i] = 1.0
            if record_every > 0:
                for i in range(d):
                    REC[a, 0, i] = yy[i]
            for s in range(nsteps):
                _field(&M, t, yy, k1, J1, &g1, tangent)
                for i in range(d):
                    tmp[i] = yy[i] + 0.5 * h * k1[i]
                _field(&M, t + 0.5 * h, tmp, k2, J2, &g2, tangent)
                for i in range(d):
                    tmp[i] = yy[i] + 0.5 * h * k2[i]
                _field(&M, t + 0.5 * h, tmp, k3, J3, &g3, tangent)
                for i in range(d):
                    tmp[i] = yy[i] + h * k3[i]
                _field(&M, t + h, tmp, k4, J4, &g4, tangent)
                if tangent:
                    _matmul(J1, W, M1, d)
                    for i in range(dd):
                        Wt[i] = W[i] + 0.5 * h * M1[i]
                    _matmul(J2, Wt, M2, d)
                    for i in range(dd):
                        Wt[i] = W[i] + 0.5 * h * M2[i]
                    _matmul(J3, Wt, M3, d)
                    for i in range(dd):
                        Wt[i] = W[i] + h * M3[i]
                    _matmul(J4, Wt, M4, d)
                    for i in range(dd):
                        W[i] = W[i] + (h / 6.0) * (M1[i] + 2.0 * M2[i] + 2.0 * M3[i] + M4[i])
                for i in range(d):
                    yy[i] = yy[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                ee = ee + (h / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4)
                t = t + h
                if record_every > 0 and (s + 1) % record_every == 0:
                    for i in range(d):
                        REC[a, (s + 1) // record_every, i] = yy[i]
                if check:
                    out = False
                    for i in range(d):
                        if yy[i] < LO[i] or yy[i] > HI[i]:
                            out = True
                    if out:
                        ESC[a] = s + 1
                        if record_every > 0:
                            # frozen state fills the remaining record slots
                            for s in range((s + 1) // record_every + 1, nrec):
                                for i in range(d):
                                    REC[a, s, i] = yy[i]
                        break
            E[a] = ee
            if tangent:
                for i in range(dd):
                    JJ[a, i // d, i % d] = W[i]
    return y, (jac if tangent else None), e, escape, (rec if record_every > 0 else None)
