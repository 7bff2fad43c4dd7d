"""Pure-numpy kernels: Hamiltonian field of H = h(p) - eps2*G(t,q,p) and batched RK4.

Semantics match the compiled ``_kernels`` module exactly; this module is the fallback
when the extension is unavailable and the reference the compiled code is tested against.
"""
import numpy as np

TWO_PI = 2.0 * np.pi


def _monomials(x, E, order):
    """Values, gradients and Hessians of prod_i x_i^E[j,i] for each row j of E.

    x (N, n), E (J, n) -> (N, J), (N, J, n), (N, J, n, n)
    """
    N, n = x.shape
    J = E.shape[0]
    emax = int(E.max()) if E.size else 0
    # pw[k] = x**k for k = 0..emax
    pw = np.ones((emax + 1, N, n))
    for k in range(1, emax + 1):
        pw[k] = pw[k - 1] * x
    cols = np.arange(n)

    def base(shift):
        e = E[None, :, :] - shift  # (1|.., J, n)
        idx = np.clip(e, 0, emax)
        vals = pw[idx, np.arange(N)[:, None, None], cols[None, None, :]]
        return np.where(e < 0, 0.0, vals)

    pv = base(0)  # (N, J, n)
    val = np.prod(pv, axis=-1)
    if order == 0:
        return val, None, None
    grad = np.empty((N, J, n))
    hess = np.empty((N, J, n, n)) if order > 1 else None
    pv1 = base(1)
    pv2 = base(2) if order > 1 else None
    for i in range(n):
        f = pv.copy()
        f[:, :, i] = pv1[:, :, i] * E[None, :, i]
        grad[:, :, i] = np.prod(f, axis=-1)
        if order > 1:
            for k in range(i, n):
                g = pv.copy()
                if k == i:
                    g[:, :, i] = pv2[:, :, i] * (E[None, :, i] * (E[None, :, i] - 1))
                else:
                    g[:, :, i] = pv1[:, :, i] * E[None, :, i]
                    g[:, :, k] = pv1[:, :, k] * E[None, :, k]
                hess[:, :, i, k] = np.prod(g, axis=-1)
                hess[:, :, k, i] = hess[:, :, i, k]
    return val, grad, hess


def h_derivs(model, p):
    """Gradient (N,n) and Hessian (N,n,n) of the integrable part."""
    _, g, H = _monomials(p, model.he, 2)
    return np.einsum("njk,j->nk", g, model.hc), np.einsum("njkl,j->nkl", H, model.hc)


def h_value(model, p):
    v, _, _ = _monomials(p, model.he, 0)
    return v @ model.hc


def g_derivs(model, t, q, p, order=1):
    """Derivatives of G at (t, q, p), each summed over terms.

    Returns dict with keys G, Gt, Gq (N,n), Gp (N,n) and for order 2 also
    Gqq, Gqp (d/dq_i d/dp_j), Gpp (N,n,n).
    """
    K, A, B, E = model.gk, model.ga, model.gb, model.ge
    N = len(t)
    n = model.n
    if len(A) == 0:
        z1, z2 = np.zeros((N, n)), np.zeros((N, n, n))
        out = dict(G=np.zeros(N), Gt=np.zeros(N), Gq=z1, Gp=z1.copy())
        if order > 1:
            out.update(Gqq=z2, Gqp=z2.copy(), Gpp=z2.copy())
        return out
    kt = K[:, 0].astype(float)
    kq = K[:, 1:].astype(float)
    phase = TWO_PI * (t[:, None] * kt[None, :] + q @ kq.T)
    c, s = np.cos(phase), np.sin(phase)
    T = c * A + s * B
    Tp = c * B - s * A
    P, dP, ddP = _monomials(p - model.p0, E, order)
    out = dict(
        G=np.sum(P * T, axis=1),
        Gt=TWO_PI * np.sum(P * Tp * kt, axis=1),
        Gq=TWO_PI * (P * Tp) @ kq,
        Gp=np.einsum("nj,nji->ni", T, dP),
    )
    if order > 1:
        out["Gqq"] = -(TWO_PI**2) * np.einsum("nj,ji,jk->nik", P * T, kq, kq)
        out["Gqp"] = TWO_PI * np.einsum("nj,ji,njk->nik", Tp, kq, dP)
        out["Gpp"] = np.einsum("nj,njik->nik", T, ddP)
    return out


def field(model, t, y, eps2, want_jac=False):
    """Hamiltonian vector field (N, 2n), optional Jacobian (N, 2n, 2n), and eps2*dG/dt."""
    n = model.n
    t = np.broadcast_to(np.asarray(t, dtype=float), (y.shape[0],))
    q, p = y[:, :n], y[:, n:]
    gh, Hh = h_derivs(model, p)
    g = g_derivs(model, t, q, p, order=2 if want_jac else 1)
    dy = np.concatenate([gh - eps2 * g["Gp"], eps2 * g["Gq"]], axis=1)
    jac = None
    if want_jac:
        N = y.shape[0]
        jac = np.empty((N, 2 * n, 2 * n))
        jac[:, :n, :n] = -eps2 * np.swapaxes(g["Gqp"], 1, 2)
        jac[:, :n, n:] = Hh - eps2 * g["Gpp"]
        jac[:, n:, :n] = eps2 * g["Gqq"]
        jac[:, n:, n:] = eps2 * g["Gqp"]
    return dy, jac, eps2 * g["Gt"]


def hamiltonian(model, t, y, eps2):
    n = model.n
    t = np.broadcast_to(np.asarray(t, dtype=float), (y.shape[0],))
    g = g_derivs(model, t, y[:, :n], y[:, n:], order=1)
    return h_value(model, y[:, n:]) - eps2 * g["G"]


def rk4(model, y0, t0, h, nsteps, eps2, tangent=False, box_lo=None, box_hi=None, record_every=0):
    """Fixed-step RK4 for a batch of trajectories.

    Returns (y, jac, e, escape, record):
      y (N, 2n) final states (frozen at the escape step for escaped orbits),
      jac (N, 2n, 2n) tangent flow or None, e (N,) integral of eps2*dG/dt,
      escape (N,) first step index after which the state left the box (-1 if never),
      record (N, nrec, 2n) states every ``record_every`` steps or None.
    """
    y = np.array(y0, dtype=float, copy=True)
    N, d = y.shape
    t = np.array(np.broadcast_to(t0, (N,)), dtype=float)
    jac = np.broadcast_to(np.eye(d), (N, d, d)).copy() if tangent else None
    e = np.zeros(N)
    escape = np.full(N, -1, dtype=np.int64)
    lo = np.full(d, -np.inf) if box_lo is None else np.asarray(box_lo, dtype=float)
    hi = np.full(d, np.inf) if box_hi is None else np.asarray(box_hi, dtype=float)
    check_box = np.isfinite(lo).any() or np.isfinite(hi).any()
    record = None
    if record_every:
        nrec = nsteps // record_every + 1
        record = np.empty((N, nrec, d))
        record[:, 0] = y
    active = np.ones(N, dtype=bool)
    for step in range(nsteps):
        k1, J1, g1 = field(model, t, y, eps2, tangent)
        k2, J2, g2 = field(model, t + 0.5 * h, y + 0.5 * h * k1, eps2, tangent)
        k3, J3, g3 = field(model, t + 0.5 * h, y + 0.5 * h * k2, eps2, tangent)
        k4, J4, g4 = field(model, t + h, y + h * k3, eps2, tangent)
        ynew = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        enew = e + (h / 6.0) * (g1 + 2 * g2 + 2 * g3 + g4)
        if tangent:
            M1 = J1 @ jac
            M2 = J2 @ (jac + 0.5 * h * M1)
            M3 = J3 @ (jac + 0.5 * h * M2)
            M4 = J4 @ (jac + h * M3)
            jnew = jac + (h / 6.0) * (M1 + 2 * M2 + 2 * M3 + M4)
            jac[active] = jnew[active]
        y[active] = ynew[active]
        e[active] = enew[active]
        t = t + h
        if check_box:
            out = active & np.any((y < lo) | (y > hi), axis=1)
            escape[out] = step + 1
            active &= ~out
        if record is not None and (step + 1) % record_every == 0:
            record[:, (step + 1) // record_every] = y
    return y, jac, e, escape, record
