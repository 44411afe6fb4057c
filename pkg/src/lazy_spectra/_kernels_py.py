"""Pure numpy implementation of the hot solver loops.

Mirrors ``_kernels.pyx`` call for call; used when the compiled extension is
unavailable or when ``LAZY_SPECTRA_KERNELS=python``.
"""
import math

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1

KIND_CSR = 0
KIND_CCA = 1

INNER_CG = 0
INNER_SVRG = 1

OK = 0
CAP = 1
INNER_FAIL = 2
NONFINITE = 3


def mix64(z: int) -> int:
    z = (z + GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def sample_indices(key, start, count, n):
    """Counter-based SplitMix64 stream: index t is mix64(key + t*GOLDEN) >> 33 mod n."""
    t = np.arange(start, start + count, dtype=np.uint64)
    g = np.uint64(GOLDEN)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + t * g + g
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        z = z ^ (z >> np.uint64(31))
    return ((z >> np.uint64(33)) % np.uint64(n)).astype(np.intp)


class Ops:
    def __init__(self, kind, d, **arrays):
        self.kind = kind
        self.d = d
        self.__dict__.update(arrays)
        self.n_a = 0
        self.n_b = 0
        if kind == KIND_CCA:
            self.n = self.X.shape[0]
            self.dx = self.X.shape[1]
            self.dy = self.Y.shape[1]
            self.XT = np.ascontiguousarray(self.X.T)
            self.YT = np.ascontiguousarray(self.Y.T)

    def apply_a(self, x):
        self.n_a += 1
        if self.kind == KIND_CSR:
            return self.A @ x
        dx = self.dx
        return np.concatenate([self.XT @ (self.Y @ x[dx:]), self.YT @ (self.X @ x[:dx])]) / self.n

    def apply_b(self, x):
        self.n_b += 1
        if self.kind == KIND_CSR:
            return self.B @ x
        dx = self.dx
        return np.concatenate([
            self.XT @ (self.X @ x[:dx]) / self.n + self.gx * x[:dx],
            self.YT @ (self.Y @ x[dx:]) / self.n + self.gy * x[dx:],
        ])


def make_csr_ops(ap, ai, ad, bp, bi, bd):
    import scipy.sparse as sp

    d = len(ap) - 1
    A = sp.csr_matrix((ad, ai, ap), shape=(d, d))
    B = sp.csr_matrix((bd, bi, bp), shape=(d, d))
    return Ops(KIND_CSR, d, A=A, B=B)


def make_cca_ops(X, Y, gx, gy):
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    return Ops(KIND_CCA, X.shape[1] + Y.shape[1], X=X, Y=Y, gx=float(gx), gy=float(gy))


def apply_a(ops, x):
    return ops.apply_a(np.asarray(x, dtype=np.float64))


def apply_b(ops, x):
    return ops.apply_b(np.asarray(x, dtype=np.float64))


def cg_solve(ops, rhs, x0, tol_abs, maxiter):
    """Solve B x = rhs until ||B x - rhs|| <= tol_abs. Returns (x, iters, rnorm, ok)."""
    x = np.array(x0, dtype=np.float64)
    r = rhs - ops.apply_b(x)
    rr = float(r @ r)
    tol2 = tol_abs * tol_abs
    if rr <= tol2:
        return x, 0, math.sqrt(rr), True
    p = r.copy()
    for it in range(1, maxiter + 1):
        q = ops.apply_b(p)
        pq = float(p @ q)
        if not pq > 0:
            return x, it, math.sqrt(rr), False
        alpha = rr / pq
        x += alpha * p
        r -= alpha * q
        rr_new = float(r @ r)
        if rr_new <= tol2:
            return x, it, math.sqrt(rr_new), True
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, maxiter, math.sqrt(rr), False


def _svrg_binv_a_core(ops, w, x, tol_err, floor_rel, eta, lmin_b, max_epochs, key, counter):
    X, Y, dx, n = ops.X, ops.Y, ops.dx, ops.n
    gx, gy = ops.gx, ops.gy
    aw = ops.apply_a(w)
    tol_err = max(tol_err, floor_rel * math.sqrt(float(aw @ aw)) / lmin_b)
    epochs = 0
    while True:
        mu = ops.apply_b(x) - aw
        gnorm = float(np.sqrt(mu @ mu))
        if not math.isfinite(gnorm):
            return x, epochs, gnorm, counter, False
        if gnorm <= tol_err * lmin_b:
            return x, epochs, gnorm, counter, True
        if epochs >= max_epochs:
            return x, epochs, gnorm, counter, False
        idx = sample_indices(key, counter, 2 * n, n)
        counter += 2 * n
        xs = x.copy()
        mu1, mu2 = mu[:dx], mu[dx:]
        for i in idx:
            d1 = x[:dx] - xs[:dx]
            d2 = x[dx:] - xs[dx:]
            a = X[i] @ d1
            b = Y[i] @ d2
            x[:dx] -= eta * (X[i] * a + gx * d1 + mu1)
            x[dx:] -= eta * (Y[i] * b + gy * d2 + mu2)
        epochs += 1


def svrg_binv_a(ops, w, x0, tol_err, eta, lmin_b, max_epochs, key, counter, floor_rel=0.0):
    """SVRG on the least-squares finite sum whose minimizer is B^{-1} A w.

    Returns (x, epochs, grad_norm, counter, ok); certified when
    ||B x - A w|| / lmin_b <= tol_err.
    """
    x = np.array(x0, dtype=np.float64)
    return _svrg_binv_a_core(ops, np.asarray(w, dtype=np.float64), x, tol_err, floor_rel, eta,
                             lmin_b, max_epochs, key, counter)


def _q_apply(V, AV, BV, G, u):
    t1 = AV.T @ u
    t2 = BV.T @ u
    return BV @ (t1 - G @ t2) + AV @ t2


def svrg_shifted(ops, lam, side, V, AV, BV, G, bw, z0, tol_grad, eta, max_epochs, key, counter):
    """SVRG on f'(z) = 1/2 z^T (lam B - side (A - Q)) z - bw^T z.

    Returns (z, epochs, grad_norm, counter, ok).
    """
    X, Y, dx, n = ops.X, ops.Y, ops.dx, ops.n
    gx, gy = ops.gx, ops.gy
    z = np.array(z0, dtype=np.float64)
    epochs = 0
    while True:
        mu = lam * ops.apply_b(z) - side * (ops.apply_a(z) - _q_apply(V, AV, BV, G, z)) - bw
        gnorm = float(np.sqrt(mu @ mu))
        if not math.isfinite(gnorm):
            return z, epochs, gnorm, counter, False
        if gnorm <= tol_grad:
            return z, epochs, gnorm, counter, True
        if epochs >= max_epochs:
            return z, epochs, gnorm, counter, False
        idx = sample_indices(key, counter, 2 * n, n)
        counter += 2 * n
        zs = z.copy()
        for i in idx:
            dz = z - zs
            a = X[i] @ dz[:dx]
            b = Y[i] @ dz[dx:]
            h = side * _q_apply(V, AV, BV, G, dz)
            h[:dx] += lam * (X[i] * a + gx * dz[:dx]) - side * X[i] * b
            h[dx:] += lam * (Y[i] * b + gy * dz[dx:]) - side * Y[i] * a
            z -= eta * (h + mu)
        epochs += 1


def agd_shifted(ops, lam, side, V, BV, chi, x0, s0, L, sigma, tol, t_cap, inner, tol_s,
                floor_rel, cg_maxiter, eta, lmin_b, lmax_b, svrg_max_epochs, key, counter):
    """Inexact AGD on the shifted operator N = lam I - side P B^{-1} A P in implicit coordinates.

    Returns (y, s_last, x_last, iters, status, counter, cg_iters, svrg_epochs, resid).
    """
    tau = 2.0 / (1.0 + math.sqrt(8.0 * L / sigma + 1.0))
    eta_agd = 1.0 / (tau * L)
    sq_lmax = math.sqrt(lmax_b)
    y = np.array(x0, dtype=np.float64)
    z = y.copy()
    s = np.array(s0, dtype=np.float64)
    x = y
    cg_total = 0
    svrg_total = 0
    resid = math.inf
    it = 0
    while it < t_cap:
        x = tau * z + (1.0 - tau) * y
        u = x - V @ (BV.T @ x)
        if inner == INNER_CG:
            a = ops.apply_a(u)
            tol_eff = max(tol_s, floor_rel * math.sqrt(float(a @ a)) / lmin_b)
            s, k, _, ok = cg_solve(ops, a, s, tol_eff * lmin_b, cg_maxiter)
            cg_total += k
        else:
            s, k, _, counter, ok = _svrg_binv_a_core(ops, u, s.copy(), tol_s, floor_rel, eta,
                                                     lmin_b, svrg_max_epochs, key, counter)
            svrg_total += k
        it += 1
        if not ok:
            return y, s, x, it, INNER_FAIL, counter, cg_total, svrg_total, resid
        ps = s - V @ (BV.T @ s)
        g = lam * x - side * ps - chi
        resid = math.sqrt(max(float(g @ ops.apply_b(g)), 0.0))
        if not math.isfinite(resid):
            return y, s, x, it, NONFINITE, counter, cg_total, svrg_total, resid
        y = x - g / L
        if (resid + tol_s * sq_lmax) / sigma <= tol:
            return y, s, x, it, OK, counter, cg_total, svrg_total, resid
        z = (z + eta_agd * sigma * x - eta_agd * g) / (1.0 + eta_agd * sigma)
    return y, s, x, it, CAP, counter, cg_total, svrg_total, resid


def agd_quadratic(H, b, x0, L, sigma, T):
    """Exact-gradient AGD on 1/2 x^T H x - b^T x for dense H; returns y_T."""
    tau = 2.0 / (1.0 + math.sqrt(8.0 * L / sigma + 1.0))
    eta = 1.0 / (tau * L)
    y = np.array(x0, dtype=np.float64)
    z = y.copy()
    for _ in range(T):
        x = tau * z + (1.0 - tau) * y
        g = H @ x - b
        y = x - g / L
        z = (z + eta * sigma * x - eta * g) / (1.0 + eta * sigma)
    return y
