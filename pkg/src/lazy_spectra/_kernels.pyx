# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled solver loops. Semantics match ``_kernels_py`` exactly; see there for docs."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isfinite, INFINITY
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

DEF GOLDEN = 0x9E3779B97F4A7C15

KIND_CSR = 0
KIND_CCA = 1
INNER_CG = 0
INNER_SVRG = 1
cdef enum:
    S_OK = 0
    S_CAP = 1
    S_INNER_FAIL = 2
    S_NONFINITE = 3

OK = S_OK
CAP = S_CAP
INNER_FAIL = S_INNER_FAIL
NONFINITE = S_NONFINITE


cdef inline uint64_t _mix64(uint64_t z) noexcept nogil:
    z = z + <uint64_t>GOLDEN
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline Py_ssize_t _sample(uint64_t key, uint64_t t, Py_ssize_t n) noexcept nogil:
    return <Py_ssize_t>((_mix64(key + t * <uint64_t>GOLDEN) >> 33) % <uint64_t>n)


def mix64(z):
    return _mix64(<uint64_t>z)


def sample_indices(key, start, count, n):
    cdef Py_ssize_t i, c = count, nn = n
    cdef uint64_t k = <uint64_t>key, s = <uint64_t>start
    out = np.empty(c, dtype=np.intp)
    cdef Py_ssize_t[::1] o = out
    for i in range(c):
        o[i] = _sample(k, s + <uint64_t>i, nn)
    return out


cdef inline double _dot(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        s += a[i] * b[i]
    return s


cdef class Ops:
    cdef public int kind
    cdef public Py_ssize_t d, n, dx, dy
    cdef public long long n_a, n_b
    cdef const int64_t[::1] ap, ai, bp, bi
    cdef const double[::1] ad, bd
    cdef const double[:, ::1] X, Y
    cdef public double gx, gy
    cdef double[::1] t1, t2

    cdef void mv_a(self, const double* x, double* out) noexcept nogil:
        cdef Py_ssize_t i, j, n, dx, dy
        cdef double s, t, inv
        cdef const double* row
        self.n_a += 1
        if self.kind == 0:
            for i in range(self.d):
                s = 0.0
                for j in range(self.ap[i], self.ap[i + 1]):
                    s = s + self.ad[j] * x[self.ai[j]]
                out[i] = s
            return
        n = self.n
        dx = self.dx
        dy = self.dy
        for i in range(n):
            self.t1[i] = _dot(&self.X[i, 0], x, dx)
            self.t2[i] = _dot(&self.Y[i, 0], x + dx, dy)
        for j in range(dx + dy):
            out[j] = 0.0
        for i in range(n):
            s = self.t2[i]
            t = self.t1[i]
            row = &self.X[i, 0]
            for j in range(dx):
                out[j] += row[j] * s
            row = &self.Y[i, 0]
            for j in range(dy):
                out[dx + j] += row[j] * t
        inv = 1.0 / n
        for j in range(dx + dy):
            out[j] *= inv

    cdef void mv_b(self, const double* x, double* out) noexcept nogil:
        cdef Py_ssize_t i, j, n, dx, dy
        cdef double s, t, inv
        cdef const double* row
        self.n_b += 1
        if self.kind == 0:
            for i in range(self.d):
                s = 0.0
                for j in range(self.bp[i], self.bp[i + 1]):
                    s = s + self.bd[j] * x[self.bi[j]]
                out[i] = s
            return
        n = self.n
        dx = self.dx
        dy = self.dy
        for i in range(n):
            self.t1[i] = _dot(&self.X[i, 0], x, dx)
            self.t2[i] = _dot(&self.Y[i, 0], x + dx, dy)
        for j in range(dx + dy):
            out[j] = 0.0
        for i in range(n):
            s = self.t1[i]
            t = self.t2[i]
            row = &self.X[i, 0]
            for j in range(dx):
                out[j] += row[j] * s
            row = &self.Y[i, 0]
            for j in range(dy):
                out[dx + j] += row[j] * t
        inv = 1.0 / n
        for j in range(dx):
            out[j] = out[j] * inv + self.gx * x[j]
        for j in range(dy):
            out[dx + j] = out[dx + j] * inv + self.gy * x[dx + j]


def make_csr_ops(ap, ai, ad, bp, bi, bd):
    cdef Ops o = Ops()
    o.kind = 0
    o.d = len(ap) - 1
    o.ap = np.ascontiguousarray(ap, dtype=np.int64)
    o.ai = np.ascontiguousarray(ai, dtype=np.int64)
    o.ad = np.ascontiguousarray(ad, dtype=np.float64)
    o.bp = np.ascontiguousarray(bp, dtype=np.int64)
    o.bi = np.ascontiguousarray(bi, dtype=np.int64)
    o.bd = np.ascontiguousarray(bd, dtype=np.float64)
    o.n = 0
    o.n_a = 0
    o.n_b = 0
    return o


def make_cca_ops(X, Y, gx, gy):
    cdef Ops o = Ops()
    o.kind = 1
    o.X = np.ascontiguousarray(X, dtype=np.float64)
    o.Y = np.ascontiguousarray(Y, dtype=np.float64)
    o.n = o.X.shape[0]
    o.dx = o.X.shape[1]
    o.dy = o.Y.shape[1]
    o.d = o.dx + o.dy
    o.gx = gx
    o.gy = gy
    o.t1 = np.empty(o.n)
    o.t2 = np.empty(o.n)
    o.n_a = 0
    o.n_b = 0
    return o


def apply_a(Ops ops, x):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty(ops.d)
    cdef double[::1] ov = out
    ops.mv_a(&xv[0], &ov[0])
    return out


def apply_b(Ops ops, x):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty(ops.d)
    cdef double[::1] ov = out
    ops.mv_b(&xv[0], &ov[0])
    return out


# ---------------------------------------------------------------------------
# conjugate gradient on B

cdef int _cg(Ops ops, const double* rhs, double* x, double tol_abs, int maxiter,
             double* r, double* p, double* q, double* rnorm) noexcept nogil:
    """Returns iterations used (>= 0) on success, -(iterations+1) on failure."""
    cdef Py_ssize_t d = ops.d, i
    cdef int it
    cdef double rr, rr_new, pq, alpha, beta
    cdef double tol2 = tol_abs * tol_abs
    ops.mv_b(x, q)
    for i in range(d):
        r[i] = rhs[i] - q[i]
    rr = _dot(r, r, d)
    rnorm[0] = sqrt(rr)
    if rr <= tol2:
        return 0
    for i in range(d):
        p[i] = r[i]
    for it in range(1, maxiter + 1):
        ops.mv_b(p, q)
        pq = _dot(p, q, d)
        if not pq > 0:
            return -(it + 1)
        alpha = rr / pq
        for i in range(d):
            x[i] += alpha * p[i]
            r[i] -= alpha * q[i]
        rr_new = _dot(r, r, d)
        rnorm[0] = sqrt(rr_new)
        if rr_new <= tol2:
            return it
        beta = rr_new / rr
        for i in range(d):
            p[i] = r[i] + beta * p[i]
        rr = rr_new
    return -(maxiter + 1)


def cg_solve(Ops ops, rhs, x0, double tol_abs, int maxiter):
    cdef const double[::1] b = np.ascontiguousarray(rhs, dtype=np.float64)
    x = np.array(x0, dtype=np.float64)
    cdef double[::1] xv = x
    cdef double[::1] r = np.empty(ops.d), p = np.empty(ops.d), q = np.empty(ops.d)
    cdef double rn = 0.0
    cdef int res
    with nogil:
        res = _cg(ops, &b[0], &xv[0], tol_abs, maxiter, &r[0], &p[0], &q[0], &rn)
    if res >= 0:
        return x, res, rn, True
    return x, -res - 1, rn, False


# ---------------------------------------------------------------------------
# SVRG for B^{-1} A w

cdef int _svrg_binv_a(Ops ops, const double* w, double* x, double tol_err, double floor_rel,
                      double eta, double lmin_b, int max_epochs, uint64_t key, uint64_t* counter,
                      double* aw, double* mu, double* xs, double* gnorm_out) noexcept nogil:
    """Returns epochs used on success, -(epochs+1) on failure."""
    cdef Py_ssize_t n = ops.n, dx = ops.dx, dy = ops.dy, d = ops.d, i, j, t, steps = 2 * ops.n
    cdef int epochs = 0
    cdef double gnorm, a, b, dj
    cdef const double* xr
    cdef const double* yr
    cdef double gx = ops.gx, gy = ops.gy
    ops.mv_a(w, aw)
    gnorm = floor_rel * sqrt(_dot(aw, aw, d)) / lmin_b
    if gnorm > tol_err:
        tol_err = gnorm
    while True:
        ops.mv_b(x, mu)
        for j in range(d):
            mu[j] -= aw[j]
        gnorm = sqrt(_dot(mu, mu, d))
        gnorm_out[0] = gnorm
        if not isfinite(gnorm):
            return -(epochs + 1)
        if gnorm <= tol_err * lmin_b:
            return epochs
        if epochs >= max_epochs:
            return -(epochs + 1)
        for j in range(d):
            xs[j] = x[j]
        for t in range(steps):
            i = _sample(key, counter[0], n)
            counter[0] += 1
            xr = &ops.X[i, 0]
            yr = &ops.Y[i, 0]
            a = 0.0
            for j in range(dx):
                a += xr[j] * (x[j] - xs[j])
            b = 0.0
            for j in range(dy):
                b += yr[j] * (x[dx + j] - xs[dx + j])
            for j in range(dx):
                dj = x[j] - xs[j]
                x[j] -= eta * (xr[j] * a + gx * dj + mu[j])
            for j in range(dy):
                dj = x[dx + j] - xs[dx + j]
                x[dx + j] -= eta * (yr[j] * b + gy * dj + mu[dx + j])
        epochs += 1


def svrg_binv_a(Ops ops, w, x0, double tol_err, double eta, double lmin_b, int max_epochs,
                key, counter, double floor_rel=0.0):
    if ops.kind != 1:
        raise TypeError("svrg_binv_a needs a CCA operator")
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    x = np.array(x0, dtype=np.float64)
    cdef double[::1] xv = x
    cdef double[::1] aw = np.empty(ops.d), mu = np.empty(ops.d), xs = np.empty(ops.d)
    cdef uint64_t c = <uint64_t>counter
    cdef uint64_t k = <uint64_t>key
    cdef double gn = 0.0
    cdef int res
    with nogil:
        res = _svrg_binv_a(ops, &wv[0], &xv[0], tol_err, floor_rel, eta, lmin_b, max_epochs, k, &c,
                           &aw[0], &mu[0], &xs[0], &gn)
    if res >= 0:
        return x, res, gn, int(c), True
    return x, -res - 1, gn, int(c), False


# ---------------------------------------------------------------------------
# SVRG on the shifted CCA objective with the thin deflation correction Q

cdef void _q_apply(const double[:, ::1] AV, const double[:, ::1] BV, const double[:, ::1] G,
                   const double* u, double* out, double* t1, double* t2, double* t3,
                   Py_ssize_t d, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t i, j, l
    cdef double s1, s2
    for j in range(k):
        s1 = 0.0
        s2 = 0.0
        for i in range(d):
            s1 += AV[i, j] * u[i]
            s2 += BV[i, j] * u[i]
        t1[j] = s1
        t2[j] = s2
    for j in range(k):
        s1 = t1[j]
        for l in range(k):
            s1 -= G[j, l] * t2[l]
        t3[j] = s1
    for i in range(d):
        s1 = 0.0
        for j in range(k):
            s1 += BV[i, j] * t3[j] + AV[i, j] * t2[j]
        out[i] = s1


def svrg_shifted(Ops ops, double lam, double side, V, AV, BV, G, bw, z0, double tol_grad,
                 double eta, int max_epochs, key, counter):
    if ops.kind != 1:
        raise TypeError("svrg_shifted needs a CCA operator")
    cdef Py_ssize_t d = ops.d, n = ops.n, dx = ops.dx, dy = ops.dy
    cdef Py_ssize_t k = np.shape(AV)[1]
    cdef const double[:, ::1] av = np.ascontiguousarray(AV, dtype=np.float64).reshape(d, k)
    cdef const double[:, ::1] bv = np.ascontiguousarray(BV, dtype=np.float64).reshape(d, k)
    cdef const double[:, ::1] g = np.ascontiguousarray(G, dtype=np.float64).reshape(k, k)
    cdef const double[::1] bwv = np.ascontiguousarray(bw, dtype=np.float64)
    z = np.array(z0, dtype=np.float64)
    cdef double[::1] zv = z
    cdef double[::1] mu = np.empty(d), tmp = np.empty(d), qz = np.empty(d), zs = np.empty(d)
    cdef double[::1] dz = np.empty(d)
    cdef double[::1] t1 = np.empty(k + 1), t2 = np.empty(k + 1), t3 = np.empty(k + 1)
    cdef uint64_t c = <uint64_t>counter
    cdef uint64_t kk = <uint64_t>key
    cdef int epochs = 0, ok = 0
    cdef Py_ssize_t i, j, t, steps = 2 * n
    cdef double gnorm = 0.0, a, b, gx = ops.gx, gy = ops.gy
    cdef const double* xr
    cdef const double* yr
    with nogil:
        while True:
            ops.mv_b(&zv[0], &mu[0])
            ops.mv_a(&zv[0], &tmp[0])
            _q_apply(av, bv, g, &zv[0], &qz[0], &t1[0], &t2[0], &t3[0], d, k)
            for j in range(d):
                mu[j] = lam * mu[j] - side * (tmp[j] - qz[j]) - bwv[j]
            gnorm = sqrt(_dot(&mu[0], &mu[0], d))
            if not isfinite(gnorm):
                break
            if gnorm <= tol_grad:
                ok = 1
                break
            if epochs >= max_epochs:
                break
            for j in range(d):
                zs[j] = zv[j]
            for t in range(steps):
                i = _sample(kk, c, n)
                c += 1
                for j in range(d):
                    dz[j] = zv[j] - zs[j]
                xr = &ops.X[i, 0]
                yr = &ops.Y[i, 0]
                a = _dot(xr, &dz[0], dx)
                b = _dot(yr, &dz[dx], dy)
                _q_apply(av, bv, g, &dz[0], &qz[0], &t1[0], &t2[0], &t3[0], d, k)
                for j in range(dx):
                    zv[j] -= eta * (side * qz[j] + lam * (xr[j] * a + gx * dz[j]) - side * xr[j] * b + mu[j])
                for j in range(dy):
                    zv[dx + j] -= eta * (side * qz[dx + j] + lam * (yr[j] * b + gy * dz[dx + j])
                                         - side * yr[j] * a + mu[dx + j])
            epochs += 1
    return z, epochs, gnorm, int(c), bool(ok)


# ---------------------------------------------------------------------------
# inexact AGD on the shifted operator, implicit coordinates

cdef inline void _project(const double[:, ::1] V, const double[:, ::1] BV, const double* x,
                          double* out, double* coef, Py_ssize_t d, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s
    for j in range(k):
        s = 0.0
        for i in range(d):
            s += BV[i, j] * x[i]
        coef[j] = s
    for i in range(d):
        s = x[i]
        for j in range(k):
            s -= V[i, j] * coef[j]
        out[i] = s


def agd_shifted(Ops ops, double lam, double side, V, BV, chi, x0, s0, double L, double sigma,
                double tol, long t_cap, int inner, double tol_s, double floor_rel, int cg_maxiter,
                double eta, double lmin_b, double lmax_b, int svrg_max_epochs, key, counter):
    cdef Py_ssize_t d = ops.d, i
    cdef Py_ssize_t k = np.shape(V)[1]
    cdef const double[:, ::1] vv = np.ascontiguousarray(V, dtype=np.float64).reshape(d, k)
    cdef const double[:, ::1] bv = np.ascontiguousarray(BV, dtype=np.float64).reshape(d, k)
    cdef const double[::1] ch = np.ascontiguousarray(chi, dtype=np.float64)
    y = np.array(x0, dtype=np.float64)
    s = np.array(s0, dtype=np.float64)
    x = y.copy()
    cdef double[::1] yv = y, sv = s, xv = x
    cdef double[::1] z = y.copy(), u = np.empty(d), a = np.empty(d), ps = np.empty(d)
    cdef double[::1] g = np.empty(d), bg = np.empty(d)
    cdef double[::1] r = np.empty(d), p = np.empty(d), q = np.empty(d)
    cdef double[::1] coef = np.empty(k + 1)
    cdef uint64_t c = <uint64_t>counter
    cdef uint64_t kk = <uint64_t>key
    cdef double tau = 2.0 / (1.0 + sqrt(8.0 * L / sigma + 1.0))
    cdef double eta_agd = 1.0 / (tau * L)
    cdef double sq_lmax = sqrt(lmax_b)
    cdef double tol_eff = tol_s, resid = INFINITY, rn = 0.0, nrm
    cdef long it = 0
    cdef long cg_total = 0, svrg_total = 0
    cdef int res = 0, status = S_CAP
    with nogil:
        while it < t_cap:
            for i in range(d):
                xv[i] = tau * z[i] + (1.0 - tau) * yv[i]
            _project(vv, bv, &xv[0], &u[0], &coef[0], d, k)
            if inner == 0:
                ops.mv_a(&u[0], &a[0])
                nrm = sqrt(_dot(&a[0], &a[0], d))
                tol_eff = tol_s
                if floor_rel * nrm / lmin_b > tol_eff:
                    tol_eff = floor_rel * nrm / lmin_b
                res = _cg(ops, &a[0], &sv[0], tol_eff * lmin_b, cg_maxiter, &r[0], &p[0], &q[0], &rn)
                if res >= 0:
                    cg_total += res
                else:
                    cg_total += -res - 1
            else:
                res = _svrg_binv_a(ops, &u[0], &sv[0], tol_s, floor_rel, eta, lmin_b, svrg_max_epochs, kk, &c,
                                   &a[0], &r[0], &p[0], &rn)
                if res >= 0:
                    svrg_total += res
                else:
                    svrg_total += -res - 1
            it += 1
            if res < 0:
                status = S_INNER_FAIL
                break
            _project(vv, bv, &sv[0], &ps[0], &coef[0], d, k)
            for i in range(d):
                g[i] = lam * xv[i] - side * ps[i] - ch[i]
            ops.mv_b(&g[0], &bg[0])
            nrm = _dot(&g[0], &bg[0], d)
            resid = sqrt(nrm) if nrm > 0 else 0.0
            if not isfinite(resid):
                status = S_NONFINITE
                break
            for i in range(d):
                yv[i] = xv[i] - g[i] / L
            if (resid + tol_s * sq_lmax) / sigma <= tol:
                status = S_OK
                break
            for i in range(d):
                z[i] = (z[i] + eta_agd * sigma * xv[i] - eta_agd * g[i]) / (1.0 + eta_agd * sigma)
    return y, s, x, it, status, int(c), cg_total, svrg_total, resid


def agd_quadratic(H, b, x0, double L, double sigma, long T):
    cdef const double[:, ::1] h = np.ascontiguousarray(H, dtype=np.float64)
    cdef const double[::1] bb = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t d = h.shape[0], i, j
    y = np.array(x0, dtype=np.float64)
    cdef double[::1] yv = y
    cdef double[::1] z = y.copy(), x = np.empty(d), g = np.empty(d)
    cdef double tau = 2.0 / (1.0 + sqrt(8.0 * L / sigma + 1.0))
    cdef double eta = 1.0 / (tau * L)
    cdef double s
    cdef long t
    with nogil:
        for t in range(T):
            for i in range(d):
                x[i] = tau * z[i] + (1.0 - tau) * yv[i]
            for i in range(d):
                s = 0.0
                for j in range(d):
                    s += h[i, j] * x[j]
                g[i] = s - bb[i]
            for i in range(d):
                yv[i] = x[i] - g[i] / L
                z[i] = (z[i] + eta * sigma * x[i] - eta * g[i]) / (1.0 + eta * sigma)
    return y
