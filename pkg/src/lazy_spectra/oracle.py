"""Dense brute-force ground truth and numeric validators for the matrix-algebra lemmas.

Everything here forms dense matrices and square roots; it is meant for d <= 2000.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError

ABS_SLACK = 1e-12  # floating-point slack when comparing a computed norm against a bound


def _dense(m):
    if hasattr(m, "to_dense"):
        return m.to_dense()
    return np.asarray(m, dtype=np.float64)


def sym_pow(b, power):
    """B^power for symmetric positive definite B."""
    w, q = np.linalg.eigh(b)
    if w[0] <= 0:
        raise PreconditionError("matrix is not positive definite")
    return (q * w**power) @ q.T


def sort_by_magnitude(vals):
    """Indices ordering |lambda| descending; ties: positive first, then ascending index."""
    idx = np.arange(len(vals))
    return np.array(sorted(idx, key=lambda i: (-round(abs(vals[i]), 12), -np.sign(vals[i]), i)))


@dataclass
class DenseSpectrum:
    eigenvalues: np.ndarray  # sorted by |lambda| descending
    vectors: np.ndarray  # B-orthonormal columns

    def relative_gap(self, k) -> float:
        a = np.abs(self.eigenvalues)
        if k >= len(a):
            return 1.0
        return float((a[k - 1] - a[k]) / a[k - 1])

    def trailing(self, k):
        return self.vectors[:, k:]


def dense_genev(a, b) -> DenseSpectrum:
    a, b = _dense(a), _dense(b)
    bmh = sym_pow(b, -0.5)
    m = bmh @ a @ bmh
    m = 0.5 * (m + m.T)
    w, q = np.linalg.eigh(m)
    order = sort_by_magnitude(w)
    return DenseSpectrum(w[order], bmh @ q[:, order])


def whitened_operator(a, b):
    """M = B^{-1/2} A B^{-1/2} and B^{1/2}."""
    a, b = _dense(a), _dense(b)
    bmh = sym_pow(b, -0.5)
    m = bmh @ a @ bmh
    return 0.5 * (m + m.T), sym_pow(b, 0.5)


@dataclass
class CanonicalPair:
    sigma: float
    phi: np.ndarray
    psi: np.ndarray


def dense_cca(x, y, gamma_x=0.0, gamma_y=0.0):
    """Canonical pairs sorted by sigma descending, via SVD of Sxx^{-1/2} Sxy Syy^{-1/2}."""
    x = getattr(x, "values", x)
    y = getattr(y, "values", y)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    sxx = x.T @ x / n + gamma_x * np.eye(x.shape[1])
    syy = y.T @ y / n + gamma_y * np.eye(y.shape[1])
    sxy = x.T @ y / n
    try:
        xm = sym_pow(sxx, -0.5)
        ym = sym_pow(syy, -0.5)
    except PreconditionError:
        raise PreconditionError("covariance is singular") from None
    u, s, vt = np.linalg.svd(xm @ sxy @ ym)
    r = len(s)
    return [CanonicalPair(float(s[i]), xm @ u[:, i], ym @ vt[i]) for i in range(r)]


def cca_trailing(x, y, k, gamma_x=0.0, gamma_y=0.0):
    """Metric-orthonormal complements of the top-k canonical directions in each view."""
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    y = np.asarray(getattr(y, "values", y), dtype=np.float64)
    n = x.shape[0]
    xm = sym_pow(x.T @ x / n + gamma_x * np.eye(x.shape[1]), -0.5)
    ym = sym_pow(y.T @ y / n + gamma_y * np.eye(y.shape[1]), -0.5)
    u, _, vt = np.linalg.svd(xm @ (x.T @ y / n) @ ym)
    return xm @ u[:, k:], ym @ vt[k:].T


def cca_block_spectrum(problem):
    """Eigenvalues of the block whitened operator for a CcaProblem, sorted ascending."""
    m, _ = whitened_operator(problem.dense_a(), problem.dense_b())
    return np.linalg.eigvalsh(m)


# ---------------------------------------------------------------------------
# deflation and shifted-operator references


def deflated_matrix(a, b, vcols):
    """Explicit M_s = (I - V V^T) M (I - V V^T) with V = B^{1/2} vcols."""
    m, bh = whitened_operator(a, b)
    v = bh @ np.asarray(vcols, dtype=np.float64).reshape(m.shape[0], -1)
    p = np.eye(m.shape[0]) - v @ v.T
    out = p @ m @ p
    return 0.5 * (out + out.T)


def deflated_operator_norm(a, b, vcols) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(deflated_matrix(a, b, vcols)))))


def explicit_q(a, b, vcols):
    """Q = B V V^T A + A V V^T B - B V V^T A V V^T B assembled densely."""
    a, b = _dense(a), _dense(b)
    v = np.asarray(vcols, dtype=np.float64).reshape(a.shape[0], -1)
    bv = b @ v
    av = a @ v
    return bv @ av.T + av @ bv.T - bv @ (v.T @ a @ v) @ bv.T


def dense_shifted_solve(a, b, vcols, lam, sign, chi, via_q=False):
    """N^{-1} chi in implicit coordinates for N = lam I + sign P B^{-1} A P.

    Solves (B N) x = B chi with B N = lam B + sign (I - B V V^T) A (I - V V^T B); with
    ``via_q`` the projected block is assembled as A - Q instead.
    """
    a, b = _dense(a), _dense(b)
    d = a.shape[0]
    v = np.asarray(vcols, dtype=np.float64).reshape(d, -1)
    if via_q:
        proj = a - explicit_q(a, b, v)
    else:
        p = np.eye(d) - v @ (v.T @ b)
        proj = p.T @ a @ p
    bn = lam * b + sign * proj
    return np.linalg.solve(bn, b @ np.asarray(chi, dtype=np.float64))


def dense_shifted_apply(a, b, vcols, lam, sign, x):
    a, b = _dense(a), _dense(b)
    d = a.shape[0]
    v = np.asarray(vcols, dtype=np.float64).reshape(d, -1)
    p = np.eye(d) - v @ (v.T @ b)
    return lam * x + sign * p @ np.linalg.solve(b, a @ (p @ x))


def subspace_leakage(vk, b, w) -> float:
    """||V^T B W||_2."""
    if w.shape[1] == 0 or vk.shape[1] == 0:
        return 0.0
    return float(np.linalg.norm(vk.T @ _dense(b) @ w, 2))


def match_columns(v, u, b):
    """For each column of v, the index of the column of u maximizing |v_i^T B u_j|."""
    c = np.abs(v.T @ _dense(b) @ u)
    return np.argmax(c, axis=1)


# ---------------------------------------------------------------------------
# matrix-algebra lemma validators


def _rand_sym(rng, d):
    g = rng.standard_normal((d, d))
    return 0.5 * (g + g.T)


def _orth(m):
    q, _ = np.linalg.qr(m)
    return q


def _approximate_projection_case(rng):
    """Returns (lhs, bound) for the approximate-projection inequality."""
    d = int(rng.integers(4, 31))
    m = _rand_sym(rng, d)
    _, evecs = np.linalg.eigh(m)
    evecs = evecs[:, rng.permutation(d)]
    k = int(rng.integers(1, d))
    uperp, u = evecs[:, :k], evecs[:, k:]
    s = int(rng.integers(1, k + 1))
    noise = float(rng.uniform(0.0, 0.4))
    raw = uperp @ rng.standard_normal((k, s)) + noise * u @ rng.standard_normal((d - k, s)) / np.sqrt(d)
    vs = _orth(raw)
    if not np.linalg.norm(vs.T @ u, 2) < 0.5:
        return None
    return projection_terms(m, uperp, u, vs)


def projection_terms(m, uperp, u, vs):
    """(lhs, bound) comparing the projector off V_s with the projector off its image in U-perp.

    ``uperp`` and ``u`` split the eigenvectors of m; eps is the measured ||V_s^T U||.
    """
    d = m.shape[0]
    eps = float(np.linalg.norm(vs.T @ u, 2)) if u.shape[1] else 0.0
    qs = _orth(uperp @ (uperp.T @ vs))
    pq = np.eye(d) - qs @ qs.T
    pv = np.eye(d) - vs @ vs.T
    lhs = float(np.linalg.norm(pq @ m @ pq - pv @ m @ pv, 2))
    return lhs, 13.0 * eps * float(np.linalg.norm(m, 2))


def _wedin_case(rng):
    d = int(rng.integers(3, 31))
    a = _rand_sym(rng, d)
    e = _rand_sym(rng, d)
    e *= float(rng.uniform(0.0, 0.5)) / max(np.linalg.norm(e, 2), 1e-300)
    if rng.uniform() < 0.1:
        e[:] = 0.0
    mags = np.sort(np.abs(np.linalg.eigvalsh(a)))
    mu = float(rng.uniform(mags[0], mags[-1]))
    tau = float(rng.uniform(0.01, 1.0))
    return wedin_terms(a, a + e, mu, tau)


def wedin_terms(a, b, mu, tau):
    """(||U^T V||, ||A - B|| / tau) for U: |eig(A)| <= mu and V: |eig(B)| >= mu + tau; None if a block is empty."""
    eps = float(np.linalg.norm(a - b, 2))
    wa, qa = np.linalg.eigh(a)
    wb, qb = np.linalg.eigh(b)
    u = qa[:, np.abs(wa) <= mu]
    v = qb[:, np.abs(wb) >= mu + tau]
    if u.shape[1] == 0 or v.shape[1] == 0:
        return None
    return float(np.linalg.norm(u.T @ v, 2)), eps / tau


def _embedding_case(rng):
    d = int(rng.integers(4, 31))
    m = _rand_sym(rng, d)
    w, q = np.linalg.eigh(m)
    order = np.argsort(-np.abs(w), kind="stable")
    w, q = w[order], q[:, order]
    j = int(rng.integers(1, d - 1))
    mu = float(abs(w[j]))
    u = q[:, np.abs(w) <= mu]
    uperp = q[:, np.abs(w) > mu]
    t = float(rng.uniform(0.0, 0.6))
    v = uperp @ rng.standard_normal(uperp.shape[1]) + t * u @ rng.standard_normal(u.shape[1]) / np.sqrt(d)
    v /= np.linalg.norm(v)
    eps = float(np.linalg.norm(v @ u))
    if not eps <= 0.5:
        return None
    tau = float(rng.uniform(0.05, 2.0))
    # eigenvectors of M' restricted to the complement of v
    comp = np.linalg.svd(np.eye(d) - np.outer(v, v))[0][:, : d - 1]
    pm = np.eye(d) - np.outer(v, v)
    mp = comp.T @ (pm @ m @ pm) @ comp
    wp, qp = np.linalg.eigh(0.5 * (mp + mp.T))
    qp = comp @ qp
    v1 = qp[:, np.abs(wp) <= mu + tau]
    qmat = v1.T @ u
    lhs = float(np.linalg.norm(u - v1 @ qmat, 2))
    bound = float(np.sqrt(169 * eps**2 * np.linalg.norm(m, 2) ** 2 / tau**2 + eps**2))
    return lhs, bound


_CASES = {
    "approximate_projection": _approximate_projection_case,
    "gap_free_wedin": _wedin_case,
    "eigenvector_embedding": _embedding_case,
}


def check_algebra_lemmas(samples: int, seed: int) -> dict:
    """Evaluate each inequality on ``samples`` random instances.

    Report per lemma: instance count, violation count, and the max ratio lhs/bound.
    """
    report = {"samples": int(samples), "seed": int(seed), "lemmas": {}}
    for offset, (name, case) in enumerate(_CASES.items()):
        rng = np.random.Generator(np.random.Philox(key=[seed, offset]))
        done = viol = 0
        max_ratio = 0.0
        while done < samples:
            res = case(rng)
            if res is None:
                continue
            lhs, bound = res
            done += 1
            if lhs > bound + ABS_SLACK:
                viol += 1
            if bound > 0:
                max_ratio = max(max_ratio, lhs / bound)
        report["lemmas"][name] = {"instances": done, "violations": viol, "max_ratio": max_ratio}
    report["violations"] = sum(v["violations"] for v in report["lemmas"].values())
    return report
