"""Linear-system machinery: CG, inexact AGD, shifted-operator solves, SVRG finite-sum solvers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConditioningError, DimensionError, NonConvergenceError
from .matrix import CcaProblem, ImplicitBasis

BACKENDS = ("cg", "svrg", "svrg-shifted")
DENSE_NORM_LIMIT = 200  # below this the deflated norm comes from a dense eigensolve


@dataclass
class Floors:
    """Relative accuracy floors below which solves are not requested.

    outer: shifted-solve error relative to ||chi||_B / sigma.
    cg, svrg: inner B^{-1}A error relative to ||A u|| / lambda_min(B).
    """

    outer: float = 1e-9
    cg: float = 1e-15
    svrg: float = 1e-12


@dataclass
class SolveStats:
    solves: int = 0
    inner_matvecs: int = 0
    cg_iters: int = 0
    svrg_epochs: int = 0
    max_kappa: float = 0.0

    def as_dict(self):
        return dict(self.__dict__)


class RngStream:
    """Named counter-based stream (SplitMix64 over a 64-bit key) for SVRG sampling."""

    name = "splitmix64-counter"

    def __init__(self, seed: int, label: int = 0):
        self.seed = int(seed)
        self.key = int(kernels.mix64((kernels.mix64(self.seed & (2**64 - 1)) ^ int(label)) & (2**64 - 1)))
        self.counter = 0


def resolve_backend(problem, backend: str) -> str:
    if backend == "auto":
        return "svrg" if isinstance(problem, CcaProblem) else "cg"
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if backend != "cg" and not isinstance(problem, CcaProblem):
        raise ValueError(f"backend {backend!r} needs a CCA problem")
    return backend


# ---------------------------------------------------------------------------
# conjugate gradient


def conjugate_gradient_fn(apply, rhs, tol, lmin_guess=None, maxiter=None, x0=None, kappa=None):
    """CG for an SPD operator given as a callable; ||B x - rhs|| <= tol ||rhs||."""
    rhs = np.asarray(rhs, dtype=np.float64)
    d = rhs.shape[0]
    if maxiter is None:
        k = kappa if kappa is not None else d * d
        maxiter = int(10 * math.sqrt(k) * math.log(1.0 / tol) + 50)
    x = np.zeros(d) if x0 is None else np.array(x0, dtype=np.float64)
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros(d)
    target = tol * bnorm
    r = rhs - apply(x)
    rr = float(r @ r)
    p = r.copy()
    for _ in range(maxiter + 1):
        if math.sqrt(rr) <= target:
            return x
        q = apply(p)
        pq = float(p @ q)
        if not pq > 0:
            raise NonConvergenceError("CG breakdown: operator not positive definite",
                                      residual=math.sqrt(rr))
        alpha = rr / pq
        x += alpha * p
        r -= alpha * q
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise NonConvergenceError(
        f"CG iteration cap {maxiter} exceeded, relative residual {math.sqrt(rr) / bnorm:.3e}",
        residual=math.sqrt(rr))


def conjugate_gradient(B, rhs, tol: float, x0=None):
    """Solve B x = rhs to relative residual ``tol`` with the cap 10 sqrt(kappa_B) log(1/tol) + 50."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != B.dim:
        raise DimensionError(f"rhs length {rhs.shape[0]} does not match dimension {B.dim}")
    if B.dim <= 2000:
        ev = np.linalg.eigvalsh(B.to_dense() if hasattr(B, "to_dense") else B.dense_b())
        kappa = ev[-1] / ev[0] if ev[0] > 0 else float("inf")
    else:
        kappa = None
    return conjugate_gradient_fn(B.matvec if hasattr(B, "matvec") else B.apply_b, rhs, tol,
                                 kappa=kappa, x0=x0)


# ---------------------------------------------------------------------------
# inexact accelerated gradient descent


@dataclass(frozen=True)
class QuadraticOracle:
    """Gradient access for an L-smooth, sigma-strongly convex objective."""

    grad: object
    L: float
    sigma: float
    eps: float = 0.0

    def __post_init__(self):
        if not (0 < self.sigma <= self.L):
            raise ValueError(f"need 0 < sigma <= L, got sigma={self.sigma}, L={self.L}")

    @property
    def tau(self) -> float:
        return 2.0 / (1.0 + math.sqrt(8.0 * self.L / self.sigma + 1.0))

    @property
    def eta(self) -> float:
        return 1.0 / (self.tau * self.L)


def agd_inexact(oracle: QuadraticOracle, x0, T: int, trace=None):
    """Three-sequence accelerated gradient method; returns y_T.

    ``trace`` (a list) receives every y_k when given.
    """
    tau, eta, L, sigma = oracle.tau, oracle.eta, oracle.L, oracle.sigma
    y = np.array(x0, dtype=np.float64)
    z = y.copy()
    if trace is not None:
        trace.append(y.copy())
    for _ in range(int(T)):
        x = tau * z + (1.0 - tau) * y
        g = np.asarray(oracle.grad(x), dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise NonConvergenceError("non-finite gradient in accelerated descent")
        y = x - g / L
        z = (z + eta * sigma * x - eta * g) / (1.0 + eta * sigma)
        if trace is not None:
            trace.append(y.copy())
    return y


def agd_planned_iterations(L, sigma, ratio, C=2.0) -> int:
    """Smallest T with C (1 - tau)^T ratio^2 <= 1, ratio = initial/target error scale."""
    tau = 2.0 / (1.0 + math.sqrt(8.0 * L / sigma + 1.0))
    need = math.log(max(C * ratio * ratio, 1.0))
    return max(1, int(math.ceil(need / -math.log1p(-tau))))


# ---------------------------------------------------------------------------
# shifted operator


def _deflated_norm(problem, basis: ImplicitBasis):
    """|| (I - V V^T B) B^{-1} A (I - V V^T B) || in B-geometry; dense when small, else ARPACK."""
    import scipy.sparse.linalg as spla

    d = problem.dim
    lo, hi = problem.b_extremes
    if d <= DENSE_NORM_LIMIT:
        from .oracle import deflated_operator_norm

        return deflated_operator_norm(problem.dense_a(), problem.dense_b(), basis.cols)

    def pap(x):
        u = basis.project_out(x)
        a = problem.apply_a(u)
        return a - basis.bcols @ (basis.cols.T @ a) if basis.k else a

    aop = spla.LinearOperator((d, d), matvec=pap, dtype=np.float64)
    bop = spla.LinearOperator((d, d), matvec=problem.apply_b, dtype=np.float64)
    minv = spla.LinearOperator(
        (d, d), dtype=np.float64,
        matvec=lambda r: conjugate_gradient_fn(problem.apply_b, r, 1e-13, kappa=hi / lo))
    vals = spla.eigsh(aop, k=1, M=bop, Minv=minv, which="LM", tol=1e-10,
                      return_eigenvectors=False, v0=np.ones(d))
    return float(abs(vals[0]))


class ShiftedOperator:
    """N = lam I - sign' (I - V V^T B) B^{-1} A (I - V V^T B) in implicit coordinates.

    ``sign`` follows the operator's own sign: ``-1`` gives lam I - (...), the inverse that
    amplifies positive eigenvalues; ``+1`` gives lam I + (...).
    ``sigma`` and ``L`` bound the spectrum of N; when omitted they are derived from an
    ARPACK estimate of the deflated operator norm.
    """

    def __init__(self, problem, lam, sign, basis=None, backend="cg", sigma=None, L=None,
                 rng=None, stats=None, floors=None, kappa_cap=None):
        if sign not in (-1, 1):
            raise ValueError("sign must be -1 or +1")
        self.problem = problem
        self.lam = float(lam)
        self.sign = int(sign)
        self.basis = basis if basis is not None else ImplicitBasis(problem)
        self.backend = resolve_backend(problem, backend)
        self.rng = rng if rng is not None else RngStream(0)
        self.stats = stats if stats is not None else SolveStats()
        self.floors = floors if floors is not None else Floors()
        self.kappa_cap = kappa_cap
        if sigma is None or L is None:
            norm = _deflated_norm(problem, self.basis)
            if sigma is None:
                sigma = self.lam - norm * (1 + 1e-8) - 1e-14
            if L is None:
                L = self.lam + norm
        if not sigma > 0:
            raise ConditioningError(f"shift {self.lam:.6g} is not above the spectrum")
        self.sigma = float(sigma)
        self.L = float(max(L, sigma))
        if self.kappa_cap is not None and self.L / self.sigma > self.kappa_cap:
            raise ConditioningError(
                f"shift too close to spectrum: kappa {self.L / self.sigma:.3g} > cap {self.kappa_cap:.3g}")
        self.stats.max_kappa = max(self.stats.max_kappa, self.L / self.sigma)
        self._cache = None

    @property
    def side(self) -> float:
        return float(-self.sign)

    def apply(self, x, tol=1e-14):
        """N x with B^{-1} evaluated by CG to relative residual ``tol`` (diagnostics)."""
        lo, hi = self.problem.b_extremes
        u = self.basis.project_out(x)
        s = conjugate_gradient_fn(self.problem.apply_b, self.problem.apply_a(u), tol, kappa=hi / lo)
        return self.lam * np.asarray(x, dtype=np.float64) + self.sign * self.basis.project_out(s)

    def _warm_inner(self, x0):
        if self._cache is None or not np.any(x0):
            return np.zeros_like(x0)
        x_last, s_last = self._cache
        den = float(x_last @ x_last)
        if den == 0.0:
            return np.zeros_like(x0)
        return (float(x_last @ x0) / den) * s_last

    def solve(self, chi, tol, x0=None):
        problem = self.problem
        chi = np.asarray(chi, dtype=np.float64)
        if chi.shape[0] != problem.dim:
            raise DimensionError(f"rhs length {chi.shape[0]} does not match dimension {problem.dim}")
        if tol <= 0:
            raise ValueError("tol must be positive")
        lo, hi = problem.b_extremes
        chi_b = math.sqrt(max(float(chi @ problem.apply_b(chi)), 0.0))
        self.stats.solves += 1
        if chi_b == 0.0:
            return np.zeros_like(chi)
        tol_eff = max(tol, self.floors.outer * chi_b / self.sigma)
        x0 = np.zeros_like(chi) if x0 is None else np.array(x0, dtype=np.float64)
        if self.backend == "svrg-shifted":
            return self._solve_stochastic(chi, tol_eff, x0)
        T = agd_planned_iterations(self.L, self.sigma, chi_b / (self.sigma * tol_eff))
        eps_mv = tol_eff * self.sigma * math.sqrt(lo / hi) / (64.0 * T)
        tol_s = eps_mv / math.sqrt(hi)
        inner = kernels.INNER_CG if self.backend == "cg" else kernels.INNER_SVRG
        floor = self.floors.cg if self.backend == "cg" else self.floors.svrg
        cg_cap = int(10 * math.sqrt(hi / lo) * math.log(1.0 / max(floor, 1e-300)) + 50)
        eta = 0.0
        if self.backend == "svrg":
            eta = svrg_step(problem)
        s0 = self._warm_inner(x0)
        y, s, x, iters, status, counter, cg_it, sv_ep, resid = kernels.agd_shifted(
            problem.kernel_ops, self.lam, self.side, self.basis.cols, self.basis.bcols, chi, x0, s0,
            self.L, self.sigma, tol_eff, 3 * T + 20, inner, tol_s, floor, cg_cap, eta, lo, hi,
            svrg_max_epochs(problem) if self.backend == "svrg" else 0, self.rng.key, self.rng.counter)
        self.rng.counter = counter
        self.stats.inner_matvecs += int(iters)
        self.stats.cg_iters += int(cg_it)
        self.stats.svrg_epochs += int(sv_ep)
        self._cache = (x, s)
        if status != kernels.OK:
            what = {kernels.CAP: f"iteration cap {3 * T + 20} reached",
                    kernels.INNER_FAIL: f"inner {self.backend} solve failed",
                    kernels.NONFINITE: "non-finite residual"}[status]
            raise NonConvergenceError(
                f"shifted solve: {what} (residual {resid:.3e}, target {tol_eff * self.sigma:.3e})",
                residual=resid)
        return y

    def _solve_stochastic(self, chi, tol_eff, z0):
        problem = self.problem
        lo, _ = problem.b_extremes
        basis = self.basis
        av = basis.acols
        g = basis.cols.T @ av
        bw = problem.apply_b(chi)
        eta = 1.0 / (8.0 * shifted_component_smoothness(problem, self.lam, basis))
        tol_grad = tol_eff * self.sigma * math.sqrt(lo)
        cap = svrg_max_epochs(problem, shifted=True)
        z, epochs, gnorm, counter, ok = kernels.svrg_shifted(
            problem.kernel_ops, self.lam, self.side, basis.cols, av, basis.bcols, g, bw, z0, tol_grad,
            eta, cap, self.rng.key, self.rng.counter)
        self.rng.counter = counter
        self.stats.svrg_epochs += int(epochs)
        self.stats.inner_matvecs += int(epochs) + 1
        if not ok:
            gap = gnorm * gnorm / (2.0 * self.sigma * lo)
            raise NonConvergenceError(
                f"stochastic shifted solve: epoch cap {cap} reached, objective gap estimate {gap:.3e}",
                residual=gnorm)
        return z


SVRG_STEP_DIVISOR = 2.0


def svrg_step(problem) -> float:
    """Step 1/(c max_i L_i) for the least-squares finite sum."""
    return 1.0 / (SVRG_STEP_DIVISOR * problem.max_component_smoothness)


def svrg_max_epochs(problem, shifted=False) -> int:
    return 200000 if shifted else 20000


def shifted_component_smoothness(problem: CcaProblem, lam, basis: ImplicitBasis) -> float:
    """Upper bound on max_i ||Hessian of the i-th shifted component||."""
    rx = problem.row_sq_x + problem.gamma_x
    ry = problem.row_sq_y + problem.gamma_y
    cross = np.sqrt(problem.row_sq_x * problem.row_sq_y)
    base = float(np.max(abs(lam) * np.maximum(rx, ry) + cross))
    return base + q_norm_bound(basis)


def q_norm_bound(basis: ImplicitBasis) -> float:
    if basis.k == 0:
        return 0.0
    av, bv = basis.acols, basis.bcols
    na, nb = np.linalg.norm(av, 2), np.linalg.norm(bv, 2)
    g = basis.cols.T @ av
    return float(2 * na * nb + nb * nb * np.linalg.norm(g, 2))


def q_apply(basis: ImplicitBasis, u):
    """Q u for Q = B V V^T A + A V V^T B - B V V^T A V V^T B using thin factors (O(kd))."""
    if basis.k == 0:
        return np.zeros_like(np.asarray(u, dtype=np.float64))
    av, bv = basis.acols, basis.bcols
    g = basis.cols.T @ av
    t1 = av.T @ u
    t2 = bv.T @ u
    return bv @ (t1 - g @ t2) + av @ t2


def solve_shifted(op: ShiftedOperator, chi, tol: float, x0=None):
    """xi with ||B^{1/2}(xi - N^{-1} chi)|| <= tol (explicit-coordinate error)."""
    return op.solve(chi, tol, x0)


# ---------------------------------------------------------------------------
# SVRG solvers


def svrg_binv_a(problem: CcaProblem, w, tol: float, seed: int, x0=None, max_epochs=None):
    """w' with ||w' - B^{-1} A w|| <= tol via SVRG on the least-squares finite sum."""
    if not isinstance(problem, CcaProblem):
        raise TypeError("svrg_binv_a needs a CcaProblem")
    w = np.asarray(w, dtype=np.float64)
    if w.shape[0] != problem.dim:
        raise DimensionError(f"vector length {w.shape[0]} does not match dimension {problem.dim}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo, _ = problem.b_extremes
    rng = RngStream(seed, label=1)
    eta = svrg_step(problem)
    cap = svrg_max_epochs(problem) if max_epochs is None else int(max_epochs)
    x0 = np.zeros(problem.dim) if x0 is None else x0
    x, epochs, gnorm, _, ok = kernels.svrg_binv_a(problem.kernel_ops, w, x0, tol, eta, lo, cap,
                                                  rng.key, rng.counter)
    if not ok:
        raise NonConvergenceError(
            f"SVRG epoch cap {cap} reached, objective gap estimate {gnorm * gnorm / (2 * lo):.3e}",
            residual=gnorm)
    return x


def svrg_shifted_cca(problem: CcaProblem, lam, sign, basis, w, tol: float, seed: int,
                     sigma=None, z0=None):
    """xi ~ N^{-1} w by SVRG on the shifted sum-of-nonconvex objective."""
    if not isinstance(problem, CcaProblem):
        raise TypeError("svrg_shifted_cca needs a CcaProblem")
    op = ShiftedOperator(problem, lam, sign, basis, backend="svrg-shifted", sigma=sigma,
                         rng=RngStream(seed, label=2))
    return op.solve(w, tol, z0)
