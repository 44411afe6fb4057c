"""Top-k canonical correlation pairs by symmetric-pair deflation of the block pencil."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AccuracyError, InputError, LazySpectraError, ScheduleError
from .lazyev import GenEvConfig, _with_round, round_seed
from .matrix import CcaProblem, ImplicitBasis
from .shift_invert import appx_pca_pm
from .solvers import Floors, SolveStats, resolve_backend

SPLIT_WINDOW = (0.05, 0.95)


@dataclass
class CanonicalEstimate:
    phi: np.ndarray
    psi: np.ndarray
    sigma: float


@dataclass
class CcaResult:
    pairs: list
    basis: ImplicitBasis
    traces: list
    seed: int
    config: dict
    schedule: dict
    residual_exhausted: bool = False
    stats: SolveStats = field(default_factory=SolveStats)
    calls: list = field(default_factory=list)
    signs: list = field(default_factory=list)

    @property
    def sigmas(self):
        return np.array([p.sigma for p in self.pairs])

    @property
    def phi(self):
        return np.column_stack([p.phi for p in self.pairs]) if self.pairs else np.zeros((0, 0))

    @property
    def psi(self):
        return np.column_stack([p.psi for p in self.pairs]) if self.pairs else np.zeros((0, 0))


def build_cca_problem(x, y, gamma_x=0.0, gamma_y=0.0) -> CcaProblem:
    return CcaProblem(x, y, gamma_x, gamma_y)


def _block_orthogonalize(v, basis: ImplicitBasis, dx, passes=2):
    """Remove previous xi (and zeta) directions blockwise; their block metric norm is 1/sqrt(2)."""
    if basis.k == 0:
        return v
    cols, bcols = basis.cols[:, 0::2], basis.bcols[:, 0::2]
    v = v.copy()
    for _ in range(passes):
        for lo, hi in ((0, dx), (dx, v.shape[0])):
            c, bc = cols[lo:hi], bcols[lo:hi]
            v[lo:hi] -= 2.0 * c @ (bc.T @ v[lo:hi])
    return v


def split_rescale(problem: CcaProblem, v, window=SPLIT_WINDOW):
    """(xi; zeta) with each block rescaled to block metric norm 1/sqrt(2).

    Returns (xi, zeta, fraction) where fraction is the x-block share of v's B-norm.
    """
    dx = problem.dx
    bv = problem.apply_b(v)
    nx = float(v[:dx] @ bv[:dx])
    ny = float(v[dx:] @ bv[dx:])
    tot = nx + ny
    frac = nx / tot if tot > 0 else 0.0
    if not window[0] <= frac <= window[1]:
        raise AccuracyError(
            f"block split {frac:.3f} outside [{window[0]}, {window[1]}]; inner accuracy too loose")
    xi = v[:dx] / math.sqrt(2.0 * nx)
    zeta = v[dx:] / math.sqrt(2.0 * ny)
    return xi, zeta, frac


def recover_canonical_pairs(basis: ImplicitBasis, problem: CcaProblem):
    """Pairs (phi, psi, sigma) from a symmetric-pair basis; the sign is folded into phi."""
    dx = problem.dx
    out = []
    for j in range(0, basis.k, 2):
        col = basis.cols[:, j]
        phi = math.sqrt(2.0) * col[:dx]
        psi = math.sqrt(2.0) * col[dx:]
        y = problem.y.values @ psi
        sigma = float((problem.x.values @ phi) @ y) / problem.n
        if sigma < 0:
            phi, sigma = -phi, -sigma
        out.append(CanonicalEstimate(phi, psi, sigma))
    return out


def lazy_cca(problem: CcaProblem, cfg: GenEvConfig) -> CcaResult:
    if not isinstance(problem, CcaProblem):
        raise TypeError("lazy_cca needs a CcaProblem")
    if cfg.k > min(problem.dx, problem.dy):
        raise InputError(f"k={cfg.k} exceeds min(dx, dy)={min(problem.dx, problem.dy)}")
    backend = resolve_backend(problem, cfg.backend)
    schedule = cfg.schedule(problem.dim, problem.kappa_b)
    stats = SolveStats()
    floors = Floors()
    basis = ImplicitBasis(problem)
    traces, calls, signs = [], [], []
    exhausted = False
    dx = problem.dx
    for s in range(1, cfg.k + 1):
        try:
            res = appx_pca_pm(problem, basis, schedule, seed=round_seed(cfg.seed, s), backend=backend,
                              floors=floors, stats=stats)
            v = _block_orthogonalize(basis.project_out(res.w), basis, dx)
            xi, zeta, _ = split_rescale(problem, v)
        except ScheduleError:
            exhausted = True
            break
        except LazySpectraError as exc:
            raise _with_round(exc, s)
        pair = np.column_stack([np.concatenate([xi, zeta]), np.concatenate([-xi, zeta])])
        basis = basis.extended(pair)
        traces.append([t.as_dict() for t in res.trace])
        calls.append(res.calls)
        signs.append(res.sign)
    pairs = recover_canonical_pairs(basis, problem)
    return CcaResult(pairs, basis, traces, cfg.seed, cfg.as_dict(), schedule.as_dict(), exhausted, stats,
                     calls, signs)


def cca_gap_dependent(problem, k=1, gap=0.1, eps=0.1, p=0.1, seed=0, backend="auto", **kw):
    cfg = GenEvConfig(k=k, mode="gap-dependent", gap=gap, eps=eps, p=p, seed=seed, backend=backend, **kw)
    return lazy_cca(problem, cfg)


def cca_gap_free(problem, k=1, eps=0.1, p=0.1, seed=0, backend="auto", **kw):
    cfg = GenEvConfig(k=k, mode="gap-free", eps=eps, p=p, seed=seed, backend=backend, **kw)
    return lazy_cca(problem, cfg)
