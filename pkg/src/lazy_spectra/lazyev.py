"""Deflation loop for the top-k generalized eigenvectors (largest |lambda|), in implicit coordinates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InputError, LazySpectraError, PreconditionError, ScheduleError
from .matrix import GenEvProblem, ImplicitBasis, SymmetricMatrix
from .shift_invert import AppxPcaSchedule, appx_pca_pm
from .solvers import Floors, SolveStats, resolve_backend

MODES = ("gap-dependent", "gap-free")
PRECONDITION_SAMPLES = 20
PRECONDITION_SLACK = 1e-9


def round_seed(seed: int, s: int) -> int:
    """Per-round seed derived from the run seed."""
    return int(kernels.mix64((kernels.mix64(int(seed) & (2**64 - 1)) + s) & (2**64 - 1)) >> 1)


def default_eps_pca(eps: float, delta: float, k: int) -> float:
    return min(1e-3, eps * eps * delta / (16.0 * k))


@dataclass
class GenEvConfig:
    k: int
    mode: str = "gap-free"
    gap: float | None = None
    eps: float = 0.1
    delta: float | None = None  # overrides the value implied by mode
    eps_pca: float | None = None
    p: float = 0.1
    backend: str = "auto"
    seed: int = 0
    schedule_mode: str = "practical"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "gap-dependent" and self.gap is None:
            raise ValueError("gap-dependent mode needs a gap")
        if self.mode == "gap-free" and self.gap is not None:
            raise ValueError("gap-free mode takes eps, not gap")
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if self.gap is not None and not 0 < self.gap < 1:
            raise ValueError(f"gap must lie in (0, 1), got {self.gap}")
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        d = self.effective_delta
        if not 0 < d < 1:
            raise ValueError(f"delta must lie in (0, 1), got {d}")
        e = self.effective_eps_pca
        if not 0 < e < 1:
            raise ValueError(f"eps_pca must lie in (0, 1), got {e}")

    @property
    def effective_delta(self) -> float:
        if self.delta is not None:
            return float(self.delta)
        return float(self.gap if self.mode == "gap-dependent" else self.eps)

    @property
    def effective_eps_pca(self) -> float:
        if self.eps_pca is not None:
            return float(self.eps_pca)
        return default_eps_pca(self.eps, self.effective_delta, self.k)

    def schedule(self, d: int, theta: float) -> AppxPcaSchedule:
        return AppxPcaSchedule(self.effective_delta / 2.0, self.effective_eps_pca, self.p / self.k, d,
                               max(theta, 1.0), self.schedule_mode)

    def as_dict(self):
        return {"k": self.k, "mode": self.mode, "gap": self.gap, "eps": self.eps,
                "delta": self.effective_delta, "eps_pca": self.effective_eps_pca, "p": self.p,
                "backend": self.backend, "seed": self.seed, "schedule_mode": self.schedule_mode}


@dataclass
class SpectralResult:
    basis: ImplicitBasis
    eigenvalues: np.ndarray  # signed Rayleigh values v^T A v
    signs: list
    traces: list
    seed: int
    config: dict
    schedule: dict
    residual_exhausted: bool = False
    stats: SolveStats = field(default_factory=SolveStats)
    calls: list = field(default_factory=list)

    @property
    def vectors(self):
        return self.basis.cols

    @property
    def k(self) -> int:
        return self.basis.k

    @property
    def b_orthonormality_error(self) -> float:
        return self.basis.gram_error()


def as_problem(a, b=None) -> GenEvProblem:
    if isinstance(a, GenEvProblem):
        return a
    if b is None:
        raise InputError("B is required")
    a = a if isinstance(a, SymmetricMatrix) else SymmetricMatrix.from_dense(a)
    b = b if isinstance(b, SymmetricMatrix) else SymmetricMatrix.from_dense(b)
    return GenEvProblem(a, b)


def check_pencil_bounds(problem, seed: int, samples: int = PRECONDITION_SAMPLES):
    """Sampled check of -B <= A <= B via random Rayleigh quotients."""
    rng = np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), 7]))
    worst = 0.0
    for _ in range(samples):
        w = rng.standard_normal(problem.dim)
        den = float(w @ problem.apply_b(w))
        worst = max(worst, abs(float(w @ problem.apply_a(w))) / den)
    if worst > 1.0 + PRECONDITION_SLACK:
        raise PreconditionError(
            f"sampled |w^T A w| / w^T B w = {worst:.6g} exceeds 1; rescale A so that -B <= A <= B")
    return worst


def b_orthonormalize(basis: ImplicitBasis, v, passes=2):
    """Project v out of the basis (repeated Gram-Schmidt) and B-normalize it."""
    for _ in range(passes):
        v = basis.project_out(v)
    nrm = math.sqrt(max(float(v @ basis.owner.apply_b(v)), 0.0))
    if not nrm > 0:
        raise LazySpectraError("new direction lies inside the current basis")
    return v / nrm


def _with_round(exc, s):
    exc.args = (f"round {s}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
    return exc


def lazy_ev(problem, cfg: GenEvConfig) -> SpectralResult:
    """k rounds of two-sided shift-and-invert followed by deflation of the found direction."""
    problem = as_problem(problem)
    d = problem.dim
    if cfg.k > d:
        raise InputError(f"k={cfg.k} exceeds the dimension {d}")
    backend = resolve_backend(problem, cfg.backend)
    check_pencil_bounds(problem, cfg.seed)
    schedule = cfg.schedule(d, problem.kappa_b)
    stats = SolveStats()
    floors = Floors()
    basis = ImplicitBasis(problem)
    signs, traces, calls = [], [], []
    exhausted = False
    for s in range(1, cfg.k + 1):
        try:
            out = appx_pca_pm(problem, basis, schedule, seed=round_seed(cfg.seed, s), backend=backend,
                              floors=floors, stats=stats)
        except ScheduleError:
            exhausted = True
            break
        except LazySpectraError as exc:
            raise _with_round(exc, s)
        v = b_orthonormalize(basis, out.w)
        basis = basis.extended(v)
        signs.append(out.sign)
        traces.append([t.as_dict() for t in out.trace])
        calls.append(out.calls)
    vals = np.array([float(c @ problem.apply_a(c)) for c in basis.cols.T])
    return SpectralResult(basis, vals, signs, traces, cfg.seed, cfg.as_dict(), schedule.as_dict(),
                          exhausted, stats, calls)


def genev_gap_dependent(a, b=None, k=1, gap=0.1, eps=0.1, p=0.1, seed=0, backend="auto", **kw):
    """Top-k with a subspace-leakage guarantee, given a lower bound on the relative eigengap."""
    cfg = GenEvConfig(k=k, mode="gap-dependent", gap=gap, eps=eps, p=p, seed=seed, backend=backend, **kw)
    return lazy_ev(as_problem(a, b), cfg)


def genev_gap_free(a, b=None, k=1, eps=0.1, p=0.1, seed=0, backend="auto", **kw):
    """Top-k with per-vector Rayleigh guarantees and no gap assumption."""
    cfg = GenEvConfig(k=k, mode="gap-free", eps=eps, p=p, seed=seed, backend=backend, **kw)
    return lazy_ev(as_problem(a, b), cfg)
