"""Two-sided shift-and-invert leading eigenvector search with inexact power iterations."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LazySpectraError, NonConvergenceError, ScheduleError
from .matrix import ImplicitBasis
from .solvers import Floors, RngStream, ShiftedOperator, SolveStats, resolve_backend

DELTA_FACTOR = 0.75  # Delta = DELTA_FACTOR / (max(w_a.v_a, w_b.v_b) - eps)
PRACTICAL_EPS_FLOOR = 1e-12  # practical per-step accuracy >= this * delta
MAX_REDRAWS = 8


@dataclass(frozen=True)
class AppxPcaSchedule:
    """Iteration counts and per-step inversion accuracies.

    ``log_eps1``/``log_eps2`` keep the formula values in log-space since they underflow
    quickly; ``eps1``/``eps2`` are what the solver is asked for.
    """

    delta: float
    eps: float
    p: float
    d: int
    theta: float = 1.0
    mode: str = "practical"

    def __post_init__(self):
        if not 0 < self.delta <= 0.5:
            raise ValueError(f"delta must lie in (0, 0.5], got {self.delta}")
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.mode not in ("practical", "verbatim"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.d < 1 or self.theta < 1:
            raise ValueError("need d >= 1 and theta >= 1")

    @property
    def m1(self) -> int:
        return int(math.ceil(4.0 * math.log(288.0 * self.d * self.theta / self.p**2)))

    @property
    def m2(self) -> int:
        return int(math.ceil(math.log(36.0 * self.d * self.theta / (self.p**2 * self.eps))))

    @property
    def log_eps1(self) -> float:
        return -math.log(64.0 * self.m1) + self.m1 * math.log(self.delta / 48.0)

    @property
    def log_eps2(self) -> float:
        return math.log(self.eps / (8.0 * self.m2)) + self.m2 * math.log(self.delta / 48.0)

    def _step(self, log_value):
        value = math.exp(log_value)
        if self.mode == "practical":
            value = max(value, PRACTICAL_EPS_FLOOR * self.delta)
        return value

    @property
    def eps1(self) -> float:
        return self._step(self.log_eps1)

    @property
    def eps2(self) -> float:
        return self._step(self.log_eps2)

    @property
    def max_rounds(self) -> int:
        # the shift gap shrinks by at least 8/5 per round
        return int(math.ceil(math.log(24.0 / self.delta) / math.log(1.6))) + 8

    @property
    def kappa_cap(self) -> float:
        return 4.0 * 96.0 / self.delta

    def as_dict(self):
        return {"delta": self.delta, "eps": self.eps, "p": self.p, "d": self.d, "theta": self.theta,
                "mode": self.mode, "m1": self.m1, "m2": self.m2, "eps1": self.eps1, "eps2": self.eps2,
                "log_eps1": self.log_eps1, "log_eps2": self.log_eps2,
                "delta_factor": DELTA_FACTOR, "max_rounds": self.max_rounds}


def power_iterations(kappa, eps, p, d, theta) -> int:
    """ceil(kappa/2 log(9 d theta / (p^2 eps)))."""
    return int(math.ceil(kappa / 2.0 * math.log(9.0 * d * theta / (p * p * eps))))


def power_error_growth(eigenvalues, t) -> float:
    """Upper bound 2t max(1, l1^t) / ld^t on the amplification of per-step errors."""
    ev = np.asarray(eigenvalues, dtype=np.float64)
    l1, ld = float(ev.max()), float(ev.min())
    return 2.0 * t * max(1.0, l1**t) / ld**t


@dataclass
class ShiftState:
    s: int
    lam: float
    delta: float
    side: str
    wv_plus: float
    wv_minus: float

    def as_dict(self):
        return {"s": self.s, "lambda": self.lam, "delta": self.delta, "side": self.side,
                "wv_plus": self.wv_plus, "wv_minus": self.wv_minus}


@dataclass
class PcaOutcome:
    sign: int
    w: np.ndarray
    trace: list
    calls: int
    final_lambda: float
    final_delta: float
    stats: SolveStats = field(default_factory=SolveStats)

    @property
    def rounds(self) -> int:
        return len(self.trace)


def _metric(owner):
    return owner.apply_b if hasattr(owner, "apply_b") else owner.matvec


def ran_init(B, seed):
    """Implicit random start w0 = v / sqrt(v^T B v) for Gaussian v (Philox stream)."""
    apply_b = _metric(B)
    d = B.dim
    rng = np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))
    for _ in range(MAX_REDRAWS):
        v = rng.standard_normal(d)
        q = float(v @ apply_b(v))
        if q > 0 and math.isfinite(q):
            w = v / math.sqrt(q)
            # one polishing pass brings the B-norm to 1 within rounding
            return w / math.sqrt(float(w @ apply_b(w)))
    raise LazySpectraError(f"random start degenerate after {MAX_REDRAWS} draws")


def inexact_power(invert, w0, m, eps_step, metric):
    """m steps of w <- normalize(invert(w)); returns the B-normalized final iterate.

    ``invert(chi, tol, x0)`` returns an approximation of the inverse applied to chi with
    B-norm error at most tol; ``metric`` applies B.
    """
    w = np.asarray(w0, dtype=np.float64)
    nrm = math.sqrt(float(w @ metric(w)))
    if nrm == 0.0:
        raise ValueError("start vector has zero B-norm")
    w = w / nrm
    scale = None
    for _ in range(int(m)):
        x0 = None if scale is None else scale * w
        u = invert(w, eps_step, x0)
        scale = math.sqrt(float(u @ metric(u)))
        if not scale > 0 or not math.isfinite(scale):
            raise NonConvergenceError("power iterate vanished or overflowed")
        w = u / scale
    return w


class _Side:
    """One shifted family lam I -/+ M_s with warm-start bookkeeping for a fixed round."""

    def __init__(self, problem, basis, lam, sign, sigma, backend, rng, stats, floors, kappa_cap):
        self.op = ShiftedOperator(problem, lam, sign, basis, backend=backend, sigma=sigma, L=2.0 * lam,
                                  rng=rng, stats=stats, floors=floors, kappa_cap=kappa_cap)
        self.metric = problem.apply_b
        self.calls = 0
        self.lam = lam

    def invert(self, chi, tol, x0=None):
        self.calls += 1
        if x0 is None:
            x0 = chi / self.lam
        return self.op.solve(chi, tol, x0)

    def eps_effective(self, tol):
        return max(tol, self.op.floors.outer / self.op.sigma)

    def power(self, w0, m, tol):
        w = inexact_power(self.invert, w0, m, tol, self.metric)
        v = self.invert(w, tol, self._last_scale_guess(w))
        return w, v

    def _last_scale_guess(self, w):
        x_last, _ = self.op._cache if self.op._cache is not None else (None, None)
        if x_last is None:
            return None
        nrm = math.sqrt(max(float(x_last @ self.metric(x_last)), 0.0))
        return nrm * w


def appx_pca_pm(problem, basis=None, schedule=None, seed=0, backend="auto", floors=None,
                stats=None, w0=None):
    """Two-sided leading eigenvector of the deflated pencil.

    Returns a PcaOutcome with sign +1/-1, the B-unit implicit vector and the shift history.
    """
    if schedule is None:
        raise ValueError("schedule is required")
    backend = resolve_backend(problem, backend)
    basis = basis if basis is not None else ImplicitBasis(problem)
    floors = floors if floors is not None else Floors()
    stats = stats if stats is not None else SolveStats()
    rng = RngStream(seed, label=3)
    if w0 is None:
        w0 = ran_init(problem, seed)
    w0 = basis.project_out(w0)
    delta = schedule.delta
    m1, m2 = schedule.m1, schedule.m2
    lam = 1.0 + delta
    sigma = delta
    trace = []
    calls = 0
    last = (0.0, 0.0)
    while True:
        s = len(trace) + 1
        if s > schedule.max_rounds:
            raise ScheduleError(
                f"shift schedule did not settle in {schedule.max_rounds} rounds (lambda={lam:.3e}); "
                "the leading magnitude may be zero")
        plus = _Side(problem, basis, lam, -1, sigma, backend, rng, stats, floors, schedule.kappa_cap)
        minus = _Side(problem, basis, lam, +1, sigma, backend, rng, stats, floors, schedule.kappa_cap)
        wa, va = plus.power(w0, m1, schedule.eps1)
        wb, vb = minus.power(w0, m1, schedule.eps1)
        calls += plus.calls + minus.calls
        bva = float(wa @ problem.apply_b(va))
        bvb = float(wb @ problem.apply_b(vb))
        eps_eff = max(plus.eps_effective(schedule.eps1), minus.eps_effective(schedule.eps1))
        den = max(bva, bvb) - eps_eff
        if not den > 0:
            raise ScheduleError(f"round {s}: shifted inverse estimate {max(bva, bvb):.3e} not above accuracy")
        gap = DELTA_FACTOR / den
        lam -= gap / 2.0
        sigma = gap / 2.0
        last = (bva, bvb)
        trace.append(ShiftState(s, lam, gap, "+" if bva >= bvb else "-", bva, bvb))
        if gap <= delta * lam / 12.0:
            break
    sign = +1 if last[0] >= last[1] else -1
    final = _Side(problem, basis, lam, -sign, sigma, backend, rng, stats, floors, schedule.kappa_cap)
    w = inexact_power(final.invert, w0, m2, schedule.eps2, problem.apply_b)
    calls += final.calls
    return PcaOutcome(sign, w, trace, calls, lam, trace[-1].delta, stats)
