import math

import numpy as np
import pytest

from lazy_spectra.errors import ScheduleError
from lazy_spectra.matrix import GenEvProblem, SymmetricMatrix
from lazy_spectra.oracle import dense_genev
from lazy_spectra.shift_invert import (AppxPcaSchedule, DELTA_FACTOR, appx_pca_pm, inexact_power,
                                       power_error_growth, power_iterations, ran_init)
from lazy_spectra.synthetic import random_orthogonal, random_symmetric

DELTA, EPS = 0.1, 0.01


def _sched(d, delta=DELTA, eps=EPS, p=0.1, theta=1.0, mode="practical"):
    return AppxPcaSchedule(delta, eps, p, d, theta, mode)


def _problem(m, b=None):
    b = np.eye(m.shape[0]) if b is None else b
    return GenEvProblem(SymmetricMatrix.from_dense(m), SymmetricMatrix.from_dense(b))


# -- schedule -----------------------------------------------------------------


def test_schedule_formulas():
    s = _sched(20)
    assert s.m1 == math.ceil(4 * math.log(288 * 20 / 0.01))
    assert s.m2 == math.ceil(math.log(36 * 20 / (0.01 * 0.01)))
    assert s.log_eps1 == pytest.approx(math.log(1 / (64 * s.m1)) + s.m1 * math.log(DELTA / 48))
    assert s.log_eps2 == pytest.approx(math.log(EPS / (8 * s.m2)) + s.m2 * math.log(DELTA / 48))
    assert s.eps1 == 1e-12 * DELTA
    exact = _sched(2, delta=0.5, eps=0.5, p=0.5, mode="verbatim")
    assert exact.eps1 == pytest.approx(math.exp(exact.log_eps1))
    assert exact.as_dict()["delta_factor"] == DELTA_FACTOR


def test_schedule_validation():
    for bad in [dict(delta=0.6), dict(eps=1.0), dict(p=0.0), dict(theta=0.5), dict(mode="x")]:
        with pytest.raises(ValueError):
            _sched(5, **bad)


def test_power_iteration_count_and_growth():
    assert power_iterations(4.0, 0.1, 0.1, 10, 1.0) == math.ceil(2 * math.log(9 * 10 / (0.01 * 0.1)))
    assert power_error_growth([2.0, 0.5], 3) == pytest.approx(2 * 3 * 8 / 0.125)
    assert power_error_growth([0.5, 0.25], 2) == pytest.approx(2 * 2 / 0.0625)


# -- random start --------------------------------------------------------------


def test_ran_init_identity():
    w = ran_init(SymmetricMatrix.identity(7), 3)
    assert abs(np.linalg.norm(w) - 1) <= 1e-12


def test_ran_init_b_unit():
    for seed in range(20):
        w = ran_init(SymmetricMatrix.diag([4.0, 1.0]), seed)
        assert abs(4 * w[0] ** 2 + w[1] ** 2 - 1) <= 1e-12


def test_ran_init_concentration():
    d, p, theta = 20, 0.1, 1.0
    u = np.zeros(d)
    u[0] = 1.0
    eye = SymmetricMatrix.identity(d)
    small = sum((u @ ran_init(eye, s)) ** 2 < p * p * theta / (9 * d) for s in range(10_000))
    assert small / 10_000 <= p


# -- inexact power ----------------------------------------------------------------


def _exact(op):
    return lambda chi, tol, x0=None: op @ chi


def test_power_zero_steps_normalizes():
    b = np.diag([4.0, 1.0])
    w = inexact_power(_exact(np.eye(2)), [1.0, 1.0], 0, 1e-3, lambda v: b @ v)
    assert np.allclose(w, np.array([1.0, 1.0]) / math.sqrt(5))


def test_power_ratio():
    op = np.diag([1.0, 0.5])
    w = np.array([0.6, 0.8])
    tan = w[1] / w[0]
    for _ in range(5):
        w2 = inexact_power(_exact(op), w, 1, 0.0, lambda v: v)
        tan2 = abs(w2[1] / w2[0])
        assert tan2 <= tan / 2 + 1e-15
        w, tan = w2, tan2


@pytest.mark.parametrize("seed", range(10))
def test_power_error_bound(seed):
    rng = np.random.default_rng(seed)
    m = random_symmetric(15, seed, 0.8)
    inv = np.linalg.inv(1.2 * np.eye(15) - m)
    eps, t = 1e-3, 10
    step = (eps / 2) / power_error_growth(np.linalg.eigvalsh(inv), t)

    def noisy(chi, tol, x0=None):
        e = rng.standard_normal(15)
        return inv @ chi + tol * e / np.linalg.norm(e)

    w0 = rng.standard_normal(15)
    got = inexact_power(noisy, w0, t, step, lambda v: v)
    want = np.linalg.matrix_power(inv, t) @ w0
    want /= np.linalg.norm(want)
    angle = math.acos(min(1.0, abs(float(got @ want))))
    assert angle <= eps / 2


# -- two-sided search ----------------------------------------------------------------------


@pytest.mark.parametrize("top,sign", [(0.9, 1), (-0.9, -1)])
def test_appx_pca_diagonal(top, sign):
    out = appx_pca_pm(_problem(np.diag([top, 0.1])), schedule=_sched(2), seed=1)
    assert out.sign == sign
    assert out.w[0] ** 2 >= 0.99


def test_appx_pca_zero_operator_hits_round_cap():
    with pytest.raises(ScheduleError):
        appx_pca_pm(_problem(np.zeros((3, 3))), schedule=_sched(3), seed=0)


def _check_contract(m, out, delta, eps):
    spec = np.linalg.eigh(m)
    lstar = np.abs(spec[0]).max()
    w = out.w
    mass = spec[1].T @ w
    lam = out.sign * spec[0]
    small = lam <= (1 - delta / 2) * lstar
    assert float(mass[small] @ mass[small]) <= eps
    assert out.sign * float(w @ m @ w) >= (1 - delta / 2) * (1 - 3 * eps) * lstar


@pytest.mark.parametrize("seed", range(50))
def test_appx_pca_random(seed):
    m = random_symmetric(20, seed, 0.8)
    sched = _sched(20)
    out = appx_pca_pm(_problem(m), schedule=sched, seed=seed)
    lstar = 0.8
    assert abs(float(out.w @ m @ out.w)) >= (1 - DELTA / 2) * (1 - 3 * EPS) * lstar
    _check_contract(m, out, DELTA, EPS)
    # shift monotonicity, lambda > lambda*, exact call count
    lams = [1 + DELTA] + [st.lam for st in out.trace]
    assert all(b < a for a, b in zip(lams, lams[1:]))
    assert all(l > lstar for l in lams)
    assert out.calls == out.rounds * (2 * sched.m1 + 2) + sched.m2
    # sandwich with slack 2
    gap = out.final_lambda - lstar
    assert gap >= DELTA * out.final_lambda / 48 / 2
    assert gap <= 2 * DELTA * lstar / 13
    assert out.stats.max_kappa <= 96 / DELTA * 4


def test_appx_pca_with_b_metric():
    rng = np.random.default_rng(0)
    g = rng.standard_normal((10, 10))
    b = g @ g.T / 10 + np.eye(10)
    q = random_orthogonal(10, rng)
    vals = np.linspace(-0.5, 0.9, 10)
    bh = np.linalg.cholesky(b)
    a = bh @ (q * vals) @ q.T @ bh.T
    out = appx_pca_pm(_problem(a, b), schedule=_sched(10, theta=float(np.linalg.cond(b))), seed=4)
    spec = dense_genev(a, b)
    assert out.sign == 1
    assert float(out.w @ b @ spec.vectors[:, 0]) ** 2 >= 0.9


@pytest.mark.parametrize("seed", range(50))
def test_sign_correctness(seed):
    rng = np.random.default_rng(1000 + seed)
    top = 0.8 * (1 if seed % 2 else -1)
    other = -top / (1 + DELTA) / 1.05
    vals = np.concatenate([[top, other], rng.uniform(-abs(other), abs(other), 10)])
    q = random_orthogonal(12, rng)
    m = (q * vals) @ q.T
    m = 0.5 * (m + m.T)
    out = appx_pca_pm(_problem(m), schedule=_sched(12), seed=seed)
    assert out.sign == np.sign(top)


def test_trace_export_keys():
    out = appx_pca_pm(_problem(np.diag([0.9, 0.1])), schedule=_sched(2), seed=1)
    d = out.trace[0].as_dict()
    assert {"s", "lambda", "delta", "side"} <= set(d)
    assert d["s"] == 1
