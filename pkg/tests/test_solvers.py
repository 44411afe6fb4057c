import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lazy_spectra.errors import ConditioningError, NonConvergenceError
from lazy_spectra.matrix import CcaProblem, GenEvProblem, ImplicitBasis, SymmetricMatrix
from lazy_spectra.oracle import (dense_genev, dense_shifted_apply, dense_shifted_solve, explicit_q,
                                 sym_pow)
from lazy_spectra.solvers import (QuadraticOracle, RngStream, ShiftedOperator, agd_inexact,
                                  conjugate_gradient, conjugate_gradient_fn, q_apply,
                                  shifted_component_smoothness, solve_shifted, svrg_binv_a,
                                  svrg_shifted_cca)


def _b_err(b, e):
    return math.sqrt(float(e @ b @ e))


# -- conjugate gradient ------------------------------------------------------------


def test_cg_examples():
    x = conjugate_gradient(SymmetricMatrix.identity(2), [5.0, -3.0], 1e-12)
    assert np.array_equal(x, [5.0, -3.0])
    assert np.allclose(conjugate_gradient(SymmetricMatrix.diag([2, 4]), [2.0, 4.0], 1e-12), [1, 1])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_cg_matches_dense(seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((20, 20))
    b = g @ g.T + 0.5 * np.eye(20)
    rhs = rng.standard_normal(20)
    x = conjugate_gradient(SymmetricMatrix.from_dense(b), rhs, 1e-10)
    want = np.linalg.solve(b, rhs)
    assert np.linalg.norm(x - want) <= 1e-8 * np.linalg.norm(want) * np.linalg.cond(b) / 10 + 1e-8
    assert np.linalg.norm(b @ x - rhs) <= 1e-10 * np.linalg.norm(rhs)


def test_cg_cap_reports_residual():
    b = np.diag(np.logspace(0, 6, 50))
    with pytest.raises(NonConvergenceError) as info:
        conjugate_gradient_fn(lambda v: b @ v, np.ones(50), 1e-14, maxiter=3)
    assert info.value.residual > 0


def test_cg_rejects_indefinite():
    with pytest.raises(NonConvergenceError):
        conjugate_gradient_fn(lambda v: np.array([1.0, -1.0]) * v, np.array([1.0, 1.0]), 1e-10)


# -- accelerated gradient descent ---------------------------------------------------


def test_agd_isotropic_one_step():
    orc = QuadraticOracle(lambda x: x, 1.0, 1.0)
    assert np.array_equal(agd_inexact(orc, np.ones(2), 1), np.zeros(2))


def test_agd_ill_conditioned():
    h = np.array([1.0, 100.0])
    orc = QuadraticOracle(lambda x: h * x, 100.0, 1.0)
    y = agd_inexact(orc, np.ones(2), 400)
    assert float(y @ y) <= 1e-10


def test_agd_noise_floor():
    h = np.array([1.0, 100.0])
    eps = 1e-3
    for seed in range(20):
        rng = np.random.default_rng(seed)

        def grad(x):
            n = rng.standard_normal(2)
            return h * x + eps * n / np.linalg.norm(n)

        y = agd_inexact(QuadraticOracle(grad, 100.0, 1.0, eps), np.ones(2), 400)
        assert 0.5 * float(y @ (h * y)) <= 10 * eps**2 / 1.0


def test_quadratic_oracle_validates():
    with pytest.raises(ValueError):
        QuadraticOracle(lambda x: x, 1.0, 2.0)
    orc = QuadraticOracle(lambda x: x, 9.0, 1.0)
    assert orc.tau == pytest.approx(2 / (1 + math.sqrt(73)))
    assert orc.eta == pytest.approx(1 / (orc.tau * 9.0))


# -- shifted operator --------------------------------------------------------------


def test_shifted_zero_matrix():
    p = GenEvProblem(SymmetricMatrix.from_dense(np.zeros((3, 3))), SymmetricMatrix.identity(3))
    op = ShiftedOperator(p, 2.0, -1, sigma=2.0, L=2.0)
    chi = np.array([1.0, -2.0, 4.0])
    assert np.allclose(solve_shifted(op, chi, 1e-10), chi / 2, atol=1e-9)


def test_shifted_diagonal_example():
    p = GenEvProblem(SymmetricMatrix.diag([0.5, 0.0]), SymmetricMatrix.identity(2))
    op = ShiftedOperator(p, 1.0, -1)
    assert np.allclose(op.apply(np.array([2.0, 1.0])), [1.0, 1.0])
    assert np.allclose(solve_shifted(op, np.array([1.0, 1.0]), 1e-10), [2.0, 1.0], atol=1e-8)


def test_shifted_cca_dense():
    rng = np.random.default_rng(1)
    x, y = rng.standard_normal((100, 5)), rng.standard_normal((100, 5))
    p = CcaProblem(x, y)
    a, b = p.dense_a(), p.dense_b()
    s1 = abs(dense_genev(a, b).eigenvalues[0])
    op = ShiftedOperator(p, 1.2 * s1, -1, backend="cg")
    chi = rng.standard_normal(10)
    tol = 1e-7
    got = solve_shifted(op, chi, tol)
    want = dense_shifted_solve(a, b, np.zeros((10, 0)), 1.2 * s1, -1, chi)
    assert _b_err(b, got - want) <= tol


def _random_pencil(seed, d=12):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d, d))
    h = rng.standard_normal((d, d))
    b = h @ h.T / d + np.eye(d)
    a = 0.5 * (g + g.T)
    bmh = sym_pow(b, -0.5)
    a /= np.abs(np.linalg.eigvalsh(bmh @ a @ bmh)).max()
    return a, b


@pytest.mark.parametrize("seed", range(50))
def test_shifted_residual_contract(seed):
    a, b = _random_pencil(seed)
    spec = dense_genev(a, b)
    k = seed % 3
    v = spec.vectors[:, :k]
    p = GenEvProblem(SymmetricMatrix.from_dense(a), SymmetricMatrix.from_dense(b))
    sign = 1 if seed % 2 else -1
    lam = 1.1
    op = ShiftedOperator(p, lam, sign, ImplicitBasis(p, v))
    chi = np.random.default_rng(seed + 100).standard_normal(12)
    tol = 1e-6
    xi = solve_shifted(op, chi, tol)
    want = dense_shifted_solve(a, b, v, lam, sign, chi)
    assert _b_err(b, xi - want) <= tol
    r = dense_shifted_apply(a, b, v, lam, sign, xi) - chi
    assert _b_err(b, r) <= (1 + op.L / op.sigma) * tol


def test_conditioning_cap():
    p = GenEvProblem(SymmetricMatrix.diag([0.9, 0.1]), SymmetricMatrix.identity(2))
    with pytest.raises(ConditioningError):
        ShiftedOperator(p, 0.9, -1)
    with pytest.raises(ConditioningError):
        ShiftedOperator(p, 1.0, -1, sigma=0.01, L=2.0, kappa_cap=100)


def test_q_thin_factors_match_dense():
    a, b = _random_pencil(3)
    p = GenEvProblem(SymmetricMatrix.from_dense(a), SymmetricMatrix.from_dense(b))
    v = dense_genev(a, b).vectors[:, :3]
    basis = ImplicitBasis(p, v)
    u = np.random.default_rng(0).standard_normal(12)
    assert np.allclose(q_apply(basis, u), explicit_q(a, b, v) @ u, atol=1e-12)
    # A - Q equals the two-sided projection
    proj = np.eye(12) - v @ v.T @ b
    assert np.allclose(a - explicit_q(a, b, v), proj.T @ a @ proj, atol=1e-12)


# -- SVRG ---------------------------------------------------------------------------


def test_svrg_binv_a_examples():
    p = CcaProblem([[1.0]], [[1.0]])
    assert np.array_equal(svrg_binv_a(p, np.zeros(2), 1e-10, seed=1), np.zeros(2))
    assert np.allclose(svrg_binv_a(p, np.array([1.0, 0.0]), 1e-10, seed=1), [0.0, 1.0], atol=1e-10)


def test_svrg_binv_a_random():
    rng = np.random.default_rng(2)
    p = CcaProblem(rng.standard_normal((200, 10)), rng.standard_normal((200, 8)))
    w = rng.standard_normal(18)
    got = svrg_binv_a(p, w, 1e-8, seed=3)
    want = np.linalg.solve(p.dense_b(), p.dense_a() @ w)
    assert np.linalg.norm(got - want) <= 1e-8


def test_svrg_binv_a_cap():
    rng = np.random.default_rng(2)
    p = CcaProblem(rng.standard_normal((50, 4)), rng.standard_normal((50, 3)))
    with pytest.raises(NonConvergenceError) as info:
        svrg_binv_a(p, rng.standard_normal(7), 1e-14, seed=3, max_epochs=1)
    assert "gap estimate" in str(info.value)


def _cca(seed, n=60, dx=4, dy=3, gamma=0.05):
    rng = np.random.default_rng(seed)
    return CcaProblem(rng.standard_normal((n, dx)), rng.standard_normal((n, dy)), gamma, gamma)


def test_svrg_shifted_empty_basis_agrees_with_nested():
    p = _cca(4)
    lam = 1.2 * abs(dense_genev(p.dense_a(), p.dense_b()).eigenvalues[0])
    chi = np.random.default_rng(5).standard_normal(7)
    tol = 1e-7
    a = svrg_shifted_cca(p, lam, -1, ImplicitBasis(p), chi, tol, seed=6)
    op = ShiftedOperator(p, lam, -1, backend="cg")
    b = solve_shifted(op, chi, tol)
    assert _b_err(p.dense_b(), a - b) <= 2 * tol


def test_svrg_shifted_diagonal_eigenpair_basis():
    # X = Y scaled columns: A, B block-diagonal in the coordinate basis
    x = np.zeros((4, 2))
    x[0, 0], x[1, 0], x[2, 1], x[3, 1] = 1.0, 1.0, 1.0, -1.0
    y = x.copy()
    y[:, 1] *= 0.5
    p = CcaProblem(x, y, 0.1, 0.1)
    a, b = p.dense_a(), p.dense_b()
    spec = dense_genev(a, b)
    v = spec.vectors[:, :1]
    lam = 1.2 * abs(spec.eigenvalues[1])
    chi = np.array([1.0, -1.0, 0.5, 2.0])
    got = svrg_shifted_cca(p, lam, -1, ImplicitBasis(p, v), chi, 1e-8, seed=2)
    want = dense_shifted_solve(a, b, v, lam, -1, chi, via_q=True)
    assert _b_err(b, got - want) <= 1e-8


@pytest.mark.parametrize("seed", range(20))
def test_svrg_shifted_vs_nested(seed):
    p = _cca(seed, n=80)
    spec = dense_genev(p.dense_a(), p.dense_b())
    k = 1 + seed % 2
    basis = ImplicitBasis(p, spec.vectors[:, :k])
    lam = 1.3 * abs(spec.eigenvalues[k])
    chi = np.random.default_rng(seed).standard_normal(7)
    tol = 1e-7
    a = svrg_shifted_cca(p, lam, 1 if seed % 3 == 0 else -1, basis, chi, tol, seed=seed)
    op = ShiftedOperator(p, lam, 1 if seed % 3 == 0 else -1, basis, backend="cg")
    b = solve_shifted(op, chi, tol)
    assert _b_err(p.dense_b(), a - b) <= 3 * tol


def test_component_smoothness_bound():
    p = _cca(7)
    spec = dense_genev(p.dense_a(), p.dense_b())
    basis = ImplicitBasis(p, spec.vectors[:, :2])
    lam = 1.1
    bound = shifted_component_smoothness(p, lam, basis)
    q = explicit_q(p.dense_a(), p.dense_b(), basis.cols)
    x, y = p.x.values, p.y.values
    for i in range(p.n):
        xi, yi = x[i], y[i]
        h = np.zeros((7, 7))
        h[:4, :4] = lam * (np.outer(xi, xi) + p.gamma_x * np.eye(4))
        h[4:, 4:] = lam * (np.outer(yi, yi) + p.gamma_y * np.eye(3))
        h[:4, 4:] = -np.outer(xi, yi)
        h[4:, :4] = -np.outer(yi, xi)
        h += q
        assert np.abs(np.linalg.eigvalsh(h)).max() <= bound * (1 + 1e-12)


def test_rng_stream_named():
    s = RngStream(5)
    assert s.name == "splitmix64-counter" and s.counter == 0
    assert RngStream(5).key == s.key != RngStream(6).key
