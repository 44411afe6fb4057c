import math

import numpy as np
import pytest

from lazy_spectra.errors import AccuracyError, InputError, PreconditionError
from lazy_spectra.lazycca import (build_cca_problem, cca_gap_dependent, cca_gap_free,
                                  recover_canonical_pairs, split_rescale)
from lazy_spectra.lazyev import GenEvConfig
from lazy_spectra.matrix import CcaProblem, ImplicitBasis
from lazy_spectra.oracle import cca_block_spectrum, cca_trailing, dense_cca, subspace_leakage, sym_pow
from lazy_spectra.shift_invert import appx_pca_pm
from lazy_spectra.synthetic import generator, planted_cca


def _invariants(res, p, tol_diag=1e-7, tol_off=1e-6):
    phi, psi = res.phi, res.psi
    gx = phi.T @ p.sxx() @ phi
    gy = psi.T @ p.syy() @ psi
    k = len(res.pairs)
    assert np.abs(np.diag(gx) - 1).max() <= tol_diag
    assert np.abs(np.diag(gy) - 1).max() <= tol_diag
    assert np.abs(gx - np.diag(np.diag(gx))).max(initial=0) <= tol_off
    assert np.abs(gy - np.diag(np.diag(gy))).max(initial=0) <= tol_off
    s = res.sigmas
    assert np.all(s >= 0) and np.all(s <= 1 + 1e-6)
    eps = res.config["eps"]
    assert all(s[i + 1] <= s[i] * (1 + eps) / (1 - eps) for i in range(k - 1))


# -- problem construction -------------------------------------------------------------


def test_hand_instance_spectrum():
    p = build_cca_problem([[1.0], [0.0]], [[1.0], [0.0]])
    assert np.allclose(cca_block_spectrum(p), [-1.0, 1.0])
    q = build_cca_problem([[1.0], [1.0]], [[1.0], [-1.0]])
    assert np.allclose(q.sxy(), 0.0)
    assert np.allclose(cca_block_spectrum(q), 0.0)


def test_rank_deficient_needs_regularization():
    x = np.ones((6, 2))
    y = generator(0).standard_normal((6, 2))
    with pytest.raises(PreconditionError):
        build_cca_problem(x, y)
    build_cca_problem(x, y, gamma_x=0.1)


# -- recovery ------------------------------------------------------------------------------


def test_recover_hand_instance():
    p = CcaProblem([[1.0], [0.0]], [[1.0], [0.0]])
    # B = diag(1/2, 1/2); block norms 1/sqrt(2) each
    xi, zeta = np.array([1.0]), np.array([1.0])
    basis = ImplicitBasis(p, np.column_stack([np.r_[xi, zeta], np.r_[-xi, zeta]]))
    pairs = recover_canonical_pairs(basis, p)
    assert len(pairs) == 1
    assert pairs[0].phi[0] == pytest.approx(math.sqrt(2)) and pairs[0].psi[0] == pytest.approx(math.sqrt(2))
    assert pairs[0].sigma == pytest.approx(1.0)
    assert recover_canonical_pairs(ImplicitBasis(p), p) == []


def test_split_rescale_window():
    p = CcaProblem(np.eye(2) * math.sqrt(2), np.eye(2) * math.sqrt(2))
    xi, zeta, frac = split_rescale(p, np.array([1.0, 0.0, 1.0, 0.0]))
    assert frac == pytest.approx(0.5)
    assert float(xi @ p.sxx() @ xi) == pytest.approx(0.5)
    with pytest.raises(AccuracyError):
        split_rescale(p, np.array([1.0, 0.0, 0.01, 0.0]))


# -- end to end ----------------------------------------------------------------------------


def test_identical_views():
    x = generator(3).standard_normal((50, 5))
    p = build_cca_problem(x, x)
    res = cca_gap_free(p, k=1, eps=0.1, seed=1, backend="cg")
    assert 0.9 <= res.sigmas[0] <= 1 + 1e-6
    phi, psi = res.pairs[0].phi, res.pairs[0].psi
    d = phi - psi
    assert float(d @ p.sxx() @ d) <= 0.2
    _invariants(res, p)


def test_identical_views_gap_dependent_invariants():
    x = generator(4).standard_normal((50, 5))
    p = build_cca_problem(x, x)
    res = cca_gap_dependent(p, k=2, gap=0.3, eps=0.05, seed=2, backend="cg")
    _invariants(res, p)


def test_orthogonal_views_exhaust():
    q, _ = np.linalg.qr(generator(5).standard_normal((20, 6)))
    p = build_cca_problem(q[:, :3], q[:, 3:])
    res = cca_gap_free(p, k=1, seed=0, backend="cg")
    assert res.residual_exhausted and res.pairs == []


def _planted(seed, sigmas=(0.9, 0.6, 0.3), n=120, dx=6, dy=5):
    x, y = planted_cca(n, dx, dy, sigmas, seed)
    return x, y, build_cca_problem(x, y)


@pytest.mark.parametrize("backend", ["cg", "svrg"])
def test_planted_gap_free(backend):
    x, y, p = _planted(7)
    res = cca_gap_free(p, k=2, eps=0.1, seed=3, backend=backend)
    lo = [0.81, 0.54]
    hi = [0.99, 0.66]
    for s, a, b in zip(res.sigmas, lo, hi):
        assert a <= s <= b
    _invariants(res, p)
    # residual correlation in the complement
    bx = sym_pow(p.sxx(), 0.5)
    by = sym_pow(p.syy(), 0.5)
    px = np.eye(6) - bx @ res.phi @ res.phi.T @ bx
    py = np.eye(5) - by @ res.psi @ res.psi.T @ by
    c = px @ sym_pow(p.sxx(), -0.5) @ p.sxy() @ sym_pow(p.syy(), -0.5) @ py
    assert np.linalg.norm(c, 2) <= 1.1 * 0.3


def test_planted_gap_dependent_leakage():
    x, y, p = _planted(8, sigmas=(0.9, 0.3))
    res = cca_gap_dependent(p, k=1, gap=0.6, eps=0.05, seed=1, backend="cg")
    wx, wy = cca_trailing(x, y, 1)
    assert subspace_leakage(res.phi, p.sxx(), wx) <= 0.05
    assert subspace_leakage(res.psi, p.syy(), wy) <= 0.05


def test_full_rank_request_vacuous_leakage():
    x, y, p = _planted(9, sigmas=(0.9, 0.5), dx=2, dy=2, n=40)
    res = cca_gap_dependent(p, k=2, gap=0.3, eps=0.05, seed=4, backend="cg")
    wx, _ = cca_trailing(x, y, 2)
    assert wx.shape[1] == 0
    _invariants(res, p)


def test_tied_correlations():
    x, y, p = _planted(10, sigmas=(0.5, 0.5, 0.1))
    res = cca_gap_free(p, k=2, eps=0.1, seed=5, backend="cg")
    assert all(0.45 <= s <= 0.55 for s in res.sigmas)


def test_matches_dense_oracle():
    x, y, p = _planted(11)
    res = cca_gap_free(p, k=2, eps=0.1, seed=6, backend="cg")
    ref = dense_cca(x, y)
    for est, want in zip(res.pairs, ref):
        assert abs(est.sigma - want.sigma) <= 0.1 * want.sigma
        assert abs(float(est.phi @ p.sxx() @ want.phi)) >= 0.9


def test_pair_structure():
    _, _, p = _planted(12)
    res = cca_gap_free(p, k=2, eps=0.1, seed=7, backend="cg")
    b = p.dense_b()
    cols = res.basis.cols
    for j in range(0, cols.shape[1], 2):
        a, c = cols[:, j], cols[:, j + 1]
        assert np.array_equal(a[:6], -c[:6]) and np.array_equal(a[6:], c[6:])
        assert abs(float(a @ b @ c)) <= 1e-8
    assert res.basis.gram_error() <= 1e-8


def test_rescaling_keeps_rayleigh():
    for seed in range(5):
        _, _, p = _planted(20 + seed)
        sched = GenEvConfig(k=1, eps=0.1).schedule(p.dim, p.kappa_b)
        out = appx_pca_pm(p, None, sched, seed=seed, backend="cg")
        xi, zeta, _ = split_rescale(p, out.w)
        z = np.concatenate([xi, zeta])
        a = p.dense_a()
        assert abs(float(z @ a @ z)) >= abs(float(out.w @ a @ out.w)) - 1e-9


@pytest.mark.parametrize("c", [0.1, 10.0])
def test_scaling_invariance(c):
    x, y, p = _planted(13)
    base = cca_gap_free(p, k=2, eps=0.1, seed=8, backend="cg").sigmas
    scaled = cca_gap_free(build_cca_problem(c * x, c * y), k=2, eps=0.1, seed=8, backend="cg").sigmas
    assert np.abs(base - scaled).max() <= 1e-6


def test_k_too_large():
    _, _, p = _planted(14)
    with pytest.raises(InputError):
        cca_gap_free(p, k=6)
    with pytest.raises(TypeError):
        from lazy_spectra.lazycca import lazy_cca
        lazy_cca(object(), GenEvConfig(k=1))
