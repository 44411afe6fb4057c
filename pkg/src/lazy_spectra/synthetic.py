"""Seeded instance generators with known spectra (test fixtures and benchmarks)."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .matrix import SymmetricMatrix


def generator(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


def sparse_spd(d, rng, coupling=0.5):
    """D (I + c T) D with T the second-difference stencil and D a mild random diagonal.

    Condition number stays around (1 + 4c) * 2.
    """
    t = sp.diags([-np.ones(d - 1), 2 * np.ones(d), -np.ones(d - 1)], [-1, 0, 1])
    dscale = sp.diags(rng.uniform(0.85, 1.2, size=d))
    b = dscale @ (sp.identity(d) + coupling * t) @ dscale
    return SymmetricMatrix(sp.csr_matrix(0.5 * (b + b.T)))


def random_orthogonal(d, rng):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def planted_genev(eigenvalues, seed, sparse_b=True):
    """Pencil (A, B) whose generalized eigenvalues are exactly ``eigenvalues``.

    A = B^{1/2} Q diag(eigenvalues) Q^T B^{1/2}. Returns (A, B).
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    d = lam.shape[0]
    rng = generator(seed)
    if sparse_b:
        b = sparse_spd(d, rng)
    else:
        b = SymmetricMatrix.identity(d)
    w, v = np.linalg.eigh(b.to_dense())
    bh = (v * np.sqrt(w)) @ v.T
    q = random_orthogonal(d, rng)
    a = bh @ (q * lam) @ q.T @ bh
    a = 0.5 * (a + a.T)
    return SymmetricMatrix.from_dense(a), b


def gap_spectrum(d, k, gap, seed, top=(0.95, 0.85), signs="random"):
    """Eigenvalues whose top-k magnitudes lie in ``top`` and whose relative gap after k is ``gap``.

    The (k+1)-th magnitude is exactly (1 - gap) |lambda_k|; the rest fill [0, that) uniformly.
    """
    rng = generator(seed)
    hi, lo = top
    mags = np.sort(rng.uniform(lo, hi, size=k))[::-1]
    mags[0], mags[-1] = hi, lo
    nxt = (1.0 - gap) * lo
    rest = np.sort(rng.uniform(0.0, nxt, size=d - k - 1))[::-1]
    allm = np.concatenate([mags, [nxt], rest])
    if signs == "random":
        sg = rng.choice([-1.0, 1.0], size=d)
    else:
        sg = np.ones(d)
    return allm * sg


def random_symmetric(d, seed, norm=0.8):
    """Dense Gaussian symmetric matrix scaled to spectral norm ``norm``."""
    rng = generator(seed)
    g = rng.standard_normal((d, d))
    m = 0.5 * (g + g.T)
    return m * (norm / np.abs(np.linalg.eigvalsh(m)).max())


def planted_cca(n, dx, dy, sigmas, seed, conditioning=3.0):
    """Two views with exactly prescribed canonical correlations (zero regularization).

    Builds orthonormal U (n x dx), W (n x dy) with U^T W = diag(sigmas, 0...), then mixes each
    view by a random invertible matrix with the given condition number.
    """
    sig = np.asarray(sigmas, dtype=np.float64)
    r = sig.shape[0]
    if r > min(dx, dy) or n < dx + dy:
        raise ValueError("need len(sigmas) <= min(dx, dy) and n >= dx + dy")
    rng = generator(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((n, dx + dy)))
    u = basis[:, :dx]
    e = basis[:, dx:]
    w = e.copy()
    c = np.sqrt(1.0 - sig**2)
    w[:, :r] = u[:, :r] * sig + e[:, :r] * c
    x = np.sqrt(n) * u @ _mixing(dx, rng, conditioning)
    y = np.sqrt(n) * w @ _mixing(dy, rng, conditioning)
    return x, y


def _mixing(d, rng, cond):
    q1 = random_orthogonal(d, rng)
    q2 = random_orthogonal(d, rng)
    s = np.exp(np.linspace(0.0, np.log(cond), d))
    return (q1 * s) @ q2


def latent_cca(n, dx, dy, sigmas, seed):
    """Shared latent Gaussian factors plus isotropic noise; population correlations equal ``sigmas``."""
    sig = np.asarray(sigmas, dtype=np.float64)
    r = sig.shape[0]
    rng = generator(seed)
    z = rng.standard_normal((n, r))
    x = rng.standard_normal((n, dx))
    y = rng.standard_normal((n, dy))
    # coordinate i of each view loads sqrt(sigma_i) on latent i: corr = sigma_i
    a = np.sqrt(sig)
    x[:, :r] = a * z + np.sqrt(1 - a * a) * x[:, :r]
    y[:, :r] = a * z + np.sqrt(1 - a * a) * y[:, :r]
    return x @ random_orthogonal(dx, rng), y @ random_orthogonal(dy, rng)
