"""Wall-clock comparison of the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Both backends get identical inputs; the script also checks that their outputs agree.
"""
import argparse
import time

import numpy as np

from lazy_spectra import _kernels_py as py
from lazy_spectra.matrix import CcaProblem, ImplicitBasis
from lazy_spectra.oracle import dense_genev
from lazy_spectra.synthetic import generator, planted_genev, sparse_spd

try:
    from lazy_spectra import _kernels as cy
except ImportError:
    cy = None


def _csr(m):
    c = m.csr
    return c.indptr.astype(np.int64), c.indices.astype(np.int64), c.data


def cases():
    rng = generator(0)
    b = sparse_spd(2000, rng)
    rhs = rng.standard_normal(2000)

    def cg(mod):
        ops = mod.make_csr_ops(*_csr(b), *_csr(b))
        return mod.cg_solve(ops, rhs, np.zeros(2000), 1e-12, 5000)[0]

    x = rng.standard_normal((500, 20))
    y = rng.standard_normal((500, 15))
    p = CcaProblem(x, y, 0.05, 0.05)
    lo, hi = p.b_extremes
    w = rng.standard_normal(35)
    eta = 1.0 / (2.0 * p.max_component_smoothness)

    def svrg(mod):
        ops = mod.make_cca_ops(x, y, 0.05, 0.05)
        return mod.svrg_binv_a(ops, w, np.zeros(35), 1e-9, eta, lo, 5000, 1, 0)[0]

    a2, b2 = planted_genev(np.linspace(0.9, -0.5, 300), 3)
    spec = dense_genev(a2.to_dense(), b2.to_dense())
    basis = ImplicitBasis(b2, spec.vectors[:, :2])
    lo2, hi2 = np.linalg.eigvalsh(b2.to_dense())[[0, -1]]
    lam = 1.1 * abs(spec.eigenvalues[2])
    chi = rng.standard_normal(300)

    def agd(mod):
        ops = mod.make_csr_ops(*_csr(a2), *_csr(b2))
        return mod.agd_shifted(ops, lam, 1.0, basis.cols, basis.bcols, chi, np.zeros(300), np.zeros(300),
                               2 * lam, lam - abs(spec.eigenvalues[2]), 1e-8, 20000, 0, 1e-13, 1e-15, 5000,
                               0.0, lo2, hi2, 0, 0, 0)[0]

    return {"cg_solve d=2000": cg, "svrg_binv_a n=500": svrg, "agd_shifted d=300": agd}


def timeit(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, np.asarray(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if cy is None:
        print("compiled extension not built; only the fallback can run")
    print(f"{'kernel':<22}{'numpy s':>10}{'compiled s':>12}{'speedup':>9}{'max diff':>11}")
    for name, fn in cases().items():
        tp, op = timeit(lambda: fn(py), args.repeat)
        if cy is None:
            print(f"{name:<22}{tp:>10.4f}{'-':>12}{'-':>9}{'-':>11}")
            continue
        tc, oc = timeit(lambda: fn(cy), args.repeat)
        print(f"{name:<22}{tp:>10.4f}{tc:>12.4f}{tp / tc:>8.1f}x{np.abs(op - oc).max():>11.1e}")


if __name__ == "__main__":
    main()
