"""Selects the compiled kernel module at import, falling back to numpy.

Set ``LAZY_SPECTRA_KERNELS=python`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("LAZY_SPECTRA_KERNELS", "").lower() == "python":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"

make_csr_ops = _impl.make_csr_ops
make_cca_ops = _impl.make_cca_ops
apply_a = _impl.apply_a
apply_b = _impl.apply_b
cg_solve = _impl.cg_solve
svrg_binv_a = _impl.svrg_binv_a
svrg_shifted = _impl.svrg_shifted
agd_shifted = _impl.agd_shifted
agd_quadratic = _impl.agd_quadratic
sample_indices = _impl.sample_indices
mix64 = _impl.mix64

OK = _kernels_py.OK
CAP = _kernels_py.CAP
INNER_FAIL = _kernels_py.INNER_FAIL
NONFINITE = _kernels_py.NONFINITE
INNER_CG = _kernels_py.INNER_CG
INNER_SVRG = _kernels_py.INNER_SVRG


def implementation(name):
    """Return the kernel module by name ('compiled' or 'python')."""
    if name == "python":
        return _kernels_py
    from . import _kernels

    return _kernels
