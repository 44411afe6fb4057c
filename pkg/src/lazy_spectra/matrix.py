"""Matrix storage, B-geometry primitives, file formats and the CCA block operators."""
from __future__ import annotations

import csv
import struct
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import (
    DataValueError,
    DimensionError,
    FormatError,
    InputError,
    PreconditionError,
)

BINARY_MAGIC = b"LSPECDM1"
DENSE_LIMIT = 2000


# ---------------------------------------------------------------------------
# storage types


class SymmetricMatrix:
    """Sparse symmetric matrix in compressed-row form with sorted indices."""

    def __init__(self, csr):
        csr = sp.csr_matrix(csr, dtype=np.float64)
        if csr.shape[0] != csr.shape[1]:
            raise DimensionError(f"matrix is {csr.shape[0]}x{csr.shape[1]}, expected square")
        if csr.shape[0] < 1:
            raise DimensionError("matrix dimension must be at least 1")
        csr.sum_duplicates()
        csr.sort_indices()
        if (csr != csr.T).nnz:
            raise FormatError("matrix is not symmetric")
        self._csr = csr

    @classmethod
    def from_dense(cls, a, rtol=1e-12):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"expected a square array, got shape {a.shape}")
        scale = max(np.abs(a).max(initial=0.0), 1e-300)
        if np.abs(a - a.T).max(initial=0.0) > rtol * scale:
            raise FormatError("matrix is not symmetric")
        return cls(sp.csr_matrix(0.5 * (a + a.T)))

    @classmethod
    def from_coo(cls, dim, rows, cols, vals):
        m = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
        return cls(m)

    @classmethod
    def identity(cls, dim):
        return cls(sp.identity(dim, format="csr"))

    @classmethod
    def diag(cls, values):
        return cls(sp.diags(np.asarray(values, dtype=np.float64), format="csr"))

    @property
    def dim(self) -> int:
        return self._csr.shape[0]

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def csr(self):
        return self._csr

    def entry(self, i, j) -> float:
        return float(self._csr[i, j])

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.dim:
            raise DimensionError(f"vector length {x.shape[0]} does not match dimension {self.dim}")
        return self._csr @ x

    apply_b = matvec

    def to_dense(self):
        return self._csr.toarray()

    def __repr__(self):
        return f"SymmetricMatrix(dim={self.dim}, nnz={self.nnz})"


class DataMatrix:
    """Dense row-major sample matrix; one sample per row."""

    def __init__(self, values):
        v = np.ascontiguousarray(values, dtype=np.float64)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DimensionError(f"data matrix must be 2-d and nonempty, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataValueError("data matrix contains NaN or Inf")
        self.values = v
        self.values.setflags(write=False)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def __repr__(self):
        return f"DataMatrix({self.rows}x{self.cols})"


def _extremes_dense(dense):
    ev = np.linalg.eigvalsh(dense)
    return float(ev[0]), float(ev[-1])


def _extremes_iterative(apply, dim, seed=0, iters=200):
    """Largest eigenvalue by power iteration, smallest by inverse power iteration through CG."""
    from .solvers import conjugate_gradient_fn

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    lmax = 0.0
    for _ in range(iters):
        w = apply(v)
        lmax = float(v @ w)
        v = w / np.linalg.norm(w)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    mu = 0.0
    for _ in range(iters // 4):
        w = conjugate_gradient_fn(apply, v, 1e-10, lmin_guess=None, maxiter=20 * dim)
        mu = float(v @ w)
        if mu <= 0:
            raise PreconditionError("metric matrix is not positive definite")
        v = w / np.linalg.norm(w)
    return 1.0 / mu, lmax


class GenEvProblem:
    """A generalized eigenproblem pair (A, B) with B positive definite."""

    kind = "genev"

    def __init__(self, a: SymmetricMatrix, b: SymmetricMatrix):
        if a.dim != b.dim:
            raise DimensionError(f"A is {a.dim}x{a.dim} but B is {b.dim}x{b.dim}")
        self.a = a
        self.b = b
        if self.dim <= DENSE_LIMIT:
            try:
                np.linalg.cholesky(b.to_dense())
            except np.linalg.LinAlgError:
                raise PreconditionError("B is not positive definite") from None

    @property
    def dim(self) -> int:
        return self.a.dim

    def apply_a(self, x):
        return self.a.matvec(x)

    def apply_b(self, x):
        return self.b.matvec(x)

    @cached_property
    def b_extremes(self):
        if self.dim <= DENSE_LIMIT:
            lo, hi = _extremes_dense(self.b.to_dense())
        else:
            lo, hi = _extremes_iterative(self.b.matvec, self.dim)
        if lo <= 0:
            raise PreconditionError("B is not positive definite")
        return lo, hi

    @property
    def kappa_b(self) -> float:
        lo, hi = self.b_extremes
        return hi / lo

    def dense_a(self):
        return self.a.to_dense()

    def dense_b(self):
        return self.b.to_dense()

    @cached_property
    def kernel_ops(self):
        from . import kernels

        a, b = self.a.csr, self.b.csr
        return kernels.make_csr_ops(
            a.indptr.astype(np.int64), a.indices.astype(np.int64), a.data,
            b.indptr.astype(np.int64), b.indices.astype(np.int64), b.data,
        )


class CcaProblem:
    """Two-view data with regularized covariances, exposed as the block pair (A, B).

    A = [[0, Sxy], [Syx, 0]] and B = diag(Sxx, Syy); covariances stay implicit.
    """

    kind = "cca"

    def __init__(self, x, y, gamma_x=0.0, gamma_y=0.0):
        x = x if isinstance(x, DataMatrix) else DataMatrix(x)
        y = y if isinstance(y, DataMatrix) else DataMatrix(y)
        if x.rows != y.rows:
            raise DimensionError(f"X has {x.rows} rows but Y has {y.rows}")
        if gamma_x < 0 or gamma_y < 0:
            raise InputError("regularizers must be nonnegative")
        self.x = x
        self.y = y
        self.gamma_x = float(gamma_x)
        self.gamma_y = float(gamma_y)
        X, Y = x.values, y.values
        self.row_sq_x = np.einsum("ij,ij->i", X, X)
        self.row_sq_y = np.einsum("ij,ij->i", Y, Y)
        self._check_pd()

    def _check_pd(self):
        for name, vals, g in (("Sxx", self.x.values, self.gamma_x), ("Syy", self.y.values, self.gamma_y)):
            d = vals.shape[1]
            if d <= DENSE_LIMIT:
                s = vals.T @ vals / self.n + g * np.eye(d)
                try:
                    np.linalg.cholesky(s)
                except np.linalg.LinAlgError:
                    raise PreconditionError(
                        f"{name} is singular; add regularization (gamma > 0)"
                    ) from None
                ev = np.linalg.eigvalsh(s)
                if ev[0] <= 1e-13 * max(ev[-1], 1e-300):
                    raise PreconditionError(f"{name} is numerically singular; add regularization (gamma > 0)")

    @property
    def n(self) -> int:
        return self.x.rows

    @property
    def dx(self) -> int:
        return self.x.cols

    @property
    def dy(self) -> int:
        return self.y.cols

    @property
    def dim(self) -> int:
        return self.dx + self.dy

    def _split(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.shape[0] != self.dim:
            raise DimensionError(f"vector length {z.shape[0]} does not match dx+dy={self.dim}")
        return z[: self.dx], z[self.dx:]

    def apply_a(self, z):
        z1, z2 = self._split(z)
        X, Y = self.x.values, self.y.values
        return np.concatenate([X.T @ (Y @ z2), Y.T @ (X @ z1)]) / self.n

    def apply_b(self, z):
        z1, z2 = self._split(z)
        X, Y = self.x.values, self.y.values
        return np.concatenate([
            X.T @ (X @ z1) / self.n + self.gamma_x * z1,
            Y.T @ (Y @ z2) / self.n + self.gamma_y * z2,
        ])

    # dense assembly (oracle and diagnostics only)
    def sxx(self):
        X = self.x.values
        return X.T @ X / self.n + self.gamma_x * np.eye(self.dx)

    def syy(self):
        Y = self.y.values
        return Y.T @ Y / self.n + self.gamma_y * np.eye(self.dy)

    def sxy(self):
        return self.x.values.T @ self.y.values / self.n

    def dense_a(self):
        out = np.zeros((self.dim, self.dim))
        out[: self.dx, self.dx:] = self.sxy()
        out[self.dx:, : self.dx] = self.sxy().T
        return out

    def dense_b(self):
        out = np.zeros((self.dim, self.dim))
        out[: self.dx, : self.dx] = self.sxx()
        out[self.dx:, self.dx:] = self.syy()
        return out

    @cached_property
    def b_extremes(self):
        if self.dim <= DENSE_LIMIT:
            lx = np.linalg.eigvalsh(self.sxx())
            ly = np.linalg.eigvalsh(self.syy())
            lo, hi = float(min(lx[0], ly[0])), float(max(lx[-1], ly[-1]))
        else:
            lo, hi = _extremes_iterative(self.apply_b, self.dim)
        if lo <= 0:
            raise PreconditionError("B is not positive definite")
        return lo, hi

    @property
    def kappa_b(self) -> float:
        lo, hi = self.b_extremes
        return hi / lo

    @property
    def kappa_prime(self) -> float:
        """Row-norm condition statistic 2 max_i max(|X_i|^2, |Y_i|^2) / lambda_min(B)."""
        top = max(self.row_sq_x.max(), self.row_sq_y.max())
        return 2.0 * float(top) / self.b_extremes[0]

    @property
    def max_component_smoothness(self) -> float:
        return float(max(self.row_sq_x.max() + self.gamma_x, self.row_sq_y.max() + self.gamma_y))

    def scaled(self, c):
        return CcaProblem(c * self.x.values, c * self.y.values, c * c * self.gamma_x, c * c * self.gamma_y)

    @cached_property
    def kernel_ops(self):
        from . import kernels

        return kernels.make_cca_ops(self.x.values, self.y.values, self.gamma_x, self.gamma_y)


# ---------------------------------------------------------------------------
# implicit basis


def _metric_apply(metric):
    if hasattr(metric, "apply_b"):
        return metric.apply_b
    if callable(metric):
        return metric
    raise TypeError("metric must provide apply_b")


class ImplicitBasis:
    """B-orthonormal columns kept in whitened-implicit coordinates.

    ``cols`` holds the implicit vectors; the explicit ones are B^{1/2} cols.
    ``bcols`` caches B @ cols, ``acols`` optionally caches A @ cols.
    """

    def __init__(self, owner, cols=None, bcols=None, acols=None):
        self.owner = owner
        apply_b = _metric_apply(owner)
        d = owner.dim
        if cols is None:
            cols = np.zeros((d, 0))
        cols = np.ascontiguousarray(np.asarray(cols, dtype=np.float64).reshape(d, -1))
        if bcols is None:
            bcols = np.column_stack([apply_b(c) for c in cols.T]) if cols.shape[1] else np.zeros((d, 0))
        self.cols = cols
        self.bcols = np.ascontiguousarray(bcols)
        self._acols = None if acols is None else np.ascontiguousarray(acols)
        for arr in (self.cols, self.bcols):
            arr.setflags(write=False)

    @property
    def d(self) -> int:
        return self.cols.shape[0]

    @property
    def k(self) -> int:
        return self.cols.shape[1]

    @property
    def acols(self):
        if self._acols is None:
            apply_a = self.owner.apply_a
            self._acols = (np.column_stack([apply_a(c) for c in self.cols.T])
                           if self.k else np.zeros((self.d, 0)))
            self._acols.setflags(write=False)
        return self._acols

    def project_out(self, w):
        w = np.asarray(w, dtype=np.float64)
        if w.shape[0] != self.d:
            raise DimensionError(f"vector length {w.shape[0]} does not match dimension {self.d}")
        if self.k == 0:
            return w.copy()
        return w - self.cols @ (self.bcols.T @ w)

    def extended(self, new_cols):
        """Return a basis with ``new_cols`` appended (no orthogonalization)."""
        new_cols = np.asarray(new_cols, dtype=np.float64).reshape(self.d, -1)
        apply_b = _metric_apply(self.owner)
        nb = np.column_stack([apply_b(c) for c in new_cols.T])
        acols = None
        if self._acols is not None:
            na = np.column_stack([self.owner.apply_a(c) for c in new_cols.T])
            acols = np.hstack([self._acols, na])
        return ImplicitBasis(self.owner, np.hstack([self.cols, new_cols]), np.hstack([self.bcols, nb]), acols)

    def gram_error(self) -> float:
        if self.k == 0:
            return 0.0
        g = self.cols.T @ self.bcols
        return float(np.abs(g - np.eye(self.k)).max())


# ---------------------------------------------------------------------------
# geometry primitives


def b_inner(B, u, v) -> float:
    """u^T B v."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.shape[0] != B.dim:
        raise DimensionError(f"shapes {u.shape}, {v.shape} incompatible with dimension {B.dim}")
    return float(u @ _metric_apply(B)(v))


def b_norm(B, v) -> float:
    return float(np.sqrt(max(b_inner(B, v, v), 0.0)))


def b_project_out(B, basis: ImplicitBasis, w):
    """(I - V V^T B) w for a B-orthonormal implicit basis V."""
    if basis.d != B.dim:
        raise DimensionError(f"basis dimension {basis.d} does not match B dimension {B.dim}")
    return basis.project_out(w)


def cca_block_apply(problem: CcaProblem, which: str, z):
    if which == "A":
        return problem.apply_a(z)
    if which == "B":
        return problem.apply_b(z)
    raise ValueError(f"which must be 'A' or 'B', got {which!r}")


# ---------------------------------------------------------------------------
# file formats


def load_matrix_market(path) -> SymmetricMatrix:
    path = Path(path)
    try:
        fh = path.open("r")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        header = fh.readline()
        parts = header.strip().split()
        if len(parts) != 5 or parts[0] != "%%MatrixMarket" or parts[1].lower() != "matrix":
            raise FormatError("missing %%MatrixMarket matrix header", line=1)
        fmt, field, symm = (p.lower() for p in parts[2:])
        if fmt != "coordinate":
            raise FormatError(f"unsupported layout {fmt!r}; expected coordinate", line=1)
        if field not in ("real", "integer", "double"):
            raise FormatError(f"unsupported field {field!r}", line=1)
        if symm not in ("symmetric", "general"):
            raise FormatError(f"unsupported symmetry {symm!r}", line=1)
        lineno = 1
        size = None
        rows, cols, vals = [], [], []
        for raw in fh:
            lineno += 1
            text = raw.strip()
            if not text or text.startswith("%"):
                continue
            tok = text.split()
            if size is None:
                if len(tok) != 3:
                    raise FormatError("size line must have three integers", line=lineno)
                try:
                    size = tuple(int(t) for t in tok)
                except ValueError:
                    raise FormatError("size line must have three integers", line=lineno) from None
                if size[0] != size[1]:
                    raise DimensionError(f"matrix is {size[0]}x{size[1]}, expected square")
                if size[0] < 1 or size[2] < 0:
                    raise FormatError("invalid size line", line=lineno)
                continue
            if len(tok) != 3:
                raise FormatError("entry must be 'row col value'", line=lineno)
            try:
                i, j, v = int(tok[0]), int(tok[1]), float(tok[2])
            except ValueError:
                raise FormatError("entry must be 'row col value'", line=lineno) from None
            if not (1 <= i <= size[0] and 1 <= j <= size[0]):
                raise FormatError(f"index ({i},{j}) out of range", line=lineno)
            if not np.isfinite(v):
                raise FormatError("non-finite value", line=lineno)
            if symm == "symmetric" and j > i:
                raise FormatError("symmetric file stores an upper-triangle entry", line=lineno)
            rows.append(i - 1)
            cols.append(j - 1)
            vals.append(v)
        if size is None:
            raise FormatError("missing size line", line=lineno)
        if len(vals) != size[2]:
            raise FormatError(f"expected {size[2]} entries, found {len(vals)}", line=lineno)
    dim = size[0]
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if symm == "symmetric":
        off = rows != cols
        rows, cols, vals = (np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, vals[off]]))
        return SymmetricMatrix.from_coo(dim, rows, cols, vals)
    m = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    m.sum_duplicates()
    if (m != m.T).nnz:
        raise FormatError("general matrix has asymmetric entries")
    return SymmetricMatrix(m)


def save_matrix_market(path, m: SymmetricMatrix):
    low = sp.tril(m.csr).tocoo()
    order = np.lexsort((low.row, low.col))
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
        fh.write(f"{m.dim} {m.dim} {low.nnz}\n")
        for r, c, v in zip(low.row[order], low.col[order], low.data[order]):
            fh.write(f"{r + 1} {c + 1} {float(v)!r}\n")


def write_dense(path, arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<QQ", *arr.shape))
        fh.write(arr.tobytes())


def read_dense(path):
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from None
    if len(blob) < 24 or blob[:8] != BINARY_MAGIC:
        raise FormatError("missing LSPECDM1 header")
    rows, cols = struct.unpack("<QQ", blob[8:24])
    body = blob[24:]
    if len(body) != 8 * rows * cols:
        raise FormatError(f"payload has {len(body)} bytes, expected {8 * rows * cols}")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)


def load_dataset(path, format="csv") -> DataMatrix:
    path = Path(path)
    if format == "binary":
        arr = read_dense(path)
        if arr.size == 0:
            raise FormatError("empty dataset")
        return DataMatrix(arr)
    if format != "csv":
        raise InputError(f"unknown dataset format {format!r}")
    try:
        fh = path.open("r", newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from None
    rows = []
    width = None
    with fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not f.strip() for f in rec):
                continue
            try:
                vals = [float(f) for f in rec]
            except ValueError:
                raise FormatError("non-numeric field", line=lineno) from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise FormatError(f"row has {len(vals)} fields, expected {width}", line=lineno)
            if not all(np.isfinite(vals)):
                raise DataValueError(f"line {lineno}: NaN or Inf value")
            rows.append(vals)
    if not rows:
        raise FormatError("empty dataset")
    return DataMatrix(np.asarray(rows))


def save_dataset(path, data, format="csv"):
    values = data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)
    if format == "binary":
        write_dense(path, values)
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in values:
            w.writerow([repr(float(v)) for v in row])
