"""Static sparse-approximate-inverse construction on prescribed patterns.

The envelope patterns are the structures of (I+A)^k, (I+|A|+|A^T|)^k A^T and
(A^T A)^k A^T. Each column solves its least-squares problem once on the fixed
pattern; postfiltration afterwards drops entries below
max(eps_k, floor) / (nnz(m_k) * ||A||_1) per column, where eps_k is that
column's achieved residual norm.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._parallel import map_columns
from .core import SparseMatrix, SparseVector, assemble_columns
from .lsq import ColumnLeastSquares
from .psai import ColumnBuildRecord, Preconditioner

PATTERN_KINDS = ("iplusa", "abs", "normal")

DEFAULT_NNZ_CAP = 50_000_000


class PatternSizeError(RuntimeError):
    """Predicted pattern density exceeds the configured cap."""


@dataclass(frozen=True)
class PatternMatrix:
    """Boolean column structure for all n columns (CSC without values)."""

    nrows: int
    ncols: int
    col_ptr: np.ndarray
    row_idx: np.ndarray
    kind: str

    def __post_init__(self):
        if np.any(np.diff(self.col_ptr) < 1):
            raise ValueError("every pattern column must be non-empty")

    @property
    def nnz(self) -> int:
        return int(self.row_idx.size)

    def column(self, k) -> np.ndarray:
        return self.row_idx[self.col_ptr[k] : self.col_ptr[k + 1]]

    @classmethod
    def from_scipy(cls, mat, kind: str) -> "PatternMatrix":
        csc = mat.tocsc()
        csc.sum_duplicates()
        csc.sort_indices()
        return cls(csc.shape[0], csc.shape[1], csc.indptr.astype(np.int64),
                   csc.indices.astype(np.int64), kind)


def _bool_csc(A: SparseMatrix):
    S = sp.csc_matrix((np.ones_like(A.values), A.row_idx, A.col_ptr), shape=A.shape)
    return S


def _capped_matmul(L, R, cap):
    out = L @ R
    if out.nnz > cap:
        raise PatternSizeError(f"pattern nnz {out.nnz} exceeds cap {cap}")
    out.data[:] = 1.0  # structure only; keep path counts from growing
    return out


def make_pattern(A: SparseMatrix, kind: str, k: int, cap: int = DEFAULT_NNZ_CAP) -> PatternMatrix:
    """Boolean structure of the named symbolic power product.

    kind "iplusa":  (I + A)^k
    kind "abs":     (I + |A| + |A^T|)^k A^T
    kind "normal":  (A^T A)^k A^T
    """
    if kind not in PATTERN_KINDS:
        raise ValueError(f"kind must be one of {PATTERN_KINDS}")
    if k < 1:
        raise ValueError("power must be at least 1")
    S = _bool_csc(A)
    eye = sp.identity(A.nrows, format="csc")
    if kind == "iplusa":
        base = (eye + S).tocsc()
        base.data[:] = 1.0
        out = base
        for _ in range(k - 1):
            out = _capped_matmul(out, base, cap)
    elif kind == "abs":
        base = (eye + S + S.T).tocsc()
        base.data[:] = 1.0
        out = S.T.tocsc()
        out.data[:] = 1.0
        for _ in range(k):
            out = _capped_matmul(base, out, cap)
    else:
        base = (S.T @ S).tocsc()
        base.data[:] = 1.0
        if base.nnz > cap:
            raise PatternSizeError(f"pattern nnz {base.nnz} exceeds cap {cap}")
        out = S.T.tocsc()
        out.data[:] = 1.0
        for _ in range(k):
            out = _capped_matmul(base, out, cap)
    return PatternMatrix.from_scipy(out, kind=f"{kind}^{k}")


def _static_column(k, A, col_ptr, row_idx):
    state = ColumnLeastSquares(A, k, row_idx[col_ptr[k] : col_ptr[k + 1]])
    vec = state.solution_vector()
    rec = ColumnBuildRecord(
        k=k,
        loops_used=0,
        pre_drop_residual=state.residual_norm,
        post_drop_residual=state.residual_norm,
        nnz_final=vec.nnz,
        met_accuracy=None,
        rank_flag=state.rank_flag,
    )
    return vec, rec


def static_build(A: SparseMatrix, pattern: PatternMatrix, threads: int = 1) -> Preconditioner:
    """Solve min ||A(:, S^k) m - e_k||_2 once per column on the fixed pattern."""
    if (pattern.nrows, pattern.ncols) != A.shape:
        raise ValueError("pattern dimensions do not match the matrix")
    start = time.perf_counter()
    a_norm = A.one_norm()
    n = A.ncols

    results = map_columns(
        _static_column, (A, pattern.col_ptr, pattern.row_idx), n, threads
    )
    columns = [vec for vec, _ in results]
    records = [rec for _, rec in results]

    return Preconditioner(
        M=assemble_columns(columns, nrows=n),
        records=records,
        params=None,
        a_one_norm=a_norm,
        a_nnz=A.nnz,
        build_time=time.perf_counter() - start,
        origin=f"static:{pattern.kind}",
    )


def postfilter(A: SparseMatrix, P: Preconditioner, floor: float = 0.1) -> Preconditioner:
    """Sparsify a statically built M column by column.

    Column k drops entries with |m_jk| <= max(eps_k, floor) / (nnz(m_k) * ||A||_1)
    where eps_k is the column's build residual and nnz(m_k) its pre-drop count.
    Post-drop residuals are recomputed; the result is marked filtered.
    """
    start = time.perf_counter()
    a_norm = P.a_one_norm
    n = P.M.ncols
    columns = []
    records = []
    for k in range(n):
        idx, vals = P.M.column(k)
        rec = P.records[k]
        eps_k = max(rec.pre_drop_residual, floor)
        nnz_k = max(idx.size, 1)
        tol_k = eps_k / (nnz_k * a_norm)
        keep = np.abs(vals) > tol_k
        guard = False
        if idx.size and not keep.any():
            keep[int(np.argmax(np.abs(vals)))] = True
            guard = True
        new_idx, new_vals = idx[keep], vals[keep]
        vec = SparseVector(P.M.nrows, new_idx.copy(), new_vals.copy())
        residual = np.zeros(A.nrows)
        for j, v in zip(new_idx.tolist(), new_vals.tolist()):
            ridx, rvals = A.column(j)
            residual[ridx] += v * rvals
        residual[k] -= 1.0
        records.append(
            ColumnBuildRecord(
                k=k,
                loops_used=rec.loops_used,
                pre_drop_residual=rec.pre_drop_residual,
                post_drop_residual=float(np.linalg.norm(residual)),
                nnz_final=vec.nnz,
                met_accuracy=rec.met_accuracy,
                rank_flag=rec.rank_flag,
                guard_flag=guard,
                tol_min=tol_k,
                tol_max=tol_k,
            )
        )
        columns.append(vec)
    return Preconditioner(
        M=assemble_columns(columns, nrows=P.M.nrows),
        records=records,
        params=P.params,
        a_one_norm=a_norm,
        a_nnz=P.a_nnz,
        build_time=time.perf_counter() - start,
        origin=P.origin,
        filtered=True,
    )
