"""Adaptive sparse-approximate-inverse construction.

Two column builders share one outer loop: pattern growth by the structure of
successive powers applied to the unit vector, with a per-column least-squares
solve after every growth step. The plain builder never drops; the dropping
builder removes small entries after each solve, using either a fixed tolerance
or the adaptive criterion eps / (nnz(m_k) * ||A||_1), which keeps the dropped
mass small enough that a column meeting the accuracy target eps still satisfies
||A m_d - e_k||_2 <= 2 eps after dropping.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from ._parallel import map_columns
from .core import SparseMatrix, SparseVector, assemble_columns
from .lsq import ColumnLeastSquares

DROP_MODES = ("none", "adaptive", "fixed")
SIDES = ("right", "left")


@dataclass(frozen=True)
class SaiParams:
    """Knobs for the adaptive builders.

    epsilon: per-column residual target in (0, 1).
    l_max: maximum number of outer pattern-growth loops.
    drop_mode: "none" (no dropping), "adaptive" (the eps/(nnz*||A||_1)
        criterion) or "fixed" (absolute tolerance ``tol``).
    drop_scale: multiplier on the adaptive criterion (sweep studies); 0 means
        no dropping at all.
    side: "right" builds M with A M ~ I; "left" builds M with M A ~ I by
        running the right-side construction on the transpose.
    """

    epsilon: float = 0.3
    l_max: int = 10
    drop_mode: str = "adaptive"
    tol: float | None = None
    drop_scale: float = 1.0
    side: str = "right"

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if self.epsilon >= 0.5:
            warnings.warn(
                "epsilon >= 0.5: the dropping theory assumes epsilon < 0.5",
                stacklevel=2,
            )
        if self.l_max < 1:
            raise ValueError("l_max must be at least 1")
        if self.drop_mode not in DROP_MODES:
            raise ValueError(f"drop_mode must be one of {DROP_MODES}")
        if self.drop_mode == "fixed":
            if self.tol is None or self.tol <= 0.0:
                raise ValueError("fixed drop mode needs tol > 0")
        if self.drop_scale < 0.0:
            raise ValueError("drop_scale must be nonnegative")
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")


@dataclass
class ColumnBuildRecord:
    """Per-column outcome of a build."""

    k: int
    loops_used: int
    pre_drop_residual: float
    post_drop_residual: float
    nnz_final: int
    met_accuracy: bool | None
    rank_flag: bool = False
    guard_flag: bool = False
    stalled: bool = False
    tol_min: float | None = None
    tol_max: float | None = None


@dataclass
class Preconditioner:
    """Assembled sparse approximate inverse plus its build records.

    ``a_one_norm`` and ``a_nnz`` describe the build operand (the transpose of
    A when ``side == "left"``). ``M`` always has solver-ready orientation:
    apply from the right when built with side="right", from the left otherwise.
    """

    M: SparseMatrix
    records: list[ColumnBuildRecord]
    params: SaiParams | None
    a_one_norm: float
    a_nnz: int
    build_time: float = 0.0
    origin: str = "psai"
    filtered: bool = False

    @property
    def side(self) -> str:
        return self.params.side if self.params is not None else "right"

    @property
    def spar(self) -> float:
        return self.M.nnz / self.a_nnz

    @property
    def r_max(self) -> float:
        """Largest controlling (pre-drop) LS residual over the columns."""
        return max(r.pre_drop_residual for r in self.records)

    @property
    def r_max_post(self) -> float:
        """Largest residual of the emitted (post-drop) columns; this is the
        number that explodes when a dropping tolerance is chosen too large."""
        return max(r.post_drop_residual for r in self.records)

    def coln(self, epsilon: float) -> int:
        return sum(1 for r in self.records if r.pre_drop_residual > epsilon)

    def tol_range(self):
        lows = [r.tol_min for r in self.records if r.tol_min is not None]
        highs = [r.tol_max for r in self.records if r.tol_max is not None]
        if not lows:
            return None, None
        return min(lows), max(highs)


def adaptive_drop_tolerance(epsilon: float, nnz_mk: int, a_one_norm: float) -> float:
    """Adaptive dropping tolerance eps / (nnz(m_k) * ||A||_1)."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if nnz_mk < 1:
        raise ValueError("nnz_mk must be at least 1")
    if a_one_norm <= 0.0:
        raise ValueError("a_one_norm must be positive")
    return epsilon / (nnz_mk * a_one_norm)


class _PowerPattern:
    """Tracks the support growth of a_k^(l+1) = A a_k^l.

    Pattern growth follows the numerical nonzeros of the power vector, exactly
    as the algorithms prescribe. A structural closure (powers of |A| applied
    to the support, immune to cancellation) detects when no index can ever be
    new again, so a stalled column can stop early with an identical result.
    """

    def __init__(self, A: SparseMatrix, k: int):
        self._A = A.to_scipy()
        self._A_abs = abs(self._A)
        n = A.nrows
        self._vec = np.zeros(n)
        self._vec[k] = 1.0
        self._cum = np.zeros(n, dtype=bool)
        self._cum[k] = True
        self._struct = self._vec.copy()
        self._struct_cum = self._cum.copy()
        self.exhausted = False

    def advance(self) -> np.ndarray:
        """Next power step; returns the indices newly entering the pattern."""
        dense = self._A @ self._vec
        peak = np.max(np.abs(dense))
        if peak > 0.0:
            dense /= peak  # structure only; rescaling guards against overflow
        self._vec = dense
        support = np.nonzero(dense)[0]
        new = support[~self._cum[support]]
        self._cum[new] = True

        struct_next = (self._A_abs @ self._struct) > 0.0
        grew = bool(np.any(struct_next & ~self._struct_cum))
        self._struct = struct_next.astype(np.float64)
        self._struct_cum |= struct_next
        if not grew and np.array_equal(self._struct_cum, self._cum):
            # the structural reach is closed and the numerical pattern
            # already covers it: nothing can ever be new again
            self.exhausted = True
        return new


def _finish_record(k, loops, state, pre, post, met, guard, stalled, tmin, tmax):
    vec = state.solution_vector()
    return vec, ColumnBuildRecord(
        k=k,
        loops_used=loops,
        pre_drop_residual=pre,
        post_drop_residual=post,
        nnz_final=vec.nnz,
        met_accuracy=met,
        rank_flag=state.rank_flag,
        guard_flag=guard,
        stalled=stalled,
        tol_min=tmin,
        tol_max=tmax,
    )


def bpsai_column(A: SparseMatrix, k: int, params: SaiParams):
    """One column of the no-dropping adaptive builder."""
    eps = params.epsilon
    state = ColumnLeastSquares(A, k, [k])
    power = _PowerPattern(A, k)
    l = 0
    stalled = False
    r_solve = state.residual_norm
    while r_solve > eps and l <= params.l_max - 1:
        new = power.advance()
        if power.exhausted and new.size == 0:
            stalled = True
            break
        if new.size == 0:
            l += 1
            continue
        l += 1
        state.augment(np.sort(new))
        r_solve = state.residual_norm
        if r_solve <= eps:
            break
    return _finish_record(
        k, l, state, r_solve, r_solve, r_solve <= eps, False, stalled, None, None
    )


def psai_tol_column(A: SparseMatrix, k: int, params: SaiParams, a_one_norm: float):
    """One column of the dropping builder (adaptive or fixed tolerance)."""
    if params.drop_mode == "none":
        raise ValueError("psai_tol_column needs a dropping mode")
    eps = params.epsilon
    state = ColumnLeastSquares(A, k, [k])
    power = _PowerPattern(A, k)
    l = 0
    stalled = False
    guard = False
    tol_seen: list[float] = []

    def drop_step():
        nonlocal guard
        sol = state.solution
        nnz_before = sol.size
        criterion = adaptive_drop_tolerance(eps, nnz_before, a_one_norm)
        tol_seen.append(criterion)
        if params.drop_mode == "adaptive":
            threshold = params.drop_scale * criterion
        else:
            threshold = params.tol
        small = np.abs(sol) <= threshold
        if small.all():
            # never emit an empty column: keep the entry of largest magnitude
            keep = int(np.argmax(np.abs(sol)))
            small[keep] = False
            guard = True
        if small.any():
            state.shrink(state.support[small])

    r_solve = state.residual_norm
    while r_solve > eps and l <= params.l_max - 1:
        new = power.advance()
        if power.exhausted and new.size == 0:
            stalled = True
            break
        if new.size == 0:
            l += 1
            continue
        l += 1
        state.augment(np.sort(new))
        r_solve = state.residual_norm
        drop_step()
        if r_solve <= eps:
            break
    post = state.residual_norm
    tmin = min(tol_seen) if tol_seen else None
    tmax = max(tol_seen) if tol_seen else None
    return _finish_record(
        k, l, state, r_solve, post, r_solve <= eps, guard, stalled, tmin, tmax
    )


def build_column(A: SparseMatrix, k: int, params: SaiParams, a_one_norm: float):
    if params.drop_mode == "none" or (
        params.drop_mode == "adaptive" and params.drop_scale == 0.0
    ):
        return bpsai_column(A, k, params)
    return psai_tol_column(A, k, params, a_one_norm)


def _column_task(k, A, params, a_norm):
    return build_column(A, k, params, a_norm)


def build_preconditioner(
    A: SparseMatrix, params: SaiParams, threads: int = 1
) -> Preconditioner:
    """Build the sparse approximate inverse of A column by column.

    Columns are independent; with ``threads > 1`` they run in worker
    processes and are deposited into a slot array by index, so the result is
    bit-identical regardless of the worker count.
    """
    if A.nrows != A.ncols:
        raise ValueError("square matrix required")
    start = time.perf_counter()
    operand = A.transpose() if params.side == "left" else A
    a_norm = operand.one_norm()
    n = operand.ncols

    results = map_columns(_column_task, (operand, params, a_norm), n, threads)
    columns = [vec for vec, _ in results]
    records = [rec for _, rec in results]
    M = assemble_columns(columns, nrows=n)
    if params.side == "left":
        M = M.transpose()
    return Preconditioner(
        M=M,
        records=records,
        params=params,
        a_one_norm=a_norm,
        a_nnz=operand.nnz,
        build_time=time.perf_counter() - start,
        origin="bpsai" if params.drop_mode == "none" else "psai",
    )
