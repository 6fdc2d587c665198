"""Fixed-versus-adaptive dropping on a reservoir-style matrix.

Heterogeneous diffusion coefficients spread over five orders of magnitude put
all inverse entries far below "intuitively small" fixed tolerances, so a fixed
tol that looks harmless guts every column mid-build, while the adaptive
criterion (which divides by nnz * ||A||_1) lands where the entries actually
live. The failure shows up in the emitted columns' residuals, not in the
pre-drop LS residuals (those can never exceed 1).
"""

import numpy as np
import pytest

from saiprec.core import SparseMatrix
from saiprec.diagnostics import check_nonsingular
from saiprec.krylov import SolveParams, bicgstab, gmres_restart
from saiprec.psai import SaiParams, build_preconditioner


@pytest.fixture(scope="module")
def reservoir_like():
    nx = 16
    n = nx * nx
    rng = np.random.default_rng(7)
    coeff = 10.0 ** rng.uniform(0, 5, size=(nx + 1, nx + 1))
    rows, cols, vals = [], [], []

    def idx(i, j):
        return i * nx + j

    for i in range(nx):
        for j in range(nx):
            c = 0.0
            for di, dj, a in (
                (1, 0, coeff[i + 1, j]),
                (-1, 0, coeff[i, j]),
                (0, 1, coeff[i, j + 1]),
                (0, -1, coeff[i, j]),
            ):
                ni, nj = i + di, j + dj
                if 0 <= ni < nx and 0 <= nj < nx:
                    rows.append(idx(i, j))
                    cols.append(idx(ni, nj))
                    vals.append(-a)
                    c += a
            rows.append(idx(i, j))
            cols.append(idx(i, j))
            vals.append(c * 1.02)
    return SparseMatrix.from_coo(n, n, rows, cols, vals)


def _run(A, params):
    P = build_preconditioner(A, params, threads=1)
    nonsingular, _ = check_nonsingular(P.M)
    b = A.matvec(np.ones(A.ncols))
    _, rep_b = bicgstab(A, b, M=P, params=SolveParams(side="right", max_iters=300))
    _, rep_g = gmres_restart(
        A, b, M=P, params=SolveParams(method="gmres", side="right", max_iters=6)
    )
    return P, nonsingular, rep_b, rep_g


def test_adaptive_succeeds(reservoir_like):
    A = reservoir_like
    P, nonsingular, rep_b, rep_g = _run(A, SaiParams(epsilon=0.2, l_max=8))
    assert P.coln(0.2) == 0
    assert P.r_max_post <= 0.4 + 1e-12  # twice the target
    assert nonsingular
    assert rep_b.converged and rep_g.converged


def test_harmless_looking_fixed_tol_fails(reservoir_like):
    A = reservoir_like
    P, nonsingular, rep_b, rep_g = _run(
        A, SaiParams(epsilon=0.2, l_max=8, drop_mode="fixed", tol=1e-3)
    )
    assert P.r_max_post > 10.0
    assert (not nonsingular) or not (rep_b.converged and rep_g.converged)


def test_small_enough_fixed_tol_recovers(reservoir_like):
    A = reservoir_like
    P, nonsingular, rep_b, rep_g = _run(
        A, SaiParams(epsilon=0.2, l_max=8, drop_mode="fixed", tol=1e-7)
    )
    assert nonsingular
    assert P.r_max_post <= 0.5
    assert rep_b.converged and rep_g.converged


def test_adaptive_tolerances_sit_below_the_bad_fixed_one(reservoir_like):
    A = reservoir_like
    P = build_preconditioner(A, SaiParams(epsilon=0.2, l_max=8), threads=1)
    tol_min, tol_max = P.tol_range()
    assert tol_max < 1e-3  # the "harmless" fixed tol exceeds every tol_k
    assert tol_min > 0.0
