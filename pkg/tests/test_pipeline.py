"""End-to-end pipeline runs over a varied family of synthetic systems,
mirroring the breadth protocol: build at eps=0.3, l_max=10, then require
clean columns and convergence of both solvers on the preconditioned system."""

import numpy as np
import pytest
import scipy.sparse as sp

from saiprec.core import SparseMatrix
from saiprec.diagnostics import quality_report
from saiprec.krylov import SolveParams, bicgstab, gmres_restart
from saiprec.psai import SaiParams, build_preconditioner


def grid_operator(nx, skew_x=0.0, skew_y=0.0, scale=1.0, shift=0.0, seed=None):
    """Five-point stencil on an nx*nx grid with optional convection skew."""
    n = nx * nx
    diags = [
        (4.0 + shift) * np.ones(n),
        np.full(n - 1, -1.0 + skew_x),
        np.full(n - 1, -1.0 - skew_x),
        np.full(n - nx, -1.0 + skew_y),
        np.full(n - nx, -1.0 - skew_y),
    ]
    A = sp.diags(diags, [0, 1, -1, nx, -nx], format="lil")
    for i in range(1, nx):
        A[i * nx, i * nx - 1] = 0.0
        A[i * nx - 1, i * nx] = 0.0
    A = A.tocsc() * scale
    if seed is not None:
        rng = np.random.default_rng(seed)
        A = A + sp.diags(rng.uniform(0.0, 0.5, n) * scale, 0, format="csc")
    return SparseMatrix.from_scipy(A)


CASES = {
    "poisson": grid_operator(20),
    "convection_x": grid_operator(20, skew_x=0.5),
    "convection_xy": grid_operator(18, skew_x=0.4, skew_y=0.3),
    "scaled_1e6": grid_operator(16, skew_x=0.3, scale=1e6),
    "jittered": grid_operator(16, skew_x=0.2, seed=3),
    "near_indefinite": grid_operator(14, shift=-0.5, seed=5),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_breadth_protocol(name):
    A = CASES[name]
    eps = 0.3
    P = build_preconditioner(A, SaiParams(epsilon=eps, l_max=10), threads=1)
    assert P.coln(eps) == 0, f"{name}: {P.coln(eps)} columns missed the target"
    rep = quality_report(A, P, epsilon=eps)
    assert rep.nonsingular
    assert rep.r_max <= eps + 1e-12
    b = A.matvec(np.ones(A.ncols))
    _, rep_b = bicgstab(A, b, M=P, params=SolveParams(side="right"))
    _, rep_g = gmres_restart(
        A, b, M=P, params=SolveParams(method="gmres", restart=50, side="right", max_iters=20)
    )
    assert rep_b.converged, f"{name}: BiCGStab failed"
    assert rep_g.converged, f"{name}: GMRES failed"
    # the whole point: the preconditioned runs stay far inside the budget
    assert rep_b.iters <= 200
    assert rep_g.iters <= 500


def test_left_side_protocol():
    # row-wise approximation can serve systems whose transpose is easier
    A = CASES["convection_xy"]
    eps = 0.3
    P = build_preconditioner(A, SaiParams(epsilon=eps, l_max=10, side="left"), threads=1)
    assert P.coln(eps) == 0
    b = A.matvec(np.ones(A.ncols))
    for method, fn in (("bicgstab", bicgstab), ("gmres", gmres_restart)):
        _, rep = fn(A, b, M=P, params=SolveParams(method=method, side="left"))
        assert rep.converged, method
