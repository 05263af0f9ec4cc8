"""Leafwise Laplace solves on S+.

Leaves of S+ are not closed, so each Fourier mode in x1 becomes a bounded
ODE in log y2 on a Heisenberg cell.  This demo first checks the ODE solver on
forcings with known answers, then solves a manufactured problem built from
Poincare series and compares with the exact potential.
"""

import time

import numpy as np

from inoue_flow import bounded_ode_solve, build_splus, domain_grid, solve_splus
from inoue_flow.slf import manufactured_splus, sup_bound_k

splus = build_splus(np.array([[2, 1], [1, 1]]), 0, 0, 1, 0.3 + 0.2j)

y = np.linspace(-3, 3, 13)
sol = bounded_ode_solve(2.0, lambda s: np.cos(1.5 * s), y)
print("cosine forcing error:", f"{np.max(np.abs(sol.u + np.cos(1.5 * y) / 6.25)):.1e}")
print(f"sup bound for k = 1, |g| <= 1: {sup_bound_k(splus, 1, 1.0):.4f}")

grid = domain_grid(splus, (8, 8, 6), 5)
u_star, rhs = manufactured_splus(splus, grid.L, np.random.default_rng(3), kmax=2)
t0 = time.perf_counter()
pot, rep = solve_splus(splus, rhs, grid, K=2)
x1, y1, x2, y2 = grid.points
ref = u_star(x2, y1, x1, y2)
err = np.max(np.abs(pot.u - (ref - ref.mean(axis=(0, 1, 2)))))
print(f"manufactured solve on 8x8x6x5: error {err:.2e}, seam {pot.seam_residual:.1e}, "
      f"{time.perf_counter() - t0:.1f} s")
