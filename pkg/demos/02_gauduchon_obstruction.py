"""The Gauduchon test and the integral obstruction.

A metric is a leafwise ddbar-perturbation of the reference metric exactly
when the fibre integral of its ``r`` component does not depend on y2.  On
such metrics G(omega) pairs to zero with every function of y2 alone.  The
``2 + cos`` profile violates it, and its pairing with ``r`` has a closed form.
"""

import numpy as np

from inoue_flow import build_sm, domain_grid, g_of_omega, gauduchon_defect, obstruction_pairing
from inoue_flow.metrics import (
    metric_from_potential,
    nonconstant_r_metric,
    pairing_closed_form,
    random_kernel_functions,
    random_potential,
)

sm = build_sm(np.array([[0, 1, 0], [0, 0, 1], [1, 1, 0]]))
grid = domain_grid(sm, 16, 17)
rng = np.random.default_rng(1)

omega = metric_from_potential(sm, grid, random_potential(sm, grid, rng))
report = gauduchon_defect(sm, omega)
print(report.to_text())

G = g_of_omega(sm, omega)
tests = random_kernel_functions(grid, 5, rng)
print("pairings of G with y2-only functions:",
      ", ".join(f"{obstruction_pairing(sm, omega, psi, G=G):+.1e}" for psi in tests))

bad = nonconstant_r_metric(grid)
print()
print(gauduchon_defect(sm, bad).to_text())
r = np.asarray(bad.r)[0, 0, 0]
print(f"pairing with r: {obstruction_pairing(sm, bad, r):.10f}")
print(f"closed form:    {pairing_closed_form(sm, grid, r):.10f}")
