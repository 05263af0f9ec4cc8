"""Spectral data, Diophantine margins and the kernel identity.

Builds an S_M surface from the companion matrix of x^3 - x - 1 and an S+
surface from the cat map, then prints what the solvers later depend on:
the real eigenvalue, the eigen-residuals, how badly the eigenvector ratio is
approximable by rationals, and that the quadratic form Z kills ell.
"""

import numpy as np

from inoue_flow import build_sm, build_splus, liouville_margin, surface_report
from inoue_flow.errors import NoInoueSpectrum

M = np.array([[0, 1, 0], [0, 0, 1], [1, 1, 0]])
sm = build_sm(M)
print(surface_report(sm))

sp = sm.spec
print(f"lambda |mu|^2 = {sp.lam * abs(sp.mu) ** 2:.15f}")
for q_bound in (10**2, 10**3, 10**4):
    m = liouville_margin(sp.ratio, sp.degree_d, q_bound)
    print(f"min q^{sp.degree_d} |x - p/q| for q <= {q_bound:>5}: {m.margin:.6f} (at q = {m.argmin_q})")

# conjugating M by an integer unimodular matrix gives the same surface
U = np.array([[1, 1, 0], [0, 1, 0], [0, 0, 1]])
Mc = U @ M @ np.rint(np.linalg.inv(U)).astype(int)
sc = build_sm(Mc)
print("conjugate kernel residual |Z ell| / |ell| =",
      f"{np.linalg.norm(sc.Z @ sc.spec.ell) / np.linalg.norm(sc.spec.ell):.2e}")

try:
    build_sm(np.array([[2, 1, 0], [1, 1, 0], [0, 0, 1]]))
except NoInoueSpectrum as exc:
    print("a matrix with real spectrum is rejected:", exc)

splus = build_splus(np.array([[2, 1], [1, 1]]), 0, 0, 1, 0.3 + 0.2j)
print()
print(surface_report(splus))
