"""Spectral data of the defining integer matrices and Liouville margins.

Both surface families start from an integer matrix of determinant one.
``spectral_sm`` handles the 3x3 case (one real eigenvalue above one and a
complex conjugate pair), ``spectral_splus`` the hyperbolic 2x2 case.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations

import numpy as np

from .errors import (
    DegenerateEigenvector,
    NoHyperbolicSpectrum,
    NoInoueSpectrum,
    NotUnimodular,
    RationalInput,
)

EIG_TOL = 1e-12
RATIONAL_Q_MAX = 10**6
RATIONAL_TOL = 1e-15


@dataclass(frozen=True)
class SpectralDataSM:
    """Eigen-data of a matrix defining an S_M surface.

    Attributes
    ----------
    M : ndarray of int, shape (3, 3)
    lam : float
        Real eigenvalue, larger than one.
    mu : complex
        Non-real eigenvalue with positive imaginary part.
    ell : ndarray, shape (3,)
        Unit eigenvector for ``lam``.
    m_vec : ndarray of complex, shape (3,)
        Unit eigenvector for ``mu``.
    degree_d : int
        Degree of the minimal polynomial of ``lam``.
    ratio_index : tuple of int
        Pair ``(i, j)`` selecting the irrational ratio ``ell[i] / ell[j]``.
    residuals : dict
        Relative residuals of the eigen-equations and of ``lam * |mu|**2 = 1``.
    """

    M: np.ndarray
    lam: float
    mu: complex
    ell: np.ndarray
    m_vec: np.ndarray
    degree_d: int
    ratio_index: tuple
    residuals: dict = field(default_factory=dict)

    @property
    def ratio(self):
        i, j = self.ratio_index
        return self.ell[i] / self.ell[j]


@dataclass(frozen=True)
class SpectralDataSPlus:
    """Eigen-data of a hyperbolic matrix in SL(2, Z)."""

    N: np.ndarray
    gamma: float
    a_vec: np.ndarray
    b_vec: np.ndarray
    degree_d: int
    residuals: dict = field(default_factory=dict)

    @property
    def a_slope(self):
        return self.a_vec[1] / self.a_vec[0]

    @property
    def b_slope(self):
        return self.b_vec[1] / self.b_vec[0]


@dataclass(frozen=True)
class LiouvilleMargin:
    """Empirical infimum of ``q**d * |x - p/q|`` over ``2 <= q <= q_bound``."""

    x: float
    degree_d: int
    q_bound: int
    margin: float
    argmin_q: int


def _as_integer_matrix(M, n):
    arr = np.asarray(M)
    if arr.shape != (n, n):
        raise ValueError(f"expected a {n}x{n} matrix, got shape {arr.shape}")
    rounded = np.rint(arr.astype(float))
    if not np.array_equal(rounded, arr.astype(float)):
        raise ValueError("matrix entries must be integers")
    return rounded.astype(np.int64)


def _int_det(M):
    """Exact determinant of a small integer matrix by cofactor expansion."""
    rows = [[int(v) for v in row] for row in M]
    n = len(rows)
    if n == 1:
        return rows[0][0]
    if n == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    total = 0
    for j in range(n):
        minor = [r[:j] + r[j + 1:] for r in rows[1:]]
        total += (-1) ** j * rows[0][j] * _int_det(minor)
    return total


def _polish_root(coeffs, x, iters=8):
    """Newton refinement of a root of a polynomial with real coefficients."""
    p = np.poly1d(coeffs)
    dp = p.deriv()
    for _ in range(iters):
        d = dp(x)
        if d == 0:
            break
        step = p(x) / d
        x = x - step
        if abs(step) <= 1e-16 * max(1.0, abs(x)):
            break
    return x


def _null_vector(A):
    """Unit vector spanning the (numerical) kernel of a square matrix."""
    _, _, vh = np.linalg.svd(A)
    return vh[-1].conj()


def _normalize_real(v):
    v = np.real_if_close(v, tol=1e6).astype(float)
    v = v / np.linalg.norm(v)
    first = np.flatnonzero(np.abs(v) > 1e-10)[0]
    return v if v[first] > 0 else -v


def _normalize_complex(v):
    v = v / np.linalg.norm(v)
    first = np.flatnonzero(np.abs(v) > 1e-10)[0]
    return v * (abs(v[first]) / v[first])


def _rel_residual(M, v, ev):
    return float(np.linalg.norm(M @ v - ev * v) / (abs(ev) * np.linalg.norm(v)))


def looks_rational(x, q_max=RATIONAL_Q_MAX, tol=RATIONAL_TOL):
    """Return the best rational approximation if it matches ``x`` within ``tol``.

    Parameters
    ----------
    x : float
    q_max : int
        Largest denominator examined.
    tol : float
        Absolute matching tolerance.

    Returns
    -------
    Fraction or None
    """
    frac = Fraction(float(x)).limit_denominator(q_max)
    if abs(float(frac) - x) <= tol * max(1.0, abs(x)):
        return frac
    return None


def minimal_degree(char_coeffs, root):
    """Degree of the minimal polynomial of ``root`` over the rationals.

    The characteristic polynomial is monic with integer coefficients, so any
    rational root divides the constant term.  Removing such linear factors
    leaves the minimal polynomial of an irrational root.
    """
    coeffs = [int(round(c)) for c in char_coeffs]
    deg = len(coeffs) - 1
    const = abs(coeffs[-1])
    candidates = set()
    for d in range(1, const + 1):
        if const % d == 0:
            candidates.update({d, -d})
    poly = np.poly1d(coeffs)
    for c in sorted(candidates):
        if poly(c) == 0 and abs(root - c) > 1e-9:
            deg -= 1
    return deg


def spectral_sm(M):
    """Eigen-data of a 3x3 integer matrix defining an Inoue surface S_M.

    Parameters
    ----------
    M : array_like, shape (3, 3)
        Integer matrix with determinant one.

    Returns
    -------
    SpectralDataSM

    Raises
    ------
    NotUnimodular
        If ``det(M) != 1``.
    NoInoueSpectrum
        If there is no real eigenvalue above one together with a non-real pair.
    DegenerateEigenvector
        If no ratio of eigenvector entries is defined.
    RationalInput
        If the selected ratio is rational to working precision.

    Examples
    --------
    >>> data = spectral_sm([[0, 1, 0], [0, 0, 1], [1, 1, 0]])
    >>> round(data.lam, 9)
    1.324717957
    """
    Mi = _as_integer_matrix(M, 3)
    det = _int_det(Mi)
    if det != 1:
        raise NotUnimodular(f"det(M) = {det}, expected 1")
    Mf = Mi.astype(float)
    tr = float(np.trace(Mf))
    c2 = 0.5 * (tr**2 - float(np.trace(Mf @ Mf)))
    coeffs = [1.0, -tr, c2, -1.0]
    # exact integer discriminant: negative iff one real root and a complex pair
    b, c, d = -int(round(tr)), int(round(c2)), -1
    disc = 18 * b * c * d - 4 * b**3 * d + b * b * c * c - 4 * c**3 - 27 * d * d
    if disc >= 0:
        raise NoInoueSpectrum("M needs one real eigenvalue and a non-real conjugate pair")
    roots = np.roots(coeffs)
    real_root = roots[np.argmin(np.abs(roots.imag))].real
    complex_roots = [r for r in roots if r.imag > 0]
    lam = float(_polish_root(coeffs, real_root))
    if not lam > 1.0:
        raise NoInoueSpectrum(f"real eigenvalue {lam} is not larger than one")
    mu = complex(_polish_root(coeffs, complex(max(complex_roots, key=lambda z: z.imag))))
    if mu.imag < 0:
        mu = mu.conjugate()

    ell = _normalize_real(_null_vector(Mf - lam * np.eye(3)))
    m_vec = _normalize_complex(_null_vector(Mf - mu * np.eye(3)))

    candidates = [(i, j) for i, j in permutations(range(3), 2) if abs(ell[j]) > 1e-10]
    candidates.sort()
    if not candidates:
        raise DegenerateEigenvector("every entry of the real eigenvector vanishes")
    ratio_index = candidates[0]
    ratio = ell[ratio_index[0]] / ell[ratio_index[1]]
    frac = looks_rational(ratio)
    if frac is not None:
        raise RationalInput(f"eigenvector ratio {ratio!r} matches {frac}")

    residuals = {
        "ell": _rel_residual(Mf, ell, lam),
        "m_vec": _rel_residual(Mf, m_vec, mu),
        "lam_mu2": abs(lam * abs(mu) ** 2 - 1.0),
    }
    bad = {k: v for k, v in residuals.items() if v > EIG_TOL}
    if bad:
        raise NoInoueSpectrum(f"eigen-equation residuals too large: {bad}")
    return SpectralDataSM(
        M=Mi,
        lam=lam,
        mu=mu,
        ell=ell,
        m_vec=m_vec,
        degree_d=minimal_degree(coeffs, lam),
        ratio_index=ratio_index,
        residuals=residuals,
    )


def spectral_splus(N):
    """Eigen-data of a hyperbolic 2x2 integer matrix of determinant one.

    Parameters
    ----------
    N : array_like, shape (2, 2)

    Returns
    -------
    SpectralDataSPlus

    Raises
    ------
    NotUnimodular
    NoHyperbolicSpectrum
        If there is no real eigenvalue larger than one.
    RationalInput
        If an eigenvector slope is rational to working precision.
    """
    Ni = _as_integer_matrix(N, 2)
    det = _int_det(Ni)
    if det != 1:
        raise NotUnimodular(f"det(N) = {det}, expected 1")
    tr = int(Ni[0, 0] + Ni[1, 1])
    if tr <= 2:
        raise NoHyperbolicSpectrum(f"trace {tr} gives no real eigenvalue above one")
    gamma = (tr + np.sqrt(tr * tr - 4.0)) / 2.0
    gamma = float(_polish_root([1.0, -tr, 1.0], gamma))
    Nf = Ni.astype(float)
    a_vec = _normalize_real(_null_vector(Nf - gamma * np.eye(2)))
    b_vec = _normalize_real(_null_vector(Nf - np.eye(2) / gamma))
    for name, v in (("a", a_vec), ("b", b_vec)):
        if min(abs(v[0]), abs(v[1])) < 1e-10:
            raise RationalInput(f"eigenvector {name} is axis-aligned, slope is rational")
        frac = looks_rational(v[1] / v[0])
        if frac is not None:
            raise RationalInput(f"slope of eigenvector {name} matches {frac}")
    residuals = {
        "a_vec": _rel_residual(Nf, a_vec, gamma),
        "b_vec": _rel_residual(Nf, b_vec, 1.0 / gamma),
    }
    bad = {k: v for k, v in residuals.items() if v > EIG_TOL}
    if bad:
        raise NoHyperbolicSpectrum(f"eigen-equation residuals too large: {bad}")
    return SpectralDataSPlus(
        N=Ni,
        gamma=gamma,
        a_vec=a_vec,
        b_vec=b_vec,
        degree_d=minimal_degree([1, -tr, 1], gamma),
        residuals=residuals,
    )


def liouville_margin(x, degree_d, q_bound, q_min=2):
    """Empirical Liouville constant of ``x``.

    Computes ``min q**d * |x - p/q|`` over ``q_min <= q <= q_bound`` with
    ``p = round(q * x)``.  The default ``q_min = 2`` gives the plain
    exhaustive infimum; a large ``q_min`` isolates the tail behaviour, which
    for quadratic irrationals approaches the liminf of the sequence.

    Parameters
    ----------
    x : float
    degree_d : int
        Exponent ``d >= 2``.
    q_bound : int
        Largest denominator, at least 2.
    q_min : int, optional
        Smallest denominator examined.

    Returns
    -------
    LiouvilleMargin

    Raises
    ------
    RationalInput
        If the margin falls below 1e-14.

    Examples
    --------
    >>> round(liouville_margin(2 ** 0.5, 2, 100).margin, 4)
    0.3431
    """
    if degree_d < 2 or q_bound < 2 or not 2 <= q_min <= q_bound:
        raise ValueError("need degree_d >= 2 and 2 <= q_min <= q_bound")
    q = np.arange(int(q_min), int(q_bound) + 1, dtype=float)
    p = np.rint(q * x)
    # q * x - p keeps the relative error near machine epsilon
    vals = q ** (degree_d - 1) * np.abs(q * x - p)
    idx = int(np.argmin(vals))
    margin = float(vals[idx])
    if margin < 1e-14:
        raise RationalInput(f"x = {x!r} is rational to working precision (q = {int(q[idx])})")
    return LiouvilleMargin(x=float(x), degree_d=int(degree_d), q_bound=int(q_bound),
                           margin=margin, argmin_q=int(q[idx]))
