"""Solvers for the leafwise Laplace equation ``Delta_D u = G``.

On S_M the operator is diagonal in lattice Fourier modes with symbol
``-4 pi^2 z_k / (32 y2)``, so each slice is solved by division.  On S+ the
fiber is a Heisenberg nilmanifold: a Fourier expansion in ``x1`` leaves, for
every ``k != 0``, the ODE ``u'' - (2 pi k / c3)^2 u = g`` along ``y1``-lines
(solved with its bounded Green kernel) and, for ``k = 0``, an algebraic
system on the lattice ``Z (a1, y2 b1) + Z (a2, y2 b2)``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    DivisorUnderflow,
    NonZeroMean,
    SeamMismatch,
    ShapeMismatch,
    WindowTooSmall,
)
from .metrics import HermitianMetricField, add_ddbar, fiber_mean, g_of_omega
from .surfaces import (
    check_lattice,
    domain_grid,
    fiber_spectral,
    leafwise_laplacian_apply,
    seam_residual_sm,
)

MEAN_TOL = 1e-8
DIVISOR_FLOOR = 1e-14
WINDOW_MARGIN = 1e-2
GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass
class LeafPotential:
    """Solution of the leafwise equation on a grid.

    Attributes
    ----------
    u : ndarray
        Real field, zero mean on every fiber.
    seam_residual : float
        Max mismatch of ``u`` across the gluing map.
    mean_per_slice : ndarray
    """

    u: np.ndarray
    seam_residual: float
    mean_per_slice: np.ndarray
    grid: object = field(repr=False, default=None)


@dataclass
class SolverReport:
    """Diagnostics of a leafwise solve.

    ``decay`` holds rows ``(mode_norm, abs_coeff, divisor)`` binned by integer
    shells of the mode norm.
    """

    K: int
    min_divisor: float
    liouville_check: float
    residual_linf: float
    decay: np.ndarray
    extra: dict = field(default_factory=dict)

    def to_text(self):
        lines = [
            f"truncation_K = {self.K}",
            f"min_divisor = {self.min_divisor:.6e}",
            f"liouville_check = {self.liouville_check:.6e}",
            f"residual_linf = {self.residual_linf:.6e}",
        ]
        lines += [f"{k} = {v}" for k, v in self.extra.items()]
        return "\n".join(lines) + "\n"

    def decay_csv(self):
        rows = ["mode_norm,abs_coeff,divisor"]
        rows += [f"{a:.17g},{b:.17g},{c:.17g}" for a, b, c in self.decay]
        return "\n".join(rows) + "\n"


# ----------------------------------------------------------------------------
# S_M


def integer_box(K):
    """All integer vectors with ``0 < |k|_inf <= K``, shape (m, 3)."""
    r = np.arange(-K, K + 1)
    k = np.array(np.meshgrid(r, r, r, indexing="ij")).reshape(3, -1).T
    return k[np.any(k != 0, axis=1)]


def liouville_check(surface, K):
    """``min z_k |k|^(2(d-1))`` over ``0 < |k|_inf <= K``.

    This is the empirical counterpart of the small-divisor lower bound
    ``z_k >= C / |k|^(2(d-1))`` implied by Liouville's theorem.
    """
    k = integer_box(K)
    z = surface.z_form(k)
    norm2 = np.sum(k.astype(float) ** 2, axis=1)
    return float(np.min(z * norm2 ** (surface.spec.degree_d - 1)))


def _decay_curve(knorm, coeff, z):
    shells = np.rint(knorm).astype(int)
    rows = []
    for s in np.unique(shells):
        if s == 0:
            continue
        m = shells == s
        rows.append((float(s), float(coeff[m].max()), float(z[m].min())))
    return np.array(rows)


def solve_sm(surface, rhs, grid=None, K=None, tol=1e-8):
    """Solve ``Delta_D u = rhs`` on S_M slice by slice.

    Parameters
    ----------
    surface : SurfaceSM
    rhs : ndarray, shape (n, n, n, n_y2)
        Zero mean on every fiber; compatible with the gluing map.
    grid : DomainGrid, optional
    K : int, optional
        Keep only modes with ``|k|_inf <= K`` (default: all grid modes).
    tol : float
        Solver tolerance; the seam check fails above ``100 * tol``.

    Returns
    -------
    LeafPotential, SolverReport

    Raises
    ------
    NonZeroMean, DivisorUnderflow, SeamMismatch
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.ndim != 4:
        raise ShapeMismatch("rhs must have shape (n1, n2, n3, n_y2)")
    if grid is None:
        grid = domain_grid(surface, rhs.shape[:3], rhs.shape[3])
    if rhs.shape != grid.shape:
        raise ShapeMismatch(f"rhs shape {rhs.shape} does not match grid {grid.shape}")
    scale = max(1.0, float(np.abs(rhs).max()))
    means = fiber_mean(rhs)
    if np.abs(means).max() > MEAN_TOL * scale:
        raise NonZeroMean(f"fiber mean of rhs up to {np.abs(means).max():.3e}")

    sp = fiber_spectral(surface, grid.n_torus)
    kmax = np.max(np.abs(sp.k), axis=0)
    if K is None:
        K = max(n // 2 for n in grid.n_torus)
    keep = (kmax <= K) & (kmax > 0)
    z = sp.z
    if np.any(z[keep] < DIVISOR_FLOOR):
        raise DivisorUnderflow(f"smallest divisor {z[keep].min():.3e}")
    symbol = np.zeros_like(z)
    symbol[keep] = -32.0 / (4.0 * np.pi**2 * z[keep])

    d = sp.fft(rhs)
    a = d * symbol[..., None] * grid.y2
    u = sp.ifft(a).real
    u -= fiber_mean(u)

    seam = seam_residual_sm(surface, u)
    if seam > 100.0 * tol:
        raise SeamMismatch(f"seam residual {seam:.3e} exceeds {100 * tol:.1e}")
    resid = float(np.abs(leafwise_laplacian_apply(surface, u, grid) - rhs).max())

    ncell = np.prod(grid.n_torus)
    coeff = np.abs(a).max(axis=-1) / ncell
    knorm = np.sqrt(np.sum(sp.k.astype(float) ** 2, axis=0))
    decay = _decay_curve(knorm[keep], coeff[keep], z[keep])
    used = keep & (np.abs(d).max(axis=-1) > 1e-13 * ncell * scale)
    report = SolverReport(
        K=int(K),
        min_divisor=float(z[used].min()) if used.any() else float(z[keep].min()),
        liouville_check=liouville_check(surface, int(K)),
        residual_linf=resid,
        decay=decay,
    )
    pot = LeafPotential(u=u, seam_residual=seam, mean_per_slice=fiber_mean(u), grid=grid)
    return pot, report


def slf_defect(surface, omega_u):
    """Relative spread of ``(omega_u ^ alpha) / omega_TV^2 = r / 8``.

    Parameters
    ----------
    omega_u : HermitianMetricField or ndarray
        A (1,1)-form in frame components, or directly its ``r`` component.

    Returns
    -------
    float
        ``(max - min) / mean`` of the ratio.
    """
    r = omega_u.r if isinstance(omega_u, HermitianMetricField) else np.asarray(omega_u)
    ratio = r / 8.0
    return float((ratio.max() - ratio.min()) / abs(ratio.mean()))


def slf_pipeline(surface, omega, tol=1e-8):
    """``G(omega)`` -> ``solve_sm`` -> ``omega + i ddbar u`` -> defect.

    Returns
    -------
    pot : LeafPotential
    report : SolverReport
    omega_u : HermitianMetricField
        Not validated for positivity; it is a (1,1)-form.
    defect : float
    """
    G = g_of_omega(surface, omega)
    pot, report = solve_sm(surface, G, omega.grid, tol=tol)
    omega_u = add_ddbar(surface, omega, pot.u, validate=False)
    return pot, report, omega_u, slf_defect(surface, omega_u)


# ----------------------------------------------------------------------------
# bounded ODE


@dataclass
class BoundedSolution:
    """Values of the bounded solution of ``u'' - a^2 u = g`` on the core points."""

    y: np.ndarray
    u: np.ndarray
    L: float
    truncation_bound: float


def window_half_width(a, g_max, tol):
    """``max(3, ln(g_max / (a^2 tol)) / a)``."""
    if g_max <= 0:
        return 3.0
    return max(3.0, float(np.log(g_max / (a * a * tol)) / a))


def kernel_nodes(a, L, panel_width=None):
    """Gauss-Legendre nodes and weights of ``int_0^L e^(-a tau) (.) d tau``."""
    if panel_width is None:
        panel_width = min(2.0 / a, 0.25)
    n_panels = max(1, int(np.ceil(L / panel_width)))
    edges = np.linspace(0.0, L, n_panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    tau = (mid[:, None] + half[:, None] * GL_NODES[None, :]).ravel()
    w = (half[:, None] * GL_WEIGHTS[None, :]).ravel()
    return tau, w * np.exp(-a * tau)


def bounded_ode_solve(a, g, y, L=None, tol=1e-10, g_max=None, panel_width=None):
    """Bounded solution of ``u'' - a^2 u = g`` on the real line.

    Uses ``u(y) = -(1/(2a)) int exp(-a |y - s|) g(s) ds`` truncated to
    ``|s - y| <= L``.  The integral is split at the kink ``s = y`` and each
    side is integrated with composite 16-point Gauss-Legendre panels.

    Parameters
    ----------
    a : float
        Positive rate.
    g : callable or tuple (s, values)
        Forcing.  A sampled forcing is interpolated by a cubic spline and must
        cover ``[min(y) - L, max(y) + L]``.
    y : array_like
        Core points where ``u`` is returned.
    L : float, optional
        Window half-width; when omitted it is chosen so that the truncation
        bound is ``tol / 100``.
    tol : float
        Requested truncation tolerance.
    g_max : float, optional
        Bound on ``|g|`` used for the window choice and the truncation bound.

    Returns
    -------
    BoundedSolution

    Raises
    ------
    WindowTooSmall
        If the truncation bound ``(g_max / a^2) exp(-a L)`` exceeds ``tol`` or
        sampled data do not cover the window.

    Examples
    --------
    >>> sol = bounded_ode_solve(2.0, lambda s: np.full_like(s, 3.0), [0.0])
    >>> float(np.round(sol.u[0], 10))
    -0.75
    """
    if not a > 0:
        raise ValueError("a must be positive")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if callable(g):
        gfun = g
        if g_max is None:
            probe = np.linspace(y.min() - 3.0, y.max() + 3.0, 257)
            g_max = float(np.max(np.abs(gfun(probe))))
    else:
        s_data, g_data = (np.asarray(v) for v in g)
        spline = CubicSpline(s_data, g_data)
        gfun = spline
        if g_max is None:
            g_max = float(np.max(np.abs(g_data)))
    if L is None:
        # leave two digits of headroom for the quadrature error
        L = window_half_width(a, g_max, tol * WINDOW_MARGIN)
    bound = (g_max / (a * a)) * float(np.exp(-a * L))
    if bound > tol:
        raise WindowTooSmall(f"truncation bound {bound:.3e} exceeds tol {tol:.1e} at L = {L}")
    if not callable(g) and (y.min() - L < s_data.min() - 1e-12 or y.max() + L > s_data.max() + 1e-12):
        raise WindowTooSmall("sampled forcing does not cover the quadrature window")
    tau, w = kernel_nodes(a, L, panel_width)
    vals = gfun(y[:, None] + tau[None, :]) + gfun(y[:, None] - tau[None, :])
    u = -(vals @ w) / (2.0 * a)
    return BoundedSolution(y=y, u=u, L=float(L), truncation_bound=bound)


def sup_bound_k(surface_or_c3, k, g_max):
    """Right-hand side of ``max|u_k| <= (sqrt(2) / 4 pi^2) (c3^2 / k^2) max|g_k|``."""
    c3 = getattr(surface_or_c3, "c3", surface_or_c3)
    return np.sqrt(2.0) / (4 * np.pi**2) * c3**2 / k**2 * g_max


# ----------------------------------------------------------------------------
# S+ fiber: cell reduction and phases


def _theta(surface, j, x2, k):
    b = surface.b[j]
    c = surface.c[j]
    return 2.0 * np.pi * k * (b * x2 + c) / surface.c3


def _walk_phase(surface, j, n, x2, k):
    """Angle ``sum_{i<n} theta_j(x2 + i a_j)`` (polynomial in ``n``, valid for negative n)."""
    a, b = surface.a[j], surface.b[j]
    return n * _theta(surface, j, x2, k) + np.pi * k * b * a * n * (n - 1) / surface.c3


def reduce_to_cell(surface, point, y2, k):
    """Map ``(x2, y1)`` into the fundamental cell of ``L_{y2}``.

    The cell is ``{s1 (a1, y2 b1) + s2 (a2, y2 b2) : 0 <= s1, s2 < 1}``.
    Fourier coefficients ``f_k`` of a function on the fiber satisfy
    ``f_k(q) = phase * f_k(point)`` with the returned ``q`` and ``phase``.

    Parameters
    ----------
    surface : SurfaceSPlus
    point : tuple of array_like
        ``(x2, y1)`` coordinates.
    y2 : float
    k : int

    Returns
    -------
    cell_point : tuple of ndarray
    phase : ndarray of complex

    Raises
    ------
    DegenerateLattice
    """
    check_lattice(surface, y2)
    x2 = np.asarray(point[0], dtype=float)
    y1 = np.asarray(point[1], dtype=float)
    a, b = surface.a, surface.b
    V = np.array([[a[0], a[1]], [y2 * b[0], y2 * b[1]]])
    Vi = np.linalg.inv(V)
    s1 = Vi[0, 0] * x2 + Vi[0, 1] * y1
    s2 = Vi[1, 0] * x2 + Vi[1, 1] * y1
    n1 = np.floor(s1 + 1e-12)
    n2 = np.floor(s2 + 1e-12)
    qx2 = x2 - n1 * a[0] - n2 * a[1]
    qy1 = y1 - y2 * (n1 * b[0] + n2 * b[1])
    ang = _walk_phase(surface, 0, n1, qx2, k) + _walk_phase(surface, 1, n2, qx2 + n1 * a[0], k)
    if k != 0:
        alt = _walk_phase(surface, 1, n2, qx2, k) + _walk_phase(surface, 0, n1, qx2 + n2 * a[1], k)
        gap = np.abs(np.exp(1j * ang) - np.exp(1j * alt))
        if gap.size and gap.max() > 1e-12 * max(1.0, float(np.abs(ang).max())):
            warnings.warn(f"cell phase depends on the walking order (gap {gap.max():.2e})")
    return (qx2, qy1), np.exp(1j * ang)


def cell_coordinates(surface, x2, y1, y2):
    """Cell coordinates ``(s1, s2)`` of points ``(x2, y1)`` at height ``y2``."""
    a, b = surface.a, surface.b
    V = np.array([[a[0], a[1]], [y2 * b[0], y2 * b[1]]])
    Vi = np.linalg.inv(V)
    return Vi[0, 0] * x2 + Vi[0, 1] * y1, Vi[1, 0] * x2 + Vi[1, 1] * y1


# ----------------------------------------------------------------------------
# S+ right-hand sides


class CallableRHS:
    """Right-hand side given as ``g(x2, y1, x1, y2)`` on the universal cover.

    Only values inside the fundamental cell are requested by the solver, so the
    callable may be defined on the cell alone.
    """

    def __init__(self, func, n_x1):
        self.func = func
        self.n_x1 = int(n_x1)

    def mode(self, surface, k, x2, y1, y2):
        """``g_k`` at cell points by a discrete Fourier transform in ``x1``."""
        x1 = np.arange(self.n_x1) * surface.c3 / self.n_x1
        vals = self.func(x2[..., None], y1[..., None], x1, y2)
        w = np.exp(-2j * np.pi * k * np.arange(self.n_x1) / self.n_x1)
        return vals @ w / self.n_x1


class GridRHS:
    """Right-hand side sampled on the S+ cell grid of every slice.

    Off-node values of each ``g_k`` are obtained by cubic interpolation in
    cell coordinates after padding the cell with quasi-periodic ghost nodes.
    """

    PAD = 3

    def __init__(self, surface, grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ShapeMismatch(f"rhs shape {values.shape} does not match grid {grid.shape}")
        self.surface = surface
        self.grid = grid
        self.values = values
        self.modes = np.fft.fft(values, axis=2) / grid.n_torus[2]
        self._padded = {}

    def _padded_mode(self, k, j):
        key = (k, j)
        if key in self._padded:
            return self._padded[key]
        from scipy.interpolate import RectBivariateSpline

        S, grid = self.surface, self.grid
        n1, n2 = grid.n_torus[:2]
        y2 = grid.y2[j]
        p = self.PAD
        i1 = np.arange(-p, n1 + p)
        i2 = np.arange(-p, n2 + p)
        s1 = i1 / n1
        s2 = i2 / n2
        S1, S2 = np.meshgrid(s1, s2, indexing="ij")
        x2 = S1 * S.a[0] + S2 * S.a[1]
        y1 = y2 * (S1 * S.b[0] + S2 * S.b[1])
        (qx2, qy1), phase = reduce_to_cell(S, (x2, y1), y2, k)
        qs1, qs2 = cell_coordinates(S, qx2, qy1, y2)
        j1 = np.rint(qs1 * n1).astype(int) % n1
        j2 = np.rint(qs2 * n2).astype(int) % n2
        base = self.modes[:, :, k % grid.n_torus[2], j]
        vals = base[j1, j2] * np.conj(phase)
        # an exact interpolating bicubic spline (no iterative coefficient solve)
        interp = (RectBivariateSpline(s1, s2, vals.real, kx=3, ky=3, s=0),
                  RectBivariateSpline(s1, s2, vals.imag, kx=3, ky=3, s=0))
        self._padded[key] = interp
        return interp

    def mode(self, surface, k, x2, y1, y2):
        j = int(np.argmin(np.abs(self.grid.y2 - y2)))
        if abs(self.grid.y2[j] - y2) > 1e-12 * y2:
            raise ShapeMismatch("sampled rhs is only available on grid slices")
        re, im = self._padded_mode(k, j)
        s1, s2 = cell_coordinates(surface, x2, y1, y2)
        a, b = np.ravel(s1), np.ravel(s2)
        return (re.ev(a, b) + 1j * im.ev(a, b)).reshape(np.shape(x2))


# ----------------------------------------------------------------------------
# S+ solver


def _mode_at(surface, rhs, k, x2, y1, y2):
    """``g_k(x2, y1)`` anywhere on the cover via reduction to the cell."""
    (qx2, qy1), phase = reduce_to_cell(surface, (x2, y1), y2, k)
    return np.conj(phase) * rhs.mode(surface, k, qx2, qy1, y2)


def _lattice_modes(M):
    r = np.arange(-M, M + 1)
    m, n = np.meshgrid(r, r, indexing="ij")
    m, n = m.ravel(), n.ravel()
    keep = (m != 0) | (n != 0)
    return m[keep], n[keep]


def _cell_nodes(surface, y2, n_cell):
    s = np.arange(n_cell) / n_cell
    S1, S2 = np.meshgrid(s, s, indexing="ij")
    x2 = S1 * surface.a[0] + S2 * surface.a[1]
    y1 = y2 * (S1 * surface.b[0] + S2 * surface.b[1])
    return x2, y1


def _k0_coefficients(surface, rhs, y2, n_cell, M):
    """Lattice Fourier coefficients of ``32 g_0`` and of the solution ``u_0``."""
    x2, y1 = _cell_nodes(surface, y2, n_cell)
    g0 = 32.0 * rhs.mode(surface, 0, x2, y1, y2)
    gh = np.fft.fft2(g0) / n_cell**2
    m, n = _lattice_modes(M)
    coef_g = gh[m % n_cell, n % n_cell]
    det = check_lattice(surface, y2)
    num = n * surface.a[0] - m * surface.a[1]
    if np.any(np.abs(num) < DIVISOR_FLOOR):
        raise DivisorUnderflow("n a1 - m a2 vanishes for some lattice mode")
    div = (num / det) ** 2
    coef_u = -coef_g / (4.0 * np.pi**2 * div)
    return m, n, coef_u, float(np.abs(gh[0, 0])), div, coef_g


def _eval_k0(m, n, coef_u, surface, x2, y1, y2):
    s1, s2 = cell_coordinates(surface, x2, y1, y2)
    ph = np.exp(2j * np.pi * (np.multiply.outer(s1, m) + np.multiply.outer(s2, n)))
    return (ph @ coef_u).real


def splus_evaluate(surface, rhs, x2, y1, x1, y2, K=8, M=16, tol=1e-10, return_modes=False):
    """Evaluate the S+ solution at arbitrary cover points of one slice.

    Parameters
    ----------
    rhs : CallableRHS or GridRHS
    x2, y1, x1 : ndarray
        Points (any common shape) at height ``y2``.
    K : int
        Largest ``|k|`` of the ``x1`` Fourier expansion.
    M : int
        Largest ``|m|, |n|`` of the lattice modes; the ``k = 0`` forcing is
        sampled on a ``(2M + 2)^2`` cell grid.
    """
    x2 = np.asarray(x2, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    c3 = surface.c3
    m, n, cu, g000, div, cg = _k0_coefficients(surface, rhs, y2, 2 * M + 2, M)
    u = _eval_k0(m, n, cu, surface, x2, y1, y2) + np.zeros(x1.shape)
    cx2, cy1 = _cell_nodes(surface, y2, 2 * M + 2)
    modes = {}
    for k in range(1, K + 1):
        a = 2.0 * np.pi * k / abs(c3)
        flat_x2 = x2.ravel()
        flat_y1 = y1.ravel()
        # |g_k| is invariant under the cell phase, so cell samples bound it
        g_max = 32.0 * float(np.abs(rhs.mode(surface, k, cx2, cy1, y2)).max())
        if g_max == 0.0:
            continue
        L = window_half_width(a, g_max, tol * WINDOW_MARGIN)
        tau, w = kernel_nodes(a, L)
        ys = np.concatenate([flat_y1[:, None] + tau, flat_y1[:, None] - tau], axis=1)
        xs = np.broadcast_to(flat_x2[:, None], ys.shape)
        gk = 32.0 * _mode_at(surface, rhs, k, xs, ys, y2)
        nt = tau.size
        uk = -((gk[:, :nt] + gk[:, nt:]) @ w) / (2.0 * a)
        uk = uk.reshape(x2.shape)
        modes[k] = (uk, g_max)
        u = u + 2.0 * (uk * np.exp(2j * np.pi * k * x1 / c3)).real
    if return_modes:
        return u, modes, (m, n, cu, g000, div, cg)
    return u


def splus_seam_image(surface, x2, y1, x1):
    """Image of cover points under ``f0(z, w) = (z + t, gamma w)`` (height times gamma)."""
    t = surface.t_param
    return surface.gamma * x2, y1 + t.imag, x1 + t.real


def solve_splus(surface, rhs, grid, K=8, M=16, tol=1e-6, quad_tol=1e-10, slices=None):
    """Solve ``Delta_D u = rhs`` on the S+ cell grid.

    Parameters
    ----------
    surface : SurfaceSPlus
    rhs : callable, CallableRHS, GridRHS or ndarray
        A callable ``g(x2, y1, x1, y2)`` on the cover or samples on ``grid``.
    grid : DomainGrid
        S+ cell grid ``(n_s1, n_s2, n_x1)`` times ``n_y2`` slices.
    K : int
        ``x1`` modes ``|k| <= K`` are kept.
    M : int
        Lattice modes ``|m|, |n| <= M`` in the ``k = 0`` branch.
    tol : float
        Tolerance of the seam check (raised above ``100 * tol``).
    slices : sequence of int, optional
        Restrict the solve to these slices (others are left at zero).

    Returns
    -------
    LeafPotential, SolverReport
    """
    if callable(rhs) and not isinstance(rhs, (CallableRHS, GridRHS)):
        rhs = CallableRHS(rhs, 2 * K + 2)
    elif isinstance(rhs, np.ndarray):
        rhs = GridRHS(surface, grid, rhs)
    x1g, y1g, x2g, _ = grid.points
    u = np.zeros(grid.shape)
    slices = range(grid.n_y2) if slices is None else slices
    min_div = np.inf
    decay = {}
    k_bound_ratio = 0.0
    for j in slices:
        y2 = grid.y2[j]
        x2, y1, x1 = x2g[..., j], y1g[..., j], x1g[..., j]
        val, modes, (m, n, cu, g000, div, cg) = splus_evaluate(
            surface, rhs, x2[..., :1], y1[..., :1], x1, y2, K=K, M=M, tol=quad_tol, return_modes=True)
        if g000 > MEAN_TOL * max(1.0, float(np.abs(cg).max())) * 32:
            raise NonZeroMean(f"fiber mean {g000 / 32:.3e} on slice {j}")
        u[..., j] = val
        used = np.abs(cg) > 1e-14
        if used.any():
            min_div = min(min_div, float(div[used].min()))
        for k, (uk, g_max) in modes.items():
            bound = sup_bound_k(surface, k, g_max)
            k_bound_ratio = max(k_bound_ratio, float(np.abs(uk).max() / bound))
            decay[k] = max(decay.get(k, 0.0), float(np.abs(uk).max()))
    raw_means = fiber_mean(u)
    u -= raw_means

    seam = 0.0
    if grid.n_y2 - 1 in slices and 0 in slices:
        ix2, iy1, ix1 = splus_seam_image(surface, x2g[..., 0], y1g[..., 0], x1g[..., 0])
        top = splus_evaluate(surface, rhs, ix2[..., :1], iy1[..., :1], ix1, grid.y2[-1], K=K, M=M,
                             tol=quad_tol)
        top = top - raw_means[-1]
        seam = float(np.abs(u[..., 0] - top).max())
        if seam > 100.0 * tol:
            raise SeamMismatch(f"seam residual {seam:.3e} exceeds {100 * tol:.1e}")
    rows = [(float(k), v, (2 * np.pi * k / surface.c3) ** 2) for k, v in sorted(decay.items())]
    report = SolverReport(
        K=int(K),
        min_divisor=float(min_div) if np.isfinite(min_div) else float("nan"),
        liouville_check=float("nan"),
        residual_linf=float("nan"),
        decay=np.array(rows),
        extra={"sup_bound_ratio": k_bound_ratio, "lattice_M": M},
    )
    pot = LeafPotential(u=u, seam_residual=seam, mean_per_slice=fiber_mean(u), grid=grid)
    return pot, report


# ----------------------------------------------------------------------------
# S+ leafwise Laplacian of callables and manufactured potentials

_FD8 = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])


def splus_leafwise_laplacian(surface, u, grid, h=1e-2):
    """``(u_x1x1 + u_y1y1) / 32`` of a callable ``u(x2, y1, x1, y2)`` at grid nodes.

    Both second derivatives use an eighth-order central difference stencil.
    """
    if not callable(u):
        raise ShapeMismatch("on S+ the field must be given as a callable on the cover")
    x1, y1, x2, y2 = grid.points
    offs = np.arange(-4, 5) * h
    out = np.zeros(grid.shape)
    for c, o in zip(_FD8, offs):
        out += c * (u(x2, y1 + o, x1, y2) + u(x2, y1, x1 + o, y2))
    return out / (h * h) / 32.0


def heisenberg_orbit(surface, x2, y1, x1, y2, n1, n2):
    """Apply ``g1^n1 g2^n2`` to cover points at height ``y2``."""
    a, b, c = surface.a, surface.b, surface.c
    x1 = x1 + n2 * b[1] * x2 + b[1] * a[1] * n2 * (n2 - 1) / 2 + n2 * c[1]
    x2 = x2 + n2 * a[1]
    y1 = y1 + y2 * n2 * b[1]
    x1 = x1 + n1 * b[0] * x2 + b[0] * a[0] * n1 * (n1 - 1) / 2 + n1 * c[0]
    x2 = x2 + n1 * a[0]
    y1 = y1 + y2 * n1 * b[0]
    return x2, y1, x1


def poincare_mode(surface, k, center=(0.3, 0.2), width=0.18, coeff=1.0, laplacian=False):
    """Fiber function ``sum_gamma phi(gamma p) exp(2 pi i k x1(gamma p) / c3)``.

    ``phi`` is a Gaussian in ``(x2, y1)``; summing over the lattice quotient
    gives a smooth function invariant under the fiber group, with a single
    ``x1`` Fourier mode ``k``.  With ``laplacian=True`` the callable returns
    ``(d^2/dx1^2 + d^2/dy1^2) / 32`` of the real part instead, in closed form.

    Returns
    -------
    callable ``f(x2, y1, x1, y2)`` returning the real part of ``coeff`` times the sum.
    """
    x0, y0 = center
    kap = 2.0 * np.pi * k / surface.c3

    cut = 8.0 * width

    def f(x2, y1, x1, y2):
        x2, y1, x1, y2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x2, y1, x1, y2)))
        total = np.zeros(x2.shape, dtype=complex)
        if x2.size == 0:
            return total.real
        # orbit translates n with g^n p within `cut` of the centre
        a, b = surface.a, surface.b
        det = y2 * (a[0] * b[1] - a[1] * b[0])
        s1 = (y2 * b[1] * x2 - a[1] * y1) / det
        s2 = (-y2 * b[0] * x2 + a[0] * y1) / det
        c1 = (y2 * b[1] * x0 - a[1] * y0) / det
        c2 = (-y2 * b[0] * x0 + a[0] * y0) / det
        r1 = cut * (np.abs(y2 * b[1]) + np.abs(a[1])) / np.abs(det)
        r2 = cut * (np.abs(y2 * b[0]) + np.abs(a[0])) / np.abs(det)
        lo1, hi1 = int(np.floor(np.min(c1 - r1 - s1))), int(np.ceil(np.max(c1 + r1 - s1)))
        lo2, hi2 = int(np.floor(np.min(c2 - r2 - s2))), int(np.ceil(np.max(c2 + r2 - s2)))
        shape = total.shape
        x2, y1, x1, y2 = (v.ravel() for v in (x2, y1, x1, y2))
        total = total.ravel()
        for n1 in range(lo1, hi1 + 1):
            for n2 in range(lo2, hi2 + 1):
                gx2 = x2 + (n1 * a[0] + n2 * a[1])
                gy1 = y1 + y2 * (n1 * b[0] + n2 * b[1])
                d2 = (gx2 - x0) ** 2 + (gy1 - y0) ** 2
                idx = np.flatnonzero(d2 < cut * cut)
                if idx.size == 0:
                    continue
                gx1 = heisenberg_orbit(surface, x2[idx], y1[idx], x1[idx], y2[idx], n1, n2)[2]
                phi = np.exp(-d2[idx] / (2 * width**2))
                if laplacian:
                    dy = gy1[idx] - y0
                    phi = (phi * (dy**2 / width**4 - 1.0 / width**2) - kap**2 * phi) / 32.0
                total[idx] += phi * np.exp(1j * kap * gx1)
        total = total.reshape(shape)
        return (coeff * total).real

    return f


def manufactured_splus(surface, L, rng=None, kmax=2, width=0.18):
    """Manufactured potential and its leafwise Laplacian on S+.

    ``u*(x2, y1, x1, y2) = chi(log y2) sum_{|k| <= kmax} Re(c_k P_k)`` with
    Poincare series ``P_k`` (see :func:`poincare_mode`) and ``chi`` vanishing
    at both seam slices.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    parts = []
    for k in range(0, kmax + 1):
        c = complex(rng.normal(), rng.normal()) if k else complex(rng.normal(), 0.0)
        center = tuple(rng.uniform(0, 0.5, size=2))
        parts.append((k, c, center))

    def chi(y2):
        return np.sin(np.pi * np.log(y2) / L) ** 2

    fs = [poincare_mode(surface, k, ctr, width, c) for k, c, ctr in parts]
    ls = [poincare_mode(surface, k, ctr, width, c, laplacian=True) for k, c, ctr in parts]

    def u_star(x2, y1, x1, y2):
        return chi(np.asarray(y2)) * sum(f(x2, y1, x1, y2) for f in fs)

    def rhs(x2, y1, x1, y2):
        return chi(np.asarray(y2)) * sum(f(x2, y1, x1, y2) for f in ls)

    return u_star, rhs
