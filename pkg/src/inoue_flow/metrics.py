"""Hermitian metrics in frame and coordinate form, G(omega) and its obstruction.

A Hermitian metric is written in the reference coframe ``(phi1, phi2)`` as

    omega = i r phi1^phi1b + i s phi2^phi2b + u phi1^phi2b - ub phi2^phi1b,

so its frame matrix is ``h = [[r, -i u], [i ub, s]]``.  In the coordinate
coframe ``(dz, dw)`` the same form has matrix ``g = E^T h conj(E)`` where
``(phi1, phi2) = E (dz, dw)``.

Integrals over the surface use the measure ``|eps| dt ds`` on S_M (lattice
coordinates ``t`` and ``s = log y2``), which is the volume of the reference
metric up to a constant factor that cancels in every ratio reported here.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NotPositive, ShapeMismatch
from .surfaces import (
    coframe_matrices,
    fiber_spectral,
    reference_forms,
    s_derivatives,
    y2_derivatives,
)

POS_TOL = 0.0


def _first_bad(mask):
    idx = np.argwhere(mask)
    return tuple(int(i) for i in idx[0]) if len(idx) else None


@dataclass
class HermitianMetricField:
    """Frame components ``(r, s, u)`` sampled on a grid.

    Set ``validate=False`` to hold a degenerate or indefinite (1,1)-form; the
    ``is_metric`` flag records whether positivity holds.
    """

    r: np.ndarray
    s: np.ndarray
    u: np.ndarray
    grid: object = field(repr=False)
    validate: bool = True
    is_metric: bool = field(init=False)

    def __post_init__(self):
        shape = self.grid.shape
        try:
            self.r = np.broadcast_to(np.asarray(self.r, dtype=float), shape)
            self.s = np.broadcast_to(np.asarray(self.s, dtype=float), shape)
            self.u = np.broadcast_to(np.asarray(self.u, dtype=complex), shape)
        except ValueError as exc:
            raise ShapeMismatch(str(exc)) from exc
        det = self.r * self.s - np.abs(self.u) ** 2
        bad = (self.r <= POS_TOL) | (self.s <= POS_TOL) | (det <= POS_TOL)
        self.is_metric = not bool(bad.any())
        if self.validate and not self.is_metric:
            loc = _first_bad(bad)
            raise NotPositive(f"frame metric not positive at node {loc}", location=loc)

    def frame_matrix(self):
        h = np.empty(self.r.shape + (2, 2), dtype=complex)
        h[..., 0, 0] = self.r
        h[..., 1, 1] = self.s
        h[..., 0, 1] = -1j * self.u
        h[..., 1, 0] = 1j * np.conj(self.u)
        return h

    def scaled(self, c):
        return HermitianMetricField(c * self.r, c * self.s, c * self.u, self.grid, self.validate)


@dataclass
class CoordinateMetricField:
    """Coordinate components ``g_zz`` (real), ``g_zw`` (complex), ``g_ww`` (real)."""

    gzz: np.ndarray
    gzw: np.ndarray
    gww: np.ndarray
    grid: object = field(repr=False)
    validate: bool = True
    is_metric: bool = field(init=False)

    def __post_init__(self):
        shape = self.grid.shape
        try:
            self.gzz = np.broadcast_to(np.asarray(self.gzz, dtype=float), shape)
            self.gzw = np.broadcast_to(np.asarray(self.gzw, dtype=complex), shape)
            self.gww = np.broadcast_to(np.asarray(self.gww, dtype=float), shape)
        except ValueError as exc:
            raise ShapeMismatch(str(exc)) from exc
        det = self.gzz * self.gww - np.abs(self.gzw) ** 2
        bad = (self.gzz <= POS_TOL) | (det <= POS_TOL)
        self.is_metric = not bool(bad.any())
        if self.validate and not self.is_metric:
            loc = _first_bad(bad)
            raise NotPositive(f"coordinate metric not positive at node {loc}", location=loc)

    def matrix(self):
        g = np.empty(self.gzz.shape + (2, 2), dtype=complex)
        g[..., 0, 0] = self.gzz
        g[..., 1, 1] = self.gww
        g[..., 0, 1] = self.gzw
        g[..., 1, 0] = np.conj(self.gzw)
        return g

    def log_det(self):
        return np.log(self.gzz * self.gww - np.abs(self.gzw) ** 2)


def frame_coordinate_convert(surface, fld, direction=None, E=None):
    """Change between the reference coframe and the coordinate coframe.

    Parameters
    ----------
    surface : SurfaceSM or SurfaceSPlus
    fld : HermitianMetricField or CoordinateMetricField
    direction : {"to_coordinate", "to_frame"}, optional
        Inferred from the type of ``fld`` when omitted.
    E : ndarray, optional
        Precomputed coframe matrices.

    Returns
    -------
    CoordinateMetricField or HermitianMetricField
        Positivity is recorded in ``is_metric`` but not enforced, so degenerate
        forms such as alpha can be converted.
    """
    grid = fld.grid
    if direction is None:
        direction = "to_coordinate" if isinstance(fld, HermitianMetricField) else "to_frame"
    if E is None:
        E = coframe_matrices(surface, grid)
    if E.shape[:-2] != grid.shape:
        E = np.broadcast_to(E, grid.shape + (2, 2))
    if direction == "to_coordinate":
        if not isinstance(fld, HermitianMetricField):
            raise ShapeMismatch("expected frame components")
        h = fld.frame_matrix()
        g = np.einsum("...ia,...ij,...jb->...ab", E, h, E.conj())
        return CoordinateMetricField(g[..., 0, 0].real, g[..., 0, 1], g[..., 1, 1].real, grid,
                                     validate=False)
    if direction == "to_frame":
        if not isinstance(fld, CoordinateMetricField):
            raise ShapeMismatch("expected coordinate components")
        Ei = np.linalg.inv(E)
        g = fld.matrix()
        h = np.einsum("...ai,...ab,...bj->...ij", Ei, g, Ei.conj())
        return HermitianMetricField(h[..., 0, 0].real, h[..., 1, 1].real, 1j * h[..., 1, 0].conj(),
                                    grid, validate=False)
    raise ValueError(f"unknown direction {direction!r}")


def tv_metric(grid):
    """The reference metric, ``(r, s, u) = (1, 1, 0)``."""
    return HermitianMetricField(1.0, 1.0, 0.0, grid)


def ddbar_components(surface, grid, f, ghosted=None):
    """Coordinate components ``(f_zzb, f_zwb, f_wwb)`` of ``i ddbar f`` on S_M.

    Fiber derivatives are spectral in lattice coordinates; ``y2`` derivatives
    are centered differences in ``log y2`` with ghost slices from the gluing map.
    Pass ``ghosted`` (``f`` padded with one slice per side) for functions that
    do not glue as scalars, such as ``log det g``.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ShapeMismatch(f"field shape {f.shape} does not match grid {grid.shape}")
    sp = fiber_spectral(surface, grid.n_torus)
    if ghosted is None:
        fy, fyy = y2_derivatives(surface, f, grid)
    else:
        fs, fss = s_derivatives(ghosted, grid.h)
        fy, fyy = fs / grid.y2, (fss - fs) / grid.y2**2
    fh = sp.fft(f)
    fyh = sp.fft(fy)
    kA, kB, kC = sp.kA, sp.kB, sp.kC
    f_zz = 0.25 * sp.apply(f, -(kA**2 + kB**2), False, fh)
    f_ww = 0.25 * (sp.apply(f, -kC**2, False, fh) + fyy)
    f_x1x2 = sp.apply(f, -kA * kC, False, fh)
    f_y1x2 = sp.apply(f, -kB * kC, False, fh)
    f_x1y2 = sp.apply(fy, 1j * kA, True, fyh)
    f_y1y2 = sp.apply(fy, 1j * kB, True, fyh)
    f_zw = 0.25 * ((f_x1x2 + f_y1y2) + 1j * (f_x1y2 - f_y1x2))
    return f_zz, f_zw, f_ww


def add_ddbar(surface, omega, f, validate=True):
    """Frame components of ``omega + i ddbar f`` on S_M."""
    grid = omega.grid
    E = coframe_matrices(surface, grid)
    g = frame_coordinate_convert(surface, omega, "to_coordinate", E)
    f_zz, f_zw, f_ww = ddbar_components(surface, grid, f)
    g2 = CoordinateMetricField(g.gzz + f_zz, g.gzw + f_zw, g.gww + f_ww, grid, validate=False)
    h = frame_coordinate_convert(surface, g2, "to_frame", E)
    return HermitianMetricField(h.r, h.s, h.u, grid, validate=validate)


def metric_from_potential(surface, grid, psi):
    """Frame components of ``omega_TV + i ddbar psi`` on S_M.

    Parameters
    ----------
    surface : SurfaceSM
    grid : DomainGrid
    psi : ndarray, shape ``grid.shape``
        Real potential, periodic on every fiber and compatible with the gluing
        map (its last slice is the glued image of the first one).

    Raises
    ------
    NotPositive
        If the resulting form is not positive at some node.
    """
    if surface.family != "SM":
        raise NotImplementedError("potentials are supported on S_M grids only")
    return add_ddbar(surface, tv_metric(grid), psi, validate=True)


# ----------------------------------------------------------------------------
# integrals


def fiber_volume(surface):
    """Volume of one fiber in the flat measure used for all integrals."""
    if surface.family == "SM":
        return abs(surface.eps)
    return abs(surface.lattice_det * surface.c3)


def fiber_mean(f):
    """Mean of a field over each fiber (axes 0-2)."""
    return np.asarray(f).mean(axis=(0, 1, 2))


def integrate(surface, grid, f):
    """``int_S f omega_TV^2`` in the measure ``fiber_volume * dt ds``."""
    fm = fiber_mean(np.broadcast_to(f, grid.shape))
    return float(fiber_volume(surface) * np.sum(grid.trapezoid_weights() * fm))


def total_volume(surface, grid):
    return fiber_volume(surface) * grid.L


def volume_mean(surface, grid, f):
    return integrate(surface, grid, f) / total_volume(surface, grid)


def g_of_omega(surface, omega):
    """``G(omega) = -r/8 + mean(r)/8`` with the reference-volume mean over the grid.

    Examples
    --------
    For ``r = 1 + 0.5 cos(2 pi t1)`` the mean is one and
    ``G = -cos(2 pi t1) / 16``.
    """
    grid = omega.grid
    r = np.asarray(omega.r)
    return -r / 8.0 + volume_mean(surface, grid, r) / 8.0


@dataclass
class ObstructionReport:
    """Fiber integrals of ``r`` and of ``G`` per slice, with a constancy verdict."""

    y2: np.ndarray
    R_values: np.ndarray
    G_fiber_integral: np.ndarray
    R_spread: float
    tolerance: float
    pairings: dict = field(default_factory=dict)

    @property
    def verdict(self):
        return "pass" if self.R_spread <= self.tolerance else "fail"

    def to_csv(self):
        rows = ["y2,R,G_fiber_integral"]
        for y, R, Gi in zip(self.y2, self.R_values, self.G_fiber_integral):
            rows.append(f"{y:.17g},{R:.17g},{Gi:.17g}")
        return "\n".join(rows) + "\n"

    def to_text(self):
        lines = [
            f"R_spread = {self.R_spread:.6e}",
            f"tolerance = {self.tolerance:.1e}",
            f"verdict = {self.verdict}",
            f"R_min = {self.R_values.min():.17g}",
            f"R_max = {self.R_values.max():.17g}",
        ]
        for name, val in self.pairings.items():
            lines.append(f"pairing[{name}] = {val:.6e}")
        return "\n".join(lines) + "\n"


def gauduchon_defect(surface, omega, tolerance=1e-6, test_functions=None):
    """Constancy test of ``R(y2) = int_fiber r`` (necessary for Gauduchon metrics).

    Parameters
    ----------
    surface : SurfaceSM or SurfaceSPlus
    omega : HermitianMetricField
    tolerance : float
        Relative spread accepted as constant.
    test_functions : dict of str -> ndarray, optional
        Kernel test functions of ``y2`` to pair against ``G(omega)``.

    Returns
    -------
    ObstructionReport
    """
    grid = omega.grid
    vol = fiber_volume(surface)
    R = vol * fiber_mean(omega.r)
    G = g_of_omega(surface, omega)
    Gint = vol * fiber_mean(G)
    spread = float((R.max() - R.min()) / abs(R.mean()))
    pairings = {}
    if test_functions:
        for name, psi in test_functions.items():
            pairings[name] = obstruction_pairing(surface, omega, psi, G=G)
    return ObstructionReport(grid.y2.copy(), R, Gint, spread, tolerance, pairings)


def obstruction_pairing(surface, omega, psi, G=None):
    """``int_S psi G(omega) omega_TV^2`` for a function ``psi`` of ``y2`` alone.

    Parameters
    ----------
    psi : ndarray, shape (n_y2,) or broadcastable to the grid
        Values per slice; must agree on the first and last slice.
    """
    grid = omega.grid
    if G is None:
        G = g_of_omega(surface, omega)
    psi = np.asarray(psi, dtype=float)
    if psi.ndim == 1:
        psi = psi.reshape(1, 1, 1, -1)
    return integrate(surface, grid, psi * G)


def kernel_test_functions(grid, n=8):
    """The first ``n`` Fourier modes in ``log y2`` (constant, cos 1, sin 1, ...)."""
    s = grid.s
    out = {"const": np.ones_like(s)}
    j = 1
    while len(out) < n:
        out[f"cos{j}"] = np.cos(2 * np.pi * j * s / grid.L)
        if len(out) < n:
            out[f"sin{j}"] = np.sin(2 * np.pi * j * s / grid.L)
        j += 1
    return out


def random_kernel_functions(grid, count, rng, n_modes=4):
    """Random trigonometric polynomials in ``log y2`` (periodic over the seam)."""
    s = grid.s
    funcs = []
    for _ in range(count):
        c = rng.normal(size=(2, n_modes))
        f = np.full_like(s, rng.normal())
        for j in range(n_modes):
            f += c[0, j] * np.cos(2 * np.pi * (j + 1) * s / grid.L)
            f += c[1, j] * np.sin(2 * np.pi * (j + 1) * s / grid.L)
        funcs.append(f)
    return funcs


def nonconstant_r_metric(grid):
    """Counterexample metric with ``r = 2 + cos(2 pi log y2 / log Lambda)``, ``s = 1``."""
    r = 2.0 + np.cos(2 * np.pi * grid.s / grid.L)
    return HermitianMetricField(r.reshape(1, 1, 1, -1), 1.0, 0.0, grid)


def pairing_closed_form(surface, grid, r):
    """``-(1/8) int r^2 + (1/8) (int r)^2 / vol`` in the same measure."""
    vol = total_volume(surface, grid)
    return -integrate(surface, grid, r**2) / 8.0 + integrate(surface, grid, r) ** 2 / (8.0 * vol)


def alpha_frame(grid):
    """alpha in frame components: ``(r, s, u) = (0, 1/4, 0)``; not a metric."""
    return HermitianMetricField(0.0, 0.25, 0.0, grid, validate=False)


def reference_coordinate_metric(surface, grid):
    """Coordinate components of the reference metric on the grid."""
    rf = reference_forms(surface, grid)
    return CoordinateMetricField(rf.tv_zz, rf.tv_zw, rf.tv_ww, grid)


def seam_window(s, L, power=4):
    """``sin(pi s / L) ** power``: vanishes to order ``power`` at both seam slices."""
    return np.sin(np.pi * np.asarray(s) / L) ** power


def random_potential(surface, grid, rng, kmax=2, n_modes=6, amplitude=0.2, power=4,
                     background=True):
    """Smooth seam-compatible band-limited potential on an S_M grid.

    The potential is ``chi(s) sum_k c_k cos(2 pi <k, t> + phase_k) + psi0(s)``
    with ``chi`` vanishing to high order at ``s = 0`` and ``s = log Lambda`` and
    ``psi0`` a trigonometric polynomial in ``s``, so it descends to the surface.

    Parameters
    ----------
    rng : numpy.random.Generator
    kmax : int
        Largest absolute entry of the wave vectors.
    n_modes : int
        Number of random wave vectors.
    amplitude : float
        Target size of ``i ddbar psi`` relative to the reference metric: the
        potential is rescaled so that the largest deviation of the frame
        components of ``omega_TV + i ddbar psi`` from ``(1, 1, 0)`` equals it.
    """
    t = grid.t
    field = np.zeros(grid.n_torus)
    for _ in range(n_modes):
        k = rng.integers(-kmax, kmax + 1, size=3)
        if not k.any():
            k[0] = 1
        phase = rng.uniform(0, 2 * np.pi)
        field += rng.normal() * np.cos(2 * np.pi * np.einsum("i,i...->...", k, t) + phase)
    psi = field[..., None] * seam_window(grid.s, grid.L, power)
    if background:
        c = rng.normal(size=2)
        psi = psi + (c[0] * np.cos(2 * np.pi * grid.s / grid.L)
                     + c[1] * np.sin(2 * np.pi * grid.s / grid.L))
    h = add_ddbar(surface, tv_metric(grid), psi, validate=False)
    size = max(np.abs(h.r - 1).max(), np.abs(h.s - 1).max(), np.abs(h.u).max())
    return psi * (amplitude / size)
