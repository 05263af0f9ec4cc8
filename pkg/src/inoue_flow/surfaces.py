"""Geometric data of the surfaces S_M and S+ and their discretisation.

Fields on S_M live on a grid ``(n1, n2, n3, n_y2)``: the first three axes are
lattice coordinates ``t`` of the fiber torus (so ``(x1, y1, x2) = P t``), the
last axis runs over log-uniform slices ``y2 = exp(s)`` with ``s`` in
``[0, log Lambda]``.  The last slice is the same fiber as the first one,
identified through the gluing map.  A grid with ``n_torus = (1, 1, 1)`` stores
fields that are constant on every fiber; all operators accept it and it is an
invariant subspace of every computation in this package.

Fields on S+ use cell coordinates ``(sigma1, sigma2, x1)`` of the nilmanifold
fiber, see :mod:`inoue_flow.slf`.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .algebraic import liouville_margin, spectral_sm, spectral_splus
from .errors import DegenerateLattice, InvalidR, KernelMismatch, ShapeMismatch

KERNEL_TOL = 1e-8


# ----------------------------------------------------------------------------
# surfaces


@dataclass(frozen=True)
class SurfaceSM:
    """Geometric package of an Inoue surface S_M.

    Attributes
    ----------
    spec : SpectralDataSM
    P : ndarray, shape (3, 3)
        Columns are the lattice vectors ``(Re m_j, Im m_j, ell_j)``.
    eps : float
        ``det(P)``.
    A, B, C : ndarray, shape (3,)
        Lattice coordinates of ``d/dx1``, ``d/dy1`` and ``d/dx2``.
    Z : ndarray, shape (3, 3)
        ``A A^T + B B^T``; positive semidefinite of rank two.
    glue_matrix : ndarray of int, shape (3, 3)
        ``M^T``, the action of the gluing map on lattice coordinates.
    kernel_residual : float
        ``|Z ell| / |ell|``.
    """

    spec: object
    P: np.ndarray
    eps: float
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Z: np.ndarray
    glue_matrix: np.ndarray
    kernel_residual: float
    z_eigenvalues: np.ndarray

    family = "SM"

    @property
    def Lambda(self):
        return self.spec.lam

    @property
    def lam(self):
        return self.spec.lam

    @property
    def mu(self):
        return self.spec.mu

    def z_form(self, k):
        """Small divisor ``z_k = k^T Z k`` for integer vectors ``k`` (last axis)."""
        k = np.asarray(k, dtype=float)
        return np.einsum("...i,ij,...j->...", k, self.Z, k)


def build_sm(M):
    """Assemble the geometric package of S_M from an integer matrix.

    Parameters
    ----------
    M : array_like, shape (3, 3)

    Returns
    -------
    SurfaceSM

    Raises
    ------
    KernelMismatch
        If ``|Z ell| / |ell| > 1e-8``.
    """
    spec = spectral_sm(M)
    m = spec.m_vec
    P = np.vstack([m.real, m.imag, spec.ell])
    eps = float(np.linalg.det(P))
    if abs(eps) < 1e-12:
        raise KernelMismatch("lattice vectors are linearly dependent")
    Pinv = np.linalg.inv(P)
    A, B, C = Pinv[:, 0].copy(), Pinv[:, 1].copy(), Pinv[:, 2].copy()
    Z = np.outer(A, A) + np.outer(B, B)
    kernel_residual = float(np.linalg.norm(Z @ spec.ell) / np.linalg.norm(spec.ell))
    if kernel_residual > KERNEL_TOL:
        raise KernelMismatch(f"|Z ell|/|ell| = {kernel_residual:.3e}")
    return SurfaceSM(
        spec=spec,
        P=P,
        eps=eps,
        A=A,
        B=B,
        C=C,
        Z=Z,
        glue_matrix=spec.M.T.copy(),
        kernel_residual=kernel_residual,
        z_eigenvalues=np.linalg.eigvalsh(Z),
    )


@dataclass(frozen=True)
class SurfaceSPlus:
    """Geometric package of an Inoue surface S+.

    Attributes
    ----------
    spec : SpectralDataSPlus
    p, q, r : int
    t_param : complex
    c1, c2, c3 : float
        Translation parts of the generators; ``c3 = (b1 a2 - b2 a1) / r``.
    e1, e2 : float
    m_twist : float
        ``Im(t) / log(gamma)``.
    c_residual : float
        Residual of the linear equation defining ``(c1, c2)``.
    """

    spec: object
    p: int
    q: int
    r: int
    t_param: complex
    c1: float
    c2: float
    c3: float
    e1: float
    e2: float
    m_twist: float
    c_residual: float

    family = "SPlus"

    @property
    def Lambda(self):
        return self.spec.gamma

    @property
    def gamma(self):
        return self.spec.gamma

    @property
    def a(self):
        return self.spec.a_vec

    @property
    def b(self):
        return self.spec.b_vec

    @property
    def c(self):
        return np.array([self.c1, self.c2])

    @property
    def lattice_det(self):
        """``a1 b2 - a2 b1``; the covolume of the fiber lattice is ``y2`` times this."""
        a, b = self.a, self.b
        return float(a[0] * b[1] - a[1] * b[0])


def e_terms(N, a, b):
    """The constants ``e_j`` entering the equation for ``(c1, c2)``."""
    e = np.empty(2)
    for j in range(2):
        n1, n2 = float(N[j, 0]), float(N[j, 1])
        e[j] = (0.5 * n1 * (n1 - 1) * a[0] * b[0]
                + 0.5 * n2 * (n2 - 1) * a[1] * b[1]
                + n1 * n2 * b[0] * a[1])
    return e


def build_splus(N, p, q, r, t_param):
    """Assemble the geometric package of S+.

    Parameters
    ----------
    N : array_like, shape (2, 2)
    p, q, r : int
        ``r`` must be non-zero.
    t_param : complex

    Returns
    -------
    SurfaceSPlus

    Raises
    ------
    InvalidR
        If ``r == 0``.
    """
    if int(r) == 0:
        raise InvalidR("r must be non-zero")
    spec = spectral_splus(N)
    a, b = spec.a_vec, spec.b_vec
    Nf = spec.N.astype(float)
    c3 = float((b[0] * a[1] - b[1] * a[0]) / r)
    e = e_terms(spec.N, a, b)
    rhs = e + c3 * np.array([p, q], dtype=float)
    # (c1, c2) (I - N^T) = rhs  <=>  (I - N) c = rhs
    cvec = np.linalg.solve(np.eye(2) - Nf, rhs)
    resid = float(np.max(np.abs(cvec - (cvec @ Nf.T + rhs))))
    t_param = complex(t_param)
    return SurfaceSPlus(
        spec=spec,
        p=int(p),
        q=int(q),
        r=int(r),
        t_param=t_param,
        c1=float(cvec[0]),
        c2=float(cvec[1]),
        c3=c3,
        e1=float(e[0]),
        e2=float(e[1]),
        m_twist=float(t_param.imag / np.log(spec.gamma)),
        c_residual=resid,
    )


# ----------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class DomainGrid:
    """Discretisation of a fundamental domain ``fiber x [1, Lambda]``.

    Attributes
    ----------
    family : {"SM", "SPlus"}
    n_torus : tuple of int
        Fiber resolution.  For S_M the lattice-coordinate torus, for S+ the
        cell grid ``(n_sigma1, n_sigma2, n_x1)``.
    n_y2 : int
        Number of slices, both endpoints included.
    Lambda : float
    """

    family: str
    n_torus: tuple
    n_y2: int
    Lambda: float
    surface: object = field(repr=False, compare=False, default=None)

    @property
    def shape(self):
        return tuple(self.n_torus) + (self.n_y2,)

    @property
    def L(self):
        return float(np.log(self.Lambda))

    @property
    def h(self):
        """Spacing in ``s = log y2``."""
        return self.L / (self.n_y2 - 1)

    @cached_property
    def s(self):
        return np.linspace(0.0, self.L, self.n_y2)

    @cached_property
    def y2(self):
        y = np.exp(self.s)
        y[0], y[-1] = 1.0, self.Lambda
        return y

    @property
    def y2b(self):
        """``y2`` shaped to broadcast against fields."""
        return self.y2.reshape((1, 1, 1, -1))

    @property
    def homogeneous(self):
        return tuple(self.n_torus) == (1, 1, 1)

    @cached_property
    def t(self):
        """Lattice (S_M) or cell (S+) coordinates of the fiber nodes, shape (3, n1, n2, n3)."""
        axes = [np.arange(n) / n for n in self.n_torus]
        return np.array(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def points(self):
        """Coordinates ``(x1, y1, x2, y2)`` of every node, each of shape ``self.shape``."""
        if self.family == "SM":
            X = np.einsum("ij,j...->i...", self.surface.P, self.t)
            x1, y1, x2 = (np.broadcast_to(X[i][..., None], self.shape) for i in range(3))
            y2 = np.broadcast_to(self.y2b, self.shape)
            return x1, y1, x2, y2
        return splus_cell_points(self.surface, self)

    def trapezoid_weights(self):
        """Quadrature weights in ``s`` (trapezoid on the closed interval)."""
        w = np.full(self.n_y2, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w


def domain_grid(surface, n_torus=32, n_y2=33):
    """Build the default grid of a surface.

    Parameters
    ----------
    surface : SurfaceSM or SurfaceSPlus
    n_torus : int or tuple of int
        Per-axis fiber resolution.
    n_y2 : int
        Number of slices including both endpoints, at least 3.
    """
    if np.isscalar(n_torus):
        n_torus = (int(n_torus),) * 3
    n_torus = tuple(int(n) for n in n_torus)
    if n_y2 < 3:
        raise ValueError("need at least three slices")
    return DomainGrid(surface.family, n_torus, int(n_y2), float(surface.Lambda), surface)


def homogeneous_grid(grid):
    """The fiber-constant companion of ``grid`` (one node per fiber)."""
    return DomainGrid(grid.family, (1, 1, 1), grid.n_y2, grid.Lambda, grid.surface)


def splus_cell_points(surface, grid):
    """Cover coordinates of S+ cell-grid nodes.

    The cell at height ``y2`` is spanned by ``(a_j, y2 b_j)`` in the
    ``(x2, y1)`` plane; ``x1`` runs over ``[0, c3)``.
    """
    s1, s2, s3 = grid.t
    a, b = surface.a, surface.b
    y2 = grid.y2b
    x2 = (s1 * a[0] + s2 * a[1])[..., None] * np.ones_like(y2)
    y1 = (s1 * b[0] + s2 * b[1])[..., None] * y2
    x1 = (s3 * surface.c3)[..., None] * np.ones_like(y2)
    y2f = np.broadcast_to(y2, x1.shape)
    return x1, y1, x2, y2f


# ----------------------------------------------------------------------------
# spectral machinery on the S_M fiber torus


class FiberSpectral:
    """Fourier symbols of coordinate derivatives on an S_M fiber grid."""

    def __init__(self, surface, n_torus):
        self.surface = surface
        self.n_torus = tuple(n_torus)
        ks = [np.fft.fftfreq(n, 1.0 / n) for n in self.n_torus]
        K = np.array(np.meshgrid(*ks, indexing="ij"))
        self.k = K
        nyq = np.zeros(self.n_torus, dtype=bool)
        for ax, n in enumerate(self.n_torus):
            if n % 2 == 0 and n > 1:
                nyq |= K[ax] == -n // 2
        self.nyquist = nyq
        two_pi = 2.0 * np.pi
        self.kA = two_pi * np.einsum("i,i...->...", surface.A, K)
        self.kB = two_pi * np.einsum("i,i...->...", surface.B, K)
        self.kC = two_pi * np.einsum("i,i...->...", surface.C, K)
        self.z = np.einsum("i...,ij,j...->...", K, surface.Z, K)

    def fft(self, f):
        return np.fft.fftn(f, axes=(0, 1, 2))

    def ifft(self, fh):
        return np.fft.ifftn(fh, axes=(0, 1, 2))

    def apply(self, f, symbol, odd, fh=None):
        """Apply a Fourier multiplier along the fiber axes of a field."""
        if fh is None:
            fh = self.fft(f)
        sym = np.where(self.nyquist, 0.0, symbol) if odd else symbol
        out = self.ifft(fh * sym[..., None])
        return out.real if np.isrealobj(f) else out

    def grad(self, f, fh=None):
        """``(d/dx1, d/dy1, d/dx2)`` of a fiber field."""
        if fh is None:
            fh = self.fft(f)
        return tuple(self.apply(f, 1j * kv, True, fh) for kv in (self.kA, self.kB, self.kC))


_SPECTRAL_CACHE = {}


def fiber_spectral(surface, n_torus):
    key = (id(surface), tuple(n_torus))
    if key not in _SPECTRAL_CACHE:
        _SPECTRAL_CACHE[key] = FiberSpectral(surface, n_torus)
    return _SPECTRAL_CACHE[key]


def leafwise_laplacian_apply(surface, u, grid=None):
    """Leafwise Laplacian of a field.

    On S_M this is ``(d^2/dx1^2 + d^2/dy1^2) / (32 y2)``, evaluated spectrally:
    the Fourier mode ``k`` on slice ``y2`` is multiplied by
    ``-4 pi^2 z_k / (32 y2)``.  On S+ the operator is
    ``(d^2/dx1^2 + d^2/dy1^2) / 32`` and ``u`` must be a callable
    ``u(x2, y1, x1, y2)`` on the universal cover; it is evaluated at the nodes
    of ``grid`` (see :func:`inoue_flow.slf.splus_leafwise_laplacian`).

    Parameters
    ----------
    surface : SurfaceSM or SurfaceSPlus
    u : ndarray or callable
    grid : DomainGrid, optional
        Required for S+ and for S_M fields that do not use the full slice set.
    """
    if surface.family == "SPlus":
        from .slf import splus_leafwise_laplacian

        return splus_leafwise_laplacian(surface, u, grid)
    u = np.asarray(u)
    if u.ndim != 4:
        raise ShapeMismatch("expected a field of shape (n1, n2, n3, n_y2)")
    if grid is None:
        y2 = np.exp(np.linspace(0.0, np.log(surface.Lambda), u.shape[3]))
    else:
        y2 = grid.y2
    spec = fiber_spectral(surface, u.shape[:3])
    out = spec.apply(u, -4.0 * np.pi**2 * spec.z, False)
    return out / (32.0 * y2)


# ----------------------------------------------------------------------------
# gluing across the seam y2 = Lambda ~ y2 = 1

# pull-back factors of the gluing map on coordinate metric components
def glue_factors(surface):
    """Factors ``c`` with ``g(p) = c * g(f0(p))`` for each component kind."""
    lam, mu = surface.lam, surface.mu
    return {
        "scalar": 1.0,
        "zz": abs(mu) ** 2,
        "zw": mu * lam,
        "wz": np.conj(mu) * lam,
        "ww": lam**2,
    }


_PERM_CACHE = {}


def glue_permutation(surface, n_torus, inverse=False):
    """Flat index map ``i -> M^T i mod n`` (or its inverse) on the fiber grid."""
    key = (id(surface), tuple(n_torus), inverse)
    if key in _PERM_CACHE:
        return _PERM_CACHE[key]
    n = tuple(n_torus)
    G = surface.glue_matrix
    if inverse:
        G = np.rint(np.linalg.inv(G)).astype(np.int64)
    if len(set(n)) != 1 and tuple(n) != (1, 1, 1):
        raise ShapeMismatch("gluing requires the same resolution on every torus axis")
    idx = np.array(np.meshgrid(*[np.arange(m) for m in n], indexing="ij")).reshape(3, -1)
    img = (G @ idx) % np.array(n)[:, None]
    flat = np.ravel_multi_index(tuple(img), n)
    _PERM_CACHE[key] = flat
    return flat


def glue_transform_sm(surface, field, direction="to_bottom", kind="scalar"):
    """Transport a fiber field across the seam of S_M.

    The gluing map sends ``(t, y2)`` to ``(M^T t, Lambda y2)``.  A tensor
    component ``g`` of kind ``kind`` satisfies ``g(p) = c g(f0 p)`` with
    ``c = |mu|^2`` (zz), ``mu lambda`` (zw), ``lambda^2`` (ww) or 1 (scalar).

    Parameters
    ----------
    surface : SurfaceSM
    field : ndarray, shape (n1, n2, n3) or (n1, n2, n3, m)
        Values on one or more slices.
    direction : {"to_bottom", "to_top"}
        ``"to_bottom"`` turns values at heights ``Lambda y2`` into the equivalent
        values at ``y2``: ``out(t) = c field(M^T t)``.  A Fourier mode ``k``
        becomes the mode ``M k``.  ``"to_top"`` is the inverse.
    kind : {"scalar", "zz", "zw", "wz", "ww"}

    Returns
    -------
    ndarray
        Same shape as ``field``.
    """
    field = np.asarray(field)
    if field.ndim not in (3, 4) or field.shape[0] != field.shape[1] or field.shape[1] != field.shape[2]:
        raise ShapeMismatch(f"cannot glue a field of shape {field.shape}")
    n = field.shape[:3]
    c = glue_factors(surface)[kind]
    flat = field.reshape((-1,) + field.shape[3:])
    if direction == "to_bottom":
        perm = glue_permutation(surface, n)
        out = c * flat[perm]
    elif direction == "to_top":
        perm = glue_permutation(surface, n, inverse=True)
        out = flat[perm] / c
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return out.reshape(field.shape)


def extend_with_ghosts(surface, f, kind="scalar"):
    """Pad a full S_M field with one ghost slice on each side of the y2 axis.

    Slice ``-1`` sits at ``y2 = exp(-h)`` and is obtained from slice
    ``n_y2 - 2`` through the gluing map; slice ``n_y2`` sits at
    ``Lambda exp(h)`` and comes from slice 1.
    """
    below = glue_transform_sm(surface, f[..., -2], "to_bottom", kind)
    above = glue_transform_sm(surface, f[..., 1], "to_top", kind)
    return np.concatenate([below[..., None], f, above[..., None]], axis=-1)


def s_derivatives(fe, h):
    """Centered first and second differences along the last axis of a ghosted field."""
    fs = (fe[..., 2:] - fe[..., :-2]) / (2.0 * h)
    fss = (fe[..., 2:] - 2.0 * fe[..., 1:-1] + fe[..., :-2]) / (h * h)
    return fs, fss


def y2_derivatives(surface, f, grid, kind="scalar"):
    """``(d f / d y2, d^2 f / d y2^2)`` by centered differences in ``s = log y2``."""
    fe = extend_with_ghosts(surface, f, kind)
    fs, fss = s_derivatives(fe, grid.h)
    y2 = grid.y2
    return fs / y2, (fss - fs) / y2**2


def seam_residual_sm(surface, f, kind="scalar"):
    """Max mismatch between the last slice and the glued image of the first."""
    top = glue_transform_sm(surface, f[..., 0], "to_top", kind)
    return float(np.max(np.abs(f[..., -1] - top)))


def enforce_seam(surface, f, kind="scalar"):
    """Overwrite the last slice with the glued image of the first (in place)."""
    f[..., -1] = glue_transform_sm(surface, f[..., 0], "to_top", kind)
    return f


# ----------------------------------------------------------------------------
# reference forms


@dataclass(frozen=True)
class ReferenceForms:
    """Reference forms and coframe matrices on a grid.

    Coordinate components are stored as ``g_ab`` with ``omega = i g_ab dz^a ^ dz^b-bar``.
    Arrays broadcast against fields of ``grid.shape``.

    Attributes
    ----------
    E : ndarray, shape (..., 2, 2)
        Coframe matrix with ``(phi1, phi2) = E (dz, dw)``.
    alpha_ww, beta_zz, beta_zw, beta_ww, tv_zz, tv_zw, tv_ww : ndarray
    omega_inf_multiple : float
        ``omega_inf = omega_inf_multiple * alpha``.
    """

    E: np.ndarray
    alpha_ww: np.ndarray
    beta_zz: np.ndarray
    beta_zw: np.ndarray
    beta_ww: np.ndarray
    tv_zz: np.ndarray
    tv_zw: np.ndarray
    tv_ww: np.ndarray
    omega_inf_multiple: float

    @property
    def tv_frame(self):
        """``(r, s, u)`` of the reference metric in its own coframe."""
        return 1.0, 1.0, 0.0


def coframe_matrices(surface, grid):
    """Coframe matrices ``E`` (shape ``(..., 2, 2)``) on the grid nodes."""
    y2 = grid.y2b
    if surface.family == "SM":
        E = np.zeros(y2.shape + (2, 2), dtype=complex)
        E[..., 0, 0] = np.sqrt(y2)
        E[..., 1, 1] = 1.0 / y2
        return E
    x1, y1, x2, y2f = grid.points
    tau = (y1 - surface.m_twist * np.log(y2f)) / y2f
    E = np.zeros(tau.shape + (2, 2), dtype=complex)
    E[..., 0, 0] = 1.0
    E[..., 0, 1] = -tau
    E[..., 1, 1] = 1.0 / y2f
    return E


def reference_forms(surface, grid):
    """Reference forms alpha, beta and the homogeneous metric on a grid.

    ``alpha = i/(4 y2^2) dw ^ dw-bar``, ``beta = i phi1 ^ phi1-bar`` and the
    reference metric ``4 alpha + beta``.  ``omega_inf`` is ``alpha`` on S_M and
    ``2 alpha`` on S+ (see :func:`inoue_flow.flow.omega_inf_multiple_numeric`
    for the numerical confirmation).
    """
    E = coframe_matrices(surface, grid)
    y2 = grid.y2b if surface.family == "SM" else grid.points[3]
    alpha_ww = 1.0 / (4.0 * y2**2)
    e11, e12 = E[..., 0, 0], E[..., 0, 1]
    beta_zz = (e11 * e11.conj()).real
    beta_zw = e11 * e12.conj()
    beta_ww = (e12 * e12.conj()).real
    return ReferenceForms(
        E=E,
        alpha_ww=alpha_ww,
        beta_zz=beta_zz,
        beta_zw=beta_zw,
        beta_ww=beta_ww,
        tv_zz=beta_zz,
        tv_zw=beta_zw,
        tv_ww=beta_ww + 4.0 * alpha_ww,
        omega_inf_multiple=1.0 if surface.family == "SM" else 2.0,
    )


# ----------------------------------------------------------------------------
# report


def surface_report(surface, q_bound=1000):
    """Key-value summary of a surface and its invariant residuals."""
    lines = []
    if surface.family == "SM":
        sp = surface.spec
        lines += [
            ("family", "SM"),
            ("M", sp.M.tolist()),
            ("lambda", f"{sp.lam:.15g}"),
            ("mu", f"{sp.mu.real:.15g}{sp.mu.imag:+.15g}j"),
            ("lambda_abs_mu_sq_minus_1", f"{sp.residuals['lam_mu2']:.3e}"),
            ("ell", np.array2string(sp.ell, precision=15)),
            ("eig_residual_ell", f"{sp.residuals['ell']:.3e}"),
            ("eig_residual_m", f"{sp.residuals['m_vec']:.3e}"),
            ("degree_d", sp.degree_d),
            ("ratio_index", sp.ratio_index),
            ("ratio", f"{sp.ratio:.15g}"),
            ("liouville_margin", f"{liouville_margin(sp.ratio, sp.degree_d, q_bound).margin:.6g}"),
            ("eps", f"{surface.eps:.15g}"),
            ("Z", np.array2string(surface.Z, precision=12).replace("\n", "")),
            ("Z_eigenvalues", np.array2string(surface.z_eigenvalues, precision=6)),
            ("kernel_residual", f"{surface.kernel_residual:.3e}"),
            ("irrationality_test", "heuristic: no p/q with q <= 1e6 within 1e-15"),
        ]
    else:
        sp = surface.spec
        lines += [
            ("family", "SPlus"),
            ("N", sp.N.tolist()),
            ("p_q_r", (surface.p, surface.q, surface.r)),
            ("t_param", surface.t_param),
            ("gamma", f"{sp.gamma:.15g}"),
            ("a_vec", np.array2string(sp.a_vec, precision=15)),
            ("b_vec", np.array2string(sp.b_vec, precision=15)),
            ("degree_d", sp.degree_d),
            ("liouville_margin_a", f"{liouville_margin(sp.a_slope, sp.degree_d, q_bound).margin:.6g}"),
            ("liouville_margin_b", f"{liouville_margin(sp.b_slope, sp.degree_d, q_bound).margin:.6g}"),
            ("c1", f"{surface.c1:.15g}"),
            ("c2", f"{surface.c2:.15g}"),
            ("c3", f"{surface.c3:.15g}"),
            ("e1", f"{surface.e1:.15g}"),
            ("e2", f"{surface.e2:.15g}"),
            ("c_residual", f"{surface.c_residual:.3e}"),
            ("m_twist", f"{surface.m_twist:.15g}"),
            ("irrationality_test", "heuristic: no p/q with q <= 1e6 within 1e-15"),
        ]
    return "\n".join(f"{k} = {v}" for k, v in lines) + "\n"


def check_lattice(surface, y2):
    """Covolume of the S+ fiber lattice at height ``y2``."""
    det = y2 * surface.lattice_det
    if abs(det) < 1e-14:
        raise DegenerateLattice(f"lattice determinant {det:.3e} at y2 = {y2}")
    return det
