"""Normalized Chern-Ricci flow ``d omega / dt = -Ric(omega) - omega`` and its diagnostics.

The flow is evolved on coordinate components ``g_zzb`` (real), ``g_zwb``
(complex) and ``g_wwb`` (real).  With ``F = log det g`` the Chern-Ricci form is
``-i ddbar F``, so every component obeys ``dg_ab/dt = d_a d_b-bar F - g_ab``.
Time stepping is classical RK4; the macro step ``dt`` is split into as many
equal sub-steps as the stiffness of the discrete operator requires.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import FlowError, NotPositive, PositivityLost, StepTooLarge
from .metrics import (
    CoordinateMetricField,
    HermitianMetricField,
    _first_bad,
    ddbar_components,
    frame_coordinate_convert,
)
from .surfaces import (
    coframe_matrices,
    domain_grid,
    extend_with_ghosts,
    fiber_spectral,
    homogeneous_grid,
    s_derivatives,
    seam_residual_sm,
)

KINDS = ("zz", "zw", "ww")
RK4_RADIUS = 2.5  # safety margin inside the RK4 stability interval (about 2.78)


# ----------------------------------------------------------------------------
# reference family


def omega_inf_multiple(surface):
    """``omega_inf = m alpha``: ``m = 1`` on S_M, ``m = 2`` on S+."""
    return 1.0 if surface.family == "SM" else 2.0


def closed_form_family(surface, grid, t):
    """``(m + (4 - m) e^-t) alpha + e^-t beta`` in frame components.

    This is the flow of the reference metric ``4 alpha + beta``; ``m`` is the
    multiple of ``alpha`` in ``omega_inf``.
    """
    m = omega_inf_multiple(surface)
    a = m + (4.0 - m) * math.exp(-t)
    return HermitianMetricField(math.exp(-t), a / 4.0, 0.0, grid)


def omega_inf_frame(surface, grid):
    """``omega_inf`` in frame components (degenerate)."""
    return HermitianMetricField(0.0, omega_inf_multiple(surface) / 4.0, 0.0, grid, validate=False)


def frame_distance(h1, h2):
    """Sup over nodes of the operator norm of ``h1 - h2`` (frame components).

    The reference coframe is orthonormal for the reference metric, so this is
    the pointwise operator norm measured in that metric.
    """
    a = np.asarray(h1.r) - np.asarray(h2.r)
    d = np.asarray(h1.s) - np.asarray(h2.s)
    b = np.abs(np.asarray(h1.u) - np.asarray(h2.u))
    rad = np.sqrt(0.25 * (a - d) ** 2 + b**2)
    return float(np.max(np.abs(0.5 * (a + d)) + rad))


# ----------------------------------------------------------------------------
# derivative machinery on S_M


def _ghost(surface, f, kind):
    return extend_with_ghosts(surface, f, kind)


def real_derivatives(surface, grid, f, fe, second=True):
    """Real coordinate derivatives of a (possibly complex) field.

    Parameters
    ----------
    f : ndarray
        Field on ``grid``.
    fe : ndarray
        The same field with one ghost slice on each side.

    Returns
    -------
    dict
        Keys ``x1, y1, x2, y2`` and, with ``second=True``, the second
        derivatives ``x1x1, y1y1, x1y1, x2x2, y2y2, x1x2, y1x2, x1y2, y1y2,
        x2y2``.
    """
    sp = fiber_spectral(surface, grid.n_torus)
    y2 = grid.y2
    fs, fss = s_derivatives(fe, grid.h)
    fy = fs / y2
    out = {"y2": fy}
    fh = sp.fft(f)
    kA, kB, kC = sp.kA, sp.kB, sp.kC
    out["x1"] = sp.apply(f, 1j * kA, True, fh)
    out["y1"] = sp.apply(f, 1j * kB, True, fh)
    out["x2"] = sp.apply(f, 1j * kC, True, fh)
    if not second:
        return out
    fyh = sp.fft(fy)
    out["y2y2"] = (fss - fs) / y2**2
    out["x1x1"] = sp.apply(f, -kA * kA, False, fh)
    out["y1y1"] = sp.apply(f, -kB * kB, False, fh)
    out["x2x2"] = sp.apply(f, -kC * kC, False, fh)
    out["x1y1"] = sp.apply(f, -kA * kB, False, fh)
    out["x1x2"] = sp.apply(f, -kA * kC, False, fh)
    out["y1x2"] = sp.apply(f, -kB * kC, False, fh)
    out["x1y2"] = sp.apply(fy, 1j * kA, True, fyh)
    out["y1y2"] = sp.apply(fy, 1j * kB, True, fyh)
    out["x2y2"] = sp.apply(fy, 1j * kC, True, fyh)
    return out


def complex_derivatives(d):
    """``d_i f`` and ``d_i d_j-bar f`` for ``i, j`` in ``(z, w)`` from real derivatives."""
    dz = 0.5 * (d["x1"] - 1j * d["y1"])
    dw = 0.5 * (d["x2"] - 1j * d["y2"])
    dzb = 0.5 * (d["x1"] + 1j * d["y1"])
    dwb = 0.5 * (d["x2"] + 1j * d["y2"])
    zz = 0.25 * (d["x1x1"] + d["y1y1"])
    ww = 0.25 * (d["x2x2"] + d["y2y2"])
    re = d["x1x2"] + d["y1y2"]
    im = d["x1y2"] - d["y1x2"]
    zw = 0.25 * (re + 1j * im)
    wz = 0.25 * (re - 1j * im)
    return (dz, dw), (dzb, dwb), ((zz, zw), (wz, ww))


# ----------------------------------------------------------------------------
# Chern-Ricci form


def _as_coordinate(surface, metric):
    if isinstance(metric, HermitianMetricField):
        return frame_coordinate_convert(surface, metric, "to_coordinate")
    return metric


def _log_det_ghosted(surface, gzz, gzw, gww):
    """``log det g`` with ghosts, normalized by the determinant at the first node."""
    ze, we, ee = (_ghost(surface, c, k) for c, k in zip((gzz, gzw, gww), KINDS))
    det = ze.real * ee.real - np.abs(we) ** 2
    ref = det.flat[det.shape[-1] // 2]
    Fe = np.log(det / ref)
    return Fe[..., 1:-1], Fe


def chern_ricci_form(surface, metric):
    """Coordinate components of ``Ric(omega) = -i ddbar log det g``.

    The determinant is normalized by a node value before taking the logarithm,
    which makes the result exactly invariant under scaling by powers of two
    and invariant to rounding under other constant factors.

    Returns
    -------
    CoordinateMetricField
        Not validated (the Chern-Ricci form is indefinite in general).
    """
    g = _as_coordinate(surface, metric)
    if not g.is_metric:
        raise NotPositive("Chern-Ricci form requires a positive metric")
    F, Fe = _log_det_ghosted(surface, g.gzz, g.gzw, g.gww)
    fzz, fzw, fww = ddbar_components(surface, g.grid, F, ghosted=Fe)
    return CoordinateMetricField(-fzz, -fzw, -fww, g.grid, validate=False)


def ncrf_rhs(surface, grid, gzz, gzw, gww):
    """Right-hand side ``d d-bar F - g`` of the flow on coordinate components."""
    F, Fe = _log_det_ghosted(surface, gzz, gzw, gww)
    if grid.homogeneous:
        fs, fss = s_derivatives(Fe, grid.h)
        fww = 0.25 * (fss - fs) / grid.y2**2
        return -gzz, -gzw, fww - gww
    fzz, fzw, fww = ddbar_components(surface, grid, F, ghosted=Fe)
    return fzz - gzz, fzw - gzw, fww - gww


# ----------------------------------------------------------------------------
# curvature


def _component_stack(g):
    return ((g.gzz, g.gzw), (np.conj(g.gzw), g.gww)), (("zz", "zw"), ("wz", "ww"))


def chern_curvature(surface, metric):
    """Chern curvature ``R_{i jb k lb}`` and the metric matrix on every node.

    Returns
    -------
    R : ndarray, shape ``grid.shape + (2, 2, 2, 2)``
    G : ndarray, shape ``grid.shape + (2, 2)``
    """
    g = _as_coordinate(surface, metric)
    grid = g.grid
    comps, kinds = _component_stack(g)
    shape = grid.shape
    d1 = np.zeros(shape + (2, 2, 2), dtype=complex)   # [i, k, l] = d_i g_{k lb}
    d1b = np.zeros(shape + (2, 2, 2), dtype=complex)  # [j, k, l] = d_jb g_{k lb}
    d2 = np.zeros(shape + (2, 2, 2, 2), dtype=complex)  # [i, j, k, l]
    for k in range(2):
        for l in range(2):
            f = np.asarray(comps[k][l])
            fe = _ghost(surface, f, kinds[k][l])
            (dz, dw), (dzb, dwb), dd = complex_derivatives(real_derivatives(surface, grid, f, fe))
            d1[..., 0, k, l], d1[..., 1, k, l] = dz, dw
            d1b[..., 0, k, l], d1b[..., 1, k, l] = dzb, dwb
            for i in range(2):
                for j in range(2):
                    d2[..., i, j, k, l] = dd[i][j]
    G = g.matrix()
    Gi = np.linalg.inv(G)
    quad = np.einsum("...ikq,...qp,...jpl->...ijkl", d1, Gi, d1b)
    return -d2 + quad, G


def curvature_norm(surface, metric):
    """Pointwise norm ``|Rm|`` of the Chern curvature, measured in the metric itself."""
    R, G = chern_curvature(surface, metric)
    Lc = np.linalg.cholesky(G)
    W = np.linalg.inv(Lc)
    Wc = W.conj()
    Rt = np.einsum("...ai,...bj,...ck,...dl,...ijkl->...abcd", W, Wc, W, Wc, R)
    return np.sqrt(np.sum(np.abs(Rt) ** 2, axis=(-4, -3, -2, -1)))


def curvature_sup(surface, metric):
    """Grid maximum of ``|Rm(omega)|_omega``.

    Raises
    ------
    NotPositive
    """
    g = _as_coordinate(surface, metric)
    if not g.is_metric:
        loc = _first_bad(g.gzz * g.gww - np.abs(g.gzw) ** 2 <= 0)
        raise NotPositive("curvature requires a positive metric", location=loc)
    return float(np.max(curvature_norm(surface, g)))


# ----------------------------------------------------------------------------
# collapse diagnostics


@dataclass
class CollapseReport:
    """Fiber diameters (full metric and per direction) and the base circle length.

    Iterating yields ``(fiber_diam, base_length)``.
    """

    fiber_diam: float
    fiber_diam_z: float
    fiber_diam_x2: float
    base_length: float

    def __iter__(self):
        return iter((self.fiber_diam, self.base_length))


_STEPS = np.array([(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)
                   if (a, b, c) != (0, 0, 0)])


def _graph_edges(n):
    idx = np.arange(n**3).reshape(n, n, n)
    src, dst, steps = [], [], []
    for st in _STEPS:
        src.append(idx.ravel())
        dst.append(np.roll(idx, shift=tuple(-st), axis=(0, 1, 2)).ravel())
        steps.append(np.repeat(st[None, :], n**3, axis=0))
    return np.concatenate(src), np.concatenate(dst), np.concatenate(steps)


def _edge_lengths(surface, steps_t, gzz, gzw, gww, src, dst):
    dX = steps_t @ surface.P.T  # displacement in (x1, y1, x2)
    vz = dX[:, 0] + 1j * dX[:, 1]
    vw = dX[:, 2]
    zz = 0.5 * (gzz[src] + gzz[dst])
    zw = 0.5 * (gzw[src] + gzw[dst])
    ww = 0.5 * (gww[src] + gww[dst])
    len_z = np.sqrt(np.maximum(zz, 0.0)) * np.abs(vz)
    len_x2 = np.sqrt(np.maximum(ww, 0.0)) * np.abs(vw)
    full2 = zz * np.abs(vz) ** 2 + 2.0 * (zw * vz * vw).real + ww * vw**2
    return len_z, len_x2, np.sqrt(np.maximum(full2, 0.0))


def _graph_diameter(n, src, dst, w, homogeneous):
    # zero-length edges are dropped by csgraph; keep them with a tiny weight
    w = np.where(w > 0, w, 1e-300)
    A = coo_matrix((w, (src, dst)), shape=(n**3, n**3)).tocsr()
    if homogeneous:
        sources = [0]
    else:
        # eccentricities of a 2x2x2 sub-lattice of sources: a lower bound
        # on the diameter that is exact for translation-invariant metrics
        h = n // 2
        sources = [np.ravel_multi_index((a, b, c), (n, n, n))
                   for a in (0, h) for b in (0, h) for c in (0, h)]
    D = float(np.max(dijkstra(A, directed=False, indices=sources)))
    return D if D > 1e-200 else 0.0


def collapse_diagnostics(surface, metric, n_graph=8, slice_stride=None):
    """Fiber diameters and base length of a metric on S_M.

    The fiber diameter is the diameter of the graph on an ``n_graph^3``
    sub-lattice of the fiber grid with its 26 nearest neighbours, edges
    weighted by the metric length of the lattice step; ``fiber_diam_z`` and
    ``fiber_diam_x2`` weight edges by the ``z`` part and the ``x2`` part of the
    step alone.  The maximum is over slices.  The base length is
    ``int sqrt(g(d/dy2, d/dy2)) dy2`` from ``y2 = 1`` to ``Lambda`` at the first
    torus node.

    Parameters
    ----------
    metric : HermitianMetricField or CoordinateMetricField
        Degenerate forms are accepted.
    n_graph : int
        Graph resolution per torus axis.
    slice_stride : int, optional
        Use every ``slice_stride``-th slice (default: about nine slices).
    """
    g = _as_coordinate(surface, metric)
    grid = g.grid
    n = grid.n_torus[0]
    m = min(n_graph, n) if n > 1 else n_graph
    stride = max(1, n // m) if n > 1 else 1
    src, dst, steps = _graph_edges(m)
    steps_t = steps / m
    ny = grid.n_y2
    if slice_stride is None:
        slice_stride = max(1, (ny - 1) // 8)
    slices = list(range(0, ny, slice_stride))
    out = np.zeros((3,))
    for j in slices:
        comps = []
        for c in (g.gzz, g.gzw, g.gww):
            c = np.asarray(c)[..., j]
            c = c[::stride, ::stride, ::stride] if n > 1 else np.broadcast_to(c, (m, m, m))
            comps.append(c.ravel())
        homog = all(np.ptp(np.abs(c)) <= 1e-14 * max(1.0, np.abs(c).max()) for c in comps)
        lens = _edge_lengths(surface, steps_t, *comps, src, dst)
        for q in range(3):
            out[q] = max(out[q], _graph_diameter(m, src, dst, lens[q], homog))
    gww0 = np.asarray(g.gww)[0, 0, 0, :] if np.ndim(g.gww) == 4 else np.asarray(g.gww)
    integrand = np.sqrt(np.maximum(gww0, 0.0)) * grid.y2
    base = float(np.sum(grid.trapezoid_weights() * integrand))
    return CollapseReport(fiber_diam=out[2], fiber_diam_z=out[0], fiber_diam_x2=out[1],
                          base_length=base)


# ----------------------------------------------------------------------------
# stepping


@dataclass
class FlowTrace:
    """Diagnostics sampled along a flow run.

    ``rows`` holds one tuple per sample in the CSV column order.  Snapshots are
    coordinate metric fields on the compute grid (the fiber-homogeneous grid
    when the fast path was taken); ``full_snapshot`` broadcasts them back to the
    requested grid.
    """

    COLUMNS = ("t", "sup_dist_to_omega_inf", "ncrf_residual", "curvature_sup",
               "fiber_diam_z", "fiber_diam_x2", "base_length", "decay_rate_fit")

    rows: list = field(default_factory=list)
    snapshots: list = field(default_factory=list, repr=False)
    grid: object = field(default=None, repr=False)
    compute_grid: object = field(default=None, repr=False)
    substeps: int = 1
    seam_residual: float = 0.0
    max_residual: float = 0.0
    projected_at: float = None
    events: list = field(default_factory=list)

    def column(self, name):
        i = self.COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    @property
    def t(self):
        return self.column("t")

    @property
    def final_metric(self):
        return self.snapshots[-1][1] if self.snapshots else None

    def full_snapshot(self, i):
        t, g = self.snapshots[i]
        if g.grid.shape == self.grid.shape:
            return t, g
        return t, CoordinateMetricField(np.broadcast_to(g.gzz, self.grid.shape),
                                        np.broadcast_to(g.gzw, self.grid.shape),
                                        np.broadcast_to(g.gww, self.grid.shape),
                                        self.grid, validate=False)

    @property
    def decay_rate(self):
        return self.rows[-1][-1] if self.rows else float("nan")

    def to_csv(self):
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            lines.append(",".join(f"{v:.17g}" for v in r))
        return "\n".join(lines) + "\n"

    def summary(self):
        cs = self.column("curvature_sup")
        late = self.t >= 0.5
        ratio = float(cs[late].max() / cs[late].min()) if late.any() else float("nan")
        return {
            "samples": len(self.rows),
            "t_end": float(self.t[-1]) if self.rows else 0.0,
            "final_sup_dist": float(self.column("sup_dist_to_omega_inf")[-1]),
            "decay_rate_fit": float(self.decay_rate),
            "curvature_ratio_t_ge_0.5": ratio,
            "max_ncrf_residual": float(self.max_residual),
            "substeps": int(self.substeps),
            "seam_residual": float(self.seam_residual),
        }


def fit_decay_rate(t, d, t_min=1.0):
    """Least-squares slope of ``-log d`` against ``t`` over ``t >= t_min``."""
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    m = (t >= t_min) & (d > 0) & np.isfinite(d)
    if m.sum() < 3:
        return float("nan")
    slope = np.polyfit(t[m], np.log(d[m]), 1)[0]
    return float(-slope)


def spectral_radius_estimate(surface, grid, gzz, gzw, gww):
    """Upper estimate of the stiffness of the discrete flow operator."""
    det = gzz * gww - np.abs(gzw) ** 2
    inv_zz = gww / det
    inv_ww = gzz / det
    y2 = grid.y2
    s_part = 1.0 / (y2**2 * grid.h**2)
    if grid.homogeneous:
        return float(np.max(inv_ww * s_part)) + 1.0
    sp = fiber_spectral(surface, grid.n_torus)
    keep = ~sp.nyquist
    leaf = 0.25 * float(np.max((sp.kA**2 + sp.kB**2)[keep]))
    vert = 0.25 * float(np.max(sp.kC[keep] ** 2))
    return float(np.max(inv_zz * leaf + inv_ww * (vert + s_part))) + 1.0


def stability_bound(surface, grid, c=0.2):
    """``c h_min^2`` with ``h_min`` the finest grid spacing in reference-metric units."""
    h = grid.h  # |d/ds| = 1 for the reference metric
    if not grid.homogeneous:
        y2 = grid.y2
        cols = surface.P / np.array(grid.n_torus)[None, :]
        for ax in range(3):
            dx1, dy1, dx2 = cols[:, ax]
            lens = np.sqrt(y2 * (dx1**2 + dy1**2) + dx2**2 / y2**2)
            h = min(h, float(lens.min()))
    return c * h * h


def _rk4(surface, grid, state, dt, n_sub, k1=None):
    h = dt / n_sub
    y = state
    first = k1
    for _ in range(n_sub):
        k1 = first if first is not None else ncrf_rhs(surface, grid, *y)
        first = None
        y2_ = tuple(a + 0.5 * h * b for a, b in zip(y, k1))
        k2 = ncrf_rhs(surface, grid, *y2_)
        y3_ = tuple(a + 0.5 * h * b for a, b in zip(y, k2))
        k3 = ncrf_rhs(surface, grid, *y3_)
        y4_ = tuple(a + h * b for a, b in zip(y, k3))
        k4 = ncrf_rhs(surface, grid, *y4_)
        y = tuple(a + h / 6.0 * (p + 2 * q + 2 * r + s) for a, p, q, r, s in zip(y, k1, k2, k3, k4))
    return y


def _check_positive(grid, state, t):
    gzz, gzw, gww = state
    det = gzz * gww - np.abs(gzw) ** 2
    bad = (gzz <= 0) | (det <= 0) | ~np.isfinite(det)
    if bad.any():
        loc = _first_bad(bad)
        raise PositivityLost(f"metric lost positivity at t = {t:.6g}, node {loc}", time=t,
                             location=loc)


def _fiber_variation(state):
    return max(float(np.max(np.ptp(np.abs(c), axis=(0, 1, 2)))) for c in state)


def _project_to_slices(state):
    return tuple(np.mean(c, axis=(0, 1, 2), keepdims=True) for c in state)


def ncrf_run(surface, omega0, t_end, dt, sample_every=None, diagnostics=True,
             stability="adaptive", cfl=0.2, max_substeps=1000, fast_path=True,
             project_tol=1e-13, keep_snapshots=True, n_graph=8, growth_window=10,
             growth_factor=10.0, residual_floor=1e-8):
    """Run the normalized Chern-Ricci flow on S_M.

    Parameters
    ----------
    surface : SurfaceSM
    omega0 : HermitianMetricField or CoordinateMetricField
        Positive initial metric on a full S_M grid.
    t_end, dt : float
        Final time and macro step.
    sample_every : int, optional
        Diagnostics cadence in macro steps (default: about every 0.05 time units).
    stability : {"adaptive", "strict"}
        ``"strict"`` refuses any ``dt`` above ``cfl * h_min^2``.  ``"adaptive"``
        splits each macro step into RK4 sub-steps sized from the spectral
        radius of the discrete operator and refuses when more than
        ``max_substeps`` would be needed.
    fast_path : bool
        Fiber-constant data stay fiber-constant, so they are evolved on the
        one-point fiber grid.  Fiber variation that decays below
        ``project_tol`` is projected away and the run continues on that grid.
    growth_window, growth_factor, residual_floor
        Instability detector: the step residual may not grow by more than
        ``growth_factor`` over ``growth_window`` steps once above ``residual_floor``.

    Returns
    -------
    FlowTrace

    Raises
    ------
    NotPositive
        If ``omega0`` is not positive.
    PositivityLost, StepTooLarge
    """
    if surface.family != "SM":
        return _frame_homogeneous_run(surface, omega0, t_end, dt, sample_every)
    g0 = _as_coordinate(surface, omega0)
    if not g0.is_metric:
        raise NotPositive("initial metric is not positive")
    if not (dt > 0 and t_end >= 0):
        raise ValueError("dt must be positive and t_end non-negative")
    grid = g0.grid
    state = tuple(np.array(c, copy=True) for c in (g0.gzz, g0.gzw, g0.gww))
    cgrid = grid
    if fast_path and _fiber_variation(state) <= project_tol:
        cgrid = homogeneous_grid(grid)
        state = _project_to_slices(state)
    if stability == "strict":
        bound = stability_bound(surface, grid, cfl)
        if dt > bound:
            raise StepTooLarge(f"dt = {dt:g} exceeds the stability bound {bound:.3e}")
    n_steps = max(1, int(round(t_end / dt))) if t_end > 0 else 0
    if sample_every is None:
        sample_every = max(1, int(round(0.05 / dt)))
    trace = FlowTrace(grid=grid, compute_grid=cgrid)
    inf_frame = omega_inf_frame(surface, cgrid)
    E = coframe_matrices(surface, cgrid)
    history = []

    def sample(t, st, resid):
        g = CoordinateMetricField(*st, cgrid, validate=False)
        if keep_snapshots:
            trace.snapshots.append((t, g))
        if not diagnostics:
            trace.rows.append((t, float("nan"), resid) + (float("nan"),) * 5)
            return
        h = frame_coordinate_convert(surface, g, "to_frame", E)
        dist = frame_distance(h, inf_frame)
        curv = curvature_sup(surface, g)
        col = collapse_diagnostics(surface, g, n_graph=n_graph)
        ts = [r[0] for r in trace.rows] + [t]
        ds = [r[1] for r in trace.rows] + [dist]
        rate = fit_decay_rate(ts, ds, t_min=min(1.0, 0.5 * t_end))
        trace.rows.append((t, dist, resid, curv, col.fiber_diam_z, col.fiber_diam_x2,
                           col.base_length, rate))

    sample(0.0, state, float("nan"))
    k_now = ncrf_rhs(surface, cgrid, *state)
    for n in range(1, n_steps + 1):
        t = n * dt
        rho = spectral_radius_estimate(surface, cgrid, *state)
        n_sub = max(1, math.ceil(dt * rho / RK4_RADIUS))
        if stability == "strict":
            n_sub = 1
        elif n_sub > max_substeps:
            raise StepTooLarge(f"dt = {dt:g} needs {n_sub} sub-steps (limit {max_substeps})")
        trace.substeps = max(trace.substeps, n_sub)
        new = _rk4(surface, cgrid, state, dt, n_sub, k1=k_now)
        new = tuple(np.ascontiguousarray(c) for c in new)
        _check_positive(cgrid, new, t)
        if (fast_path and not cgrid.homogeneous and _fiber_variation(new) <= project_tol):
            cgrid = homogeneous_grid(grid)
            new = _project_to_slices(new)
            state = _project_to_slices(state)
            k_now = ncrf_rhs(surface, cgrid, *state)
            inf_frame = omega_inf_frame(surface, cgrid)
            E = coframe_matrices(surface, cgrid)
            trace.compute_grid = cgrid
            trace.projected_at = t
            trace.events.append(f"projected to slice means at t = {t:.6g}")
        k_new = ncrf_rhs(surface, cgrid, *new)
        resid = max(float(np.max(np.abs((a - b) / dt - 0.5 * (p + q))))
                    for a, b, p, q in zip(new, state, k_now, k_new))
        trace.max_residual = max(trace.max_residual, resid)
        history.append(resid)
        if len(history) > growth_window:
            old = history[-growth_window - 1]
            if resid > residual_floor and resid > growth_factor * old:
                raise StepTooLarge(f"step residual grew from {old:.3e} to {resid:.3e} "
                                   f"within {growth_window} steps at t = {t:.6g}")
            history = history[-growth_window - 1:]
        if not np.all(np.isfinite(resid)):
            raise StepTooLarge(f"non-finite residual at t = {t:.6g}")
        state, k_now = new, k_new
        if n % sample_every == 0 or n == n_steps:
            sample(t, state, resid)
    trace.seam_residual = max(seam_residual_sm(surface, c, k) for c, k in zip(state, KINDS))
    return trace


# ----------------------------------------------------------------------------
# frame-homogeneous flow (both families)


def frame_homogeneous_rhs(r, s, u, h, log_det_E_coeff):
    """Time derivative of fiber-constant frame components on a periodic ``log y2`` grid.

    With ``F = log det h + c log y2`` (``c = -1`` on S_M, ``-2`` on S+) the flow
    reads ``ds/dt = (F'' - F') / 4 - s``, ``dr/dt = -r``, ``du/dt = -u``.
    """
    F = np.log(r * s - np.abs(u) ** 2)
    Fs = (np.roll(F, -1) - np.roll(F, 1)) / (2 * h)
    Fss = (np.roll(F, -1) - 2 * F + np.roll(F, 1)) / h**2
    # the c log y2 term contributes c'' - c' = -c
    return -r, 0.25 * (Fss - Fs - log_det_E_coeff) - s, -u


def _frame_homogeneous_run(surface, omega0, t_end, dt, sample_every=None):
    if not isinstance(omega0, HermitianMetricField):
        raise NotImplementedError("S+ runs take frame components")
    for comp in (omega0.r, omega0.s, omega0.u):
        if np.ptp(np.abs(np.asarray(comp)), axis=(0, 1, 2)).max() > 1e-13:
            raise NotImplementedError("S+ flow is implemented for fiber-constant frame data")
    grid = omega0.grid
    r = np.asarray(omega0.r)[0, 0, 0, :-1].copy()
    s = np.asarray(omega0.s)[0, 0, 0, :-1].copy()
    u = np.asarray(omega0.u)[0, 0, 0, :-1].copy()
    c = -1.0 if surface.family == "SM" else -2.0
    h = grid.h
    rho = 4.0 / (h * h * s.min()) + 1.0
    n_steps = max(1, int(round(t_end / dt))) if t_end > 0 else 0
    if sample_every is None:
        sample_every = max(1, int(round(0.05 / dt)))
    trace = FlowTrace(grid=grid, compute_grid=grid)
    m = omega_inf_multiple(surface)

    def sample(t, resid):
        hr = np.append(r, r[0]); hs = np.append(s, s[0]); hu = np.append(u, u[0])
        a = hr
        d = hs - m / 4.0
        dist = float(np.max(np.abs(0.5 * (a + d)) + np.sqrt(0.25 * (a - d) ** 2 + np.abs(hu) ** 2)))
        ts = [q[0] for q in trace.rows] + [t]
        ds = [q[1] for q in trace.rows] + [dist]
        rate = fit_decay_rate(ts, ds, t_min=min(1.0, 0.5 * t_end))
        nan = float("nan")
        trace.rows.append((t, dist, resid, nan, nan, nan, nan, rate))
        hf = HermitianMetricField(hr.reshape(1, 1, 1, -1), hs.reshape(1, 1, 1, -1),
                                  hu.reshape(1, 1, 1, -1), homogeneous_grid(grid), validate=False)
        trace.snapshots.append((t, hf))

    sample(0.0, float("nan"))
    for n in range(1, n_steps + 1):
        rho = 4.0 / (h * h * s.min()) + 1.0
        n_sub = max(1, math.ceil(dt * rho / RK4_RADIUS))
        trace.substeps = max(trace.substeps, n_sub)
        hh = dt / n_sub
        y = (r, s, u)
        k0 = frame_homogeneous_rhs(*y, h, c)
        for _ in range(n_sub):
            k1 = frame_homogeneous_rhs(*y, h, c)
            k2 = frame_homogeneous_rhs(*(a + 0.5 * hh * b for a, b in zip(y, k1)), h, c)
            k3 = frame_homogeneous_rhs(*(a + 0.5 * hh * b for a, b in zip(y, k2)), h, c)
            k4 = frame_homogeneous_rhs(*(a + hh * b for a, b in zip(y, k3)), h, c)
            y = tuple(a + hh / 6 * (p + 2 * q + 2 * w + z) for a, p, q, w, z in zip(y, k1, k2, k3, k4))
        kn = frame_homogeneous_rhs(*y, h, c)
        resid = max(float(np.max(np.abs((a - b) / dt - 0.5 * (p + q))))
                    for a, b, p, q in zip(y, (r, s, u), k0, kn))
        trace.max_residual = max(trace.max_residual, resid)
        r, s, u = y
        if np.any(r <= 0) or np.any(r * s - np.abs(u) ** 2 <= 0):
            raise PositivityLost(f"metric lost positivity at t = {n * dt:.6g}", time=n * dt)
        if n % sample_every == 0 or n == n_steps:
            sample(n * dt, resid)
    return trace


def omega_inf_multiple_numeric(surface, n_y2=33, t_end=30.0, rtol=1e-10, atol=1e-12):
    """Measure ``m`` in ``omega(t) -> m alpha`` by flowing the reference metric.

    The reference metric is fiber-constant in frame components on both
    families, so the frame-homogeneous flow applies.  Starting from
    ``(r, s, u) = (1, 1, 0)`` the components ``r = e^-t`` and ``u = 0`` are
    explicit and ``log det`` differs from ``log s`` by a function of ``t``
    alone, so only ``s`` is integrated.  The semi-discrete equation is stiff
    (spectral radius of order ``1 / h^2``) and is handed to an implicit BDF
    method.  The limit of ``s`` is ``m / 4``.
    """
    grid = domain_grid(surface, (1, 1, 1), n_y2)
    n = n_y2 - 1
    c = -1.0 if surface.family == "SM" else -2.0
    ones = np.ones(n)
    zeros = np.zeros(n)

    def rhs(_t, s_):
        return frame_homogeneous_rhs(ones, s_, zeros, grid.h, c)[1]

    sol = solve_ivp(rhs, (0.0, t_end), np.ones(n), method="BDF", rtol=rtol, atol=atol)
    if not sol.success:
        raise FlowError(f"limit integration failed: {sol.message}")
    return float(4.0 * sol.y[:, -1].mean())


# ----------------------------------------------------------------------------
# stretched geometry


@dataclass
class StretchReport:
    """Stretched comparison constants along a run.

    ``c0[i]`` is ``max(lambda_max, 1 / lambda_min)`` of the stretched metric
    relative to the reference metric at ``times[i]`` and ``c2[i]`` the sup of
    its second derivatives in reference-unit directions.  The run counts as
    bounded when both sequences are finite and their sup over the second half
    of the time window stays within ``growth`` times the sup over the first
    half (plus ``floor`` for sequences that vanish).
    """

    times: np.ndarray
    c0: np.ndarray
    c2: np.ndarray
    growth: float = 2.0
    floor: float = 1e-6

    def _bounded(self, c):
        if len(c) < 2 or not np.all(np.isfinite(c)):
            return bool(np.all(np.isfinite(c)))
        mid = 0.5 * (self.times[0] + self.times[-1])
        early = c[self.times <= mid].max()
        late = c[self.times >= mid].max()
        return bool(late <= self.growth * early + self.floor)

    @property
    def bounded(self):
        return self._bounded(self.c0) and self._bounded(self.c2)

    def to_text(self):
        return (f"stretched_C0_max = {self.c0.max():.6g}\n"
                f"stretched_C2_max = {self.c2.max():.6g}\n"
                f"verdict = {'bounded' if self.bounded else 'unbounded'}\n")


def stretched_frame(surface, g, t):
    """Frame components of the leaf-stretched metric at time ``t``.

    The stretch scales the ``z`` coordinate by ``e^(t/2)``: ``g_zz`` gains
    ``e^t`` and ``g_zw`` gains ``e^(t/2)``.
    """
    st = CoordinateMetricField(math.exp(t) * np.asarray(g.gzz), math.exp(t / 2) * np.asarray(g.gzw),
                               g.gww, g.grid, validate=False)
    return frame_coordinate_convert(surface, st, "to_frame")


def _stretched_frame_ghosted(surface, g, t):
    """Real frame fields ``r, s, Re u, Im u`` of the stretched metric, with ghosts.

    Ghost slices are filled from the coordinate components (which glue with
    known factors) and converted with the coframe at the ghost heights.
    """
    grid = g.grid
    comps = [np.ascontiguousarray(np.broadcast_to(c, grid.shape)) for c in (g.gzz, g.gzw, g.gww)]
    comps[0] = comps[0] * math.exp(t)
    comps[1] = comps[1] * math.exp(t / 2)
    ze, we, ee = (_ghost(surface, c, k) for c, k in zip(comps, KINDS))
    y2e = np.exp(np.arange(-1, grid.n_y2 + 1) * grid.h)
    r = ze.real / y2e
    s = ee.real * y2e**2
    u = 1j * np.sqrt(y2e) * we
    out = []
    for fe in (r, s, u.real, u.imag):
        out.append((np.ascontiguousarray(fe[..., 1:-1]), fe))
    return out


def stretch_diagnostic(surface, times, snapshots, growth=2.0):
    """Stretched ``C^0`` and ``C^2`` norms against the reference metric.

    Parameters
    ----------
    times : sequence of float
    snapshots : sequence of CoordinateMetricField or HermitianMetricField
    growth : float
        Allowed growth factor from the first to the second half of the window.

    Returns
    -------
    StretchReport
    """
    c0, c2 = [], []
    for t, snap in zip(times, snapshots):
        g = _as_coordinate(surface, snap)
        h = stretched_frame(surface, g, t)
        a, d, b = np.asarray(h.r), np.asarray(h.s), np.abs(np.asarray(h.u))
        mid = 0.5 * (a + d)
        rad = np.sqrt(0.25 * (a - d) ** 2 + b**2)
        lmax, lmin = mid + rad, mid - rad
        c0.append(float(max(lmax.max(), (1.0 / lmin).max())))
        grid = g.grid
        y2 = grid.y2
        wz = math.exp(t / 2)
        unit = {"x1": wz / np.sqrt(y2), "y1": wz / np.sqrt(y2), "x2": y2, "y2": y2}
        worst = 0.0
        for comp, comp_e in _stretched_frame_ghosted(surface, g, t):
            d2 = real_derivatives(surface, grid, comp, comp_e)
            for key, val in d2.items():
                if len(key) != 4:
                    continue
                scale = unit[key[:2]] * unit[key[2:]]
                worst = max(worst, float(np.max(np.abs(val * scale))))
        c2.append(worst)
    return StretchReport(np.asarray(times, dtype=float), np.array(c0), np.array(c2), growth)
