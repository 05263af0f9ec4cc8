import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from inoue_flow.algebraic import liouville_margin
from inoue_flow.metrics import (
    HermitianMetricField,
    frame_coordinate_convert,
    g_of_omega,
    integrate,
)
from inoue_flow.slf import bounded_ode_solve, reduce_to_cell, solve_sm
from inoue_flow.surfaces import (
    build_sm,
    build_splus,
    domain_grid,
    glue_transform_sm,
    leafwise_laplacian_apply,
)

from .conftest import CAT_MAP, COMPANION

SM = build_sm(COMPANION)
SPLUS = build_splus(CAT_MAP, 0, 0, 1, 0.3 + 0.2j)
GRID = domain_grid(SM, 4, 5)
GRID8 = domain_grid(SM, 8, 5)

common = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
seeds = st.integers(0, 2**32 - 1)
wave = st.tuples(*[st.integers(-3, 3)] * 3).filter(any)


@common
@given(seeds)
def test_frame_round_trip(seed):
    rng = np.random.default_rng(seed)
    shape = GRID.shape
    r = 0.1 + 3 * rng.random(shape)
    s = 0.1 + 3 * rng.random(shape)
    u = 0.99 * np.sqrt(r * s) * rng.random(shape) * np.exp(2j * np.pi * rng.random(shape))
    h = HermitianMetricField(r, s, u, GRID)
    c = frame_coordinate_convert(SM, h)
    assert c.is_metric
    back = frame_coordinate_convert(SM, c)
    scale = max(r.max(), s.max())
    assert max(np.abs(back.r - r).max(), np.abs(back.s - s).max(), np.abs(back.u - u).max()) <= 1e-13 * scale


@common
@given(seeds, st.floats(0.1, 10.0))
def test_g_linear_and_mean_zero(seed, c):
    rng = np.random.default_rng(seed)
    r = 0.5 + rng.random(GRID.shape)
    h = HermitianMetricField(r, 1.0, 0.0, GRID)
    G = g_of_omega(SM, h)
    assert abs(integrate(SM, GRID, G)) <= 1e-12
    assert np.allclose(g_of_omega(SM, h.scaled(c)), c * G, rtol=1e-12, atol=1e-14)


non_squares = st.integers(2, 500).filter(lambda n: int(n**0.5) ** 2 != n)


@common
@given(non_squares, st.integers(2, 400), st.integers(2, 4))
def test_liouville_monotone(n, q, d):
    x = float(np.sqrt(n))
    a = liouville_margin(x, d, q).margin
    b = liouville_margin(x, d, 2 * q).margin
    assert b <= a and a >= 0


@common
@given(seeds, st.sampled_from(["scalar", "zz", "zw", "ww"]))
def test_glue_inverse(seed, kind):
    f = np.random.default_rng(seed).normal(size=(4, 4, 4, 3))
    there = glue_transform_sm(SM, f, "to_top", kind)
    assert np.max(np.abs(glue_transform_sm(SM, there, "to_bottom", kind) - f)) <= 1e-12


@common
@given(wave)
def test_divisors_positive(k):
    assert SM.z_form(np.array(k)) > 1e-6


@common
@given(seeds)
def test_laplacian_kernel_is_y2_only(seed):
    # a band-limited field is annihilated exactly when its non-zero modes vanish
    rng = np.random.default_rng(seed)
    base = rng.normal(size=GRID8.n_y2)
    u = np.broadcast_to(base, GRID8.shape).copy()
    assert np.max(np.abs(leafwise_laplacian_apply(SM, u, GRID8))) <= 1e-12
    k = rng.integers(-3, 4, size=3)
    k[0] = k[0] or 1
    u += 1e-3 * np.cos(2 * np.pi * np.einsum("i,i...->...", k, GRID8.t))[..., None]
    assert np.max(np.abs(leafwise_laplacian_apply(SM, u, GRID8))) > 1e-6


@common
@given(wave, st.floats(0.1, 2.0), st.floats(0, 2 * np.pi))
def test_solve_single_mode(k, amp, phase):
    k = np.array(k)
    win = np.sin(np.pi * GRID8.s / GRID8.L) ** 2
    u = amp * np.cos(2 * np.pi * np.einsum("i,i...->...", k, GRID8.t) + phase)[..., None] * win
    pot, _ = solve_sm(SM, leafwise_laplacian_apply(SM, u, GRID8), GRID8)
    assert np.max(np.abs(pot.u - u)) <= 1e-12 * max(1.0, amp)


@common
@given(st.floats(0.5, 6.0), st.floats(0.0, 5.0), st.floats(-3, 3))
def test_cosine_forcing(a, nu, y):
    sol = bounded_ode_solve(a, lambda s: np.cos(nu * s), [y])
    assert abs(sol.u[0] + np.cos(nu * y) / (a * a + nu * nu)) <= 1e-8


@common
@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(0.5, 3.0), st.integers(-3, 3))
def test_reduce_lands_in_cell(x2, y1, y2, k):
    (qx2, qy1), ph = reduce_to_cell(SPLUS, (x2, y1), y2, k)
    a, b = SPLUS.a, SPLUS.b
    V = np.array([[a[0], a[1]], [y2 * b[0], y2 * b[1]]])
    s = np.linalg.solve(V, [float(qx2), float(qy1)])
    assert np.all(s > -1e-9) and np.all(s < 1 + 1e-9)
    assert abs(abs(complex(ph)) - 1) <= 1e-12
    if k == 0:
        assert complex(ph) == 1
