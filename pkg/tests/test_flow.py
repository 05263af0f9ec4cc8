import math

import numpy as np
import pytest

from inoue_flow.errors import NotPositive, StepTooLarge
from inoue_flow.flow import (
    StretchReport,
    chern_ricci_form,
    closed_form_family,
    collapse_diagnostics,
    curvature_sup,
    fit_decay_rate,
    frame_distance,
    ncrf_run,
    omega_inf_frame,
    omega_inf_multiple_numeric,
    stability_bound,
    stretch_diagnostic,
)
from inoue_flow.metrics import (
    HermitianMetricField,
    alpha_frame,
    frame_coordinate_convert,
    metric_from_potential,
    random_potential,
    tv_metric,
)
from inoue_flow.surfaces import domain_grid, homogeneous_grid


def ab_metric(grid, a, b):
    """``a alpha + b beta`` in frame components."""
    return HermitianMetricField(b, a / 4.0, 0.0, grid)


def max_diff(f1, f2):
    return max(np.max(np.abs(np.asarray(x) - np.asarray(y)))
               for x, y in ((f1.gzz, f2.gzz), (f1.gzw, f2.gzw), (f1.gww, f2.gww)))


@pytest.fixture(scope="module")
def psi_metric8(sm, grid8):
    psi = random_potential(sm, grid8, np.random.default_rng(5), kmax=1, n_modes=4, amplitude=0.1)
    return metric_from_potential(sm, grid8, psi)


class TestChernRicci:
    def test_tv_is_minus_alpha(self, sm, grid16):
        ric = chern_ricci_form(sm, tv_metric(grid16))
        assert np.max(np.abs(ric.gzz)) <= 1e-8
        assert np.max(np.abs(ric.gzw)) <= 1e-8
        assert np.max(np.abs(ric.gww + 1 / (4 * grid16.y2**2))) <= 1e-8

    @pytest.mark.parametrize("a,b", [(2.0, 0.5), (1.0, 3.0), (7.0, 0.01)])
    def test_homogeneous_family(self, sm, grid8, a, b):
        ric = chern_ricci_form(sm, ab_metric(grid8, a, b))
        assert np.max(np.abs(ric.gww + 1 / (4 * grid8.y2**2))) <= 1e-8
        assert np.max(np.abs(ric.gzz)) <= 1e-8

    @pytest.mark.parametrize("c", [2.0, 0.25, 3.7])
    def test_scale_invariance(self, sm, grid8, psi_metric8, c):
        r1 = chern_ricci_form(sm, psi_metric8)
        r2 = chern_ricci_form(sm, psi_metric8.scaled(c))
        assert max_diff(r1, r2) <= 1e-12

    def test_scale_invariance_power_of_two_exact(self, sm, grid16):
        om = metric_from_potential(sm, grid16, random_potential(sm, grid16, np.random.default_rng(1)))
        assert max_diff(chern_ricci_form(sm, om), chern_ricci_form(sm, om.scaled(4.0))) == 0.0

    def test_not_positive(self, sm, grid8):
        with pytest.raises(NotPositive):
            chern_ricci_form(sm, alpha_frame(grid8))


class TestCurvature:
    @pytest.mark.parametrize("a,b", [(4.0, 1.0), (2.0, 0.5), (1.0, 0.1), (9.0, 2.0)])
    def test_closed_form(self, sm, grid16, a, b):
        # |Rm| of a alpha + b beta is sqrt(5)/a, independent of b
        assert curvature_sup(sm, ab_metric(grid16, a, b)) == pytest.approx(math.sqrt(5) / a, rel=2e-3)

    def test_resolution_consistency(self, sm):
        vals = [curvature_sup(sm, tv_metric(domain_grid(sm, 4, n))) for n in (9, 17, 33)]
        e1, e2 = abs(vals[0] - vals[2]), abs(vals[1] - vals[2])
        assert e2 < e1
        assert e1 / e2 == pytest.approx(5.0, rel=0.2)  # Richardson ratio (h^2 differences, 1:4:16)

    def test_homogeneity(self, sm, grid8):
        base = curvature_sup(sm, ab_metric(grid8, 2.0, 1.0))
        assert curvature_sup(sm, ab_metric(grid8, 2.0, 5.0)) == pytest.approx(base, rel=1e-12)
        assert curvature_sup(sm, ab_metric(grid8, 6.0, 3.0)) == pytest.approx(base / 3, rel=1e-12)


class TestCollapse:
    def test_tv_lengths(self, sm, grid8):
        rep = collapse_diagnostics(sm, tv_metric(grid8))
        assert 0.1 < rep.fiber_diam < 10 and 0.1 < rep.fiber_diam_z < 10
        assert 0.1 < rep.fiber_diam_x2 < 10
        assert rep.base_length == pytest.approx(np.log(sm.lam), rel=1e-3)

    def test_alpha(self, sm, grid8):
        rep = collapse_diagnostics(sm, alpha_frame(grid8))
        assert rep.fiber_diam_z == 0.0
        assert rep.fiber_diam_x2 > 0
        assert rep.base_length == pytest.approx(np.log(sm.lam) / 2, rel=1e-3)
        diam, base = rep
        assert base == rep.base_length

    def test_z_scaling(self, sm, grid8):
        d1 = collapse_diagnostics(sm, ab_metric(grid8, 4.0, 1.0)).fiber_diam_z
        d2 = collapse_diagnostics(sm, ab_metric(grid8, 4.0, 0.25)).fiber_diam_z
        assert d2 == pytest.approx(d1 / 2, rel=1e-12)


class TestRun:
    def test_closed_form(self, sm, grid8):
        tr = ncrf_run(sm, tv_metric(grid8), 2.0, 5e-3, diagnostics=False)
        hg = homogeneous_grid(grid8)
        for t, g in tr.snapshots:
            h = frame_coordinate_convert(sm, g, "to_frame")
            assert frame_distance(h, closed_form_family(sm, hg, t)) <= 1e-6
        assert tr.compute_grid.homogeneous

    def test_decay_rate(self, sm, grid8):
        tr = ncrf_run(sm, tv_metric(grid8), 4.0, 1e-2, n_graph=4)
        assert 0.8 <= tr.decay_rate <= 1.2
        d = tr.column("sup_dist_to_omega_inf")
        assert np.all(np.diff(d) < 0)

    def test_residual_order(self, sm, grid8):
        res = []
        for dt in (0.02, 0.01):
            tr = ncrf_run(sm, tv_metric(grid8), 2.0, dt, diagnostics=False)
            res.append(tr.column("ncrf_residual")[-1])
        assert res[0] / res[1] == pytest.approx(4.0, rel=0.1)

    def test_inhomogeneous_start(self, sm, psi_metric8):
        tr = ncrf_run(sm, psi_metric8, 1.0, 1e-2, n_graph=4)
        # the decay-rate column needs three samples past t_min before it is defined
        assert np.all(np.isfinite(np.array(tr.rows)[1:, :-1]))
        assert tr.seam_residual <= 1e-12
        d = tr.column("sup_dist_to_omega_inf")
        assert d[-1] < d[0]

    def test_strict_stability(self, sm, grid8):
        bound = stability_bound(sm, grid8)
        with pytest.raises(StepTooLarge):
            ncrf_run(sm, tv_metric(grid8), 1.0, 10 * bound, stability="strict")

    def test_dt_too_large(self, sm, grid8):
        with pytest.raises(StepTooLarge):
            ncrf_run(sm, tv_metric(grid8), 5.0, 5.0)

    def test_not_positive_start(self, sm, grid8):
        with pytest.raises(NotPositive):
            ncrf_run(sm, HermitianMetricField(1.0, 1.0, 2.0, grid8, validate=False), 1.0, 0.01)

    def test_csv_reproducible(self, sm, grid8):
        a = ncrf_run(sm, tv_metric(grid8), 0.5, 1e-2, n_graph=4).to_csv()
        b = ncrf_run(sm, tv_metric(grid8), 0.5, 1e-2, n_graph=4).to_csv()
        assert a == b
        assert a.splitlines()[0] == ("t,sup_dist_to_omega_inf,ncrf_residual,curvature_sup,"
                                     "fiber_diam_z,fiber_diam_x2,base_length,decay_rate_fit")


class TestLimit:
    def test_sm_multiple(self, sm):
        assert omega_inf_multiple_numeric(sm) == pytest.approx(1.0, abs=1e-6)

    def test_splus_multiple(self, splus):
        assert omega_inf_multiple_numeric(splus) == pytest.approx(2.0, abs=1e-6)

    def test_splus_run_matches_family(self, splus):
        g = domain_grid(splus, (1, 1, 1), 17)
        tr = ncrf_run(splus, HermitianMetricField(1.0, 1.0, 0.0, g), 3.0, 0.01)
        for t, h in tr.snapshots:
            assert frame_distance(h, closed_form_family(splus, homogeneous_grid(g), t)) <= 1e-6

    def test_omega_inf_frame(self, sm, grid8):
        h = omega_inf_frame(sm, grid8)
        assert not h.is_metric and np.all(h.s == 0.25)


class TestStretch:
    def test_closed_form_family(self, sm, grid8):
        hg = homogeneous_grid(grid8)
        times = np.linspace(0, 5, 11)
        snaps = [closed_form_family(sm, hg, t) for t in times]
        rep = stretch_diagnostic(sm, times, snaps)
        expect = 4 / (1 + 3 * np.exp(-times))
        assert np.allclose(rep.c0, expect, rtol=1e-12)
        assert rep.c0.max() <= 4 and rep.bounded
        assert np.max(rep.c2) <= 1e-8

    def test_t_zero_is_plain_comparability(self, sm, grid8, psi_metric8):
        rep = stretch_diagnostic(sm, [0.0], [psi_metric8])
        a, d, b = psi_metric8.r, psi_metric8.s, np.abs(psi_metric8.u)
        rad = np.sqrt(0.25 * (a - d) ** 2 + b**2)
        expect = max((0.5 * (a + d) + rad).max(), (1 / (0.5 * (a + d) - rad)).max())
        assert rep.c0[0] == pytest.approx(expect, rel=1e-12)

    def test_growth_verdict(self):
        t = np.linspace(0, 5, 11)
        assert StretchReport(t, np.ones(11), np.ones(11)).bounded
        assert not StretchReport(t, np.ones(11), np.exp(t)).bounded
        assert "verdict = unbounded" in StretchReport(t, np.ones(11), np.exp(t)).to_text()


def test_fit_decay_rate():
    t = np.linspace(0, 5, 51)
    assert fit_decay_rate(t, 3 * np.exp(-0.7 * t)) == pytest.approx(0.7, abs=1e-12)
    assert math.isnan(fit_decay_rate([0, 1], [1, 1]))
