import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermosteer import flows as fl
from thermosteer import spectral as sp

from oracles import jacobian_determinant

TWO_PI = 2.0 * np.pi


class TestTimeGrid:
    def test_uniform_spacing(self):
        grid = fl.TimeGrid(K=17)
        td = grid.T_delta
        assert td == pytest.approx(1 / 53)
        assert grid.t_c0 == pytest.approx(td)
        for i in range(1, 18):
            assert grid.t_b(i) - grid.t_a(i) == pytest.approx(td)
            assert grid.t_c(i) - grid.t_b(i) == pytest.approx(td)
            if i > 1:
                assert grid.t_a(i) - grid.t_c(i - 1) == pytest.approx(td)
        assert 1.0 - grid.t_c(17) == pytest.approx(td)

    def test_sigma_window_values(self):
        grid = fl.TimeGrid(K=5)
        for i in (1, 3, 5):
            assert grid.sigma(grid.t_a(i)) == pytest.approx(0.0)
            assert grid.sigma(grid.t_b(i)) == pytest.approx(1.0)
            mid = 0.5 * (grid.t_a(i) + grid.t_b(i))
            assert grid.sigma(mid) == pytest.approx(0.5)

    def test_sigma_zero_outside(self):
        grid = fl.TimeGrid(K=5)
        assert grid.sigma(0.0) == 0.0
        assert grid.sigma(grid.t_c(2) + 1e-6) == pytest.approx(0.0, abs=1e-4)

    @settings(max_examples=40, deadline=None)
    @given(K=st.integers(2, 40), u=st.floats(0, 1))
    def test_sigma_slope_and_range(self, K, u):
        grid = fl.TimeGrid(K=K)
        s = float(grid.sigma(u))
        assert 0.0 <= s <= 1.0
        w = grid.window_index(u)
        if w > 0:
            # affine with slope 1/T_delta inside the window
            assert s == pytest.approx((u - grid.t_a(int(w))) / grid.T_delta, abs=1e-12)


class TestConvectionStrategy:
    def test_c1_arithmetic(self, partition_example):
        part, _ = partition_example
        strat = fl.ConvectionStrategy.build(part)
        assert strat.displacements[0] == pytest.approx(part.H1 + part.lK)
        assert strat.grid.T_delta == pytest.approx(1 / 53)

    def test_closed_curves_exact(self, partition_example):
        part, _ = partition_example
        strat = fl.ConvectionStrategy.build(part)
        assert strat.D(1.0) == 0.0
        x = np.array([1.0, 2.0])
        assert np.allclose(strat.flow(x, 0.0, 1.0), x)

    def test_displacement_plateaus(self, partition_example):
        part, _ = partition_example
        strat = fl.ConvectionStrategy.build(part)
        for i in range(1, part.K + 1):
            ts = np.linspace(strat.grid.t_a(i), strat.grid.t_b(i), 9)
            vals = strat.D(ts)
            assert np.ptp(vals) == 0.0
            assert vals[0] == pytest.approx(strat.displacements[i - 1])

    def test_compact_support(self, partition_example):
        part, _ = partition_example
        strat = fl.ConvectionStrategy.build(part)
        ts = np.concatenate([np.linspace(0, strat.grid.t_c0, 13),
                             np.linspace(strat.grid.t_c(part.K), 1.0, 13)])
        assert np.max(np.abs(strat.ybar2(ts))) == 0.0

    def test_stationary_visits(self, partition_example):
        # during window i the flow carries strip i onto the reference strip
        part, _ = partition_example
        strat = fl.ConvectionStrategy.build(part)
        ref_lo, ref_hi = part.reference
        for i in range(1, part.K + 1):
            lo, hi = part.strips[i - 1]
            mids = np.stack([np.zeros(7), np.linspace(lo + 1e-9, hi - 1e-9, 7)], axis=-1)
            t_mid = 0.5 * (strat.grid.t_a(i) + strat.grid.t_b(i))
            moved = strat.flow(mids, 0.0, t_mid)
            y = moved[:, 1]
            inside = ((ref_lo < y) & (y < ref_hi)) | ((ref_lo < y + TWO_PI) & (y + TWO_PI < ref_hi))
            assert inside.all()

    def test_flow_identity_at_equal_times(self, partition_example):
        part, _ = partition_example
        strat = fl.ConvectionStrategy.build(part)
        x = np.array([[0.3, 4.0], [2.0, 0.1]])
        assert np.allclose(strat.flow(x, 0.37, 0.37), x)

    def test_displacement_derivatives_match_fd(self, partition_example):
        part, _ = partition_example
        strat = fl.ConvectionStrategy.build(part)
        ts = np.linspace(0.02, 0.98, 301)
        h = 1e-7
        fd = (strat.D(ts + h) - strat.D(ts - h)) / (2 * h)
        assert np.max(np.abs(fd - strat.ybar2(ts))) < 1e-4 * max(1, np.max(np.abs(strat.ybar2(ts))))
        fd2 = (strat.ybar2(ts + h) - strat.ybar2(ts - h)) / (2 * h)
        assert np.max(np.abs(fd2 - strat.ybar2_dt(ts))) < 1e-3 * max(1, np.max(np.abs(strat.ybar2_dt(ts))))


class TestGeneratingField:
    def test_zero_profiles_identity_flow(self):
        gf = fl.GeneratingField(amplitude=0.0)
        x = np.random.default_rng(0).uniform(0, TWO_PI, (20, 2))
        out = gf.flow(x, 0.0, 1.0, substeps=16)
        assert np.max(np.abs(out - x)) < 1e-14

    def test_psi_vanishes_at_one(self):
        gf = fl.build_generating()
        assert np.max(np.abs(gf.psi(1.0))) == 0.0

    def test_divergence_free_spectrally(self):
        gf = fl.build_generating()
        n = 32
        x1, x2 = sp.grid(n)
        for t in (0.1, 0.45, 0.8):
            vel = gf.velocity(np.stack(np.broadcast_arrays(x1, x2), axis=-1), t)
            u1 = sp.SpectralField.from_values(vel[..., 0])
            u2 = sp.SpectralField.from_values(vel[..., 1])
            div = u1.deriv(1, 0) + u2.deriv(0, 1)
            assert sp.sobolev_norm(div, 0) <= 1e-12
            assert abs(u1.mean) < 1e-15 and abs(u2.mean) < 1e-15

    def test_round_trip(self, rng):
        gf = fl.build_generating()
        x = rng.uniform(0, TWO_PI, (64, 2))
        fwd = gf.flow(x, 0.0, 1.0, substeps=256)
        back = gf.flow(fwd, 1.0, 0.0, substeps=256)
        err = np.abs(np.mod(back - x + np.pi, TWO_PI) - np.pi)
        assert err.max() <= 1e-10

    def test_fourth_order_convergence(self, rng):
        gf = fl.build_generating()
        x = rng.uniform(0, TWO_PI, (16, 2))
        ref = gf.flow(x, 0.0, 1.0, substeps=1024)
        errs = []
        for sub in (32, 64, 128):
            out = gf.flow(x, 0.0, 1.0, substeps=sub)
            errs.append(np.max(np.abs(np.mod(out - ref + np.pi, TWO_PI) - np.pi)))
        assert errs[0] / errs[1] > 10
        assert errs[1] / errs[2] > 10

    def test_volume_preservation(self, rng):
        gf = fl.build_generating()
        pts = rng.uniform(0, TWO_PI, (200, 2))
        jac = jacobian_determinant(lambda p: gf.flow(p, 0.0, 1.0, substeps=128), pts)
        assert np.max(np.abs(jac - 1.0)) < 1e-6

    def test_observability_conditioning_positive(self):
        gf = fl.build_generating()
        assert gf.observability_conditioning(n_intervals=4) >= 0.0

    def test_substeps_validation(self):
        gf = fl.build_generating()
        with pytest.raises(ValueError):
            gf.flow(np.zeros((1, 2)), 0.0, 1.0, substeps=0)
