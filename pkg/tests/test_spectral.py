import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermosteer import spectral as sp

from oracles import oversampled_product

TWO_PI = 2.0 * np.pi


def cos_field(n, k1, k2, amp=1.0):
    return sp.SpectralField.from_function(n, lambda x1, x2: amp * np.cos(k1 * x1 + k2 * x2))


class TestCurlInversion:
    def test_curl_of_shear(self):
        # u = [-sin x2, 0] has curl cos x2
        n = 64
        stream = cos_field(n, 0, 1)  # psi = cos x2 gives u = grad-perp psi
        u = sp.VelocityField(stream, (0.0, 0.0))
        z = sp.curl(u)
        expect = cos_field(n, 0, 1)
        assert sp.sobolev_norm(z - expect, 0) < 1e-13

    def test_curl_of_constant_field(self):
        u = sp.VelocityField(sp.SpectralField.zeros(32), (0.7, -1.3))
        assert sp.sobolev_norm(sp.curl(u), 0) == 0.0

    def test_inverse_curl_example(self):
        n = 64
        u = sp.inverse_curl(cos_field(n, 0, 1), (0.0, 0.0))
        u1_expect = sp.SpectralField.from_function(n, lambda x1, x2: -np.sin(x2))
        assert sp.sobolev_norm(u.u1() - u1_expect, 0) < 1e-13
        assert sp.sobolev_norm(u.u2(), 0) < 1e-13

    def test_zero_vorticity_gives_constant(self):
        u = sp.inverse_curl(sp.SpectralField.zeros(32), (0.4, 0.9))
        assert u.u1().mean == pytest.approx(0.4)
        assert u.u2().mean == pytest.approx(0.9)
        assert u.max_fluctuation_speed() == 0.0

    def test_round_trip_and_mean(self, rng):
        for n in (32, 64, 128):
            z = sp.random_band_limited(n, n // 4, rng)
            A = tuple(rng.uniform(-1, 1, 2))
            u = sp.inverse_curl(z, A)
            back = sp.curl(u)
            assert sp.sobolev_norm(back - z, 0) <= 1e-12
            assert u.u1().mean == pytest.approx(A[0], abs=1e-14)
            assert u.u2().mean == pytest.approx(A[1], abs=1e-14)

    def test_rejects_mean(self):
        c = np.zeros((32, 32), complex)
        c[0, 0] = 0.5
        with pytest.raises(sp.SpectralError):
            sp.inverse_curl(sp.SpectralField(c))

    def test_norm_bound_with_measured_constant(self, rng):
        n, m = 64, 2
        c0 = sp.measured_divcurl_constant(n, m)
        for _ in range(20):
            z = sp.random_band_limited(n, 12, rng)
            A = tuple(rng.uniform(-1, 1, 2))
            u = sp.inverse_curl(z, A)
            bound = c0 * (sp.sobolev_norm(z, m - 1) + float(np.hypot(*A)))
            assert u.sobolev_norm(m) <= bound * (1 + 1e-12)


class TestSobolevNorm:
    def test_sin_x1_norms(self):
        f = sp.SpectralField.from_function(64, lambda x1, x2: np.sin(x1))
        assert sp.sobolev_norm(f, 0) == pytest.approx(1 / np.sqrt(2), abs=1e-12)
        assert sp.sobolev_norm(f, 1) == pytest.approx(1.0, abs=1e-12)

    def test_zero_field(self):
        assert sp.sobolev_norm(sp.SpectralField.zeros(32), 3) == 0.0

    def test_monotone_in_m(self, rng):
        f = sp.random_band_limited(32, 8, rng)
        norms = [sp.sobolev_norm(f, m) for m in range(5)]
        assert all(a <= b + 1e-14 for a, b in zip(norms, norms[1:]))

    def test_parseval(self, rng):
        f = sp.random_band_limited(64, 20, rng)
        grid_quad = float(np.mean(f.values() ** 2))
        assert grid_quad == pytest.approx(sp.sobolev_norm(f, 0) ** 2, rel=1e-12)

    def test_rejects_large_m(self):
        with pytest.raises(sp.SpectralError):
            sp.sobolev_norm(sp.SpectralField.zeros(16), 7)


class TestDealiasedProduct:
    def test_constant_times_field(self, rng):
        n = 48
        one = sp.SpectralField.from_function(n, lambda x1, x2: np.ones_like(x1))
        g = sp.random_band_limited(n, 5, rng)
        prod = sp.dealiased_product(one, g)
        assert sp.sobolev_norm(prod - g.low_pass(n // 3), 0) < 1e-13

    def test_sin_squared(self):
        n = 64
        f = sp.SpectralField.from_function(n, lambda x1, x2: np.sin(x1))
        expect = sp.SpectralField.from_function(n, lambda x1, x2: 0.5 - 0.5 * np.cos(2 * x1))
        assert sp.sobolev_norm(sp.dealiased_product(f, f) - expect, 0) < 1e-13

    def test_alias_free_against_oversampled_oracle(self, rng):
        n = 48
        f = sp.random_band_limited(n, n // 3 - 1, rng)
        g = sp.random_band_limited(n, n // 3 - 1, rng)
        ours = sp.dealiased_product(f, g)
        oracle = oversampled_product(f, g)
        mask = sp.dealias_mask(n)
        assert np.max(np.abs(np.where(mask, oracle, 0) - ours.coeffs)) < 1e-12

    def test_resolution_mismatch(self):
        with pytest.raises(sp.SpectralError):
            sp.dealiased_product(sp.SpectralField.zeros(32), sp.SpectralField.zeros(64))


class TestEvaluateAndShift:
    def test_cos_at_point(self):
        f = cos_field(32, 0, 1)
        assert f.evaluate(np.array([[0.0, np.pi / 2]]))[0] == pytest.approx(0.0, abs=1e-14)

    def test_grid_point_evaluation_matches_transform(self, rng):
        n = 32
        f = sp.random_band_limited(n, 10, rng)
        x1, x2 = sp.grid(n)
        pts = np.stack(np.broadcast_arrays(x1, x2), axis=-1).reshape(-1, 2)
        assert np.max(np.abs(f.evaluate(pts) - f.values().reshape(-1))) < 1e-12

    def test_shift_evaluate_identity(self, rng):
        f = sp.random_band_limited(32, 9, rng)
        d = 1.37
        pts = rng.uniform(0, TWO_PI, (40, 2))
        lhs = f.shift_vertical(d).evaluate(pts)
        rhs = f.evaluate(pts + np.array([0.0, d]))
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_shift_zero_and_period(self, rng):
        f = sp.random_band_limited(32, 9, rng)
        assert sp.sobolev_norm(f.shift_vertical(0.0) - f, 0) == 0.0
        assert sp.sobolev_norm(f.shift_vertical(TWO_PI) - f, 0) < 1e-13

    @settings(max_examples=25, deadline=None)
    @given(d1=st.floats(-10, 10), d2=st.floats(-10, 10), seed=st.integers(0, 100))
    def test_shift_group_law(self, d1, d2, seed):
        f = sp.random_band_limited(32, 9, np.random.default_rng(seed))
        a = f.shift_vertical(d1).shift_vertical(d2)
        b = f.shift_vertical(d1 + d2)
        assert sp.sobolev_norm(a - b, 0) < 1e-12


class TestSnapshotFormat:
    def test_round_trip(self, tmp_path, rng):
        f = sp.random_band_limited(32, 10, rng)
        path = tmp_path / "field.txt"
        sp.save_field(path, f)
        header = path.read_text().split("\n", 1)[0]
        assert header == "32 32"
        g = sp.load_field(path)
        assert sp.sobolev_norm(f - g, 0) < 1e-13

    def test_hermitian_and_mean_flags(self, rng):
        f = sp.random_band_limited(32, 8, rng)
        assert f.hermitian_defect() < 1e-14
        assert f.is_mean_free
