import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermosteer import geometry as geo

TWO_PI = 2.0 * np.pi


class TestBuildPartition:
    def test_reference_arithmetic(self, partition_example):
        part, _ = partition_example
        assert part.H1 == pytest.approx(1.25)
        assert part.H2 == pytest.approx(2.75)
        assert part.K == 17
        assert part.lK == pytest.approx(8 * np.pi / 51)
        assert part.lK < (part.H2 - part.H1) / 3
        assert part.reference[0] == pytest.approx(part.H1 + part.lK)

    def test_figure_configuration_k6(self):
        # a wide strip admits the minimal six-strip covering with overlap lK/4
        part, _ = geo.build_partition(0.2, 6.0)
        assert part.K == 6
        for (lo1, hi1), (lo2, hi2) in zip(part.strips, part.strips[1:]):
            assert hi1 - lo2 == pytest.approx(part.lK / 4)

    def test_full_width_strip_covers(self):
        part, cut = geo.build_partition(1e-3, TWO_PI)
        rep = geo.verify_cutoffs(cut, part, samples=100, quad_points=20001)
        assert rep["min_strip_coverage"] >= 1

    def test_strip_step_tiles_circle(self, partition_example):
        part, _ = partition_example
        assert part.K * 3 * part.lK / 4 == pytest.approx(TWO_PI)

    def test_bad_bounds(self):
        with pytest.raises(geo.GeometryError):
            geo.build_partition(2.0, 1.0)
        with pytest.raises(geo.GeometryError):
            geo.build_partition(0.0, 1.0)

    def test_max_K(self):
        with pytest.raises(geo.GeometryError):
            geo.build_partition(1.0, 1.01, max_K=100)

    def test_membership_count(self, partition_example):
        part, _ = partition_example
        for y in np.linspace(0, TWO_PI, 997, endpoint=False):
            assert len(part.strip_indices_at(y)) in (1, 2)


class TestCutoffs:
    def test_partition_of_unity(self, partition_example):
        part, cut = partition_example
        x = np.random.default_rng(0).uniform(0, part.lK / 4, 10_000)
        viol = np.abs(cut.mu(x) + cut.mu(x + 3 * part.lK / 4) - 1.0)
        assert viol.max() <= 1e-12

    def test_plateau_iff(self, partition_example):
        part, cut = partition_example
        assert cut.chi(part.H1 + 1.5 * part.lK) == pytest.approx(1.0)
        inside = np.linspace(part.lK / 4, 3 * part.lK / 4, 101)
        assert np.all(cut.mu(inside) == 1.0)
        outside = np.array([part.lK / 8, 0.9 * part.lK])
        assert np.all(cut.mu(outside) < 1.0)

    def test_supports_inside_omega(self, partition_example):
        part, cut = partition_example
        rep = geo.verify_cutoffs(cut, part)
        assert rep["support_max_outside_omega"] == 0.0
        assert rep["partition_identity_max_violation"] <= 1e-12
        assert rep["chi_plateau_midpoint_error"] == 0.0

    def test_chi_tilde_normalization(self, partition_example):
        part, cut = partition_example
        rep = geo.verify_cutoffs(cut, part)
        assert rep["chi_tilde_integral_error"] <= 1e-10

    def test_chi_depends_only_on_x2(self, partition_example):
        # chi is built from a single-variable bump, so d1 chi = 0 identically
        part, cut = partition_example
        vals = cut.chi_field_values(32)
        assert np.max(np.abs(vals - vals[0:1, :])) == 0.0

    def test_chi_tilde_derivatives_match_fd(self, partition_example):
        part, cut = partition_example
        y = np.linspace(part.H1 + 0.05, part.H2 - 0.05, 200)
        h = 1e-6
        fd1 = (cut.chi_tilde(y + h) - cut.chi_tilde(y - h)) / (2 * h)
        assert np.max(np.abs(fd1 - cut.chi_tilde_prime(y))) < 1e-4
        fd2 = (cut.chi_tilde_prime(y + h) - cut.chi_tilde_prime(y - h)) / (2 * h)
        assert np.max(np.abs(fd2 - cut.chi_tilde_second(y))) < 1e-3


class TestCommensurateStrip:
    @settings(max_examples=10, deadline=None)
    @given(K=st.sampled_from([8, 16, 32]))
    def test_displacements_on_grid(self, K):
        n = 64
        a, b = geo.commensurate_strip(n, K)
        part, _ = geo.build_partition(a, b)
        assert part.K == K
        from thermosteer.flows import ConvectionStrategy
        strat = ConvectionStrategy.build(part)
        cells = strat.displacements / (TWO_PI / n)
        assert np.max(np.abs(cells - np.round(cells))) < 1e-9

    def test_rejects_nondivisor(self):
        with pytest.raises(geo.GeometryError):
            geo.commensurate_strip(64, 10)
