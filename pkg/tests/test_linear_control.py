import numpy as np
import pytest

from thermosteer import flows as fl
from thermosteer import linear_control as lc
from thermosteer import spectral as sp
from thermosteer.geometry import SmoothRamp
from thermosteer.modes import LibraryConfig, ModeLibrary

from oracles import characteristics_transport, field_to_mode_dict

TWO_PI = 2.0 * np.pi


class TestTransportSolve:
    def test_zero_source(self, commensurate16):
        part, cut, strat = commensurate16
        out = lc.transport_solve("y", lambda s: sp.SpectralField.zeros(32), 1.0, 32,
                                 strategy=strat, n_quad=65)
        assert sp.sobolev_norm(out, 0) == 0.0

    def test_vertical_drift_preserves_x1_profiles(self, commensurate16):
        # a source depending only on x1 is invariant under the vertical flow
        part, cut, strat = commensurate16
        n = 32
        h = sp.SpectralField.from_function(n, lambda x1, x2: np.sin(x1) + 0.3 * np.cos(2 * x1))
        out = lc.transport_solve("y", lambda s: h, 1.0, n, strategy=strat, n_quad=129)
        assert sp.sobolev_norm(out - h, 0) < 1e-12

    def test_characteristics_oracle_u_drift(self, rng):
        gf = fl.build_generating()
        n = 32
        src = sp.random_band_limited(n, 3, rng)
        modes = field_to_mode_dict(src, 3)
        ours = lc.transport_solve("u", lambda s: src, 1.0, n, gf=gf, n_quad=257,
                                  substeps_per_node=8)
        x1, x2 = sp.grid(n)
        pts = np.stack(np.broadcast_arrays(x1, x2), axis=-1).reshape(-1, 2)
        oracle = characteristics_transport(
            lambda x, t: gf.velocity(x, t), lambda s: modes, 1.0, pts,
            n_time=1025, back_steps_per_node=2)
        rel = np.linalg.norm(ours.values().reshape(-1) - oracle) / np.linalg.norm(oracle)
        assert rel <= 1e-4


class TestSynthesis:
    def test_zero_target(self, library16):
        ctrl, rep = lc.synthesize_transport_control(
            sp.SpectralField.zeros(64), library16, M=16, ridge=1e-8)
        assert np.all(ctrl.alpha == 0.0)
        assert rep.residual_l2 == 0.0

    def test_degenerate_drift_recovers_h0(self, commensurate16):
        # with a frozen flow the map is block-diagonal per base mode and the
        # fit recovers the four coefficients exactly
        part, cut, strat = commensurate16
        gf0 = fl.GeneratingField(amplitude=0.0)
        lib0 = ModeLibrary(strat, gf0, cut, 32, LibraryConfig(k_store=10, time_nodes=65))
        n = 32
        coeffs = (0.7, -0.3, 0.5, 0.2)
        z1 = sp.SpectralField.from_function(
            n, lambda x1, x2: coeffs[0] * np.sin(x1) + coeffs[1] * np.cos(x1)
            + coeffs[2] * np.sin(x1 + x2) + coeffs[3] * np.cos(x1 + x2))
        extra = sp.SpectralField.from_function(n, lambda x1, x2: 0.4 * np.sin(2 * x2))
        target = z1 + extra
        ctrl, rep = lc.synthesize_transport_control(target, lib0, M=8, ridge=0.0)
        recovered = ctrl.alpha.sum(axis=0) / 8.0
        assert np.allclose(recovered, coeffs, atol=1e-9)
        assert rep.residual_l2 == pytest.approx(sp.sobolev_norm(extra, 0), rel=1e-9)

    def test_nested_bins_monotone(self, library16, rng):
        z1 = sp.random_band_limited(64, 2, rng)
        res = []
        for M in (16, 32, 64):
            _, rep = lc.synthesize_transport_control(z1, library16, M=M, ridge=0.0)
            res.append(rep.residual_l2)
        assert res[1] <= res[0] + 1e-10
        assert res[2] <= res[1] + 1e-10

    def test_mean_free_required(self, library16):
        c = np.zeros((64, 64), complex)
        c[0, 0] = 1.0
        with pytest.raises(ValueError):
            lc.synthesize_transport_control(sp.SpectralField(c), library16)


class TestTaper:
    def test_plateau_unchanged_and_endpoints_zero(self):
        ctrl = lc.H0Control(alpha=np.ones((8, 4)))
        tapered = lc.taper(ctrl, width=0.1, ramp=SmoothRamp(4))
        assert np.allclose(tapered.coefficients(0.5), ctrl.coefficients(0.5))
        assert np.all(tapered.coefficients(0.0) == 0.0)
        assert np.all(tapered.coefficients(1.0) == 0.0)

    def test_width_ladder_perturbation_shrinks(self, library16):
        # endpoint perturbation of the tapered control decreases with width
        rng = np.random.default_rng(3)
        z1 = sp.random_band_limited(64, 2, rng)
        ctrl, _ = lc.synthesize_transport_control(z1, library16, M=32, ridge=1e-6)
        base = _endpoint_along_u(ctrl, library16)
        perturbs = []
        for width in (0.2, 0.1, 0.05):
            tp = lc.taper(ctrl, width=width, ramp=SmoothRamp(4))
            perturbs.append(sp.sobolev_norm(_endpoint_along_u(tp, library16) - base, 0))
        assert perturbs[0] > perturbs[1] > perturbs[2]

    def test_width_validation(self):
        with pytest.raises(ValueError):
            lc.taper(lc.H0Control(alpha=np.zeros((4, 4))), 0.3, SmoothRamp(4))


def _endpoint_along_u(ctrl, lib):
    nodes = lib.nodes
    h = nodes[1] - nodes[0]
    acc = np.zeros((lib.n, lib.n), dtype=np.complex128)
    from thermosteer.modes import embed_block
    for j in range(1, len(nodes)):
        mid = 0.5 * (nodes[j - 1] + nodes[j])
        a = ctrl.coefficients(mid)
        left = np.tensordot(a, lib.T[:, j - 1], axes=(0, 0))
        right = np.tensordot(a, lib.T[:, j], axes=(0, 0))
        acc += 0.5 * h * (left + right)
    return sp.SpectralField(embed_block(acc, lib.n))


class TestCoupledAssembly:
    def test_zero_targets(self, library16):
        ctrl = lc.assemble_coupled_control(sp.SpectralField.zeros(64),
                                           sp.SpectralField.zeros(64), library16)
        assert np.all(ctrl.a_hat == 0.0)
        assert np.all(ctrl.b == 0.0)
        assert sp.sobolev_norm(ctrl.g_field(0.4), 0) == 0.0

    def test_decomposition_round_trip(self, library16, rng):
        v1 = sp.random_band_limited(64, 2, rng, norm=0.2)
        c = v1.coeffs.copy()
        c[0, :] = 0.0
        v1 = sp.SpectralField(c)
        th1 = sp.random_band_limited(64, 2, rng, norm=0.2)
        ctrl = lc.assemble_coupled_control(v1, th1, library16)
        for s in (0.13, 0.5, 0.87):
            rec = np.zeros((64, 64), dtype=np.complex128)
            alpha = ctrl.alpha12(s)
            for l in range(1, 13):
                rec += alpha[l - 1] * library16.zeta_T_field(l, s).coeffs
            direct = ctrl.g_field(s).coeffs
            assert np.max(np.abs(rec - direct)) < 1e-10 * max(1.0, np.max(np.abs(direct)))

    def test_space_time_average_vanishes(self, library16, rng):
        v1 = sp.random_band_limited(64, 2, rng, norm=0.3)
        c = v1.coeffs.copy()
        c[0, :] = 0.0
        v1 = sp.SpectralField(c)
        th1 = sp.random_band_limited(64, 2, rng, norm=0.3)
        ctrl = lc.assemble_coupled_control(v1, th1, library16)
        ss = np.linspace(0, 1, 201)
        means = [ctrl.g_field(float(s)).mean for s in ss]
        assert abs(np.trapezoid(means, ss)) <= 1e-10

    def test_line_average_structure(self, library16, rng):
        # the vorticity produced through the antiderivative channel has no
        # k1 = 0 content on any horizontal line
        v1 = sp.random_band_limited(64, 2, rng, norm=0.3)
        c = v1.coeffs.copy()
        c[0, :] = 0.0
        v1 = sp.SpectralField(c)
        th1 = sp.random_band_limited(64, 2, rng, norm=0.3)
        ctrl = lc.assemble_coupled_control(v1, th1, library16)
        v_end, _ = ctrl.linear_endpoints()
        assert np.max(np.abs(v_end.coeffs[0, :])) <= 1e-12

    def test_k1_zero_unreachable_reported(self, library16):
        v1 = sp.SpectralField.from_function(64, lambda x1, x2: 0.5 * np.sin(x2))
        ctrl = lc.assemble_coupled_control(v1, sp.SpectralField.zeros(64), library16)
        assert ctrl.report["k1_zero_unreachable"] == pytest.approx(
            sp.sobolev_norm(v1, 0), rel=1e-10)

    def test_change_of_flow_identity(self, library16, rng):
        # temperature endpoint through the vertical-frame tables matches an
        # independent transport solve along the generating drift
        th1 = sp.random_band_limited(64, 2, rng, norm=0.4)
        ctrl = lc.assemble_coupled_control(sp.SpectralField.zeros(64), th1, library16,
                                           lc.SynthesisConfig(ridge=1e-2))
        _, theta_end = ctrl.linear_endpoints()
        ghat = lc.H0Control(alpha=ctrl.a_hat)
        n = 64

        def source(s):
            a = ghat.coefficients(s)
            return sp.SpectralField.from_function(
                n, lambda x1, x2: a[0] * np.sin(x1) + a[1] * np.cos(x1)
                + a[2] * np.sin(x1 + x2) + a[3] * np.cos(x1 + x2))

        direct = lc.transport_solve("u", source, 1.0, n, gf=library16.gf,
                                    n_quad=257, substeps_per_node=4)
        rel = sp.sobolev_norm(theta_end - direct, 0) / sp.sobolev_norm(direct, 0)
        assert rel <= 1e-3
