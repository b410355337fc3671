"""Localizing the non-localized control into the strip.

The non-localized control g is compressed into the visit windows: during
window k the strip k sits on the reference strip, and

    f(x,t) = chi(x) * (1/T_delta) * g(Y(x, t, sigma(t)), sigma(t)),

evaluated through exact vertical phase shifts.  Average corrections through
the mean-one cutoff and its derivative then make the control exactly mean-free
at every sample time while preserving both endpoints.  The resulting control
is stored as fourteen scalar schedules over the actuator library.

Hitting bookkeeping: for each height the one or two covering strips, the
partition-of-unity weights at their visit windows, and the correction weight
E(x2) entering the rescaled vorticity target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CutoffSet, Partition
from .linear_control import NonlocalizedControl, SynthesisConfig, assemble_coupled_control
from .modes import ModeLibrary, block_shift, embed_block
from .spectral import SpectralField, sobolev_norm

TWO_PI = 2.0 * np.pi


class CoverageError(RuntimeError):
    pass


@dataclass
class HittingData:
    """Per-height visit bookkeeping on an n-point vertical grid."""

    x2: np.ndarray
    N: np.ndarray        # 1 or 2 visits
    k_first: np.ndarray  # window index of the first visit
    k_last: np.ndarray   # window index of the last visit (= first when N = 1)
    a_first: np.ndarray  # cutoff weight at the first visit
    a_last: np.ndarray
    E: np.ndarray        # correction weight, function of x2 only

    def weight_sum_violation(self) -> float:
        total = np.where(self.N == 1, self.a_first, self.a_first + self.a_last)
        return float(np.max(np.abs(total - 1.0)))


def hitting_data(partition: Partition, cutoffs: CutoffSet, strategy, x2=None) -> HittingData:
    grid = strategy.grid
    if x2 is None:
        x2 = TWO_PI * np.arange(64) / 64
    x2 = np.asarray(x2, dtype=np.float64)
    c = strategy.displacements
    n_pts = len(x2)
    N = np.zeros(n_pts, dtype=int)
    kf = np.zeros(n_pts, dtype=int)
    kl = np.zeros(n_pts, dtype=int)
    af = np.zeros(n_pts)
    al = np.zeros(n_pts)
    E = np.zeros(n_pts)
    for i, y in enumerate(x2):
        hits = partition.strip_indices_at(y)
        if not hits:
            raise CoverageError(f"height {y:.6f} lies in no covering strip")
        hits = sorted(hits)
        k1 = hits[0]
        kN = hits[-1]
        a1 = float(cutoffs.chi(y + c[k1 - 1]))
        aN = float(cutoffs.chi(y + c[kN - 1]))
        N[i] = 1 if (len(hits) == 1 or a1 >= 1.0) else 2
        kf[i], kl[i] = k1, (k1 if N[i] == 1 else kN)
        af[i] = a1 if N[i] > 1 or len(hits) == 1 else 1.0
        al[i] = 1.0 if N[i] == 1 else aN
        tb_first = grid.t_b(kf[i])
        tb_last = grid.t_b(kl[i])
        E[i] = af[i] * (tb_last - tb_first) + (1.0 - tb_last)
    return HittingData(x2=x2, N=N, k_first=kf, k_last=kl, a_first=af, a_last=al, E=E)


def e_weight_field(hd: HittingData, n: int) -> np.ndarray:
    """E as physical grid values, constant along x1; shape (n, n)."""
    return np.tile(hd.E[None, :], (n, 1))


class LocalizedControl:
    """Strip-supported control eta with its fourteen-schedule decomposition.

    Building the object runs the localized linear system by quadrature: the
    frame-accumulated temperature integral gives theta#, its d1 time integral
    gives v#, and the average corrections produce (V, Theta) and the emitted
    eta coefficients.
    """

    def __init__(self, ctrl: NonlocalizedControl, samples_per_window: int = 512):
        self.ctrl = ctrl
        self.lib = ctrl.lib
        self.samples_per_window = samples_per_window
        self._build()

    # -- construction --------------------------------------------------------

    def _build(self):
        lib = self.lib
        strat = lib.strategy
        grid = strat.grid
        K = grid.K
        td = grid.T_delta
        n = lib.n
        S = self.samples_per_window
        s_nodes = np.linspace(0.0, 1.0, S + 1)
        hs = s_nodes[1] - s_nodes[0]

        # reduced frame actuators and bin coefficients on the window grid
        frames = [lib.reduced_frame(s) for s in s_nodes]
        mids = 0.5 * (s_nodes[:-1] + s_nodes[1:])
        alpha_mid = [self.ctrl.reduced8(sm) for sm in mids]

        # chi-row convolution means: mean(chi * h) for a frame block h is a
        # linear functional of the block; precompute it once
        chi_mean_row = self.lib.chi_circulant_T[:, 0]  # gives output mode k2=0

        phi = np.zeros((n, n), dtype=np.complex128)   # running frame integral of f
        v_acc = np.zeros((n, n), dtype=np.complex128)  # running integral of phi
        F = 0.0
        t_prev = 0.0
        F_times, F_values = [0.0], [0.0]

        def window_mean(blk, c_k):
            shifted = block_shift(blk, -c_k)
            ks = lib.config.k_store
            row = np.zeros(n, dtype=np.complex128)
            row[lib._k2_embed] = shifted[ks, :]  # only k1 = 0 contributes to the mean
            return float(np.real(row @ chi_mean_row)) / td

        for k in range(1, K + 1):
            t_a = grid.t_a(k)
            gap = t_a - t_prev
            v_acc += gap * phi  # f vanishes between windows; phi is constant
            F_times.append(t_a)
            F_values.append(F)
            c_k = float(strat.displacements[k - 1])
            for j in range(S):
                a = alpha_mid[j]
                left = np.tensordot(a, frames[j], axes=(0, 0))
                right = np.tensordot(a, frames[j + 1], axes=(0, 0))
                # f in the frame: shift source onto the reference strip, cut
                # off, shift back; trapezoid over the interval's own bin
                contrib = lib.chi_times(block_shift(0.5 * (left + right), -c_k))
                contrib = SpectralField(contrib).shift_vertical(c_k).coeffs
                dt_phys = hs * td
                phi_new = phi + dt_phys * contrib / td
                v_acc += 0.5 * dt_phys * (phi + phi_new)
                phi = phi_new
                F += 0.5 * dt_phys * (window_mean(left, c_k) + window_mean(right, c_k))
                F_times.append(t_a + s_nodes[j + 1] * td)
                F_values.append(F)
            t_prev = grid.t_b(k)
        v_acc += (1.0 - t_prev) * phi
        F_times.append(1.0)
        F_values.append(F)
        self.F_times = np.asarray(F_times)
        self.F_values = np.asarray(F_values)

        from .spectral import wavenumbers
        k1, _ = wavenumbers(n)
        self.theta_sharp_1 = SpectralField(phi)
        self.v_sharp_1 = SpectralField((1j * k1) * v_acc)
        # average corrections preserve both endpoints up to chi_tilde * F(1)
        self.F_end = F
        self.Theta_1 = SpectralField(phi - F * lib.chi_tilde_coeffs)
        self.V_1 = self.v_sharp_1

    # -- schedules and evaluation ---------------------------------------------

    def F_at(self, t: float) -> float:
        return float(np.interp(t, self.F_times, self.F_values))

    def _assemble(self, t: float):
        """f-part coefficients (or None outside windows), its exact grid mean,
        and the twelve transported-mode schedule values at time t."""
        lib = self.lib
        strat = lib.strategy
        td = strat.grid.T_delta
        w = int(strat.grid.window_index(t))
        if w == 0:
            return None, 0.0, np.zeros(12)
        s = float(strat.grid.sigma(t))
        coeffs = self.ctrl.alpha12(s) / td
        blk = np.tensordot(self.ctrl.reduced8(s) / td, lib.reduced_frame(s), axes=(0, 0))
        full = lib.chi_times(block_shift(blk, -float(strat.D(t))))
        return full, float(full[0, 0].real), coeffs

    def _corrections(self, t: float, m_f: float):
        """chi_tilde / chi_tilde' schedule values; the first is adjusted so
        the emitted field has exactly zero grid mean."""
        lib = self.lib
        g2 = -float(lib.strategy.ybar2(t)) * self.F_at(t)
        g1 = -(m_f + g2 * lib.chi_tilde_prime_grid_mean) / lib.chi_tilde_grid_mean
        return g1, g2

    def gamma(self, t: float):
        """The fourteen schedule values at time t (right-continuous in bins)."""
        _, m_f, coeffs = self._assemble(t)
        g1, g2 = self._corrections(t, m_f)
        return np.concatenate([[g1, g2], coeffs])

    def eta_field(self, t: float) -> SpectralField:
        """The emitted control at time t, assembled from the fourteen
        schedules and the actuator library; supported in the strip exactly."""
        lib = self.lib
        full, m_f, _ = self._assemble(t)
        g1, g2 = self._corrections(t, m_f)
        out = g1 * lib.chi_tilde_coeffs + g2 * lib.chi_tilde_prime_coeffs
        if full is not None:
            out = out + full
        return SpectralField(out)

    def break_times(self, gap_samples: int = 128) -> np.ndarray:
        """Forcing discontinuities and resolution anchors: bin-edge preimages
        inside the visit windows, plus fine grids over the shift phases where
        the chi_tilde' correction pulses with the vertical strategy."""
        grid = self.lib.strategy.grid
        td = grid.T_delta
        M = self.ctrl.bins
        edges = np.arange(M + 1) / M
        times = []
        gap_grid = np.linspace(0.0, 1.0, gap_samples + 1)
        prev_end = 0.0
        for k in range(1, grid.K + 1):
            t_a = grid.t_a(k)
            times.extend(prev_end + (t_a - prev_end) * gap_grid)
            times.extend(t_a + edges * td)
            prev_end = grid.t_b(k)
        times.extend(prev_end + (1.0 - prev_end) * gap_grid)
        return np.unique(np.asarray(times))

    def schedule_table(self, samples_per_window: int = 32):
        """(times, gamma matrix) sampled on a uniform per-window grid."""
        grid = self.lib.strategy.grid
        td = grid.T_delta
        s = np.linspace(0.0, 1.0, samples_per_window + 1)
        times = np.concatenate([grid.t_a(k) + s * td for k in range(1, grid.K + 1)])
        gam = np.stack([self.gamma(float(t)) for t in times])
        return times, gam

    def export_schedule(self, path, samples_per_window: int = 32) -> None:
        times, gam = self.schedule_table(samples_per_window)
        with open(path, "w") as fh:
            fh.write("t," + ",".join(f"alpha_{l}" for l in range(1, 15)) + "\n")
            for t, row in zip(times, gam):
                fh.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")

    # -- checks -----------------------------------------------------------------

    def support_violation(self, times=None) -> float:
        """max |eta| at grid points outside the control strip."""
        lib = self.lib
        part = lib.cutoffs.partition
        x2 = TWO_PI * np.arange(lib.n) / lib.n
        outside = (x2 <= part.a) | (x2 >= part.b)
        if times is None:
            grid = lib.strategy.grid
            times = [grid.t_a(2) + 0.3 * grid.T_delta, 0.5, grid.t_b(grid.K)]
        worst = 0.0
        for t in times:
            vals = self.eta_field(float(t)).values()
            worst = max(worst, float(np.max(np.abs(vals[:, outside]), initial=0.0)))
        return worst

    def mean_violation(self, times=None) -> float:
        if times is None:
            grid = self.lib.strategy.grid
            times = np.linspace(0.0, 1.0, 37)
        return float(max(abs(self.eta_field(float(t)).mean) for t in times))


@dataclass
class LocalizedPlan:
    control: LocalizedControl
    nonlocalized: NonlocalizedControl
    e_weights: np.ndarray
    report: dict = field(default_factory=dict)
    failed: bool = False


def localized_plan(v1: SpectralField, theta1: SpectralField, lib: ModeLibrary,
                   cfg: SynthesisConfig = SynthesisConfig(),
                   samples_per_window: int = 512,
                   epsilon: float = None) -> LocalizedPlan:
    """Full localization pipeline: rescale targets with the correction weight,
    synthesize the non-localized control, compress into the strip, correct
    averages, and measure the endpoint errors of the localized linear system.
    """
    n = lib.n
    part = lib.cutoffs.partition
    strat = lib.strategy
    td = strat.grid.T_delta
    x2 = TWO_PI * np.arange(n) / n
    hd = hitting_data(part, lib.cutoffs, strat, x2)
    E = e_weight_field(hd, n)

    d1_theta1 = theta1.deriv(1, 0)
    e_d1_theta1 = SpectralField.from_values(E * d1_theta1.values())
    v_target = SpectralField((v1.coeffs - e_d1_theta1.coeffs) / td)

    ctrl = assemble_coupled_control(v_target, theta1, lib, cfg)
    loc = LocalizedControl(ctrl, samples_per_window=samples_per_window)

    v_nl, theta_nl = ctrl.linear_endpoints()
    theta_identity = sobolev_norm(loc.theta_sharp_1 - theta_nl, 0) / max(
        sobolev_norm(theta_nl, 0), 1e-300)
    rhs = SpectralField.from_values(
        E * loc.Theta_1.deriv(1, 0).values()) + td * v_nl
    v_identity = sobolev_norm(loc.v_sharp_1 - rhs, 0) / max(sobolev_norm(rhs, 0), 1e-300)

    # commutation check: E d1 theta1 = d1 (E theta1), E constant in x1
    lhs = e_d1_theta1
    rhs2 = SpectralField.from_values(E * theta1.values()).deriv(1, 0)
    commute = sobolev_norm(lhs - rhs2, 0) / max(sobolev_norm(lhs, 0), 1e-300)

    v_err = sobolev_norm(loc.V_1 - v1, 0) / max(sobolev_norm(v1, 0), 1e-300)
    th_err = sobolev_norm(loc.Theta_1 - theta1, 0) / max(sobolev_norm(theta1, 0), 1e-300)

    report = {
        "endpoint_v_error_rel": v_err,
        "endpoint_theta_error_rel": th_err,
        "endpoint_v_error_abs": sobolev_norm(loc.V_1 - v1, 0),
        "endpoint_theta_error_abs": sobolev_norm(loc.Theta_1 - theta1, 0),
        "theta_transport_identity": theta_identity,
        "v_sharp_identity": v_identity,
        "E_commutation": commute,
        "weight_sum_violation": hd.weight_sum_violation(),
        "support_violation": loc.support_violation(),
        "mean_violation": loc.mean_violation(),
        "F_end": loc.F_end,
        **{f"synthesis_{k}": v for k, v in ctrl.report.items()},
    }
    failed = False
    if epsilon is not None:
        failed = (report["endpoint_v_error_abs"] + report["endpoint_theta_error_abs"]) > epsilon
    return LocalizedPlan(control=loc, nonlocalized=ctrl, e_weights=hd.E,
                         report=report, failed=failed)
