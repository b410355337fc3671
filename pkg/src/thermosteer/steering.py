"""Staged steering of the nonlinear system by scaled localized controls.

The unit-time localized control and the vertical strategy compress into a
short window of length delta through

    H_delta(., t) = delta^-2 eta(., t/delta),   A(t) = delta^-1 ybar(t/delta),

which drives the temperature toward a target while returning the vorticity
(small-time large-control step).  Vorticity is steered separately by a
prepared initial temperature -delta^-1 xi whose buoyancy integrates to -d1 xi
(initial-data step).  The full plan runs free flow, an energize step toward a
xi-loaded temperature, a free drift, a calm step toward the target
temperature, and a free tail; the stage lengths are picked by a geometric
ladder search.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .flows import ConvectionStrategy
from .linear_control import SynthesisConfig
from .localization import LocalizedPlan, localized_plan
from .modes import ModeLibrary
from .solver import BlowUpError, ForcingSpec, Trajectory, solve
from .spectral import (
    SpectralField,
    VelocityField,
    inverse_curl,
    measured_divcurl_constant,
    sobolev_norm,
)

TWO_PI = 2.0 * np.pi


@dataclass
class SteeringProblem:
    nu: float
    tau: float
    T: float
    m: int
    w0: SpectralField
    wT: SpectralField
    theta0: SpectralField
    thetaT: SpectralField
    forcing: Optional[ForcingSpec] = None
    epsilon: float = None

    def external(self, n: int) -> ForcingSpec:
        return self.forcing if self.forcing is not None else ForcingSpec.zero(n)


def scaled_forcing(loc, strategy: ConvectionStrategy, delta: float, n: int,
                   base: ForcingSpec = None, t0: float = 0.0) -> ForcingSpec:
    """Forcing for a small-time stage: the delta-compressed control in the
    temperature channel and the rescaled vertical strategy as mean velocity."""

    def h2(t):
        s = min(max((t - t0) / delta, 0.0), 1.0)
        return loc.eta_field(s).coeffs / delta**2

    def A(t):
        s = min(max((t - t0) / delta, 0.0), 1.0)
        return np.array([0.0, float(strategy.ybar2(s)) / delta])

    def A_int(t):
        s = min(max((t - t0) / delta, 0.0), 1.0)
        return np.array([0.0, float(strategy.D(s))])

    breaks = t0 + delta * loc.break_times()
    if base is None:
        return ForcingSpec(n, h2=h2, A=A, A_int=A_int, breaks=breaks)
    out = base.add_h2(h2, breaks=breaks)
    out._A = A
    out.A_int = A_int
    return out


@dataclass
class StepResult:
    w_end: SpectralField
    theta_end: SpectralField
    discrepancy: float
    w_discrepancy: float
    theta_discrepancy: float
    plan: Optional[LocalizedPlan] = None
    blew_up: bool = False
    details: dict = field(default_factory=dict)


def homogeneous_linearized_endpoint(w0: SpectralField, theta0: SpectralField,
                                    rho: float):
    """Closed-form endpoint of the force-free linearized system started from
    (w0, rho theta0): the temperature returns to rho theta0 and the vorticity
    gains the time integral of the transported buoyancy, w0 + rho d1 theta0."""
    v1 = SpectralField(w0.coeffs + rho * theta0.deriv(1, 0).coeffs)
    return v1, SpectralField(rho * theta0.coeffs)


def temperature_step(w0: SpectralField, theta0: SpectralField, theta1: SpectralField,
                     delta: float, lib: ModeLibrary, nu: float, tau: float,
                     m: int = 2, syn: SynthesisConfig = None,
                     samples_per_window: int = 256,
                     forcing: ForcingSpec = None, t0: float = 0.0,
                     cached_plan: LocalizedPlan = None,
                     record_velocity_at=()) -> StepResult:
    """Steer the temperature to theta1 in time delta while returning the
    vorticity to w0 (scaled localized control).  theta1 must be mean-free up
    to the mean already carried by theta0."""
    n = lib.n
    syn = syn or SynthesisConfig()
    rho = delta
    v_tilde_1, _ = homogeneous_linearized_endpoint(w0, theta0, rho)
    v_target = SpectralField(w0.coeffs - v_tilde_1.coeffs)   # = -rho d1 theta0
    th_target = SpectralField(rho * (theta1.coeffs - theta0.coeffs))
    th_target = th_target.project_mean_free()
    plan = cached_plan
    if plan is None:
        plan = localized_plan(v_target, th_target, lib, syn,
                              samples_per_window=samples_per_window)
    base = forcing if forcing is not None else ForcingSpec.zero(n)
    spec = scaled_forcing(plan.control, lib.strategy, delta, n, base=base, t0=t0)
    try:
        traj = solve(w0, theta0, spec, T=delta, nu=nu, tau=tau, m=m,
                     record_times=[t0, t0 + delta], t0=t0,
                     record_velocity_at=record_velocity_at)
    except BlowUpError as exc:
        return StepResult(w0, theta0, np.inf, np.inf, np.inf, plan=plan,
                          blew_up=True, details={"blowup_t": exc.t})
    w_end, th_end = traj.final.w, traj.final.theta
    wd = sobolev_norm(w_end - w0, m - 1)
    td = sobolev_norm(th_end - theta1, m)
    return StepResult(w_end, th_end, wd + td, wd, td, plan=plan,
                      details={"trajectory": traj})


def choose_xi(w_tilde0: SpectralField, wT: SpectralField, m: int = 2):
    """Mean-free profile xi with d1 xi = w_tilde0 - wT where representable;
    the k1 = 0 remainder cannot be generated and is reported."""
    diff = w_tilde0.coeffs - wT.coeffs
    n = diff.shape[0]
    from .spectral import wavenumbers
    k1, _ = wavenumbers(n)
    xi = np.zeros_like(diff)
    nz = np.broadcast_to(k1 != 0, diff.shape)
    xi[nz] = diff[nz] / (1j * np.broadcast_to(k1, diff.shape)[nz])
    resid = np.zeros_like(diff)
    resid[0, :] = diff[0, :]
    return SpectralField(xi), sobolev_norm(SpectralField(resid), m - 1)


def vorticity_step(w0: SpectralField, theta0: SpectralField, xi: SpectralField,
                   delta: float, nu: float, tau: float, m: int = 2,
                   forcing: ForcingSpec = None, t0: float = 0.0) -> StepResult:
    """Free run from the xi-loaded temperature: w(delta) approaches
    w0 - d1 xi as delta shrinks."""
    n = w0.n
    theta_init = SpectralField(theta0.coeffs - xi.coeffs / delta)
    spec = forcing if forcing is not None else ForcingSpec.zero(n)
    limit = SpectralField(w0.coeffs - xi.deriv(1, 0).coeffs)
    try:
        traj = solve(w0, theta_init, spec, T=delta, nu=nu, tau=tau, m=m,
                     record_times=[t0, t0 + delta], t0=t0)
    except BlowUpError as exc:
        return StepResult(w0, theta0, np.inf, np.inf, np.inf, blew_up=True,
                          details={"blowup_t": exc.t})
    w_end, th_end = traj.final.w, traj.final.theta
    wd = sobolev_norm(w_end - limit, m - 1)
    return StepResult(w_end, th_end, wd, wd, 0.0, details={"limit": limit})


@dataclass
class SteeringPlan:
    T: float
    delta0: float
    delta1: float
    delta2: float
    delta3: float
    energize: LocalizedPlan
    calm: LocalizedPlan
    lib: ModeLibrary
    xi_residual: float

    @property
    def window1(self):
        t0 = self.T - self.delta0
        return (t0, t0 + self.delta1)

    @property
    def window2(self):
        t0 = self.T - self.delta0 + self.delta1 + self.delta2
        return (t0, t0 + self.delta3)

    def gamma(self, t: float) -> float:
        """Sawtooth reparametrization onto [0,1] over the two active windows."""
        (a1, b1), (a2, b2) = self.window1, self.window2
        if a1 <= t <= b1:
            return (t - a1) / self.delta1
        if a2 <= t <= b2:
            return (t - a2) / self.delta3
        return 0.0

    def gamma_l(self, t: float) -> np.ndarray:
        """The fourteen scaled schedules; zero outside the active windows."""
        (a1, b1), (a2, b2) = self.window1, self.window2
        if a1 <= t <= b1:
            return self.energize.control.gamma((t - a1) / self.delta1) / self.delta1**2
        if a2 <= t <= b2:
            return self.calm.control.gamma((t - a2) / self.delta3) / self.delta3**2
        return np.zeros(14)

    def aleph(self, t: float) -> float:
        """Vertical mean-velocity schedule (the rescaled strategy)."""
        strat = self.lib.strategy
        (a1, b1), (a2, b2) = self.window1, self.window2
        if a1 <= t <= b1:
            return float(strat.ybar2((t - a1) / self.delta1)) / self.delta1
        if a2 <= t <= b2:
            return float(strat.ybar2((t - a2) / self.delta3)) / self.delta3
        return 0.0

    def aleph_prime(self, t: float) -> float:
        strat = self.lib.strategy
        (a1, b1), (a2, b2) = self.window1, self.window2
        if a1 <= t <= b1:
            return float(strat.ybar2_dt((t - a1) / self.delta1)) / self.delta1**2
        if a2 <= t <= b2:
            return float(strat.ybar2_dt((t - a2) / self.delta3)) / self.delta3**2
        return 0.0

    def aleph_second(self, t: float) -> float:
        strat = self.lib.strategy
        (a1, b1), (a2, b2) = self.window1, self.window2
        if a1 <= t <= b1:
            return float(strat.ybar2_dt2((t - a1) / self.delta1)) / self.delta1**3
        if a2 <= t <= b2:
            return float(strat.ybar2_dt2((t - a2) / self.delta3)) / self.delta3**3
        return 0.0

    def gamma_bar(self, t: float) -> float:
        return self.aleph_prime(t)

    def eta(self, t: float) -> SpectralField:
        """The emitted temperature control sum(gamma_l(t) zeta_l(., gamma(t)))."""
        (a1, b1), (a2, b2) = self.window1, self.window2
        if a1 <= t <= b1:
            s = (t - a1) / self.delta1
            return SpectralField(self.energize.control.eta_field(s).coeffs / self.delta1**2)
        if a2 <= t <= b2:
            s = (t - a2) / self.delta3
            return SpectralField(self.calm.control.eta_field(s).coeffs / self.delta3**2)
        return SpectralField.zeros(self.lib.n)

    def schedule_rows(self, samples_per_window: int = 64):
        """(t, gamma_bar, gamma, gamma_1..14) rows over the active windows."""
        rows = []
        for (a, bnd, d) in ((*self.window1, self.delta1), (*self.window2, self.delta3)):
            for s in np.linspace(0.0, 1.0, samples_per_window + 1):
                t = a + s * d
                rows.append((t, self.gamma_bar(t), self.gamma(t), *self.gamma_l(t)))
        return rows

    def write_schedule(self, path, samples_per_window: int = 64) -> None:
        with open(path, "w") as fh:
            fh.write("t,gamma_bar,gamma," + ",".join(f"gamma_{l}" for l in range(1, 15)) + "\n")
            for row in self.schedule_rows(samples_per_window):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


@dataclass
class SteeringResult:
    plan: SteeringPlan
    w_end: SpectralField
    theta_end: SpectralField
    error: float
    baseline_error: float
    ladder: list
    reduction_check: dict
    trajectory: Optional[Trajectory] = None


def plan_and_steer(problem: SteeringProblem, lib: ModeLibrary,
                   deltas=(0.1, 0.05, 0.025), delta0: float = None,
                   delta2: float = None, syn: SynthesisConfig = None,
                   syn_calm: SynthesisConfig = None,
                   samples_per_window: int = 256, refine_iters: int = 0,
                   record_velocity_at=()) -> SteeringResult:
    """Run the staged plan for each ladder delta and keep the best.

    Stage structure on [0, T]: free flow to T - delta0; energize toward the
    xi-loaded temperature in time delta1; free drift for delta2 (the buoyancy
    integrates the vorticity correction); calm toward the target temperature
    in time delta3; free tail.  The drift length delta2 is held fixed while
    delta1 = delta3 walk the ladder: the energize target (delta1/delta2) xi
    then shrinks with the ladder, which is what makes the scaled runs
    converge.
    """
    n = lib.n
    m = problem.m
    syn = syn or SynthesisConfig()
    syn_calm = syn_calm or syn
    ext = problem.external(n)
    delta0 = delta0 if delta0 is not None else min(0.65 * problem.T, 0.65)
    delta2 = delta2 if delta2 is not None else min(0.2, delta0 / 3.5)

    stage0 = solve(problem.w0, problem.theta0, ext, T=problem.T - delta0,
                   nu=problem.nu, tau=problem.tau, m=m,
                   record_times=[0.0, problem.T - delta0])
    w_t0, th_t0 = stage0.final.w, stage0.final.theta

    baseline = solve(w_t0, th_t0, ext, T=delta0, nu=problem.nu, tau=problem.tau,
                     m=m, t0=problem.T - delta0,
                     record_times=[problem.T - delta0, problem.T])
    baseline_error = (sobolev_norm(baseline.final.w - problem.wT, m - 1)
                      + sobolev_norm(baseline.final.theta - problem.thetaT, m))

    xi, xi_resid = choose_xi(w_t0, problem.wT, m)

    theta_star = SpectralField(th_t0.coeffs - xi.coeffs / delta2)
    ladder_rows = []
    best = None
    for delta in deltas:
        if not 0.0 < delta < delta0 / 3.0 or delta2 >= delta0 / 3.0:
            raise ValueError(f"stage lengths ({delta}, {delta2}) must lie in (0, delta0/3)")
        t_cursor = problem.T - delta0
        energize = temperature_step(w_t0, th_t0, theta_star, delta, lib,
                                    problem.nu, problem.tau, m=m, syn=syn,
                                    samples_per_window=samples_per_window,
                                    forcing=ext, t0=t_cursor)
        if energize.blew_up:
            ladder_rows.append({"delta": delta, "error": np.inf, "blew_up": True})
            continue
        t_cursor += delta
        try:
            drift = solve(energize.w_end, energize.theta_end, ext, T=delta2,
                          nu=problem.nu, tau=problem.tau, m=m, t0=t_cursor,
                          record_times=[t_cursor, t_cursor + delta2])
        except BlowUpError:
            ladder_rows.append({"delta": delta, "error": np.inf, "blew_up": True})
            continue
        t_cursor += delta2
        calm = temperature_step(drift.final.w, drift.final.theta, problem.thetaT,
                                delta, lib, problem.nu, problem.tau, m=m, syn=syn_calm,
                                samples_per_window=samples_per_window,
                                forcing=ext, t0=t_cursor)
        if calm.blew_up:
            ladder_rows.append({"delta": delta, "error": np.inf, "blew_up": True})
            continue
        t_cursor += delta
        tail_T = problem.T - t_cursor
        try:
            tail = solve(calm.w_end, calm.theta_end, ext, T=tail_T,
                         nu=problem.nu, tau=problem.tau, m=m, t0=t_cursor,
                         record_times=[t_cursor, problem.T])
        except BlowUpError:
            ladder_rows.append({"delta": delta, "error": np.inf, "blew_up": True})
            continue
        err = (sobolev_norm(tail.final.w - problem.wT, m - 1)
               + sobolev_norm(tail.final.theta - problem.thetaT, m))
        row = {"delta": delta, "error": err, "blew_up": False,
               "energize": energize, "calm": calm,
               "w_end": tail.final.w, "theta_end": tail.final.theta}
        ladder_rows.append(row)
        if best is None or err < best["error"]:
            best = row

    if best is None:
        raise RuntimeError("no ladder point completed without blow-up")

    # optional refinement: re-run the winning stage lengths with the targets
    # shifted by the measured overshoot, a one-shot Newton correction that
    # attacks the residual modes through the nonlinearity (off by default)
    wT_adj, thT_adj = problem.wT, problem.thetaT
    for _ in range(refine_iters):
        wT_adj = SpectralField(wT_adj.coeffs + (problem.wT.coeffs - best["w_end"].coeffs))
        thT_adj = SpectralField(thT_adj.coeffs + (problem.thetaT.coeffs - best["theta_end"].coeffs))
        delta = best["delta"]
        t_cursor = problem.T - delta0
        xi_adj, _ = choose_xi(w_t0, wT_adj, m)
        theta_star_adj = SpectralField(th_t0.coeffs - xi_adj.coeffs / delta2)
        try:
            energize = temperature_step(w_t0, th_t0, theta_star_adj, delta, lib,
                                        problem.nu, problem.tau, m=m, syn=syn,
                                        samples_per_window=samples_per_window,
                                        forcing=ext, t0=t_cursor)
            t_cursor += delta
            drift = solve(energize.w_end, energize.theta_end, ext, T=delta2,
                          nu=problem.nu, tau=problem.tau, m=m, t0=t_cursor,
                          record_times=[t_cursor, t_cursor + delta2])
            t_cursor += delta2
            calm = temperature_step(drift.final.w, drift.final.theta, thT_adj,
                                    delta, lib, problem.nu, problem.tau, m=m, syn=syn_calm,
                                    samples_per_window=samples_per_window,
                                    forcing=ext, t0=t_cursor)
            t_cursor += delta
            tail = solve(calm.w_end, calm.theta_end, ext, T=problem.T - t_cursor,
                         nu=problem.nu, tau=problem.tau, m=m, t0=t_cursor,
                         record_times=[t_cursor, problem.T])
        except BlowUpError:
            break
        err = (sobolev_norm(tail.final.w - problem.wT, m - 1)
               + sobolev_norm(tail.final.theta - problem.thetaT, m))
        ladder_rows.append({"delta": delta, "error": err, "blew_up": False,
                            "refined": True})
        if err < best["error"]:
            best = {"delta": delta, "error": err, "blew_up": False,
                    "energize": energize, "calm": calm,
                    "w_end": tail.final.w, "theta_end": tail.final.theta}
        else:
            break

    delta = best["delta"]
    plan = SteeringPlan(T=problem.T, delta0=delta0, delta1=delta, delta2=delta2,
                        delta3=delta, energize=best["energize"].plan,
                        calm=best["calm"].plan, lib=lib, xi_residual=xi_resid)

    # reduction inequality with the measured grid constant: velocity-form
    # error is controlled by the vorticity-form error
    u_end = inverse_curl(best["w_end"].project_mean_free(), (0.0, 0.0))
    u_target = inverse_curl(problem.wT.project_mean_free(), (0.0, 0.0))
    c0 = measured_divcurl_constant(n, m)
    du1 = SpectralField(u_end.u1().coeffs - u_target.u1().coeffs)
    du2 = SpectralField(u_end.u2().coeffs - u_target.u2().coeffs)
    vel_err = float(np.hypot(sobolev_norm(du1, m), sobolev_norm(du2, m)))
    th_err = sobolev_norm(best["theta_end"] - problem.thetaT, m)
    w_err = sobolev_norm(best["w_end"] - problem.wT, m - 1)
    red = {
        "C0_hat": c0,
        "lhs": vel_err + th_err,
        "rhs": c0 * w_err + th_err,
        "holds": vel_err + th_err <= c0 * w_err + th_err + 1e-12,
    }

    return SteeringResult(plan=plan, w_end=best["w_end"], theta_end=best["theta_end"],
                          error=best["error"], baseline_error=baseline_error,
                          ladder=[{k: r[k] for k in ("delta", "error", "blew_up")}
                                  for r in ladder_rows],
                          reduction_check=red)


def emit_velocity_form(plan: SteeringPlan, option: int, times,
                       velocity_snapshots: dict = None, tau: float = None):
    """Physical control fields realizing the steering in velocity form.

    Option 1: a single strip-supported temperature control including the
    explicit vertical-velocity feedback term; needs u2 along the run.
    Option 2: the fourteen-schedule temperature control plus a separate
    one-dimensional control in the second velocity component.
    """
    lib = plan.lib
    n = lib.n
    chi_t = lib.chi_tilde_coeffs
    chi_tp = lib.chi_tilde_prime_coeffs
    x2 = TWO_PI * np.arange(n) / n
    chi_tpp_row = lib.cutoffs.chi_tilde_second(x2)
    chi_tpp = np.zeros((n, n), dtype=np.complex128)
    chi_tpp[0, :] = np.fft.fft(chi_tpp_row) / n

    out = []
    for t in times:
        eta = plan.eta(float(t)).coeffs
        if option == 1:
            if velocity_snapshots is None:
                raise ValueError("option 1 needs the trajectory's u2 snapshots")
            al_p = plan.aleph_prime(float(t))
            al_pp = plan.aleph_second(float(t))
            field_c = eta + al_pp * chi_t - tau * al_p * chi_tpp
            u2 = velocity_snapshots[float(t)].u2()
            chi_tp_vals = np.real(np.fft.ifft2(chi_tp)) * n * n
            feedback = SpectralField.from_values(u2.values() * chi_tp_vals * al_p)
            out.append((float(t), SpectralField(field_c + feedback.coeffs)))
        elif option == 2:
            bar_eta = SpectralField(plan.gamma_bar(float(t)) * chi_t)
            out.append((float(t), SpectralField(eta), bar_eta))
        else:
            raise ValueError("option must be 1 or 2")
    return out


def sweep_delta(kind: str, deltas, runner) -> dict:
    """Run `runner(delta) -> discrepancy` over a ladder and fit a log-log slope."""
    rows = []
    for d in deltas:
        rows.append((float(d), float(runner(float(d)))))
    arr = np.array(rows)
    finite = np.isfinite(arr[:, 1]) & (arr[:, 1] > 0)
    slope = np.nan
    if finite.sum() >= 2:
        slope = float(np.polyfit(np.log(arr[finite, 0]), np.log(arr[finite, 1]), 1)[0])
    return {"kind": kind, "rows": rows, "slope": slope}
