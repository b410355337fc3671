"""Command line interface: free simulation, control synthesis, staged
steering, delta sweeps, and invariant verification.

Each command reads the block-style config, builds the pipeline, and writes
metrics, schedules, snapshots, and a manifest under the run directory.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import geometry, spectral
from .config import RunConfig, load_config
from .linear_control import synthesize_transport_control
from .localization import localized_plan
from .run_io import Pipeline, build_pipeline, run_dir, write_csv, write_manifest
from .solver import ForcingSpec, solve
from .spectral import SpectralField, random_band_limited, save_field, sobolev_norm
from .steering import SteeringProblem, plan_and_steer, sweep_delta, temperature_step


def _targets(cfg: RunConfig, n: int):
    t = cfg.targets
    rng = np.random.default_rng(t.seed)
    if t.preset == "band_limited":
        w0 = random_band_limited(n, 2, rng, norm=t.amplitude)
        theta0 = random_band_limited(n, 2, rng, norm=t.amplitude)
        wT = random_band_limited(n, 2, rng, norm=t.amplitude)
        thetaT = random_band_limited(n, 2, rng, norm=t.amplitude)
    elif t.preset == "files":
        from .spectral import load_field
        w0 = load_field(t.w0_path)
        theta0 = load_field(t.theta0_path)
        wT = load_field(t.wT_path)
        thetaT = load_field(t.thetaT_path)
    else:
        raise ValueError(f"unknown targets preset {t.preset!r}")
    return w0, theta0, wT, thetaT


def cmd_simulate(cfg: RunConfig) -> int:
    pipe = build_pipeline(cfg)
    n = cfg.grid.n
    w0, theta0, _, _ = _targets(cfg, n)
    out = run_dir(cfg, "simulate")
    traj = solve(w0, theta0, ForcingSpec.zero(n), T=cfg.physics.T,
                 nu=cfg.physics.nu, tau=cfg.physics.tau, m=cfg.grid.m_max,
                 record_times=np.linspace(0, cfg.physics.T, 65))
    traj.write_metrics(f"{out}/metrics.csv")
    save_field(f"{out}/w_final.txt", traj.final.w)
    save_field(f"{out}/theta_final.txt", traj.final.theta)
    write_manifest(out, cfg, pipe)
    print(f"simulate: wrote {out}/metrics.csv")
    return 0


def cmd_synthesize(cfg: RunConfig) -> int:
    pipe = build_pipeline(cfg)
    n = cfg.grid.n
    _, _, wT, thetaT = _targets(cfg, n)
    out = run_dir(cfg, "synthesize")
    plan = localized_plan(wT.project_mean_free(), thetaT.project_mean_free(),
                          pipe.lib, pipe.synthesis,
                          samples_per_window=cfg.synthesis.samples_per_window)
    plan.control.export_schedule(f"{out}/schedule_unit.csv")
    plan.nonlocalized.export_coefficients(f"{out}/coefficients_12.csv")
    rows = [(k, float(v)) for k, v in plan.report.items() if isinstance(v, (int, float))]
    write_csv(f"{out}/report.csv", "quantity,value", rows)
    eta_mid = plan.control.eta_field(0.5)
    save_field(f"{out}/eta_mid.txt", eta_mid)
    write_manifest(out, cfg, pipe, extra={"plan_report": plan.report})
    print(f"synthesize: endpoint errors v={plan.report['endpoint_v_error_rel']:.3g} "
          f"theta={plan.report['endpoint_theta_error_rel']:.3g}; wrote {out}")
    return 0


def cmd_steer(cfg: RunConfig) -> int:
    pipe = build_pipeline(cfg)
    n = cfg.grid.n
    w0, theta0, wT, thetaT = _targets(cfg, n)
    out = run_dir(cfg, "steer")
    prob = SteeringProblem(nu=cfg.physics.nu, tau=cfg.physics.tau, T=cfg.physics.T,
                           m=max(2, cfg.grid.m_max // 2),
                           w0=w0, wT=wT.project_mean_free(),
                           theta0=theta0, thetaT=thetaT.project_mean_free())
    deltas = cfg.ladder.deltas
    res = plan_and_steer(prob, pipe.lib, deltas=deltas,
                         delta0=cfg.ladder.delta0 or None, syn=pipe.synthesis,
                         samples_per_window=cfg.synthesis.samples_per_window)
    res.plan.write_schedule(f"{out}/schedule.csv")
    save_field(f"{out}/w_final.txt", res.w_end)
    save_field(f"{out}/theta_final.txt", res.theta_end)
    write_csv(f"{out}/ladder.csv", "delta,error,blew_up",
              [(r["delta"], r["error"], int(r["blew_up"])) for r in res.ladder])
    write_manifest(out, cfg, pipe, extra={
        "error": res.error, "baseline_error": res.baseline_error,
        "reduction_check": res.reduction_check,
        "xi_residual": res.plan.xi_residual,
    })
    print(f"steer: error {res.error:.4g} vs baseline {res.baseline_error:.4g}; wrote {out}")
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    pipe = build_pipeline(cfg)
    n = cfg.grid.n
    w0, theta0, _, thetaT = _targets(cfg, n)
    out = run_dir(cfg, "sweep")

    def runner(delta):
        res = temperature_step(w0, theta0, thetaT.project_mean_free(), delta,
                               pipe.lib, cfg.physics.nu, cfg.physics.tau,
                               m=2, syn=pipe.synthesis,
                               samples_per_window=cfg.synthesis.samples_per_window)
        return res.discrepancy

    table = sweep_delta("temperature_step", cfg.ladder.deltas, runner)
    write_csv(f"{out}/sweep.csv", "delta,discrepancy", table["rows"])
    write_manifest(out, cfg, pipe, extra={"slope": table["slope"]})
    print(f"sweep: log-log slope {table['slope']:.3f}; wrote {out}")
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    pipe = build_pipeline(cfg)
    n = cfg.grid.n
    rng = np.random.default_rng(0)
    ok = True

    z = random_band_limited(n, n // 4, rng)
    u = spectral.inverse_curl(z, (0.3, -0.2))
    err = sobolev_norm(spectral.curl(u) - z, 0)
    ok &= _report("curl o inverse_curl = id", err, 1e-12)

    rep = geometry.verify_cutoffs(pipe.cutoffs, pipe.partition)
    ok &= _report("partition-of-unity identity", rep["partition_identity_max_violation"], 1e-12)
    ok &= _report("cutoff support", rep["support_max_outside_omega"], 1e-12)
    ok &= _report("chi_tilde normalization", rep["chi_tilde_integral_error"], 1e-10)

    strat = pipe.strategy
    ok &= _report("closed integral curves D(1)", abs(float(strat.D(1.0))), 1e-15)
    pts = rng.uniform(0, 2 * np.pi, (50, 2))
    fwd = pipe.gf.flow(pts, 0.0, 1.0, substeps=256)
    back = pipe.gf.flow(fwd, 1.0, 0.0, substeps=256)
    rt = float(np.max(np.abs(np.mod(back - pts + np.pi, 2 * np.pi) - np.pi)))
    ok &= _report("generating-flow round trip", rt, 1e-10)

    z1 = random_band_limited(n, 2, rng)
    _, srep = synthesize_transport_control(z1, pipe.lib, M=cfg.synthesis.M,
                                           ridge=0.0, k_cut=None)
    ok &= _report("transport synthesis residual (ridge 0)", srep.residual_rel, 0.15)
    print("verify:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


def _report(name: str, value: float, tol: float) -> bool:
    status = "ok" if value <= tol else "FAIL"
    print(f"  [{status}] {name}: {value:.3e} (tol {tol:.0e})")
    return value <= tol


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="thermosteer",
                                     description="strip-localized temperature control laboratory")
    parser.add_argument("command",
                        choices=["simulate", "synthesize", "steer", "sweep", "verify"])
    parser.add_argument("--config", default=None, help="block-style config file")
    args = parser.parse_args(argv)
    cfg = load_config(args.config) if args.config else RunConfig()
    return {"simulate": cmd_simulate, "synthesize": cmd_synthesize,
            "steer": cmd_steer, "sweep": cmd_sweep, "verify": cmd_verify}[args.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
