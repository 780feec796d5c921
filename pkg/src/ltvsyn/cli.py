"""Batch front-end: configuration-driven synthesis/analysis pipelines.

Every command reads one JSON config (CLI flags override the matching keys),
writes its artifacts into the output directory and prints a one-line result.
Outputs are deterministic for a fixed config and seed.  Exit codes:
2 invalid configuration, 3 numerical failure, 4 infeasibility verdict.
"""

from __future__ import annotations

import json
import os
import sys

import click
import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import benchmarks, launcher as ln  # noqa: E402
from .errors import ConfigError, InfeasibleError, LtvSynError, NumericalError  # noqa: E402
from .hinfsyn import (  # noqa: E402
    assemble_synthesis_data,
    default_ic_weight,
    hinf_bisect,
)
from .linearize import trajectory_residual  # noqa: E402
from .ltvcore import (  # noqa: E402
    Signal,
    TimeGrid,
    l2norm,
    lft_lower,
    lft_upper,
    load_system,
    save_system,
    simulate,
)
from .robsyn import SynthSettings, robust_synthesize, write_history_csv  # noqa: E402
from .wcgain import WcGainSettings, wc_gain  # noqa: E402

plt.rcParams["svg.hashsalt"] = "ltvsyn"

_FMT = "%.12g"


def _load_config(path, **overrides):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    for key, val in overrides.items():
        if val is not None:
            cfg[key] = val
    cfg.setdefault("seed", 0)
    if "out" not in cfg:
        raise ConfigError("config needs an 'out' directory (or pass --out)")
    return cfg


def _outdir(cfg):
    path = cfg["out"]
    os.makedirs(path, exist_ok=True)
    return path


def _write_summary(out, payload):
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _save_svg(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _build_launcher(cfg):
    vehicle = cfg.get("vehicle", "synthetic")
    if vehicle == "synthetic":
        vd = ln.VehicleData.synthetic()
    else:
        if not os.path.exists(vehicle):
            raise ConfigError(f"vehicle table {vehicle} not found")
        vd = ln.VehicleData.load(vehicle)
    horizon = cfg.get("horizon", [25.0, 80.0])
    if not (vd.times[0] <= horizon[0] < horizon[1] <= vd.times[-1]):
        raise ConfigError("horizon must lie inside the vehicle tables")
    dt = float(cfg.get("grid_dt", 0.25))
    traj = ln.gravity_turn(vd, t_span=tuple(horizon), dt=dt)
    b_rho = float(cfg.get("b_rho", 20.0))
    ext = ln.build_pitch_ltv(vd, traj, b_rho=b_rho)
    ws = ln.build_weights()
    gp, pidx = ln.build_generalized_plant(ext, ws)
    return {"vd": vd, "traj": traj, "ext": ext, "weights": ws, "gp": gp,
            "pseudo_index": pidx, "b_rho": np.array([b_rho]),
            "label": "synthetic vehicle dataset"}


def _build_system(cfg):
    """Resolve the 'system' key to (plant, b_rho, pseudo_index, extras)."""
    spec = cfg.get("system", "launcher")
    if spec == "launcher":
        parts = _build_launcher(cfg)
        return parts["gp"], parts["b_rho"], parts["pseudo_index"], parts
    if spec == "toy":
        plant, b, pidx = benchmarks.toy_uncertain_plant()
        return plant, np.array([b]), pidx, {"label": "bundled toy plant"}
    if spec == "scalar":
        sysm, b, Q = benchmarks.scalar_uncertain_loop()
        return sysm, np.array([b]), 1, {"label": "bundled scalar loop",
                                        "Q": Q}
    if isinstance(spec, dict) and "system_dir" in spec:
        if not os.path.isdir(spec["system_dir"]):
            raise ConfigError(f"system directory {spec['system_dir']} missing")
        plant = load_system(spec["system_dir"])
        b = np.atleast_1d(np.asarray(spec.get("b_rho", 0.0), float))
        pidx = spec.get("pseudo_index")
        return plant, b, pidx, {"label": "user system"}
    raise ConfigError(f"unknown system spec {spec!r}")


def _ic_weight(plant, pidx, extras):
    if "Q" in extras:
        return extras["Q"]
    return default_ic_weight(plant.nx, pidx)


def _analysis_settings(cfg):
    a = cfg.get("analysis", {})
    st = WcGainSettings(
        tol=float(a.get("tol", 5e-5)),
        alternations=int(a.get("alternations", 5)),
        lmi_points=int(a.get("lmi_points", 25)),
        spline_points=int(a.get("spline_points", 10)),
        gamma_cap=float(cfg.get("gamma_cap", a.get("gamma_cap", 1e6))),
    )
    if st.alternations < 1 or st.lmi_points < st.spline_points:
        raise ConfigError("invalid analysis settings")
    return st


def _synth_settings(cfg):
    s = cfg.get("synthesis", {})
    rng = s.get("gamma_range", [1e-2, 1e4])
    return SynthSettings(gamma_range=(float(rng[0]), float(rng[1])),
                         tol=float(s.get("tol", 1e-3)))


def _export_certificate(out, res, label):
    cert = os.path.join(out, "certificate")
    os.makedirs(cert, exist_ok=True)
    P = res.storage
    flat = P.samples.reshape(P.grid.n, -1)
    n = P.shape[0]
    header = "t," + ",".join(f"P_{i+1}{j+1}" for i in range(n)
                             for j in range(n))
    np.savetxt(os.path.join(cert, "storage.csv"),
               np.column_stack([P.grid.points, flat]), delimiter=",",
               header=header, comments="", fmt=_FMT)
    manifest = {
        "kind": "worst-case-gain-certificate",
        "label": label,
        "gamma": res.gamma,
        "lam": res.lam.tolist(),
        "bounds": res.b_vec.tolist(),
        "margins": res.margins,
        "states": n,
    }
    with open(os.path.join(cert, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _dispatch(fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except (ConfigError, click.UsageError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except InfeasibleError as exc:
        click.echo(f"infeasible: {exc}", err=True)
        sys.exit(4)
    except LtvSynError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(3)


@click.group()
def main():
    """Finite-horizon robust LTV synthesis toolkit."""


_config_opt = click.option("--config", "config_path", required=True,
                           type=click.Path(), help="JSON run configuration")
_out_opt = click.option("--out", default=None, help="output directory")
_seed_opt = click.option("--seed", type=int, default=None)
_cap_opt = click.option("--gamma-cap", "gamma_cap", type=float, default=None)
_jobs_opt = click.option("--jobs", type=int, default=1,
                         help="worker cap for case-parallel stages")


@main.command("linearize")
@_config_opt
@_out_opt
@_seed_opt
def cmd_linearize(config_path, out, seed):
    """Build the reference trajectory and the extended uncertain pitch model."""

    def run():
        cfg = _load_config(config_path, out=out, seed=seed)
        parts = _build_launcher(cfg)
        outdir = _outdir(cfg)
        parts["vd"].save(os.path.join(outdir, "vehicle.csv"))
        ln.save_trajectory(parts["traj"], os.path.join(outdir, "trajectory.csv"))
        save_system(parts["ext"].sys, os.path.join(outdir, "plant"))
        model = ln.launcher_model(parts["vd"])
        res = trajectory_residual(model, parts["traj"])
        _write_summary(outdir, {
            "command": "linearize",
            "label": parts["label"],
            "grid_points": parts["traj"].grid.n,
            "horizon": [parts["traj"].grid.t0, parts["traj"].grid.t1],
            "trajectory_residual": res,
            "b_rho": float(parts["b_rho"][0]),
            "dims": {k: int(v) for k, v in parts["ext"].sys.dims.items()},
        })
        click.echo(f"extended plant written to {outdir} (residual {res:.2e})")

    _dispatch(run)


@main.command("synth-nominal")
@_config_opt
@_out_opt
@_seed_opt
@_cap_opt
def cmd_synth_nominal(config_path, out, seed, gamma_cap):
    """Two-Riccati synthesis with the uncertainty frozen at its bound."""

    def run():
        cfg = _load_config(config_path, out=out, seed=seed,
                           gamma_cap=gamma_cap)
        plant, b, pidx, extras = _build_system(cfg)
        if plant.nu == 0 or plant.ny == 0:
            raise ConfigError("system has no control/measurement channels")
        Q = _ic_weight(plant, pidx, extras)
        synth = _synth_settings(cfg)
        data = assemble_synthesis_data(plant, b_rho=b, Q=Q, pseudo_index=pidx)
        res = hinf_bisect(data, gamma_range=synth.gamma_range, tol=synth.tol)
        outdir = _outdir(cfg)
        save_system(res.controller, os.path.join(outdir, "controller"))
        _write_summary(outdir, {
            "command": "synth-nominal",
            "label": extras.get("label", ""),
            "gamma": res.gamma,
            "ic_margin": res.report.ic_margin,
            "coupling_margin": res.report.coupling_margin,
            "probes": [[g, bool(f)] for g, f, _ in res.history],
        })
        click.echo(f"nominal synthesis done: gamma = {res.gamma:.6g}")

    _dispatch(run)


@main.command("synth-robust")
@_config_opt
@_out_opt
@_seed_opt
@_cap_opt
def cmd_synth_robust(config_path, out, seed, gamma_cap):
    """Iterative scaled synthesis with certified worst-case bounds."""

    def run():
        cfg = _load_config(config_path, out=out, seed=seed,
                           gamma_cap=gamma_cap)
        plant, b, pidx, extras = _build_system(cfg)
        if plant.nu == 0 or plant.ny == 0:
            raise ConfigError("system has no control/measurement channels")
        Q = _ic_weight(plant, pidx, extras)
        i_max = int(cfg.get("synthesis", {}).get("i_max", 4))
        res = robust_synthesize(
            plant, b, Q, i_max=i_max, pseudo_index=pidx,
            synth=_synth_settings(cfg), analysis=_analysis_settings(cfg),
        )
        outdir = _outdir(cfg)
        save_system(res.controller, os.path.join(outdir, "controller"))
        for rec in res.history:
            save_system(rec.controller,
                        os.path.join(outdir, "controllers", f"round_{rec.index}"))
        write_history_csv(res, os.path.join(outdir, "history.csv"))
        fig, ax = plt.subplots(figsize=(5, 3))
        idx = [r.index for r in res.history]
        ax.plot(idx, [r.gamma_nominal for r in res.history], "o-",
                label="synthesis level")
        ax.plot(idx, [r.gamma_iqc for r in res.history], "s-",
                label="certified bound")
        ax.set_xlabel("round")
        ax.set_ylabel("gamma")
        ax.legend()
        fig.tight_layout()
        _save_svg(fig, os.path.join(outdir, "gamma_history.svg"))
        _write_summary(outdir, {
            "command": "synth-robust",
            "label": extras.get("label", ""),
            "gamma_iqc": res.gamma_iqc,
            "best_round": res.best_index,
            "rounds": [
                {"round": r.index, "gamma_nominal": r.gamma_nominal,
                 "gamma_iqc": r.gamma_iqc,
                 "lam": None if r.lam is None else r.lam.tolist()}
                for r in res.history
            ],
        })
        click.echo(
            f"robust synthesis done: certified gamma = {res.gamma_iqc:.6g}"
            f" (round {res.best_index}/{i_max})"
        )

    _dispatch(run)


@main.command("analyze")
@_config_opt
@_out_opt
@_seed_opt
@_cap_opt
def cmd_analyze(config_path, out, seed, gamma_cap):
    """Worst-case gain bound of an uncertain loop (closing it if needed)."""

    def run():
        cfg = _load_config(config_path, out=out, seed=seed,
                           gamma_cap=gamma_cap)
        plant, b, pidx, extras = _build_system(cfg)
        Q = _ic_weight(plant, pidx, extras)
        if plant.nu or plant.ny:
            ctrl_dir = cfg.get("controller")
            if not ctrl_dir or not os.path.isdir(ctrl_dir):
                raise ConfigError(
                    "open control channels: provide 'controller' directory"
                )
            K = load_system(ctrl_dir)
            closed = lft_lower(plant, K)
            Q = np.diag(np.concatenate([np.diag(Q), 1e6 * np.ones(K.nx)]))
        else:
            closed = plant
        res = wc_gain(closed, b, Q, settings=_analysis_settings(cfg))
        outdir = _outdir(cfg)
        _export_certificate(outdir, res, extras.get("label", ""))
        _write_summary(outdir, {
            "command": "analyze",
            "label": extras.get("label", ""),
            "gamma_iqc": res.gamma,
            "lam": res.lam.tolist(),
            "margins": res.margins,
            "history": res.history,
        })
        click.echo(f"analysis done: certified gamma = {res.gamma:.6g}")

    _dispatch(run)


@main.command("simulate")
@_config_opt
@_out_opt
@_seed_opt
def cmd_simulate(config_path, out, seed):
    """Simulate the uncertain loop for sampled offsets and disturbances."""

    def run():
        cfg = _load_config(config_path, out=out, seed=seed)
        plant, b, pidx, extras = _build_system(cfg)
        if plant.nu or plant.ny:
            ctrl_dir = cfg.get("controller")
            if not ctrl_dir or not os.path.isdir(ctrl_dir):
                raise ConfigError(
                    "open control channels: provide 'controller' directory"
                )
            closed = lft_lower(plant, load_system(ctrl_dir))
        else:
            closed = plant
        sim = cfg.get("simulate", {})
        rng = np.random.default_rng(cfg["seed"])
        grid = closed.grid
        delta = sim.get("delta", "random")
        if delta == "random":
            gains = rng.uniform(-1, 1, size=(grid.n, closed.nw)) * b
            dsig = Signal(grid, gains)
        else:
            dsig = Signal.constant(grid, np.atleast_1d(delta) * np.ones(closed.nw))
        loop = lft_upper(closed, dsig) if closed.nw else closed
        amp = float(sim.get("amplitude", 1.0))
        dist = Signal(grid, amp * rng.standard_normal((grid.n, closed.nd)))
        x0 = np.zeros(closed.nx)
        if pidx is not None:
            x0[pidx] = float(sim.get("x_rho0", 1.0))
        r = simulate(loop, x0=x0, d=dist)
        outdir = _outdir(cfg)
        ts = r.e.grid.points
        header = "t," + ",".join(f"e{i+1}" for i in range(closed.ne))
        np.savetxt(os.path.join(outdir, "response.csv"),
                   np.column_stack([ts, r.e.values]), delimiter=",",
                   header=header, comments="", fmt=_FMT)
        ratio = l2norm(r.e) / max(
            np.sqrt(l2norm(dist) ** 2 + float(x0 @ x0)), 1e-12
        )
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot(ts, r.e.values)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("performance outputs")
        fig.tight_layout()
        _save_svg(fig, os.path.join(outdir, "response.svg"))
        _write_summary(outdir, {
            "command": "simulate",
            "label": extras.get("label", ""),
            "output_norm": l2norm(r.e),
            "input_norm": l2norm(dist),
            "gain_ratio": ratio,
        })
        click.echo(f"simulation done: output norm {l2norm(r.e):.6g}")

    _dispatch(run)


@main.command("montecarlo")
@_config_opt
@_out_opt
@_seed_opt
@_cap_opt
@_jobs_opt
@click.option("--scaling", type=float, default=None,
              help="turbulence scaling factor override")
def cmd_montecarlo(config_path, out, seed, gamma_cap, jobs, scaling):
    """Paired nonlinear campaign: robust vs frozen-offset nominal design."""

    def run():
        cfg = _load_config(config_path, out=out, seed=seed,
                           gamma_cap=gamma_cap)
        if scaling is not None:
            cfg.setdefault("montecarlo", {})["scaling"] = scaling
        parts = _build_launcher(cfg)
        gp, pidx = parts["gp"], parts["pseudo_index"]
        Q = default_ic_weight(gp.nx, pidx)
        mc = cfg.get("montecarlo", {})
        outdir = _outdir(cfg)

        controllers = {}
        for name in ("robust", "nominal"):
            given = mc.get(f"{name}_controller")
            if given:
                if not os.path.isdir(given):
                    raise ConfigError(f"controller directory {given} missing")
                controllers[name] = load_system(given)
        if "robust" not in controllers:
            i_max = int(cfg.get("synthesis", {}).get("i_max", 4))
            rs = robust_synthesize(
                gp, parts["b_rho"], Q, i_max=i_max, pseudo_index=pidx,
                synth=_synth_settings(cfg), analysis=_analysis_settings(cfg),
            )
            controllers["robust"] = rs.controller
            save_system(rs.controller, os.path.join(outdir, "controller_robust"))
            write_history_csv(rs, os.path.join(outdir, "history.csv"))
        if "nominal" not in controllers:
            data = assemble_synthesis_data(gp, b_rho=parts["b_rho"], Q=Q,
                                           pseudo_index=pidx)
            synth = _synth_settings(cfg)
            nom = hinf_bisect(data, gamma_range=synth.gamma_range,
                              tol=synth.tol)
            controllers["nominal"] = nom.controller
            save_system(nom.controller, os.path.join(outdir, "controller_nominal"))

        report = ln.monte_carlo(
            parts["vd"], parts["traj"], parts["weights"], controllers,
            n_cases=int(mc.get("cases", 200)),
            scaling=float(mc.get("scaling", 1.3)),
            seed=int(cfg["seed"]),
            dt=float(mc.get("dt", 0.01)),
            criterion_deg=float(mc.get("criterion_deg", 20.0)),
            keep_traces=int(mc.get("keep_traces", 3)),
        )
        with open(os.path.join(outdir, "fractions.csv"), "w") as fh:
            fh.write("controller,cases,failures,fraction\n")
            for name, frac in sorted(report.failure_fraction.items()):
                fails = round(frac * report.n_cases)
                fh.write(f"{name},{report.n_cases},{fails},{frac:.6g}\n")
        with open(os.path.join(outdir, "cases.csv"), "w") as fh:
            names = sorted(controllers)
            fh.write("case," + ",".join(
                f"{n}_verdict,{n}_peak_deg" for n in names) + "\n")
            for c in report.cases:
                row = [str(c.index)]
                for n in names:
                    row += [c.verdicts[n], f"{c.peak_error[n]:.6g}"]
                fh.write(",".join(row) + "\n")
        fig, ax = plt.subplots(figsize=(6, 3))
        for c in report.cases:
            if c.trace:
                for name, rec in sorted(c.trace.items()):
                    ax.plot(rec[:, 0], rec[:, 1],
                            label=f"{name} case {c.index}")
                break
        ax.set_xlabel("time after lift-off [s]")
        ax.set_ylabel("pitch error [deg]")
        if ax.get_legend_handles_labels()[0]:
            ax.legend()
        fig.tight_layout()
        _save_svg(fig, os.path.join(outdir, "pitch_error.svg"))
        _write_summary(outdir, {
            "command": "montecarlo",
            "label": parts["label"],
            "scaling": report.scaling,
            "cases": report.n_cases,
            "criterion_deg": report.criterion_deg,
            "failure_fraction": report.failure_fraction,
        })
        click.echo(report.summary())

    _dispatch(run)


if __name__ == "__main__":
    main()
