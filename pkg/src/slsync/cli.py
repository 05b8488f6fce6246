"""Command-line front end.

Every subcommand reads an optional YAML config, applies ``--set key=value``
overrides and the common flags, validates the result against the bundled
JSON schema and writes its outputs plus ``manifest.json`` into ``--out-dir``.

Exit codes: 0 success, 1 configuration or contract error, 2 numerical failure.
"""
from __future__ import annotations

import csv
import json
import math
import os
import platform
import sys
from importlib import resources

import click
import numpy as np
import yaml

from . import __version__
from . import sweep as sw
from .analytic2 import (
    ConsistencyError,
    Params2,
    PoleError,
    classify_het,
    f_zero_gamma,
    f_zero_kappa,
    gamma_prime,
    gamma_star,
    jacobian3_stability,
    kappa_star_homog,
    locked_state_het,
)
from .ensemble import NoConvergence, fixed_point_report
from .integrator import (
    DetectOptions,
    IntegrateOptions,
    IntegrationError,
    classify_batch,
    fit_decay_rate,
    initial_state,
    integrate,
    label_trajectory,
)
from .model import ContractError, DomainError, EnsembleState, OscillatorParams
from .opinion import continue_branch, enumerate_fixed_points


class ConfigError(ValueError):
    pass


EXIT_CONFIG = 1
EXIT_NUMERIC = 2


# ---------------------------------------------------------------- config handling


def load_schema() -> dict:
    text = resources.files("slsync").joinpath("schemas/config.schema.json").read_text()
    return json.loads(text)


def _path_str(path) -> str:
    return ".".join(str(p) for p in path) or "<root>"


def validate_config(command: str, cfg: dict):
    """Raise ConfigError naming the first offending key."""
    from jsonschema import Draft202012Validator

    root = load_schema()
    schema = {"$defs": root["$defs"], **root["commands"][command]}
    errors = sorted(Draft202012Validator(schema).iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"invalid config at {_path_str(e.absolute_path)}: {e.message}")


def _set_dotted(cfg: dict, key: str, value):
    parts = key.split(".")
    d = cfg
    for p in parts[:-1]:
        nxt = d.setdefault(p, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"cannot set {key}: {p} is not a mapping")
        d = nxt
    d[parts[-1]] = value


def resolve_config(command: str, config_path, overrides, flags: dict) -> dict:
    cfg: dict = {}
    if config_path:
        try:
            with open(config_path) as fh:
                cfg = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a mapping")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        k, v = item.split("=", 1)
        _set_dotted(cfg, k.strip(), yaml.safe_load(v))
    for k, v in flags.items():
        if v is not None:
            cfg[k] = v
    validate_config(command, cfg)
    cfg.setdefault("seed", 0)
    cfg.setdefault("jobs", os.cpu_count() or 1)
    cfg.setdefault("out_dir", ".")
    cfg.setdefault("format", "csv")
    cfg.setdefault("plot", False)
    return cfg


def _integrate_opts(cfg) -> IntegrateOptions:
    return IntegrateOptions(**cfg.get("integrator", {}), seed=cfg["seed"])


def _detect_opts(cfg) -> DetectOptions:
    return DetectOptions(**cfg.get("detect", {}))


# ---------------------------------------------------------------- output helpers


class Run:
    """Collects output paths and writes the manifest."""

    def __init__(self, command: str, cfg: dict):
        self.command = command
        self.cfg = cfg
        self.out = cfg["out_dir"]
        self.outputs: list = []
        os.makedirs(self.out, exist_ok=True)

    def path(self, name: str) -> str:
        p = os.path.join(self.out, name)
        self.outputs.append(name)
        return p

    def table(self, stem: str, header, rows):
        """Write rows as CSV (floats at full precision) or JSON, per the format flag."""
        if self.cfg["format"] == "json":
            with open(self.path(stem + ".json"), "w") as fh:
                json.dump({"columns": list(header), "rows": [list(map(_jsonable, r)) for r in rows]}, fh, indent=1)
            return
        with open(self.path(stem + ".csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])

    def json(self, name: str, obj):
        with open(self.path(name), "w") as fh:
            json.dump(_jsonable(obj), fh, indent=1)

    def manifest(self):
        import matplotlib
        import scipy

        doc = {
            "command": self.command,
            "config": self.cfg,
            "seed": self.cfg["seed"],
            "argv": sys.argv,
            "versions": {
                "slsync": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "matplotlib": matplotlib.__version__,
            },
            "outputs": self.outputs,
        }
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            json.dump(_jsonable(doc), fh, indent=1)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return v


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else None
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    if hasattr(o, "value") and isinstance(getattr(o, "value"), str):
        return o.value
    return o


def _label_dict(lab) -> dict:
    return {"regime": f"{lab.amplitude.value}+{lab.phase.value}", "amplitude": lab.amplitude.value,
            "phase": lab.phase.value, "leader_driven": lab.leader_driven, "boundary": lab.boundary}


def _pair(cfg) -> Params2:
    p = cfg["pair"]
    return Params2(p["alpha1"], p["alpha2"], p["kappa"], p.get("gamma", 0.0))


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg: dict, run: Run) -> dict:
    pp = cfg["params"]
    params = OscillatorParams(pp["kappa"], tuple(pp["alpha"]), tuple(pp["omega"]))
    opts, det = _integrate_opts(cfg), _detect_opts(cfg)
    init = cfg.get("initial", {})
    if "z0" in init:
        z0 = EnsembleState(np.array([complex(a, b) for a, b in init["z0"]]))
    else:
        policy = init.get("policy", "annulus")
        width = math.radians(init.get("sector_width_deg", 120.0))
        z0 = initial_state(params, policy, np.random.default_rng(cfg["seed"]), width)
    traj = integrate(params, z0, opts)
    n = params.n
    z = traj.z
    header = ["t"] + [c for j in range(n) for c in (f"re_{j + 1}", f"im_{j + 1}")]
    rows = [[t] + [v for zz in row for v in (zz.real, zz.imag)] for t, row in zip(traj.times, z)]
    run.table("trajectory", header, rows)

    r = traj.r
    obs_head = ["t"] + [f"r_{j + 1}" for j in range(n)] + [f"Phi_1{k + 1}" for k in range(1, n)]
    obs_rows = [[t] + list(r[i]) + [traj.phase_diff(0, k)[i] for k in range(1, n)] for i, t in enumerate(traj.times)]
    run.table("observables", obs_head, obs_rows)

    lab = label_trajectory(traj, det, incoherence_window=opts.t_end / 2)
    second = traj.times >= opts.t_end / 2
    rates = {}
    try:
        rates["max_amplitude_rate"] = fit_decay_rate(r[second].max(axis=1), traj.times[second])
    except DomainError:
        rates["max_amplitude_rate"] = None
    if n > 1:
        m = traj.tail(det.hold)
        drift = [float((traj.phase_diff(0, k)[m][-1] - traj.phase_diff(0, k)[m][0]) / det.hold) for k in range(1, n)]
        rates["phase_drift_rates"] = drift
    obs = traj.observables_at(len(traj) - 1)
    summary = {
        **_label_dict(lab),
        "t_end": float(traj.times[-1]),
        "final_r": list(r[-1]),
        "final_log_r": list(traj.log_r[-1]),
        "final_phase_diffs": [float(obs.phase_diffs[0, k]) for k in range(1, n)],
        "rates": rates,
    }
    run.json("summary.json", summary)
    if cfg["plot"]:
        from .report import trajectory_plot

        trajectory_plot(traj, run.path("trajectory.png"), title=str(lab))
    return summary


def cmd_classify(cfg: dict, run: Run) -> dict:
    p = _pair(cfg)
    mode = cfg.get("mode", "analytic")
    out: dict = {"pair": {"alpha1": p.alpha1, "alpha2": p.alpha2, "kappa": p.kappa, "gamma": p.gamma}}
    if mode in ("analytic", "both"):
        out["analytic"] = _label_dict(classify_het(p))
    if mode in ("simulate", "both"):
        params = p.to_params()
        init = cfg.get("initial", {})
        if "z0" in init:
            z0 = EnsembleState(np.array([complex(a, b) for a, b in init["z0"]]))
        else:
            policy = init.get("policy", "manifold" if p.a == 0 else "annulus")
            z0 = initial_state(params, policy, np.random.default_rng([cfg["seed"], 0]))
        lab = classify_batch([params], opts=_integrate_opts(cfg), det=_detect_opts(cfg), z0s=[z0])[0]
        out["simulated"] = _label_dict(lab)
    if mode == "both":
        out["agree"] = out["analytic"]["regime"] == out["simulated"]["regime"]
    run.json("classification.json", out)
    return out


def cmd_locked_state(cfg: dict, run: Run) -> dict:
    p = _pair(cfg)
    ls = locked_state_het(p)
    out: dict = {"pair": {"alpha1": p.alpha1, "alpha2": p.alpha2, "kappa": p.kappa, "gamma": p.gamma},
                 "exists": ls is not None}
    if ls is not None:
        stable, coeffs, eig = jacobian3_stability(ls, p)
        out.update({
            "l_inf": ls.l_inf, "R_inf": ls.R_inf, "Phi_inf": ls.Phi_inf,
            "r1_inf": ls.r1_inf, "r2_inf": ls.r2_inf,
            "char_coeffs": list(coeffs), "routh_hurwitz_stable": stable,
            "eigenvalues": [[e.real, e.imag] for e in eig], "residuals": list(ls.residuals),
        })
    run.json("locked_state.json", out)
    return out


def cmd_curves(cfg: dict, run: Run) -> dict:
    a1, a2 = max(cfg["alpha1"], cfg["alpha2"]), min(cfg["alpha1"], cfg["alpha2"])
    res = int(cfg.get("resolution", 200))
    gmax = float(cfg.get("gamma_max", 4.0 * max(abs(a1), abs(a2), 1.0)))
    kmax = float(cfg.get("kappa_max", gmax))
    gammas = np.linspace(gmax / res, gmax, res)
    kappas = np.linspace(kmax / res, kmax, res)
    homog = a1 == a2
    written: dict = {}

    def emit(stem, header, rows, what):
        if not rows:
            click.echo(f"warning: {what}: empty domain for alpha=({a1}, {a2}); writing an empty file", err=True)
        run.table(stem, header, rows)
        written[stem] = len(rows)

    ks_rows = []
    if homog and a1 > 0:
        ks_rows = [[g, kappa_star_homog(a1, g)] for g in np.linspace(2 * a1, max(gmax, 2 * a1), res)]
    emit("kappa_star", ["gamma", "kappa_star"], ks_rows, "kappa* curve")

    fg_rows, fk_rows = [], []
    if not homog:
        fg_rows = [[g, k] for g in gammas for k in f_zero_kappa(a1, a2, g, kappa_max=kmax)]
        fk_rows = [[k, g] for k in kappas for g in f_zero_gamma(a1, a2, k, gmax)]
    emit("f_zero_by_gamma", ["gamma", "kappa_f_zero"], fg_rows, "f=0 locus")
    emit("f_zero_by_kappa", ["kappa", "gamma_f_zero"], fk_rows, "f=0 locus")

    gs_rows = []
    if a1 > a2 > 0:
        kk = np.linspace(2 * a2 / res, 2 * a2, res, endpoint=False)
        gs_rows = [[k, gamma_star(Params2(a1, a2, k, 0.0))] for k in kk]
    emit("gamma_star", ["kappa", "gamma_star"], gs_rows, "gamma* curve")

    try:
        kp, gp = gamma_prime(a1, a2)
        marker = {"defined": True, "kappa": kp, "gamma": gp}
    except (DomainError, ValueError):
        marker = {"defined": False}
    run.json("gamma_prime.json", marker)
    if cfg["plot"]:
        from .report import curves_plot

        curves = {
            "kappa*": _xy(ks_rows), "f=0": _xy(fg_rows), "gamma*": _xy([[g, k] for k, g in gs_rows]),
        }
        if marker["defined"]:
            curves["gamma'"] = ([marker["gamma"]], [marker["kappa"]])
        curves_plot(curves, run.path("curves.png"), title=f"alpha=({a1}, {a2})")
    return {"rows": written, "gamma_prime": marker}


def _xy(rows):
    if not rows:
        return [], []
    a = np.asarray(rows)
    return a[:, 0], a[:, 1]


def _write_diagram(run: Run, d, stem: str):
    if run.cfg["format"] == "json":
        sw.write_json(d, run.path(stem + ".json"))
        return
    sw.write_csv(d, run.path(stem + ".csv"))
    meta = sw.to_json_dict(d)
    del meta["cells"]
    run.json(stem + ".meta.json", meta)


def load_diagram(path: str):
    """Read a diagram written by the sweep command (JSON, or CSV with its .meta.json)."""
    if path.endswith(".csv"):
        meta_path = path[:-4] + ".meta.json"
        if not os.path.exists(meta_path):
            raise ConfigError(f"{path} has no companion {os.path.basename(meta_path)}")
        with open(meta_path) as fh:
            meta = json.load(fh)
        axes = tuple(sw.AxisSpec(**a) for a in meta["axes"])
        shell = sw.PhaseDiagram.__new__(sw.PhaseDiagram)
        shell.axes, shell.provenance = axes, meta["provenance"]
        shell.params_base, shell.meta = meta["params_base"], meta.get("meta", {})
        return sw.read_csv(path, shell)
    return sw.read_json(path)


def cmd_sweep(cfg: dict, run: Run) -> dict:
    axes = tuple(sw.AxisSpec(**a) for a in cfg["axes"])
    mode = cfg.get("mode", "analytic")
    kw = dict(opts=_integrate_opts(cfg), det=_detect_opts(cfg), policy=cfg.get("policy"), jobs=cfg["jobs"])
    band = cfg.get("exclusion_band", 0.1)
    out: dict = {"mode": mode}
    diagrams = {}
    if mode == "both":
        diagrams["analytic"] = sw.grid_sweep(cfg["base"], axes, "analytic", **kw)
        diagrams["simulated"] = sw.grid_sweep(cfg["base"], axes, "simulate", **kw)
    else:
        diagrams["analytic" if mode == "analytic" else "simulated"] = sw.grid_sweep(cfg["base"], axes, mode, **kw)
    for name, d in diagrams.items():
        _write_diagram(run, d, name)
        out[name] = {"region_counts": sw.region_counts(d)}
    if mode == "both":
        agr = sw.compare(diagrams["analytic"], diagrams["simulated"], band)
        out["agreement"] = {**agr.as_dict(), "exclusion_band": band}
        run.json("agreement.json", out["agreement"])
    run.json("sweep_summary.json", out)
    if cfg["plot"]:
        from .report import phase_diagram

        for name, d in diagrams.items():
            phase_diagram(d, run.path(f"{name}.png"))
    return out


def cmd_ensemble(cfg: dict, run: Run) -> dict:
    rep = fixed_point_report(cfg["alphas"], cfg["kappa"])
    run.json("ensemble.json", rep)
    return rep


def cmd_opinion(cfg: dict, run: Run) -> dict:
    al = [float(a) for a in cfg["alphas"]]
    n = len(al)
    xs = [f"x_{j + 1}" for j in range(n)]
    grid = int(cfg.get("grid_per_dim", 7))
    out: dict = {"alphas": al}
    if "kappa" in cfg:
        fps = enumerate_fixed_points(al, cfg["kappa"], grid_per_dim=grid)
        run.table("fixed_points", ["kappa"] + xs + ["kind", "taxonomy"],
                  [[cfg["kappa"]] + list(fp.x) + [fp.kind.value, fp.taxonomy.value] for fp in fps])
        out["fixed_point_count"] = len(fps)
    if "scan" in cfg:
        sc = cfg["scan"]
        k0, k1 = sc["kappa_min"], sc["kappa_max"]
        if not k1 > k0:
            raise ConfigError("scan.kappa_max must exceed scan.kappa_min")
        if "start" in sc:
            if len(sc["start"]) != n:
                raise ConfigError("scan.start must have one entry per agent")
            starts = [tuple(sc["start"])]
        else:
            starts = [fp.x for fp in enumerate_fixed_points(al, k0, grid_per_dim=grid)]
        rows, events, reports = [], [], []
        for b, x0 in enumerate(starts):
            rep = continue_branch(al, x0, (k0, k1), step=sc.get("step", 1e-2))
            reports.append(rep)
            rows += [[k] + list(x) + [kind.value, b] for k, x, kind in rep.branch]
            for k, kind, x in zip(rep.kappa_values, rep.kinds, rep.event_points):
                rows.append([k] + list(x) + [kind, b])
                events.append((k, kind))
        run.table("bifurcation", ["kappa"] + xs + ["kind", "branch"], rows)
        uniq: list = []
        for k, kind in sorted(events):
            if not any(kind == u[1] and abs(k - u[0]) < 1e-6 for u in uniq):
                uniq.append((k, kind))
        out["events"] = [{"kappa": k, "kind": kind} for k, kind in uniq]
        out["partial_branches"] = [i for i, r in enumerate(reports) if r.partial]
        if cfg["plot"]:
            from .report import bifurcation_plot

            for i, rep in enumerate(reports):
                if len(rep.branch) > 1:
                    bifurcation_plot(rep, run.path(f"bifurcation_{i}.png"), title=f"branch {i}")
    if "kappa" not in cfg and "scan" not in cfg:
        raise ConfigError("opinion needs kappa, scan, or both")
    run.json("opinion_summary.json", out)
    return out


def cmd_compare(cfg: dict, run: Run) -> dict:
    a, b = load_diagram(cfg["a"]), load_diagram(cfg["b"])
    agr = sw.compare(a, b, cfg.get("exclusion_band", 0.1))
    out = {**agr.as_dict(), "a": cfg["a"], "b": cfg["b"], "exclusion_band": cfg.get("exclusion_band", 0.1)}
    run.json("agreement.json", out)
    return out


COMMANDS = {
    "simulate": cmd_simulate,
    "classify": cmd_classify,
    "locked-state": cmd_locked_state,
    "curves": cmd_curves,
    "sweep": cmd_sweep,
    "ensemble": cmd_ensemble,
    "opinion": cmd_opinion,
    "compare": cmd_compare,
}


# ---------------------------------------------------------------- click wiring


def _common(f):
    opts = [
        click.option("--config", "config_path", type=click.Path(), help="YAML config file."),
        click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                     help="Override a config key (dotted path, YAML value). Repeatable."),
        click.option("--seed", type=int, help="Root random seed."),
        click.option("--jobs", type=int, help="Worker processes for sweeps (default: all cores)."),
        click.option("--out-dir", type=click.Path(), help="Output directory."),
        click.option("--format", "fmt", type=click.Choice(["csv", "json"]), help="Tabular output format."),
        click.option("--plot/--no-plot", default=None, help="Also render PNG figures (off by default)."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


@click.group()
@click.version_option(__version__)
def cli():
    """Coupled Stuart-Landau oscillators: simulation and regime classification."""


def _make(name: str, fn):
    @cli.command(name=name, help=(fn.__doc__ or f"Run {name}."))
    @_common
    def _cmd(config_path, overrides, seed, jobs, out_dir, fmt, plot):
        flags = {"seed": seed, "jobs": jobs, "out_dir": out_dir, "format": fmt, "plot": plot}
        cfg = resolve_config(name, config_path, overrides, flags)
        run = Run(name, cfg)
        try:
            result = fn(cfg, run)
        finally:
            run.manifest()
        click.echo(json.dumps(_jsonable(result), indent=1))

    return _cmd


cmd_simulate.__doc__ = "Integrate one system and report its regime."
cmd_classify.__doc__ = "Classify a two-oscillator pair analytically and/or by simulation."
cmd_locked_state.__doc__ = "Solve for the locked state of a pair and test its stability."
cmd_curves.__doc__ = "Tabulate the transition curves of a pair."
cmd_sweep.__doc__ = "Phase diagram over a two-axis grid."
cmd_ensemble.__doc__ = "Amplitude-death verdict and active equilibrium of an ensemble."
cmd_opinion.__doc__ = "Fixed points and kappa continuation of the real-line model."
cmd_compare.__doc__ = "Agreement between two exported phase diagrams."

for _name, _fn in COMMANDS.items():
    _make(_name, _fn)


def main(argv=None) -> int:
    """Entry point; maps failures onto exit codes instead of tracebacks."""
    try:
        cli.main(args=argv, prog_name="slsync", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_CONFIG
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except (ConfigError, ContractError, DomainError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_CONFIG
    except (IntegrationError, NoConvergence, PoleError, ConsistencyError, FloatingPointError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
