"""Command-line front end: classical solves, training runs, reports.

Every subcommand resolves one RunConfig from an optional TOML file plus
flag overrides, runs, and drops plain CSV/JSON artifacts under a run
directory.  The resolved config and its hash are embedded in every
artifact, and a re-run of an identical invocation rewrites the files with
byte-identical content.
"""

import argparse
import concurrent.futures
import dataclasses
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

from . import chemistry as ch
from . import oracle as orc
from . import runio
from .autodiff import AutodiffError
from .pinn import training as tr
from .pinn.model import ModelError


class ConfigError(ValueError):
    """Unusable configuration file, flag value, or run directory."""


EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_NUMERICAL_ERRORS = (orc.OracleError, ch.ChemistryError, tr.TrainingError,
                     ModelError, AutodiffError, ValueError,
                     FloatingPointError, np.linalg.LinAlgError)

# Config file layout: which section owns each RunConfig field.
_SECTIONS = {
    "problem": ("kind", "alpha", "alpha_min", "alpha_max", "alpha_init",
                "t_max", "pressure", "temperature", "y0", "noise"),
    "network": ("width", "depth", "enc_depth", "dec_depth", "vanilla_width"),
    "training": ("seed", "epochs", "n_col", "lr", "lambda_scale", "lambda_f",
                 "eps_log", "causality_slices", "causality_gamma",
                 "data_nt", "data_nz", "oracle_grid_n",
                 "eval_nt", "eval_n_time", "eval_n_alpha"),
    "chemistry": ("mechanism", "fuel", "coflow"),
    "ablation": ("flags",),
}

_OVERRIDE_FIELDS = ("seed", "alpha", "alpha_min", "alpha_max", "alpha_init",
                    "epochs", "width", "depth", "n_col", "lr", "noise")


def load_config_file(path):
    """Flatten a sectioned TOML file into RunConfig keyword arguments."""
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror or e}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}")
    fields = {}
    for section, table in doc.items():
        if section not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}] "
                              f"(expected one of {sorted(_SECTIONS)})")
        if not isinstance(table, dict):
            raise ConfigError(f"{path}: [{section}] must be a table")
        for key, value in table.items():
            if key not in _SECTIONS[section]:
                raise ConfigError(
                    f"{path}: [{section}] has no field {key!r} "
                    f"(expected one of {list(_SECTIONS[section])})")
            fields[key] = value
    return fields


def resolve_config(kind, args):
    """RunConfig for one subcommand: file values, then flag overrides."""
    fields = {}
    if getattr(args, "config", None):
        fields = load_config_file(args.config)
    file_kind = fields.pop("kind", None)
    if file_kind is not None and file_kind != kind:
        raise ConfigError(f"config file sets kind = {file_kind!r} but the "
                          f"subcommand runs {kind!r}")
    for name in _OVERRIDE_FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            fields[name] = v
    if getattr(args, "flag", None):
        fields["flags"] = tuple(args.flag)
    if isinstance(fields.get("flags"), list):
        fields["flags"] = tuple(fields["flags"])
    try:
        return tr.RunConfig(kind=kind, **fields)
    except TypeError as e:
        raise ConfigError(str(e))
    except tr.TrainingError as e:
        raise ConfigError(str(e))


def run_dir(args, cfg, subcommand):
    out = args.out or os.path.join("runs", f"{subcommand}-{cfg.hash()}")
    ensure_writable(out)
    return out


def ensure_writable(path):
    try:
        runio.ensure_dir(path)
        probe = os.path.join(path, ".write-probe")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as e:
        raise ConfigError(f"output directory {path!r} not writable: {e}")


def write_config_artifact(outdir, cfg):
    runio.write_json(os.path.join(outdir, "config.json"),
                     {"config": cfg.to_dict(), "config_hash": cfg.hash()})


def _meta(cfg, **extra):
    meta = {"config_hash": cfg.hash()}
    meta.update(extra)
    return meta


def conservation_report(mech, Y):
    """Worst-case drift of the mass-fraction sum and elemental makeup.

    Y is (nt, S) or (nt, m, S); elemental drift is measured along the time
    axis (per grid point for fields, where the makeup varies with Z).
    """
    Y = np.asarray(Y)
    sum_dev = float(np.abs(Y.sum(axis=-1) - 1.0).max())
    elements, E = ch.element_matrix(mech)
    Z = Y @ E.T
    span = Z.max(axis=0) - Z.min(axis=0)
    drift = span.reshape(-1, span.shape[-1]).max(axis=0)
    report = {"mass_sum_max_dev": sum_dev}
    for e, d in zip(elements, drift):
        report[f"element_{e}_max_drift"] = float(d)
    return report


# -- classical solves ----------------------------------------------------------


def cmd_solve_ivp(args):
    cfg = resolve_config("ivp", args)
    outdir = run_dir(args, cfg, "solve-ivp")
    mech = ch.load_mechanism(cfg.mechanism)
    prob = orc.IgnitionProblem(mech, cfg.temperature, tr.y0_vector(cfg, mech),
                               cfg.pressure)
    times = tr.ivp_eval_times(cfg)
    sol = prob.solve(cfg.t_max, output_times=times)
    write_config_artifact(outdir, cfg)
    runio.write_trajectory_csv(os.path.join(outdir, "trajectory.csv"),
                               sol.t, sol.T, sol.Y,
                               meta=_meta(cfg, **sol.meta))
    metrics = {"config_hash": cfg.hash(), "kind": "ivp",
               "T_initial": float(sol.T[0]), "T_final": float(sol.T[-1]),
               "n_steps": sol.meta.get("n_steps")}
    metrics.update(conservation_report(mech, sol.Y))
    runio.write_json(os.path.join(outdir, "metrics.json"), metrics)
    print(f"wrote {outdir}: T {sol.T[0]:.1f} -> {sol.T[-1]:.1f} K, "
          f"max |sum Y - 1| = {metrics['mass_sum_max_dev']:.2e}")
    return 0


def cmd_solve_bvp(args):
    cfg = resolve_config("bvp", args)
    outdir = run_dir(args, cfg, "solve-bvp")
    mech, fuel, coflow = tr.load_problem(cfg)
    grid = orc.make_grid(cfg.oracle_grid_n)
    sol = orc.solve_bvp_steady(mech, fuel, coflow, cfg.alpha, grid=grid)
    write_config_artifact(outdir, cfg)
    runio.write_field_csv(os.path.join(outdir, "field.csv"),
                          sol.t, sol.z, sol.T, sol.Y,
                          meta=_meta(cfg, **sol.meta))
    metrics = {"config_hash": cfg.hash(), "kind": "bvp",
               "alpha": cfg.alpha, "T_max": float(sol.T.max()),
               "residual_norm": sol.meta.get("residual_norm")}
    metrics.update(conservation_report(mech, sol.Y))
    runio.write_json(os.path.join(outdir, "metrics.json"), metrics)
    print(f"wrote {outdir}: steady profile at alpha={cfg.alpha:g}, "
          f"T_max {sol.T.max():.1f} K")
    return 0


def cmd_solve_pde(args):
    cfg = resolve_config("pde", args)
    outdir = run_dir(args, cfg, "solve-pde")
    mech, fuel, coflow = tr.load_problem(cfg)
    times = np.linspace(0.0, cfg.t_max, cfg.eval_nt)
    grid = orc.make_grid(cfg.oracle_grid_n)
    sol = orc.solve_pde_mol(mech, fuel, coflow, cfg.alpha, cfg.t_max,
                            output_times=times, grid=grid)
    write_config_artifact(outdir, cfg)
    runio.write_field_csv(os.path.join(outdir, "field.csv"),
                          sol.t, sol.z, sol.T, sol.Y,
                          meta=_meta(cfg, **sol.meta))
    metrics = {"config_hash": cfg.hash(), "kind": "pde",
               "alpha": cfg.alpha, "t_max": cfg.t_max,
               "T_max_final": float(sol.T[-1].max())}
    metrics.update(conservation_report(mech, sol.Y))
    runio.write_json(os.path.join(outdir, "metrics.json"), metrics)
    print(f"wrote {outdir}: transient field at alpha={cfg.alpha:g}, "
          f"final T_max {sol.T[-1].max():.1f} K")
    return 0


# -- training ------------------------------------------------------------------


def _progress_every(cfg):
    return max(1, cfg.epochs // 10) if cfg.epochs else None


def write_prediction_artifacts(outdir, cfg, model, params, detail):
    """Prediction table on the evaluation grid, with recovered temperature."""
    if cfg.kind == "ivp":
        t = detail["t"]
        pred = detail["pred"]
        T = tr.prediction_temperature(model, pred)
        runio.write_trajectory_csv(os.path.join(outdir, "trajectory.csv"),
                                   t, T, pred, meta=_meta(cfg, source="pinn"))
        return
    if cfg.kind == "bvp":
        z = detail["z"]
        pred = detail["pred"]
        T = tr.prediction_temperature(model, pred, z=z)
        runio.write_field_csv(os.path.join(outdir, "field.csv"),
                              np.array([0.0]), z, T[None, :],
                              pred[None, :, :], meta=_meta(cfg, source="pinn"))
        return
    if cfg.kind in ("pde", "inverse"):
        t, z, pred = detail["t"], detail["z"], detail["pred"]
    else:                                   # parametric: report at cfg.alpha
        t = np.linspace(0.0, cfg.t_max, cfg.eval_nt)
        z = orc.make_grid(cfg.oracle_grid_n)
        tt, zz = np.meshgrid(t, z, indexing="ij")
        pred = model.predict_values(params, t=tt.ravel(), z=zz.ravel(),
                                    alpha=cfg.alpha)
    nt, m = t.shape[0], z.shape[0]
    zz = np.tile(z, nt)
    T = tr.prediction_temperature(model, pred, z=zz)
    runio.write_field_csv(os.path.join(outdir, "field.csv"),
                          t, z, T.reshape(nt, m),
                          pred.reshape(nt, m, -1), meta=_meta(cfg, source="pinn"))


def finish_training_run(args, cfg, subcommand, observations=None,
                        reference=None, extra_metrics=None):
    """Train, evaluate against the reference solver, and write artifacts."""
    outdir = run_dir(args, cfg, subcommand)
    mech, fuel, coflow = tr.load_problem(cfg)
    res = tr.train(cfg, mech, fuel, coflow, observations=observations,
                   progress=_progress_every(cfg))
    write_config_artifact(outdir, cfg)
    runio.write_history_csv(os.path.join(outdir, "history.csv"), res.history)
    tr.save_checkpoint(os.path.join(outdir, "checkpoint.npz"), cfg, res)
    if res.aborted:
        runio.write_json(os.path.join(outdir, "metrics.json"),
                         {"config_hash": cfg.hash(), "kind": cfg.kind,
                          "aborted": True})
        raise tr.TrainingError(
            f"training aborted on a non-finite loss after "
            f"{len(res.history)} epochs; artifacts in {outdir}")
    metrics, detail = tr.evaluate_run(cfg, res.params, mech, fuel, coflow,
                                      reference=reference)
    metrics["config_hash"] = cfg.hash()
    metrics["kind"] = cfg.kind
    metrics["aborted"] = False
    if res.history:
        metrics["final_loss"] = res.history[-1][1]
    if extra_metrics:
        metrics.update(extra_metrics(res, metrics))
    runio.write_json(os.path.join(outdir, "metrics.json"), metrics)
    write_prediction_artifacts(outdir, cfg, res.model, res.params, detail)
    print(f"wrote {outdir}: rel_l2 {metrics['rel_l2']:.3e} "
          f"mae {metrics['mae']:.3e}")
    return 0


def cmd_train_ivp(args):
    return finish_training_run(args, resolve_config("ivp", args), "train-ivp")


def cmd_train_bvp(args):
    return finish_training_run(args, resolve_config("bvp", args), "train-bvp")


def cmd_train_pde(args):
    return finish_training_run(args, resolve_config("pde", args), "train-pde")


def cmd_train_parametric(args):
    return finish_training_run(args, resolve_config("parametric", args),
                               "train-parametric")


def cmd_infer_alpha(args):
    cfg = resolve_config("inverse", args)
    alpha_true = args.alpha_true if args.alpha_true is not None else cfg.alpha
    outdir = run_dir(args, cfg, "infer-alpha")
    mech, fuel, coflow = tr.load_problem(cfg)
    observations = tr.make_observations(cfg, mech, fuel, coflow, alpha_true)
    res = tr.train(cfg, mech, fuel, coflow, observations=observations,
                   progress=_progress_every(cfg))
    write_config_artifact(outdir, cfg)
    runio.write_history_csv(os.path.join(outdir, "history.csv"), res.history)
    tr.save_checkpoint(os.path.join(outdir, "checkpoint.npz"), cfg, res)
    if res.aborted:
        runio.write_json(os.path.join(outdir, "metrics.json"),
                         {"config_hash": cfg.hash(), "kind": "inverse",
                          "aborted": True})
        raise tr.TrainingError(
            f"training aborted on a non-finite loss after "
            f"{len(res.history)} epochs; artifacts in {outdir}")
    alpha_hat = res.model.alpha_value(res.params)
    reference = tr.reference_pde(cfg, mech, fuel, coflow, alpha=alpha_true)
    metrics, detail = tr.evaluate_run(cfg, res.params, mech, fuel, coflow,
                                      reference=reference)
    metrics.update({
        "config_hash": cfg.hash(), "kind": "inverse", "aborted": False,
        "alpha_true": float(alpha_true), "alpha_hat": float(alpha_hat),
        "alpha_rel_error": float(abs(alpha_hat - alpha_true) / alpha_true),
        "noise": cfg.noise,
    })
    if res.history:
        metrics["final_loss"] = res.history[-1][1]
    runio.write_json(os.path.join(outdir, "metrics.json"), metrics)
    write_prediction_artifacts(outdir, cfg, res.model, res.params, detail)
    print(f"wrote {outdir}: alpha_hat {alpha_hat:.4f} "
          f"(true {alpha_true:g}, rel err {metrics['alpha_rel_error']:.2%})")
    return 0


# -- evaluation and reports ----------------------------------------------------


def load_run(path):
    """Config and checkpoint of a finished run directory."""
    ckpt = os.path.join(path, "checkpoint.npz")
    if not os.path.exists(ckpt):
        raise ConfigError(f"{path}: no checkpoint.npz (not a training run?)")
    try:
        cfg, state = tr.load_checkpoint(ckpt)
    except Exception as e:
        raise ConfigError(f"{ckpt}: {e}")
    return cfg, state


def cmd_eval(args):
    if args.table:
        return write_table1(args)
    if not args.run:
        raise ConfigError("eval needs --run DIR (or --table --runs ...)")
    if args.against != "oracle":
        raise ConfigError(f"unknown reference {args.against!r}; "
                          "only 'oracle' is available")
    cfg, state = load_run(args.run)
    metrics, _ = tr.evaluate_run(cfg, state["params"])
    metrics["config_hash"] = cfg.hash()
    metrics["kind"] = cfg.kind
    outdir = args.out or args.run
    ensure_writable(outdir)
    runio.write_json(os.path.join(outdir, "metrics.json"), metrics)
    print(f"{args.run}: kind={cfg.kind} rel_l2 {metrics['rel_l2']:.3e} "
          f"mae {metrics['mae']:.3e}")
    return 0


def _method_of(cfg):
    if "vanilla_baseline" in cfg.flags:
        return "vanilla"
    if "causality_baseline" in cfg.flags:
        return "causality"
    if cfg.flags:
        return None                      # other ablations stay out of the table
    return "proposed"


def _row_of(cfg):
    if cfg.kind == "ivp":
        return "ivp"
    if cfg.kind == "bvp":
        return f"bvp@{cfg.alpha:g}"
    if cfg.kind == "pde":
        return f"pde@{cfg.alpha:g}"
    if cfg.kind == "parametric":
        return "parametric"
    return None


METHODS = ("vanilla", "causality", "proposed")


def collect_table1(run_dirs):
    """Table cells {row: {method: {mae, rel_l2}}} from finished run dirs."""
    cells = {}
    rows = []
    for d in run_dirs:
        mpath = os.path.join(d, "metrics.json")
        if not os.path.exists(mpath):
            raise ConfigError(f"{d}: no metrics.json")
        metrics = runio.read_json(mpath)
        cpath = os.path.join(d, "config.json")
        if not os.path.exists(cpath):
            raise ConfigError(f"{d}: no config.json")
        cfg = tr.RunConfig.from_dict(runio.read_json(cpath)["config"])
        row, method = _row_of(cfg), _method_of(cfg)
        if row is None or method is None or metrics.get("aborted"):
            continue
        if row not in cells:
            cells[row] = {}
            rows.append(row)
        cells[row][method] = {"mae": metrics["mae"],
                              "rel_l2": metrics["rel_l2"]}
    return rows, cells


def format_table1(rows, cells):
    header = ["case"]
    for m in METHODS:
        header += [f"{m}_mae", f"{m}_rel_l2"]
    csv_lines = [",".join(header)]
    txt_lines = [" | ".join(f"{h:>16s}" for h in header)]
    for row in rows:
        csv_row, txt_row = [row], [f"{row:>16s}"]
        for m in METHODS:
            cell = cells[row].get(m)
            if cell is None:
                csv_row += ["absent", "absent"]
                txt_row += [f"{'absent':>16s}"] * 2
            else:
                csv_row += [runio.fmt(cell["mae"]), runio.fmt(cell["rel_l2"])]
                txt_row += [f"{cell['mae']:>16.6e}", f"{cell['rel_l2']:>16.6e}"]
        csv_lines.append(",".join(csv_row))
        txt_lines.append(" | ".join(txt_row))
    return "\n".join(csv_lines) + "\n", "\n".join(txt_lines) + "\n"


def write_table1(args):
    run_dirs = args.runs or []
    if not run_dirs:
        root = "runs"
        if os.path.isdir(root):
            run_dirs = sorted(os.path.join(root, d) for d in os.listdir(root)
                              if os.path.isdir(os.path.join(root, d)))
    run_dirs = [d for d in run_dirs
                if os.path.exists(os.path.join(d, "metrics.json"))]
    rows, cells = collect_table1(run_dirs)
    csv_text, txt_text = format_table1(rows, cells)
    outdir = args.out or "."
    ensure_writable(outdir)
    with open(os.path.join(outdir, "table1.csv"), "w") as f:
        f.write(csv_text)
    with open(os.path.join(outdir, "table1.txt"), "w") as f:
        f.write(txt_text)
    sys.stdout.write(txt_text)
    return 0


def cmd_ablate(args):
    if not args.flag:
        raise ConfigError("ablate needs at least one --flag NAME")
    cfg_abl = resolve_config("pde", args)
    cfg_prop = dataclasses.replace(cfg_abl, flags=())
    outdir = args.out or os.path.join("runs", f"ablate-{cfg_abl.hash()}")
    ensure_writable(outdir)
    rows = []
    for label, cfg in (("proposed", cfg_prop), ("ablated", cfg_abl)):
        sub = argparse.Namespace(**vars(args))
        sub.out = os.path.join(outdir, label)
        finish_training_run(sub, cfg, "train-pde")
        metrics = runio.read_json(os.path.join(sub.out, "metrics.json"))
        rows.append((label, ",".join(cfg.flags) or "-",
                     metrics["mae"], metrics["rel_l2"]))
    with open(os.path.join(outdir, "ablation.csv"), "w") as f:
        f.write("label,flags,mae,rel_l2\n")
        for label, flags, mae, rel in rows:
            f.write(f"{label},{flags},{runio.fmt(mae)},{runio.fmt(rel)}\n")
    for label, flags, mae, rel in rows:
        print(f"{label:<10s} {flags:<28s} mae {mae:.3e}  rel_l2 {rel:.3e}")
    return 0


# -- strain-rate sweep ----------------------------------------------------------


def max_workers():
    env = os.environ.get("FLAMELET_PINN_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"FLAMELET_PINN_THREADS={env!r} is not an int")
        if n < 1:
            raise ConfigError("FLAMELET_PINN_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def _sweep_eval(run_path, alpha):
    """Per-species misfit of one checkpoint at one strain rate."""
    cfg, state = load_run(run_path)
    if cfg.kind != "parametric":
        raise ConfigError(f"{run_path}: sweep needs a parametric run, "
                          f"got {cfg.kind!r}")
    mech, fuel, coflow = tr.load_problem(cfg)
    model = tr.build_model(cfg, mech, fuel, coflow)
    times, grid, ref = tr.reference_pde(cfg, mech, fuel, coflow, alpha=alpha)
    tt, zz = np.meshgrid(times, grid, indexing="ij")
    pred = model.predict_values(state["params"], t=tt.ravel(), z=zz.ravel(),
                                alpha=float(alpha))
    m = tr.metrics(pred, ref.reshape(-1, mech.n_species), mech.names)
    return {"alpha": float(alpha), "rel_l2": m["rel_l2"], "mae": m["mae"],
            "per_species": {k: v["rel_l2"]
                            for k, v in m["per_species"].items()}}


def sweep_alpha(alpha_min, alpha_max, n, runner, workers=None):
    """Evaluate ``runner`` at n log-spaced strain rates, possibly in parallel.

    Results come back sorted by strain rate regardless of completion order.
    """
    if n < 1:
        raise ConfigError("sweep needs n >= 1")
    if not (0 < alpha_min <= alpha_max):
        raise ConfigError("need 0 < alpha_min <= alpha_max")
    alphas = np.exp(np.linspace(np.log(alpha_min), np.log(alpha_max), n))
    workers = min(n, workers or max_workers())
    if workers <= 1:
        results = [runner(a) for a in alphas]
    else:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(runner, alphas))
    return sorted(results, key=lambda r: r["alpha"])


class _CheckpointRunner:
    """Picklable sweep worker bound to one run directory."""

    def __init__(self, run_path):
        self.run_path = run_path

    def __call__(self, alpha):
        return _sweep_eval(self.run_path, alpha)


def cmd_sweep(args):
    if not args.run:
        raise ConfigError("sweep needs --run DIR (a parametric training run)")
    cfg, _ = load_run(args.run)
    alpha_min = args.alpha_min if args.alpha_min is not None else cfg.alpha_min
    alpha_max = args.alpha_max if args.alpha_max is not None else cfg.alpha_max
    results = sweep_alpha(alpha_min, alpha_max, args.n,
                          _CheckpointRunner(args.run))
    outdir = args.out or args.run
    ensure_writable(outdir)
    species = list(results[0]["per_species"])
    with open(os.path.join(outdir, "sweep.csv"), "w") as f:
        f.write("alpha,rel_l2,mae," +
                ",".join(f"rel_l2_{s}" for s in species) + "\n")
        for r in results:
            row = [runio.fmt(r["alpha"]), runio.fmt(r["rel_l2"]),
                   runio.fmt(r["mae"])]
            row += [runio.fmt(r["per_species"][s]) for s in species]
            f.write(",".join(row) + "\n")
    runio.write_json(os.path.join(outdir, "sweep.meta.json"),
                     {"config_hash": cfg.hash(), "alpha_min": alpha_min,
                      "alpha_max": alpha_max, "n": args.n})
    for r in results:
        per = " ".join(f"{s}:{v:.2e}" for s, v in r["per_species"].items())
        print(f"alpha {r['alpha']:8.3f}  rel_l2 {r['rel_l2']:.3e}  {per}")
    return 0


# -- argument parsing ------------------------------------------------------------


def add_common(p, training=True):
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--out", help="output directory (default runs/<name>)")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float,
                   help="strain rate of the problem (1/s)")
    p.add_argument("--alpha-min", dest="alpha_min", type=float)
    p.add_argument("--alpha-max", dest="alpha_max", type=float)
    if training:
        p.add_argument("--epochs", type=int)
        p.add_argument("--width", type=int)
        p.add_argument("--depth", type=int)
        p.add_argument("--n-col", dest="n_col", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--flag", action="append", default=[],
                       help="ablation flag (repeatable; overrides the file)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="flamelet-pinn",
        description="Neural and classical solvers for stiff hydrogen "
                    "reaction systems in reactor and flamelet settings.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    for name, fn in (("solve-ivp", cmd_solve_ivp),
                     ("solve-bvp", cmd_solve_bvp),
                     ("solve-pde", cmd_solve_pde)):
        p = sub.add_parser(name, help=f"classical reference {name[6:]}")
        add_common(p, training=False)
        p.set_defaults(func=fn)

    for name, fn in (("train-ivp", cmd_train_ivp),
                     ("train-bvp", cmd_train_bvp),
                     ("train-pde", cmd_train_pde),
                     ("train-parametric", cmd_train_parametric)):
        p = sub.add_parser(name, help=f"train the {name[6:]} network")
        add_common(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("infer-alpha",
                       help="recover the strain rate from observations")
    add_common(p)
    p.add_argument("--alpha-true", dest="alpha_true", type=float,
                   help="data-generating strain rate (default: --alpha)")
    p.add_argument("--noise", type=float,
                   help="observation noise level (fraction of species std)")
    p.set_defaults(func=cmd_infer_alpha)

    p = sub.add_parser("eval", help="score a run against the reference "
                                    "solver, or emit the summary table")
    p.add_argument("--run", help="run directory to score")
    p.add_argument("--against", default="oracle")
    p.add_argument("--table", action="store_true",
                   help="write the forward-results summary table")
    p.add_argument("--runs", nargs="*",
                   help="run directories for --table (default: runs/*)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train proposed vs ablated on the "
                                      "transient flamelet problem")
    add_common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="per-strain-rate misfit of a "
                                     "parametric run")
    p.add_argument("--run", help="parametric run directory")
    p.add_argument("-n", type=int, default=5, help="number of strain rates")
    p.add_argument("--alpha-min", dest="alpha_min", type=float)
    p.add_argument("--alpha-max", dest="alpha_max", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as e:
        print(f"numerical failure ({type(e).__name__}): {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
