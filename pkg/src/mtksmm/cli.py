"""Command-line interface: ``train``, ``evaluate``, ``generate``, ``sweep`` and ``datagen``.

Every command reads a JSON run config (missing keys take the defaults in
``DEFAULT_CONFIG``) and writes the effective config next to its outputs as
``config.effective.json``.  Exit codes: 0 success, 1 runtime or numerical
failure, 2 configuration or I/O failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import mt_ksmm as mt
from . import svg
from .datasets import load_csv, save_csv, split_existing_new
from .numerics import BasisConfig, Schedule, anneal, eval_basis, latent_grid

log = logging.getLogger("mtksmm")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

DEFAULT_CONFIG = {
    "dataset": {
        "name": None,
        "kind": "saddle",
        "n_train_tasks": 400,
        "n_new_tasks": 100,
        "samples_per_task": 100,
        "sigma": None,
        "params": None,
        "data_seed_offset": 0,
        "csv": None,
        "value_columns": None,
        "task_column": "task",
        "truth_z_columns": [],
        "truth_u_columns": [],
    },
    "model": {
        "lower_latent_dim": 2,
        "lower_degree": 4,
        "higher_latent_dim": 1,
        "higher_degree": 4,
        "lower_nodes": 16,
        "higher_nodes": 16,
        "schedule": Schedule().to_dict(),
        "mode": "both",
        "grid_res": 20,
        "task_grid_res": 20,
        "grad_iters": 5,
        "grid_fraction": 0.6,
        "clamp_z": False,
    },
    "train": {"st": 3, "seed": 0},
    "evaluation": {
        "st_list": [3],
        "seeds": [0, 1, 2],
        "modes": ["both", "model_only", "none"],
        "bins": 10,
        "new_rounds": 10,
        "evaluate_new": True,
        "n_dense": 50,
        "datasets": None,
    },
    "output_dir": "out",
    "workers": None,
}


class ConfigError(Exception):
    """Invalid configuration or unusable input file."""


# ---------------------------------------------------------------- config


def _merge(defaults, raw, path=""):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    out = copy.deepcopy(defaults)
    for key, val in raw.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"{where}: unknown field")
        if isinstance(defaults[key], dict) and key != "params":
            out[key] = _merge(defaults[key], val, where)
        else:
            out[key] = val
    return out


def _check(cond, field, msg):
    if not cond:
        raise ConfigError(f"{field}: {msg}")


def _as_int(cfg, section, key, lo):
    val = cfg[section][key]
    field = f"{section}.{key}"
    _check(isinstance(val, int) and not isinstance(val, bool), field, f"must be an integer, got {val!r}")
    _check(val >= lo, field, f"must be >= {lo}, got {val}")
    return val


def validate(cfg: dict) -> dict:
    """Check ranges and referenced files; raises :class:`ConfigError` naming the field."""
    d, m, e = cfg["dataset"], cfg["model"], cfg["evaluation"]
    if d["csv"] is None:
        _check(d["kind"] in ("saddle", "convex", "triangle", "sine", "plain", "domain_shift"),
               "dataset.kind", f"unknown generator {d['kind']!r}")
        _as_int(cfg, "dataset", "n_train_tasks", 1)
        _as_int(cfg, "dataset", "n_new_tasks", 0)
        _as_int(cfg, "dataset", "samples_per_task", 1)
    else:
        _check(Path(d["csv"]).is_file(), "dataset.csv", f"file not found: {d['csv']}")
        _check(isinstance(d["value_columns"], list) and d["value_columns"],
               "dataset.value_columns", "must list the data columns of the CSV")
    if d["sigma"] is not None:
        _check(isinstance(d["sigma"], (int, float)) and d["sigma"] >= 0, "dataset.sigma",
               f"must be >= 0, got {d['sigma']!r}")
    for key, lo in [("lower_latent_dim", 1), ("lower_degree", 0), ("higher_latent_dim", 1),
                    ("higher_degree", 0), ("lower_nodes", 1), ("higher_nodes", 1),
                    ("grid_res", 1), ("task_grid_res", 1), ("grad_iters", 0)]:
        _as_int(cfg, "model", key, lo)
    _check(m["mode"] in ("both", "model_only", "none"), "model.mode",
           f"must be one of both/model_only/none, got {m['mode']!r}")
    _check(isinstance(m["grid_fraction"], (int, float)) and 0 <= m["grid_fraction"] <= 1,
           "model.grid_fraction", "must lie in [0, 1]")
    sched = m["schedule"]
    _check(isinstance(sched, dict), "model.schedule", "expected an object")
    for key, val in sched.items():
        if key not in Schedule().to_dict():
            raise ConfigError(f"model.schedule.{key}: unknown field")
        if key == "total_iters":
            _check(isinstance(val, int) and val >= 1, "model.schedule.total_iters",
                   f"must be an integer >= 1, got {val!r}")
        else:
            _check(isinstance(val, (int, float)) and val > 0, f"model.schedule.{key}",
                   f"must be > 0, got {val!r}")
    for name in ("L", "T", "rho"):
        _check(sched[f"lambda_{name}_start"] >= sched[f"lambda_{name}_end"],
               f"model.schedule.lambda_{name}_start", "must be >= the matching _end value")
    if cfg["train"]["st"] is not None:
        _as_int(cfg, "train", "st", 1)
    _as_int(cfg, "train", "seed", 0)
    _check(isinstance(e["st_list"], list) and e["st_list"], "evaluation.st_list",
           "must be a non-empty list")
    for st in e["st_list"]:
        _check(isinstance(st, int) and st >= 1, "evaluation.st_list", f"bad entry {st!r}")
    _check(isinstance(e["seeds"], list) and e["seeds"], "evaluation.seeds", "must be a non-empty list")
    for s in e["seeds"]:
        _check(isinstance(s, int) and s >= 0, "evaluation.seeds", f"bad entry {s!r}")
    for mode in e["modes"]:
        _check(mode in ("both", "model_only", "none"), "evaluation.modes", f"unknown mode {mode!r}")
    _as_int(cfg, "evaluation", "bins", 1)
    _as_int(cfg, "evaluation", "new_rounds", 0)
    _as_int(cfg, "evaluation", "n_dense", 2)
    if e["datasets"] is not None:
        _check(isinstance(e["datasets"], list) and e["datasets"], "evaluation.datasets",
               "must be a non-empty list of dataset overrides")
        for k, spec in enumerate(e["datasets"]):
            _merge(DEFAULT_CONFIG["dataset"], spec, f"evaluation.datasets[{k}]")
    if cfg["workers"] is not None:
        _check(isinstance(cfg["workers"], int) and cfg["workers"] >= 1, "workers", "must be >= 1")
    return cfg


def load_config(path, overrides=None) -> dict:
    """Read a JSON config, apply defaults and overrides, validate."""
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    cfg = _merge(DEFAULT_CONFIG, raw)
    for key, val in (overrides or {}).items():
        section, _, field = key.partition(".")
        if field:
            cfg[section][field] = val
        else:
            cfg[section] = val
    if cfg["workers"] is None:
        cfg["workers"] = os.cpu_count() or 1
    return validate(cfg)


def mt_config(cfg: dict, mode=None) -> mt.MTConfig:
    m = cfg["model"]
    return mt.MTConfig(
        lower_basis=BasisConfig(m["lower_latent_dim"], m["lower_degree"]),
        higher_basis=BasisConfig(m["higher_latent_dim"], m["higher_degree"]),
        lower_nodes=m["lower_nodes"],
        higher_nodes=m["higher_nodes"],
        schedule=Schedule.from_dict(m["schedule"]),
        mode=mode or m["mode"],
        grid_res=m["grid_res"],
        task_grid_res=m["task_grid_res"],
        grad_iters=m["grad_iters"],
        grid_fraction=m["grid_fraction"],
    )


def _dataset_spec(dcfg: dict) -> dict:
    spec = {k: v for k, v in dcfg.items() if v is not None}
    spec.setdefault("name", dcfg["kind"])
    return spec


def _dataset_variants(cfg):
    base = cfg["dataset"]
    if cfg["evaluation"]["datasets"] is None:
        return [base]
    return [_merge(base, over) for over in cfg["evaluation"]["datasets"]]


def _is_regression(dcfg, cfg):
    return cfg["model"]["clamp_z"] and dcfg["kind"] in ev.REGRESSION_KINDS and dcfg["csv"] is None


def load_dataset(dcfg: dict, seed: int):
    if dcfg["csv"] is not None:
        try:
            return load_csv(dcfg["csv"], dcfg["value_columns"], dcfg["task_column"],
                            dcfg["truth_z_columns"], dcfg["truth_u_columns"])
        except ValueError as exc:
            raise ConfigError(f"dataset.csv: {exc}") from None
    return ev.generate_dataset(_dataset_spec(dcfg), seed)


def _split(ds, dcfg, st, seed):
    n_train = ds.n_tasks if dcfg["csv"] is not None else min(dcfg["n_train_tasks"], ds.n_tasks)
    if st is None:
        st = int(np.bincount(ds.task_of).min())
    try:
        return split_existing_new(ds, n_train, st, seed)
    except ValueError as exc:
        raise ConfigError(f"train.st: {exc}") from None


# ---------------------------------------------------------------- output helpers


def _outdir(args, cfg) -> Path:
    out = Path(args.out or cfg["output_dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def _write_effective(cfg, out: Path):
    with open(out / "config.effective.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([ev._fmt(r[c]) for c in columns])


def _regression_summary(rows):
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["dataset"], r["mode"], r["st"]), []).append(r["mse_dense"])
    return [{"dataset": k[0], "mode": k[1], "st": k[2], "n_seeds": len(v),
             "mse_dense_mean": float(np.mean(v)), "mse_dense_std": float(np.std(v))}
            for k, v in groups.items()]


# ---------------------------------------------------------------- commands


def cmd_train(args, cfg) -> int:
    dcfg = cfg["dataset"]
    seed = cfg["train"]["seed"]
    ds = load_dataset(dcfg, seed)
    train_set, existing, new = _split(ds, dcfg, cfg["train"]["st"], seed)
    out = _outdir(args, cfg)
    config = mt_config(cfg)
    Z0, update_z = None, True
    if _is_regression(dcfg, cfg):
        Z0, update_z = ev.regression_latents(dcfg["kind"], train_set.true_z[:, 0]), False
    if Z0 is not None:
        _check(config.lower_basis.latent_dim == 1, "model.lower_latent_dim",
               "clamped regression latents are 1-D")
    log.info("training mode=%s on %d samples from %d tasks", config.mode.value, train_set.N,
             train_set.n_tasks)
    model, state, trace = mt.train(train_set.unlabeled(), config, seed, Z0=Z0, update_z=update_z)

    mt.save_model(out / "model.json", model, None if config.mode is mt.TransferMode.NONE
                  else state.U, config.schedule, config.mode)
    with open(out / "fit_state.json", "w") as fh:
        json.dump({"iteration": state.iteration, "task_of": train_set.task_of.tolist(),
                   "Z": state.Z.tolist(), "U": state.U.tolist()}, fh)
    rows = []
    for t, c in enumerate(trace):
        lam = anneal(config.schedule, t)
        rows.append({"iteration": t, "lambda_L": lam[0], "lambda_T": lam[1], "lambda_rho": lam[2],
                     "lower_cost": float(c)})
    _write_rows(out / "trace.csv", ["iteration", "lambda_L", "lambda_T", "lambda_rho", "lower_cost"],
                rows)

    report = {"mode": config.mode.value, "n_train_samples": int(train_set.N),
              "n_train_tasks": int(train_set.n_tasks), "final_lower_cost": float(trace[-1])}
    if Z0 is not None:
        report["mse_dense"] = ev.regression_error(model, state.U, train_set, dcfg["kind"],
                                                  dcfg["params"], cfg["evaluation"]["n_dense"])
    elif existing is not None:
        report.update(ev.evaluate_model(model, state, existing, None, config,
                                        bins=cfg["evaluation"]["bins"]))
    with open(out / "train_report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_effective(cfg, out)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def _load_model_file(path):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"model file not found: {p}")
    try:
        return mt.load_model(p)
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ConfigError(f"{p}: not a readable model file ({exc})") from None


def _check_compatible(model, ds, cfg):
    m = cfg["model"]
    problems = []
    if model.output_dim != ds.output_dim:
        problems.append(f"model D_V={model.output_dim} but data D_V={ds.output_dim}")
    lb = model.lower_basis
    if (lb.latent_dim, lb.max_degree_per_dim) != (m["lower_latent_dim"], m["lower_degree"]):
        problems.append(f"model lower basis (dim {lb.latent_dim}, degree {lb.max_degree_per_dim}) "
                        f"but config (dim {m['lower_latent_dim']}, degree {m['lower_degree']})")
    if isinstance(model, mt.GeneralModel):
        hb = model.higher_basis
        if (hb.latent_dim, hb.max_degree_per_dim) != (m["higher_latent_dim"], m["higher_degree"]):
            problems.append(f"model higher basis (dim {hb.latent_dim}, degree "
                            f"{hb.max_degree_per_dim}) but config (dim {m['higher_latent_dim']}, "
                            f"degree {m['higher_degree']})")
    if problems:
        raise ConfigError("model and config are incompatible: " + "; ".join(problems))


def cmd_evaluate(args, cfg) -> int:
    e = cfg["evaluation"]
    if args.model:
        model, meta = _load_model_file(args.model)
        out = _outdir(args, cfg)
        dcfg = cfg["dataset"]
        seed = cfg["train"]["seed"]
        ds = load_dataset(dcfg, seed)
        _check_compatible(model, ds, cfg)
        train_set, existing, new = _split(ds, dcfg, cfg["train"]["st"], seed)
        mode = meta.get("mode", mt.TransferMode(cfg["model"]["mode"]))
        config = mt_config(cfg, mode)
        U = meta.get("U")
        if isinstance(model, mt.GeneralModel):
            if U is None or U.shape[0] != train_set.n_tasks:
                raise ConfigError(f"model stores {0 if U is None else U.shape[0]} task latents but "
                                  f"the split has {train_set.n_tasks} training tasks")
        elif model.n_tasks != train_set.n_tasks:
            raise ConfigError(f"model stores {model.n_tasks} task models but the split has "
                              f"{train_set.n_tasks} training tasks")
        state = mt.MTFitState(Z=None, U=U, rho=None, V_stack=None)
        name = dcfg["name"] or dcfg["kind"]
        if _is_regression(dcfg, cfg):
            row = {"dataset": name, "mode": mode.value, "st": cfg["train"]["st"], "seed": seed,
                   "mse_dense": ev.regression_error(model, U, train_set, dcfg["kind"],
                                                    dcfg["params"], e["n_dense"]),
                   "runtime_s": None}
            _write_rows(out / "regression.csv", ev.REGRESSION_COLUMNS, [row])
        else:
            metrics = ev.evaluate_model(model, state, existing, new if e["evaluate_new"] else None,
                                        config, e["new_rounds"], e["bins"])
            rep = ev.MetricReport(dataset=name, mode=mode.value, st=int(cfg["train"]["st"] or 0),
                                  seed=seed, **metrics)
            ev.reports_to_csv([rep], out / "metrics.csv")
            ev.summary_to_csv(ev.summarize([rep]), out / "summary.csv")
            print(json.dumps(metrics, sort_keys=True))
        _write_effective(cfg, out)
        return EXIT_OK

    out = _outdir(args, cfg)
    reports, reg_rows = _run_grid(cfg)
    if reports:
        ev.reports_to_csv(reports, out / "metrics.csv")
        ev.summary_to_csv(ev.summarize(reports), out / "summary.csv")
    if reg_rows:
        _write_rows(out / "regression.csv", ev.REGRESSION_COLUMNS, reg_rows)
        summ = _regression_summary(reg_rows)
        _write_rows(out / "regression_summary.csv", list(summ[0]), summ)
    _write_effective(cfg, out)
    return EXIT_OK


def _run_grid(cfg):
    e = cfg["evaluation"]
    reports, reg_rows = [], []
    for dcfg in _dataset_variants(cfg):
        if dcfg["csv"] is not None:
            raise ConfigError("dataset.csv: method comparison needs a generator; use "
                              "'train' and 'evaluate --model' for CSV data")
        spec = _dataset_spec(dcfg)
        if _is_regression(dcfg, cfg):
            for st in e["st_list"]:
                for seed in e["seeds"]:
                    for mode in e["modes"]:
                        reg_rows.append(ev.run_regression_cell(spec, st, seed, mode, mt_config(cfg),
                                                               e["n_dense"]))
        else:
            reports += ev.compare_methods(spec, e["st_list"], e["seeds"], mt_config(cfg),
                                          e["modes"], e["evaluate_new"], e["new_rounds"], e["bins"],
                                          workers=cfg["workers"])
    return reports, reg_rows


def cmd_sweep(args, cfg) -> int:
    out = _outdir(args, cfg)
    reports, reg_rows = _run_grid(cfg)
    if reports:
        ev.reports_to_csv(reports, out / "sweep.csv")
        rows = ev.summarize(reports)
        ev.summary_to_csv(rows, out / "sweep_summary.csv")
        for metric, label in [("rmse_existing", "RMSE (existing tasks)"),
                              ("mi_existing", "MI (existing tasks)"),
                              ("rmse_new", "RMSE (new tasks)"), ("mi_new", "MI (new tasks)")]:
            series = _series(rows, metric)
            if series:
                (out / f"sweep_{metric}.svg").write_text(
                    svg.line_plot(series, label + " vs samples per task", "samples per task", label))
    if reg_rows:
        _write_rows(out / "sweep_regression.csv", ev.REGRESSION_COLUMNS, reg_rows)
        summ = _regression_summary(reg_rows)
        _write_rows(out / "sweep_regression_summary.csv", list(summ[0]), summ)
        series = _series(summ, "mse_dense")
        (out / "sweep_mse_dense.svg").write_text(
            svg.line_plot(series, "dense-input MSE vs samples per task", "samples per task", "MSE"))
    _write_effective(cfg, out)
    return EXIT_OK


def _series(rows, metric):
    series = {}
    datasets = sorted({r["dataset"] for r in rows})
    for r in sorted(rows, key=lambda r: (r["dataset"], r["mode"], r["st"])):
        mean = r.get(f"{metric}_mean")
        if mean is None or not np.isfinite(mean):
            continue
        key = r["mode"] if len(datasets) == 1 else f"{r['dataset']}/{r['mode']}"
        x, y, err = series.setdefault(key, ([], [], []))
        x.append(r["st"])
        y.append(mean)
        err.append(r[f"{metric}_std"] if r["n_seeds"] > 1 else 0.0)
    return series


def _parse_points(text, dim, name):
    text = (text or "").strip()
    if not text:
        return np.zeros((0, dim))
    try:
        pts = np.array([[float(v) for v in p.split(",")] for p in text.split(";")], float)
    except ValueError:
        raise ConfigError(f"--{name}: expected 'a,b;c,d' style numbers, got {text!r}") from None
    if pts.shape[1] != dim:
        raise ConfigError(f"--{name}: points need {dim} coordinates, got {pts.shape[1]}")
    if np.any(np.abs(pts) > 1):
        raise ConfigError(f"--{name}: latents must lie in [-1, 1]")
    return pts


def cmd_generate(args, cfg) -> int:
    if not args.model:
        raise ConfigError("generate needs --model")
    model, meta = _load_model_file(args.model)
    out = _outdir(args, cfg)
    D_L, D_V = model.lower_basis.latent_dim, model.output_dim
    Z = latent_grid(D_L, args.z_grid) if args.z_grid else _parse_points(args.z, D_L, "z")
    blocks, labels = [], []
    if isinstance(model, mt.TaskModelStack):
        tasks = [int(t) for t in args.tasks.split(",")] if args.tasks else list(range(model.n_tasks))
        for t in tasks:
            if not 0 <= t < model.n_tasks:
                raise ConfigError(f"--tasks: task {t} outside 0..{model.n_tasks - 1}")
            X = eval_basis(model.lower_basis, Z) @ model.coeff[t] if len(Z) else np.zeros((0, D_V))
            blocks.append(np.c_[np.full(len(Z), t), Z, X])
            labels.append(f"task {t}")
        header = ["task"]
    else:
        D_T = model.higher_basis.latent_dim
        if args.u_grid:
            U = latent_grid(D_T, args.u_grid)
        elif args.u:
            U = _parse_points(args.u, D_T, "u")
        elif "U" in meta:
            U = meta["U"]
        else:
            raise ConfigError("generate needs task latents via --u or --u-grid")
        for u in U:
            X = (mt.general_decode(model, Z, np.repeat(u[None], len(Z), 0)) if len(Z)
                 else np.zeros((0, D_V)))
            blocks.append(np.c_[np.tile(u, (len(Z), 1)), Z, X])
            labels.append("u=" + ",".join(f"{v:.2f}" for v in u))
        header = [f"u_{k + 1}" for k in range(D_T)]
    header += [f"z_{k + 1}" for k in range(D_L)] + [f"x_{k + 1}" for k in range(D_V)]
    with open(out / "generated.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for block in blocks:
            for row in block:
                cells = [ev._fmt(float(v)) for v in row]
                if header[0] == "task":
                    cells[0] = str(int(row[0]))
                w.writerow(cells)
    if args.plot and len(Z):
        try:
            a, b = (int(k) - 1 for k in args.plot.split(","))
        except ValueError:
            raise ConfigError("--plot: expected two 1-based output coordinates like '1,3'") from None
        if not (0 <= a < D_V and 0 <= b < D_V):
            raise ConfigError(f"--plot: coordinates must lie in 1..{D_V}")
        groups = {lab: blk[:, -D_V:][:, [a, b]] for lab, blk in zip(labels, blocks)}
        (out / "generated.svg").write_text(
            svg.scatter_plot(groups, "decoded points", f"x_{a + 1}", f"x_{b + 1}"))
    _write_effective(cfg, out)
    return EXIT_OK


def cmd_datagen(args, cfg) -> int:
    out = _outdir(args, cfg)
    dcfg = cfg["dataset"]
    if dcfg["csv"] is not None:
        raise ConfigError("dataset.csv: datagen needs a generator kind, not a CSV input")
    save_csv(load_dataset(dcfg, cfg["train"]["seed"]), out / "data.csv")
    _write_effective(cfg, out)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "generate": cmd_generate,
            "sweep": cmd_sweep, "datagen": cmd_datagen}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtksmm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run config (defaults apply to missing keys)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--workers", type=int, help="parallel evaluation cells")
        if name in ("evaluate", "generate"):
            p.add_argument("--model", help="model JSON written by 'train'")
        if name == "generate":
            p.add_argument("--z", help="sample latents, 'a,b;c,d'")
            p.add_argument("--z-grid", type=int, help="regular grid resolution per latent dim")
            p.add_argument("--u", help="task latents, 'a;b'")
            p.add_argument("--u-grid", type=int, help="regular task-latent grid resolution")
            p.add_argument("--tasks", help="task indices for single-task model stacks, 'i,j'")
            p.add_argument("--plot", help="two 1-based output coordinates for an SVG scatter")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        overrides = {}
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0")
            overrides["train.seed"] = args.seed
            overrides["evaluation.seeds"] = [args.seed]
        if args.workers is not None:
            overrides["workers"] = args.workers
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
