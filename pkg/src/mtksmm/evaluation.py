"""Reconstruction RMSE, histogram mutual information and the method comparison runner.

RMSE convention: ``sqrt(mean_m |x_hat_m - x_m|^2)``, the Euclidean norm per
sample averaged over samples (not over individual coordinates).

MI: plug-in estimate on a joint histogram with ``bins_per_dim`` equal-width
bins spanning each coordinate's observed range; reported in nats.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import _core
from .datasets import (
    LabeledMultiTaskDataset,
    domain_range,
    gen_regression,
    gen_saddle,
    gen_shape_family,
    regression_map,
    split_existing_new,
)
from .mt_ksmm import (
    MTConfig,
    MultiTaskDataset,
    TaskModelStack,
    TransferMode,
    fit_new_task,
    task_coefficients,
    train,
)
from .numerics import eval_basis, latent_grid

__all__ = [
    "MetricReport",
    "rmse",
    "mutual_information",
    "reconstruct_existing",
    "reconstruct_new",
    "generate_dataset",
    "evaluate_model",
    "run_cell",
    "compare_methods",
    "summarize",
    "reports_to_csv",
    "summary_to_csv",
    "regression_latents",
    "regression_error",
    "run_regression_cell",
    "METRIC_COLUMNS",
    "REGRESSION_COLUMNS",
]

log = logging.getLogger(__name__)

METRIC_COLUMNS = ["dataset", "mode", "st", "seed", "rmse_existing", "mi_existing",
                  "rmse_new", "mi_new", "runtime_s"]
REGRESSION_COLUMNS = ["dataset", "mode", "st", "seed", "mse_dense", "runtime_s"]
REGRESSION_KINDS = ("plain", "domain_shift")
MODES = (TransferMode.BOTH, TransferMode.MODEL_ONLY, TransferMode.NONE)


@dataclass
class MetricReport:
    dataset: str
    mode: str
    st: int
    seed: int
    rmse_existing: float = float("nan")
    mi_existing: float = float("nan")
    rmse_new: float = float("nan")
    mi_new: float = float("nan")
    runtime_s: float | None = None


def rmse(predictions, targets) -> float:
    P = np.atleast_2d(np.asarray(predictions, float))
    T = np.atleast_2d(np.asarray(targets, float))
    if P.shape != T.shape:
        raise ValueError(f"shape mismatch: predictions {P.shape} vs targets {T.shape}")
    if P.shape[0] < 1:
        raise ValueError("need at least one sample")
    return float(np.sqrt(np.mean(((P - T) ** 2).sum(axis=1))))


def _bin_codes(A, bins):
    A = np.asarray(A, float)
    lo = A.min(axis=0)
    span = A.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    idx = np.floor((A - lo) / safe * bins).astype(np.int64)
    idx = np.clip(idx, 0, bins - 1)
    idx[:, span <= 0] = 0
    code = np.zeros(A.shape[0], dtype=np.int64)
    for k in range(A.shape[1]):
        code = code * bins + idx[:, k]
    return code


def mutual_information(A, B, bins_per_dim=10) -> float:
    """Plug-in MI (nats) of the joint equal-width histogram of ``A`` and ``B``."""
    A = np.asarray(A, float).reshape(len(A), -1)
    B = np.asarray(B, float).reshape(len(B), -1)
    M = A.shape[0]
    if B.shape[0] != M:
        raise ValueError("A and B must have the same number of rows")
    if M < 2:
        raise ValueError("need at least two samples")
    ca = _bin_codes(A, bins_per_dim)
    cb = _bin_codes(B, bins_per_dim)
    _, ia = np.unique(ca, return_inverse=True)
    _, ib = np.unique(cb, return_inverse=True)
    na = np.bincount(ia).astype(float)
    nb = np.bincount(ib).astype(float)
    joint = ia.astype(np.int64) * (ib.max() + 1) + ib
    cells, nab = np.unique(joint, return_counts=True)
    pa = na[cells // (ib.max() + 1)]
    pb = nb[cells % (ib.max() + 1)]
    nab = nab.astype(float)
    terms = nab / M * np.log(nab * M / (pa * pb))
    # order-independent summation keeps MI(A, B) == MI(B, A) bit-for-bit
    return float(max(np.sum(np.sort(terms)), 0.0))


def _project(X, coeffs, task_of, basis, grid_res, grad_iters):
    grid = latent_grid(basis.latent_dim, grid_res)
    Z = _core.grid_search_samples(X, coeffs, task_of, basis, grid)
    if grad_iters > 0:
        Z = _core.gradient_refine_samples(X, Z, coeffs, task_of, basis, grad_iters)
    Phi = eval_basis(basis, Z)
    pred = np.einsum("nl,nld->nd", Phi, coeffs[task_of])
    return pred, Z


def reconstruct_existing(model, state, test: MultiTaskDataset, grid_res=20, grad_iters=5):
    """Reconstruct test samples of trained tasks with their training-phase task latents.

    Returns ``(predictions, Z_hat)``.
    """
    n_known = model.n_tasks if isinstance(model, TaskModelStack) else np.atleast_2d(state.U).shape[0]
    if test.task_of.size and test.task_of.max() >= n_known:
        raise ValueError(f"test task index {int(test.task_of.max())} was not seen in training "
                         f"({n_known} tasks)")
    coeffs = task_coefficients(model, None if isinstance(model, TaskModelStack) else state.U)
    return _project(test.X, coeffs, test.task_of, model.lower_basis, grid_res, grad_iters)


def reconstruct_new(model, new: MultiTaskDataset, rounds=10, grid_res=20, task_grid_res=20,
                    grad_iters=5):
    """Fit every new task with the model frozen; returns ``(predictions, Z_hat, U_hat)``."""
    pred = np.empty_like(new.X)
    Zh = np.empty((new.N, model.lower_basis.latent_dim))
    U = []
    for i in range(new.n_tasks):
        idx = new.members(i)
        u, Z = fit_new_task(new.X[idx], model, rounds, grid_res, task_grid_res, grad_iters)
        if isinstance(model, TaskModelStack):
            coeff = model.coeff[int(u[0])]
        else:
            coeff = task_coefficients(model, np.atleast_2d(u))[0]
        pred[idx] = eval_basis(model.lower_basis, Z) @ coeff
        Zh[idx] = Z
        U.append(np.ravel(u))
    return pred, Zh, np.array(U)


def generate_dataset(spec: dict, seed: int) -> LabeledMultiTaskDataset:
    """Build the full task pool described by a dataset spec dict."""
    kind = spec.get("kind", "saddle")
    n = int(spec.get("n_train_tasks", 400)) + int(spec.get("n_new_tasks", 100))
    spt = int(spec.get("samples_per_task", 100))
    sigma = float(spec.get("sigma", 0.0 if kind in REGRESSION_KINDS else 0.1))
    dseed = int(spec.get("data_seed_offset", 0)) + seed
    if kind == "saddle":
        return gen_saddle(n, spt, sigma, dseed)
    if kind in ("convex", "triangle", "sine"):
        return gen_shape_family(kind, n, spt, sigma, dseed)
    if kind in ("plain", "domain_shift"):
        return gen_regression(kind, n, spt, spec.get("params"), dseed, sigma)
    raise ValueError(f"unknown dataset kind {kind!r}")


def evaluate_model(model, state, existing, new, config: MTConfig, new_rounds=10, bins=10):
    """RMSE and MI of one trained model on existing-task and new-task test sets."""
    out = {}
    if existing is not None and existing.N > 0:
        pred, Zh = reconstruct_existing(model, state, existing, config.grid_res, config.grad_iters)
        out["rmse_existing"] = rmse(pred, existing.X)
        if getattr(existing, "true_z", None) is not None:
            out["mi_existing"] = mutual_information(existing.true_z, Zh, bins)
    if new is not None and new.N > 0:
        pred, Zh, _ = reconstruct_new(model, new, new_rounds, config.grid_res,
                                      config.task_grid_res, config.grad_iters)
        out["rmse_new"] = rmse(pred, new.X)
        if getattr(new, "true_z", None) is not None:
            out["mi_new"] = mutual_information(new.true_z, Zh, bins)
    return out


def _config_for_mode(config: MTConfig, mode) -> MTConfig:
    return replace(config, mode=TransferMode(mode))


def run_cell(dataset_spec: dict, st: int, seed: int, mode, config: MTConfig,
             evaluate_new=True, new_rounds=10, bins=10, record_runtime=False) -> MetricReport:
    """Generate, split, train and evaluate one (S/T, seed, mode) cell."""
    t0 = time.perf_counter()
    ds = generate_dataset(dataset_spec, seed)
    train_set, existing, new = split_existing_new(
        ds, int(dataset_spec.get("n_train_tasks", 400)), st, seed)
    cfg = _config_for_mode(config, mode)
    model, state, _ = train(train_set.unlabeled(), cfg, seed)
    metrics = evaluate_model(model, state, existing, new if evaluate_new else None, cfg,
                             new_rounds, bins)
    rep = MetricReport(dataset=dataset_spec.get("name", dataset_spec.get("kind", "saddle")),
                       mode=TransferMode(mode).value, st=int(st), seed=int(seed), **metrics)
    if record_runtime:
        rep.runtime_s = time.perf_counter() - t0
    log.info("cell %s mode=%s st=%d seed=%d: %s", rep.dataset, rep.mode, st, seed, metrics)
    return rep


def regression_latents(kind, t) -> np.ndarray:
    """Map regression inputs ``t`` into the latent cube: the widest input range
    over all tasks is scaled onto [-1, 1]."""
    lo, _ = domain_range(kind, -1.0)
    _, hi = domain_range(kind, 1.0)
    bound = max(abs(lo), abs(hi))
    return np.clip(np.asarray(t, float) / bound, -1.0, 1.0).reshape(-1, 1)


def regression_error(model, U, tasks: LabeledMultiTaskDataset, kind, params=None,
                     n_dense=50) -> float:
    """Mean squared error of the predicted ``s`` on a dense input grid per task.

    Each task is evaluated on ``n_dense`` evenly spaced inputs over its own
    domain, against the noise-free regression function at its true ``u``.
    """
    coeffs = task_coefficients(model, None if isinstance(model, TaskModelStack) else U)
    errs = []
    for i in range(tasks.n_tasks):
        u = float(tasks.true_u[i, 0])
        lo, hi = domain_range(kind, u)
        t = np.linspace(lo, hi, n_dense)
        pred = eval_basis(model.lower_basis, regression_latents(kind, t)) @ coeffs[i]
        errs.append((pred[:, 1] - regression_map(t, u, params)) ** 2)
    return float(np.mean(np.concatenate(errs)))


def run_regression_cell(dataset_spec: dict, st: int, seed: int, mode, config: MTConfig,
                        n_dense=50, record_runtime=False) -> dict:
    """Regression toy: train with z fixed to the scaled input (lower E-step skipped)."""
    t0 = time.perf_counter()
    kind = dataset_spec.get("kind", "plain")
    if kind not in REGRESSION_KINDS:
        raise ValueError(f"regression cells need kind in {REGRESSION_KINDS}, got {kind!r}")
    ds = generate_dataset(dataset_spec, seed)
    train_set, _, _ = split_existing_new(ds, int(dataset_spec.get("n_train_tasks", 400)), st, seed)
    cfg = _config_for_mode(config, mode)
    Z0 = regression_latents(kind, train_set.true_z[:, 0])
    model, state, _ = train(train_set.unlabeled(), cfg, seed, Z0=Z0, update_z=False)
    row = {"dataset": dataset_spec.get("name", kind), "mode": TransferMode(mode).value,
           "st": int(st), "seed": int(seed),
           "mse_dense": regression_error(model, state.U, train_set, kind,
                                         dataset_spec.get("params"), n_dense),
           "runtime_s": time.perf_counter() - t0 if record_runtime else None}
    log.info("regression cell %s mode=%s st=%d seed=%d: mse=%.6g", row["dataset"], row["mode"],
             st, seed, row["mse_dense"])
    return row


def _run_cell_args(args):
    return run_cell(*args)


def compare_methods(dataset_spec: dict, st_list, seeds, config: MTConfig = MTConfig(),
                    modes=MODES, evaluate_new=True, new_rounds=10, bins=10, workers=1,
                    record_runtime=False) -> list[MetricReport]:
    """Evaluate every (S/T, seed, mode) cell; all modes of a seed share one split."""
    jobs = [(dataset_spec, int(st), int(seed), TransferMode(m), config, evaluate_new,
             new_rounds, bins, record_runtime)
            for st in st_list for seed in seeds for m in modes]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_run_cell_args, jobs))
    return [_run_cell_args(j) for j in jobs]


def summarize(reports) -> list[dict]:
    """Mean and standard deviation over seeds per (dataset, mode, S/T)."""
    groups: dict = {}
    for r in reports:
        groups.setdefault((r.dataset, r.mode, r.st), []).append(r)
    rows = []
    for (dataset, mode, st), rs in groups.items():
        row = {"dataset": dataset, "mode": mode, "st": st, "n_seeds": len(rs)}
        for m in ("rmse_existing", "mi_existing", "rmse_new", "mi_new"):
            v = np.array([getattr(r, m) for r in rs], float)
            row[f"{m}_mean"] = float(np.mean(v))
            row[f"{m}_std"] = float(np.std(v))
        rows.append(row)
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def reports_to_csv(reports, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in reports:
        d = asdict(r)
        w.writerow([_fmt(d[c]) for c in METRIC_COLUMNS])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def summary_to_csv(rows, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if rows:
        cols = list(rows[0].keys())
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in cols])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
