"""Synthetic multi-task manifold generators, CSV ingestion and train/test splits.

Random streams: every generator seeds numpy's PCG64 through
``SeedSequence(seed, spawn_key=(task,))``, one stream per task, and draws
that task's latent, sample latents and noise from it in a fixed order.  A
task's samples therefore do not depend on how many other tasks are
generated or in which order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .mt_ksmm import MultiTaskDataset

__all__ = [
    "LabeledMultiTaskDataset",
    "task_rng",
    "saddle_map",
    "shape_map",
    "regression_map",
    "gen_saddle",
    "gen_shape_family",
    "gen_regression",
    "load_csv",
    "save_csv",
    "split_existing_new",
    "subset_tasks",
    "DEFAULT_REGRESSION_PARAMS",
]

SADDLE_DIM = 10
DEFAULT_REGRESSION_PARAMS = {"a": 0.5, "b": 1.0, "c": 0.5, "d": 0.5}


@dataclass
class LabeledMultiTaskDataset(MultiTaskDataset):
    """A dataset plus ground-truth latents, which learners never see."""

    true_z: np.ndarray | None = None  # (N, D_L)
    true_u: np.ndarray | None = None  # (I, D_T)

    def __post_init__(self):
        super().__post_init__()
        if self.true_z is not None:
            self.true_z = np.asarray(self.true_z, float).reshape(self.N, -1)
        if self.true_u is not None:
            self.true_u = np.asarray(self.true_u, float).reshape(self.n_tasks, -1)

    def unlabeled(self) -> MultiTaskDataset:
        return MultiTaskDataset(self.X, self.task_of, self.n_tasks)


def task_rng(seed, task) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(task,))))


def saddle_map(z, u) -> np.ndarray:
    """Noise-free saddle ``(z1, z2, z1^2 - z2^2 + u, 0, ..., 0)`` in 10-D."""
    z = np.atleast_2d(z)
    u = np.broadcast_to(np.asarray(u, float).reshape(-1), (z.shape[0],))
    x = np.zeros((z.shape[0], SADDLE_DIM))
    x[:, 0] = z[:, 0]
    x[:, 1] = z[:, 1]
    x[:, 2] = z[:, 0] ** 2 - z[:, 1] ** 2 + u
    return x


def shape_map(kind, z, u) -> np.ndarray:
    """Stand-in shape families in 10-D (convex, triangle, sine).

    convex:   x3 = z1^2 + z2^2 + u
    triangle: a planar triangle (image of the square under the collapsing map
              (z1, z2) -> (z1, z2 (1 - z1) / 2)), rotated by u*pi/2 in the
              (x1, x2) plane
    sine:     x3 = u sin(pi z1); every task passes through x3 = 0 at
              z1 in {-1, 0, 1}
    """
    z = np.atleast_2d(z)
    u = np.broadcast_to(np.asarray(u, float).reshape(-1), (z.shape[0],))
    x = np.zeros((z.shape[0], SADDLE_DIM))
    if kind == "convex":
        x[:, 0], x[:, 1] = z[:, 0], z[:, 1]
        x[:, 2] = z[:, 0] ** 2 + z[:, 1] ** 2 + u
    elif kind == "triangle":
        p = z[:, 0]
        q = z[:, 1] * (1.0 - z[:, 0]) / 2.0
        ang = u * np.pi / 2.0
        x[:, 0] = np.cos(ang) * p - np.sin(ang) * q
        x[:, 1] = np.sin(ang) * p + np.cos(ang) * q
    elif kind == "sine":
        x[:, 0], x[:, 1] = z[:, 0], z[:, 1]
        x[:, 2] = u * np.sin(np.pi * z[:, 0])
    else:
        raise ValueError(f"unknown shape family {kind!r}")
    return x


def regression_map(t, u, params=None) -> np.ndarray:
    """``s = (a u) sin(t + b u) + (c u) t + d u``."""
    p = {**DEFAULT_REGRESSION_PARAMS, **(params or {})}
    t = np.asarray(t, float)
    u = np.asarray(u, float)
    return p["a"] * u * np.sin(t + p["b"] * u) + p["c"] * u * t + p["d"] * u


def _generate(n_tasks, samples_per_task, sigma, seed, latent_dim, fmap):
    if n_tasks < 1 or samples_per_task < 1:
        raise ValueError("n_tasks and samples_per_task must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    Xs, Zs, U = [], [], np.empty((n_tasks, 1))
    for i in range(n_tasks):
        rng = task_rng(seed, i)
        U[i, 0] = rng.uniform(-1.0, 1.0)
        z = rng.uniform(-1.0, 1.0, size=(samples_per_task, latent_dim))
        x = fmap(z, U[i, 0])
        x = x + sigma * rng.standard_normal(x.shape)
        Xs.append(x)
        Zs.append(z)
    task_of = np.repeat(np.arange(n_tasks), samples_per_task)
    return LabeledMultiTaskDataset(np.vstack(Xs), task_of, n_tasks,
                                   true_z=np.vstack(Zs), true_u=U)


def gen_saddle(n_tasks, samples_per_task, sigma=0.1, seed=0) -> LabeledMultiTaskDataset:
    return _generate(n_tasks, samples_per_task, sigma, seed, 2, saddle_map)


def gen_shape_family(kind, n_tasks, samples_per_task, sigma=0.1, seed=0) -> LabeledMultiTaskDataset:
    if kind not in ("convex", "triangle", "sine"):
        raise ValueError(f"unknown shape family {kind!r}")
    return _generate(n_tasks, samples_per_task, sigma, seed, 2,
                     lambda z, u: shape_map(kind, z, u))


def domain_range(kind, u):
    """Input interval of a regression task."""
    if kind == "plain":
        return -1.0, 1.0
    if kind == "domain_shift":
        return -1.0 + u / 2.0, 1.0 + u / 2.0
    raise ValueError(f"unknown regression kind {kind!r}")


def gen_regression(kind, n_tasks, samples_per_task, params=None, seed=0,
                   sigma=0.0) -> LabeledMultiTaskDataset:
    """Sinusoidal regression tasks with observations ``x = (t, s)``.

    ``plain`` draws ``t ~ U[-1, 1]``; ``domain_shift`` draws
    ``t ~ U[-1 + u/2, 1 + u/2]``.  ``true_z`` holds ``t``.
    """
    p = {**DEFAULT_REGRESSION_PARAMS, **(params or {})}
    if not all(np.isfinite(float(v)) for v in p.values()):
        raise ValueError("regression parameters must be finite")
    domain_range(kind, 0.0)
    if n_tasks < 1 or samples_per_task < 1:
        raise ValueError("n_tasks and samples_per_task must be >= 1")
    Xs, Ts, U = [], [], np.empty((n_tasks, 1))
    for i in range(n_tasks):
        rng = task_rng(seed, i)
        u = rng.uniform(-1.0, 1.0)
        lo, hi = domain_range(kind, u)
        t = rng.uniform(lo, hi, size=samples_per_task)
        s = regression_map(t, u, p) + sigma * rng.standard_normal(samples_per_task)
        U[i, 0] = u
        Xs.append(np.column_stack([t, s]))
        Ts.append(t)
    task_of = np.repeat(np.arange(n_tasks), samples_per_task)
    return LabeledMultiTaskDataset(np.vstack(Xs), task_of, n_tasks,
                                   true_z=np.concatenate(Ts)[:, None], true_u=U)


def load_csv(path, value_columns, task_column, truth_z_columns=None,
             truth_u_columns=None) -> LabeledMultiTaskDataset:
    """Read samples from a CSV with a header row.

    Task labels are mapped to contiguous indices in order of first
    appearance.  Errors name the offending (1-based, header = row 1) row and
    column.
    """
    truth_z_columns = list(truth_z_columns or [])
    truth_u_columns = list(truth_u_columns or [])
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        wanted = list(value_columns) + [task_column] + truth_z_columns + truth_u_columns
        for col in wanted:
            if col not in header:
                raise ValueError(f"{path}: unknown column {col!r}")
        pos = {h: k for k, h in enumerate(header)}
        labels: dict[str, int] = {}
        X, task_of, tz, tu_rows = [], [], [], {}
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: row {rownum} has {len(row)} fields, "
                                 f"expected {len(header)}")

            def num(col):
                cell = row[pos[col]].strip()
                try:
                    return float(cell)
                except ValueError:
                    raise ValueError(f"{path}: row {rownum}, column {col!r}: "
                                     f"non-numeric value {cell!r}") from None

            X.append([num(c) for c in value_columns])
            label = row[pos[task_column]].strip()
            idx = labels.setdefault(label, len(labels))
            task_of.append(idx)
            if truth_z_columns:
                tz.append([num(c) for c in truth_z_columns])
            if truth_u_columns and idx not in tu_rows:
                tu_rows[idx] = [num(c) for c in truth_u_columns]
    if not X:
        raise ValueError(f"{path}: no data rows")
    true_u = np.array([tu_rows[i] for i in range(len(labels))]) if truth_u_columns else None
    return LabeledMultiTaskDataset(np.array(X), np.array(task_of), len(labels),
                                   true_z=np.array(tz) if truth_z_columns else None,
                                   true_u=true_u)


def save_csv(ds: LabeledMultiTaskDataset, path) -> None:
    """Write ``task, x_1..x_D, true_z_*, true_u_*`` columns."""
    D = ds.output_dim
    header = ["task"] + [f"x_{k + 1}" for k in range(D)]
    cols = [ds.X]
    if ds.true_z is not None:
        header += [f"true_z_{k + 1}" for k in range(ds.true_z.shape[1])]
        cols.append(ds.true_z)
    if ds.true_u is not None:
        header += [f"true_u_{k + 1}" for k in range(ds.true_u.shape[1])]
        cols.append(ds.true_u[ds.task_of])
    body = np.hstack(cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, row in zip(ds.task_of, body):
            w.writerow([int(i)] + [repr(float(v)) for v in row])


def subset_tasks(ds: LabeledMultiTaskDataset, tasks, sample_mask=None) -> LabeledMultiTaskDataset:
    """Samples of ``tasks`` (optionally filtered by ``sample_mask``), tasks renumbered in the given order."""
    tasks = np.asarray(tasks, dtype=int)
    remap = np.full(ds.n_tasks, -1)
    remap[tasks] = np.arange(tasks.size)
    keep = remap[ds.task_of] >= 0
    if sample_mask is not None:
        keep &= sample_mask
    idx = np.flatnonzero(keep)
    # sort by new task index, preserving within-task order
    idx = idx[np.argsort(remap[ds.task_of[idx]], kind="stable")]
    return LabeledMultiTaskDataset(
        ds.X[idx], remap[ds.task_of[idx]], tasks.size,
        true_z=None if ds.true_z is None else ds.true_z[idx],
        true_u=None if ds.true_u is None else ds.true_u[tasks],
    )


def split_existing_new(ds: LabeledMultiTaskDataset, n_train_tasks, samples_per_task_train, seed=0):
    """Partition into (train, existing-task test, new-task test).

    Tasks are shuffled by ``seed``; the first ``n_train_tasks`` are training
    tasks, the rest form the new-task pool with all their samples.  Within a
    training task a random subset of ``samples_per_task_train`` samples is kept
    for training and the remainder becomes existing-task test data, which
    shares the training task numbering.  The existing-task test set is
    ``None`` when nothing is held out.
    """
    counts = np.bincount(ds.task_of, minlength=ds.n_tasks)
    if not 1 <= n_train_tasks <= ds.n_tasks:
        raise ValueError(f"n_train_tasks={n_train_tasks} infeasible for {ds.n_tasks} tasks")
    if not 1 <= samples_per_task_train <= counts.min():
        raise ValueError(f"samples_per_task_train={samples_per_task_train} exceeds the "
                         f"smallest task ({counts.min()} samples)")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x5EED,)))
    perm = rng.permutation(ds.n_tasks)
    train_tasks = perm[:n_train_tasks]
    new_tasks = np.sort(perm[n_train_tasks:])
    train_tasks = np.sort(train_tasks)

    in_train = np.zeros(ds.N, dtype=bool)
    for i in train_tasks:
        members = np.flatnonzero(ds.task_of == i)
        chosen = rng.choice(members, size=samples_per_task_train, replace=False)
        in_train[chosen] = True
    train = subset_tasks(ds, train_tasks, in_train)
    held = ~in_train
    is_train_task = np.isin(ds.task_of, train_tasks)
    existing = None
    if np.any(held & is_train_task):
        # keep task numbering aligned with the training set even if some task
        # has no held-out samples
        existing = _subset_keep_numbering(ds, train_tasks, held & is_train_task)
    new = subset_tasks(ds, new_tasks) if new_tasks.size else None
    return train, existing, new


def _subset_keep_numbering(ds, tasks, mask):
    remap = np.full(ds.n_tasks, -1)
    remap[tasks] = np.arange(len(tasks))
    idx = np.flatnonzero(mask)
    idx = idx[np.argsort(remap[ds.task_of[idx]], kind="stable")]
    out = LabeledMultiTaskDataset.__new__(LabeledMultiTaskDataset)
    out.X = ds.X[idx]
    out.task_of = remap[ds.task_of[idx]]
    out.n_tasks = len(tasks)
    out.true_z = None if ds.true_z is None else ds.true_z[idx]
    out.true_u = None if ds.true_u is None else ds.true_u[tasks]
    return out
