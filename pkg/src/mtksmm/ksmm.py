"""Single-task kernel smoothing manifold model (KSMM).

The embedding ``f(z) = V^T phi(z)`` is fitted by kernel smoothing of the
samples around their latent estimates (M-step) and the latents are
re-estimated by nearest-point search on the current manifold (E-step).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _core
from .numerics import (
    BasisConfig,
    QuadratureRule,
    Schedule,
    anneal,
    check_in_cube,
    eval_basis,
    latent_grid,
)

__all__ = [
    "TaskModel",
    "FitState1",
    "init_latents",
    "m_step",
    "e_step",
    "cost",
    "train",
    "decode",
    "save_model",
    "load_model",
]

GRID_FRACTION = 0.6


@dataclass(frozen=True)
class TaskModel:
    coeff: np.ndarray  # (L, D_V)
    basis: BasisConfig

    def __post_init__(self):
        c = np.asarray(self.coeff, float)
        if c.ndim != 2 or c.shape[0] != self.basis.size:
            raise ValueError(f"coeff must have shape ({self.basis.size}, D_V), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coeff contains non-finite entries")
        object.__setattr__(self, "coeff", c)

    @property
    def output_dim(self) -> int:
        return self.coeff.shape[1]


@dataclass
class FitState1:
    Z: np.ndarray
    iteration: int = 0


def init_latents(seed, n, dim) -> np.ndarray:
    """Initial uniform latents in the cube drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(n, dim))


def _check_data(X):
    X = np.asarray(X, float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"X must be a non-empty (N, D_V) matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    return X


def m_step(X, Z, basis: BasisConfig, rule: QuadratureRule, lambda_L: float) -> TaskModel:
    """Kernel-smoothing fit of the coefficient matrix, ``V = A^{-1} B X``."""
    X = _check_data(X)
    Z = np.atleast_2d(check_in_cube(Z, "Z"))
    if Z.shape[0] != X.shape[0]:
        raise ValueError(f"Z has {Z.shape[0]} rows but X has {X.shape[0]}")
    Phi = eval_basis(basis, rule.points)
    H = _core.kernel_at_nodes(rule, Z, lambda_L)
    # one-task form of the multi-task solve: identical arithmetic keeps the
    # single-task reductions exact even when A is poorly conditioned
    N = X.shape[0]
    coeff = _core.smooth_fit(Phi, rule.weights, H, X, weights=np.ones((1, N)),
                             task_of=np.zeros(N, dtype=int))[0]
    return TaskModel(coeff, basis)


def decode(model: TaskModel, z) -> np.ndarray:
    """``f(z) = V^T phi(z)`` for a point (D_L,) or a batch (M, D_L)."""
    return eval_basis(model.basis, z) @ model.coeff


def e_step(
    X,
    model: TaskModel,
    stage: str = "grid",
    grid_res: int = 20,
    grad_iters: int = 5,
    Z=None,
) -> np.ndarray:
    """Latent estimates ``argmin_z |f(z) - x_n|^2`` per sample.

    ``stage="grid"`` searches a regular grid (ties go to the lowest
    lexicographic grid index); ``stage="gradient"`` refines ``Z`` by
    projected gradient descent with backtracking.
    """
    X = _check_data(X)
    coeffs = model.coeff[None]
    task_of = np.zeros(X.shape[0], dtype=int)
    if stage == "grid":
        grid = latent_grid(model.basis.latent_dim, grid_res)
        return _core.grid_search_samples(X, coeffs, task_of, model.basis, grid)
    if stage == "gradient":
        if Z is None:
            raise ValueError("gradient stage needs the current latents Z")
        return _core.gradient_refine_samples(X, check_in_cube(Z, "Z"), coeffs, task_of,
                                             model.basis, grad_iters)
    raise ValueError(f"unknown E-step stage {stage!r}")


def cost(X, Z, model: TaskModel, lambda_L, rule: QuadratureRule, beta=1.0, weights=None) -> float:
    """Quadrature value of the KSMM cost functional.

    ``weights`` (N,) multiplies each sample's kernel; the normalizer is then
    the weight sum instead of N.
    """
    X = _check_data(X)
    Z = np.atleast_2d(check_in_cube(Z, "Z"))
    F = decode(model, rule.points)  # (Q, D)
    H = _core.kernel_at_nodes(rule, Z, lambda_L)  # (Q, N)
    if weights is not None:
        H = H * np.asarray(weights, float)[None, :]
        norm = float(np.sum(weights))
    else:
        norm = X.shape[0]
    sq = (F**2).sum(1)[:, None] - 2.0 * F @ X.T + (X**2).sum(1)[None, :]
    sq = np.maximum(sq, 0.0)
    total = float(rule.weights @ (H * sq).sum(axis=1))
    return beta / (2.0 * norm) * total / 2.0**model.basis.latent_dim


def train(
    X,
    basis: BasisConfig,
    rule: QuadratureRule,
    schedule: Schedule,
    seed=0,
    grid_res: int = 20,
    grad_iters: int = 5,
    Z0=None,
    update_z: bool = True,
):
    """Alternate M and E steps under the annealed kernel width.

    Returns ``(model, Z, trace)`` where ``trace`` holds the cost after each
    iteration.  ``Z0`` overrides the random initialization; ``update_z=False``
    keeps the latents fixed (supervised use).
    """
    X = _check_data(X)
    N = X.shape[0]
    Z = init_latents(seed, N, basis.latent_dim) if Z0 is None else np.array(Z0, float)
    n_grid = int(np.ceil(GRID_FRACTION * schedule.total_iters))
    trace = []
    model = None
    for t in range(schedule.total_iters):
        lam_L, _, _ = anneal(schedule, t)
        model = m_step(X, Z, basis, rule, lam_L)
        if update_z:
            if t < n_grid:
                Z = e_step(X, model, "grid", grid_res)
            else:
                Z = e_step(X, model, "gradient", grad_iters=grad_iters, Z=Z)
        trace.append(cost(X, Z, model, lam_L, rule, schedule.beta))
    return model, Z, np.array(trace)


def model_to_dict(model: TaskModel) -> dict:
    return {
        "kind": "task_model",
        "basis": model.basis.to_dict(),
        "output_dim": model.output_dim,
        "coeff": model.coeff.ravel().tolist(),
    }


def model_from_dict(d: dict) -> TaskModel:
    if d.get("kind") != "task_model":
        raise ValueError(f"not a task model document (kind={d.get('kind')!r})")
    basis = BasisConfig.from_dict(d["basis"])
    coeff = np.array(d["coeff"], float).reshape(basis.size, int(d["output_dim"]))
    return TaskModel(coeff, basis)


def save_model(path, model: TaskModel) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> TaskModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
