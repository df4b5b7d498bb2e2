"""Multi-task KSMM: lower KSMMs per task coordinated by a higher-order KSMM.

One training iteration runs, in order:

1. instance transfer: sample weights ``rho[i, n]`` from task-latent distances,
2. lower M-step: weighted kernel smoothing per task, giving ``V_i``,
3. higher M-step: kernel smoothing of the ``V_i`` over the task latent
   space, giving the general model tensor ``W``,
4. higher E-step: task latents ``u_i``,
5. lower E-step: sample latents ``z_n`` under ``G(., u_{i_n})``.

``TransferMode`` selects the full method (``both``), the model-transfer-only
baseline (``model_only``) or independent single-task KSMMs (``none``).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import optimize

from . import _core
from .numerics import (
    BasisConfig,
    QuadratureRule,
    Schedule,
    anneal,
    check_in_cube,
    eval_basis,
    eval_basis_grad,
    kernel_matrix,
    latent_grid,
    quadrature_grid,
)

__all__ = [
    "TransferMode",
    "MultiTaskDataset",
    "GeneralModel",
    "TaskModelStack",
    "MTFitState",
    "MTConfig",
    "instance_transfer",
    "lower_m_step",
    "higher_m_step",
    "higher_e_step",
    "lower_e_step",
    "task_coefficients",
    "general_decode",
    "lower_cost",
    "higher_cost",
    "manifold_distance",
    "train",
    "fit_new_task",
    "save_model",
    "load_model",
]

POLISH_MAXITER = 200


class TransferMode(str, enum.Enum):
    NONE = "none"
    MODEL_ONLY = "model_only"
    BOTH = "both"


@dataclass
class MultiTaskDataset:
    X: np.ndarray  # (N, D_V)
    task_of: np.ndarray  # (N,) indices in [0, I)
    n_tasks: int

    def __post_init__(self):
        self.X = np.asarray(self.X, float)
        self.task_of = np.asarray(self.task_of, dtype=int)
        if self.X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {self.X.shape}")
        if self.task_of.shape != (self.X.shape[0],):
            raise ValueError("task_of must have one entry per sample")
        if self.n_tasks < 1:
            raise ValueError("need at least one task")
        if self.task_of.size and (self.task_of.min() < 0 or self.task_of.max() >= self.n_tasks):
            raise ValueError("task index out of range")
        counts = np.bincount(self.task_of, minlength=self.n_tasks)
        if np.any(counts == 0):
            empty = np.flatnonzero(counts == 0)[:5].tolist()
            raise ValueError(f"tasks without samples: {empty}")

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def output_dim(self) -> int:
        return self.X.shape[1]

    def members(self, i) -> np.ndarray:
        return np.flatnonzero(self.task_of == i)


@dataclass(frozen=True)
class GeneralModel:
    W: np.ndarray  # (K, L, D_V)
    lower_basis: BasisConfig
    higher_basis: BasisConfig

    def __post_init__(self):
        W = np.asarray(self.W, float)
        want = (self.higher_basis.size, self.lower_basis.size)
        if W.ndim != 3 or W.shape[:2] != want:
            raise ValueError(f"W must have shape {want + ('D_V',)}, got {W.shape}")
        if not np.all(np.isfinite(W)):
            raise ValueError("W contains non-finite entries")
        object.__setattr__(self, "W", W)

    @property
    def output_dim(self) -> int:
        return self.W.shape[2]


@dataclass(frozen=True)
class TaskModelStack:
    """Independent task models; the general model of transfer mode ``none``."""

    coeff: np.ndarray  # (I, L, D_V)
    lower_basis: BasisConfig

    def __post_init__(self):
        c = np.asarray(self.coeff, float)
        if c.ndim != 3 or c.shape[1] != self.lower_basis.size:
            raise ValueError(f"coeff must have shape (I, {self.lower_basis.size}, D_V)")
        object.__setattr__(self, "coeff", c)

    @property
    def output_dim(self) -> int:
        return self.coeff.shape[2]

    @property
    def n_tasks(self) -> int:
        return self.coeff.shape[0]


@dataclass
class MTFitState:
    Z: np.ndarray
    U: np.ndarray
    rho: np.ndarray
    V_stack: np.ndarray
    iteration: int = 0


@dataclass(frozen=True)
class MTConfig:
    lower_basis: BasisConfig = field(default_factory=lambda: BasisConfig(2, 4))
    higher_basis: BasisConfig = field(default_factory=lambda: BasisConfig(1, 4))
    lower_nodes: int = 16
    higher_nodes: int = 16
    schedule: Schedule = field(default_factory=Schedule)
    mode: TransferMode = TransferMode.BOTH
    grid_res: int = 20
    task_grid_res: int = 20
    grad_iters: int = 5
    grid_fraction: float = 0.6

    def __post_init__(self):
        object.__setattr__(self, "mode", TransferMode(self.mode))
        for name in ("lower_nodes", "higher_nodes", "grid_res", "task_grid_res"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if int(self.grad_iters) < 0:
            raise ValueError("grad_iters must be >= 0")
        if not 0.0 <= self.grid_fraction <= 1.0:
            raise ValueError("grid_fraction must lie in [0, 1]")

    def lower_rule(self) -> QuadratureRule:
        return quadrature_grid(self.lower_basis.latent_dim, self.lower_nodes)

    def higher_rule(self) -> QuadratureRule:
        return quadrature_grid(self.higher_basis.latent_dim, self.higher_nodes)


def _own_task_indicator(task_of, n_tasks):
    return (np.arange(n_tasks)[:, None] == np.asarray(task_of)[None, :]).astype(float)


def instance_transfer(U, task_of, lambda_rho, mode=TransferMode.BOTH) -> np.ndarray:
    """Sample weights ``rho[i, n] = exp(-|u_i - u_{i_n}|^2 / (2 lambda_rho^2))``.

    Modes ``none`` and ``model_only`` return the own-task indicator.
    """
    U = np.atleast_2d(np.asarray(U, float))
    task_of = np.asarray(task_of, dtype=int)
    if TransferMode(mode) is not TransferMode.BOTH:
        return _own_task_indicator(task_of, U.shape[0])
    R = kernel_matrix(U, U, lambda_rho)
    return R[:, task_of]


def lower_m_step(data: MultiTaskDataset, Z, rho, lower_basis: BasisConfig,
                 rule: QuadratureRule, lambda_L: float) -> np.ndarray:
    """Per-task coefficient matrices from the rho-weighted sample sets, (I, L, D_V)."""
    rho = np.asarray(rho, float)
    if rho.shape != (data.n_tasks, data.N):
        raise ValueError(f"rho must have shape {(data.n_tasks, data.N)}, got {rho.shape}")
    if np.any(rho.sum(axis=1) <= 0):
        bad = np.flatnonzero(rho.sum(axis=1) <= 0)[:5].tolist()
        raise ValueError(f"tasks with all-zero sample weights: {bad}")
    Z = np.atleast_2d(check_in_cube(Z, "Z"))
    Phi = eval_basis(lower_basis, rule.points)
    H = _core.kernel_at_nodes(rule, Z, lambda_L)
    return _core.smooth_fit(Phi, rule.weights, H, data.X, weights=rho, task_of=data.task_of)


def higher_m_step(V_stack, U, higher_basis: BasisConfig, rule_T: QuadratureRule,
                  lambda_T: float, lower_basis: BasisConfig) -> GeneralModel:
    """Kernel smoothing of the task models over the task latent space.

    Each ``V_i`` is flattened to a row and the same ``A^{-1} B`` system as the
    lower M-step is solved with the task basis, i.e. ``W = V x_1 (C^{-1} D)``.
    """
    V_stack = np.asarray(V_stack, float)
    I, L, D = V_stack.shape
    U = np.atleast_2d(check_in_cube(U, "U"))
    Psi = eval_basis(higher_basis, rule_T.points)
    H = _core.kernel_at_nodes(rule_T, U, lambda_T)
    W = _core.smooth_fit(Psi, rule_T.weights, H, V_stack.reshape(I, L * D))
    return GeneralModel(W.reshape(higher_basis.size, L, D), lower_basis, higher_basis)


def task_coefficients(model, U=None) -> np.ndarray:
    """Coefficient matrices of the transferred task models ``G(., u_i)``, (I, L, D_V)."""
    if isinstance(model, TaskModelStack):
        return model.coeff
    U = np.atleast_2d(check_in_cube(U, "U"))
    Psi = eval_basis(model.higher_basis, U)
    return np.einsum("ik,kld->ild", Psi, model.W)


def general_decode(model: GeneralModel, z, u) -> np.ndarray:
    """``G_d(z, u) = sum_k sum_l W[k, l, d] psi_k(u) phi_l(z)``.

    ``z`` and ``u`` may be single points or equal-length batches.
    """
    z = check_in_cube(z, "z")
    u = check_in_cube(u, "u")
    single = z.ndim == 1 and u.ndim == 1
    Phi = np.atleast_2d(eval_basis(model.lower_basis, z))
    Psi = np.atleast_2d(eval_basis(model.higher_basis, u))
    out = np.einsum("mk,kld,ml->md", Psi, model.W, Phi, optimize=True)
    return out[0] if single else out


def _use_grid(t, config: MTConfig):
    return t < int(np.ceil(config.grid_fraction * config.schedule.total_iters))


def lower_e_step(data: MultiTaskDataset, model, U, Z, stage="grid", grid_res=20,
                 grad_iters=5) -> np.ndarray:
    """Sample latents under the transferred task models ``G(., u_{i_n})``."""
    coeffs = task_coefficients(model, U)
    basis = model.lower_basis
    if stage == "grid":
        grid = latent_grid(basis.latent_dim, grid_res)
        return _core.grid_search_samples(data.X, coeffs, data.task_of, basis, grid)
    if stage == "gradient":
        return _core.gradient_refine_samples(data.X, check_in_cube(Z, "Z"), coeffs,
                                             data.task_of, basis, grad_iters)
    raise ValueError(f"unknown E-step stage {stage!r}")


def _per_sample_task_tensor(model: GeneralModel, Z):
    # M[n, k, d] = sum_l W[k, l, d] phi_l(z_n)
    Phi = eval_basis(model.lower_basis, Z)
    return np.einsum("kld,nl->nkd", model.W, Phi, optimize=True)


def _task_objective_fn(X, task_of, Mn, higher_basis, n_tasks):
    """Objective/gradient callback over task latents for projected descent."""

    def fun(u, idx, grad):
        pos = np.full(n_tasks, -1)
        pos[idx] = np.arange(idx.size)
        sel = np.flatnonzero(pos[task_of] >= 0)
        owner = pos[task_of[sel]]
        us = u[owner]
        if grad:
            Psi, dPsi = eval_basis_grad(higher_basis, us)
        else:
            Psi = eval_basis(higher_basis, us)
        r = np.einsum("sk,skd->sd", Psi, Mn[sel]) - X[sel]
        obj = np.bincount(owner, weights=(r**2).sum(1), minlength=idx.size)
        if not grad:
            return obj
        gs = 2.0 * np.einsum("skt,skd,sd->st", dPsi, Mn[sel], r)
        g = np.stack([np.bincount(owner, weights=gs[:, k], minlength=idx.size)
                      for k in range(gs.shape[1])], axis=1)
        return obj, g

    return fun


def higher_e_step(data: MultiTaskDataset, Z, model: GeneralModel, U, stage="grid",
                  grid_res=20, grad_iters=5) -> np.ndarray:
    """Task latents ``argmin_u sum_{n in task} |G(z_n, u) - x_n|^2``."""
    Z = np.atleast_2d(check_in_cube(Z, "Z"))
    Mn = _per_sample_task_tensor(model, Z)
    if stage == "grid":
        grid = latent_grid(model.higher_basis.latent_dim, grid_res)
        Psi = eval_basis(model.higher_basis, grid)  # (G, K)
        Gv = np.einsum("gk,nkd->ngd", Psi, Mn, optimize=True)
        err = ((Gv - data.X[:, None, :]) ** 2).sum(-1)  # (N, G)
        onehot = sp.csr_matrix((np.ones(data.N), (data.task_of, np.arange(data.N))),
                               shape=(data.n_tasks, data.N))
        E = onehot @ err
        return grid[np.argmin(E, axis=1)].copy()
    if stage == "gradient":
        U = np.atleast_2d(check_in_cube(U, "U"))
        fun = _task_objective_fn(data.X, data.task_of, Mn, model.higher_basis, data.n_tasks)
        return _core.projected_descent(fun, U, grad_iters)
    raise ValueError(f"unknown E-step stage {stage!r}")


def lower_cost(data: MultiTaskDataset, Z, rho, V_stack, lambda_L, rule: QuadratureRule,
               beta=1.0, lower_basis: BasisConfig | None = None) -> float:
    """Sum over tasks of the rho-weighted lower KSMM cost."""
    V_stack = np.asarray(V_stack, float)
    if lower_basis is None:
        raise ValueError("lower_basis is required")
    rho = np.asarray(rho, float)
    Phi = eval_basis(lower_basis, rule.points)
    H = _core.kernel_at_nodes(rule, np.atleast_2d(Z), lambda_L)  # (Q, N)
    hbar, M = _core.weighted_moments(H, data.X, rho, data.task_of)
    F = np.einsum("ql,ild->iqd", Phi, V_stack, optimize=True)
    w = rule.weights
    # sum_n rho_in h_qn |F_iq - x_n|^2 expanded into kernel moments
    quad = (F**2).sum(-1) * hbar - 2.0 * np.einsum("iqd,iqd->iq", F, M)
    const = rho @ ((data.X**2).sum(1) * (w @ H))
    per_task = quad @ w + const
    return float(np.sum(beta / (2.0 * rho.sum(1)) * per_task)) / 2.0**lower_basis.latent_dim


def higher_cost(model: GeneralModel, V_stack, U, lambda_T, rule_T: QuadratureRule,
                beta=1.0) -> float:
    """Quadrature value of the higher KSMM cost over the task latent space."""
    V_stack = np.asarray(V_stack, float)
    I = V_stack.shape[0]
    Vu = task_coefficients(model, rule_T.points)  # (Q, L, D)
    H = kernel_matrix(rule_T.points, np.atleast_2d(U), lambda_T)  # (Q, I)
    diff = ((Vu[:, None] - V_stack[None]) ** 2).sum(axis=(2, 3))  # (Q, I)
    dz = 2.0**model.lower_basis.latent_dim
    total = float(rule_T.weights @ (H * diff).sum(1)) / dz
    return beta / (2.0 * I) * total / 2.0**model.higher_basis.latent_dim


def manifold_distance(V1, V2, basis: BasisConfig, rule: QuadratureRule) -> float:
    """``sqrt( integral |f_1(z) - f_2(z)|^2 dP(z) )`` under the uniform prior."""
    Phi = eval_basis(basis, rule.points)
    diff = Phi @ (np.asarray(V1, float) - np.asarray(V2, float))
    sq = float(rule.weights @ (diff**2).sum(1)) / 2.0**basis.latent_dim
    return float(np.sqrt(max(sq, 0.0)))


def train(data: MultiTaskDataset, config: MTConfig = MTConfig(), seed=0, Z0=None, U0=None,
          update_z: bool = True):
    """Run the training iteration (module docstring) for ``config.schedule.total_iters`` iterations.

    Returns ``(model, state, trace)``: a :class:`GeneralModel` (or a
    :class:`TaskModelStack` in mode ``none``), the final :class:`MTFitState`
    and the summed lower cost after each iteration.
    """
    mode = config.mode
    sched = config.schedule
    D_L = config.lower_basis.latent_dim
    D_T = config.higher_basis.latent_dim
    rng = np.random.default_rng(seed)
    Z = rng.uniform(-1.0, 1.0, size=(data.N, D_L))
    U = rng.uniform(-1.0, 1.0, size=(data.n_tasks, D_T))
    if Z0 is not None:
        Z = np.array(Z0, float).reshape(data.N, D_L)
    if U0 is not None:
        U = np.array(U0, float).reshape(data.n_tasks, D_T)
    rule_L = config.lower_rule()
    rule_T = config.higher_rule()
    indicator = _own_task_indicator(data.task_of, data.n_tasks)

    trace = []
    model = None
    rho = indicator
    V_stack = None
    for t in range(sched.total_iters):
        lam_L, lam_T, lam_rho = anneal(sched, t)
        stage = "grid" if _use_grid(t, config) else "gradient"
        # instance transfer
        rho = instance_transfer(U, data.task_of, lam_rho, mode) if mode is TransferMode.BOTH \
            else indicator
        # lower M-step
        V_stack = lower_m_step(data, Z, rho, config.lower_basis, rule_L, lam_L)
        if mode is TransferMode.NONE:
            model = TaskModelStack(V_stack, config.lower_basis)
        else:
            # higher M-step, then task latents
            model = higher_m_step(V_stack, U, config.higher_basis, rule_T, lam_T,
                                  config.lower_basis)
            U = higher_e_step(data, Z, model, U, stage, config.task_grid_res, config.grad_iters)
        # sample latents
        if update_z:
            Z = lower_e_step(data, model, U, Z, stage, config.grid_res, config.grad_iters)
        trace.append(lower_cost(data, Z, rho, V_stack, lam_L, rule_L, sched.beta,
                                config.lower_basis))
    state = MTFitState(Z=Z, U=U, rho=rho, V_stack=V_stack, iteration=sched.total_iters)
    return model, state, np.array(trace)


def fit_new_task(X_new, model, rounds=10, grid_res=20, task_grid_res=20, grad_iters=5,
                 polish=True):
    """Estimate ``(u, Z)`` for an unseen task with the general model frozen.

    The joint grid search picks the task latent whose best-response sample
    latents give the smallest total error; then ``rounds`` of coordinate
    descent refine Z and u in turn.  ``polish`` finishes with a joint
    bound-constrained quasi-Newton pass over ``(u, Z)``.  For a :class:`TaskModelStack` the
    candidates are the stored task models and the returned ``u`` is the
    index of the selected task.
    """
    X_new = np.atleast_2d(np.asarray(X_new, float))
    J = X_new.shape[0]
    basis = model.lower_basis
    zgrid = latent_grid(basis.latent_dim, grid_res)
    Phi_g = eval_basis(basis, zgrid)
    if isinstance(model, TaskModelStack):
        cand_coeff = model.coeff
        cand_u = None
    else:
        cand_u = latent_grid(model.higher_basis.latent_dim, task_grid_res)
        cand_coeff = task_coefficients(model, cand_u)

    n_cand = cand_coeff.shape[0]
    total = np.empty(n_cand)
    best_g = np.empty((n_cand, J), dtype=int)
    xsq = (X_new**2).sum(1)
    chunk = max(1, 2_000_000 // max(1, J * zgrid.shape[0]))
    for c0 in range(0, n_cand, chunk):
        F = np.einsum("gl,cld->cgd", Phi_g, cand_coeff[c0:c0 + chunk], optimize=True)
        d = (F**2).sum(-1)[:, None, :] - 2.0 * np.einsum("jd,cgd->cjg", X_new, F) \
            + xsq[None, :, None]
        best_g[c0:c0 + chunk] = np.argmin(d, axis=2)
        total[c0:c0 + chunk] = np.take_along_axis(d, best_g[c0:c0 + chunk, :, None], 2)[..., 0] \
            .sum(1)
    c_star = int(np.argmin(total))
    Z = zgrid[best_g[c_star]].copy()
    zero_task = np.zeros(J, dtype=int)

    if cand_u is None:
        coeff = cand_coeff[c_star][None]
        for _ in range(rounds):
            Z = _core.gradient_refine_samples(X_new, Z, coeff, zero_task, basis, grad_iters)
        if polish:
            Z = _polish_new_task(X_new, model, None, Z, coeff[0])[1]
        return np.array([c_star]), Z

    u = cand_u[c_star][None].copy()
    for _ in range(rounds):
        coeff = task_coefficients(model, u)
        Z = _core.gradient_refine_samples(X_new, Z, coeff, zero_task, basis, grad_iters)
        Mn = _per_sample_task_tensor(model, Z)
        fun = _task_objective_fn(X_new, zero_task, Mn, model.higher_basis, 1)
        u = _core.projected_descent(fun, u, grad_iters)
    if polish:
        u, Z = _polish_new_task(X_new, model, u[0], Z)
        return u, Z
    return u[0], Z


def _polish_new_task(X_new, model, u, Z, coeff=None):
    """Joint bound-constrained L-BFGS-B on (u, Z); kept only if it lowers the objective."""
    J, D_L = Z.shape
    lower = model.lower_basis
    D_T = 0 if u is None else model.higher_basis.latent_dim

    def fg(p):
        uu, zz = p[:D_T], p[D_T:].reshape(J, D_L)
        Phi, dPhi = eval_basis_grad(lower, zz)
        if u is None:
            V = coeff
            gu = np.zeros(0)
        else:
            psi, dpsi = eval_basis_grad(model.higher_basis, uu[None])
            V = np.einsum("k,kld->ld", psi[0], model.W)
        r = Phi @ V - X_new
        gz = 2.0 * np.einsum("jlt,ld,jd->jt", dPhi, V, r)
        if u is not None:
            dV = np.einsum("kt,kld->tld", dpsi[0], model.W)
            gu = 2.0 * np.einsum("jl,tld,jd->t", Phi, dV, r)
        return float((r**2).sum()), np.concatenate([gu, gz.ravel()])

    p0 = np.concatenate([np.zeros(0) if u is None else np.ravel(u), Z.ravel()])
    f0 = fg(p0)[0]
    res = optimize.minimize(fg, p0, jac=True, method="L-BFGS-B",
                            bounds=[(-1.0, 1.0)] * p0.size,
                            options={"maxiter": POLISH_MAXITER, "ftol": 1e-15, "gtol": 1e-12})
    p = np.clip(res.x, -1.0, 1.0)
    if not fg(p)[0] < f0:
        p = p0
    return p[:D_T], p[D_T:].reshape(J, D_L)


def new_task_objective(X_new, model, u, Z) -> float:
    X_new = np.atleast_2d(np.asarray(X_new, float))
    J = X_new.shape[0]
    if isinstance(model, TaskModelStack):
        coeff = model.coeff[int(np.ravel(u)[0])][None]
    else:
        coeff = task_coefficients(model, np.atleast_2d(u))
    return float(_core.sample_objective(Z, X_new, coeff, np.zeros(J, dtype=int),
                                        model.lower_basis).sum())


def model_to_dict(model, U=None, schedule: Schedule | None = None, mode=None) -> dict:
    doc = {"output_dim": model.output_dim, "lower_basis": model.lower_basis.to_dict()}
    if isinstance(model, TaskModelStack):
        doc.update(kind="task_stack", n_tasks=model.n_tasks,
                   coeff=model.coeff.ravel().tolist())
    else:
        doc.update(kind="general_model", higher_basis=model.higher_basis.to_dict(),
                   W=model.W.ravel().tolist())
    if U is not None:
        U = np.atleast_2d(np.asarray(U, float))
        doc["U_shape"] = list(U.shape)
        doc["U"] = U.ravel().tolist()
    if schedule is not None:
        doc["schedule"] = schedule.to_dict()
    if mode is not None:
        doc["mode"] = TransferMode(mode).value
    return doc


def model_from_dict(doc: dict):
    """Inverse of :func:`model_to_dict`; returns ``(model, meta)``."""
    kind = doc.get("kind")
    lower = BasisConfig.from_dict(doc["lower_basis"])
    D = int(doc["output_dim"])
    if kind == "task_stack":
        coeff = np.array(doc["coeff"], float).reshape(int(doc["n_tasks"]), lower.size, D)
        model = TaskModelStack(coeff, lower)
    elif kind == "general_model":
        higher = BasisConfig.from_dict(doc["higher_basis"])
        W = np.array(doc["W"], float).reshape(higher.size, lower.size, D)
        model = GeneralModel(W, lower, higher)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    meta = {}
    if "U" in doc:
        meta["U"] = np.array(doc["U"], float).reshape(doc["U_shape"])
    if "schedule" in doc:
        meta["schedule"] = Schedule.from_dict(doc["schedule"])
    if "mode" in doc:
        meta["mode"] = TransferMode(doc["mode"])
    return model, meta


def save_model(path, model, U=None, schedule=None, mode=None) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, U, schedule, mode), fh)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
