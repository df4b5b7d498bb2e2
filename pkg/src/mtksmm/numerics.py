"""Bases, quadrature, kernels and annealing shared by the learners.

The latent spaces are cubes ``[-1, +1]^D``.  Embeddings are expanded on a
tensor product of Legendre polynomials normalized to unit L2 norm on
``[-1, 1]``, so the Gram matrix under Lebesgue measure is the identity.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BasisConfig",
    "QuadratureRule",
    "Schedule",
    "eval_basis",
    "eval_basis_grad",
    "quadrature_grid",
    "gram_matrix",
    "smoothing_kernel",
    "kernel_matrix",
    "anneal",
    "latent_grid",
    "check_in_cube",
]

_CUBE_TOL = 1e-12


@dataclass(frozen=True)
class BasisConfig:
    """Tensor-product Legendre basis on ``[-1, 1]^latent_dim``."""

    latent_dim: int
    max_degree_per_dim: int

    def __post_init__(self):
        if int(self.latent_dim) < 1:
            raise ValueError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if int(self.max_degree_per_dim) < 0:
            raise ValueError(
                f"max_degree_per_dim must be >= 0, got {self.max_degree_per_dim}"
            )

    @property
    def size(self) -> int:
        return (self.max_degree_per_dim + 1) ** self.latent_dim

    def multi_indices(self) -> np.ndarray:
        """Degree multi-indices in lexicographic order, shape (L, D)."""
        degs = range(self.max_degree_per_dim + 1)
        return np.array(list(itertools.product(degs, repeat=self.latent_dim)), dtype=int)

    def to_dict(self) -> dict:
        return {"latent_dim": self.latent_dim, "max_degree_per_dim": self.max_degree_per_dim}

    @classmethod
    def from_dict(cls, d: dict) -> "BasisConfig":
        return cls(int(d["latent_dim"]), int(d["max_degree_per_dim"]))


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (Q, D)
    weights: np.ndarray  # (Q,)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class Schedule:
    """Annealing endpoints for the three kernel widths plus the noise precision."""

    lambda_L_start: float = 1.0
    lambda_L_end: float = 0.1
    lambda_T_start: float = 1.0
    lambda_T_end: float = 0.2
    lambda_rho_start: float = 1.0
    lambda_rho_end: float = 0.2
    total_iters: int = 150
    beta: float = 1.0

    def __post_init__(self):
        for name in ("L", "T", "rho"):
            start = getattr(self, f"lambda_{name}_start")
            end = getattr(self, f"lambda_{name}_end")
            if not (end > 0):
                raise ValueError(f"lambda_{name}_end must be > 0, got {end}")
            if start < end:
                raise ValueError(
                    f"lambda_{name}_start ({start}) must be >= lambda_{name}_end ({end})"
                )
        if int(self.total_iters) < 1:
            raise ValueError(f"total_iters must be >= 1, got {self.total_iters}")
        if not (self.beta > 0):
            raise ValueError(f"beta must be > 0, got {self.beta}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return cls(**d)


def check_in_cube(z, name="z"):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(np.abs(z) > 1.0 + _CUBE_TOL):
        raise ValueError(f"{name} has coordinates outside [-1, +1]")
    return z


def _legendre_1d(x, deg):
    """Normalized Legendre values and derivatives, each shape x.shape + (deg+1,)."""
    x = np.asarray(x, dtype=float)
    P = np.empty(x.shape + (deg + 1,))
    dP = np.empty_like(P)
    P[..., 0] = 1.0
    dP[..., 0] = 0.0
    if deg >= 1:
        P[..., 1] = x
        dP[..., 1] = 1.0
    for n in range(1, deg):
        P[..., n + 1] = ((2 * n + 1) * x * P[..., n] - n * P[..., n - 1]) / (n + 1)
        # P'_{n+1} = P'_{n-1} + (2n+1) P_n, valid on the closed interval
        dP[..., n + 1] = dP[..., n - 1] + (2 * n + 1) * P[..., n]
    norm = np.sqrt((2 * np.arange(deg + 1) + 1) / 2.0)
    return P * norm, dP * norm


def eval_basis(cfg: BasisConfig, z) -> np.ndarray:
    """Evaluate the basis at one point (D,) or a batch (M, D).

    Returns shape (L,) or (M, L).  Column ordering follows
    :meth:`BasisConfig.multi_indices`.
    """
    z = check_in_cube(z)
    single = z.ndim == 1
    Z = np.atleast_2d(z)
    if Z.shape[1] != cfg.latent_dim:
        raise ValueError(f"expected latent dimension {cfg.latent_dim}, got {Z.shape[1]}")
    P, _ = _legendre_1d(Z, cfg.max_degree_per_dim)  # (M, D, deg+1)
    out = _tensor_product(P)
    return out[0] if single else out


def eval_basis_grad(cfg: BasisConfig, Z) -> tuple[np.ndarray, np.ndarray]:
    """Basis values (M, L) and their gradients (M, L, D) at a batch of points."""
    Z = np.atleast_2d(check_in_cube(Z))
    P, dP = _legendre_1d(Z, cfg.max_degree_per_dim)
    vals = _tensor_product(P)
    D = cfg.latent_dim
    grads = np.empty(vals.shape + (D,))
    for k in range(D):
        factors = [dP[:, j] if j == k else P[:, j] for j in range(D)]
        grads[..., k] = _tensor_product(np.stack(factors, axis=1))
    return vals, grads


def _tensor_product(P):
    # P: (M, D, n) -> (M, n**D), first coordinate varies slowest
    out = P[:, 0, :]
    for k in range(1, P.shape[1]):
        out = (out[:, :, None] * P[:, k, None, :]).reshape(P.shape[0], -1)
    return out


def quadrature_grid(dim: int, nodes_per_dim: int) -> QuadratureRule:
    """Tensor-product Gauss-Legendre rule on ``[-1, 1]^dim``."""
    if nodes_per_dim < 1:
        raise ValueError(f"nodes_per_dim must be >= 1, got {nodes_per_dim}")
    x, w = np.polynomial.legendre.leggauss(nodes_per_dim)
    pts = np.array(list(itertools.product(x, repeat=dim)))
    wts = np.prod(np.array(list(itertools.product(w, repeat=dim))), axis=1)
    return QuadratureRule(pts, wts)


def gram_matrix(cfg: BasisConfig, rule: QuadratureRule) -> np.ndarray:
    if rule.dim != cfg.latent_dim:
        raise ValueError(
            f"quadrature dimension {rule.dim} does not match basis dimension {cfg.latent_dim}"
        )
    Phi = eval_basis(cfg, rule.points)
    return (Phi * rule.weights[:, None]).T @ Phi


def smoothing_kernel(a, b, lam: float) -> float:
    """Unnormalized Gaussian kernel ``exp(-|a-b|^2 / (2 lam^2))``.

    Floored at the smallest normal float so the weight stays strictly
    positive where the exponential underflows.
    """
    if not lam > 0:
        raise ValueError(f"kernel width must be positive, got {lam}")
    d = np.atleast_1d(np.asarray(a, float) - np.asarray(b, float))
    return float(max(np.exp(-0.5 * np.dot(d, d) / lam**2), np.finfo(float).tiny))


def kernel_matrix(A, B, lam: float) -> np.ndarray:
    """Pairwise kernel values between rows of A (M, D) and B (N, D).

    Unlike :func:`smoothing_kernel` there is no floor: far pairs underflow to
    exactly 0 and contribute no mass to the smoothing systems.
    """
    if not lam > 0:
        raise ValueError(f"kernel width must be positive, got {lam}")
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    sq = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
    return np.exp(-0.5 * sq / lam**2)


def anneal(schedule: Schedule, t: int) -> tuple[float, float, float]:
    """Kernel widths (lambda_L, lambda_T, lambda_rho) at iteration ``t``."""
    T = schedule.total_iters
    if not (0 <= t < T):
        raise ValueError(f"iteration {t} outside [0, {T})")
    frac = t / (T - 1) if T > 1 else 0.0

    def decay(start, end):
        if t == T - 1:
            return float(end)
        return float(start * (end / start) ** frac)

    return (
        decay(schedule.lambda_L_start, schedule.lambda_L_end),
        decay(schedule.lambda_T_start, schedule.lambda_T_end),
        decay(schedule.lambda_rho_start, schedule.lambda_rho_end),
    )


def latent_grid(dim: int, res: int) -> np.ndarray:
    """Regular grid of res**dim points in the cube, lexicographic order."""
    axis = np.linspace(-1.0, 1.0, res) if res > 1 else np.zeros(1)
    return np.array(list(itertools.product(axis, repeat=dim)))
