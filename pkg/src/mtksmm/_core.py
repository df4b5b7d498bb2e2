"""Linear solves and latent searches shared by the single- and multi-task learners."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .numerics import BasisConfig, QuadratureRule, eval_basis, eval_basis_grad, kernel_matrix

RIDGE_REL = 1e-8
COND_LIMIT = 1e10
ARMIJO_C = 1e-4
MAX_HALVINGS = 30
BB_MIN = 1e-4
BB_MAX = 1e4


def solve_spd(A, B):
    """Solve ``A V = B`` for a batch of symmetric PSD systems.

    A ridge of ``1e-8 * trace(A) / L`` is added to systems whose condition
    number exceeds ``COND_LIMIT``.  Systems with no kernel mass at all
    (``trace(A)`` underflowed to zero) get a unit ridge, so the solution is
    finite and close to zero.
    """
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    batched = A.ndim == 3
    if not batched:
        A, B = A[None], B[None]
    L = A.shape[-1]
    eig = np.linalg.eigvalsh(A)
    lo, hi = eig[:, 0], eig[:, -1]
    bad = ~(lo > hi / COND_LIMIT)
    if np.any(bad):
        A = A.copy()
        tr = np.trace(A, axis1=1, axis2=2)
        eps = RIDGE_REL * tr / L
        eps = np.where(eps > np.finfo(float).tiny, eps, 1.0)
        idx = np.flatnonzero(bad)
        A[idx] += eps[idx, None, None] * np.eye(L)
    V = np.linalg.solve(A, B)
    return V if batched else V[0]


def smooth_fit(Phi, w, H, X, weights=None, task_of=None):
    """Kernel-smoothing least squares on an orthonormal basis.

    Phi : (Q, L) basis at quadrature nodes, w : (Q,) node weights,
    H : (Q, N) kernel between nodes and data latents, X : (N, D) data.
    weights : optional (I, N) per-target sample weights, see
    :func:`weighted_moments`.

    Returns (L, D) without weights, (I, L, D) with.
    """
    if weights is None:
        hbar = H.sum(axis=1)
        A = (Phi * (w * hbar)[:, None]).T @ Phi
        B = (Phi * w[:, None]).T @ (H @ X)
        return solve_spd(A, B)

    hbar, M = weighted_moments(H, X, weights, task_of)
    # batched matmul runs one product per target, so a task's system does not
    # depend on how many other tasks are solved alongside it
    A = (Phi.T[None] * (w[None, :] * hbar)[:, None, :]) @ Phi[None]
    B = (Phi * w[:, None]).T[None] @ M
    return solve_spd(A, B)


def weighted_moments(H, X, weights, task_of=None):
    """Per-target kernel mass ``hbar[i, q] = sum_n w_in H_qn`` and first moment
    ``M[i, q, :] = sum_n w_in H_qn x_n``.

    When every row of ``weights`` is constant within each source task
    (``task_of`` given), the sums are taken per task instead of per sample.
    """
    weights = np.asarray(weights, float)
    I = weights.shape[0]
    Q, N = H.shape
    D = X.shape[1]
    grouped = False
    if task_of is not None:
        task_of = np.asarray(task_of)
        n_src = int(task_of.max()) + 1
        first = np.full(n_src, -1)
        first[task_of[::-1]] = np.arange(N)[::-1]
        if np.all(first >= 0):
            R = weights[:, first]
            grouped = np.array_equal(R[:, task_of], weights)
    if grouped:
        onehot = sp.csr_matrix((np.ones(N), (task_of, np.arange(N))), shape=(n_src, N))
        Hsum = onehot @ H.T  # (J, Q)
        HX = np.einsum("qn,nd->nqd", H, X).reshape(N, Q * D)
        S = onehot @ HX  # (J, Q*D)
        return R @ Hsum, (R @ S).reshape(I, Q, D)
    hbar = weights @ H.T
    M = np.stack([weights @ (H * X[:, d]).T for d in range(D)], axis=-1)
    return hbar, M


def kernel_at_nodes(rule: QuadratureRule, Z, lam):
    return kernel_matrix(rule.points, Z, lam)


def projected_descent(fun, x0, iters):
    """Projected gradient descent with Armijo backtracking on the unit cube.

    ``fun(x, idx, grad)`` returns objective values (and gradients if ``grad``)
    for items ``idx`` at positions ``x`` (len(idx), D).  Every item is
    optimized independently.  The first trial step is 1, later ones use the
    Barzilai-Borwein length ``s's / s'y`` from the previous move.  A step is
    taken only if it decreases the objective, so the objective never
    increases.
    """
    x = np.array(x0, dtype=float, copy=True)
    M = x.shape[0]
    if M == 0:
        return x
    # an item that cannot decrease is stationary and leaves the active set,
    # so each item's path does not depend on the others
    active = np.arange(M)
    t0 = np.ones(M)
    x_prev = np.empty_like(x)
    g_prev = np.empty_like(x)
    started = np.zeros(M, dtype=bool)
    for _ in range(iters):
        f0, g = fun(x[active], active, True)
        s_ = x[active] - x_prev[active]
        y_ = g - g_prev[active]
        ss = np.einsum("ij,ij->i", s_, s_)
        sy = np.einsum("ij,ij->i", s_, y_)
        ok = started[active] & (sy > 0) & (ss > 0)
        t0[active] = np.where(ok, np.clip(ss / np.where(ok, sy, 1.0), BB_MIN, BB_MAX), 1.0)
        x_prev[active], g_prev[active] = x[active], g
        started[active] = True
        t = t0[active].copy()
        pending = np.ones(active.size, dtype=bool)
        for _ in range(MAX_HALVINGS):
            loc = np.flatnonzero(pending)
            if loc.size == 0:
                break
            idx = active[loc]
            cand = np.clip(x[idx] - t[loc, None] * g[loc], -1.0, 1.0)
            step = x[idx] - cand
            f1 = fun(cand, idx, False)
            ok = f1 <= f0[loc] - ARMIJO_C * np.einsum("ij,ij->i", g[loc], step)
            ok &= np.any(step != 0, axis=1)
            x[idx[ok]] = cand[ok]
            pending[loc[ok]] = False
            t[loc] *= 0.5
        active = active[~pending]
        if active.size == 0:
            break
    return x


def grid_search_samples(X, coeffs, task_of, basis: BasisConfig, grid):
    """Per-sample argmin over ``grid`` of ``|coeffs[i_n]^T phi(z) - x_n|^2``.

    Ties resolve to the lowest grid index.  Returns (N, D_L) latents.
    """
    X = np.asarray(X, float)
    Phi_g = eval_basis(basis, grid)  # (G, L)
    F = np.einsum("gl,ild->igd", Phi_g, coeffs, optimize=True)  # (I, G, D)
    Fsq = np.einsum("igd,igd->ig", F, F)
    best = np.empty(X.shape[0], dtype=int)
    order = np.argsort(task_of, kind="stable")
    bounds = np.searchsorted(task_of[order], np.arange(coeffs.shape[0] + 1))
    for i in range(coeffs.shape[0]):
        idx = order[bounds[i]:bounds[i + 1]]
        if idx.size == 0:
            continue
        x = X[idx]
        d = Fsq[i][None, :] - 2.0 * x @ F[i].T
        best[idx] = np.argmin(d, axis=1)
    return grid[best].copy()


def sample_objective(Z, X, coeffs, task_of, basis: BasisConfig):
    Phi = eval_basis(basis, Z)
    F = np.einsum("nl,nld->nd", Phi, coeffs[task_of])
    return ((F - X) ** 2).sum(axis=1)


def sample_objective_fn(X, coeffs, task_of, basis: BasisConfig):
    """Per-sample objective ``|V_{i_n}^T phi(z) - x_n|^2`` and its z-gradient,
    in the calling convention of :func:`projected_descent`."""
    X = np.asarray(X, float)
    Vn = coeffs[task_of]  # (N, L, D)

    def fun(z, idx, grad):
        if grad:
            Phi, dPhi = eval_basis_grad(basis, z)
        else:
            Phi = eval_basis(basis, z)
        F = np.einsum("nl,nld->nd", Phi, Vn[idx])
        r = F - X[idx]
        obj = (r**2).sum(axis=1)
        if not grad:
            return obj
        J = np.einsum("nlk,nld->ndk", dPhi, Vn[idx])
        return obj, 2.0 * np.einsum("ndk,nd->nk", J, r)

    return fun


def gradient_refine_samples(X, Z, coeffs, task_of, basis: BasisConfig, iters):
    """Refine per-sample latents under their own task's coefficient matrix."""
    return projected_descent(sample_objective_fn(X, coeffs, task_of, basis), Z, iters)
