import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import spearmanr

from mtksmm import ksmm
from mtksmm import mt_ksmm as mt
from mtksmm.datasets import gen_saddle
from mtksmm.numerics import BasisConfig, Schedule, eval_basis, latent_grid, quadrature_grid

RULE1 = quadrature_grid(1, 16)
RULE2 = quadrature_grid(2, 16)
SHORT = Schedule(total_iters=30)


def _random_data(seed, n_tasks=3, per_task=8, dim=3):
    rng = np.random.default_rng(seed)
    task_of = np.repeat(np.arange(n_tasks), per_task)
    return mt.MultiTaskDataset(rng.normal(size=(task_of.size, dim)), task_of, n_tasks)


def _linear_in_u_model(rng, D=3):
    """General model whose task map is affine in u: G(z, u) = f_a(z) + u f_b(z)."""
    lower, higher = BasisConfig(2, 1), BasisConfig(1, 1)
    W = np.zeros((2, 4, D))
    # f_a(z) = (z1, z2, 0.3 z1 z2) plus a random offset, f_b a random affine map
    W[0, 2, 0] = np.sqrt(2) / np.sqrt(1.5)
    W[0, 1, 1] = np.sqrt(2) / np.sqrt(1.5)
    W[0, 3, 2] = np.sqrt(2) * 0.3 / 1.5
    W[0, 0] = 2.0 * rng.normal(size=D)  # phi_0 = 1/2
    W[1, :3] = rng.normal(size=(3, D)) * 0.5 * np.sqrt(1.5)
    return mt.GeneralModel(W, lower, higher)


class TestDatasetType:
    def test_empty_task_rejected(self):
        with pytest.raises(ValueError):
            mt.MultiTaskDataset(np.zeros((2, 1)), np.array([0, 2]), 3)

    def test_task_out_of_range(self):
        with pytest.raises(ValueError):
            mt.MultiTaskDataset(np.zeros((2, 1)), np.array([0, 1]), 1)

    def test_members(self):
        ds = mt.MultiTaskDataset(np.zeros((4, 1)), np.array([1, 0, 1, 0]), 2)
        np.testing.assert_array_equal(ds.members(1), [0, 2])
        assert ds.N == 4


class TestInstanceTransfer:
    def test_equal_latents_pool_everything(self):
        rho = mt.instance_transfer(np.zeros((3, 1)), np.array([0, 1, 2, 2]), 0.2)
        np.testing.assert_array_equal(rho, np.ones((3, 4)))

    def test_one_width_apart(self):
        rho = mt.instance_transfer([[0.0], [0.3]], np.array([0, 1]), 0.3)
        assert rho[0, 1] == pytest.approx(np.exp(-0.5), rel=1e-14)

    def test_indicator_modes(self):
        task_of = np.array([0, 0, 1])
        for mode in ("none", "model_only"):
            rho = mt.instance_transfer([[0.0], [0.0]], task_of, 1.0, mode)
            np.testing.assert_array_equal(rho, [[1, 1, 0], [0, 0, 1]])

    def test_tiny_width_gives_single_task_fit(self):
        data = _random_data(1)
        U = np.array([[-0.5], [0.1], [0.8]])
        rho = mt.instance_transfer(U, data.task_of, 1e-6)
        Z = np.random.default_rng(2).uniform(-1, 1, size=(data.N, 2))
        V = mt.lower_m_step(data, Z, rho, BasisConfig(2, 2), RULE2, 0.4)
        for i in range(3):
            idx = data.members(i)
            ref = ksmm.m_step(data.X[idx], Z[idx], BasisConfig(2, 2), RULE2, 0.4)
            np.testing.assert_allclose(V[i], ref.coeff, rtol=0, atol=1e-6)

    @given(st.lists(st.floats(-1, 1), min_size=2, max_size=6), st.floats(0.01, 3.0))
    def test_own_samples_full_weight(self, u, lam):
        task_of = np.arange(len(u)).repeat(2)
        rho = mt.instance_transfer(np.array(u)[:, None], task_of, lam)
        assert np.all(rho[task_of, np.arange(task_of.size)] == 1.0)
        assert np.all((rho > 0) | (rho == 0)) and np.all(rho <= 1.0)


class TestLowerMStep:
    def test_single_task_equals_ksmm(self):
        data = _random_data(3, n_tasks=1, per_task=20)
        Z = np.random.default_rng(0).uniform(-1, 1, size=(20, 2))
        V = mt.lower_m_step(data, Z, np.ones((1, 20)), BasisConfig(2, 3), RULE2, 0.5)
        ref = ksmm.m_step(data.X, Z, BasisConfig(2, 3), RULE2, 0.5)
        np.testing.assert_allclose(V[0], ref.coeff, rtol=0, atol=1e-12)

    def test_identical_tasks_identical_models(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(10, 2))
        Z = rng.uniform(-1, 1, size=(10, 1))
        data = mt.MultiTaskDataset(np.vstack([X, X]), np.repeat([0, 1], 10), 2)
        V = mt.lower_m_step(data, np.vstack([Z, Z]), np.ones((2, 20)), BasisConfig(1, 3),
                            RULE1, 0.3)
        np.testing.assert_array_equal(V[0], V[1])

    @pytest.mark.parametrize("grouped", [True, False])
    def test_matches_duplicated_samples(self, grouped):
        data = _random_data(5, n_tasks=3, per_task=6)
        rng = np.random.default_rng(6)
        if grouped:
            R = rng.integers(1, 4, size=(3, 3)) / 3.0
            np.fill_diagonal(R, 1.0)
            rho = R[:, data.task_of]
        else:
            rho = rng.integers(1, 4, size=(3, data.N)) / 3.0
        Z = rng.uniform(-1, 1, size=(data.N, 2))
        basis = BasisConfig(2, 2)
        V = mt.lower_m_step(data, Z, rho, basis, RULE2, 0.4)
        for i in range(3):
            reps = np.rint(3 * rho[i]).astype(int)
            ref = ksmm.m_step(np.repeat(data.X, reps, 0), np.repeat(Z, reps, 0), basis, RULE2, 0.4)
            np.testing.assert_allclose(V[i], ref.coeff, rtol=0, atol=1e-10)

    def test_zero_weight_task_rejected(self):
        data = _random_data(7, n_tasks=2, per_task=3)
        rho = np.zeros((2, 6))
        rho[0, :3] = 1
        with pytest.raises(ValueError, match="all-zero"):
            mt.lower_m_step(data, np.zeros((6, 1)), rho, BasisConfig(1, 1), RULE1, 0.5)

    def test_cost_not_improved_by_perturbation(self):
        data = _random_data(8, n_tasks=3, per_task=10)
        rng = np.random.default_rng(9)
        Z = rng.uniform(-1, 1, size=(data.N, 2))
        rho = mt.instance_transfer(rng.uniform(-1, 1, (3, 1)), data.task_of, 0.5)
        basis = BasisConfig(2, 2)
        V = mt.lower_m_step(data, Z, rho, basis, RULE2, 0.4)
        c0 = mt.lower_cost(data, Z, rho, V, 0.4, RULE2, lower_basis=basis)
        for _ in range(100):
            d = rng.normal(size=V.shape)
            d *= 1e-3 / np.linalg.norm(d)
            assert mt.lower_cost(data, Z, rho, V + d, 0.4, RULE2, lower_basis=basis) >= c0 - 1e-10

    def test_lower_cost_matches_ksmm_cost(self):
        data = _random_data(10, n_tasks=2, per_task=7)
        rng = np.random.default_rng(11)
        Z = rng.uniform(-1, 1, size=(data.N, 2))
        rho = rng.uniform(0.1, 1.0, size=(2, data.N))
        basis = BasisConfig(2, 2)
        V = rng.normal(size=(2, 9, 3))
        got = mt.lower_cost(data, Z, rho, V, 0.5, RULE2, lower_basis=basis)
        ref = sum(ksmm.cost(data.X, Z, ksmm.TaskModel(V[i], basis), 0.5, RULE2, weights=rho[i])
                  for i in range(2))
        assert got == pytest.approx(ref, rel=1e-10)


class TestHigherMStep:
    def test_single_task_constant_basis(self):
        V = np.random.default_rng(0).normal(size=(1, 4, 2))
        model = mt.higher_m_step(V, [[0.3]], BasisConfig(1, 0), RULE1, 0.5, BasisConfig(1, 3))
        for u in (-1.0, 0.0, 0.9):
            np.testing.assert_allclose(mt.task_coefficients(model, [[u]])[0], V[0], atol=1e-12)

    def test_equal_models_constant_in_u(self):
        V0 = np.random.default_rng(1).normal(size=(4, 2))
        V = np.tile(V0, (5, 1, 1))
        U = np.linspace(-0.8, 0.8, 5)[:, None]
        model = mt.higher_m_step(V, U, BasisConfig(1, 4), RULE1, 0.3, BasisConfig(1, 3))
        coeffs = mt.task_coefficients(model, latent_grid(1, 11))
        np.testing.assert_allclose(coeffs, np.tile(V0, (11, 1, 1)), atol=1e-8)

    def test_linear_family_closed_form(self):
        # Smoothing is linear in the data, so G(., u) = f_a + s(u) f_b where s
        # is the same smoother applied to the scalar task latents.
        rng = np.random.default_rng(2)
        Va, Vb = rng.normal(size=(2, 4, 3))
        U = np.linspace(-1, 1, 41)[:, None]
        V = Va[None] + U[:, :, None] * Vb[None]
        lam, higher = 0.1, BasisConfig(1, 4)
        model = mt.higher_m_step(V, U, higher, RULE1, lam, BasisConfig(1, 3))

        # oracle: weighted least squares for s via lstsq on sqrt-weighted rows
        rows, rhs = [], []
        for q, (uq, wq) in enumerate(zip(RULE1.points[:, 0], RULE1.weights)):
            for ui in U[:, 0]:
                sw = np.sqrt(wq * np.exp(-(uq - ui) ** 2 / (2 * lam**2)))
                rows.append(sw * eval_basis(higher, [uq]))
                rhs.append(sw * ui)
        c = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0]

        ugrid = latent_grid(1, 21)
        s = eval_basis(higher, ugrid) @ c
        expect = Va[None] + s[:, None, None] * Vb[None]
        np.testing.assert_allclose(mt.task_coefficients(model, ugrid), expect, atol=1e-6)
        # away from the boundary the smoothed parameter follows u closely
        inner = np.abs(ugrid[:, 0]) <= 0.6
        assert np.max(np.abs(s[inner] - ugrid[inner, 0])) < 0.05


class TestGeneralDecode:
    def test_zero(self):
        model = mt.GeneralModel(np.zeros((3, 4, 2)), BasisConfig(1, 3), BasisConfig(1, 2))
        np.testing.assert_array_equal(mt.general_decode(model, [0.2], [-0.4]), [0.0, 0.0])

    def test_constant_bases(self):
        W = np.array([[[3.0, -1.0]]])
        model = mt.GeneralModel(W, BasisConfig(2, 0), BasisConfig(1, 0))
        # psi_0 = 1/sqrt(2), phi_0 = 1/2
        np.testing.assert_allclose(mt.general_decode(model, [0.1, 0.2], [0.3]),
                                   W[0, 0] / np.sqrt(2) / 2, rtol=1e-15)

    def test_brute_force_contraction(self):
        rng = np.random.default_rng(3)
        lower, higher = BasisConfig(2, 2), BasisConfig(1, 3)
        W = rng.normal(size=(4, 9, 3))
        model = mt.GeneralModel(W, lower, higher)
        for _ in range(10):
            z, u = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 1)
            phi, psi = eval_basis(lower, z), eval_basis(higher, u)
            ref = np.zeros(3)
            for k in range(4):
                for l in range(9):
                    for d in range(3):
                        ref[d] += W[k, l, d] * psi[k] * phi[l]
            np.testing.assert_allclose(mt.general_decode(model, z, u), ref, rtol=0, atol=1e-12)

    def test_cube_violation(self):
        model = mt.GeneralModel(np.zeros((2, 2, 1)), BasisConfig(1, 1), BasisConfig(1, 1))
        with pytest.raises(ValueError):
            mt.general_decode(model, [0.0], [1.5])

    @settings(max_examples=30)
    @given(st.integers(0, 2**31 - 1))
    def test_multilinear(self, seed):
        rng = np.random.default_rng(seed)
        lower, higher = BasisConfig(2, 2), BasisConfig(1, 2)
        W1, W2 = rng.normal(size=(2, 3, 9, 2))
        z, u = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 1)
        g = lambda W: mt.general_decode(mt.GeneralModel(W, lower, higher), z, u)
        np.testing.assert_allclose(g(W1 + W2), g(W1) + g(W2), rtol=1e-12, atol=1e-12)
        phi, psi = eval_basis(lower, z), eval_basis(higher, u)
        by_u = sum(psi[k] * (phi @ W1[k]) for k in range(3))
        by_z = sum(phi[l] * (psi @ W1[:, l]) for l in range(9))
        np.testing.assert_allclose(g(W1), by_u, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(g(W1), by_z, rtol=1e-12, atol=1e-12)


class TestHigherEStep:
    def test_u_independent_model_picks_first_grid_point(self):
        W = np.zeros((3, 4, 2))
        W[0] = np.random.default_rng(4).normal(size=(4, 2))
        model = mt.GeneralModel(W, BasisConfig(1, 3), BasisConfig(1, 2))
        data = _random_data(5, n_tasks=3, per_task=4, dim=2)
        Z = np.zeros((12, 1))
        U = mt.higher_e_step(data, Z, model, np.zeros((3, 1)), "grid", grid_res=20)
        np.testing.assert_array_equal(U, np.full((3, 1), -1.0))

    def test_recovers_generating_latent(self):
        rng = np.random.default_rng(6)
        model = _linear_in_u_model(rng)
        u_true = np.array([-0.77, 0.05, 0.61])
        Z = rng.uniform(-1, 1, size=(30, 2))
        task_of = np.repeat(np.arange(3), 10)
        X = mt.general_decode(model, Z, u_true[task_of][:, None])
        data = mt.MultiTaskDataset(X, task_of, 3)
        U = mt.higher_e_step(data, Z, model, np.zeros((3, 1)), "grid", grid_res=20)
        assert np.all(np.abs(U[:, 0] - u_true) <= 2 / 19)

    def test_gradient_stage_does_not_worsen(self):
        rng = np.random.default_rng(7)
        model = mt.GeneralModel(rng.normal(size=(5, 9, 3)), BasisConfig(2, 2), BasisConfig(1, 4))
        data = _random_data(8, n_tasks=4, per_task=5)
        Z = rng.uniform(-1, 1, size=(20, 2))
        U0 = rng.uniform(-1, 1, size=(4, 1))
        U1 = mt.higher_e_step(data, Z, model, U0, "gradient", grad_iters=5)

        def per_task(U):
            r = mt.general_decode(model, Z, U[data.task_of]) - data.X
            return np.bincount(data.task_of, (r**2).sum(1))

        assert np.all(per_task(U1) <= per_task(U0) + 1e-12)


class TestLowerEStep:
    def test_single_task_equals_ksmm(self):
        rng = np.random.default_rng(9)
        model = mt.GeneralModel(rng.normal(size=(3, 9, 3)), BasisConfig(2, 2), BasisConfig(1, 2))
        U = np.array([[0.35]])
        data = _random_data(10, n_tasks=1, per_task=15)
        tm = ksmm.TaskModel(mt.task_coefficients(model, U)[0], model.lower_basis)
        Zg = mt.lower_e_step(data, model, U, None, "grid", grid_res=15)
        np.testing.assert_array_equal(Zg, ksmm.e_step(data.X, tm, "grid", grid_res=15))
        Zr = mt.lower_e_step(data, model, U, Zg, "gradient", grad_iters=4)
        np.testing.assert_array_equal(Zr, ksmm.e_step(data.X, tm, "gradient", grad_iters=4, Z=Zg))

    def test_recovers_generating_latent(self):
        rng = np.random.default_rng(11)
        model = _linear_in_u_model(rng)
        U = np.array([[0.4]])
        z_true = rng.uniform(-1, 1, size=(25, 2))
        X = mt.general_decode(model, z_true, np.repeat(U, 25, 0))
        data = mt.MultiTaskDataset(X, np.zeros(25, dtype=int), 1)
        Z = mt.lower_e_step(data, model, U, None, "grid", grid_res=20)
        assert np.all(np.abs(Z - z_true) <= 2 / 19)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_gradient_stage_monotone(self, seed):
        rng = np.random.default_rng(seed)
        model = mt.GeneralModel(rng.normal(size=(3, 9, 2)), BasisConfig(2, 2), BasisConfig(1, 2))
        data = _random_data(seed % 1000, n_tasks=2, per_task=6, dim=2)
        U = rng.uniform(-1, 1, size=(2, 1))
        Z0 = rng.uniform(-1, 1, size=(12, 2))
        Z1 = mt.lower_e_step(data, model, U, Z0, "gradient", grad_iters=5)
        f = lambda Z: ((mt.general_decode(model, Z, U[data.task_of]) - data.X) ** 2).sum(1)
        assert np.all(f(Z1) <= f(Z0) + 1e-12)


class TestTrain:
    def test_single_task_reduces_to_ksmm(self):
        ds = gen_saddle(1, 60, 0.1, seed=1)
        cfg = mt.MTConfig(schedule=SHORT)
        _, state, trace = mt.train(ds.unlabeled(), cfg, seed=3)
        km, Z, ktrace = ksmm.train(ds.X, cfg.lower_basis, cfg.lower_rule(), SHORT, seed=3)
        np.testing.assert_allclose(state.V_stack[0], km.coeff, rtol=0, atol=1e-6)
        np.testing.assert_allclose(trace, ktrace, rtol=1e-6)

    def test_mode_none_is_independent_ksmm(self):
        ds = gen_saddle(4, 10, 0.1, seed=2)
        cfg = mt.MTConfig(schedule=SHORT, mode="none")
        model, state, _ = mt.train(ds.unlabeled(), cfg, seed=5)
        assert isinstance(model, mt.TaskModelStack)
        Z0 = np.random.default_rng(5).uniform(-1, 1, size=(ds.N, 2))
        for i in range(4):
            idx = ds.members(i)
            km, _, _ = ksmm.train(ds.X[idx], cfg.lower_basis, cfg.lower_rule(), SHORT, Z0=Z0[idx])
            np.testing.assert_allclose(state.V_stack[i], km.coeff, rtol=0, atol=1e-10)

    def test_degenerate_widths_match_mode_none(self):
        ds = gen_saddle(4, 10, 0.1, seed=2)
        tiny = Schedule(1.0, 1.0, 1e-6, 1e-6, 1e-6, 1e-6, total_iters=1)
        a = mt.train(ds.unlabeled(), mt.MTConfig(schedule=tiny, mode="both"), seed=5)[1]
        b = mt.train(ds.unlabeled(), mt.MTConfig(schedule=tiny, mode="none"), seed=5)[1]
        assert np.max(np.abs(a.V_stack - b.V_stack)) < 1e-6

    def test_identical_tasks_symmetric(self):
        one = gen_saddle(1, 20, 0.1, seed=4)
        data = mt.MultiTaskDataset(np.vstack([one.X, one.X]), np.repeat([0, 1], 20), 2)
        Z0 = np.tile(np.random.default_rng(0).uniform(-1, 1, size=(20, 2)), (2, 1))
        cfg = mt.MTConfig(schedule=SHORT)
        _, state, _ = mt.train(data, cfg, seed=0, Z0=Z0, U0=np.zeros((2, 1)))
        d = mt.manifold_distance(state.V_stack[0], state.V_stack[1], cfg.lower_basis,
                                 cfg.lower_rule())
        assert d < 1e-6

    def test_deterministic(self):
        ds = gen_saddle(5, 4, 0.1, seed=6)
        cfg = mt.MTConfig(schedule=Schedule(total_iters=10))
        a = mt.train(ds.unlabeled(), cfg, seed=1)
        b = mt.train(ds.unlabeled(), cfg, seed=1)
        assert a[2].tobytes() == b[2].tobytes()
        assert a[0].W.tobytes() == b[0].W.tobytes()

    def test_state_invariants(self):
        ds = gen_saddle(6, 3, 0.1, seed=7)
        model, state, trace = mt.train(ds.unlabeled(), mt.MTConfig(schedule=Schedule(total_iters=8)))
        assert trace.shape == (8,)
        assert np.all(np.abs(state.Z) <= 1) and np.all(np.abs(state.U) <= 1)
        assert np.all(state.rho > 0) and np.all(state.rho <= 1)
        assert np.all(state.rho[ds.task_of, np.arange(ds.N)] == 1.0)
        assert model.W.shape == (5, 25, 10)


@pytest.fixture(scope="module")
def saddle_fit():
    ds = gen_saddle(200, 3, 0.1, seed=0)
    model, state, _ = mt.train(ds.unlabeled(), mt.MTConfig(), seed=0)
    return ds, model, state


def test_saddle_task_latents_are_ordered(saddle_fit):
    ds, _, state = saddle_fit
    assert abs(spearmanr(state.U[:, 0], ds.true_u[:, 0]).correlation) > 0.9


class TestFitNewTask:
    def test_noiseless_task_reaches_zero(self):
        rng = np.random.default_rng(12)
        model = _linear_in_u_model(rng)
        z_true = rng.uniform(-0.9, 0.9, size=(6, 2))
        u_true = np.array([0.23])
        X = mt.general_decode(model, z_true, np.tile(u_true, (6, 1)))
        u, Z = mt.fit_new_task(X, model, rounds=10)
        at_truth = mt.new_task_objective(X, model, u_true, z_true)
        assert mt.new_task_objective(X, model, u, Z) <= at_truth + 1e-8

    def test_single_sample_beats_grid(self):
        rng = np.random.default_rng(13)
        model = mt.GeneralModel(rng.normal(size=(3, 9, 3)), BasisConfig(2, 2), BasisConfig(1, 2))
        x = rng.normal(size=(1, 3))
        u, Z = mt.fit_new_task(x, model, rounds=3, grid_res=12, task_grid_res=12)
        zg, ug = latent_grid(2, 12), latent_grid(1, 12)
        best = min(((mt.general_decode(model, zg, np.repeat(uu[None], len(zg), 0)) - x) ** 2)
                   .sum(1).min() for uu in ug)
        assert mt.new_task_objective(x, model, u, Z) <= best + 1e-12

    def test_model_is_not_modified(self, saddle_fit):
        ds, model, _ = saddle_fit
        W = model.W.copy()
        mt.fit_new_task(ds.X[:3], model, rounds=2)
        assert model.W.tobytes() == W.tobytes()

    def test_task_stack_selects_best_stored_task(self):
        rng = np.random.default_rng(14)
        coeff = rng.normal(size=(3, 4, 2))
        stack = mt.TaskModelStack(coeff, BasisConfig(1, 3))
        z = rng.uniform(-1, 1, size=(8, 1))
        X = eval_basis(stack.lower_basis, z) @ coeff[2]
        idx, Z = mt.fit_new_task(X, stack, rounds=3)
        assert int(idx[0]) == 2
        assert mt.new_task_objective(X, stack, idx, Z) < 1e-3


def test_lower_pass_scales_linearly_in_n():
    def one_pass(per_task):
        ds = gen_saddle(100, per_task, 0.1, seed=0)
        data = ds.unlabeled()
        cfg = mt.MTConfig()
        rng = np.random.default_rng(0)
        Z = rng.uniform(-1, 1, size=(data.N, 2))
        U = rng.uniform(-1, 1, size=(100, 1))
        rho = mt.instance_transfer(U, data.task_of, 0.5)
        best = np.inf
        for _ in range(3):
            t0 = time.perf_counter()
            V = mt.lower_m_step(data, Z, rho, cfg.lower_basis, cfg.lower_rule(), 0.3)
            model = mt.TaskModelStack(V, cfg.lower_basis)
            Zg = mt.lower_e_step(data, model, None, Z, "grid", cfg.grid_res)
            mt.lower_e_step(data, model, None, Zg, "gradient", grad_iters=cfg.grad_iters)
            best = min(best, time.perf_counter() - t0)
        return best

    assert one_pass(40) < 3 * one_pass(20)


class TestSerialization:
    def test_general_model_round_trip(self, tmp_path):
        rng = np.random.default_rng(15)
        model = mt.GeneralModel(rng.normal(size=(5, 25, 10)), BasisConfig(2, 4), BasisConfig(1, 4))
        U = rng.uniform(-1, 1, size=(7, 1))
        mt.save_model(tmp_path / "g.json", model, U, Schedule(), "both")
        back, meta = mt.load_model(tmp_path / "g.json")
        assert back.W.tobytes() == model.W.tobytes()
        assert meta["U"].tobytes() == U.tobytes()
        assert meta["schedule"] == Schedule()
        assert meta["mode"] is mt.TransferMode.BOTH

    def test_task_stack_round_trip(self, tmp_path):
        coeff = np.random.default_rng(16).normal(size=(3, 9, 2))
        mt.save_model(tmp_path / "s.json", mt.TaskModelStack(coeff, BasisConfig(2, 2)))
        back, meta = mt.load_model(tmp_path / "s.json")
        assert isinstance(back, mt.TaskModelStack)
        assert back.coeff.tobytes() == coeff.tobytes()
        assert meta == {}

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            mt.model_from_dict({"kind": "mystery", "lower_basis": {"latent_dim": 1,
                                "max_degree_per_dim": 0}, "output_dim": 1})
