import csv
import json
from importlib import resources

import numpy as np
import pytest

from mtksmm import cli
from mtksmm import mt_ksmm as mt
from mtksmm.datasets import load_csv, saddle_map
from mtksmm.evaluation import generate_dataset
from mtksmm.numerics import BasisConfig, eval_basis, quadrature_grid

SMALL = {
    "dataset": {"n_train_tasks": 10, "n_new_tasks": 2, "samples_per_task": 8},
    "model": {"schedule": {"total_iters": 5}, "grid_res": 6, "task_grid_res": 6},
    "evaluation": {"st_list": [3], "seeds": [0], "new_rounds": 1},
    "workers": 1,
}


def _write_config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _run(*argv):
    return cli.main([str(a) for a in argv])


def _read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("train")
    cfg = _write_config(tmp, SMALL)
    assert _run("train", "--config", cfg, "--out", tmp / "out") == 0
    return tmp, cfg, tmp / "out"


def _saddle_model():
    # exact saddle family (z1, z2, z1^2 - z2^2 + u, 0, ...) in bases of degree 1 (u) and 2 (z)
    lower, higher = BasisConfig(2, 2), BasisConfig(1, 1)
    rz, ru = quadrature_grid(2, 6), quadrature_grid(1, 4)
    Pz = eval_basis(lower, rz.points) * rz.weights[:, None]
    Pu = eval_basis(higher, ru.points) * ru.weights[:, None]
    W = np.zeros((higher.size, lower.size, 10))
    for q, u in enumerate(ru.points[:, 0]):
        W += Pu[q][:, None, None] * (Pz.T @ saddle_map(rz.points, u))[None]
    return mt.GeneralModel(W, lower, higher)


class TestTrain:
    def test_outputs(self, trained):
        _, _, out = trained
        for name in ("model.json", "fit_state.json", "trace.csv", "config.effective.json"):
            assert (out / name).is_file()
        assert len(_read_csv(out / "trace.csv")) == 5

    def test_rerun_identical_trace(self, trained, tmp_path):
        _, cfg, out = trained
        assert _run("train", "--config", cfg, "--out", tmp_path) == 0
        assert (tmp_path / "trace.csv").read_bytes() == (out / "trace.csv").read_bytes()
        assert (tmp_path / "model.json").read_bytes() == (out / "model.json").read_bytes()

    def test_effective_config_reproduces(self, trained, tmp_path):
        _, _, out = trained
        assert _run("train", "--config", out / "config.effective.json", "--out", tmp_path) == 0
        assert (tmp_path / "model.json").read_bytes() == (out / "model.json").read_bytes()
        eff = json.loads((out / "config.effective.json").read_text())
        assert eff["model"]["grid_fraction"] == 0.6 and eff["workers"] == 1

    def test_mode_none_stores_task_models(self, tmp_path):
        cfg = json.loads(json.dumps(SMALL))
        cfg["model"]["mode"] = "none"
        assert _run("train", "--config", _write_config(tmp_path, cfg), "--out", tmp_path) == 0
        doc = json.loads((tmp_path / "model.json").read_text())
        assert doc["kind"] == "task_stack" and doc["n_tasks"] == 10
        assert "W" not in doc

    def test_seed_override(self, trained, tmp_path):
        _, cfg, _ = trained
        assert _run("train", "--config", cfg, "--seed", 4, "--out", tmp_path) == 0
        eff = json.loads((tmp_path / "config.effective.json").read_text())
        assert eff["train"]["seed"] == 4 and eff["evaluation"]["seeds"] == [4]

    def test_trains_from_csv(self, tmp_path):
        cfg = _write_config(tmp_path, SMALL)
        assert _run("datagen", "--config", cfg, "--out", tmp_path / "d") == 0
        csv_cfg = json.loads(json.dumps(SMALL))
        csv_cfg["dataset"] = {"csv": str(tmp_path / "d" / "data.csv"),
                              "value_columns": [f"x_{k}" for k in range(1, 11)]}
        assert _run("train", "--config", _write_config(tmp_path, csv_cfg, "c.json"),
                    "--out", tmp_path / "t") == 0
        report = json.loads((tmp_path / "t" / "train_report.json").read_text())
        assert report["n_train_tasks"] == 12 and "mi_existing" not in report


class TestConfigErrors:
    @pytest.mark.parametrize("patch,field", [
        ({"model": {"schedule": {"lambda_L_end": -1.0}}}, "model.schedule.lambda_L_end"),
        ({"model": {"lower_degree": -1}}, "model.lower_degree"),
        ({"model": {"schedule": {"total_iters": 0}}}, "model.schedule.total_iters"),
        ({"model": {"degree": 3}}, "model.degree"),
        ({"dataset": {"kind": "torus"}}, "dataset.kind"),
        ({"dataset": {"csv": "/no/such/file.csv", "value_columns": ["a"]}}, "dataset.csv"),
        ({"evaluation": {"modes": ["both", "all"]}}, "evaluation.modes"),
    ])
    def test_field_named(self, tmp_path, capsys, patch, field):
        assert _run("train", "--config", _write_config(tmp_path, patch)) == 2
        assert field in capsys.readouterr().err

    def test_malformed_json(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert _run("train", "--config", p) == 2
        assert str(p) in capsys.readouterr().err

    def test_bad_csv_rows(self, tmp_path, capsys):
        data = tmp_path / "d.csv"
        data.write_text("task,a\nt,1\nt,x\n")
        cfg = {"dataset": {"csv": str(data), "value_columns": ["a"]}}
        assert _run("train", "--config", _write_config(tmp_path, cfg), "--out", tmp_path / "o") == 2
        assert "row 3" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_runtime_failure_exit_code(self, tmp_path, monkeypatch, capsys):
        def boom(*args, **kwargs):
            raise FloatingPointError("overflow in M-step")

        monkeypatch.setattr(mt, "train", boom)
        assert _run("train", "--config", _write_config(tmp_path, SMALL), "--out", tmp_path) == 1
        assert "overflow" in capsys.readouterr().err


class TestEvaluate:
    def test_matches_train_report(self, trained, tmp_path):
        _, cfg, out = trained
        assert _run("evaluate", "--config", cfg, "--model", out / "model.json",
                    "--out", tmp_path) == 0
        report = json.loads((out / "train_report.json").read_text())
        row = _read_csv(tmp_path / "metrics.csv")[0]
        assert float(row["rmse_existing"]) == pytest.approx(report["rmse_existing"], abs=1e-9)
        assert len(_read_csv(tmp_path / "summary.csv")) == 1

    def test_missing_model(self, trained, tmp_path, capsys):
        _, cfg, _ = trained
        missing = tmp_path / "absent" / "model.json"
        assert _run("evaluate", "--config", cfg, "--model", missing, "--out", tmp_path / "o") == 2
        assert str(missing) in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_basis_mismatch(self, trained, tmp_path, capsys):
        _, _, out = trained
        cfg = json.loads(json.dumps(SMALL))
        cfg["model"]["lower_degree"] = 3
        assert _run("evaluate", "--config", _write_config(tmp_path, cfg),
                    "--model", out / "model.json", "--out", tmp_path) == 2
        err = capsys.readouterr().err
        assert "degree 4" in err and "degree 3" in err

    def test_output_dim_mismatch(self, trained, tmp_path, capsys):
        _, _, out = trained
        cfg = json.loads(json.dumps(SMALL))
        cfg["dataset"].update(kind="plain")
        assert _run("evaluate", "--config", _write_config(tmp_path, cfg),
                    "--model", out / "model.json", "--out", tmp_path) == 2
        err = capsys.readouterr().err
        assert "model D_V=10" in err and "data D_V=2" in err

    def test_compare_without_model(self, tmp_path):
        cfg = json.loads(json.dumps(SMALL))
        cfg["evaluation"].update(st_list=[2, 3], evaluate_new=False)
        assert _run("evaluate", "--config", _write_config(tmp_path, cfg), "--out", tmp_path) == 0
        assert len(_read_csv(tmp_path / "metrics.csv")) == 2 * 3
        assert len(_read_csv(tmp_path / "summary.csv")) == 2 * 3

    def test_comparison_preset_layout(self, tmp_path):
        # the shipped preset, shrunk to a single cheap seed
        cfg = json.loads(resources.files("mtksmm").joinpath("presets/saddle_table1.json")
                         .read_text())
        cfg["dataset"].update(n_train_tasks=6, n_new_tasks=2, samples_per_task=5)
        cfg["model"].update(schedule={"total_iters": 3}, grid_res=5, task_grid_res=5)
        cfg["evaluation"].update(seeds=[0], new_rounds=1)
        cfg["workers"] = 1
        assert _run("evaluate", "--config", _write_config(tmp_path, cfg), "--out", tmp_path) == 0
        rows = _read_csv(tmp_path / "summary.csv")
        assert len(rows) == 12
        assert {(r["dataset"], r["mode"]) for r in rows} == {
            (d, m) for d in ("saddle", "convex", "triangle", "sine")
            for m in ("both", "model_only", "none")}

    def test_regression_compare(self, tmp_path):
        cfg = {"dataset": {"kind": "plain", "n_train_tasks": 8, "n_new_tasks": 0,
                           "samples_per_task": 2},
               "model": {"lower_latent_dim": 1, "clamp_z": True, "schedule": {"total_iters": 4}},
               "evaluation": {"st_list": [2], "seeds": [0], "modes": ["both", "none"]},
               "workers": 1}
        assert _run("evaluate", "--config", _write_config(tmp_path, cfg), "--out", tmp_path) == 0
        rows = _read_csv(tmp_path / "regression.csv")
        assert [r["mode"] for r in rows] == ["both", "none"]
        assert all(float(r["mse_dense"]) >= 0 for r in rows)


@pytest.fixture(scope="module")
def saddle_model(tmp_path_factory):
    p = tmp_path_factory.mktemp("gen") / "saddle.json"
    mt.save_model(p, _saddle_model())
    return p


class TestGenerate:
    def test_z_grid_traces_saddle(self, saddle_model, tmp_path):
        assert _run("generate", "--model", saddle_model, "--z-grid", 5, "--u", "0.5",
                    "--out", tmp_path, "--plot", "1,3") == 0
        rows = np.array([[float(v) for v in r.values()]
                         for r in _read_csv(tmp_path / "generated.csv")])
        assert rows.shape == (25, 1 + 2 + 10)
        z1, z2, x3 = rows[:, 1], rows[:, 2], rows[:, 5]
        np.testing.assert_allclose(x3, z1 ** 2 - z2 ** 2 + 0.5, atol=1e-12)
        assert (tmp_path / "generated.svg").read_text().count("<circle") == 25

    def test_empty_z_list(self, saddle_model, tmp_path):
        assert _run("generate", "--model", saddle_model, "--z", "", "--u", "0.1",
                    "--out", tmp_path) == 0
        lines = (tmp_path / "generated.csv").read_text().splitlines()
        assert lines == ["u_1,z_1,z_2," + ",".join(f"x_{k}" for k in range(1, 11))]

    def test_u_sweep_fixed_z(self, saddle_model, tmp_path):
        assert _run("generate", "--model", saddle_model, "--z", "0.3,-0.2", "--u-grid", 7,
                    "--out", tmp_path) == 0
        rows = _read_csv(tmp_path / "generated.csv")
        assert len(rows) == 7
        assert len({r["u_1"] for r in rows}) == 7

    def test_latents_outside_cube(self, saddle_model, tmp_path, capsys):
        assert _run("generate", "--model", saddle_model, "--z", "1.5,0", "--u", "0",
                    "--out", tmp_path) == 2
        assert "--z" in capsys.readouterr().err

    def test_task_stack(self, tmp_path):
        rng = np.random.default_rng(0)
        p = tmp_path / "stack.json"
        mt.save_model(p, mt.TaskModelStack(rng.normal(size=(3, 5, 2)), BasisConfig(1, 4)))
        assert _run("generate", "--model", p, "--z", "0.1;0.2", "--tasks", "0,2",
                    "--out", tmp_path) == 0
        rows = _read_csv(tmp_path / "generated.csv")
        assert [r["task"] for r in rows] == ["0", "0", "2", "2"]


class TestSweep:
    def _cfg(self, st_list, seeds):
        return {"dataset": {"n_train_tasks": 5, "n_new_tasks": 1, "samples_per_task": 12},
                "model": {"schedule": {"total_iters": 3}, "grid_res": 5, "task_grid_res": 5},
                "evaluation": {"st_list": st_list, "seeds": seeds, "new_rounds": 1,
                               "evaluate_new": False},
                "workers": 1}

    def test_single_point_no_error_bars(self, tmp_path):
        assert _run("sweep", "--config", _write_config(tmp_path, self._cfg([2], [0])),
                    "--out", tmp_path) == 0
        assert len(_read_csv(tmp_path / "sweep.csv")) == 3
        svg_text = (tmp_path / "sweep_rmse_existing.svg").read_text()
        assert "errorbar" not in svg_text and "<polyline" not in svg_text
        assert svg_text.count("<circle") == 3

    def test_full_grid_cell_count(self, tmp_path):
        cfg = self._cfg([2, 3, 5, 10], [0, 1, 2])
        assert _run("sweep", "--config", _write_config(tmp_path, cfg), "--out", tmp_path) == 0
        assert len(_read_csv(tmp_path / "sweep.csv")) == 36
        assert len(_read_csv(tmp_path / "sweep_summary.csv")) == 12
        assert "errorbar" in (tmp_path / "sweep_rmse_existing.svg").read_text()


class TestDatagen:
    def test_matches_generator(self, tmp_path):
        cfg = _write_config(tmp_path, SMALL)
        assert _run("datagen", "--config", cfg, "--seed", 3, "--out", tmp_path) == 0
        back = load_csv(tmp_path / "data.csv", [f"x_{k}" for k in range(1, 11)], "task",
                        ["true_z_1", "true_z_2"], ["true_u_1"])
        ref = generate_dataset(cli._dataset_spec(cli.load_config(cfg)["dataset"]), 3)
        np.testing.assert_array_equal(back.X, ref.X)
        np.testing.assert_array_equal(back.true_u, ref.true_u)
