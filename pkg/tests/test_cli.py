import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

from randdepth import Dataset, nondominated_filter, read_csv, write_csv
from randdepth.cli import main
from randdepth.tuning import Candidate


@pytest.fixture
def dataset(tmp_path):
    path = tmp_path / "d.csv"
    assert main(["gen", "--n", "300", "--p-noise", "2", "--out", str(path)]) == 0
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_gen_is_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["gen", "--n", "100", "--spec-seed", "3", "--data-seed", "4", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    spec_a = json.loads((tmp_path / "a.csv.spec.json").read_text())
    assert spec_a == json.loads((tmp_path / "b.csv.spec.json").read_text())
    assert (spec_a["spec_seed"], spec_a["data_seed"], len(spec_a["signal"])) == (3, 4, 100)
    manifest = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert manifest["command"] == "gen" and str(a) in manifest["outputs"]


def test_gen_noise_columns_and_single_row(tmp_path):
    p = tmp_path / "n.csv"
    assert main(["gen", "--n", "20", "--p-noise", "20", "--out", str(p)]) == 0
    assert read_csv(p).n_features == 30
    assert main(["gen", "--n", "1", "--out", str(p)]) == 0
    assert len(p.read_text().splitlines()) == 2


def test_gen_unwritable(tmp_path, capsys):
    assert main(["gen", "--n", "5", "--out", str(tmp_path / "missing" / "x.csv")]) == 2
    assert "gen" in capsys.readouterr().err


def fit(dataset, tmp_path, name, *flags):
    model = tmp_path / f"{name}.json"
    assert main(["fit", "--data", str(dataset), "--model", str(model), *flags]) == 0
    return model


def predict(model, dataset, tmp_path):
    out = tmp_path / "pred.csv"
    assert main(["predict", "--model", str(model), "--data", str(dataset), "--out", str(out)]) == 0
    rows = read_rows(out)
    assert rows[0]["manifest"] == "pred.csv.manifest.json"
    return np.array([float(r["prediction"]) for r in rows])


def test_single_tree_rf_matches_cart(dataset, tmp_path):
    rf = fit(dataset, tmp_path, "rf", "--learner", "rf", "--n-trees", "1", "--obs-fraction", "1",
             "--feature-fraction", "1", "--replacement", "no")
    cart = fit(dataset, tmp_path, "cart", "--learner", "cart")
    assert np.array_equal(predict(rf, dataset, tmp_path), predict(cart, dataset, tmp_path))


def test_mart_zero_stages(dataset, tmp_path):
    m = fit(dataset, tmp_path, "mart", "--learner", "mart", "--n-iterations", "0")
    pred = predict(m, dataset, tmp_path)
    assert np.all(pred == read_csv(dataset).target.mean())


def test_r2f_reports_fewer_splits(dataset, tmp_path, capsys):
    reports = {}
    for learner in ("rf", "r2f"):
        fit(dataset, tmp_path, learner, "--learner", learner, "--max-depth", "4", "--seed", "2", "--n-trees", "30")
        reports[learner] = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert reports["r2f"]["total_splits"] < reports["rf"]["total_splits"]
    assert reports["rf"]["train_mse"] >= 0 and reports["rf"]["fit_seconds"] > 0


@pytest.mark.parametrize("learner", ["bagging", "rb", "adaboost"])
def test_other_learners(tmp_path, learner):
    gen = np.random.default_rng(0)
    X = gen.normal(size=(80, 2))
    y = (X[:, 0] > 0).astype(float)
    path = tmp_path / "c.csv"
    write_csv(Dataset(X, y), path)
    model = fit(path, tmp_path, learner, "--learner", learner, "--n-iterations", "10", "--n-trees", "5")
    pred = predict(model, path, tmp_path)
    assert pred.shape == (80,)
    if learner == "adaboost":
        assert set(np.unique(pred)) <= {0.0, 1.0}


def test_malformed_csv_and_unknown_learner(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,y\n1,oops\n")
    assert main(["fit", "--learner", "cart", "--data", str(bad), "--model", str(tmp_path / "m.json")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--learner", "xgboost", "--data", str(bad), "--model", "m.json"])
    assert exc.value.code == 2


def test_predict_column_mismatch(dataset, tmp_path):
    model = fit(dataset, tmp_path, "cart", "--learner", "cart")
    other = tmp_path / "o.csv"
    other.write_text("x1,y\n1,2\n")
    assert main(["predict", "--model", str(model), "--data", str(other), "--out", str(tmp_path / "p.csv")]) == 2


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_entry_point(tmp_path):
    exe = shutil.which("randdepth")
    if exe is None:
        pytest.skip("console script not installed")
    r = subprocess.run([exe, "gen", "--n", "3", "--out", str(tmp_path / "e.csv")], capture_output=True)
    assert r.returncode == 0
    r = subprocess.run([exe, "nonsense"], capture_output=True)
    assert r.returncode == 2


def test_exp1_smoke(tmp_path):
    out = tmp_path / "e1"
    args = ["exp1", "--n", "120", "--datasets", "4", "--p-noise", "0,10,20", "--generations", "1",
            "--population", "4", "--max-depth", "3", "--out", str(out)]
    assert main(args) == 0
    for family in ("boost", "forest"):
        diffs = read_rows(out / f"exp1_{family}_differences.csv")
        assert len(diffs) == 12 and all(r["status"] == "ok" for r in diffs)
        for r in diffs:
            assert float(r["difference"]) == pytest.approx(float(r["best_mse_fixed"]) - float(r["best_mse_random"]))
        fronts = read_rows(out / f"exp1_{family}_fronts.csv")
        assert all(r["manifest"] == "exp1_manifest.json" for r in fronts)
        for key in {(r["dataset"], r["p_noise"], r["variant"]) for r in fronts}:
            group = [r for r in fronts if (r["dataset"], r["p_noise"], r["variant"]) == key]
            cands = [Candidate({}, (float(r["mse"]), float(r["fit_seconds"]))) for r in group]
            assert len(nondominated_filter(cands)) == len(cands)
        cands = read_rows(out / f"exp1_{family}_candidates.csv")
        assert len(cands) == 12 * 2 * 8
    manifest = json.loads((out / "exp1_manifest.json").read_text())
    assert manifest["settings"]["population"] == 4 and len(manifest["outputs"]) == 6


def test_exp2_smoke_and_replay(tmp_path):
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        args = ["exp2", "--n", "120", "--datasets", "2", "--k", "2", "--fixed-trees", "10", "--out", str(out)]
        assert main(args) == 0
        runs.append(read_rows(out / "exp2_datasets.csv"))
    a, b = runs
    assert len(a) == 4
    for ra, rb in zip(a, b):
        assert ra["status"] == "ok"
        assert (ra["mse_off"], ra["mse_on"], ra["mse_hybrid"]) == (rb["mse_off"], rb["mse_on"], rb["mse_hybrid"])
        assert (ra["mse_hybrid"] != "") == (ra["family"] == "forest")
    summary = read_rows(tmp_path / "a" / "exp2_summary.csv")
    assert {r["family"] for r in summary} == {"boost", "forest"}
    assert float(summary[0]["median_runtime_ratio"]) > 0


def test_bad_scale_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["exp2", "--scale", "0", "--out", "x"])
    assert exc.value.code == 2
