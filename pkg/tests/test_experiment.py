import json

import numpy as np
import pytest

from damper_twin.cli import main
from damper_twin.dataset import PreparedDataset, load_csv
from damper_twin.experiment import (
    AblationSpec, ConfigError, RunConfig, dump_predictions, run_ablation,
)
from damper_twin.mlp import MlpConfig, MlpModel, init_model, load_model

SMALL = {
    "seed": 4,
    "program": [
        {"run_id": 1, "I": 0.4, "V": 10.0, "duration": 3.0},
        {"run_id": 2, "I": 1.0, "V": 15.0, "duration": 3.0},
        {"run_id": 3, "I": 1.5, "V": 20.0, "duration": 3.0},
        {"run_id": 4, "I": 1.2, "V": 15.0, "duration": 3.0},
    ],
    "held_out_runs": [2],
    "mlp": {"layer_sizes": [3, 8, 1], "epochs": 2, "batch_size": 256},
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(SMALL))
    return path


@pytest.fixture(scope="module")
def small_report():
    cfg = RunConfig.from_dict(SMALL)
    return run_ablation(cfg.ablation, cfg.generate())


def test_report_has_one_row_per_configuration(small_report):
    assert [r.name for r in small_report.rows] == ["full", "no-oversample", "no-augment", "raw"]
    assert len(small_report.to_csv().splitlines()) == 5


def test_test_partition_identical_across_configurations(small_report):
    assert len({r.test_digest for r in small_report.rows}) == 1
    assert len({r.metrics.n for r in small_report.rows}) == 1


def test_raw_configuration_log_is_flat(small_report):
    log = small_report["raw"].stage_log
    assert len({e.rows_out for e in log}) == 1 and log[0].rows_out == log[0].rows_in


def test_configurations_share_initial_model(small_report):
    assert {r.model.metadata["seed"] for r in small_report.rows} == {0}


def test_spec_validation():
    with pytest.raises(ConfigError, match="full"):
        AblationSpec(configurations=(("a", ()),))
    with pytest.raises(ConfigError, match="unique"):
        AblationSpec(configurations=(("full", ()), ("full", ())))
    with pytest.raises(ConfigError, match="unknown stage"):
        AblationSpec(configurations=(("full", ("smote",)),))


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({"epochs": 3})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"mlp": {"layer_sizes": [2, 1]}})


def test_out_dir_artifacts(tmp_path):
    cfg = RunConfig.from_dict(SMALL)
    report = run_ablation(cfg.ablation, cfg.generate(), out_dir=tmp_path)
    for row in report.rows:
        assert row.predictions_path.is_file()
        assert (tmp_path / f"stages_{row.name}.csv").is_file()
    assert (tmp_path / "scaling.json").is_file()


# -- prediction dumps ------------------------------------------------------

def _test_set(n=25):
    rng = np.random.default_rng(0)
    return PreparedDataset(rng.random((n, 3)), rng.random(n), np.zeros(n, np.int8), np.arange(n))


def test_dump_predictions_lines(tmp_path):
    test = _test_set()
    dump_predictions(init_model(MlpConfig()), test, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert len(lines) == len(test) + 1
    assert lines[0] == "index,y_true,y_pred"
    values = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert np.all(np.isfinite(values))


def test_dump_perfect_model(tmp_path):
    # linear model reading y off a synthetic feature equal to the target
    test = _test_set()
    X = test.X.copy()
    X[:, 2] = test.y
    test = PreparedDataset(X, test.y, test.provenance, test.source_index)
    W1 = np.array([[0.0], [0.0], [1.0]])
    model = MlpModel([W1, np.array([[1.0]])], [np.zeros(1), np.zeros(1)], "relu")
    dump_predictions(model, test, tmp_path / "p.csv")
    rows = [line.split(",") for line in (tmp_path / "p.csv").read_text().splitlines()[1:]]
    assert all(r[1] == r[2] for r in rows)


# -- command line ----------------------------------------------------------

def test_cli_generate_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["generate", "--out", str(a), "--seed", "3"]) == 0
    assert main(["generate", "--out", str(b), "--seed", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(load_csv(a).run_ids) == 14


def test_cli_missing_config(tmp_path, capsys):
    missing = tmp_path / "absent.json"
    code = main(["ablate", "--config", str(missing), "--report", str(tmp_path / "r.csv")])
    assert code == 3
    assert str(missing) in capsys.readouterr().err


def test_cli_invalid_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"mlp": {"optimizer": "lbfgs"}}')
    assert main(["ablate", "--config", str(bad), "--report", str(tmp_path / "r.csv")]) == 4
    bad.write_text("{not json")
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path / "x.csv")]) == 4


def test_cli_unknown_flag(tmp_path):
    assert main(["generate", "--out", str(tmp_path / "x.csv"), "--frobnicate"]) == 2
    assert main(["preprocess", "--in", "x", "--out", "y", "--stages", "smote"]) == 2


def test_cli_ablate_small(tmp_path, small_config):
    report = tmp_path / "report.csv"
    assert main(["ablate", "--config", str(small_config), "--report", str(report)]) == 0
    lines = report.read_text().splitlines()
    assert lines[0] == "config_name,r2,mse,mae,n"
    assert [line.split(",")[0] for line in lines[1:]] == ["full", "no-oversample", "no-augment", "raw"]


def test_cli_preprocess_train_evaluate(tmp_path, small_config, capsys):
    raw = tmp_path / "raw.csv"
    prepared = tmp_path / "prep.csv"
    model = tmp_path / "model.json"
    assert main(["generate", "--config", str(small_config), "--out", str(raw)]) == 0
    assert main(["preprocess", "--in", str(raw), "--stages", "indexing,augmentation",
                 "--out", str(prepared), "--config", str(small_config),
                 "--log", str(tmp_path / "log.csv")]) == 0
    data = PreparedDataset.load_csv(prepared)
    assert len(data) % 2 == 0
    scaling = tmp_path / "prep.scaling.json"
    assert scaling.is_file()
    assert main(["train", "--in", str(prepared), "--model-out", str(model),
                 "--config", str(small_config), "--scaling", str(scaling)]) == 0
    assert load_model(model).metadata["epochs_run"] == 2
    capsys.readouterr()
    assert main(["evaluate", "--model", str(model), "--test", str(raw)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "config_name,r2,mse,mae,n"
    assert out[1].split(",")[-1] == str(len(load_csv(raw)))
