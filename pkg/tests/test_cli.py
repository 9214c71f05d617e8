import json

import numpy as np
import pandas as pd
import pytest
from loguru import logger as LOGGER

from configuration.config import get_config
from configuration.types import ConfigError
from rfmissing import cli
from rfmissing.data import read_csv
from rfmissing.errors import ParseError
from rfmissing.forest import load_forest


def invoke(*argv: str) -> None:
    cli.run(get_config(list(argv)))


@pytest.fixture
def corrupted_csv(tmp_path):
    clean = tmp_path / "clean.csv"
    corrupted = tmp_path / "corrupted.csv"

    invoke("simulate", "--n", "120", "--seed", "3", "--out", str(clean))
    invoke("corrupt", "--in", str(clean), "--rates", "0.2,0,0.1,0.3,0", "--seed", "4", "--out", str(corrupted))
    return corrupted


def test_simulate_writes_friedman1(tmp_path):
    path = tmp_path / "sample.csv"
    invoke("simulate", "--n", "50", "--sigma", "0", "--seed", "1", "--out", str(path))

    data = read_csv(path)
    assert data.n == 50
    assert data.p == 5
    assert not data.has_missing
    np.testing.assert_array_equal(data.response, data.truth)
    assert path.read_text().splitlines()[0] == "x1,x2,x3,x4,x5,y,m"


def test_corrupt_keeps_observed_values(tmp_path, corrupted_csv):
    clean = read_csv(tmp_path / "clean.csv")
    corrupted = read_csv(corrupted_csv)

    assert corrupted.has_missing
    assert not corrupted.mask[:, [1, 4]].any()
    np.testing.assert_array_equal(corrupted.features[~corrupted.mask], clean.features[~corrupted.mask])
    np.testing.assert_array_equal(corrupted.response, clean.response)


@pytest.mark.parametrize("strategy", ["assignation", "mia"])
def test_train_and_predict(tmp_path, corrupted_csv, strategy):
    forest_path = tmp_path / "forest.json"
    predictions = tmp_path / "predictions.csv"

    invoke(
        "train",
        "--in",
        str(corrupted_csv),
        "--strategy",
        strategy,
        "--trees",
        "5",
        "--mtry",
        "2",
        "--seed",
        "6",
        "--out",
        str(forest_path),
    )
    forest = load_forest(forest_path)
    assert forest.n_trees == 5
    assert forest.params.seed == 6

    invoke("predict", "--forest", str(forest_path), "--in", str(corrupted_csv), "--out", str(predictions))

    frame = pd.read_csv(predictions)
    assert list(frame.columns) == ["prediction"]
    assert len(frame) == 120

    data = read_csv(corrupted_csv)
    np.testing.assert_allclose(frame["prediction"], forest.predict(data.features, data.mask), rtol=0, atol=1e-9)


def test_stochastic_predict_logs_mse_of_written_predictions(tmp_path, corrupted_csv):
    forest_path = tmp_path / "forest.json"
    predictions = tmp_path / "predictions.csv"
    invoke("train", "--in", str(corrupted_csv), "--trees", "5", "--mtry", "2", "--seed", "6", "--out", str(forest_path))

    logged = []
    handler = LOGGER.add(lambda m: logged.append(m.record["message"]), level="INFO")
    try:
        invoke(
            "predict",
            "--forest",
            str(forest_path),
            "--in",
            str(corrupted_csv),
            "--mode",
            "stochastic",
            "--seed",
            "9",
            "--out",
            str(predictions),
        )
    finally:
        LOGGER.remove(handler)

    (line,) = [m for m in logged if m.startswith("mse against the noiseless truth")]
    written = pd.read_csv(predictions)["prediction"].to_numpy()
    truth = read_csv(corrupted_csv).truth

    assert float(line.split()[-1]) == pytest.approx(np.mean((written - truth) ** 2), abs=1e-6)


def test_predict_rejects_other_width(tmp_path, corrupted_csv):
    forest_path = tmp_path / "forest.json"
    narrow = tmp_path / "narrow.csv"
    narrow.write_text("x1,x2,y\n0.1,0.2,1.0\n")

    invoke("train", "--in", str(corrupted_csv), "--trees", "2", "--out", str(forest_path))

    with pytest.raises(ParseError, match="features"):
        invoke("predict", "--forest", str(forest_path), "--in", str(narrow), "--out", str(tmp_path / "p.csv"))


@pytest.fixture
def bench_config(tmp_path):
    path = tmp_path / "bench.json"
    path.write_text(json.dumps({"n_train": 60, "n_test": 100, "forest": {"n_trees": 3}}))
    return path


def test_bench(tmp_path, bench_config, sent, monkeypatch):
    monkeypatch.setenv("NOTIFICATION_GENERIC_WEBHOOK", "https://generic.example/hook")
    out = tmp_path / "bench"

    invoke(
        "bench",
        "--config",
        str(bench_config),
        "--reps",
        "1",
        "--x4-rates",
        "0.5",
        "--strategies",
        "assignation,median",
        "--out",
        str(out),
    )

    detail = pd.read_csv(out / "detail.csv")
    assert detail["strategy"].tolist() == ["assignation", "median"]
    assert len(pd.read_csv(out / "summary.csv")) == 2

    (call,) = sent
    assert call["json"]["level"] == 20
    assert "benchmark finished" in call["json"]["message"]


def test_bench_failure_is_pushed(tmp_path, sent, monkeypatch):
    monkeypatch.setenv("NOTIFICATION_SLACK_WEBHOOK", "https://slack.example/hook")

    def fail(cfg):
        raise ConfigError("broken grid")

    monkeypatch.setattr(cli, "run_benchmark", fail)

    with pytest.raises(ConfigError):
        invoke("bench", "--out", str(tmp_path / "bench"))

    (call,) = sent
    assert call["json"]["text"].startswith("ERROR command:bench")
    assert "broken grid" in call["json"]["text"]
