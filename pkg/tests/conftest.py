import numpy as np
import pytest
import requests

from configuration.types import BenchmarkConfig, ForestParams, TreeParams
from rfmissing.data import Dataset, generate_sample, inject_mcar


@pytest.fixture
def four_points() -> Dataset:
    # observed y=0 left of 0.5, observed y=10 right of it, two missing rows
    return Dataset(
        features=[[0.2], [0.8], [np.nan], [np.nan]],
        mask=[[False], [False], [True], [True]],
        response=[0.0, 10.0, 1.0, 9.0],
    )


@pytest.fixture
def corrupted() -> Dataset:
    clean = generate_sample(80, sigma=1.0, seed=11)
    return inject_mcar(clean, (0.2, 0.0, 0.1, 0.3, 0.0), seed=12)


@pytest.fixture
def small_forest() -> ForestParams:
    return ForestParams(n_trees=8, tree=TreeParams(mtry=2, nodesize=5), seed=5)


@pytest.fixture
def tiny_bench() -> BenchmarkConfig:
    return BenchmarkConfig(
        n_train=40,
        n_reps=2,
        n_test=60,
        x4_rates=(0.2, 0.8),
        forest=ForestParams(n_trees=3, tree=TreeParams(nodesize=5)),
        imputer_iters=2,
        missforest_iters=2,
        ishioka_k=5,
        seed=7,
    )


ENVIRONMENT = [
    "RF_SEED",
    "RF_N_JOBS",
    "RF_LOG_LEVEL",
    "NOTIFICATION_DISCORD_WEBHOOK",
    "NOTIFICATION_SLACK_WEBHOOK",
    "NOTIFICATION_TELEGRAM_BOT_TOKEN",
    "NOTIFICATION_TELEGRAM_CHAT_ID",
    "NOTIFICATION_GENERIC_WEBHOOK",
]


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in ENVIRONMENT:
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def sent(monkeypatch) -> list[dict]:
    calls = []

    def request(**kwargs):
        calls.append(kwargs)
        return requests.Response()

    monkeypatch.setattr(requests, "request", request)
    return calls
