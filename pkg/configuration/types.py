import math
from typing import Self

from attrs import evolve, field, frozen


class ConfigError(Exception):
    pass


def _positive(name: str, value: int) -> None:
    if value < 1:
        raise ConfigError(f"{name} must be at least 1 ({name}={value})")


def _rate(value: float) -> float:
    value = float(value)
    if not 0 <= value < 1:
        raise ConfigError(f"missing rate must lie in [0, 1) ({value=})")
    return value


def _rates(values) -> tuple[float, ...]:
    return tuple(_rate(v) for v in values)


@frozen
class TreeParams:
    mtry: int | None = None
    nodesize: int = 5
    q_n: int | None = None

    def __attrs_post_init__(self):
        _positive("nodesize", self.nodesize)

        if self.mtry is not None:
            _positive("mtry", self.mtry)

        if self.q_n is not None:
            _positive("q_n", self.q_n)
            if 2 * self.q_n - 1 > self.nodesize:
                raise ConfigError(
                    "2*q_n-1 must not exceed nodesize "
                    f"({self.q_n=}, {self.nodesize=})"
                )

    @property
    def min_leaf(self) -> int:
        if self.q_n is not None:
            return self.q_n
        # largest q_n allowed by 2*q_n-1 <= nodesize
        return (self.nodesize + 1) // 2

    def resolve_mtry(self, n_features: int) -> int:
        mtry = self.mtry if self.mtry is not None else max(1, n_features // 3)
        if mtry > n_features:
            raise ConfigError(f"mtry exceeds the number of features ({mtry=}, {n_features=})")
        return mtry


@frozen
class ForestParams:
    n_trees: int = 50
    subsample_size: int | None = None
    subsample_frac: float = 0.632
    tree: TreeParams = field(factory=TreeParams)
    seed: int = 0
    n_jobs: int = 1

    def __attrs_post_init__(self):
        _positive("n_trees", self.n_trees)

        if self.subsample_size is not None:
            _positive("subsample_size", self.subsample_size)

        if not 0 < self.subsample_frac <= 1:
            raise ConfigError(f"subsample_frac must lie in (0, 1] ({self.subsample_frac=})")

    def resolve_subsample(self, n: int) -> int:
        if self.subsample_size is not None:
            a_n = self.subsample_size
        else:
            a_n = max(1, math.ceil(self.subsample_frac * n))

        if a_n > n:
            raise ConfigError(f"subsample larger than the data ({a_n=}, {n=})")

        if self.tree.nodesize > a_n:
            raise ConfigError(
                f"nodesize must not exceed the subsample ({self.tree.nodesize=}, {a_n=})"
            )

        return a_n

    def with_seed(self, seed: int) -> Self:
        return evolve(self, seed=seed)


@frozen
class BenchmarkConfig:
    n_train: int = 200
    n_reps: int = 100
    n_test: int = 2000
    sigma: float = 1.0
    x4_rates: tuple[float, ...] = field(
        default=(0.05, 0.10, 0.20, 0.40, 0.60, 0.80, 0.90, 0.95), converter=_rates
    )
    x1_rate: float = field(default=0.2, converter=_rate)
    x3_rate: float = field(default=0.1, converter=_rate)
    strategies: tuple[str, ...] = field(
        default=(
            "assignation",
            "mia",
            "median",
            "breiman",
            "ishioka",
            "missforest",
            "complete",
        ),
        converter=tuple,
    )
    seed: int = 0
    forest: ForestParams = field(factory=ForestParams)
    ishioka_k: int = 10
    imputer_iters: int = 5
    imputer_tol: float = 1e-3
    missforest_iters: int = 10
    prediction_mode: str = "fractional"
    n_jobs: int = 1

    def __attrs_post_init__(self):
        _positive("n_train", self.n_train)
        _positive("n_reps", self.n_reps)
        _positive("n_test", self.n_test)
        _positive("ishioka_k", self.ishioka_k)
        _positive("imputer_iters", self.imputer_iters)
        _positive("missforest_iters", self.missforest_iters)

        if self.sigma < 0:
            raise ConfigError(f"sigma must be non-negative ({self.sigma=})")

        if not self.strategies:
            raise ConfigError("at least one strategy must be selected")

        if self.prediction_mode not in ("fractional", "stochastic"):
            raise ConfigError(f"unknown prediction mode ({self.prediction_mode=})")

    def rates_for(self, x4_rate: float) -> tuple[float, ...]:
        # friedman1 has five inputs, only x1, x3 and x4 lose values
        return (self.x1_rate, 0.0, self.x3_rate, _rate(x4_rate), 0.0)


@frozen
class NotificationDiscord:
    webhook_url: str


@frozen
class NotificationSlack:
    webhook_url: str


@frozen
class NotificationTelegram:
    bot_token: str
    chat_id: str


@frozen
class NotificationGeneric:
    webhook_url: str


@frozen
class Notification:
    discord: NotificationDiscord | None = None
    slack: NotificationSlack | None = None
    telegram: NotificationTelegram | None = None
    generic: NotificationGeneric | None = None


@frozen
class Configuration:
    command: str
    forest: ForestParams
    bench: BenchmarkConfig
    notification: Notification
    log_level: str = "INFO"

    input_path: str | None = None
    output_path: str | None = None
    forest_path: str | None = None

    # simulate / corrupt
    n: int = 200
    sigma: float = 1.0
    seed: int = 0
    rates: tuple[float, ...] = ()

    # train / predict / bench
    strategy: str = "assignation"
    mode: str = "fractional"
    format: str = "csv"
