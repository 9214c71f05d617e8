import json
import math
import time
from collections.abc import Callable, Iterable, Sequence
from pathlib import Path

import numpy as np
import pandas as pd
from attrs import evolve, frozen
from joblib import Parallel, delayed
from loguru import logger as LOGGER

from configuration.types import BenchmarkConfig, ConfigError, ForestParams, TreeParams

from .baselines import (
    fit_mia_forest,
    impute_breiman,
    impute_ishioka,
    impute_median,
    impute_missforest,
)
from .data import Dataset, generate_sample, inject_mcar
from .forest import Forest, derive_seed, fit_forest
from .message import Message, MessageLevel

# features, mask -> predictions
type Predictor = Callable[[np.ndarray, np.ndarray], np.ndarray]
type FitStrategy = Callable[[Dataset, Dataset, ForestParams, BenchmarkConfig], Predictor]

# seed streams below the master seed
_TEST, _TRAIN, _INJECT, _FOREST, _PREDICT = range(5)

DETAIL_COLUMNS = ["strategy", "x4_rate", "rep", "mse"]
SUMMARY_COLUMNS = ["strategy", "x4_rate", "mean_mse", "stderr"]


def mse_vs_truth(predictor: Predictor, test: Dataset) -> float:
    if test.truth is None:
        raise ConfigError("test data carries no noiseless truth column")

    if test.n == 0:
        raise ConfigError("test data is empty")

    predictions = np.asarray(predictor(test.features, test.mask), dtype=float)
    return float(np.mean((predictions - test.truth) ** 2))


def _forest_predictor(forest: Forest, cfg: BenchmarkConfig) -> Predictor:
    rng = np.random.default_rng(derive_seed(forest.params.seed, _PREDICT))

    def predict(features: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return forest.predict(features, mask, mode=cfg.prediction_mode, rng=rng)

    return predict


def fit_assignation(train: Dataset, clean: Dataset, params: ForestParams, cfg: BenchmarkConfig) -> Predictor:
    return _forest_predictor(fit_forest(train, params), cfg)


def fit_mia(train: Dataset, clean: Dataset, params: ForestParams, cfg: BenchmarkConfig) -> Predictor:
    return _forest_predictor(fit_mia_forest(train, params), cfg)


def fit_median(train: Dataset, clean: Dataset, params: ForestParams, cfg: BenchmarkConfig) -> Predictor:
    return _forest_predictor(fit_forest(impute_median(train), params), cfg)


def fit_breiman(train: Dataset, clean: Dataset, params: ForestParams, cfg: BenchmarkConfig) -> Predictor:
    state = impute_breiman(train, params, cfg.imputer_iters, cfg.imputer_tol)
    return _forest_predictor(fit_forest(state.dataset, params), cfg)


def fit_ishioka(train: Dataset, clean: Dataset, params: ForestParams, cfg: BenchmarkConfig) -> Predictor:
    state = impute_ishioka(train, params, cfg.ishioka_k, cfg.imputer_iters, cfg.imputer_tol)
    return _forest_predictor(fit_forest(state.dataset, params), cfg)


def fit_missforest(train: Dataset, clean: Dataset, params: ForestParams, cfg: BenchmarkConfig) -> Predictor:
    state = impute_missforest(train, params, cfg.missforest_iters)
    return _forest_predictor(fit_forest(state.dataset, params), cfg)


def fit_complete(train: Dataset, clean: Dataset, params: ForestParams, cfg: BenchmarkConfig) -> Predictor:
    # the data before any value was removed
    return _forest_predictor(fit_forest(clean, params), cfg)


STRATEGIES: dict[str, FitStrategy] = {
    "assignation": fit_assignation,
    "mia": fit_mia,
    "median": fit_median,
    "breiman": fit_breiman,
    "ishioka": fit_ishioka,
    "missforest": fit_missforest,
    "complete": fit_complete,
}


def check_strategies(names: Iterable[str]) -> None:
    unknown = [s for s in names if s not in STRATEGIES]
    if unknown:
        raise ConfigError(f"unknown strategies {unknown}, valid names are {list(STRATEGIES)}")


@frozen
class RepRecord:
    strategy: str
    x4_rate: float
    rep: int
    mse: float
    seconds: float


@frozen
class CellSummary:
    strategy: str
    x4_rate: float
    mean_mse: float
    stderr: float
    mse: tuple[float, ...]
    seconds: float


@frozen
class BenchmarkResult:
    records: tuple[RepRecord, ...] = ()
    wall_time: float = 0.0

    def summary(self) -> list[CellSummary]:
        cells: dict[tuple[str, float], list[RepRecord]] = {}
        for r in self.records:
            cells.setdefault((r.strategy, r.x4_rate), []).append(r)

        out = []
        for (strategy, rate), records in cells.items():
            mse = np.array([r.mse for r in records])
            # a single rep has no spread to report
            stderr = float(mse.std(ddof=1) / math.sqrt(mse.size)) if mse.size > 1 else 0.0
            out.append(
                CellSummary(
                    strategy=strategy,
                    x4_rate=rate,
                    mean_mse=float(mse.mean()),
                    stderr=stderr,
                    mse=tuple(float(v) for v in mse),
                    seconds=sum(r.seconds for r in records),
                )
            )
        return out

    def mean(self, strategy: str, x4_rate: float) -> float:
        for s in self.summary():
            if s.strategy == strategy and s.x4_rate == x4_rate:
                return s.mean_mse
        raise KeyError((strategy, x4_rate))


def make_test_set(cfg: BenchmarkConfig) -> Dataset:
    return generate_sample(cfg.n_test, cfg.sigma, derive_seed(cfg.seed, _TEST))


def training_pair(cfg: BenchmarkConfig, rep: int, rate_index: int) -> tuple[Dataset, Dataset]:
    # the clean sample depends on the rep only, so every rate sees the same observations
    clean = generate_sample(cfg.n_train, cfg.sigma, derive_seed(cfg.seed, _TRAIN, rep))
    rates = cfg.rates_for(cfg.x4_rates[rate_index])
    return clean, inject_mcar(clean, rates, derive_seed(cfg.seed, _INJECT, rep, rate_index))


def _cell_params(cfg: BenchmarkConfig, rep: int, rate_index: int, parallel_cells: bool) -> ForestParams:
    params = cfg.forest.with_seed(derive_seed(cfg.seed, _FOREST, rep, rate_index))
    if parallel_cells:
        params = evolve(params, n_jobs=1)
    return params


def _run_cell(
    cfg: BenchmarkConfig,
    test: Dataset,
    strategy: str,
    rate_index: int,
    rep: int,
    parallel_cells: bool,
) -> RepRecord:
    rate = cfg.x4_rates[rate_index]
    builder = Message.builder().add(strategy=strategy, rate=rate, rep=rep)

    start = time.perf_counter()

    clean, train = training_pair(cfg, rep, rate_index)
    params = _cell_params(cfg, rep, rate_index, parallel_cells)
    predictor = STRATEGIES[strategy](train, clean, params, cfg)
    mse = mse_vs_truth(predictor, test)

    seconds = time.perf_counter() - start

    msg = builder.build(MessageLevel.DEBUG, f"mse={mse:.4f} in {seconds:.2f}s")
    LOGGER.log(msg.level.name, msg.message)

    return RepRecord(strategy=strategy, x4_rate=rate, rep=rep, mse=mse, seconds=seconds)


def run_benchmark(cfg: BenchmarkConfig) -> BenchmarkResult:
    check_strategies(cfg.strategies)

    start = time.perf_counter()
    test = make_test_set(cfg)

    cells = [
        (strategy, rate_index, rep)
        for strategy in cfg.strategies
        for rate_index in range(len(cfg.x4_rates))
        for rep in range(cfg.n_reps)
    ]

    LOGGER.info(
        f"benchmark with {len(cells)} cells, strategies={list(cfg.strategies)}, "
        f"x4_rates={list(cfg.x4_rates)}, reps={cfg.n_reps}"
    )

    parallel_cells = cfg.n_jobs != 1
    records = Parallel(n_jobs=cfg.n_jobs)(
        delayed(_run_cell)(cfg, test, strategy, rate_index, rep, parallel_cells)
        for strategy, rate_index, rep in cells
    )

    return BenchmarkResult(
        records=tuple(records),  # type: ignore
        wall_time=time.perf_counter() - start,
    )


def detail_frame(result: BenchmarkResult) -> pd.DataFrame:
    rows = [[r.strategy, r.x4_rate, r.rep, r.mse] for r in result.records]
    return pd.DataFrame(rows, columns=DETAIL_COLUMNS)


def summary_frame(result: BenchmarkResult) -> pd.DataFrame:
    rows = [[s.strategy, s.x4_rate, s.mean_mse, s.stderr] for s in result.summary()]
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def emit(result: BenchmarkResult, fmt: str, path: str | Path) -> list[Path]:
    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)

    detail, summary = detail_frame(result), summary_frame(result)

    match fmt:
        case "csv":
            written = [out_dir / "detail.csv", out_dir / "summary.csv"]
            detail.to_csv(written[0], index=False, lineterminator="\n")
            summary.to_csv(written[1], index=False, lineterminator="\n")
        case "json":
            written = [out_dir / "result.json"]
            with open(written[0], "w") as fp:
                json.dump(
                    {
                        "detail": detail.to_dict(orient="records"),
                        "summary": summary.to_dict(orient="records"),
                    },
                    fp,
                    indent=2,
                )
        case _:
            raise ConfigError(f"unknown output format ({fmt=})")

    LOGGER.info(f"wrote {', '.join(str(p) for p in written)}")
    return written


def cube_root_ceil(n: int) -> int:
    q = max(1, round(n ** (1 / 3)))
    while q**3 < n:
        q += 1
    while q > 1 and (q - 1) ** 3 >= n:
        q -= 1
    return q


@frozen
class ConsistencyPoint:
    n: int
    q_n: int
    mean_mse: float
    mse: tuple[float, ...]


def consistency_curve(
    ns: Sequence[int],
    reps: int,
    rate: float,
    seed: int = 0,
    forest: ForestParams | None = None,
    n_test: int = 2000,
    sigma: float = 1.0,
) -> list[ConsistencyPoint]:
    # the same rate hits x1, x3 and x4; rep k uses the same seeds at every n
    forest = forest or ForestParams()
    cfg = BenchmarkConfig(n_test=n_test, sigma=sigma, seed=seed)
    test = make_test_set(cfg)
    rates = (rate, 0.0, rate, rate, 0.0)

    points = []
    for n in ns:
        q_n = cube_root_ceil(n)
        tree = TreeParams(
            mtry=forest.tree.mtry,
            nodesize=max(forest.tree.nodesize, 2 * q_n - 1),
            q_n=q_n,
        )

        mse = []
        for rep in range(reps):
            clean = generate_sample(n, sigma, derive_seed(seed, _TRAIN, rep))
            train = inject_mcar(clean, rates, derive_seed(seed, _INJECT, rep))
            params = evolve(forest, tree=tree, seed=derive_seed(seed, _FOREST, rep))
            fitted = fit_forest(train, params)
            mse.append(mse_vs_truth(fitted.predict, test))

        point = ConsistencyPoint(n=n, q_n=q_n, mean_mse=float(np.mean(mse)), mse=tuple(mse))
        LOGGER.info(f"consistency n={n} q_n={q_n} mean_mse={point.mean_mse:.4f}")
        points.append(point)

    return points
