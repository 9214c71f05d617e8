import numpy as np
import pandas as pd
from loguru import logger as LOGGER

from configuration.config import Command
from configuration.types import ConfigError, Configuration

from .baselines import fit_mia_forest
from .bench import emit, mse_vs_truth, run_benchmark
from .data import generate_sample, inject_mcar, read_csv, write_csv
from .forest import fit_forest, load_forest, save_forest
from .message import Message, MessageLevel
from .notification import log_message


def _require(value: str | None, flag: str) -> str:
    if value is None:
        raise ConfigError(f"missing required flag {flag}")
    return value


def simulate(config: Configuration):
    out = _require(config.output_path, "--out")
    data = generate_sample(config.n, config.sigma, config.seed)
    write_csv(data, out)
    LOGGER.info(f"wrote {data.n} friedman1 rows to {out} (sigma={config.sigma}, seed={config.seed})")


def corrupt(config: Configuration):
    data = read_csv(_require(config.input_path, "--in"))
    out = _require(config.output_path, "--out")

    corrupted = inject_mcar(data, config.rates, config.seed)
    write_csv(corrupted, out)

    fractions = ", ".join(f"x{j + 1}={f:.3f}" for j, f in enumerate(corrupted.missing_fraction()))
    LOGGER.info(f"wrote {out}, missing fractions {fractions}")


def train(config: Configuration):
    data = read_csv(_require(config.input_path, "--in"))
    out = _require(config.output_path, "--out")

    match config.strategy:
        case "assignation":
            forest = fit_forest(data, config.forest)
        case "mia":
            forest = fit_mia_forest(data, config.forest)
        case x:
            raise ConfigError(f"train supports assignation and mia ({x=})")

    save_forest(forest, out)
    LOGGER.info(f"wrote {forest.n_trees} {config.strategy} trees fitted on {data.n} rows to {out}")


def predict(config: Configuration):
    forest = load_forest(_require(config.forest_path, "--forest"))
    data = read_csv(_require(config.input_path, "--in"), p=forest.n_features)
    out = _require(config.output_path, "--out")

    rng = np.random.default_rng(config.seed)
    predictions = forest.predict(data.features, data.mask, mode=config.mode, rng=rng)

    pd.DataFrame({"prediction": predictions}).to_csv(out, index=False, lineterminator="\n")
    LOGGER.info(f"wrote {len(predictions)} predictions to {out}")

    if data.truth is not None:
        mse = mse_vs_truth(lambda f, m: predictions, data)
        LOGGER.info(f"mse against the noiseless truth {mse:.6f}")


def bench(config: Configuration):
    out = _require(config.output_path, "--out")
    builder = Message.builder().add(command=Command.BENCH)

    try:
        result = run_benchmark(config.bench)
        emit(result, config.format, out)
    except Exception as e:
        log_message(config.notification, builder.build(MessageLevel.ERROR, f"benchmark failed: {e}"))
        raise

    best = {}
    for s in result.summary():
        if s.x4_rate not in best or s.mean_mse < best[s.x4_rate][1]:
            best[s.x4_rate] = (s.strategy, s.mean_mse)

    lines = ", ".join(f"{rate:g}:{name}" for rate, (name, _) in sorted(best.items()))
    log_message(
        config.notification,
        builder.build(
            MessageLevel.INFO,
            f"benchmark finished in {result.wall_time:.1f}s with {len(result.records)} runs, best per x4 rate {lines}",
        ),
    )


def run(config: Configuration):
    match config.command:
        case Command.SIMULATE:
            simulate(config)
        case Command.CORRUPT:
            corrupt(config)
        case Command.TRAIN:
            train(config)
        case Command.PREDICT:
            predict(config)
        case Command.BENCH:
            bench(config)
        case x:
            raise ConfigError(f"unknown command ({x=})")
