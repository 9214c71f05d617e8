import argparse
import json
import os
from typing import Any

from attrs import evolve, fields

from .types import (
    BenchmarkConfig,
    ConfigError,
    Configuration,
    ForestParams,
    Notification,
    NotificationDiscord,
    NotificationGeneric,
    NotificationSlack,
    NotificationTelegram,
    TreeParams,
)


class Command:
    SIMULATE = "simulate"
    CORRUPT = "corrupt"
    TRAIN = "train"
    PREDICT = "predict"
    BENCH = "bench"

    @classmethod
    def all(cls):
        return [cls.SIMULATE, cls.CORRUPT, cls.TRAIN, cls.PREDICT, cls.BENCH]


def parse_floats(value: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in value.split(",") if v.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers ({value=})") from e


def parse_names(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _add_forest_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--trees", type=int)
    p.add_argument("--mtry", type=int)
    p.add_argument("--nodesize", type=int)
    p.add_argument("--qn", type=int)
    p.add_argument("--subsample-frac", type=float)
    p.add_argument("--jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfmissing",
        description="random forests with assignation of missing values",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser(Command.SIMULATE, help="emit a friedman1 sample as csv")
    simulate.add_argument("--n", type=int, default=200)
    simulate.add_argument("--sigma", type=float, default=1.0)
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--out", required=True)

    corrupt = sub.add_parser(Command.CORRUPT, help="inject MCAR missing values")
    corrupt.add_argument("--in", dest="input", required=True)
    corrupt.add_argument("--rates", type=parse_floats, required=True)
    corrupt.add_argument("--seed", type=int)
    corrupt.add_argument("--out", required=True)

    train = sub.add_parser(Command.TRAIN, help="fit a forest and serialize it")
    train.add_argument("--in", dest="input", required=True)
    train.add_argument("--strategy", choices=["assignation", "mia"], default="assignation")
    train.add_argument("--out", required=True)
    _add_forest_flags(train)

    predict = sub.add_parser(Command.PREDICT, help="score a csv with a fitted forest")
    predict.add_argument("--forest", required=True)
    predict.add_argument("--in", dest="input", required=True)
    predict.add_argument("--mode", choices=["fractional", "stochastic"], default="fractional")
    predict.add_argument("--seed", type=int)
    predict.add_argument("--out", required=True)

    bench = sub.add_parser(Command.BENCH, help="run the missing-value benchmark grid")
    bench.add_argument("--config")
    bench.add_argument("--reps", type=int)
    bench.add_argument("--x4-rates", type=parse_floats)
    bench.add_argument("--strategies", type=parse_names)
    bench.add_argument("--format", choices=["csv", "json"], default="csv")
    bench.add_argument("--out", required=True)
    _add_forest_flags(bench)

    return parser


def _from_mapping[T](cls: type[T], d: dict[str, Any]) -> T:
    names = {f.name for f in fields(cls)}  # type: ignore
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    return cls(**d)


def load_benchmark_config(path: str) -> BenchmarkConfig:
    try:
        with open(path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"unable to read config file ({path=}): {e}") from e

    if not isinstance(raw, dict):
        raise ConfigError(f"config file must hold a json object ({path=})")

    raw = dict(raw)
    forest_raw = dict(raw.pop("forest", {}))
    tree_raw = forest_raw.pop("tree", {})

    forest = _from_mapping(ForestParams, {**forest_raw, "tree": _from_mapping(TreeParams, tree_raw)})
    return _from_mapping(BenchmarkConfig, {**raw, "forest": forest})


def get_notification_config() -> Notification:
    env = os.environ.get

    discord = env("NOTIFICATION_DISCORD_WEBHOOK")
    slack = env("NOTIFICATION_SLACK_WEBHOOK")
    generic = env("NOTIFICATION_GENERIC_WEBHOOK")

    # telegram needs both values
    bot_token = env("NOTIFICATION_TELEGRAM_BOT_TOKEN")
    chat_id = env("NOTIFICATION_TELEGRAM_CHAT_ID")
    telegram = None
    if bot_token is not None and chat_id is not None:
        telegram = NotificationTelegram(bot_token=bot_token, chat_id=chat_id)

    return Notification(
        discord=None if discord is None else NotificationDiscord(discord),
        slack=None if slack is None else NotificationSlack(slack),
        telegram=telegram,
        generic=None if generic is None else NotificationGeneric(generic),
    )


def _env_int(name: str) -> int | None:
    value = os.environ.get(name)
    if value is None:
        return None
    try:
        return int(value)
    except ValueError as e:
        raise ConfigError(f"{name} environment variable must be an integer ({value=})") from e


def _overrides(**kwargs: Any) -> dict[str, Any]:
    return {k: v for k, v in kwargs.items() if v is not None}


def apply_forest_flags(forest: ForestParams, args: argparse.Namespace, seed: int | None) -> ForestParams:
    tree = evolve(
        forest.tree,
        **_overrides(
            mtry=getattr(args, "mtry", None),
            nodesize=getattr(args, "nodesize", None),
            q_n=getattr(args, "qn", None),
        ),
    )
    return evolve(
        forest,
        tree=tree,
        **_overrides(
            n_trees=getattr(args, "trees", None),
            subsample_frac=getattr(args, "subsample_frac", None),
            n_jobs=getattr(args, "jobs", None),
            seed=seed,
        ),
    )


def get_config(argv: list[str] | None = None) -> Configuration:
    args = build_parser().parse_args(argv)

    # precedence: defaults < json file < environment < flags
    bench = BenchmarkConfig()
    if getattr(args, "config", None) is not None:
        bench = load_benchmark_config(args.config)

    env_seed = _env_int("RF_SEED")
    env_jobs = _env_int("RF_N_JOBS")
    bench = evolve(bench, **_overrides(seed=env_seed, n_jobs=env_jobs))

    flag_seed = getattr(args, "seed", None)
    seed = flag_seed if flag_seed is not None else bench.seed

    forest = apply_forest_flags(bench.forest, args, seed=seed)
    if getattr(args, "jobs", None) is None and env_jobs is not None:
        forest = evolve(forest, n_jobs=env_jobs)

    bench = evolve(
        bench,
        forest=forest,
        seed=seed,
        **_overrides(
            n_reps=getattr(args, "reps", None),
            x4_rates=getattr(args, "x4_rates", None),
            strategies=getattr(args, "strategies", None),
            n_jobs=getattr(args, "jobs", None),
        ),
    )

    return Configuration(
        command=args.command,
        forest=bench.forest,
        bench=bench,
        notification=get_notification_config(),
        log_level=os.environ.get("RF_LOG_LEVEL", "INFO").upper(),
        input_path=getattr(args, "input", None),
        output_path=getattr(args, "out", None),
        forest_path=getattr(args, "forest", None),
        n=getattr(args, "n", 200),
        sigma=getattr(args, "sigma", 1.0),
        seed=seed,
        rates=getattr(args, "rates", None) or (),
        strategy=getattr(args, "strategy", "assignation"),
        mode=getattr(args, "mode", "fractional"),
        format=getattr(args, "format", "csv"),
    )
