import json
from pathlib import Path
from typing import Any, Self

import numpy as np
from attrs import asdict, field, frozen
from joblib import Parallel, delayed
from loguru import logger as LOGGER

from configuration.types import ConfigError, ForestParams, TreeParams

from .data import Dataset
from .errors import InvalidInputError
from .split import best_split
from .tree import (
    PredictionMode,
    Splitter,
    Tree,
    apply_tree,
    grow_tree,
    predict_rows,
    predict_tree,
)


def tree_rng(seed: int, k: int) -> np.random.Generator:
    # counter based, independent of the order trees are grown in
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))


def derive_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=tuple(key)).generate_state(1)[0])


def draw_subsample(rng: np.random.Generator, n: int, a_n: int) -> np.ndarray:
    return np.sort(rng.choice(n, size=a_n, replace=False))


@frozen(eq=False)
class Forest:
    trees: tuple[Tree, ...]
    # row indices each tree was grown on
    subsamples: tuple[np.ndarray, ...] = field(repr=False)
    params: ForestParams
    n_features: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(
        self,
        features,
        mask=None,
        mode: PredictionMode | str = PredictionMode.FRACTIONAL,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        per_tree = np.stack([predict_rows(t, features, mask, mode, rng) for t in self.trees])
        return per_tree.mean(axis=0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "params": asdict(self.params),
            "n_features": self.n_features,
            "subsamples": [s.tolist() for s in self.subsamples],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Self:
        params = dict(d["params"])
        tree = TreeParams(**params.pop("tree"))
        return cls(
            trees=tuple(Tree.from_dict(t) for t in d["trees"]),
            subsamples=tuple(np.array(s, dtype=int) for s in d["subsamples"]),
            params=ForestParams(tree=tree, **params),
            n_features=int(d["n_features"]),
        )


def _fit_tree(
    data: Dataset,
    params: ForestParams,
    k: int,
    a_n: int,
    splitter: Splitter,
) -> tuple[np.ndarray, Tree]:
    rng = tree_rng(params.seed, k)
    indices = draw_subsample(rng, data.n, a_n)
    return indices, grow_tree(data.take(indices), params.tree, rng, splitter)


def fit_forest(data: Dataset, params: ForestParams, splitter: Splitter = best_split) -> Forest:
    if data.n == 0:
        raise InvalidInputError("cannot fit a forest on an empty dataset")

    a_n = params.resolve_subsample(data.n)
    params.tree.resolve_mtry(data.p)

    if a_n < params.tree.min_leaf:
        raise ConfigError(f"subsample smaller than the minimum leaf size ({a_n=}, {params.tree.min_leaf=})")

    LOGGER.debug(
        f"fitting {params.n_trees} trees, {a_n=}, nodesize={params.tree.nodesize}, "
        f"q_n={params.tree.min_leaf}, missing={data.mask.sum()}"
    )

    fitted = Parallel(n_jobs=params.n_jobs)(
        delayed(_fit_tree)(data, params, k, a_n, splitter) for k in range(params.n_trees)
    )

    return Forest(
        trees=tuple(t for _, t in fitted),  # type: ignore
        subsamples=tuple(s for s, _ in fitted),  # type: ignore
        params=params,
        n_features=data.p,
    )


def predict_forest(
    f: Forest,
    x,
    missing=None,
    mode: PredictionMode | str = PredictionMode.FRACTIONAL,
    rng: np.random.Generator | None = None,
) -> float:
    predictions = [predict_tree(t, x, missing, mode, rng) for t in f.trees]
    return float(np.mean(predictions))


def apply_forest(f: Forest, data: Dataset) -> np.ndarray:
    # (n_trees, n) terminal node ids
    if data.p != f.n_features:
        raise InvalidInputError(f"forest expects {f.n_features} features ({data.p=})")

    if data.n == 0:
        return np.empty((f.n_trees, 0), dtype=int)

    return np.stack([apply_tree(t, data.features, data.mask) for t in f.trees])


def proximity(f: Forest, data: Dataset) -> np.ndarray:
    leaves = apply_forest(f, data)

    together = np.zeros((data.n, data.n))
    for row in leaves:
        together += row[:, None] == row[None, :]

    return together / f.n_trees


def imputation_intervals(f: Forest, n: int) -> tuple[np.ndarray, np.ndarray]:
    # rows no tree sampled stay nan
    lower_sum = np.zeros((n, f.n_features))
    upper_sum = np.zeros((n, f.n_features))
    counts = np.zeros(n)

    for indices, t in zip(f.subsamples, f.trees, strict=True):
        lower_sum[indices] += t.lower
        upper_sum[indices] += t.upper
        counts[indices] += 1

    with np.errstate(invalid="ignore", divide="ignore"):
        return lower_sum / counts[:, None], upper_sum / counts[:, None]


def save_forest(f: Forest, path: str | Path) -> None:
    with open(path, "w") as fp:
        json.dump(f.to_dict(), fp)


def load_forest(path: str | Path) -> Forest:
    with open(path) as fp:
        return Forest.from_dict(json.load(fp))
