import math
from collections.abc import Callable, Iterable

import numpy as np
from attrs import evolve, field, frozen
from loguru import logger as LOGGER

from configuration.types import ConfigError, ForestParams, TreeParams

from .data import Dataset
from .errors import InvalidInputError
from .forest import Forest, derive_seed, fit_forest, proximity
from .split import (
    Cell,
    MiaRule,
    MiaSplit,
    SplitDecision,
    candidate_thresholds,
    cart_complete_sse,
    first_best,
    score_grid,
    tie_tolerance,
)

# seed streams of the iterative imputers
_BREIMAN, _ISHIOKA, _MISSFOREST = 1, 2, 3


@frozen(eq=False)
class ImputationState:
    # completed data, every cell observed
    dataset: Dataset
    # cells that were missing in the input
    imputed: np.ndarray = field(repr=False)
    iteration: int = 0
    changes: tuple[float, ...] = ()
    # cells whose proximity weights summed to zero and took the column median
    fallback: np.ndarray | None = field(default=None, repr=False)


def column_medians(data: Dataset) -> np.ndarray:
    medians = np.empty(data.p)
    for h in range(data.p):
        observed = data.features[~data.mask[:, h], h]
        if observed.size == 0:
            raise InvalidInputError(f"column x{h + 1} has no observed value")
        # even counts take the midpoint of the two central values
        medians[h] = np.median(observed)
    return medians


def impute_median(data: Dataset) -> Dataset:
    if not data.has_missing:
        return data.filled(data.features)

    features = np.where(data.mask, column_medians(data)[None, :], data.features)
    return data.filled(features)


def best_mia_split(cell: Cell, data: Dataset, candidate_directions: Iterable[int], q_n: int) -> SplitDecision | None:
    members = cell.members
    n = cell.count
    if n < 2 * q_n:
        return None

    y = data.response[members]
    centered = data.response - y.mean()

    best: tuple[float, MiaSplit] | None = None

    for h in sorted(int(d) for d in candidate_directions):
        miss = data.mask[members, h]
        observed = members[~miss]

        x = data.features[observed, h]
        order = np.argsort(x, kind="stable")
        thresholds, n_below = candidate_thresholds(x, *cell.bounds[h], edges=False)
        observed_sums = np.concatenate(([0.0], np.cumsum(centered[observed][order])))[n_below]

        n_missing = int(miss.sum())
        missing_sum = float(centered[members[miss]].sum())

        # columns: missing left, missing right
        grid = score_grid(
            np.stack((n_below + n_missing, n_below), axis=1),
            np.stack((observed_sums + missing_sum, observed_sums), axis=1),
            n,
            q_n,
        )
        # last row: observed left, missing right
        apart = score_grid(np.array([len(observed)]), np.array([centered[observed].sum()]), n, q_n)[0]
        scores = np.vstack((grid, [[apart, -np.inf]]))

        found = first_best(scores)
        if found is None:
            continue

        index, score = found
        if best is None or score > best[0] + tie_tolerance(best[0]):
            t, c = divmod(index, 2)
            if t == len(thresholds):
                split = MiaSplit(h, MiaRule.MISSING_APART)
            else:
                rule = MiaRule.MISSING_LEFT if c == 0 else MiaRule.MISSING_RIGHT
                split = MiaSplit(h, rule, float(thresholds[t]))
            best = (score, split)

    if best is None:
        return None

    _, split = best
    h = split.direction
    left = split.routes_left(data.features[members, h], data.mask[members, h])

    return SplitDecision(
        cut=split,
        assignation=None,
        p_left=None,
        score=cart_complete_sse(y, left),
        left_members=members[left],
        right_members=members[~left],
    )


def fit_mia_forest(data: Dataset, params: ForestParams) -> Forest:
    return fit_forest(data, params, splitter=best_mia_split)


def inner_params(params: ForestParams, n_rows: int, seed: int) -> ForestParams:
    a_n = min(n_rows, max(1, math.ceil(params.subsample_frac * n_rows)))
    nodesize = min(params.tree.nodesize, a_n)
    q_n = min(params.tree.min_leaf, (nodesize + 1) // 2)

    return evolve(
        params,
        subsample_size=a_n,
        tree=TreeParams(mtry=params.tree.mtry, nodesize=nodesize, q_n=q_n),
        seed=seed,
    )


type ProximityUpdate = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def _iterate_proximity(
    data: Dataset,
    params: ForestParams,
    max_iters: int,
    tol: float,
    update: ProximityUpdate,
    stream: int,
) -> ImputationState:
    mask = data.mask
    current = impute_median(data)

    if not mask.any():
        return ImputationState(dataset=current, imputed=mask, fallback=np.zeros_like(mask))

    medians = column_medians(data)
    changes = []
    fallback = np.zeros_like(mask)

    for t in range(max_iters):
        forest = fit_forest(current, inner_params(params, data.n, derive_seed(params.seed, stream, t)))
        weights = proximity(forest, current)

        features, fallback = update(current.features, mask, weights, medians)
        change = float(np.mean(np.abs(features[mask] - current.features[mask])))
        changes.append(change)

        current = current.filled(features)
        LOGGER.debug(f"proximity imputation iteration {t + 1}, {change=:.6f}")

        if change < tol:
            break

    if fallback.any():
        LOGGER.warning(f"{int(fallback.sum())} cells had zero proximity weight, used the column median")

    return ImputationState(
        dataset=current,
        imputed=mask,
        iteration=len(changes),
        changes=tuple(changes),
        fallback=fallback,
    )


def breiman_update(
    features: np.ndarray,
    mask: np.ndarray,
    weights: np.ndarray,
    medians: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    out = features.copy()
    fallback = np.zeros_like(mask)

    for h in range(features.shape[1]):
        miss = np.flatnonzero(mask[:, h])
        obs = np.flatnonzero(~mask[:, h])
        if miss.size == 0:
            continue

        w = weights[np.ix_(miss, obs)]
        total = w.sum(axis=1)
        weighted = w @ features[obs, h]

        empty = total <= 0
        out[miss, h] = np.where(empty, medians[h], weighted / np.where(empty, 1.0, total))
        fallback[miss[empty], h] = True

    return out, fallback


def impute_breiman(
    data: Dataset,
    params: ForestParams,
    max_iters: int = 5,
    tol: float = 1e-3,
) -> ImputationState:
    return _iterate_proximity(data, params, max_iters, tol, breiman_update, _BREIMAN)


def ishioka_update(k: int) -> ProximityUpdate:
    def update(
        features: np.ndarray,
        mask: np.ndarray,
        weights: np.ndarray,
        medians: np.ndarray,
    ) -> tuple[np.ndarray, np.ndarray]:
        out = features.copy()
        fallback = np.zeros_like(mask)
        n = features.shape[0]

        for j, h in zip(*np.nonzero(mask), strict=True):
            others = np.delete(np.arange(n), j)
            # highest proximity first, ties by row index
            order = others[np.argsort(-weights[j, others], kind="stable")][:k]

            w = weights[j, order]
            if w.sum() <= 0:
                out[j, h] = medians[h]
                fallback[j, h] = True
                continue

            out[j, h] = w @ features[order, h] / w.sum()

        return out, fallback

    return update


def impute_ishioka(
    data: Dataset,
    params: ForestParams,
    k: int = 10,
    max_iters: int = 5,
    tol: float = 1e-3,
) -> ImputationState:
    if k < 1:
        raise InvalidInputError(f"neighbor count must be positive ({k=})")
    return _iterate_proximity(data, params, max_iters, tol, ishioka_update(k), _ISHIOKA)


def iterate_until_divergence(
    initial: np.ndarray,
    step: Callable[[np.ndarray, int], np.ndarray],
    max_iters: int,
) -> tuple[np.ndarray, int, tuple[float, ...]]:
    # returns the iterate before the squared change first grows
    current = initial
    changes: list[float] = []

    for t in range(max_iters):
        updated = step(current, t)
        change = float(np.sum((updated - current) ** 2))
        changes.append(change)

        if len(changes) > 1 and change > changes[-2]:
            return current, t, tuple(changes)

        current = updated

    return current, len(changes), tuple(changes)


def _scaled(values: np.ndarray) -> np.ndarray:
    low, high = values.min(), values.max()
    if high == low:
        return np.zeros_like(values)
    return (values - low) / (high - low)


def impute_missforest(data: Dataset, params: ForestParams, max_iters: int = 10) -> ImputationState:
    mask = data.mask
    if not mask.any():
        return ImputationState(dataset=data.filled(data.features), imputed=mask)

    if mask.all(axis=0).any():
        raise ConfigError("missForest needs at least one observed value per column")

    # the response joins the predictors; rescaled so features stay in [0, 1]
    response = _scaled(data.response)

    columns = [int(h) for h in np.argsort(mask.sum(axis=0), kind="stable") if mask[:, h].any()]

    def step(current: np.ndarray, t: int) -> np.ndarray:
        updated = current.copy()

        for h in columns:
            miss = mask[:, h]
            design = np.column_stack((np.delete(updated, h, axis=1), response))

            train = Dataset.complete(design[~miss], updated[~miss, h])
            forest = fit_forest(
                train,
                inner_params(params, train.n, derive_seed(params.seed, _MISSFOREST, t, h)),
            )
            updated[miss, h] = forest.predict(design[miss])

        return updated

    initial = impute_median(data).features
    features, iteration, changes = iterate_until_divergence(np.array(initial), step, max_iters)

    LOGGER.debug(f"missForest stopped after {iteration} iterations, {changes=}")

    return ImputationState(
        dataset=data.filled(features),
        imputed=mask,
        iteration=iteration,
        changes=changes,
    )
