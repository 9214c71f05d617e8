import numpy as np
import pytest

from configuration.types import ConfigError, ForestParams, TreeParams
from rfmissing.baselines import (
    best_mia_split,
    breiman_update,
    impute_breiman,
    impute_ishioka,
    impute_median,
    impute_missforest,
    inner_params,
    ishioka_update,
    iterate_until_divergence,
)
from rfmissing.data import Dataset, generate_sample
from rfmissing.errors import InvalidInputError
from rfmissing.split import Cell, MiaRule, MiaSplit


def column(values) -> Dataset:
    values = [np.nan if v is None else v for v in values]
    return Dataset(
        features=np.array(values)[:, None],
        mask=np.isnan(values)[:, None],
        response=np.zeros(len(values)),
    )


def test_median_of_observed():
    assert impute_median(column([0.1, None, 0.3])).features[1, 0] == pytest.approx(0.2)
    assert impute_median(column([0.1, 0.2, None, 0.4])).features[2, 0] == pytest.approx(0.2)


def test_median_without_missing_is_identity():
    data = generate_sample(20, seed=1)
    assert impute_median(data).equals(data)


def test_median_of_empty_column():
    with pytest.raises(InvalidInputError):
        impute_median(column([None, None]))


def test_median_leaves_observed_cells(corrupted):
    filled = impute_median(corrupted)

    assert not filled.has_missing
    np.testing.assert_array_equal(filled.features[~corrupted.mask], corrupted.features[~corrupted.mask])


def test_mia_sends_missing_to_the_better_side():
    data = Dataset(
        features=[[0.1], [0.9], [np.nan]],
        mask=[[False], [False], [True]],
        response=[0.0, 10.0, 10.0],
    )
    decision = best_mia_split(Cell.root(data), data, [0], q_n=1)

    assert decision is not None
    assert decision.cut == MiaSplit(0, MiaRule.MISSING_RIGHT, 0.5)
    assert decision.p_left is None
    np.testing.assert_array_equal(decision.left_members, [0])
    np.testing.assert_array_equal(decision.right_members, [1, 2])


def test_mia_missing_apart():
    data = Dataset(
        features=[[0.2], [0.8], [np.nan], [np.nan]],
        mask=[[False], [False], [True], [True]],
        response=[0.0, 0.0, 10.0, 10.0],
    )
    decision = best_mia_split(Cell.root(data), data, [0], q_n=1)

    assert decision is not None
    assert decision.cut == MiaSplit(0, MiaRule.MISSING_APART)
    assert decision.score == pytest.approx(25.0)
    np.testing.assert_array_equal(decision.left_members, [0, 1])


def test_missing_apart_rule_routes_observed_left():
    split = MiaSplit(0, MiaRule.MISSING_APART)
    missing = np.array([False, True, False, True])

    np.testing.assert_array_equal(split.routes_left(np.array([0.1, np.nan, 0.9, np.nan]), missing), ~missing)


def test_mia_rule_needs_threshold():
    with pytest.raises(InvalidInputError):
        MiaSplit(0, MiaRule.MISSING_LEFT)
    with pytest.raises(InvalidInputError):
        MiaSplit(0, MiaRule.MISSING_APART, 0.5)


def test_breiman_weighted_mean():
    features = np.array([[np.nan], [0.2], [0.4]])
    mask = np.array([[True], [False], [False]])
    medians = np.array([0.3])

    weights = np.array([[1.0, 0.5, 0.5], [0.5, 1.0, 0.0], [0.5, 0.0, 1.0]])
    out, fallback = breiman_update(features, mask, weights, medians)
    assert out[0, 0] == pytest.approx(0.3)
    assert not fallback.any()

    weights = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    out, _ = breiman_update(features, mask, weights, medians)
    assert out[0, 0] == pytest.approx(0.2)


def test_breiman_zero_weights_fall_back_to_median():
    features = np.array([[np.nan], [0.2], [0.4]])
    mask = np.array([[True], [False], [False]])

    out, fallback = breiman_update(features, mask, np.eye(3), np.array([0.3]))

    assert out[0, 0] == 0.3
    assert fallback[0, 0]


def neighbours() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    features = np.array([[0.0], [0.5], [1.0], [0.3]])
    mask = np.array([[True], [False], [False], [False]])
    weights = np.array(
        [
            [1.0, 0.6, 0.4, 0.1],
            [0.6, 1.0, 0.0, 0.0],
            [0.4, 0.0, 1.0, 0.0],
            [0.1, 0.0, 0.0, 1.0],
        ]
    )
    return features, mask, weights


def test_ishioka_top_k():
    features, mask, weights = neighbours()
    medians = np.array([0.5])

    out, _ = ishioka_update(1)(features, mask, weights, medians)
    assert out[0, 0] == 0.5

    out, _ = ishioka_update(2)(features, mask, weights, medians)
    assert out[0, 0] == pytest.approx(0.7)


def test_ishioka_uniform_weights_give_plain_mean():
    features, mask, _ = neighbours()
    out, _ = ishioka_update(10)(features, mask, np.full((4, 4), 0.5), np.array([0.5]))

    assert out[0, 0] == pytest.approx(np.mean([0.5, 1.0, 0.3]))


def test_ishioka_rejects_non_positive_k(corrupted, small_forest):
    with pytest.raises(InvalidInputError):
        impute_ishioka(corrupted, small_forest, k=0)


@pytest.mark.parametrize("impute", [impute_breiman, impute_ishioka])
def test_proximity_imputers(impute, corrupted, small_forest):
    state = impute(corrupted, small_forest, max_iters=3)
    filled = state.dataset

    assert not filled.has_missing
    assert 1 <= state.iteration <= 3
    assert len(state.changes) == state.iteration
    np.testing.assert_array_equal(state.imputed, corrupted.mask)

    observed = ~corrupted.mask
    np.testing.assert_array_equal(filled.features[observed], corrupted.features[observed])

    for h in range(corrupted.p):
        values = corrupted.features[observed[:, h], h]
        imputed = filled.features[corrupted.mask[:, h], h]
        assert np.all((values.min() <= imputed) & (imputed <= values.max()))


@pytest.mark.parametrize("impute", [impute_breiman, impute_ishioka, impute_missforest])
def test_imputers_without_missing_are_identity(impute, small_forest):
    data = generate_sample(40, seed=2)
    state = impute(data, small_forest)

    assert state.dataset.equals(data)


def test_imputers_are_deterministic(corrupted, small_forest):
    a = impute_breiman(corrupted, small_forest, max_iters=2)
    b = impute_breiman(corrupted, small_forest, max_iters=2)

    np.testing.assert_array_equal(a.dataset.features, b.dataset.features)


def test_iterate_until_divergence_returns_previous_iterate():
    steps = iter([1.0, 2.0, 0.5])

    result, iteration, changes = iterate_until_divergence(
        np.zeros(1), lambda x, t: x + next(steps), max_iters=3
    )

    np.testing.assert_array_equal(result, [1.0])
    assert iteration == 1
    assert changes == (1.0, 4.0)


def test_iterate_until_divergence_stops_at_max_iters():
    result, iteration, changes = iterate_until_divergence(np.zeros(1), lambda x, t: x / 2 + 1, max_iters=4)

    assert iteration == 4
    assert len(changes) == 4
    assert result[0] == pytest.approx(1.875)


def test_missforest_recovers_duplicated_column():
    x = np.linspace(0, 1, 41)
    features = np.column_stack((x, x))
    mask = np.zeros_like(features, dtype=bool)
    mask[20, 1] = True
    data = Dataset(features=features, mask=mask, response=10 * x)

    params = ForestParams(n_trees=10, subsample_frac=1.0, tree=TreeParams(mtry=2, nodesize=1, q_n=1))
    state = impute_missforest(data, params, max_iters=3)

    assert state.dataset.features[20, 1] == pytest.approx(0.5, abs=0.05)
    np.testing.assert_array_equal(state.dataset.features[~mask], features[~mask])


def test_missforest_keeps_observed_cells(corrupted, small_forest):
    state = impute_missforest(corrupted, small_forest, max_iters=2)

    observed = ~corrupted.mask
    np.testing.assert_array_equal(state.dataset.features[observed], corrupted.features[observed])
    assert np.all((state.dataset.features >= 0) & (state.dataset.features <= 1))
    assert state.iteration <= 2


def test_missforest_needs_observed_values(small_forest):
    data = column([None, None, None])
    with pytest.raises(ConfigError):
        impute_missforest(data, small_forest)


def test_inner_params_fit_small_row_counts():
    params = ForestParams(n_trees=4, tree=TreeParams(mtry=2, nodesize=5), seed=1)
    inner = inner_params(params, n_rows=6, seed=9)

    assert inner.subsample_size == 4
    assert inner.tree.nodesize == 4
    assert inner.tree.min_leaf == 2
    assert inner.seed == 9
    assert inner.n_trees == 4
