# candidate assignations are prefixes of the missing members sorted by response;
# scores use responses centered at the cell mean, S_L^2 / (N_L * N_R)

import enum
from collections.abc import Iterable
from typing import Self

import numpy as np
from attrs import field, frozen

from .data import Dataset
from .errors import ConsistencyError, InvalidInputError

# scores closer than this (relative) are ties
TIE_TOLERANCE = 1e-12


def tie_tolerance(score: float) -> float:
    return TIE_TOLERANCE * max(1.0, abs(score))


@frozen(eq=False)
class Cell:
    # (p, 2) array of [a^(h), b^(h)]
    bounds: np.ndarray
    # sorted row indices into the tree's subsample
    members: np.ndarray
    # current interval imputations of the members, (len(members), p) each;
    # observed coordinates have lower == upper == value
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def root(cls, data: Dataset) -> Self:
        bounds = np.tile(np.array([0.0, 1.0]), (data.p, 1))
        return cls(
            bounds=bounds,
            members=np.arange(data.n),
            lower=np.where(data.mask, 0.0, data.features),
            upper=np.where(data.mask, 1.0, data.features),
        )

    @property
    def count(self) -> int:
        return len(self.members)


@frozen
class Cut:
    direction: int
    threshold: float

    def check_inside(self, bounds: np.ndarray) -> None:
        a, b = bounds[self.direction]
        if not a < self.threshold < b:
            raise InvalidInputError(f"threshold must lie strictly inside ({a}, {b}) ({self=})")


@frozen
class Assignation:
    # k smallest-response missing members go left when smallest_left,
    # right otherwise; the rest go to the other child
    smallest_left: bool
    k: int

    def n_left(self, n_missing: int) -> int:
        return self.k if self.smallest_left else n_missing - self.k

    def expand(self, missing_responses) -> np.ndarray:
        # True sends the member left
        y = np.asarray(missing_responses, dtype=float)
        if not 0 <= self.k <= len(y):
            raise InvalidInputError(f"prefix longer than the missing members ({self.k=}, {len(y)=})")

        # ties keep member order
        designated = np.argsort(y, kind="stable")[: self.k]

        w = np.full(len(y), not self.smallest_left)
        w[designated] = self.smallest_left
        return w


class MiaRule(enum.StrEnum):
    MISSING_LEFT = "lt_z_with_missing_left"
    MISSING_RIGHT = "lt_z_with_missing_right"
    MISSING_APART = "missing_vs_observed"


@frozen
class MiaSplit:
    direction: int
    rule: MiaRule
    threshold: float | None = None

    def __attrs_post_init__(self):
        if (self.rule == MiaRule.MISSING_APART) != (self.threshold is None):
            raise InvalidInputError(f"only the missing-vs-observed rule has no threshold ({self=})")

    def goes_left(self, value: float, missing: bool) -> bool:
        match self.rule:
            case MiaRule.MISSING_APART:
                return not missing
            case MiaRule.MISSING_LEFT:
                return missing or value <= self.threshold  # type: ignore
            case MiaRule.MISSING_RIGHT:
                return not missing and value <= self.threshold  # type: ignore

    def routes_left(self, values: np.ndarray, missing: np.ndarray) -> np.ndarray:
        if self.rule == MiaRule.MISSING_APART:
            return ~missing

        # nan compares false, missing rows are decided by the rule alone
        below = ~missing & (values <= self.threshold)
        if self.rule == MiaRule.MISSING_LEFT:
            return below | missing
        return below


@frozen(eq=False)
class SplitDecision:
    cut: Cut | MiaSplit
    # None for MIA splits, which route missing values by rule
    assignation: Assignation | None
    # None marks a cut direction without missing members in the cell
    p_left: float | None
    score: float
    left_members: np.ndarray = field(repr=False)
    right_members: np.ndarray = field(repr=False)

    @property
    def p_right(self) -> float | None:
        return None if self.p_left is None else 1.0 - self.p_left

    @property
    def child_counts(self) -> tuple[int, int]:
        return len(self.left_members), len(self.right_members)


def _sse(y: np.ndarray) -> float:
    if y.size == 0:
        return 0.0
    return float(np.sum((y - y.mean()) ** 2))


def _check_partition(responses, left_membership) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(responses, dtype=float)
    left = np.asarray(left_membership, dtype=bool)

    if y.size == 0:
        raise InvalidInputError("criterion of an empty cell")

    if y.shape != left.shape:
        raise InvalidInputError(f"responses and membership differ in length ({y.shape=}, {left.shape=})")

    return y, left


def cart_complete(responses, left_membership) -> float:
    y, left = _check_partition(responses, left_membership)

    n = y.size
    n_left = int(left.sum())
    n_right = n - n_left
    if n_left == 0 or n_right == 0:
        return 0.0

    diff = y[left].mean() - y[~left].mean()
    return float(n_left * n_right / n**2 * diff**2)


def cart_complete_sse(responses, left_membership) -> float:
    y, left = _check_partition(responses, left_membership)

    score = (_sse(y) - _sse(y[left]) - _sse(y[~left])) / y.size
    return max(0.0, score)


def _missing_order(data: Dataset, members: np.ndarray, direction: int) -> tuple[np.ndarray, np.ndarray]:
    miss = data.mask[members, direction]
    return members[~miss], members[miss]


def route_members(cell: Cell, cut: Cut, assignation: Assignation, data: Dataset) -> np.ndarray:
    h, z = cut.direction, cut.threshold
    a, b = cell.bounds[h]

    miss = data.mask[cell.members, h]
    values = data.features[cell.members[~miss], h]

    if np.any((values < a) | (values > b)):
        raise ConsistencyError(f"member outside the cell in direction {h} ([{a}, {b}])")

    left = np.zeros(cell.count, dtype=bool)
    left[~miss] = values <= z
    left[miss] = assignation.expand(data.response[cell.members[miss]])
    return left


def cart_with_assignation(cell: Cell, cut: Cut, assignation: Assignation, data: Dataset) -> float:
    cut.check_inside(cell.bounds)
    left = route_members(cell, cut, assignation, data)
    return cart_complete_sse(data.response[cell.members], left)


def admissible_assignations(missing_responses) -> list[Assignation]:
    n = len(missing_responses)

    candidates = [Assignation(True, k) for k in range(n + 1)]
    # all-left and all-right already appear above
    candidates += [Assignation(False, k) for k in range(1, n)]

    # fewest members sent left first, smallest-left orientation before the other
    return sorted(candidates, key=lambda w: (w.n_left(n), not w.smallest_left))


def candidate_thresholds(
    values: np.ndarray, low: float, high: float, edges: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    # midpoints between distinct values, plus one-sided edge thresholds when `edges` and the bounds allow
    if values.size == 0:
        if not edges:
            return np.empty(0), np.empty(0, dtype=int)
        return np.array([(low + high) / 2]), np.array([0])

    distinct, counts = np.unique(values, return_counts=True)
    below = np.cumsum(counts)

    thresholds = [(distinct[:-1] + distinct[1:]) / 2]
    n_below = [below[:-1]]

    if edges and distinct[0] > low:
        thresholds.insert(0, np.array([(low + distinct[0]) / 2]))
        n_below.insert(0, np.array([0]))

    if edges and distinct[-1] < high:
        thresholds.append(np.array([(distinct[-1] + high) / 2]))
        n_below.append(np.array([below[-1]]))

    return np.concatenate(thresholds), np.concatenate(n_below).astype(int)


def _prefix_sums(values: np.ndarray) -> np.ndarray:
    return np.concatenate(([0.0], np.cumsum(values)))


def score_grid(left_counts: np.ndarray, left_sums: np.ndarray, n: int, q_n: int) -> np.ndarray:
    # -inf where a child would hold fewer than q_n
    right_counts = n - left_counts
    valid = (left_counts >= q_n) & (right_counts >= q_n)

    denominator = np.where(valid, left_counts * right_counts, 1)
    return np.where(valid, left_sums**2 / denominator, -np.inf)


def first_best(scores: np.ndarray) -> tuple[int, float] | None:
    best = float(scores.max(initial=-np.inf))
    if best == -np.inf:
        return None

    near = scores.ravel() >= best - tie_tolerance(best)
    return int(np.argmax(near)), best


def best_split(cell: Cell, data: Dataset, candidate_directions: Iterable[int], q_n: int) -> SplitDecision | None:
    members = cell.members
    n = cell.count
    if n < 2 * q_n:
        return None

    y = data.response[members]
    centered = data.response - y.mean()

    best: tuple[float, Cut, Assignation] | None = None

    for h in sorted(int(d) for d in candidate_directions):
        observed, missing = _missing_order(data, members, h)

        x = data.features[observed, h]
        order = np.argsort(x, kind="stable")
        thresholds, n_below = candidate_thresholds(x, *cell.bounds[h])
        if thresholds.size == 0:
            continue
        observed_sums = _prefix_sums(centered[observed][order])[n_below]

        y_missing = centered[missing]
        n_missing = len(missing)
        prefix = _prefix_sums(np.sort(y_missing, kind="stable"))

        candidates = admissible_assignations(y_missing)
        candidate_counts = np.array([w.n_left(n_missing) for w in candidates])
        candidate_sums = np.array(
            [prefix[w.k] if w.smallest_left else prefix[-1] - prefix[w.k] for w in candidates]
        )

        scores = score_grid(
            n_below[:, None] + candidate_counts[None, :],
            observed_sums[:, None] + candidate_sums[None, :],
            n,
            q_n,
        )

        found = first_best(scores)
        if found is None:
            continue

        index, score = found
        if best is None or score > best[0] + tie_tolerance(best[0]):
            t, c = divmod(index, len(candidates))
            best = (score, Cut(h, float(thresholds[t])), candidates[c])

    if best is None:
        return None

    _, cut, assignation = best
    left = route_members(cell, cut, assignation, data)

    n_missing = int(data.mask[members, cut.direction].sum())
    p_left = assignation.n_left(n_missing) / n_missing if n_missing else None

    return SplitDecision(
        cut=cut,
        assignation=assignation,
        p_left=p_left,
        score=cart_complete_sse(y, left),
        left_members=members[left],
        right_members=members[~left],
    )
