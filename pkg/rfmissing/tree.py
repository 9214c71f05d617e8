import enum
from collections import deque
from collections.abc import Callable, Iterable
from typing import Any, Self

import numpy as np
from attrs import define, field, frozen
from loguru import logger as LOGGER

from configuration.types import ConfigError, TreeParams

from .data import Dataset
from .errors import InvalidInputError
from .split import Cell, Cut, MiaRule, MiaSplit, SplitDecision, best_split

type Splitter = Callable[[Cell, Dataset, Iterable[int], int], SplitDecision | None]


class PredictionMode(enum.StrEnum):
    FRACTIONAL = "fractional"
    STOCHASTIC = "stochastic"


@frozen
class Leaf:
    node_id: int
    estimate: float
    count: int


@frozen
class Internal:
    node_id: int
    cut: Cut | MiaSplit
    # None when no training member was missing in the cut direction
    p_left: float | None
    estimate: float
    count: int
    left: "Leaf | Internal"
    right: "Leaf | Internal"


type TreeNode = Leaf | Internal


@frozen(eq=False)
class Tree:
    root: TreeNode
    n_features: int
    # final interval imputations of the subsample members, (a_n, p) each
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)
    # terminal node of each subsample member
    member_leaves: np.ndarray = field(repr=False)

    def nodes(self) -> list[TreeNode]:
        out: list[TreeNode] = []
        queue: deque[TreeNode] = deque([self.root])
        while queue:
            node = queue.popleft()
            out.append(node)
            if isinstance(node, Internal):
                queue.extend((node.left, node.right))
        return out

    def leaves(self) -> list[Leaf]:
        return [n for n in self.nodes() if isinstance(n, Leaf)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_features": self.n_features,
            "root": node_to_dict(self.root),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "member_leaves": self.member_leaves.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Self:
        n_features = int(d["n_features"])
        return cls(
            root=node_from_dict(d["root"]),
            n_features=n_features,
            lower=np.array(d["lower"], dtype=float).reshape(-1, n_features),
            upper=np.array(d["upper"], dtype=float).reshape(-1, n_features),
            member_leaves=np.array(d["member_leaves"], dtype=int),
        )


def node_to_dict(node: TreeNode) -> dict[str, Any]:
    match node:
        case Leaf():
            return {
                "kind": "leaf",
                "id": node.node_id,
                "estimate": node.estimate,
                "count": node.count,
            }
        case Internal(cut=MiaSplit() as split):
            return {
                "kind": "mia",
                "id": node.node_id,
                "direction": split.direction,
                "rule": split.rule.value,
                "threshold": split.threshold,
                "estimate": node.estimate,
                "count": node.count,
                "left": node_to_dict(node.left),
                "right": node_to_dict(node.right),
            }
        case Internal(cut=Cut() as cut):
            return {
                "kind": "internal",
                "id": node.node_id,
                "direction": cut.direction,
                "threshold": cut.threshold,
                "p_left": node.p_left,
                "estimate": node.estimate,
                "count": node.count,
                "left": node_to_dict(node.left),
                "right": node_to_dict(node.right),
            }
    raise AssertionError(f"unexpected node {node!r}")


def node_from_dict(d: dict[str, Any]) -> TreeNode:
    match d["kind"]:
        case "leaf":
            return Leaf(node_id=int(d["id"]), estimate=float(d["estimate"]), count=int(d["count"]))
        case "mia":
            threshold = d["threshold"]
            cut = MiaSplit(
                direction=int(d["direction"]),
                rule=MiaRule(d["rule"]),
                threshold=None if threshold is None else float(threshold),
            )
            p_left = None
        case "internal":
            cut = Cut(direction=int(d["direction"]), threshold=float(d["threshold"]))
            p_left = None if d["p_left"] is None else float(d["p_left"])
        case x:
            raise InvalidInputError(f"unknown node kind {x!r}")

    return Internal(
        node_id=int(d["id"]),
        cut=cut,
        p_left=p_left,
        estimate=float(d["estimate"]),
        count=int(d["count"]),
        left=node_from_dict(d["left"]),
        right=node_from_dict(d["right"]),
    )


@define
class _Pending:
    node_id: int
    members: np.ndarray
    estimate: float
    decision: SplitDecision | None = None
    left: int | None = None
    right: int | None = None


def _child_bounds(bounds: np.ndarray, cut: Cut | MiaSplit) -> tuple[np.ndarray, np.ndarray]:
    left, right = bounds.copy(), bounds.copy()

    if cut.threshold is None:
        # missing-vs-observed keeps the parent's extent
        return left, right

    h = cut.direction
    left[h, 1] = cut.threshold
    right[h, 0] = cut.threshold
    return left, right


def _narrow(
    lower: np.ndarray,
    upper: np.ndarray,
    mask: np.ndarray,
    bounds: np.ndarray,
    decision: SplitDecision,
) -> None:
    if decision.assignation is None:
        return

    h, z = decision.cut.direction, decision.cut.threshold
    a, b = bounds[h]

    left = decision.left_members[mask[decision.left_members, h]]
    lower[left, h], upper[left, h] = a, z

    right = decision.right_members[mask[decision.right_members, h]]
    lower[right, h], upper[right, h] = z, b


def _assemble(pending: list[_Pending], node_id: int) -> TreeNode:
    node = pending[node_id]

    if node.decision is None:
        return Leaf(node_id=node_id, estimate=node.estimate, count=len(node.members))

    assert node.left is not None and node.right is not None
    return Internal(
        node_id=node_id,
        cut=node.decision.cut,
        p_left=node.decision.p_left,
        estimate=node.estimate,
        count=len(node.members),
        left=_assemble(pending, node.left),
        right=_assemble(pending, node.right),
    )


def grow_tree(
    subsample: Dataset,
    params: TreeParams,
    rng: np.random.Generator,
    splitter: Splitter = best_split,
) -> Tree:
    n, p = subsample.n, subsample.p
    q_n = params.min_leaf

    if n == 0 or n < q_n:
        raise ConfigError(f"subsample smaller than the minimum leaf size ({n=}, {q_n=})")

    mtry = params.resolve_mtry(p)

    root = Cell.root(subsample)
    lower, upper = root.lower.copy(), root.upper.copy()
    member_leaves = np.full(n, -1)

    pending: list[_Pending] = []
    # breadth first, children enter the queue left then right
    queue: deque[tuple[np.ndarray, np.ndarray, _Pending | None, bool]] = deque(
        [(root.bounds, root.members, None, True)]
    )

    while queue:
        bounds, members, parent, is_left = queue.popleft()

        node = _Pending(
            node_id=len(pending),
            members=members,
            estimate=float(np.mean(subsample.response[members])),
        )
        pending.append(node)

        if parent is not None:
            if is_left:
                parent.left = node.node_id
            else:
                parent.right = node.node_id

        if len(members) <= params.nodesize:
            member_leaves[members] = node.node_id
            continue

        directions = rng.choice(p, size=mtry, replace=False)
        cell = Cell(
            bounds=bounds,
            members=members,
            lower=lower[members],
            upper=upper[members],
        )

        decision = splitter(cell, subsample, directions, q_n)
        if decision is None:
            LOGGER.debug(f"forced leaf with {len(members)} members, no split keeps {q_n=}")
            member_leaves[members] = node.node_id
            continue

        node.decision = decision
        _narrow(lower, upper, subsample.mask, bounds, decision)

        left_bounds, right_bounds = _child_bounds(bounds, decision.cut)
        queue.append((left_bounds, decision.left_members, node, True))
        queue.append((right_bounds, decision.right_members, node, False))

    return Tree(
        root=_assemble(pending, 0),
        n_features=p,
        lower=lower,
        upper=upper,
        member_leaves=member_leaves,
    )


def _query(n_features: int, x, missing) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)

    if x.shape[-1:] != (n_features,):
        raise InvalidInputError(f"query has {x.shape[-1:]} coordinates, tree expects {n_features}")

    missing = np.isnan(x) if missing is None else np.asarray(missing, dtype=bool)
    if missing.shape != x.shape:
        raise InvalidInputError(f"missing indicator differs in shape ({missing.shape=}, {x.shape=})")

    observed = x[~missing]
    if not np.all((observed >= 0) & (observed <= 1)):
        raise InvalidInputError("observed query coordinates must lie in [0, 1]")

    return x, missing


def _descend(
    node: TreeNode,
    x: np.ndarray,
    missing: np.ndarray,
    mode: PredictionMode,
    rng: np.random.Generator | None,
) -> float:
    match node:
        case Leaf():
            return node.estimate

        case Internal(cut=MiaSplit() as split):
            h = split.direction
            child = node.left if split.goes_left(x[h], missing[h]) else node.right
            return _descend(child, x, missing, mode, rng)

        case Internal(cut=Cut(direction=h, threshold=z)):
            if not missing[h]:
                child = node.left if x[h] <= z else node.right
                return _descend(child, x, missing, mode, rng)

            if node.p_left is None:
                # direction never missing in training, the cell estimate stands in
                return node.estimate

            if mode == PredictionMode.STOCHASTIC:
                assert rng is not None
                child = node.left if rng.random() < node.p_left else node.right
                return _descend(child, x, missing, mode, rng)

            return node.p_left * _descend(node.left, x, missing, mode, rng) + (
                1 - node.p_left
            ) * _descend(node.right, x, missing, mode, rng)

    raise AssertionError(f"unexpected node {node!r}")


def _check_mode(mode: PredictionMode | str, rng: np.random.Generator | None) -> PredictionMode:
    mode = PredictionMode(mode)
    if mode == PredictionMode.STOCHASTIC and rng is None:
        raise InvalidInputError("stochastic prediction needs a random generator")
    return mode


def predict_tree(
    tree: Tree,
    x,
    missing=None,
    mode: PredictionMode | str = PredictionMode.FRACTIONAL,
    rng: np.random.Generator | None = None,
) -> float:
    mode = _check_mode(mode, rng)
    x, missing = _query(tree.n_features, x, missing)

    if x.ndim != 1:
        raise InvalidInputError(f"predict_tree takes a single query ({x.shape=})")

    return _descend(tree.root, x, missing, mode, rng)


def _accumulate(
    node: TreeNode,
    features: np.ndarray,
    mask: np.ndarray,
    rows: np.ndarray,
    weights: np.ndarray,
    out: np.ndarray,
) -> None:
    if rows.size == 0:
        return

    match node:
        case Leaf():
            out[rows] += weights * node.estimate
            return

        case Internal(cut=MiaSplit() as split):
            h = split.direction
            left = split.routes_left(features[rows, h], mask[rows, h])
            _accumulate(node.left, features, mask, rows[left], weights[left], out)
            _accumulate(node.right, features, mask, rows[~left], weights[~left], out)
            return

        case Internal(cut=Cut(direction=h, threshold=z)):
            missing = mask[rows, h]
            below = ~missing & (features[rows, h] <= z)
            above = ~missing & ~below

            if node.p_left is None:
                out[rows[missing]] += weights[missing] * node.estimate
                _accumulate(node.left, features, mask, rows[below], weights[below], out)
                _accumulate(node.right, features, mask, rows[above], weights[above], out)
                return

            p = node.p_left
            _accumulate(
                node.left,
                features,
                mask,
                np.concatenate((rows[below], rows[missing])),
                np.concatenate((weights[below], p * weights[missing])),
                out,
            )
            _accumulate(
                node.right,
                features,
                mask,
                np.concatenate((rows[above], rows[missing])),
                np.concatenate((weights[above], (1 - p) * weights[missing])),
                out,
            )


def predict_rows(
    tree: Tree,
    features,
    mask=None,
    mode: PredictionMode | str = PredictionMode.FRACTIONAL,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    mode = _check_mode(mode, rng)
    features, mask = _query(tree.n_features, np.atleast_2d(features), None if mask is None else np.atleast_2d(mask))

    if mode == PredictionMode.STOCHASTIC:
        return np.array([_descend(tree.root, x, m, mode, rng) for x, m in zip(features, mask, strict=True)])

    n = features.shape[0]
    out = np.zeros(n)
    _accumulate(tree.root, features, mask, np.arange(n), np.ones(n), out)
    return out


def _apply(node: TreeNode, features: np.ndarray, mask: np.ndarray, rows: np.ndarray, out: np.ndarray) -> None:
    if rows.size == 0:
        return

    match node:
        case Leaf():
            out[rows] = node.node_id
            return

        case Internal(cut=MiaSplit() as split):
            h = split.direction
            left = split.routes_left(features[rows, h], mask[rows, h])

        case Internal(cut=Cut(direction=h, threshold=z)):
            missing = mask[rows, h]
            left = ~missing & (features[rows, h] <= z)

            if node.p_left is None:
                out[rows[missing]] = node.node_id
                rows, left = rows[~missing], left[~missing]
            elif node.p_left >= 0.5:
                left |= missing

        case _:
            raise AssertionError(f"unexpected node {node!r}")

    _apply(node.left, features, mask, rows[left], out)
    _apply(node.right, features, mask, rows[~left], out)


def apply_tree(tree: Tree, features, mask=None) -> np.ndarray:
    # missing coordinates follow the likelier child
    features, mask = _query(tree.n_features, np.atleast_2d(features), None if mask is None else np.atleast_2d(mask))

    n = features.shape[0]
    out = np.full(n, -1)
    _apply(tree.root, features, mask, np.arange(n), out)
    return out
