# plain CART forest for complete data, drawing from the per-tree generators in the same
# order as the engine (subsample, then one direction draw per non-final node, breadth first)

from collections import deque

import numpy as np

from configuration.types import ForestParams, TreeParams
from rfmissing.forest import tree_rng

TOLERANCE = 1e-12


def _sse(y: np.ndarray) -> float:
    if y.size == 0:
        return 0.0
    return float(np.sum((y - y.mean()) ** 2))


def _best_cut(x: np.ndarray, y: np.ndarray, directions, q_n: int) -> tuple[int, float] | None:
    n = len(y)
    if n < 2 * q_n:
        return None

    total = _sse(y)
    best: tuple[float, int, float] | None = None

    for h in sorted(int(d) for d in directions):
        distinct = np.unique(x[:, h])

        scored = []
        for low, high in zip(distinct[:-1], distinct[1:], strict=True):
            z = (low + high) / 2
            left = x[:, h] <= z
            n_left = int(left.sum())
            if n_left < q_n or n - n_left < q_n:
                continue
            scored.append(((total - _sse(y[left]) - _sse(y[~left])) / n, z))

        if not scored:
            continue

        top = max(s for s, _ in scored)
        z = next(z for s, z in scored if s >= top - TOLERANCE * max(1.0, abs(top)))

        if best is None or top > best[0] + TOLERANCE * max(1.0, abs(best[0])):
            best = (top, h, z)

    if best is None:
        return None
    return best[1], best[2]


def grow(x: np.ndarray, y: np.ndarray, params: TreeParams, mtry: int, rng: np.random.Generator) -> dict:
    root: dict = {}
    queue = deque([(np.arange(len(y)), root)])

    while queue:
        members, node = queue.popleft()
        node["estimate"] = float(np.mean(y[members]))

        if len(members) <= params.nodesize:
            continue

        directions = rng.choice(x.shape[1], size=mtry, replace=False)
        cut = _best_cut(x[members], y[members], directions, params.min_leaf)
        if cut is None:
            continue

        h, z = cut
        left = x[members, h] <= z
        node["cut"] = (h, z)
        node["left"], node["right"] = {}, {}
        queue.append((members[left], node["left"]))
        queue.append((members[~left], node["right"]))

    return root


def predict(node: dict, row: np.ndarray) -> float:
    while "cut" in node:
        h, z = node["cut"]
        node = node["left"] if row[h] <= z else node["right"]
    return node["estimate"]


def forest_predict(features: np.ndarray, response: np.ndarray, params: ForestParams, queries: np.ndarray) -> np.ndarray:
    n, p = features.shape
    a_n = params.resolve_subsample(n)
    mtry = params.tree.resolve_mtry(p)

    per_tree = []
    for k in range(params.n_trees):
        rng = tree_rng(params.seed, k)
        rows = np.sort(rng.choice(n, size=a_n, replace=False))
        root = grow(features[rows], response[rows], params.tree, mtry, rng)
        per_tree.append(np.array([predict(root, q) for q in queries]))

    return np.stack(per_tree).mean(axis=0)
