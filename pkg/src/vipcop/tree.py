"""Gini-impurity classification tree used for context routing and
feature selection.

Split search scans midpoints of sorted distinct values. The deterministic
variant always takes the best-gain split; the randomized variant ranks
features by their best gain and picks uniformly among the top few, which
yields diverse trees for validation-based selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TreeNode:
    depth: int
    indices: np.ndarray  # original row positions reaching this node
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    frac = counts / total
    return float(1.0 - (frac * frac).sum())


def _best_split_for_feature(
    column: np.ndarray, y: np.ndarray, n_classes: int, min_leaf: int
) -> tuple[float, float] | None:
    """Best (gain, threshold) for one feature, or None if no valid split."""
    order = np.argsort(column, kind="stable")
    sorted_x = column[order]
    sorted_y = y[order]
    n = y.size

    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), sorted_y] = 1.0
    left_counts = np.cumsum(onehot, axis=0)  # counts up to and including i
    total_counts = left_counts[-1]
    parent_gini = _gini(total_counts)

    # candidate cut after position i requires a value change at i -> i+1
    cuts = np.flatnonzero(sorted_x[:-1] < sorted_x[1:])
    if cuts.size == 0:
        return None
    left_n = cuts + 1
    right_n = n - left_n
    valid = (left_n >= min_leaf) & (right_n >= min_leaf)
    cuts = cuts[valid]
    if cuts.size == 0:
        return None
    left_n = cuts + 1
    right_n = n - left_n

    lc = left_counts[cuts]
    rc = total_counts[None, :] - lc
    gini_left = 1.0 - ((lc / left_n[:, None]) ** 2).sum(axis=1)
    gini_right = 1.0 - ((rc / right_n[:, None]) ** 2).sum(axis=1)
    weighted = (left_n * gini_left + right_n * gini_right) / n
    gains = parent_gini - weighted

    best = int(np.argmax(gains))  # first max wins: lowest threshold on ties
    if gains[best] <= 1e-12:
        return None
    threshold = float((sorted_x[cuts[best]] + sorted_x[cuts[best] + 1]) / 2.0)
    return float(gains[best]), threshold


def _choose_split(
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    min_leaf: int,
    rng: np.random.Generator | None,
    top_k_features: int,
) -> tuple[int, float] | None:
    candidates = []
    for j in range(x.shape[1]):
        found = _best_split_for_feature(x[:, j], y, n_classes, min_leaf)
        if found is not None:
            gain, threshold = found
            candidates.append((gain, j, threshold))
    if not candidates:
        return None
    candidates.sort(key=lambda c: (-c[0], c[1]))
    if rng is None:
        _, feature, threshold = candidates[0]
    else:
        pick = candidates[int(rng.integers(0, min(top_k_features, len(candidates))))]
        _, feature, threshold = pick
    return feature, threshold


def fit_tree(
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    min_leaf: int = 1,
    max_depth: int | None = None,
    rng: np.random.Generator | None = None,
    top_k_features: int = 3,
) -> TreeNode:
    """Grow a tree; pass ``rng`` to enable randomized top-k feature choice."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)

    def grow(indices: np.ndarray, depth: int) -> TreeNode:
        node = TreeNode(depth=depth, indices=indices)
        if max_depth is not None and depth >= max_depth:
            return node
        if indices.size < 2 * min_leaf or np.unique(y[indices]).size < 2:
            return node
        chosen = _choose_split(
            x[indices], y[indices], n_classes, min_leaf, rng, top_k_features
        )
        if chosen is None:
            return node
        feature, threshold = chosen
        mask = x[indices, feature] <= threshold
        node.feature = feature
        node.threshold = threshold
        node.left = grow(indices[mask], depth + 1)
        node.right = grow(indices[~mask], depth + 1)
        return node

    return grow(np.arange(x.shape[0]), 0)


def leaves(root: TreeNode) -> list[TreeNode]:
    out: list[TreeNode] = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            out.append(node)
        else:
            stack.extend([node.right, node.left])
    return out


def route(root: TreeNode, x: np.ndarray) -> list[tuple[TreeNode, np.ndarray]]:
    """Partition query rows across leaves; every row lands in exactly one."""
    x = np.asarray(x, dtype=np.float64)
    assignments: list[tuple[TreeNode, np.ndarray]] = []

    def descend(node: TreeNode, rows: np.ndarray) -> None:
        if rows.size == 0:
            return
        if node.is_leaf:
            assignments.append((node, rows))
            return
        mask = x[rows, node.feature] <= node.threshold
        descend(node.left, rows[mask])
        descend(node.right, rows[~mask])

    descend(root, np.arange(x.shape[0]))
    return assignments


def collect_split_features(root: TreeNode, limit: int) -> list[int]:
    """Unique split features gathered level by level from the root."""
    out: list[int] = []
    seen: set[int] = set()
    level = [root]
    while level and len(out) < limit:
        next_level: list[TreeNode] = []
        for node in level:
            if node.is_leaf:
                continue
            if node.feature not in seen and len(out) < limit:
                seen.add(node.feature)
                out.append(node.feature)
            next_level.extend([node.left, node.right])
        level = next_level
    return out
