"""Generic decision-tree induction over binary concept features.

Split quality is Gini impurity decrease. Gains are compared in exact rational
arithmetic so that tie-breaking (lowest concept id) is platform-stable and
matches a brute-force re-derivation bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


def gini_from_counts(counts: np.ndarray) -> float:
    total = int(counts.sum())
    if total == 0:
        return 0.0
    p = counts.astype(np.float64) / total
    return float(1.0 - np.sum(p * p))


def _gini_frac(counts: np.ndarray) -> Fraction:
    total = int(counts.sum())
    if total == 0:
        return Fraction(0)
    sq = int(np.sum(counts.astype(object) ** 2))
    return Fraction(total * total - sq, total * total)


@dataclass
class TreeNode:
    """One node; internal nodes split on a concept and hold both children."""

    counts: np.ndarray                       # class histogram at this node
    gini: float
    concept: int | None = None               # split concept id, None at leaves
    children: tuple["TreeNode", "TreeNode"] | None = None  # (value 0, value 1)

    @property
    def is_leaf(self) -> bool:
        return self.concept is None

    def majority_class(self) -> int:
        return int(np.argmax(self.counts))

    def leaf_for(self, row: np.ndarray) -> "TreeNode":
        node = self
        while not node.is_leaf:
            node = node.children[int(row[node.concept])]
        return node

    def path_for(self, row: np.ndarray) -> list[int]:
        """Split concepts along the root-to-leaf route taken by ``row``."""
        path = []
        node = self
        while not node.is_leaf:
            path.append(node.concept)
            node = node.children[int(row[node.concept])]
        return path


def induce_tree(features: np.ndarray, targets: np.ndarray,
                candidate_ids: list[int] | tuple[int, ...],
                n_targets: int | None = None) -> TreeNode:
    """Grow a tree over binary ``features`` columns named by ``candidate_ids``.

    Recursion stops at zero impurity, an exhausted candidate set, or when no
    split has strictly positive gain; a consumed concept leaves the candidate
    set along its whole subtree.
    """
    features = np.asarray(features)
    targets = np.asarray(targets, dtype=np.int64)
    if features.ndim != 2 or len(targets) != features.shape[0]:
        raise ValueError("features and targets disagree on instance count")
    if len(targets) == 0:
        raise ValueError("cannot induce a tree over zero instances")
    if n_targets is None:
        n_targets = int(targets.max()) + 1
    return _grow(features, targets, np.arange(len(targets)),
                 list(candidate_ids), n_targets)


def _grow(features: np.ndarray, targets: np.ndarray, rows: np.ndarray,
          candidates: list[int], n_targets: int) -> TreeNode:
    counts = np.bincount(targets[rows], minlength=n_targets)
    node = TreeNode(counts=counts, gini=gini_from_counts(counts))
    if int((counts > 0).sum()) <= 1 or not candidates:
        return node

    parent = _gini_frac(counts)
    total = len(rows)
    sub = features[np.ix_(rows, candidates)]
    # per-candidate class histograms of the value-1 side, exact integers
    ones = np.zeros((n_targets, len(candidates)), dtype=np.int64)
    for t in range(n_targets):
        if counts[t]:
            ones[t] = sub[targets[rows] == t].sum(axis=0)

    best_gain = Fraction(0)
    best_id: int | None = None
    best_pos: int | None = None
    for pos, cid in enumerate(candidates):
        counts1 = ones[:, pos]
        n1 = int(counts1.sum())
        if n1 == 0 or n1 == total:
            continue
        counts0 = counts - counts1
        weighted = (Fraction(total - n1, total) * _gini_frac(counts0)
                    + Fraction(n1, total) * _gini_frac(counts1))
        gain = parent - weighted
        if gain > best_gain or (gain == best_gain and gain > 0
                                and best_id is not None and cid < best_id):
            best_gain = gain
            best_id = cid
            best_pos = pos
    if best_id is None or best_gain <= 0:
        return node

    mask1 = sub[:, best_pos] == 1
    remaining = [c for c in candidates if c != best_id]
    child0 = _grow(features, targets, rows[~mask1], remaining, n_targets)
    child1 = _grow(features, targets, rows[mask1], remaining, n_targets)
    node.concept = best_id
    node.children = (child0, child1)
    return node
