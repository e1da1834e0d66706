"""Independent brute-force oracles. Deliberately slow, loop-based, and written
without reference to the package internals they check."""

from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction

import numpy as np


# ---------------------------------------------------------------------------
# Reference decision-tree inducer
# ---------------------------------------------------------------------------

def gini_exact(labels: list[int]) -> Fraction:
    n = len(labels)
    if n == 0:
        return Fraction(0)
    acc = Fraction(0)
    for count in Counter(labels).values():
        acc += Fraction(count, n) ** 2
    return 1 - acc


def brute_force_tree(rows: list[list[int]], labels: list[int],
                     candidates: list[int]) -> dict:
    node = {"counts": dict(Counter(labels)), "concept": None, "children": None}
    if len(set(labels)) <= 1 or not candidates:
        return node

    n = len(rows)
    parent = gini_exact(labels)
    best_gain, best_concept = Fraction(0), None
    for c in sorted(candidates):
        left = [i for i in range(n) if rows[i][c] == 0]
        right = [i for i in range(n) if rows[i][c] == 1]
        if not left or not right:
            continue
        weighted = (Fraction(len(left), n) * gini_exact([labels[i] for i in left])
                    + Fraction(len(right), n) * gini_exact([labels[i] for i in right]))
        gain = parent - weighted
        if gain > best_gain:  # scanning ascending ids keeps the lowest-id tie
            best_gain, best_concept = gain, c
    if best_concept is None:
        return node

    remaining = [c for c in candidates if c != best_concept]
    sides = ([i for i in range(n) if rows[i][best_concept] == 0],
             [i for i in range(n) if rows[i][best_concept] == 1])
    node["concept"] = best_concept
    node["children"] = tuple(
        brute_force_tree([rows[i] for i in side], [labels[i] for i in side],
                         remaining)
        for side in sides)
    return node


def trees_identical(impl_node, oracle_node) -> bool:
    impl_counts = {cls: int(k) for cls, k in enumerate(impl_node.counts) if k}
    if impl_counts != oracle_node["counts"]:
        return False
    if (impl_node.concept is None) != (oracle_node["concept"] is None):
        return False
    if impl_node.concept is None:
        return True
    if impl_node.concept != oracle_node["concept"]:
        return False
    return all(trees_identical(impl_node.children[v], oracle_node["children"][v])
               for v in (0, 1))


# ---------------------------------------------------------------------------
# Cosine-score oracle
# ---------------------------------------------------------------------------

def naive_cosine_scores(images: np.ndarray, concepts: np.ndarray) -> np.ndarray:
    out = np.zeros((len(images), len(concepts)))
    for i, img in enumerate(images):
        for m, con in enumerate(concepts):
            out[i, m] = sum(float(a) * float(b) for a, b in zip(img, con))
    return out


# ---------------------------------------------------------------------------
# Finite-difference gradient oracle
# ---------------------------------------------------------------------------

def numeric_gradient(loss_fn, theta: np.ndarray, h: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        bump = np.zeros_like(theta)
        bump.flat[i] = h
        grad.flat[i] = (loss_fn(theta + bump) - loss_fn(theta - bump)) / (2 * h)
    return grad


# ---------------------------------------------------------------------------
# Exhaustive macro-F1 threshold oracle
# ---------------------------------------------------------------------------

def _f1_exact(tp: int, fp: int, fn: int) -> Fraction:
    denom = 2 * tp + fp + fn
    return Fraction(2 * tp, denom) if denom else Fraction(0)


def exhaustive_best_threshold(probabilities: np.ndarray,
                              labels: np.ndarray) -> float:
    values = sorted(set(float(p) for p in probabilities))
    candidates = sorted({(a + b) / 2.0 for a, b in zip(values, values[1:])} | {0.5})
    best_t, best_f1 = None, Fraction(-1)
    for t in candidates:
        tp = fp = fn = tn = 0
        for p, z in zip(probabilities, labels):
            predicted = float(p) >= t
            if predicted and z == 1:
                tp += 1
            elif predicted and z == 0:
                fp += 1
            elif not predicted and z == 1:
                fn += 1
            else:
                tn += 1
        macro = (_f1_exact(tp, fp, fn) + _f1_exact(tn, fn, fp)) / 2
        if macro > best_f1:
            best_f1, best_t = macro, t
    return best_t


# ---------------------------------------------------------------------------
# Exact binomial central interval
# ---------------------------------------------------------------------------

def binomial_interval(n: int, p: float, confidence: float = 0.99) -> tuple[int, int]:
    tail = (1.0 - confidence) / 2.0
    cdf = 0.0
    lo = hi = None
    for k in range(n + 1):
        cdf += math.comb(n, k) * p**k * (1 - p) ** (n - k)
        if lo is None and cdf >= tail:
            lo = k
        if hi is None and cdf >= 1.0 - tail:
            hi = k
    return lo, hi if hi is not None else n
