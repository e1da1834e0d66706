"""Category-typicality priors and the per-class prior decision trees."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import DatasetManifest
from .errors import ValidationError
from .trees import gini_from_counts, induce_tree

log = logging.getLogger(__name__)

PRIOR_CUTOFF = 0.5
_FALLBACK_FRACTION = 10  # fall back to the top ceil(M/10) concepts by prior


@dataclass(frozen=True)
class DecisionPath:
    """Root-first concept sequence a class prototype follows to its leaf."""

    class_id: int
    concepts: tuple[int, ...]
    terminal_gini: float
    terminal_classes: tuple[int, ...]
    fallback: bool = False

    def __post_init__(self) -> None:
        if len(set(self.concepts)) != len(self.concepts):
            raise ValidationError("decision path repeats a concept")


def compute_prior(probabilities: np.ndarray,
                  manifest: DatasetManifest) -> np.ndarray:
    """Per class, the mean calibrated concept probability over train instances."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    if probabilities.shape[0] != manifest.n_instances:
        raise ValidationError("probability rows disagree with manifest")
    prior = np.zeros((manifest.n_classes, probabilities.shape[1]))
    for cls in range(manifest.n_classes):
        rows = manifest.class_train_indices(cls)
        if rows.size == 0:
            raise ValidationError(f"class {cls} has no train instances")
        prior[cls] = probabilities[rows].mean(axis=0)
    return prior


def prior_candidates(prior: np.ndarray, class_id: int) -> tuple[list[int], bool]:
    """Concepts with prior above the cutoff; top-by-prior fallback if none."""
    row = prior[class_id]
    cands = [int(m) for m in np.flatnonzero(row > PRIOR_CUTOFF)]
    if cands:
        return cands, False
    k = math.ceil(len(row) / _FALLBACK_FRACTION)
    order = sorted(range(len(row)), key=lambda m: (-row[m], m))
    log.warning("class %d has no concept with prior > %.1f; "
                "falling back to its top %d concepts", class_id, PRIOR_CUTOFF, k)
    return order[:k], True


def _majority_values(annotations: np.ndarray, rows: np.ndarray) -> np.ndarray:
    ones = annotations[rows].sum(axis=0)
    return (2 * ones >= rows.size).astype(np.uint8)


def build_prior_tree(prior: np.ndarray, annotations: np.ndarray,
                     manifest: DatasetManifest, class_id: int) -> DecisionPath:
    """One-vs-rest tree over this class's typical concepts, walked prototype-wise.

    The returned path branches at every split on the class's majority
    annotation value, so it describes the prototypical member.
    """
    if not 0 <= class_id < manifest.n_classes:
        raise ValidationError(f"no such class: {class_id}")
    train = manifest.train_indices()
    labels = manifest.labels[train]
    feats = np.asarray(annotations)[train]
    targets = (labels == class_id).astype(np.int64)

    candidates, fallback = prior_candidates(prior, class_id)
    tree = induce_tree(feats, targets, candidates, n_targets=2)

    proto = _majority_values(np.asarray(annotations),
                             manifest.class_train_indices(class_id))
    path: list[int] = []
    node = tree
    mask = np.ones(len(train), dtype=bool)
    while not node.is_leaf:
        c = node.concept
        path.append(c)
        mask &= feats[:, c] == proto[c]
        node = node.children[int(proto[c])]

    leaf_labels = labels[mask]
    counts = np.bincount(leaf_labels, minlength=manifest.n_classes)
    return DecisionPath(
        class_id=class_id,
        concepts=tuple(path),
        terminal_gini=gini_from_counts(counts),
        terminal_classes=tuple(int(c) for c in np.flatnonzero(counts)),
        fallback=fallback,
    )


def build_all_prior_trees(prior: np.ndarray, annotations: np.ndarray,
                          manifest: DatasetManifest) -> list[DecisionPath]:
    return [build_prior_tree(prior, annotations, manifest, cls)
            for cls in range(manifest.n_classes)]


def save_prior_paths(paths: list[DecisionPath], manifest: DatasetManifest,
                     out_path: str | Path) -> None:
    with Path(out_path).open("w", encoding="utf-8") as fh:
        for p in paths:
            fh.write(json.dumps({
                "class_id": p.class_id,
                "class_name": manifest.class_names[p.class_id],
                "path": list(p.concepts),
                "terminal_gini": p.terminal_gini,
                "terminal_classes": list(p.terminal_classes),
                "fallback": p.fallback,
            }) + "\n")
