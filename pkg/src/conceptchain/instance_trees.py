"""Per-instance affirmation and elimination trees.

The affirmation stage separates an instance from the hard negatives that its
activated prior concepts cannot rule out, using concepts present in the
instance but absent from the prior path. Whatever classes survive at the
instance's leaf are confounders; the elimination stage then splits on concepts
the instance lacks until the leaf is pure or the bank runs out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import DatasetManifest
from .errors import ValidationError
from .prior import DecisionPath
from .trees import induce_tree

AFFIRM_MODES = ("all_present", "tree_path")


@dataclass(frozen=True)
class AffirmationResult:
    extra_concepts: tuple[int, ...]       # instance-specific additions
    affirmation: tuple[int, ...]          # full positive chain, prior-ordered
    confounders: tuple[int, ...]          # classes alive at the instance leaf
    leaf_gini: float


@dataclass(frozen=True)
class EliminationResult:
    concepts: tuple[int, ...]             # root-first absent-concept path
    residual_gini: float

    @property
    def bank_insufficient(self) -> bool:
        return self.residual_gini > 0.0


@dataclass(frozen=True)
class InstancePaths:
    instance_id: str
    label: int
    prior_subpath: tuple[int, ...]
    affirm_extra: tuple[int, ...]
    affirmation: tuple[int, ...]
    confounders: tuple[int, ...]
    elimination: tuple[int, ...]
    residual_gini: float
    bank_insufficient: bool

    @property
    def complete(self) -> bool:
        return self.residual_gini == 0.0


def prior_subpath(instance_annotations: np.ndarray,
                  prior_path: DecisionPath) -> list[int]:
    """Prior-path concepts actually present in the instance, order preserved."""
    z = np.asarray(instance_annotations)
    return [c for c in prior_path.concepts if z[c] == 1]


def retrieve_hard_negatives(annotations: np.ndarray, manifest: DatasetManifest,
                            subpath: list[int] | tuple[int, ...],
                            target_class: int) -> np.ndarray:
    """Train instances of other classes showing every activated prior concept.

    Containment (not exact-set) matching: a negative with extra unrelated
    concepts is still indistinguishable by the prior path alone.
    """
    annotations = np.asarray(annotations)
    train = manifest.train_indices()
    negatives = train[manifest.labels[train] != target_class]
    if not len(subpath):
        return negatives
    match = annotations[np.ix_(negatives, list(subpath))].all(axis=1)
    return negatives[match]


def _instance_leaf_stats(tree, features: np.ndarray, instance_row: np.ndarray,
                         neg_labels: np.ndarray) -> tuple[list[int], float, tuple[int, ...]]:
    """Path, leaf gini, and surviving negative classes for the instance's leaf."""
    path = tree.path_for(instance_row)
    # negatives sit on local rows 1..k; track which reach the instance's leaf
    mask = np.ones(features.shape[0] - 1, dtype=bool)
    node = tree
    while not node.is_leaf:
        value = int(instance_row[node.concept])
        mask &= features[1:, node.concept] == value
        node = node.children[value]
    survivors = np.unique(neg_labels[mask]) if mask.any() else np.array([], dtype=np.int64)
    return path, node.gini, tuple(int(c) for c in survivors)


def build_affirmation_tree(instance_annotations: np.ndarray, target_class: int,
                           prior_path: DecisionPath,
                           hard_negatives: np.ndarray,
                           annotations: np.ndarray,
                           manifest: DatasetManifest,
                           prior: np.ndarray,
                           mode: str = "all_present") -> AffirmationResult:
    """Separate the instance from its hard negatives with present concepts.

    ``mode`` picks what enters the positive chain beyond the prior subpath:
    every present off-prior-path concept (``all_present``, the default) or only
    the splits along the instance's route through the tree (``tree_path``).
    Either way the full chain is re-sorted by descending prior probability for
    the target class, ties broken by ascending concept id.
    """
    if mode not in AFFIRM_MODES:
        raise ValidationError(f"unknown affirmation mode {mode!r}")
    z = np.asarray(instance_annotations)
    annotations = np.asarray(annotations)
    subpath = prior_subpath(z, prior_path)
    on_prior = set(prior_path.concepts)
    candidates = [int(m) for m in np.flatnonzero(z == 1) if m not in on_prior]

    features = np.vstack([z[None, :], annotations[hard_negatives]])
    targets = np.concatenate([[1], np.zeros(len(hard_negatives), dtype=np.int64)])
    tree = induce_tree(features, targets, candidates, n_targets=2)
    path, leaf_gini, confounders = _instance_leaf_stats(
        tree, features, z, manifest.labels[hard_negatives])

    if mode == "tree_path":
        extra = list(path)
    else:
        extra = list(path) + [c for c in candidates if c not in set(path)]

    chain = sorted(subpath + extra,
                   key=lambda c: (-prior[target_class, c], c))
    return AffirmationResult(
        extra_concepts=tuple(extra),
        affirmation=tuple(chain),
        confounders=confounders,
        leaf_gini=leaf_gini,
    )


def build_elimination_tree(instance_annotations: np.ndarray,
                           confounders: tuple[int, ...] | list[int],
                           annotations: np.ndarray,
                           manifest: DatasetManifest) -> EliminationResult:
    """Refute the confounding classes with concepts absent from the instance.

    A still-impure leaf means the bank cannot tell the instance apart from
    some confounder; that is flagged, never raised.
    """
    if not len(confounders):
        raise ValidationError("elimination requires a non-empty confounder set")
    z = np.asarray(instance_annotations)
    annotations = np.asarray(annotations)
    train = manifest.train_indices()
    conf = set(int(c) for c in confounders)
    negatives = train[np.isin(manifest.labels[train], sorted(conf))]
    candidates = [int(m) for m in np.flatnonzero(z == 0)]

    features = np.vstack([z[None, :], annotations[negatives]])
    targets = np.concatenate([[1], np.zeros(len(negatives), dtype=np.int64)])
    tree = induce_tree(features, targets, candidates, n_targets=2)
    path, leaf_gini, _ = _instance_leaf_stats(
        tree, features, z, manifest.labels[negatives])
    return EliminationResult(concepts=tuple(path), residual_gini=leaf_gini)


def build_instance_paths(instance_id: str, instance_annotations: np.ndarray,
                         label: int, prior_path: DecisionPath,
                         annotations: np.ndarray, manifest: DatasetManifest,
                         prior: np.ndarray,
                         mode: str = "all_present") -> InstancePaths:
    """Run the full per-instance pipeline: subpath, affirmation, elimination."""
    z = np.asarray(instance_annotations)
    subpath = prior_subpath(z, prior_path)
    hard = retrieve_hard_negatives(annotations, manifest, subpath, label)
    affirm = build_affirmation_tree(z, label, prior_path, hard, annotations,
                                    manifest, prior, mode=mode)
    if affirm.confounders:
        elim = build_elimination_tree(z, affirm.confounders, annotations, manifest)
        elimination = elim.concepts
        residual = elim.residual_gini
        insufficient = elim.bank_insufficient
    else:
        elimination = ()
        residual = affirm.leaf_gini
        insufficient = False
    return InstancePaths(
        instance_id=instance_id,
        label=int(label),
        prior_subpath=tuple(subpath),
        affirm_extra=affirm.extra_concepts,
        affirmation=affirm.affirmation,
        confounders=affirm.confounders,
        elimination=elimination,
        residual_gini=residual,
        bank_insufficient=insufficient,
    )


def save_instance_paths(paths: list[InstancePaths], out_path: str | Path) -> None:
    with Path(out_path).open("w", encoding="utf-8") as fh:
        for p in paths:
            fh.write(json.dumps({
                "instance_id": p.instance_id,
                "label": p.label,
                "prior_subpath": list(p.prior_subpath),
                "affirm_extra": list(p.affirm_extra),
                "affirmation": list(p.affirmation),
                "confounders": list(p.confounders),
                "elimination": list(p.elimination),
                "residual_gini": p.residual_gini,
                "complete": p.complete,
                "bank_insufficient": p.bank_insufficient,
            }) + "\n")
