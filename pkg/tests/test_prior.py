import logging

import numpy as np
import pytest

from conceptchain.corpus import DatasetManifest
from conceptchain.errors import ValidationError
from conceptchain.prior import (DecisionPath, build_all_prior_trees,
                                build_prior_tree, compute_prior,
                                prior_candidates)
from conceptchain.salience import refine_annotations


def _manifest(labels, n_classes, splits=None):
    labels = np.asarray(labels)
    ids = [f"x{i}" for i in range(len(labels))]
    return DatasetManifest(ids, labels, [f"k{c}" for c in range(n_classes)],
                           splits or ["train"] * len(labels))


def test_prior_of_all_ones_is_one():
    manifest = _manifest([0, 0, 1], 2)
    p = np.array([[1.0], [1.0], [0.25]])
    prior = compute_prior(p, manifest)
    assert prior[0, 0] == 1.0


def test_prior_is_arithmetic_mean():
    manifest = _manifest([0, 0, 1], 2)
    p = np.array([[0.2], [0.4], [0.9]])
    prior = compute_prior(p, manifest)
    assert prior[0, 0] == pytest.approx(0.3)
    assert prior[1, 0] == pytest.approx(0.9)


def test_prior_uses_train_split_only():
    manifest = _manifest([0, 0, 1], 2, splits=["train", "test", "train"])
    p = np.array([[0.2], [0.8], [0.5]])
    prior = compute_prior(p, manifest)
    assert prior[0, 0] == pytest.approx(0.2)


def test_tri_prior_saturates_toward_prototypes(tri, tri_annotated):
    prior = compute_prior(tri_annotated.calibration.probabilities, tri.manifest)
    proto = tri.prototypes.astype(bool)
    assert np.all(prior[proto] > 0.9)
    assert np.all(prior[~proto] < 0.1)


def test_prior_unchanged_by_refinement(tri, tri_annotated):
    prior_before = compute_prior(tri_annotated.calibration.probabilities,
                                 tri.manifest)
    refined = refine_annotations(tri_annotated.raw_annotations,
                                 tri_annotated.calibration)
    prior_after = compute_prior(tri_annotated.calibration.probabilities,
                                tri.manifest)
    assert np.array_equal(prior_before, prior_after)
    assert refined.sum() <= tri_annotated.raw_annotations.sum()


def test_tri_prior_tree_class_a(tri, tri_generated):
    path = tri_generated.prior_paths[0]
    assert path.concepts == (1,)
    assert path.terminal_gini == 0.0
    assert path.terminal_classes == (0,)


def test_tri_prior_tree_class_b(tri, tri_generated):
    path = tri_generated.prior_paths[1]
    assert path.concepts == (0, 2)
    assert path.terminal_gini == 0.0
    assert path.terminal_classes == (1,)


def test_single_class_dataset_gives_empty_path():
    manifest = _manifest([0, 0, 0], 1)
    annotations = np.array([[1, 0], [1, 0], [1, 1]], dtype=np.uint8)
    prior = np.array([[0.9, 0.4]])
    path = build_prior_tree(prior, annotations, manifest, 0)
    assert path.concepts == ()
    assert path.terminal_gini == 0.0
    assert path.terminal_classes == (0,)


def test_fallback_when_no_prior_exceeds_cutoff(caplog):
    manifest = _manifest([0, 0, 1, 1], 2)
    annotations = np.array([[1, 0, 0, 0, 0], [1, 0, 0, 0, 0],
                            [0, 1, 0, 0, 0], [0, 1, 0, 0, 0]], dtype=np.uint8)
    prior = np.array([[0.45, 0.1, 0.0, 0.0, 0.0],
                      [0.1, 0.45, 0.0, 0.0, 0.0]])
    cands, fallback = prior_candidates(prior, 0)
    assert fallback and cands == [0]  # top ceil(5/10) = 1 concept by prior
    with caplog.at_level(logging.WARNING):
        path = build_prior_tree(prior, annotations, manifest, 0)
    assert path.fallback
    assert path.concepts == (0,)
    assert "falling back" in caplog.text


def test_path_follows_class_majority_values():
    # class 0 instances mostly lack concept 0, so the prototype walks the
    # zero branch even though the prior marks the concept as typical
    manifest = _manifest([0, 0, 0, 1, 1, 1], 2)
    annotations = np.array([[0, 1], [0, 1], [1, 1],
                            [1, 0], [1, 0], [1, 0]], dtype=np.uint8)
    prior = np.array([[0.6, 0.9], [0.9, 0.1]])
    path = build_prior_tree(prior, annotations, manifest, 0)
    assert path.terminal_classes == (0,)
    assert path.terminal_gini == 0.0


def test_decision_path_rejects_repeats():
    with pytest.raises(ValidationError):
        DecisionPath(class_id=0, concepts=(1, 1), terminal_gini=0.0,
                     terminal_classes=(0,))


def test_unknown_class_rejected(tri, tri_generated, tri_annotated):
    prior = tri_generated.prior
    with pytest.raises(ValidationError, match="no such class"):
        build_prior_tree(prior, tri_annotated.refined, tri.manifest, 7)


def test_path_lengths_bounded_by_candidates(tri, tri_annotated, tri_generated):
    for path in build_all_prior_trees(tri_generated.prior,
                                      tri_annotated.refined, tri.manifest):
        cands, _ = prior_candidates(tri_generated.prior, path.class_id)
        assert len(path.concepts) <= len(cands)
        assert set(path.concepts) <= set(cands)
