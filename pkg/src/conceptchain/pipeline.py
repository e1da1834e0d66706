"""End-to-end orchestration shared by the CLI and the test suite."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import ConceptBank, DatasetManifest, EmbeddingMatrix
from .errors import ConfigError, ValidationError
from .instance_trees import InstancePaths, build_instance_paths
from .prior import DecisionPath, build_all_prior_trees, compute_prior
from .rationale import (MCoTRecord, RenderTemplates, captioning_record,
                        check_variant, compose_mcot, shuffle_steps, verbalize)
from .salience import (CalibrationModel, Probe, ProbeHyper, annotate, calibrate,
                       compute_concept_scores, identity_calibration,
                       refine_annotations, train_probe)
from .supervisors import MCoTStats, mcot_stats

log = logging.getLogger(__name__)

MODES = ("scored", "ground_truth_concepts")


@dataclass
class AnnotateArtifacts:
    scores: np.ndarray | None
    probe: Probe | None
    raw_annotations: np.ndarray
    calibration: CalibrationModel
    refined: np.ndarray


def run_annotate(manifest: DatasetManifest, bank: ConceptBank,
                 scores: np.ndarray | None = None,
                 image_embeddings: EmbeddingMatrix | None = None,
                 concept_embeddings: EmbeddingMatrix | None = None,
                 mode: str = "scored",
                 gt_annotations: np.ndarray | None = None,
                 hyper: ProbeHyper | None = None,
                 shared_threshold: bool = False) -> AnnotateArtifacts:
    """Scoring (if embeddings given), probe, annotation, calibration, refinement.

    In ground-truth mode the sign-rule annotation step is skipped and the
    supplied labels feed calibration directly; without scores the calibration
    degenerates to the identity (probabilities are the labels themselves).
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; pick one of {MODES}")
    if scores is None and image_embeddings is not None:
        if concept_embeddings is None:
            raise ConfigError("image embeddings given without concept embeddings")
        scores = compute_concept_scores(image_embeddings, concept_embeddings)
    if scores is not None:
        if scores.shape != (manifest.n_instances, bank.bank_size):
            raise ValidationError("score matrix shape disagrees with "
                                  "manifest/bank")

    probe = None
    if mode == "ground_truth_concepts":
        if gt_annotations is None:
            raise ConfigError("ground_truth_concepts mode needs --gt-annotations")
        raw = np.asarray(gt_annotations, dtype=np.uint8)
        if raw.shape != (manifest.n_instances, bank.bank_size):
            raise ValidationError("ground-truth annotation shape disagrees "
                                  "with manifest/bank")
    else:
        if scores is None:
            raise ConfigError("scored mode needs --scores or embeddings")
        probe = train_probe(scores, manifest, hyper)
        raw = annotate(scores, probe, manifest)

    if scores is not None:
        calibration = calibrate(scores, raw, shared_threshold=shared_threshold)
    else:
        calibration = identity_calibration(raw)
    refined = refine_annotations(raw, calibration)
    return AnnotateArtifacts(scores=scores, probe=probe, raw_annotations=raw,
                             calibration=calibration, refined=refined)


@dataclass
class GenerateArtifacts:
    prior: np.ndarray
    prior_paths: list[DecisionPath]
    instance_paths: list[InstancePaths]
    records: list[MCoTRecord]
    stats: MCoTStats


def _paths_for_rows(rows: np.ndarray, annotations: np.ndarray,
                    manifest: DatasetManifest, prior: np.ndarray,
                    prior_paths: list[DecisionPath], affirm_mode: str,
                    jobs: int) -> list[InstancePaths]:
    def one(i: int) -> InstancePaths:
        label = int(manifest.labels[i])
        return build_instance_paths(
            manifest.instance_ids[i], annotations[i], label,
            prior_paths[label], annotations, manifest, prior, mode=affirm_mode)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, rows.tolist()))
    return [one(i) for i in rows.tolist()]


def _empty_prior_paths(manifest: DatasetManifest) -> list[DecisionPath]:
    return [DecisionPath(class_id=c, concepts=(), terminal_gini=0.0,
                         terminal_classes=(c,))
            for c in range(manifest.n_classes)]


def run_generate(manifest: DatasetManifest, bank: ConceptBank,
                 refined: np.ndarray, probabilities: np.ndarray,
                 templates: RenderTemplates | None = None,
                 variant: str = "wise", seed: int | None = None,
                 split: str = "train", affirm_mode: str = "all_present",
                 jobs: int = 1,
                 gt_annotations: np.ndarray | None = None) -> GenerateArtifacts:
    """Priors, prior trees, instance trees, composition, rendering, stats."""
    check_variant(variant, seed)
    templates = templates or RenderTemplates()
    refined = np.asarray(refined)
    prior = compute_prior(probabilities, manifest)
    prior_paths = build_all_prior_trees(prior, refined, manifest)

    if split == "train":
        rows = manifest.train_indices()
    elif split == "test":
        rows = manifest.test_indices()
    elif split == "all":
        rows = np.arange(manifest.n_instances)
    else:
        raise ConfigError(f"unknown split {split!r}")
    if rows.size == 0:
        raise ConfigError(f"split {split!r} holds no instances")

    effective_prior_paths = prior_paths
    effective_mode = affirm_mode
    if variant == "instance_only":
        # skip the category stage entirely: every present concept is a candidate
        effective_prior_paths = _empty_prior_paths(manifest)
    instance_paths = _paths_for_rows(rows, refined, manifest, prior,
                                     effective_prior_paths, effective_mode, jobs)

    records: list[MCoTRecord] = []
    if variant == "captioning":
        for i, _paths in zip(rows.tolist(), instance_paths):
            records.append(captioning_record(
                manifest.instance_ids[i],
                manifest.class_names[manifest.labels[i]], refined[i]))
    elif variant == "category_only":
        for i in rows.tolist():
            label = int(manifest.labels[i])
            path = prior_paths[label]
            rec = compose_mcot(
                InstancePaths(
                    instance_id=manifest.instance_ids[i], label=label,
                    prior_subpath=path.concepts, affirm_extra=(),
                    affirmation=path.concepts, confounders=(), elimination=(),
                    residual_gini=path.terminal_gini,
                    bank_insufficient=False),
                manifest.class_names[label])
            records.append(rec)
    else:
        for paths in instance_paths:
            records.append(compose_mcot(
                paths, manifest.class_names[paths.label]))

    if variant == "shuffled":
        rng = np.random.default_rng(seed)
        records = [shuffle_steps(r, rng) for r in records]

    records = [verbalize(r, bank, templates) for r in records]
    stats = mcot_stats(records, gt_annotations, bank, manifest)
    insufficient = sum(1 for p in instance_paths if p.bank_insufficient)
    if insufficient:
        log.warning("%d record(s) are bank-insufficient; consider a larger "
                    "concept bank", insufficient)
    return GenerateArtifacts(prior=prior, prior_paths=prior_paths,
                             instance_paths=instance_paths, records=records,
                             stats=stats)
