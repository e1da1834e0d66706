"""Seeded synthetic dataset generator used as the oracle-testing fixture source.

Each class gets a distinct binary prototype over the concept bank; instance
annotations are the prototype with independent per-entry flips, and scores are
the annotation value plus bounded uniform jitter.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import (ConceptBank, Concept, DatasetManifest, save_concept_bank,
                     save_manifest, write_matrix)
from .errors import ConfigError

# canonical 3-class / 4-concept fixture: prototypes 1100 / 1010 / 0011
TRI_PROTOTYPES = ((1, 1, 0, 0), (1, 0, 1, 0), (0, 0, 1, 1))

_SCORE_JITTER = 0.1


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int
    n_concepts: int
    per_class: int
    pattern_noise_rate: float
    seed: int
    per_class_test: int = 0
    prototypes: tuple[tuple[int, ...], ...] | None = None


def tri_config() -> SynthConfig:
    return SynthConfig(n_classes=3, n_concepts=4, per_class=10,
                       pattern_noise_rate=0.0, seed=0, prototypes=TRI_PROTOTYPES)


@dataclass(frozen=True)
class SyntheticDataset:
    bank: ConceptBank
    manifest: DatasetManifest
    scores: np.ndarray        # (n, M) float32
    annotations: np.ndarray   # (n, M) uint8, doubles as ground truth
    prototypes: np.ndarray    # (N, M) uint8


def _class_name(i: int, n_classes: int) -> str:
    if n_classes <= 26:
        return string.ascii_uppercase[i]
    return f"class{i:03d}"


def _make_bank(n_concepts: int) -> ConceptBank:
    concepts = tuple(
        Concept(
            id=m,
            name=f"c{m + 1}",
            positive_template="the object has {}",
            negative_template="the object does not show {}",
            question_template="Does the object show {}?",
            answer_text="Yes, it shows {}.",
        )
        for m in range(n_concepts)
    )
    return ConceptBank(concepts)


def _sample_prototypes(rng: np.random.Generator, n_classes: int,
                       n_concepts: int) -> np.ndarray:
    if n_concepts <= 20:
        space = 1 << n_concepts
        if space < n_classes:
            raise ConfigError(
                f"{n_classes} distinct prototypes impossible over "
                f"{n_concepts} concepts")
        codes = rng.choice(space, size=n_classes, replace=False)
        bits = ((codes[:, None] >> np.arange(n_concepts)[None, :]) & 1)
        return bits.astype(np.uint8)
    protos = set()
    rows = []
    while len(rows) < n_classes:
        cand = tuple(int(b) for b in rng.integers(0, 2, size=n_concepts))
        if cand not in protos:
            protos.add(cand)
            rows.append(cand)
    return np.array(rows, dtype=np.uint8)


def generate_synthetic(config: SynthConfig) -> SyntheticDataset:
    """Build a fully reproducible synthetic dataset from the seed."""
    if config.n_classes < 2:
        raise ConfigError("need at least 2 classes")
    if config.n_concepts < config.n_classes:
        raise ConfigError("need at least as many concepts as classes")
    if not (0.0 <= config.pattern_noise_rate < 1.0):
        raise ConfigError("noise rate must lie in [0, 1)")
    if config.per_class < 1:
        raise ConfigError("need at least one train instance per class")

    rng = np.random.default_rng(config.seed)
    if config.prototypes is not None:
        prototypes = np.array(config.prototypes, dtype=np.uint8)
        if prototypes.shape != (config.n_classes, config.n_concepts):
            raise ConfigError("prototype shape disagrees with config")
        if len({tuple(r) for r in prototypes.tolist()}) != config.n_classes:
            raise ConfigError("prototypes must be pairwise distinct")
    else:
        prototypes = _sample_prototypes(rng, config.n_classes, config.n_concepts)

    ids: list[str] = []
    labels: list[int] = []
    splits: list[str] = []
    for cls in range(config.n_classes):
        name = _class_name(cls, config.n_classes)
        for k in range(config.per_class):
            ids.append(f"{name}_{k:03d}")
            labels.append(cls)
            splits.append("train")
    for cls in range(config.n_classes):
        name = _class_name(cls, config.n_classes)
        for k in range(config.per_class_test):
            ids.append(f"{name}_t{k:03d}")
            labels.append(cls)
            splits.append("test")

    label_arr = np.array(labels, dtype=np.int64)
    annotations = prototypes[label_arr].copy()
    if config.pattern_noise_rate > 0.0:
        flips = rng.random(annotations.shape) < config.pattern_noise_rate
        annotations = np.where(flips, 1 - annotations, annotations).astype(np.uint8)

    jitter = rng.uniform(-_SCORE_JITTER, _SCORE_JITTER, size=annotations.shape)
    scores = (annotations.astype(np.float64) + jitter).astype(np.float32)

    manifest = DatasetManifest(
        instance_ids=ids,
        labels=label_arr,
        class_names=[_class_name(c, config.n_classes)
                     for c in range(config.n_classes)],
        splits=splits,
    )
    return SyntheticDataset(
        bank=_make_bank(config.n_concepts),
        manifest=manifest,
        scores=scores,
        annotations=annotations,
        prototypes=prototypes,
    )


def tri_fixture() -> SyntheticDataset:
    return generate_synthetic(tri_config())


def write_synthetic(dataset: SyntheticDataset, out_dir: str | Path,
                    config: SynthConfig | None = None) -> dict[str, Path]:
    """Write the five fixture files: bank, manifest, scores, annotations, config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "bank": out / "bank.jsonl",
        "manifest": out / "manifest.jsonl",
        "scores": out / "scores.wmat",
        "annotations": out / "annotations.wmat",
        "config": out / "synth_config.json",
    }
    save_concept_bank(dataset.bank, paths["bank"])
    save_manifest(dataset.manifest, paths["manifest"])
    write_matrix(paths["scores"], dataset.scores)
    write_matrix(paths["annotations"], dataset.annotations)
    cfg = {} if config is None else {
        "n_classes": config.n_classes,
        "n_concepts": config.n_concepts,
        "per_class": config.per_class,
        "per_class_test": config.per_class_test,
        "pattern_noise_rate": config.pattern_noise_rate,
        "seed": config.seed,
        "prototypes": dataset.prototypes.tolist(),
    }
    paths["config"].write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    return paths
