import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conceptchain import pipeline, run_annotate, tri_fixture
from conceptchain.synth import SynthConfig, generate_synthetic


@pytest.fixture(scope="session")
def tri():
    return tri_fixture()


@pytest.fixture(scope="session")
def tri_annotated(tri):
    """Ground-truth-mode run: annotations are the prototypes themselves."""
    return run_annotate(tri.manifest, tri.bank, scores=tri.scores,
                        mode="ground_truth_concepts",
                        gt_annotations=tri.annotations)


@pytest.fixture(scope="session")
def tri_generated(tri, tri_annotated):
    return pipeline.run_generate(
        tri.manifest, tri.bank, tri_annotated.refined,
        tri_annotated.calibration.probabilities,
        gt_annotations=tri.annotations)


def random_dataset(seed: int, noiseless: bool = False):
    """Small seeded dataset within the oracle-comparable size envelope."""
    rng = np.random.default_rng(seed)
    n_classes = int(rng.integers(2, 6))
    n_concepts = int(rng.integers(n_classes, 13))
    per_class = int(rng.integers(3, 200 // n_classes + 1))
    noise = 0.0 if noiseless else float(rng.uniform(0.0, 0.25))
    return generate_synthetic(SynthConfig(
        n_classes=n_classes, n_concepts=n_concepts, per_class=per_class,
        pattern_noise_rate=noise, seed=seed))
