"""Concept scoring, probe training, binary annotation, and salience calibration.

The probe is an L2-regularized multinomial softmax classifier trained by
full-batch gradient descent from zero initialization; a step is only accepted
if it does not increase the loss (the step is halved otherwise), which keeps
the loss trace monotone and the result deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .corpus import DatasetManifest, EmbeddingMatrix
from .errors import DivergenceError, ValidationError

log = logging.getLogger(__name__)

_MAX_HALVINGS = 60


@dataclass(frozen=True)
class ProbeHyper:
    l2_strength: float = 1e-3
    learning_rate: float = 1.0
    max_epochs: int = 5000
    tol: float = 1e-6


@dataclass(frozen=True)
class Probe:
    weights: np.ndarray   # (N, M) float64, one row per class
    biases: np.ndarray    # (N,) float64

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.weights))
                and np.all(np.isfinite(self.biases))):
            raise ValidationError("probe has non-finite parameters")
        if self.weights.shape[0] != self.biases.shape[0]:
            raise ValidationError("probe weight/bias shapes disagree")


@dataclass(frozen=True)
class CalibrationModel:
    slope: np.ndarray          # (M,) float64
    intercept: np.ndarray      # (M,)
    threshold: np.ndarray      # (M,) each in (0, 1)
    calibratable: np.ndarray   # (M,) bool
    probabilities: np.ndarray  # (n, M) float64 in [0, 1]


def compute_concept_scores(images: EmbeddingMatrix,
                           concepts: EmbeddingMatrix) -> np.ndarray:
    """Cosine similarity of every image row against every concept row."""
    if images.dim != concepts.dim:
        raise ValidationError(
            f"embedding dims differ: {images.dim} vs {concepts.dim}")
    if not (images.normalized and concepts.normalized):
        raise ValidationError("cosine scoring requires unit-norm rows; "
                              "inputs must carry the normalized flag")
    scores = images.data.astype(np.float64) @ concepts.data.astype(np.float64).T
    return scores.astype(np.float32)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def probe_loss_and_grad(weights: np.ndarray, biases: np.ndarray,
                        scores: np.ndarray, labels: np.ndarray,
                        l2_strength: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus 0.5*l2*||W||^2 and its analytic gradient."""
    n = scores.shape[0]
    logits = scores @ weights.T + biases
    logp = _log_softmax(logits)
    loss = -float(logp[np.arange(n), labels].mean())
    loss += 0.5 * l2_strength * float(np.sum(weights * weights))
    resid = np.exp(logp)
    resid[np.arange(n), labels] -= 1.0
    grad_w = resid.T @ scores / n + l2_strength * weights
    grad_b = resid.mean(axis=0)
    return loss, grad_w, grad_b


def train_probe(scores: np.ndarray, manifest: DatasetManifest,
                hyper: ProbeHyper | None = None,
                loss_history: list[float] | None = None) -> Probe:
    hyper = hyper or ProbeHyper()
    n_classes = manifest.n_classes
    if n_classes < 2:
        raise ValidationError("probe needs at least two classes")
    train = manifest.train_indices()
    if train.size == 0:
        raise ValidationError("train split is empty")
    x = np.asarray(scores, dtype=np.float64)[train]
    y = manifest.labels[train]
    if len(np.unique(y)) != n_classes:
        raise ValidationError("every class must appear in the train split")

    n_concepts = x.shape[1]
    weights = np.zeros((n_classes, n_concepts))
    biases = np.zeros(n_classes)
    loss, grad_w, grad_b = probe_loss_and_grad(weights, biases, x, y,
                                               hyper.l2_strength)
    if loss_history is not None:
        loss_history.append(loss)
    for _ in range(hyper.max_epochs):
        if not (np.isfinite(loss) and np.all(np.isfinite(grad_w))
                and np.all(np.isfinite(grad_b))):
            raise DivergenceError(
                "probe loss diverged; retry with a smaller learning rate")
        if max(np.abs(grad_w).max(), np.abs(grad_b).max()) < hyper.tol:
            break
        step = hyper.learning_rate
        for _ in range(_MAX_HALVINGS):
            cand_w = weights - step * grad_w
            cand_b = biases - step * grad_b
            cand = probe_loss_and_grad(cand_w, cand_b, x, y, hyper.l2_strength)
            if np.isfinite(cand[0]) and cand[0] <= loss:
                break
            step *= 0.5
        else:
            break  # gradient is numerically flat, no decreasing step exists
        weights, biases = cand_w, cand_b
        loss, grad_w, grad_b = cand
        if loss_history is not None:
            loss_history.append(loss)
    return Probe(weights=weights, biases=biases)


def predict_classes(probe: Probe, scores: np.ndarray) -> np.ndarray:
    logits = np.asarray(scores, dtype=np.float64) @ probe.weights.T + probe.biases
    return np.argmax(logits, axis=1)


def annotate(scores: np.ndarray, probe: Probe,
             manifest: DatasetManifest) -> np.ndarray:
    """Presence = strictly positive score-times-class-weight product (ties to 0)."""
    scores = np.asarray(scores, dtype=np.float64)
    if probe.weights.shape != (manifest.n_classes, scores.shape[1]):
        raise ValidationError("probe shape disagrees with scores/manifest")
    if scores.shape[0] != manifest.n_instances:
        raise ValidationError("score rows disagree with manifest")
    class_weights = probe.weights[manifest.labels]
    return (scores * class_weights > 0.0).astype(np.uint8)


# ---------------------------------------------------------------------------
# Per-concept logistic calibration with macro-F1 thresholds
# ---------------------------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _fit_logistic(s: np.ndarray, z: np.ndarray, l2: float = 1e-4,
                  max_iter: int = 100) -> tuple[float, float]:
    """Damped Newton fit of P = sigmoid(a*s + b); slope lightly ridged."""
    a, b = 0.0, float(np.log(z.mean() / (1.0 - z.mean())))

    def objective(av: float, bv: float) -> float:
        eta = av * s + bv
        return float(np.mean(np.logaddexp(0.0, eta) - z * eta)) + 0.5 * l2 * av * av

    obj = objective(a, b)
    for _ in range(max_iter):
        eta = a * s + b
        p = _sigmoid(eta)
        ga = float(np.mean((p - z) * s)) + l2 * a
        gb = float(np.mean(p - z))
        if max(abs(ga), abs(gb)) < 1e-10:
            break
        w = p * (1.0 - p)
        haa = float(np.mean(w * s * s)) + l2
        hab = float(np.mean(w * s))
        hbb = float(np.mean(w))
        det = haa * hbb - hab * hab
        if det <= 0 or not np.isfinite(det):
            break
        da = (hbb * ga - hab * gb) / det
        db = (haa * gb - hab * ga) / det
        step = 1.0
        for _ in range(50):
            cand = objective(a - step * da, b - step * db)
            if np.isfinite(cand) and cand <= obj:
                break
            step *= 0.5
        else:
            break
        a, b = a - step * da, b - step * db
        obj = cand
    return a, b


def threshold_candidates(probabilities: np.ndarray) -> np.ndarray:
    """Midpoints between consecutive sorted distinct probabilities, plus 0.5."""
    distinct = np.unique(probabilities)
    mids = (distinct[:-1] + distinct[1:]) / 2.0 if distinct.size > 1 else np.array([])
    return np.unique(np.concatenate([mids, [0.5]]))


def _macro_f1(pred: np.ndarray, z: np.ndarray) -> Fraction:
    tp = int(np.sum(pred & (z == 1)))
    fp = int(np.sum(pred & (z == 0)))
    fn = int(np.sum(~pred & (z == 1)))
    tn = int(np.sum(~pred & (z == 0)))
    f1_pos = Fraction(2 * tp, 2 * tp + fp + fn) if (2 * tp + fp + fn) else Fraction(0)
    f1_neg = Fraction(2 * tn, 2 * tn + fp + fn) if (2 * tn + fp + fn) else Fraction(0)
    return (f1_pos + f1_neg) / 2


def choose_threshold(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """Candidate maximizing macro F1 over {positive, negative}; ties go low."""
    z = np.asarray(labels)
    best_t = None
    best_f1 = Fraction(-1)
    for t in threshold_candidates(np.asarray(probabilities)):
        f1 = _macro_f1(np.asarray(probabilities) >= t, z)
        if f1 > best_f1:
            best_f1 = f1
            best_t = float(t)
    return best_t


def calibrate(scores: np.ndarray, annotations: np.ndarray,
              shared_threshold: bool = False) -> CalibrationModel:
    """Fit a univariate logistic per concept and pick its macro-F1 threshold.

    Concepts whose annotation column is single-valued are uncalibratable and
    recorded with a flat fit and threshold 0.5 (never an error). With
    ``shared_threshold`` a single threshold is chosen over all calibratable
    concepts pooled, instead of one per concept.
    """
    scores = np.asarray(scores, dtype=np.float64)
    annotations = np.asarray(annotations)
    if scores.shape != annotations.shape:
        raise ValidationError("scores and annotations shapes disagree")
    n, m = scores.shape
    slope = np.zeros(m)
    intercept = np.zeros(m)
    threshold = np.full(m, 0.5)
    calibratable = np.zeros(m, dtype=bool)
    probabilities = np.full((n, m), 0.5)

    for c in range(m):
        z = annotations[:, c].astype(np.float64)
        pos = int(z.sum())
        if pos == 0 or pos == n:
            log.warning("concept %d is uncalibratable (all annotations %d)",
                        c, int(z[0]) if n else 0)
            continue
        a, b = _fit_logistic(scores[:, c], z)
        slope[c] = a
        intercept[c] = b
        probabilities[:, c] = _sigmoid(a * scores[:, c] + b)
        calibratable[c] = True
        if not shared_threshold:
            threshold[c] = choose_threshold(probabilities[:, c], annotations[:, c])

    if shared_threshold and calibratable.any():
        cols = np.flatnonzero(calibratable)
        pooled_p = probabilities[:, cols].ravel()
        pooled_z = annotations[:, cols].ravel()
        threshold[cols] = choose_threshold(pooled_p, pooled_z)

    return CalibrationModel(slope=slope, intercept=intercept,
                            threshold=threshold, calibratable=calibratable,
                            probabilities=probabilities)


def identity_calibration(annotations: np.ndarray) -> CalibrationModel:
    """Degenerate model for ground-truth runs without concept scores."""
    annotations = np.asarray(annotations)
    n, m = annotations.shape
    return CalibrationModel(
        slope=np.zeros(m), intercept=np.zeros(m),
        threshold=np.full(m, 0.5),
        calibratable=np.zeros(m, dtype=bool),
        probabilities=annotations.astype(np.float64),
    )


def refine_annotations(annotations: np.ndarray,
                       calib: CalibrationModel) -> np.ndarray:
    """Drop positives whose calibrated probability falls below the threshold.

    Refinement is one-directional: a zero never becomes a one.
    """
    annotations = np.asarray(annotations)
    if annotations.shape != calib.probabilities.shape:
        raise ValidationError("annotation and probability shapes disagree")
    keep = calib.probabilities >= calib.threshold[None, :]
    return (annotations.astype(bool) & keep).astype(np.uint8)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_probe(probe: Probe, path) -> None:
    """Probe as one f32 matrix: a weight row per class, bias in the last column."""
    from .corpus import write_matrix
    block = np.hstack([probe.weights, probe.biases[:, None]])
    write_matrix(path, block.astype(np.float32))


def load_probe(path) -> Probe:
    from .corpus import load_score_matrix
    block = load_score_matrix(path).astype(np.float64)
    if block.shape[1] < 2:
        raise ValidationError(f"{path}: probe matrix needs weights plus a bias column")
    return Probe(weights=block[:, :-1], biases=block[:, -1])


def save_calibration(calib: CalibrationModel, path) -> None:
    """Per-concept fit records, one JSON object per line."""
    import json
    from pathlib import Path
    with Path(path).open("w", encoding="utf-8") as fh:
        for c in range(len(calib.slope)):
            fh.write(json.dumps({
                "concept_id": c,
                "slope": float(calib.slope[c]),
                "intercept": float(calib.intercept[c]),
                "threshold": float(calib.threshold[c]),
                "calibratable": bool(calib.calibratable[c]),
            }) + "\n")
