"""Weak-supervisor baselines and interpretability metrics.

All metrics are pure folds over their inputs; evaluation uses the test split
when the manifest has one and falls back to the train split otherwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import ConceptBank, DatasetManifest
from .errors import ValidationError
from .rationale import MCoTRecord, POSITIVE, Step
from .salience import Probe, predict_classes
from .trees import induce_tree

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SupervisorReport:
    method: str
    accuracy: float                      # percentage
    interpretability: float | None      # percentage, absent without ground truth


@dataclass(frozen=True)
class MCoTStats:
    pos_precision: float | None
    neg_precision: float | None
    in_cot: float          # mean concepts per rationale
    x_cot: int             # unique concepts used at least once
    bank: int


def eval_split(manifest: DatasetManifest) -> np.ndarray:
    rows = manifest.test_indices()
    if rows.size == 0:
        log.warning("manifest has no test split; evaluating on train")
        return manifest.train_indices()
    return rows


def _pct(num: float, den: float) -> float:
    return 100.0 * num / den


def eval_cbm(probe: Probe, scores: np.ndarray, manifest: DatasetManifest,
             gt_annotations: np.ndarray | None = None) -> SupervisorReport:
    """Linear probe accuracy; polarity of weight-times-score vs ground truth."""
    rows = eval_split(manifest)
    scores = np.asarray(scores, dtype=np.float64)
    pred = predict_classes(probe, scores[rows])
    accuracy = _pct(float(np.sum(pred == manifest.labels[rows])), rows.size)
    interp = None
    if gt_annotations is not None:
        gt = np.asarray(gt_annotations)[rows]
        polarity = scores[rows] * probe.weights[pred] > 0.0
        interp = _pct(float(np.sum(polarity == gt.astype(bool))), gt.size)
    return SupervisorReport("CBM", accuracy, interp)


def eval_dt(annotations: np.ndarray, manifest: DatasetManifest,
            gt_annotations: np.ndarray | None = None,
            per_instance_average: bool = False) -> SupervisorReport:
    """Multiclass Gini tree over annotations; path-concept correctness vs gt.

    Default interpretability pools every traversed path concept (micro);
    ``per_instance_average`` switches to a per-instance macro mean.
    """
    annotations = np.asarray(annotations)
    train = manifest.train_indices()
    tree = induce_tree(annotations[train], manifest.labels[train],
                       list(range(annotations.shape[1])),
                       n_targets=manifest.n_classes)
    rows = eval_split(manifest)
    correct = 0
    path_hits: list[tuple[int, int]] = []   # (correct concepts, path length)
    for i in rows:
        row = annotations[i]
        leaf = tree.leaf_for(row)
        if leaf.majority_class() == manifest.labels[i]:
            correct += 1
        if gt_annotations is not None:
            path = tree.path_for(row)
            if path:
                hits = sum(int(row[c] == gt_annotations[i][c]) for c in path)
                path_hits.append((hits, len(path)))
    accuracy = _pct(correct, rows.size)
    interp = None
    if gt_annotations is not None and path_hits:
        if per_instance_average:
            interp = float(np.mean([_pct(h, n) for h, n in path_hits]))
        else:
            interp = _pct(sum(h for h, _ in path_hits),
                          sum(n for _, n in path_hits))
    return SupervisorReport("DT", accuracy, interp)


def eval_nbc(annotations: np.ndarray, manifest: DatasetManifest,
             gt_annotations: np.ndarray | None = None,
             alpha: float = 1.0) -> SupervisorReport:
    """Bernoulli naive Bayes with additive smoothing on the conditionals.

    Per-concept polarity is the sign of the log-ratio between the predicted
    class conditional and the runner-up's; an exactly zero ratio counts as
    negative polarity.
    """
    annotations = np.asarray(annotations)
    train = manifest.train_indices()
    n_classes = manifest.n_classes
    counts = np.zeros(n_classes)
    cond = np.zeros((n_classes, annotations.shape[1]))
    for cls in range(n_classes):
        rows = train[manifest.labels[train] == cls]
        counts[cls] = rows.size
        cond[cls] = (annotations[rows].sum(axis=0) + alpha) / (rows.size + 2 * alpha)
    log_prior = np.log(counts / counts.sum())
    log_on, log_off = np.log(cond), np.log1p(-cond)

    rows = eval_split(manifest)
    z = annotations[rows].astype(np.float64)
    posterior = log_prior + z @ log_on.T + (1.0 - z) @ log_off.T
    order = np.argsort(-posterior, axis=1, kind="stable")
    pred, contrast = order[:, 0], order[:, 1]
    accuracy = _pct(float(np.sum(pred == manifest.labels[rows])), rows.size)
    interp = None
    if gt_annotations is not None:
        gt = np.asarray(gt_annotations)[rows]
        polarity = (log_on[pred] - log_on[contrast]) > 0.0
        interp = _pct(float(np.sum(polarity == gt.astype(bool))), gt.size)
    return SupervisorReport("NBC", accuracy, interp)


# ---------------------------------------------------------------------------
# Rationale-level metrics
# ---------------------------------------------------------------------------

def _step_correct(step: Step, gt_row: np.ndarray) -> bool:
    if step.polarity == POSITIVE:
        return bool(gt_row[step.concept_id] == 1)
    return bool(gt_row[step.concept_id] == 0)


def interpretability(records: list[MCoTRecord], gt_annotations: np.ndarray,
                     manifest: DatasetManifest,
                     unmatched_total: int = 0) -> float | None:
    """Share of step polarities agreeing with the binary ground truth.

    Unmatched clauses (from extraction) count against the total. Returns None
    when there are no steps at all, rather than a misleading zero.
    """
    gt = np.asarray(gt_annotations)
    correct = 0
    total = unmatched_total
    for record in records:
        row = gt[manifest.row_of(record.instance_id)]
        for step in record.steps:
            total += 1
            if _step_correct(step, row):
                correct += 1
    if total == 0:
        return None
    return _pct(correct, total)


def mcot_stats(records: list[MCoTRecord],
               gt_annotations: np.ndarray | None,
               bank: ConceptBank,
               manifest: DatasetManifest | None = None) -> MCoTStats:
    """Positive/negative precision, mean chain length, and concept coverage."""
    if gt_annotations is not None and manifest is None:
        raise ValidationError("precision against ground truth needs the manifest")
    pos_total = pos_hit = neg_total = neg_hit = 0
    used: set[int] = set()
    step_counts = []
    for record in records:
        step_counts.append(record.step_count)
        gt_row = None
        if gt_annotations is not None:
            gt_row = np.asarray(gt_annotations)[manifest.row_of(record.instance_id)]
        for step in record.steps:
            used.add(step.concept_id)
            if gt_row is None:
                continue
            if step.polarity == POSITIVE:
                pos_total += 1
                pos_hit += int(_step_correct(step, gt_row))
            else:
                neg_total += 1
                neg_hit += int(_step_correct(step, gt_row))
    return MCoTStats(
        pos_precision=_pct(pos_hit, pos_total) if pos_total else None,
        neg_precision=_pct(neg_hit, neg_total) if neg_total else None,
        in_cot=float(np.mean(step_counts)) if step_counts else 0.0,
        x_cot=len(used),
        bank=bank.bank_size,
    )


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------

def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"


def format_reports(reports: list[SupervisorReport]) -> str:
    lines = [f"{'method':<8}{'acc.':>8}{'intp.':>8}"]
    for r in reports:
        lines.append(f"{r.method:<8}{r.accuracy:>8.2f}{_fmt(r.interpretability):>8}")
    return "\n".join(lines)


def format_stats(stats: MCoTStats) -> str:
    header = f"{'Pos':>8}{'Neg':>8}{'InCoT':>8}{'XCoT':>8}{'Bank':>8}"
    row = (f"{_fmt(stats.pos_precision):>8}{_fmt(stats.neg_precision):>8}"
           f"{stats.in_cot:>8.2f}{stats.x_cot:>8}{stats.bank:>8}")
    return header + "\n" + row
