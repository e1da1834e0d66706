import numpy as np
import pytest

from conceptchain.corpus import DatasetManifest
from conceptchain.rationale import MCoTRecord, NEGATIVE, POSITIVE, Step
from conceptchain.salience import Probe, train_probe
from conceptchain.supervisors import (eval_cbm, eval_dt, eval_nbc,
                                      format_reports, format_stats,
                                      interpretability, mcot_stats)


def _record(instance_id, steps):
    return MCoTRecord(instance_id=instance_id, answer="", complete=True,
                      steps=[Step(c, p) for p, c in steps])


# -- CBM ------------------------------------------------------------------------

def test_cbm_tri_accuracy_100(tri, tri_annotated):
    probe = train_probe(tri.scores, tri.manifest)
    report = eval_cbm(probe, tri.scores, tri.manifest, tri.annotations)
    assert report.accuracy == 100.0
    assert 0.0 <= report.interpretability <= 100.0


def test_cbm_zero_probe_interpretability_is_negative_rate(tri):
    probe = Probe(weights=np.zeros((3, 4)), biases=np.zeros(3))
    report = eval_cbm(probe, tri.scores, tri.manifest, tri.annotations)
    negative_rate = 100.0 * float((tri.annotations == 0).mean())
    assert report.interpretability == pytest.approx(negative_rate)


def test_cbm_without_gt_has_no_interpretability(tri):
    probe = train_probe(tri.scores, tri.manifest)
    report = eval_cbm(probe, tri.scores, tri.manifest)
    assert report.interpretability is None


# -- DT --------------------------------------------------------------------------

def test_dt_with_gt_annotations_is_exact(tri):
    report = eval_dt(tri.annotations, tri.manifest, tri.annotations)
    assert report.accuracy == 100.0
    assert report.interpretability == 100.0


def test_dt_tri_refined(tri, tri_annotated):
    report = eval_dt(tri_annotated.refined, tri.manifest, tri.annotations)
    assert report.accuracy == 100.0
    assert report.interpretability == 100.0


def test_dt_counts_wrong_path_concepts():
    manifest = DatasetManifest([f"x{i}" for i in range(4)],
                               np.array([0, 0, 1, 1]), ["a", "b"],
                               ["train"] * 4)
    annotations = np.array([[1], [1], [0], [0]], dtype=np.uint8)
    gt = np.array([[1], [0], [0], [0]], dtype=np.uint8)  # one annotation wrong
    report = eval_dt(annotations, manifest, gt)
    assert report.accuracy == 100.0
    assert report.interpretability == pytest.approx(75.0)


def test_dt_per_instance_switch_changes_weighting():
    # two test instances with path lengths 1 and 3 and different hit rates
    manifest = DatasetManifest(
        [f"x{i}" for i in range(8)] + ["t0", "t1"],
        np.array([0, 0, 1, 1, 2, 2, 3, 3, 0, 3]),
        ["a", "b", "c", "d"],
        ["train"] * 8 + ["test"] * 2)
    annotations = np.array([
        [1, 0, 0], [1, 0, 0],
        [0, 1, 0], [0, 1, 0],
        [0, 0, 1], [0, 0, 1],
        [0, 0, 0], [0, 0, 0],
        [1, 0, 0], [0, 0, 0]], dtype=np.uint8)
    gt = annotations.copy()
    gt[8, 0] = 0  # the short-path instance's only concept is wrong
    micro = eval_dt(annotations, manifest, gt)
    macro = eval_dt(annotations, manifest, gt, per_instance_average=True)
    assert micro.interpretability != macro.interpretability


# -- NBC -------------------------------------------------------------------------

def test_nbc_tri_accuracy_100(tri, tri_annotated):
    report = eval_nbc(tri_annotated.refined, tri.manifest, tri.annotations)
    assert report.accuracy == 100.0
    assert report.interpretability is not None


def test_nbc_equal_conditionals_count_as_negative_polarity():
    # concept 1 has identical conditionals in both classes: log-ratio 0
    manifest = DatasetManifest([f"x{i}" for i in range(4)],
                               np.array([0, 0, 1, 1]), ["a", "b"],
                               ["train"] * 4)
    annotations = np.array([[1, 1], [1, 1], [0, 1], [0, 1]], dtype=np.uint8)
    gt_all_on = np.ones_like(annotations)
    gt_all_off = np.zeros_like(annotations)
    on = eval_nbc(annotations, manifest, gt_all_on)
    off = eval_nbc(annotations, manifest, gt_all_off)
    # concept 0 is supportive only for predicted class a; concept 1 is always
    # refutational. gt=1 everywhere: agreements are (1,0)+(0,0) of 8 -> 25%;
    # gt=0 everywhere: (0,1)+(1,1) of 8 -> 75%.
    assert on.interpretability == pytest.approx(25.0)
    assert off.interpretability == pytest.approx(75.0)


def test_nbc_smoothing_prevents_zero_cells(tri, tri_annotated):
    report = eval_nbc(tri_annotated.refined, tri.manifest)
    assert np.isfinite(report.accuracy)


# -- rationale interpretability -----------------------------------------------------

def test_interpretability_all_correct(tri):
    records = [_record("A_000", [(POSITIVE, 0), (NEGATIVE, 2)])]
    gt = tri.annotations  # A_000 has 1100
    assert interpretability(records, gt, tri.manifest) == 100.0


def test_interpretability_half_correct(tri):
    records = [_record("A_000", [(POSITIVE, 0), (NEGATIVE, 1)])]
    assert interpretability(records, tri.annotations, tri.manifest) == 50.0


def test_interpretability_pipeline_self_consistency(tri, tri_annotated,
                                                    tri_generated):
    score = interpretability(tri_generated.records, tri_annotated.refined,
                             tri.manifest)
    assert score == 100.0


def test_interpretability_empty_is_absent(tri):
    assert interpretability([], tri.annotations, tri.manifest) is None
    assert interpretability([_record("A_000", [])], tri.annotations,
                            tri.manifest) is None


def test_unmatched_clauses_count_against(tri):
    records = [_record("A_000", [(POSITIVE, 0)])]
    score = interpretability(records, tri.annotations, tri.manifest,
                             unmatched_total=1)
    assert score == 50.0


# -- chain statistics -----------------------------------------------------------------

def test_stats_single_positive_record(tri):
    records = [_record("A_000", [(POSITIVE, 0)])]
    stats = mcot_stats(records, tri.annotations, tri.bank, tri.manifest)
    assert stats.pos_precision == 100.0
    assert stats.neg_precision is None
    assert stats.in_cot == 1.0
    assert stats.x_cot == 1
    assert stats.bank == 4


def test_stats_tri_full_run(tri, tri_generated):
    stats = tri_generated.stats
    assert stats.in_cot == 2.0
    assert stats.x_cot == 4
    assert stats.bank == 4
    assert stats.pos_precision == 100.0
    assert stats.neg_precision is None  # noiseless run never refutes


def test_stats_x_cot_monotone(tri):
    records = []
    last = 0
    for c in (0, 0, 1, 2):
        records.append(_record("A_000", [(POSITIVE, c)]))
        stats = mcot_stats(records, None, tri.bank)
        assert stats.x_cot >= last
        last = stats.x_cot
    assert last == 3


def test_stats_bounds(tri, tri_generated):
    stats = tri_generated.stats
    assert stats.x_cot <= stats.bank
    assert stats.in_cot <= stats.x_cot


# -- rendering ---------------------------------------------------------------------

def test_format_reports_renders_dash_for_absent():
    from conceptchain.supervisors import SupervisorReport
    text = format_reports([SupervisorReport("DT", 50.0, None)])
    assert "DT" in text and "-" in text and "50.00" in text


def test_format_stats_layout(tri, tri_generated):
    text = format_stats(tri_generated.stats)
    header, row = text.splitlines()
    assert header.split() == ["Pos", "Neg", "InCoT", "XCoT", "Bank"]
    assert row.split() == ["100.00", "-", "2.00", "4", "4"]
