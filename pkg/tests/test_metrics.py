import numpy as np
import pytest

import oracles
from leafstem.metrics import ROW_NAMES, ConfusionMatrix, SegmentationReport, aggregate, evaluate


def hand_matrix():
    # stem: TP 90, FP 10, FN 5; remaining 100 points are correct leaf
    return ConfusionMatrix(np.array([[90, 5], [10, 100]]))


def test_hand_built_confusion():
    r = SegmentationReport.from_confusion(hand_matrix())
    assert r.precision[0] == pytest.approx(0.9000, abs=5e-5)
    assert r.recall[0] == pytest.approx(0.9474, abs=5e-5)
    assert r.iou[0] == pytest.approx(0.8571, abs=5e-5)


def test_perfect_prediction():
    truth = np.array([0, 1, 1, 0, 1])
    r = evaluate(truth, truth)
    assert all(v == 1.0 for v in r.as_dict().values())


def test_all_leaf_against_all_stem():
    r = evaluate(np.ones(6, int), np.zeros(6, int))
    assert r.accuracy == 0
    assert r.iou[0] == 0
    assert r.precision[0] is None
    assert r.recall[1] is None
    assert r.miou == 0.0


def test_one_class_only_leaves_miou_undefined():
    r = evaluate(np.zeros(4, int), np.zeros(4, int))
    assert r.iou[0] == 1.0 and r.iou[1] is None
    assert r.miou is None


def test_matches_counting_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 300))
        truth, pred = rng.integers(0, 2, n), rng.integers(0, 2, n)
        got = evaluate(pred, truth).as_dict()
        want = oracles.measures(pred.tolist(), truth.tolist())
        for k in ROW_NAMES:
            assert (got[k] is None) == (want[k] is None)
            if got[k] is not None:
                assert abs(got[k] - want[k]) <= 1e-12


def test_class_swap_symmetry():
    rng = np.random.default_rng(1)
    truth, pred = rng.integers(0, 2, 200), rng.integers(0, 2, 200)
    a, b = evaluate(pred, truth), evaluate(1 - pred, 1 - truth)
    assert a.iou[0] == b.iou[1] and a.precision[1] == b.precision[0]
    assert a.accuracy == b.accuracy and a.miou == pytest.approx(b.miou, abs=1e-15)


def test_iou_bounded_by_precision_and_recall():
    rng = np.random.default_rng(2)
    for _ in range(100):
        r = evaluate(rng.integers(0, 2, 50), rng.integers(0, 2, 50))
        for c in (0, 1):
            if None not in (r.iou[c], r.precision[c], r.recall[c]):
                assert r.iou[c] <= min(r.precision[c], r.recall[c]) + 1e-15


def test_errors_and_unlabeled_flag():
    with pytest.raises(ValueError):
        evaluate([0, 1], [0])
    with pytest.raises(ValueError):
        evaluate([0, 255], [0, 1])
    with pytest.raises(ValueError):
        evaluate([0, 2], [0, 1])
    r = evaluate([0, 1, 1], [0, 255, 1], ignore_unlabeled=True)
    assert r.confusion.counts.sum() == 2 and r.accuracy == 1.0


def test_confusion_consistency():
    cm = hand_matrix()
    assert cm.tp(1) == cm.tn(0) and cm.fp(1) == cm.fn(0)
    with pytest.raises(ValueError):
        ConfusionMatrix(np.array([[1, -1], [0, 0]]))


def test_aggregate_micro():
    rng = np.random.default_rng(3)
    pairs = [(rng.integers(0, 2, n), rng.integers(0, 2, n)) for n in (30, 70, 5)]
    reports = [evaluate(p, t) for p, t in pairs]
    pooled = evaluate(np.concatenate([p for p, _ in pairs]), np.concatenate([t for _, t in pairs]))
    assert aggregate(reports).as_dict() == pooled.as_dict()
    assert aggregate(reports[:1]).as_dict() == reports[0].as_dict()
    same = aggregate([reports[0], reports[0]]).as_dict()
    for k, v in reports[0].as_dict().items():
        assert same[k] == pytest.approx(v, abs=1e-15)


def test_aggregate_macro_and_errors():
    a = evaluate([0, 0, 1, 1], [0, 1, 1, 1])
    b = evaluate([0, 1], [0, 1])
    macro = aggregate([a, b], mode="macro")
    assert macro["Acc"] == pytest.approx((0.75 + 1.0) / 2)
    with pytest.raises(ValueError):
        aggregate([])
    with pytest.raises(ValueError):
        aggregate([a], mode="weighted")


def test_text_report_uses_row_names_and_four_decimals():
    text = SegmentationReport.from_confusion(hand_matrix()).to_text()
    lines = text.strip().splitlines()
    assert [ln.split(": ")[0] for ln in lines] == list(ROW_NAMES)
    assert "Precision - Stem: 0.9000" in lines
    assert "Recall - Stem: 0.9474" in lines
    assert "IoU - Stem: 0.8571" in lines
    assert "n/a" in evaluate([1, 1], [1, 1]).to_text()
