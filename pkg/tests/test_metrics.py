import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msstnet.metrics import (
    ConfusionMatrix,
    confusion,
    per_class_recall,
    read_predictions,
    uar,
    war,
    write_predictions,
    write_report,
)


def brute_war(counts):
    total = correct = 0
    for i in range(len(counts)):
        for j in range(len(counts)):
            total += counts[i][j]
            if i == j:
                correct += counts[i][j]
    return 100.0 * correct / total


def brute_uar(counts):
    recalls = []
    for i in range(len(counts)):
        row = sum(counts[i])
        if row:
            recalls.append(counts[i][i] / row)
    return 100.0 * sum(recalls) / len(recalls)


def test_identity_gives_diagonal():
    cm = confusion([0, 1, 2, 1], [0, 1, 2, 1], 3)
    assert np.array_equal(cm.counts, np.diag([1, 2, 1]))


def test_empty_is_zero_matrix():
    cm = confusion([], [], 4)
    assert cm.counts.shape == (4, 4) and cm.total == 0


def test_six_item_hand_case():
    labels = [0, 0, 1, 1, 2, 2]
    preds = [0, 1, 1, 1, 0, 2]
    cm = confusion(preds, labels, 3)
    want = np.zeros((3, 3), dtype=int)
    for t, p in zip(labels, preds):
        want[t, p] += 1
    assert np.array_equal(cm.counts, want)
    assert cm.counts.tolist() == [[1, 1, 0], [0, 2, 0], [1, 0, 1]]


def test_errors():
    with pytest.raises(ValueError, match="predictions"):
        confusion([0], [0, 1], 2)
    with pytest.raises(ValueError, match="outside"):
        confusion([0, 2], [0, 1], 2)
    with pytest.raises(ValueError, match="outside"):
        confusion([0, 0], [-1, 1], 2)
    with pytest.raises(ValueError):
        war(confusion([], [], 2))
    with pytest.raises(ValueError):
        uar(confusion([], [], 2))


def test_perfect_predictions():
    cm = confusion([0, 1, 1, 2], [0, 1, 1, 2], 3)
    assert war(cm) == 100.0 and uar(cm) == 100.0


def test_hand_case_two_classes():
    # true counts (3, 1), correct (2, 1)
    cm = confusion([0, 0, 1, 1], [0, 0, 0, 1], 2)
    assert war(cm) == 75.0
    assert uar(cm) == pytest.approx((2 / 3 + 1) / 2 * 100, abs=1e-12)
    assert round(uar(cm), 2) == 83.33


def test_uniform_random_predictions_near_chance():
    r = np.random.default_rng(0)
    labels = r.integers(0, 5, 200_000)
    preds = r.integers(0, 5, 200_000)
    assert abs(war(confusion(preds, labels, 5)) - 20.0) < 0.5


def test_zero_support_excluded():
    cm = ConfusionMatrix(np.array([[2, 0, 0], [0, 0, 0], [1, 0, 1]]))
    assert np.isnan(per_class_recall(cm)[1])
    assert uar(cm) == pytest.approx(75.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6).flatmap(lambda c: st.lists(st.lists(st.integers(0, 50), min_size=c, max_size=c), min_size=c, max_size=c)))
def test_against_brute_force(counts):
    cm = ConfusionMatrix(np.array(counts, dtype=np.int64))
    if cm.total == 0:
        return
    assert abs(war(cm) - brute_war(counts)) < 1e-9
    assert abs(uar(cm) - brute_uar(counts)) < 1e-9
    assert 0 <= war(cm) <= 100 and 0 <= uar(cm) <= 100


@settings(max_examples=100, deadline=None)
@given(c=st.integers(1, 6), per=st.integers(1, 20), seed=st.integers(0, 2**32 - 1))
def test_balanced_uar_equals_war(c, per, seed):
    r = np.random.default_rng(seed)
    labels = np.repeat(np.arange(c), per)
    preds = r.integers(0, c, len(labels))
    cm = confusion(preds, labels, c)
    assert abs(uar(cm) - war(cm)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(c=st.integers(2, 6), n=st.integers(1, 60), seed=st.integers(0, 2**32 - 1))
def test_relabel_invariance(c, n, seed):
    r = np.random.default_rng(seed)
    labels, preds = r.integers(0, c, n), r.integers(0, c, n)
    perm = r.permutation(c)
    a = confusion(preds, labels, c)
    b = confusion(perm[preds], perm[labels], c)
    assert war(a) == war(b)
    assert abs(uar(a) - uar(b)) < 1e-12


def test_predictions_round_trip(tmp_path):
    p = tmp_path / "pred.csv"
    write_predictions(p, ["a", "b", "c"], [0, 1, 2], [0, 2, 2])
    assert p.read_text().splitlines()[0] == "clip_id,true_label,pred_label"
    ids, labels, preds = read_predictions(p)
    assert ids == ["a", "b", "c"] and labels.tolist() == [0, 1, 2] and preds.tolist() == [0, 2, 2]


def test_report_file(tmp_path):
    p = tmp_path / "report.csv"
    summary = write_report(p, confusion([0, 0, 1, 1], [0, 0, 0, 1], 2))
    lines = p.read_text().splitlines()
    assert lines[0] == "true\\pred,0,1"
    assert lines[1:3] == ["0,2,1", "1,0,1"]
    assert lines[-1] == "# " + summary
    assert summary.startswith("WAR=75.0000,UAR=83.3333,n=4")
