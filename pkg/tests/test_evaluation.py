import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abstain_gp import gp
from abstain_gp.abstain import VAR_DISABLED, Decision, ThresholdPolicy, Verdict
from abstain_gp.base import ConstantModel, predict_labels
from abstain_gp.baseline import LogisticFit
from abstain_gp.data import ErrorObservations, LabeledDataset
from abstain_gp.errors import DataError
from abstain_gp.evaluation import (
    SWEEP_COLUMNS,
    decisions_for,
    metrics_from_arrays,
    selective_metrics,
    sweep,
    sweep_arrays,
)
from abstain_gp.kernel import KernelSpec

S = gp.PosteriorSummary(0.0, 0.0)


def _d(verdict, label, base=0):
    return Decision(verdict, label, base, S)


def test_all_accepted_two_wrong():
    labels = [0, 1] * 5
    finals = list(labels)
    finals[0], finals[3] = 1, 0
    m = selective_metrics([_d(Verdict.ACCEPT, f) for f in finals], labels)
    assert m.coverage == 1.0
    assert m.selective_risk == pytest.approx(0.2)
    assert m.accuracy == pytest.approx(0.8)
    assert (m.n_total, m.n_accepted) == (10, 10)


def test_all_abstained_is_undefined():
    m = selective_metrics([_d(Verdict.ABSTAIN, None)] * 3, [0, 1, 1])
    assert m.coverage == 0.0
    assert m.selective_risk is None and m.accuracy is None
    assert m.precision is None and m.recall is None


def test_four_point_confusion_counts():
    decisions = [_d(Verdict.ACCEPT, 1), _d(Verdict.FLIP, 1),
                 _d(Verdict.ABSTAIN, None), _d(Verdict.ACCEPT, 0)]
    m = selective_metrics(decisions, [1, 0, 1, 0])
    assert m.coverage == 0.75
    assert m.accuracy == pytest.approx(2 / 3)
    assert m.precision == pytest.approx(1 / 2)
    assert m.recall == 1.0
    assert m.selective_risk == pytest.approx(1 / 3)


def test_precision_recall_undefined_markers():
    m = metrics_from_arrays([True, True], [0, 0], [0, 0])
    assert m.precision is None and m.recall is None and m.accuracy == 1.0


def test_metric_input_errors():
    with pytest.raises(DataError):
        selective_metrics([], [])
    with pytest.raises(DataError):
        selective_metrics([_d(Verdict.ACCEPT, 1)], [1, 0])


@pytest.fixture(scope="module")
def problem():
    rng = np.random.default_rng(11)
    X = rng.uniform(0, 3, size=(80, 2))
    y = (X[:, 0] + 0.3 * rng.normal(size=80) > 1.5).astype(int)
    test = LabeledDataset(X, y, ("a", "b"))
    base = ConstantModel(0)
    eps = (predict_labels(base, X) != y).astype(int)
    fit = gp.fit_laplace(ErrorObservations(X[:40], eps[:40]), KernelSpec(3.0, 0.5))
    return base, fit, test


def test_never_abstain_grid(problem):
    base, fit, test = problem
    res = sweep(base, fit, test, [0.0], [VAR_DISABLED])
    assert len(res.rows) == 1 and res.rows[0].metrics.coverage == 1.0


def test_singleton_sweep_matches_direct(problem):
    base, fit, test = problem
    for mt, vt in ((0.5, 2.0), (1.0, 3.0), (2.0, VAR_DISABLED)):
        row = sweep(base, fit, test, [mt], [vt]).rows[0]
        direct = selective_metrics(
            decisions_for(base, fit, test.features, ThresholdPolicy(mt, vt)), test.labels)
        assert row.metrics == direct


def test_full_coverage_risk_is_flip_augmented_error_rate(problem):
    base, fit, test = problem
    m = sweep(base, fit, test, [0.0], [VAR_DISABLED]).rows[0].metrics
    mean, _ = gp.predict_many(fit, test.features)
    pred = predict_labels(base, test.features)
    aug = np.where(mean > 0, 1 - pred, pred)
    assert m.selective_risk == np.mean(aug != test.labels)


def test_sweep_order_bounds_and_monotone_coverage(problem):
    base, fit, test = problem
    mg = np.linspace(0, 4, 21)
    vg = [0.5, 1.0, VAR_DISABLED]
    res = sweep(base, fit, test, mg, vg)
    assert [(r.mean_threshold, r.var_threshold) for r in res.rows] == [
        (float(m), float(v)) for m in mg for v in vg]
    for r in res.rows:
        for key in ("coverage", "accuracy", "precision", "recall", "selective_risk"):
            val = getattr(r.metrics, key)
            assert val is None or 0.0 <= val <= 1.0
        if r.metrics.accuracy is not None:
            assert r.metrics.accuracy + r.metrics.selective_risk == pytest.approx(1.0)
    cov = [r.metrics.coverage for r in res.rows if r.var_threshold == VAR_DISABLED]
    assert all(b <= a for a, b in zip(cov, cov[1:]))


def test_sweep_is_bit_identical(problem):
    base, fit, test = problem
    a = sweep(base, fit, test, np.linspace(0, 3, 7), [1.0, VAR_DISABLED])
    b = sweep(base, fit, test, np.linspace(0, 3, 7), [1.0, VAR_DISABLED])
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()


def test_csv_and_json_format(problem):
    base, fit, test = problem
    res = sweep(base, fit, test, [0.0, 100.0], [VAR_DISABLED])
    rows = list(csv.reader(io.StringIO(res.to_csv())))
    assert tuple(rows[0]) == SWEEP_COLUMNS
    last = dict(zip(rows[0], rows[2]))
    assert last["coverage"] == "0.0" and last["accuracy"] == ""
    assert last["selective_risk"] == "" and last["n_accepted"] == "0"
    payload = json.loads(res.to_json())
    assert payload["flip"] is True
    assert payload["rows"][1]["accuracy"] is None
    assert float(rows[1][1]) == VAR_DISABLED


def test_logistic_error_model_has_zero_variance(problem):
    _, _, test = problem
    fit = LogisticFit(np.array([-1.0, 1.0, 0.0]), converged=True)
    res = sweep(ConstantModel(0), fit, test, [0.0], [1e-9])
    assert res.rows[0].metrics.coverage == 1.0


def test_empty_grid_rejected(problem):
    base, fit, test = problem
    with pytest.raises(DataError):
        sweep(base, fit, test, [], [1.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
    st.lists(st.floats(-5, 5), min_size=n, max_size=n),
    st.lists(st.floats(0, 5), min_size=n, max_size=n))))
def test_selective_risk_identities(data):
    base, labels, mean, var = (np.array(v) for v in data)
    res = sweep_arrays(base, mean, var, labels, [0.0, 0.5, 1.5], [0.5, VAR_DISABLED])
    for r in res.rows:
        m = r.metrics
        assert m.coverage == m.n_accepted / m.n_total
        if m.n_accepted == 0:
            assert m.accuracy is None and m.selective_risk is None
        else:
            assert m.selective_risk == pytest.approx(1 - m.accuracy, abs=1e-15)
