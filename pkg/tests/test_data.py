import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abstain_gp.base import ConstantModel, predict_labels
from abstain_gp.data import (
    ErrorObservations,
    LabeledDataset,
    RegionPredicate,
    Standardizer,
    convert_uci_wifi,
    load_csv,
    load_error_csv,
    make_error_observations,
    region_filter,
    sample_fraction,
    sample_size,
    write_csv,
    write_error_csv,
)
from abstain_gp.errors import ConfigError, DataError
from abstain_gp.rules import RuleClassifier, parse_rules

from conftest import REPORTED_RULE


def _ds(rows, labels, names=("C1", "C2")):
    return LabeledDataset(np.array(rows, float), np.array(labels), names)


def test_load_csv_single_row(tmp_path):
    p = tmp_path / "one.csv"
    p.write_text("a,class\n1.0,4\n")
    ds = load_csv(p, "class", "4")
    np.testing.assert_array_equal(ds.features, [[1.0]])
    np.testing.assert_array_equal(ds.labels, [1])
    assert ds.feature_names == ("a",)
    assert load_csv(p, "class", "3").labels.tolist() == [0]


def test_load_csv_preserves_order_and_numeric_label_match(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,class,y\n1,4.0,2\n3,1,4\n5,4,6\n")
    ds = load_csv(p, "class", "4")
    assert ds.labels.tolist() == [1, 0, 1]
    np.testing.assert_array_equal(ds.features, [[1, 2], [3, 4], [5, 6]])
    assert ds.feature_names == ("x", "y")


def test_load_csv_errors(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        load_csv(tmp_path / "missing.csv", "class", "4")
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataError, match="label column"):
        load_csv(p, "class", "4")
    p.write_text("a,class\n1,4\nfoo,3\n")
    with pytest.raises(DataError, match=r"row 3, column 'a'"):
        load_csv(p, "class", "4")


def test_convert_uci_wifi(tmp_path):
    raw = tmp_path / "wifi_localization.txt"
    raw.write_text("-64\t-56\t-61\t-66\t-71\t-82\t-81\t1\n"
                   "-68\t-57\t-61\t-65\t-71\t-85\t-85\t4\n")
    out = tmp_path / "wifi.csv"
    convert_uci_wifi(raw, out)
    ds = load_csv(out, "class", "4")
    assert ds.feature_names == tuple(f"C{j}" for j in range(1, 8))
    assert ds.labels.tolist() == [0, 1]
    assert ds.features[1, 1] == -57


def test_dataset_invariants():
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((2, 1)), np.array([0, 1, 1]), ("a",))
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((2, 1)), np.array([0, 2]), ("a",))
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((1, 2)), np.array([0]), ("a", "a"))


def test_region_filter_strict_boundary():
    ds = _ds([[-60, 0], [-40, 1], [-50, 2]], [0, 1, 0])
    out = region_filter(ds, RegionPredicate.parse("C1>-50"))
    np.testing.assert_array_equal(out.features, [[-40, 1]])


def test_region_filter_empty_and_unknown():
    ds = _ds([[-60, 0], [-40, 1]], [0, 1])
    assert len(region_filter(ds, RegionPredicate("C1", ">", 100))) == 0
    with pytest.raises(DataError, match="unknown feature"):
        region_filter(ds, RegionPredicate("C9", "<", 0))


def test_region_predicate_parse():
    p = RegionPredicate.parse(" C2 < -60 ")
    assert (p.feature, p.op, p.threshold) == ("C2", "<", -60.0)
    assert RegionPredicate.parse(str(p)) == p
    with pytest.raises(ConfigError):
        RegionPredicate.parse("C2 == 3")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-80, -20), min_size=1, max_size=40),
       st.sampled_from(["<", ">", "<=", ">="]), st.integers(-80, -20))
def test_region_filter_idempotent(values, op, thr):
    ds = _ds([[v, 0] for v in values], [0] * len(values))
    pred = RegionPredicate("C1", op, thr)
    once = region_filter(ds, pred)
    twice = region_filter(once, pred)
    np.testing.assert_array_equal(once.features, twice.features)


def test_sample_fraction_sizes_and_identity():
    rng = np.random.default_rng(3)
    ds = _ds(rng.normal(size=(2000, 2)), rng.integers(0, 2, 2000))
    half = sample_fraction(ds, 0.5, seed=11)
    assert len(half) == 1000
    for seed in (0, 1, 99):
        same = sample_fraction(ds, 1.0, seed)
        np.testing.assert_array_equal(same.features, ds.features)
        np.testing.assert_array_equal(same.labels, ds.labels)
    assert len(sample_fraction(_ds([[0, 0]] * 7, [0] * 7), 0.5, 0)) == 3


def test_sample_fraction_deterministic_and_seed_sensitive():
    ds = _ds(np.arange(200).reshape(100, 2), [0, 1] * 50)
    a = sample_fraction(ds, 0.3, seed=5)
    b = sample_fraction(ds, 0.3, seed=5)
    c = sample_fraction(ds, 0.3, seed=6)
    np.testing.assert_array_equal(a.features, b.features)
    assert not np.array_equal(a.features, c.features)


def test_sample_fraction_rejects_bad_fraction():
    ds = _ds([[0, 0]], [0])
    for frac in (0.0, -0.1, 1.5, float("nan")):
        with pytest.raises(ConfigError):
            sample_fraction(ds, frac, 0)


def test_sample_size_bounds():
    ds = _ds([[0, 0]] * 5, [0] * 5)
    assert len(sample_size(ds, 5, 1)) == 5
    with pytest.raises(DataError):
        sample_size(ds, 6, 1)


def test_error_observations_perfect_and_inverted():
    ds0 = _ds([[0, 0], [1, 1]], [0, 0])
    ds1 = _ds([[0, 0], [1, 1]], [1, 1])
    assert make_error_observations(ds0, ConstantModel(0)).errors.tolist() == [0, 0]
    assert make_error_observations(ds1, ConstantModel(0)).errors.tolist() == [1, 1]
    with pytest.raises(DataError):
        make_error_observations(ds0.take([]), ConstantModel(0))


def test_error_observations_reported_rule_by_hand():
    # Each row checked by hand against
    # [C2 <= -53] or ([C2 <= -52] and [C1 <= -49]).
    rows = [
        [-66, -63],  # first disjunct -> predicts 1; truth 0 -> error
        [-55, -64],  # first disjunct -> predicts 1; truth 1 -> ok
        [-50, -52],  # second disjunct (C1 -50 <= -49) -> 1; truth 1 -> ok
        [-45, -52],  # C1 -45 > -49, C2 -52 > -53 -> 0; truth 1 -> error
        [-40, -48],  # no disjunct -> 0; truth 0 -> ok
        [-62, -53],  # C2 == -53 satisfies <= -> 1; truth 0 -> error
    ]
    truth = [0, 1, 1, 1, 0, 0]
    ds = _ds(rows, truth)
    base = RuleClassifier(parse_rules(REPORTED_RULE), ds.feature_names)
    obs = make_error_observations(ds, base)
    assert obs.errors.tolist() == [1, 0, 0, 1, 0, 1]
    np.testing.assert_array_equal(obs.inputs, ds.features)


class _Flipped:
    def __init__(self, base):
        self.base = base

    def predict(self, x):
        return 1 - self.base.predict(x)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-70, -30), st.integers(-70, -40),
                          st.integers(0, 1)), min_size=1, max_size=30))
def test_error_bits_flip_and_accuracy_identity(rows):
    ds = _ds([r[:2] for r in rows], [r[2] for r in rows])
    base = RuleClassifier(parse_rules(REPORTED_RULE), ds.feature_names)
    obs = make_error_observations(ds, base)
    flipped = make_error_observations(ds, _Flipped(base))
    np.testing.assert_array_equal(flipped.errors, 1 - obs.errors)
    acc = np.mean(predict_labels(base, ds.features) == ds.labels)
    assert np.mean(obs.errors) == pytest.approx(1 - acc)


def test_csv_round_trips(tmp_path):
    rng = np.random.default_rng(0)
    ds = _ds(rng.normal(size=(20, 2)), rng.integers(0, 2, 20))
    write_csv(ds, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv", "label", "1")
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)
    obs = ErrorObservations(ds.features, ds.labels, ds.feature_names)
    write_error_csv(obs, tmp_path / "e.csv")
    eback = load_error_csv(tmp_path / "e.csv")
    np.testing.assert_array_equal(eback.inputs, obs.inputs)
    np.testing.assert_array_equal(eback.errors, obs.errors)
    assert eback.feature_names == obs.feature_names


def test_standardizer():
    X = np.array([[1.0, 5.0], [3.0, 5.0]])
    s = Standardizer.fit(X)
    np.testing.assert_allclose(s.transform(X), [[-1, 0], [1, 0]])
    s2 = Standardizer.from_dict(s.to_dict())
    np.testing.assert_array_equal(s2.transform(X), s.transform(X))
