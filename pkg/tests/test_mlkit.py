import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdnlab.mlkit import (
    KINDS,
    AdaBoost,
    Dataset,
    DecisionTree,
    DegenerateLabels,
    EvalReport,
    FeatureMismatch,
    ModelFormatError,
    RandomForest,
    Scaler,
    SplitSpec,
    SplitTooSmall,
    auc,
    correlation_select,
    evaluate,
    evaluate_scores,
    fit,
    load_model,
    pearson,
    roc_curve,
    save_model,
    split,
    split_indices,
    tree_seeds,
)
from sdnlab.mlkit.models import TrainedModel


def blobs(n=200, d=4, seed=0, gap=3.0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.normal(size=(n, d)) + gap * y[:, None] * (np.arange(d) < 2)
    return Dataset(tuple(f"f{i}" for i in range(d)), X, y)


# --- split ---------------------------------------------------------------

def test_split_sizes_for_867_rows():
    y = np.array([0] * 433 + [1] * 434)
    tr, va, te = split_indices(y, SplitSpec(seed=1))
    assert 130 <= len(te) <= 132
    assert len(tr) + len(va) + len(te) == 867
    assert not (set(tr) & set(va) or set(tr) & set(te) or set(va) & set(te))


def test_split_is_seeded_and_stratified():
    ds = blobs(300)
    a = split_indices(ds.y, SplitSpec(seed=5))
    b = split_indices(ds.y, SplitSpec(seed=5))
    c = split_indices(ds.y, SplitSpec(seed=6))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[0], c[0])
    for part in split(ds, SplitSpec(seed=5)):
        assert abs(part.y.mean() - 0.5) < 0.05


def test_split_rejects_empty_parts():
    with pytest.raises(SplitTooSmall):
        split_indices(np.array([0, 1] * 10), SplitSpec(1.0, 0.0, 0.0))
    with pytest.raises(SplitTooSmall):
        split_indices(np.array([0, 1]), SplitSpec())
    with pytest.raises(ValueError):
        SplitSpec(0.5, 0.5, 0.5)


# --- scaler and selection -------------------------------------------------

def test_scaler_passes_constant_features_through():
    X = np.array([[1.0, 7.0], [3.0, 7.0]])
    s = Scaler.fit(X)
    assert list(s.constant) == [False, True]
    assert np.allclose(s.transform(X), [[-1.0, 7.0], [1.0, 7.0]])


def test_pearson_label_with_itself():
    y = np.array([0, 1, 1, 0, 1])
    assert pearson(y, y) == 1.0
    assert np.isnan(pearson(y, np.ones(5)))


def test_noise_and_constant_columns_not_selected():
    base = blobs(400, d=2, gap=2.0)
    rng = np.random.default_rng(11)
    noise = rng.normal(size=len(base))
    X = np.column_stack([base.X, noise, np.full(len(base), 3.0), np.where(np.arange(400) < 5, np.nan, 1.0)])
    ds = Dataset(("f0", "f1", "noise", "const", "partial"), X, base.y)
    sel = correlation_select(ds, 0.3)
    assert sel.selected == ("f0", "f1")
    assert sel.matrix.shape == (6, 6)
    assert sel.matrix[-1, -1] == 1.0
    assert np.isnan(sel.label_correlation()["const"])


def test_named_features_are_selected_on_generated_data(probe_split):
    train = probe_split[0]
    sel = correlation_select(train, 0.3)
    named = {"average_rtt", "packet_loss", "bu_ratio", "bits_per_second"}
    assert named <= set(sel.selected)
    r = sel.label_correlation()
    assert all(abs(r[n]) >= 0.7 for n in named)


# --- models -----------------------------------------------------------------

def test_logreg_separates_a_line():
    X = np.linspace(-3, 3, 40)[:, None]
    ds = Dataset(("x",), X[np.abs(X[:, 0]) > 0.05], (X[np.abs(X[:, 0]) > 0.05, 0] > 0).astype(int))
    m = fit("logreg", ds)
    assert (m.predict(ds) == ds.y).all()


def test_logreg_zero_weights_give_half():
    ds = blobs(20)
    m = fit("logreg", ds, {"epochs": 0})
    assert np.allclose(m.predict_proba(ds), 0.5)


def test_single_class_rejected():
    ds = blobs(20)
    with pytest.raises(DegenerateLabels):
        fit("knn", ds.subset(np.flatnonzero(ds.y == 1)))


def test_knn_unanimous_neighbours():
    X = np.array([[0.0], [0.1], [0.2], [0.3], [0.4], [5.0], [5.1]])
    y = np.array([1, 1, 1, 1, 1, 0, 0])
    m = fit("knn", Dataset(("x",), X, y))
    assert m.predict_proba(np.array([[0.2]]))[0] == 1.0


def test_adaboost_single_stump_hand_evaluation():
    ab = AdaBoost(1)
    ab.stumps = [(0, 0.5, 1, 0.8)]
    X = np.array([[0.0], [1.0]])
    assert list(ab.decision(X)) == [-0.8, 0.8]
    assert list(ab.proba(X)) == [0.0, 1.0]
    ab.stumps = [(0, 0.5, -1, 0.8)]
    assert list(ab.proba(X)) == [1.0, 0.0]


def test_adaboost_learns_threshold():
    X = np.arange(10.0)[:, None]
    y = (X[:, 0] > 4.5).astype(int)
    ab = AdaBoost(5).fit(X, y)
    j, thr, pol, _ = ab.stumps[0]
    assert (j, thr, pol) == (0, 4.5, 1)


def test_forest_of_one_unbagged_tree_is_that_tree():
    ds = blobs(120, d=5, gap=1.0)
    Xs = Scaler.fit(ds.X).transform(ds.X)
    rf = RandomForest(n_trees=1, bootstrap=False).fit(Xs, ds.y, seed=9)
    tree = DecisionTree(max_features=2).fit(Xs, ds.y, np.random.default_rng(tree_seeds(9, 1)[0]))
    assert np.array_equal(rf.proba(Xs), tree.predict(Xs).astype(float))
    assert rf.trees[0].params() == tree.params()


@pytest.mark.parametrize("kind", KINDS)
def test_models_are_deterministic_and_learn(kind):
    train, _, test = split(blobs(300), SplitSpec(seed=2))
    a = fit(kind, train, seed=4)
    b = fit(kind, train, seed=4)
    pa, pb = a.predict_proba(test), b.predict_proba(test)
    assert np.array_equal(pa, pb)
    assert ((pa >= 0) & (pa <= 1)).all()
    assert evaluate(a, test).f1 > 0.85


def test_feature_mismatch():
    m = fit("logreg", blobs(40))
    with pytest.raises(FeatureMismatch):
        m.predict_proba({"f0": 1.0, "f1": 2.0, "f2": 0.0})
    with pytest.raises(FeatureMismatch):
        m.predict_proba({"f0": 1.0, "f1": 2.0, "f2": 0.0, "f3": None})
    with pytest.raises(FeatureMismatch):
        m.predict_proba(np.zeros((1, 3)))
    assert 0 <= m.predict_proba({"f0": 1.0, "f1": 2.0, "f2": 0.0, "f3": 1.0})[0] <= 1


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 100) | st.floats(-100, -0.1), st.floats(-1e3, 1e3))
def test_logreg_decisions_invariant_under_affine_rescaling(a, b):
    ds = blobs(80, d=3, seed=3, gap=1.5)
    X2 = ds.X.copy()
    X2[:, 1] = a * X2[:, 1] + b
    m1 = fit("logreg", ds)
    m2 = fit("logreg", Dataset(ds.feature_names, X2, ds.y))
    p1, p2 = m1.predict_proba(ds), m2.predict_proba(X2)
    decided = np.abs(p1 - 0.5) > 1e-6
    assert np.array_equal((p1 >= 0.5)[decided], (p2 >= 0.5)[decided])


# --- metrics ----------------------------------------------------------------

def test_table_cross_check():
    r = EvalReport.from_confusion(tn=61, fp=3, fn=2, tp=66)
    assert round(r.precision, 4) == 0.9565
    assert round(r.recall, 4) == 0.9706
    assert round(r.f1, 4) == 0.9635
    assert r.n == 132


def test_perfect_and_reversed_scores():
    y = np.array([0, 0, 1, 1, 1])
    perfect = evaluate_scores(y, y.astype(float))
    assert perfect.precision == perfect.recall == perfect.f1 == perfect.auc == 1.0
    assert evaluate_scores(y, 1.0 - y).auc == 0.0


def test_roc_has_sentinels_and_corners():
    pts = roc_curve([0, 1, 1, 0], [0.2, 0.7, 0.4, 0.4])
    thresholds = [p[0] for p in pts]
    assert 1.0 in thresholds and 0.0 in thresholds
    assert pts[0][1:] == (0.0, 0.0) and pts[-1][1:] == (1.0, 1.0)


def mann_whitney(y, s):
    pos = [v for v, t in zip(s, y) if t]
    neg = [v for v, t in zip(s, y) if not t]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


scores = st.lists(st.tuples(st.booleans(), st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.6, 0.9, 1.0])),
                  min_size=2, max_size=40).filter(lambda v: 0 < sum(t for t, _ in v) < len(v))


@settings(max_examples=150, deadline=None)
@given(scores)
def test_auc_matches_rank_statistic_and_monotone_transforms(pairs):
    y = [int(t) for t, _ in pairs]
    s = np.array([v for _, v in pairs])
    a = auc(roc_curve(y, s))
    assert a == pytest.approx(mann_whitney(y, s))
    assert auc(roc_curve(y, s ** 3)) == pytest.approx(a)
    assert auc(roc_curve(y, 1 / (1 + np.exp(-(4 * s - 2))))) == pytest.approx(a)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(1, 50))
def test_f1_between_precision_and_recall(tn, fp, fn, tp):
    r = EvalReport.from_confusion(tn, fp, fn, tp)
    assert min(r.precision, r.recall) - 1e-12 <= r.f1 <= max(r.precision, r.recall) + 1e-12
    assert r.n == tn + fp + fn + tp


def test_confusion_text_layout():
    text = EvalReport.from_confusion(61, 3, 2, 66).confusion_text().splitlines()
    assert text[0].split() == ["Low", "High"]
    assert text[1].split()[-2:] == ["61", "3"]
    assert text[2].split()[-2:] == ["2", "66"]


# --- persistence --------------------------------------------------------------

@pytest.mark.parametrize("kind", KINDS)
def test_save_load_round_trip(tmp_path, kind):
    train, _, test = split(blobs(200), SplitSpec(seed=0))
    m = fit(kind, train, seed=1)
    save_model(m, tmp_path / "m.json")
    again = load_model(tmp_path / "m.json")
    assert isinstance(again, TrainedModel) and again.kind == kind
    assert np.array_equal(m.predict_proba(test), again.predict_proba(test))


def test_corrupt_model_files(tmp_path):
    m = fit("logreg", blobs(40))
    path = tmp_path / "m.json"
    save_model(m, path)
    text = path.read_text()
    (tmp_path / "cut.json").write_text(text[: len(text) // 2])
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "cut.json")
    doc = json.loads(text)
    doc["version"] = 99
    (tmp_path / "v.json").write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "v.json")
    doc["version"] = 1
    doc["scaler"]["mean"] = doc["scaler"]["mean"][:1]
    (tmp_path / "w.json").write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "w.json")
