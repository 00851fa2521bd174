import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pwln_interp.baselines import DecisionTree, NotFittedError
from pwln_interp.bounds import PwlnArchitecture
from pwln_interp.data import make_blobs
from pwln_interp.interpret import (
    EmptyQuerySetError,
    ZeroInitialEntropyWarning,
    agreement_rate,
    binary_entropy,
    build_interpreter,
    derive_seed,
    empirical_entropy_agreement,
    empirical_entropy_diff,
    entropy_diff_terms,
    fidelity,
    interpretability_score,
    query_black_box,
    run_interpretation,
    select_queries,
)
from pwln_interp.io_utils import dump_json
from pwln_interp.nn import TrainConfig, init_truncated_normal, train

probs_rows = st.integers(1, 30).flatmap(
    lambda n: st.tuples(
        st.lists(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3), min_size=n, max_size=n),
        st.lists(st.integers(0, 2), min_size=n, max_size=n),
    )
)


def _norm(rows):
    P = np.asarray(rows, dtype=float)
    return P / P.sum(axis=1, keepdims=True)


class LookupB:
    """Black box that labels each input row from a table, ignoring geometry."""

    fitted = True

    def __init__(self, X, labels, c):
        self.table = {x.tobytes(): int(y) for x, y in zip(X, labels)}
        self.class_count = c

    def predict_proba(self, X):
        out = np.full((len(X), self.class_count), 0.05 / (self.class_count - 1))
        for i, x in enumerate(np.asarray(X, dtype=float)):
            out[i, self.table[x.tobytes()]] = 0.95
        return out


# --- query ----------------------------------------------------------------------------


def test_query_ties_go_to_lowest_class():
    class Uniform:
        fitted = True

        def predict_proba(self, X):
            return np.full((len(X), 4), 0.25)

    y, _ = query_black_box(Uniform(), np.zeros((3, 2)))
    assert list(y) == [0, 0, 0]


def test_query_argmax_matches_scan():
    rng = np.random.default_rng(0)
    m = init_truncated_normal(PwlnArchitecture(2, (5,), 4), 1, std=1.0)
    X = rng.normal(size=(100, 2))
    y, P = query_black_box(m, X)
    for row, label in zip(P, y):
        best = 0
        for k in range(len(row)):
            if row[k] > row[best]:
                best = k
        assert label == best
    assert np.array_equal(y, query_black_box(m, X)[0])


def test_query_unfitted_model():
    with pytest.raises(NotFittedError):
        query_black_box(DecisionTree(2), np.zeros((1, 2)))


# --- estimators ---------------------------------------------------------------------


def test_diff_examples():
    P = np.array([[0.25, 0.75]] * 4)
    assert empirical_entropy_diff(P, np.zeros(4, dtype=int)) == pytest.approx(4 * -math.log2(0.5))
    assert entropy_diff_terms(np.array([[0.2, 0.8]]), [1])[0] == 30.0
    assert entropy_diff_terms(np.array([[0.25, 0.5, 0.25]]), [0])[0] == 2.0
    with pytest.raises(ValueError):
        entropy_diff_terms(P, [0, 1])
    with pytest.raises(ValueError):
        entropy_diff_terms(P, np.zeros(4, dtype=int), epsilon=1.0)


def test_binary_entropy_examples():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(0.25) == pytest.approx(0.8113, abs=1e-4)


def test_agreement_tolerance():
    P = np.array([[0.5, 0.5 - 1e-13], [0.6, 0.4]])
    assert agreement_rate(P, [1, 1]) == 0.5
    assert empirical_entropy_agreement(P, [1, 1]) == 1.0


@given(probs_rows)
def test_estimators_nonnegative(data):
    rows, labels = data
    P = _norm(rows)
    assert empirical_entropy_diff(P, labels) >= 0
    assert 0 <= empirical_entropy_agreement(P, labels) <= 1


@given(probs_rows, st.floats(1e-12, 0.5), st.floats(1e-12, 0.5))
def test_diff_monotone_in_epsilon(data, e1, e2):
    rows, labels = data
    P = _norm(rows)
    lo, hi = sorted((e1, e2))
    assert empirical_entropy_diff(P, labels, hi) <= empirical_entropy_diff(P, labels, lo)


@given(probs_rows)
def test_full_fidelity_implies_zero_agreement_entropy(data):
    rows, _ = data
    P = _norm(rows)
    labels = np.argmax(P, axis=1)
    assert fidelity(P, labels) == 1.0
    assert empirical_entropy_agreement(P, labels) == 0.0


def test_interpretability_score_examples():
    assert interpretability_score(2.0, 1.0) == 0.5
    assert interpretability_score(2.0, 4.0) == 0.0
    with pytest.warns(ZeroInitialEntropyWarning):
        assert interpretability_score(0.0, 0.0) == 1.0
    with pytest.raises(ValueError):
        interpretability_score(-1.0, 0.0)


@given(st.floats(0, 100), st.floats(0, 100))
def test_interpretability_score_range(hb, ha):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ZeroInitialEntropyWarning)
        assert 0.0 <= interpretability_score(hb, ha) <= 1.0


# --- query selection and seeds --------------------------------------------------------------


def test_select_queries_nested_and_sorted():
    small, big = select_queries(1000, 0.1, 3), select_queries(1000, 0.5, 3)
    assert len(small) == 100 and len(big) == 500
    assert set(small) <= set(big)
    assert np.all(np.diff(big) > 0)
    assert len(select_queries(1000, 1.0, 3)) == 1000


def test_select_queries_errors():
    with pytest.raises(EmptyQuerySetError):
        select_queries(10, 0.01, 0)
    for bad in (0.0, 1.5, -0.1):
        with pytest.raises(ValueError):
            select_queries(10, bad, 0)


def test_derive_seed_streams_differ():
    assert derive_seed(1, "a") == derive_seed(1, "a")
    assert derive_seed(1, "a") != derive_seed(1, "b")
    assert derive_seed(1, "a") != derive_seed(2, "a")


def test_build_interpreter_kinds():
    for spec in ({"layers": [4]}, {"kind": "tree"}, {"kind": "logistic"},
                 {"kind": "ensemble", "members": [{"kind": "tree"}, {"kind": "logistic", "epochs": 5}]}):
        m = build_interpreter(spec, 2, 3, 0)
        assert m.class_count == 3
    with pytest.raises(ValueError):
        build_interpreter({"kind": "svm"}, 2, 3, 0)


# --- pipeline -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def setup():
    ds = make_blobs(600, seed=1)
    interp, evaluation = ds.features[:480], ds.features[480:]
    b0 = init_truncated_normal(PwlnArchitecture(2, (8,), 3), 0)
    b, _ = train(b0, interp, ds.labels[:480], TrainConfig(learning_rate=0.01, batch_size=32, epochs=10), 0)
    return b, interp, evaluation


def test_identical_model_zero_epochs(setup):
    b, interp, evaluation = setup
    rep = run_interpretation(b, b, interp, evaluation, train_a=False)
    assert rep.fidelity_before == 1.0
    assert rep.H_before == 0.0 and rep.interpretability == 1.0
    assert any("H_before = 0" in w for w in rep.warnings)


def test_report_fields_and_ranges(setup):
    b, interp, evaluation = setup
    rep = run_interpretation(b, {"layers": [4], "epochs": 3}, interp, evaluation, 0.5, seed=2)
    d = rep.to_dict()
    for k in ("estimator", "H_before", "H_after", "interpretability", "fidelity_before", "fidelity_after",
              "n_eval", "seeds", "config_fingerprint"):
        assert k in d
    assert "model_a" not in d and "per_sample" not in d
    assert rep.n_query == 240 and rep.n_eval == 120
    assert set(rep.estimates) == {"agreement", "diff"}
    for est in rep.estimates.values():
        assert 0 <= est["interpretability"] <= 1 and est["H_before"] >= 0 and est["H_after"] >= 0
    assert 0 <= rep.fidelity_after <= 1
    json.dumps(d, allow_nan=False)


def test_report_deterministic(setup):
    b, interp, evaluation = setup
    kw = dict(seed=4, estimator="diff", target_mode="soft_probabilities")
    r1 = run_interpretation(b, {"layers": [4], "epochs": 2}, interp, evaluation, 0.3, **kw)
    r2 = run_interpretation(b, {"layers": [4], "epochs": 2}, interp, evaluation, 0.3, **kw)
    assert dump_json(r1.to_dict()) == dump_json(r2.to_dict())
    assert r1.estimator == "diff" and r1.H_before == r1.estimates["diff"]["H_before"]


def test_verbose_per_sample(setup):
    b, interp, evaluation = setup
    rep = run_interpretation(b, {"kind": "tree"}, interp, evaluation, verbose=True)
    assert len(rep.to_dict()["per_sample"]["diff_after"]) == len(evaluation)
    assert sum(rep.per_sample["diff_before"]) == pytest.approx(rep.estimates["diff"]["H_before"])


def test_ensemble_interpreter(setup):
    b, interp, evaluation = setup
    spec = {"kind": "ensemble", "members": [{"kind": "tree", "max_depth": 4}, {"kind": "logistic", "epochs": 50}]}
    rep = run_interpretation(b, spec, interp, evaluation, target_mode="soft_probabilities")
    assert rep.fidelity_after > 0.8


def test_zero_epoch_spec_skips_training(setup):
    b, interp, evaluation = setup
    rep = run_interpretation(b, {"layers": [4], "epochs": 0}, interp, evaluation)
    assert rep.H_after == rep.H_before and rep.fidelity_after == rep.fidelity_before
    assert rep.interpretability in (0.0, 1.0)


def test_bad_estimator_and_empty_eval(setup):
    b, interp, evaluation = setup
    with pytest.raises(ValueError):
        run_interpretation(b, {"layers": [2]}, interp, evaluation, estimator="kl")
    with pytest.raises(ValueError):
        run_interpretation(b, {"layers": [2]}, interp, evaluation[:0])


def test_untrained_a_chance_fidelity():
    rng = np.random.default_rng(0)
    c, n_eval = 10, 5000
    X_eval = rng.normal(size=(n_eval, 2))
    X_interp = rng.normal(size=(100, 2))
    labels = np.concatenate([rng.permutation(np.arange(n_eval) % c), rng.integers(0, c, 100)])
    b = LookupB(np.vstack([X_eval, X_interp]), labels, c)
    fids = []
    for seed in range(5):
        rep = run_interpretation(b, {"layers": [8], "epochs": 0}, X_interp, X_eval, seed=seed)
        fids.append(rep.fidelity_before)
    for f in fids:
        assert abs(f - 0.1) <= 0.03
