import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from intentdiv.intent_model import (Dataset, IntentModelParams, TrainConfig,
                                    auc, dataset_records, evaluate,
                                    evaluate_predictions, feature_correlations,
                                    gradient, loss, predict_intents,
                                    predict_proba, read_dataset,
                                    reliability_table, train)
from intentdiv.io import DataError

INTENTS = ("exploration", "familiarity")


def zero_params(d=3, intents=INTENTS):
    return IntentModelParams.zeros([f"f{i}" for i in range(d)], intents)


def random_params(rng, d=3, k=2):
    p = IntentModelParams.zeros([f"f{i}" for i in range(d)], tuple(f"v{i}" for i in range(k)))
    p.W = rng.normal(size=(k, d))
    p.b = rng.normal(size=k)
    p.mean = rng.normal(size=d)
    p.std = rng.uniform(0.5, 2.0, size=d)
    return p


def separable(n=400, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    cls = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    Y = np.column_stack([cls, 1 - cls]).astype(float)
    return Dataset(X, Y, ("a", "b"), INTENTS)


class TestPredict:
    def test_zero_params_give_uniform(self):
        d = predict_intents(zero_params(), [1.0, -2.0, 3.0])
        assert d.probs.tolist() == [0.5, 0.5]

    def test_closed_form_softmax(self):
        p = zero_params()
        p.b = np.array([math.log(3.0), 0.0])
        assert predict_intents(p, [0, 0, 0]).probs == pytest.approx([0.75, 0.25])

    def test_permuting_intents_permutes_output(self):
        rng = np.random.default_rng(1)
        p = random_params(rng, k=3)
        perm = [2, 0, 1]
        q = p.copy()
        q.W, q.b = p.W[perm], p.b[perm]
        x = rng.normal(size=3)
        assert predict_proba(q, x[None])[0] == pytest.approx(predict_proba(p, x[None])[0][perm])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            predict_intents(zero_params(), [1.0, 2.0])
        with pytest.raises(ValueError):
            predict_intents(zero_params(), [[1.0, 2.0, 3.0]])

    @given(st.lists(st.floats(-50, 50), min_size=3, max_size=3))
    def test_outputs_are_a_distribution(self, x):
        p = random_params(np.random.default_rng(0))
        probs = predict_intents(p, x).probs
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all((probs >= 0) & (probs <= 1))


class TestLoss:
    def test_uniform_one_hot(self):
        assert loss(zero_params(), [[1, 2, 3]], [[1, 0]]) == pytest.approx(math.log(2))

    def test_multi_label_sums(self):
        assert loss(zero_params(), [[1, 2, 3]], [[1, 1]]) == pytest.approx(2 * math.log(2))

    def test_confident_correct_prediction_is_near_zero(self):
        p = zero_params()
        p.b = np.array([60.0, 0.0])
        assert loss(p, [[0, 0, 0]], [[1, 0]]) < 1e-12

    def test_log_floor(self):
        p = zero_params()
        p.b = np.array([800.0, 0.0])
        assert loss(p, [[0, 0, 0]], [[0, 1]]) == pytest.approx(-math.log(1e-12))

    def test_l2_term(self):
        p = zero_params()
        p.W = np.ones((2, 3))
        base = loss(p, [[0, 0, 0]], [[1, 0]])
        assert loss(p, [[0, 0, 0]], [[1, 0]], l2=0.5) == pytest.approx(base + 0.5 * 6)

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            loss(zero_params(), np.zeros((0, 3)), np.zeros((0, 2)))


class TestGradient:
    def test_single_example_closed_form(self):
        p = zero_params()
        x, y = np.array([[1.0, 2.0, -1.0]]), np.array([[1.0, 0.0]])
        gW, gb = gradient(p, x, y)
        expected = np.outer(np.array([0.5, 0.5]) - y[0], x[0])
        assert gW == pytest.approx(expected)
        assert gb == pytest.approx([-0.5, 0.5])

    def test_l2_adds_exactly(self):
        rng = np.random.default_rng(2)
        p = random_params(rng)
        X, Y = rng.normal(size=(5, 3)), np.eye(2)[rng.integers(0, 2, 5)]
        g0, _ = gradient(p, X, Y)
        g1, _ = gradient(p, X, Y, l2=0.3)
        assert np.array_equal(g1, g0 + 2 * 0.3 * p.W)

    def test_stationary_at_perfect_fit(self):
        p = zero_params()
        p.b = np.array([60.0, 0.0])
        gW, gb = gradient(p, [[0.1, 0.2, 0.3]], [[1, 0]])
        assert np.abs(gW).max() < 1e-12 and np.abs(gb).max() < 1e-12


class TestTrain:
    def test_separable_accuracy(self):
        data = separable()
        p = train(data, TrainConfig(epochs=50))
        acc = np.mean(predict_proba(p, data.X).argmax(axis=1) == data.Y.argmax(axis=1))
        assert acc > 0.95

    def test_loss_decreases(self):
        data = separable()
        p = train(data, TrainConfig(epochs=3))
        p0 = IntentModelParams.zeros(data.feature_names, data.intents)
        p0.mean, p0.std = p.mean, p.std
        assert loss(p, data.X, data.Y) < loss(p0, data.X, data.Y)

    def test_deterministic(self):
        a = train(separable(), TrainConfig(epochs=3, seed=5))
        b = train(separable(), TrainConfig(epochs=3, seed=5))
        assert a.to_json() == b.to_json()

    @pytest.mark.parametrize("kw", [dict(epochs=0), dict(learning_rate=0), dict(batch_size=0),
                                    dict(l2=-1)])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)

    def test_empty_dataset(self):
        empty = Dataset(np.zeros((0, 2)), np.zeros((0, 2)), ("a", "b"), INTENTS)
        with pytest.raises(ValueError):
            train(empty, TrainConfig())

    def test_params_json_round_trip(self):
        p = train(separable(), TrainConfig(epochs=2))
        q = IntentModelParams.from_json(p.to_json())
        assert q.to_json() == p.to_json()
        doc = json.loads(p.to_json())
        assert set(doc) == {"W", "b", "feature_names", "intents", "standardization"}


class TestDataset:
    def test_requires_an_active_label(self):
        with pytest.raises(ValueError):
            Dataset([[0.0]], [[0.0, 0.0]], ("a",), INTENTS)

    def test_requires_finite_features(self):
        with pytest.raises(ValueError):
            Dataset([[math.nan]], [[1.0, 0.0]], ("a",), INTENTS)

    def test_jsonl_round_trip(self, tmp_path):
        from intentdiv.io import write_jsonl
        data = separable(20)
        path = tmp_path / "d.jsonl"
        write_jsonl(path, dataset_records(data))
        back = read_dataset(path)
        assert np.array_equal(back.X, data.X) and np.array_equal(back.Y, data.Y)
        assert back.feature_names == data.feature_names and back.intents == data.intents

    @pytest.mark.parametrize("line, msg", [
        ('{"x": {"a": 1}}', "needs 'x' and 'y'"),
        ('{"x": {"a": 1}, "y": {"exploration": 0, "familiarity": 0}}', "no active intent"),
        ('not json', "invalid JSON"),
    ])
    def test_bad_records_report_line(self, tmp_path, line, msg):
        path = tmp_path / "d.jsonl"
        path.write_text('{"x": {"a": 0}, "y": {"exploration": 1, "familiarity": 0}}\n' + line + "\n")
        with pytest.raises(DataError, match=msg) as exc:
            read_dataset(path)
        assert exc.value.line == 2

    def test_missing_feature(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"x": {"a": 0, "b": 1}, "y": {"exploration": 1}}\n'
                        '{"x": {"a": 0}, "y": {"exploration": 1}}\n')
        with pytest.raises(DataError, match="missing feature"):
            read_dataset(path)


class TestEvaluate:
    def test_perfect_predictions(self):
        Y = np.array([[1, 0], [0, 1], [1, 0], [0, 1]], dtype=float)
        ev = evaluate_predictions(Y, Y, INTENTS)
        assert ev["auc_per_intent"]["exploration"] == 1.0
        assert ev["calibration_ratio_per_intent"]["exploration"] == 1.0

    def test_constant_prediction_balanced_labels(self):
        Y = np.array([[1, 0], [0, 1], [1, 0], [0, 1]], dtype=float)
        ev = evaluate_predictions(np.full((4, 2), 0.5), Y, INTENTS)
        assert ev["auc_per_intent"]["exploration"] == 0.5
        assert ev["calibration_ratio_per_intent"]["exploration"] == 1.0

    def test_hand_built_auc(self):
        # positives at 0.8 and 0.4, negatives at 0.6 and 0.2: 3 of 4 pairs ordered
        assert auc([0.8, 0.6, 0.4, 0.2], [1, 0, 1, 0]) == 0.75

    def test_degenerate_labels_have_no_auc(self):
        assert auc([0.1, 0.9], [1, 1]) is None
        ev = evaluate_predictions(np.full((2, 2), 0.5), np.array([[1, 0], [1, 0]]), INTENTS)
        assert ev["auc_per_intent"]["familiarity"] is None
        assert ev["calibration_ratio_per_intent"]["familiarity"] is None

    def test_reliability_table(self):
        rows = reliability_table([0.05, 0.15, 0.95, 1.0], [0, 1, 1, 1], n_bins=10)
        assert len(rows) == 10
        assert rows[0][2:] == (1, 0.05, 0.0)
        assert rows[9][2:] == (2, 0.975, 1.0)
        assert rows[5][2:] == (0, None, None)

    def test_evaluate_uses_model(self):
        data = separable()
        p = train(data, TrainConfig(epochs=20))
        ev = evaluate(p, data)
        assert ev["auc_per_intent"]["exploration"] > 0.95
        assert 0.9 < ev["calibration_ratio_per_intent"]["exploration"] < 1.1


class TestCorrelations:
    def test_exact_and_negated(self):
        rng = np.random.default_rng(0)
        pred = rng.random(50)
        X = np.column_stack([pred, -pred, np.ones(50)])
        rows = feature_correlations(X, pred, ["same", "neg", "const"])
        assert rows[0][1] == pytest.approx(1.0) or rows[0][1] == pytest.approx(-1.0)
        r = dict(rows)
        assert r["same"] == pytest.approx(1.0) and r["neg"] == pytest.approx(-1.0)
        assert rows[-1] == ("const", None)

    def test_independent_feature_is_weak(self):
        rng = np.random.default_rng(1)
        rows = feature_correlations(rng.normal(size=(20_000, 1)), rng.random(20_000), ["noise"])
        assert abs(rows[0][1]) < 0.1

    def test_sorted_by_abs_r(self):
        rng = np.random.default_rng(2)
        pred = rng.random(200)
        X = np.column_stack([pred + rng.normal(0, s, 200) for s in (2.0, 0.01, 0.5)])
        rows = feature_correlations(X, pred, ["weak", "strong", "mid"])
        assert [n for n, _ in rows] == ["strong", "mid", "weak"]

    def test_needs_three_examples(self):
        with pytest.raises(ValueError):
            feature_correlations(np.zeros((2, 1)), [0.1, 0.2], ["a"])
