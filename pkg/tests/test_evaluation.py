"""Metrics and sweep runner: Heaviside convention, gap MSE / sign-agreement
accuracy, top-N true-gap curves, and experiment orchestration on the
closed-form shift task."""

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from memostyle.evaluation import (
    ConfigurationError,
    EvalReport,
    SweepSpec,
    TopNCurve,
    accuracy_metric,
    heaviside,
    mse_metric,
    prepare_experiment_data,
    run_experiment,
    topn_curve,
)
from memostyle.scoring import TrainConfig, oracle_scorer
from memostyle.selection import rank_seeds
from memostyle.synthetic import mid_gray_images, shift_seed_catalog, shift_synth

ORACLE_M = oracle_scorer("brightness")
ORACLE_E = oracle_scorer("brightness_rgb")


class TestHeaviside:
    def test_positive(self):
        assert heaviside(0.3) == 1

    def test_negative(self):
        assert heaviside(-0.1) == 0

    def test_zero_is_not_an_increase(self):
        assert heaviside(0.0) == 0

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(ValueError):
            heaviside(bad)

    @given(st.floats(-1e6, 1e6))
    def test_matches_strict_sign_test(self, x):
        assert heaviside(x) == (1 if x > 0 else 0)


class TestMseMetric:
    def test_perfect_prediction(self, rng):
        t = rng.uniform(-1, 1, (4, 5))
        assert mse_metric(t, t) == 0.0

    def test_single_component_error(self):
        got = mse_metric([[0.0, 0.2]], [[0.1, 0.2]])
        np.testing.assert_allclose(got, 0.005, rtol=1e-12)

    def test_matches_brute_force_double_loop(self, rng):
        t = rng.uniform(-1, 1, (7, 13))
        p = rng.uniform(-1, 1, (7, 13))
        want = sum(
            (t[v, s] - p[v, s]) ** 2 for v in range(7) for s in range(13)
        ) / (7 * 13)
        np.testing.assert_allclose(mse_metric(t, p), want, rtol=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            mse_metric([[0.1]], [[0.1, 0.2]])

    def test_one_dimensional_rejected(self):
        with pytest.raises(ValueError):
            mse_metric([0.1, 0.2], [0.1, 0.2])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mse_metric(np.zeros((0, 3)), np.zeros((0, 3)))

    def test_symmetric_under_joint_permutation(self, rng):
        t = rng.uniform(-1, 1, (6, 4))
        p = rng.uniform(-1, 1, (6, 4))
        rp = rng.permutation(6)
        cp = rng.permutation(4)
        np.testing.assert_allclose(
            mse_metric(t, p),
            mse_metric(t[rp][:, cp], p[rp][:, cp]),
            rtol=1e-12,
        )


class TestAccuracyMetric:
    def test_perfect_sign_agreement(self, rng):
        t = rng.uniform(0.01, 1, (3, 4)) * rng.choice([-1, 1], (3, 4))
        assert accuracy_metric(t, t) == 1.0

    def test_half_agreement(self):
        got = accuracy_metric([[0.05, 0.3]], [[0.1, -0.2]])
        assert got == 0.5

    def test_total_disagreement(self, rng):
        t = rng.uniform(0.01, 1, (3, 4)) * rng.choice([-1, 1], (3, 4))
        assert accuracy_metric(t, -t) == 0.0

    def test_zero_gap_counts_as_no_increase(self):
        assert accuracy_metric([[0.0]], [[0.0]]) == 1.0
        assert accuracy_metric([[0.0]], [[-0.3]]) == 1.0
        assert accuracy_metric([[0.0]], [[0.5]]) == 0.0

    def test_equals_one_minus_hamming_distance(self, rng):
        for _ in range(20):
            V, S = int(rng.integers(1, 8)), int(rng.integers(1, 8))
            t = rng.uniform(-1, 1, (V, S))
            p = rng.uniform(-1, 1, (V, S))
            ham = sum(
                abs(heaviside(t[v, s]) - heaviside(p[v, s]))
                for v in range(V)
                for s in range(S)
            ) / (V * S)
            np.testing.assert_allclose(accuracy_metric(t, p), 1.0 - ham, rtol=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            accuracy_metric([[0.1, 0.2]], [[0.1]])

    @given(st.integers(0, 2**32 - 1))
    def test_always_within_unit_interval(self, seed):
        r = np.random.default_rng(seed)
        t = r.uniform(-1, 1, (3, 3))
        p = r.uniform(-1, 1, (3, 3))
        assert 0.0 <= accuracy_metric(t, p) <= 1.0


def rankings_from_predictions(pred, seed_ids):
    return [rank_seeds(row, seed_ids) for row in pred]


class TestTopnCurve:
    def test_single_image_exact_values(self):
        true = np.array([[0.3, 0.1, -0.2]])
        ids = ("s0", "s1", "s2")
        rankings = rankings_from_predictions(true, ids)
        curve = topn_curve(rankings, true, [1, 3], ids)
        np.testing.assert_allclose(curve.mean_gaps[0], 0.3, rtol=1e-12)
        np.testing.assert_allclose(curve.mean_gaps[1], (0.3 + 0.1 - 0.2) / 3, rtol=1e-12)
        assert curve.n_values == (1, 3)
        assert curve.S == 3

    def test_matches_brute_force_oracle(self, rng):
        V, S = 5, 10
        true = rng.uniform(-1, 1, (V, S))
        pred = rng.uniform(-1, 1, (V, S))
        ids = tuple(f"s{k}" for k in range(S))
        curve = topn_curve(rankings_from_predictions(pred, ids), true, [1, 3, 10], ids)
        for n, got in zip(curve.n_values, curve.mean_gaps):
            acc = []
            for v in range(V):
                order = sorted(range(S), key=lambda s: (-pred[v, s], s))
                acc.append(np.mean([true[v, s] for s in order[:n]]))
            np.testing.assert_allclose(got, np.mean(acc), rtol=1e-12)

    def test_seed_id_column_binding(self):
        # ranking names seeds; gap columns follow the seed_ids argument, so a
        # reordered ranking must pull the right column
        true = np.array([[0.7, -0.4]])
        ids = ("a", "b")
        ranking = rank_seeds([0.1, 0.9], ids)  # predicts b best
        curve = topn_curve([ranking], true, [1], ids)
        np.testing.assert_allclose(curve.mean_gaps[0], -0.4, rtol=1e-12)

    @pytest.mark.parametrize("n", [0, 4, -1])
    def test_n_out_of_range_rejected(self, n):
        true = np.zeros((1, 3))
        rankings = rankings_from_predictions(true, ("a", "b", "c"))
        with pytest.raises(ValueError):
            topn_curve(rankings, true, [n], ("a", "b", "c"))

    def test_wrong_ranking_count_rejected(self):
        true = np.zeros((2, 2))
        rankings = rankings_from_predictions(true[:1], ("a", "b"))
        with pytest.raises(ValueError):
            topn_curve(rankings, true, [1], ("a", "b"))

    def test_partial_ranking_rejected(self):
        true = np.zeros((1, 3))
        short = rank_seeds([0.1, 0.2], ("a", "b"))
        with pytest.raises(ValueError):
            topn_curve([short], true, [1], ("a", "b", "c"))

    def test_seed_ids_length_checked(self):
        true = np.zeros((1, 2))
        rankings = rankings_from_predictions(true, ("a", "b"))
        with pytest.raises(ValueError):
            topn_curve(rankings, true, [1], ("a",))

    @given(st.integers(0, 2**32 - 1))
    def test_predicted_gap_curve_non_increasing(self, seed):
        # averaging a descending sort: exact property when the curve is
        # evaluated on the predictions themselves
        r = np.random.default_rng(seed)
        V, S = int(r.integers(1, 5)), int(r.integers(2, 8))
        pred = r.uniform(-1, 1, (V, S))
        ids = tuple(f"s{k}" for k in range(S))
        curve = topn_curve(
            rankings_from_predictions(pred, ids), pred, list(range(1, S + 1)), ids
        )
        diffs = np.diff(curve.mean_gaps)
        assert np.all(diffs <= 1e-12)

    def test_mismatched_curve_fields_rejected(self):
        with pytest.raises(ValueError):
            TopNCurve(n_values=(1, 2), mean_gaps=(0.1,), S=4)


class TestEvalReport:
    def test_round_trip_record(self):
        rep = EvalReport(
            accuracy=0.8,
            mse=0.01,
            scorer_tag="M",
            method_tag="scube",
            alpha=2.0,
            omega_target=1.0,
            omega_bar=1.0,
            seed_count=8,
        )
        rec = rep.to_record()
        assert rec["method"] == "scube" and rec["scorer"] == "M"
        assert rec["accuracy"] == 0.8 and rec["seed_count"] == 8

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"accuracy": 1.2},
            {"accuracy": -0.1},
            {"mse": -1e-9},
            {"scorer_tag": "Q"},
            {"method_tag": "ours"},
        ],
    )
    def test_invalid_fields_rejected(self, kwargs):
        base = dict(
            accuracy=0.5,
            mse=0.0,
            scorer_tag="M",
            method_tag="baseline",
            alpha=2.0,
            omega_target=1.0,
            omega_bar=1.0,
            seed_count=4,
        )
        base.update(kwargs)
        with pytest.raises(ValueError):
            EvalReport(**base)


SHIFTS = (0.2, 0.1, -0.1, -0.2)


@pytest.fixture(scope="module")
def shift_experiment():
    images = mid_gray_images(20, (16, 16), rng_seed=1)
    store = {f"img{i:05d}": img for i, img in enumerate(images)}
    catalog, table = shift_seed_catalog(SHIFTS)
    data = prepare_experiment_data(
        store,
        catalog,
        ORACLE_M,
        lambda alpha: shift_synth(table),
        alphas=[2.0],
        scorer_e=ORACLE_E,
        rng_seed=0,
    )
    return data, catalog


QUICK = TrainConfig(
    iterations=250, batch_size=8, input_size=(16, 16), learning_rate=3e-3
)


class TestPrepareExperimentData:
    def test_split_sizes(self, shift_experiment):
        data, _ = shift_experiment
        assert (len(data.train_ids), len(data.val_ids), len(data.test_ids)) == (16, 2, 2)
        ids = sorted(data.train_ids + data.val_ids + data.test_ids)
        assert ids == sorted(data.images.keys())

    def test_scorer_tags_present(self, shift_experiment):
        data, _ = shift_experiment
        assert set(data.scorer_tags) == {"M", "E"}

    def test_true_test_gaps_equal_shifts(self, shift_experiment):
        data, _ = shift_experiment
        ad = data.per_alpha[2.0]
        want = np.tile(SHIFTS, (2, 1))
        for tag in ("M", "E"):
            np.testing.assert_allclose(ad.test_true[tag], want, atol=1e-6)

    def test_train_gaps_are_full_mask(self, shift_experiment):
        data, _ = shift_experiment
        ad = data.per_alpha[2.0]
        assert ad.train_gaps.omega_bar == 1.0
        assert ad.train_gaps.shape == (16, 4)
        assert ad.val_gaps.shape == (2, 4)


class TestRunExperiment:
    def test_bad_spec_fails_before_training(self, shift_experiment):
        data, _ = shift_experiment
        spec = SweepSpec(
            alphas=(3.5,),
            omegas=(0.0,),
            seed_counts=(9,),
            backbones=("vgg99",),
            train_config=QUICK,
        )
        with pytest.raises(ConfigurationError) as err:
            run_experiment(data, spec)
        msg = str(err.value)
        assert "alpha=3.5" in msg
        assert "0.0" in msg
        assert "seed_count 9" in msg
        assert "vgg99" in msg

    def test_single_combination_report_block(self, shift_experiment, tmp_path):
        data, _ = shift_experiment
        out = tmp_path / "results.jsonl"
        spec = SweepSpec(
            alphas=(2.0,),
            omegas=(1.0,),
            train_config=QUICK,
            results_path=str(out),
        )
        reports = run_experiment(data, spec)
        # one block: (scube, baseline) x (M, E)
        assert len(reports) == 4
        assert {(r.method_tag, r.scorer_tag) for r in reports} == {
            ("scube", "M"),
            ("scube", "E"),
            ("baseline", "M"),
            ("baseline", "E"),
        }
        for r in reports:
            assert r.alpha == 2.0
            assert r.omega_target == 1.0
            assert r.omega_bar == 1.0
            assert r.seed_count == 4
        lines = [json.loads(ln) for ln in out.read_text().splitlines()]
        assert len(lines) == 4
        assert lines[0] == reports[0].to_record()

    def test_shift_task_fully_learnable_at_full_mask(self, shift_experiment):
        data, _ = shift_experiment
        spec = SweepSpec(alphas=(2.0,), omegas=(1.0,), train_config=QUICK)
        reports = run_experiment(data, spec)
        by_key = {(r.method_tag, r.scorer_tag): r for r in reports}
        # image-independent shifts: both methods should nail the signs
        assert by_key[("scube", "M")].accuracy == 1.0
        assert by_key[("baseline", "M")].accuracy == 1.0
        assert by_key[("scube", "M")].mse < 0.01

    def test_denser_mask_never_hurts_on_shift_task(self, shift_experiment):
        data, _ = shift_experiment
        spec = SweepSpec(
            alphas=(2.0,),
            omegas=(1.0, 0.05),
            train_config=QUICK,
            rng_seed=0,
        )
        reports = run_experiment(data, spec)
        dense = [r for r in reports if r.omega_target == 1.0 and r.method_tag == "scube"]
        sparse = [r for r in reports if r.omega_target == 0.05 and r.method_tag == "scube"]
        assert dense and sparse
        assert all(r.omega_bar == 1.0 for r in dense)
        assert all(r.omega_bar < 0.35 for r in sparse)
        m_dense = next(r for r in dense if r.scorer_tag == "M")
        m_sparse = next(r for r in sparse if r.scorer_tag == "M")
        assert m_dense.mse <= m_sparse.mse
        assert m_dense.accuracy >= m_sparse.accuracy

    def test_seed_count_prefixes(self, shift_experiment):
        data, catalog = shift_experiment
        spec = SweepSpec(
            alphas=(2.0,), omegas=(1.0,), seed_counts=(2, 4), train_config=QUICK
        )
        reports = run_experiment(data, spec)
        assert {r.seed_count for r in reports} == {2, 4}
        two = [r for r in reports if r.seed_count == 2 and r.scorer_tag == "M"]
        # prefix columns are the +0.2/+0.1 shifts; everything learnable
        assert all(r.accuracy == 1.0 for r in two)
