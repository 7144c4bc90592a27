"""Losses, optimizer, gradient clipping and threshold selection."""

import numpy as np
import pytest

from psygat import tensor as T
from psygat import train as TR


def logit_of_prob(p):
    return T.Tensor(np.asarray(np.log(p / (1 - p)), dtype=np.float64))


class TestFocalLoss:
    def test_hand_value_quarter_ln_two(self):
        # p_t = 0.5: focal(gamma=2, alpha=1) = 0.25 * ln 2
        loss = TR.focal_loss(T.Tensor(np.asarray(0.0)), 1, gamma=2.0, alpha=1.0)
        assert float(loss.data) == pytest.approx(0.25 * np.log(2.0), abs=1e-6)

    def test_hand_value_confident_correct(self):
        # p_t = 0.9: (1 - 0.9)^2 * (-ln 0.9) = 0.01 * (-ln 0.9)
        loss = TR.focal_loss(logit_of_prob(0.9), 1, gamma=2.0, alpha=1.0)
        assert float(loss.data) == pytest.approx(0.01 * -np.log(0.9), abs=1e-6)

    def test_negative_class_mirrors_positive(self):
        a = TR.focal_loss(logit_of_prob(0.2), 0)
        b = TR.focal_loss(logit_of_prob(0.8), 1)
        assert float(a.data) == pytest.approx(float(b.data), rel=1e-6)

    def test_gamma_zero_alpha_one_equals_bce(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            z = T.Tensor(np.asarray(rng.standard_normal() * 4, dtype=np.float64))
            y = int(rng.integers(0, 2))
            f = float(TR.focal_loss(z, y, gamma=0.0, alpha=1.0).data)
            p = 1 / (1 + np.exp(-float(z.data)))
            ref = -np.log(p) if y == 1 else -np.log(1 - p)
            assert f == pytest.approx(ref, abs=1e-10)

    def test_alpha_scales_linearly(self):
        z = logit_of_prob(0.3)
        full = float(TR.focal_loss(z, 1, alpha=1.0).data)
        scaled = float(TR.focal_loss(z, 1, alpha=0.25).data)
        assert scaled == pytest.approx(0.25 * full, rel=1e-6)

    def test_extreme_logits_stay_finite(self):
        for z in (-80.0, 80.0):
            for y in (0, 1):
                loss = TR.focal_loss(T.Tensor(np.asarray(z)), y)
                assert np.isfinite(float(loss.data))
                T.backward(loss)

    def test_gradient_matches_finite_differences(self):
        z = T.Tensor(np.asarray(0.7, dtype=np.float64))
        err = T.grad_check(lambda: TR.focal_loss(z, 1, gamma=2.0, alpha=0.5), [z])
        assert err < 1e-6


class TestInfoNce:
    def reps(self, rng, b, d=6):
        return T.Tensor(rng.standard_normal((b, d)), dtype=np.float64)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(1)
        reps = self.reps(rng, 6)
        labels = np.array([0, 1, 0, 1, 1, 0])
        loss = float(TR.info_nce(reps, labels, temperature=0.2).data)

        z = reps.data / np.linalg.norm(reps.data, axis=1, keepdims=True)
        sims = z @ z.T / 0.2
        total = 0.0
        for i in range(6):
            pos = [j for j in range(6) if j != i and labels[j] == labels[i]]
            den = np.log(sum(np.exp(sims[i, j]) for j in range(6) if j != i))
            total += -np.mean([sims[i, j] - den for j in pos])
        assert loss == pytest.approx(total / 6, rel=1e-6)

    def test_single_sample_contributes_zero(self):
        rng = np.random.default_rng(2)
        assert float(TR.info_nce(self.reps(rng, 1), [1]).data) == 0.0

    def test_no_positive_pairs_contributes_zero(self):
        rng = np.random.default_rng(3)
        assert float(TR.info_nce(self.reps(rng, 2), [0, 1]).data) == 0.0

    def test_pulls_same_label_reps_together(self):
        # identical same-label reps with distinct other-label reps score
        # lower than the reverse arrangement
        base = np.array([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [-1.0, 0.0]])
        tight = float(TR.info_nce(T.Tensor(base, dtype=np.float64), [1, 1, 0, 0]).data)
        loose = float(TR.info_nce(T.Tensor(base, dtype=np.float64), [1, 0, 1, 0]).data)
        assert tight < loose

    def test_gradient_flows(self):
        rng = np.random.default_rng(4)
        reps = self.reps(rng, 4)
        err = T.grad_check(lambda: TR.info_nce(reps, [0, 0, 1, 1]), [reps])
        assert err < 1e-6


class TestAdamW:
    def test_first_step_magnitude(self):
        # bias-corrected first step is lr * g / (|g| + eps) = -lr * sign(g)
        p = T.Tensor(np.zeros(3))
        p.grad = np.array([1.0, -2.0, 0.5], dtype=np.float32)
        opt = TR.AdamW(lr=0.1)
        opt.step([("p", p)])
        np.testing.assert_allclose(p.data, [-0.1, 0.1, -0.1], atol=1e-6)

    def test_decoupled_weight_decay(self):
        # zero gradient: pure decay p *= (1 - lr * wd)
        p = T.Tensor(np.asarray([10.0]))
        p.grad = np.zeros(1, dtype=np.float32)
        opt = TR.AdamW(lr=0.1, weight_decay=0.5)
        opt.step([("p", p)])
        assert p.data[0] == pytest.approx(10.0 * (1 - 0.05), rel=1e-5)

    def test_non_finite_gradient_rejected(self):
        p = T.Tensor(np.zeros(2))
        p.grad = np.array([np.nan, 0.0], dtype=np.float32)
        with pytest.raises(TR.NumericalError, match="p"):
            TR.AdamW(lr=0.1).step([("p", p)])

    def test_converges_on_quadratic(self):
        p = T.Tensor(np.asarray([5.0], dtype=np.float64))
        opt = TR.AdamW(lr=0.1)
        for _ in range(500):
            p.zero_grad()
            T.backward(T.tsum(T.mul(p, p)))
            opt.step([("p", p)])
        assert abs(p.data[0]) < 1e-2


class TestClipGradients:
    def test_large_gradients_rescaled_to_max_norm(self):
        p = T.Tensor(np.zeros(4))
        p.grad = np.full(4, 3.0, dtype=np.float32)
        pre = TR.clip_gradients([("p", p)], 1.0)
        assert pre == pytest.approx(6.0)
        assert np.linalg.norm(p.grad) == pytest.approx(1.0, rel=1e-5)

    def test_small_gradients_untouched(self):
        p = T.Tensor(np.zeros(2))
        p.grad = np.array([0.3, 0.4], dtype=np.float32)
        TR.clip_gradients([("p", p)], 1.0)
        np.testing.assert_allclose(p.grad, [0.3, 0.4])

    def test_global_norm_spans_parameters(self):
        a, b = T.Tensor(np.zeros(1)), T.Tensor(np.zeros(1))
        a.grad = np.array([3.0], dtype=np.float32)
        b.grad = np.array([4.0], dtype=np.float32)
        pre = TR.clip_gradients([("a", a), ("b", b)], 1.0)
        assert pre == pytest.approx(5.0)
        assert a.grad[0] == pytest.approx(0.6, rel=1e-5)
        assert b.grad[0] == pytest.approx(0.8, rel=1e-5)


def brute_force_threshold(probs, labels, objective="f1", min_precision=0.75):
    """Dense-grid enumeration used as an oracle for select_threshold."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    grid = np.linspace(0.0, 1.0, 10_001)
    best_thr, best_score = None, None
    for thr in grid:
        pred = probs >= thr
        tp = np.sum(pred & (labels == 1))
        fp = np.sum(pred & (labels == 0))
        fn = np.sum(~pred & (labels == 1))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        if objective == "recall_at_min_precision":
            if p < min_precision:
                continue
            score = r
        else:
            beta = 1.0 if objective == "f1" else 0.5
            b2 = beta * beta
            score = (1 + b2) * p * r / (b2 * p + r) if p + r else 0.0
        if best_score is None or score > best_score + 1e-12:
            best_thr, best_score = thr, score
    return best_thr, best_score


def threshold_score(probs, labels, thr, objective="f1"):
    pred = np.asarray(probs) >= thr
    labels = np.asarray(labels)
    tp = np.sum(pred & (labels == 1))
    fp = np.sum(pred & (labels == 0))
    fn = np.sum(~pred & (labels == 1))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    beta = 1.0 if objective == "f1" else 0.5
    b2 = beta * beta
    return (1 + b2) * p * r / (b2 * p + r) if p + r else 0.0


class TestSelectThreshold:
    def test_matches_brute_force_f1_on_random_sets(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            n = int(rng.integers(5, 40))
            labels = rng.integers(0, 2, n)
            if labels.sum() in (0, n):
                labels[0] = 1 - labels[0]
            probs = np.round(rng.random(n), 3)
            thr = TR.select_threshold(probs, labels, "f1")
            _, oracle = brute_force_threshold(probs, labels, "f1")
            assert threshold_score(probs, labels, thr, "f1") == pytest.approx(oracle, abs=1e-9)

    def test_ties_resolve_to_lowest_threshold(self):
        # any threshold in (0.4, 0.6) gives the same confusion; the scan
        # must return the lowest candidate achieving the best score
        probs = np.array([0.2, 0.4, 0.6, 0.8])
        labels = np.array([0, 0, 1, 1])
        thr = TR.select_threshold(probs, labels, "f1")
        assert thr == pytest.approx(0.5)

    def test_f_half_objective(self):
        rng = np.random.default_rng(1)
        labels = rng.integers(0, 2, 30)
        labels[0] = 1
        labels[1] = 0
        probs = np.round(rng.random(30), 3)
        thr = TR.select_threshold(probs, labels, "f0.5")
        _, oracle = brute_force_threshold(probs, labels, "f0.5")
        assert threshold_score(probs, labels, thr, "f0.5") == pytest.approx(oracle, abs=1e-9)

    def test_recall_at_min_precision(self):
        probs = np.array([0.9, 0.8, 0.7, 0.6, 0.3])
        labels = np.array([1, 1, 0, 1, 0])
        thr = TR.select_threshold(probs, labels, "recall_at_min_precision", min_precision=0.75)
        pred = probs >= thr
        tp = np.sum(pred & (labels == 1))
        fp = np.sum(pred & (labels == 0))
        assert tp / (tp + fp) >= 0.75
        # recall 3/3 is reachable at precision 0.75 by taking the top four
        assert tp == 3

    def test_recall_objective_falls_back_when_unreachable(self):
        probs = np.array([0.9, 0.8, 0.2, 0.1])
        labels = np.array([0, 0, 1, 1])  # precision 0.75 unreachable
        thr = TR.select_threshold(probs, labels, "recall_at_min_precision", min_precision=0.75)
        assert 0.0 <= thr <= 1.0

    def test_single_class_rejected(self):
        with pytest.raises(TR.DataError):
            TR.select_threshold(np.array([0.1, 0.9]), np.array([1, 1]), "f1")


class TestTrainConfig:
    def test_defaults_are_valid(self):
        TR.TrainConfig()

    def test_json_round_trip(self):
        c = TR.TrainConfig(lr=1e-3, seeds=(7, 8))
        assert TR.TrainConfig.from_json(c.to_json()) == c

    def test_invalid_values_rejected(self):
        with pytest.raises(TR.ConfigError):
            TR.TrainConfig(lr=0)
        with pytest.raises(TR.ConfigError):
            TR.TrainConfig(loss="hinge")
        with pytest.raises(TR.ConfigError):
            TR.TrainConfig(persona_mode="maybe")
        with pytest.raises(TR.ConfigError):
            TR.TrainConfig(contrastive_temperature=0.0)
