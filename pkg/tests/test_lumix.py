"""Label-uncertainty mixing: λ components, mixed labels, the hinge regulariser and the full loss."""

import math

import numpy as np
import pytest

from augment.lumix import (LabelBatch, LumixConfig, build_labels, combine_lambda, compute_lambda_s, lumix_loss,
                           mix_labels, positive_mask, regularizer, regularizer_logits_grad, sample_lambda_r)
from augment.mixing import MixPlan
from augment.sampling import RngStream
from common.errors import ConfigError, LabelError
from conftest import central_diff
from model.losses import LOSSES, soft_ce_loss, softmax


def _plan(lambda0, pairing):
    return MixPlan("cutmix", np.asarray(pairing), np.asarray(lambda0, dtype=np.float64))


def _instance(gen, b, c, eps=0.1):
    classes = gen.integers(0, c, size=b)
    labels = build_labels(classes, c, eps)
    pairing = gen.permutation(b)
    return gen.normal(size=(b, c)) * 2.0, labels, labels.take(pairing), _plan(gen.uniform(size=b), pairing)


def scalar_pipeline(logits, classes_a, classes_b, eps, lambda0, lambda_r, cfg: LumixConfig) -> float:
    """Plain-Python loops: softmax → λs → λ → ỹ → base loss → R → total."""
    b, c = logits.shape
    r1 = cfg.r1 if cfg.lambda_r_dist != "none" else 0.0
    r2 = cfg.r2 if cfg.enable_lambda_s else 0.0
    base_total = reg_total = 0.0
    for i in range(b):
        z = [float(v) for v in logits[i]]
        m = max(z)
        denom = sum(math.exp(v - m) for v in z)
        p = [math.exp(v - m) / denom for v in z]
        logp = [v - m - math.log(denom) for v in z]
        a, bb = int(classes_a[i]), int(classes_b[i])
        lam_s = 0.5 if a == bb else p[a] / (p[a] + p[bb])
        lam = (1 - r1 - r2) * lambda0[i] + r1 * lambda_r[i] + r2 * lam_s
        lam = min(max(lam, 0.0), 1.0)
        ya = [1 - eps + eps / c if k == a else eps / c for k in range(c)]
        yb = [1 - eps + eps / c if k == bb else eps / c for k in range(c)]
        y = [lam * ya[k] + (1 - lam) * yb[k] for k in range(c)]
        if cfg.loss_kind == "softmax_ce":
            base_total += -sum(y[k] * logp[k] for k in range(c))
        else:
            for k in range(c):
                s = z[k]
                base_total += (max(s, 0.0) - s * y[k] + math.log1p(math.exp(-abs(s)))) / c
        if cfg.enable_reg:
            pos = {a, bb} if cfg.positive_rule == "or" else ({a} if a == bb else set())
            reg_total += sum(y[k] * max(0.0, (1.0 if k in pos else 0.0) - p[k]) for k in range(c))
    return base_total / b + cfg.eta * reg_total / b


class TestBuildLabels:
    def test_one_hot(self):
        np.testing.assert_array_equal(build_labels([2], 4, 0.0).rows, [[0, 0, 1, 0]])

    def test_smoothing_values(self):
        rows = build_labels([3], 10, 0.1).rows[0]
        assert rows[3] == pytest.approx(0.91, abs=1e-15)
        np.testing.assert_allclose(np.delete(rows, 3), 0.01, atol=1e-15)

    def test_rows_on_simplex(self, rng):
        rows = build_labels(rng.integers(0, 7, 500), 7, 0.3).rows
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-15)
        assert rows.min() == pytest.approx(0.3 / 7)

    @pytest.mark.parametrize("idx", [[-1], [4]])
    def test_out_of_range_rejected(self, idx):
        with pytest.raises(LabelError):
            build_labels(idx, 4, 0.0)


class TestLambdaS:
    def test_equal_probabilities(self):
        assert compute_lambda_s(np.array([0.4, 0.4, 0.2]), 0, 1) == 0.5

    def test_arithmetic(self):
        assert compute_lambda_s(np.array([0.6, 0.2, 0.2]), 0, 1) == pytest.approx(0.75, abs=1e-15)

    def test_softmax_scalar_oracle(self):
        e = [math.exp(v) for v in (1.0, 2.0, 3.0)]
        expected = e[0] / (e[0] + e[2])
        got = compute_lambda_s(softmax(np.array([[1.0, 2.0, 3.0]]))[0], 0, 2)
        assert got == pytest.approx(expected, abs=1e-15)

    def test_self_pair_and_underflow_guard(self):
        assert compute_lambda_s(np.array([0.2, 0.8]), 1, 1) == 0.5
        assert compute_lambda_s(np.array([0.0, 0.0, 1.0]), 0, 1) == 0.5

    def test_batched_and_monotone(self, rng):
        probs = softmax(rng.normal(size=(50, 5)))
        a, b = np.zeros(50, int), np.ones(50, int)
        lam = compute_lambda_s(probs, a, b)
        assert np.all((probs[:, 0] > probs[:, 1]) == (lam > 0.5))


class TestCombineLambda:
    def test_zero_ratios_recover_lambda0(self):
        assert combine_lambda(0.37, 0.9, 0.1, 0.0, 0.0) == 0.37

    def test_fixed_point(self):
        for r1, r2 in [(0.4, 0.1), (1.0, 0.0), (0.0, 1.0), (0.3, 0.3)]:
            assert combine_lambda(0.5, 0.5, 0.5, r1, r2) == pytest.approx(0.5, abs=1e-15)

    def test_fully_random(self):
        assert combine_lambda(0.2, 0.83, 0.6, 1.0, 0.0) == 0.83

    def test_formula(self):
        assert combine_lambda(0.2, 0.7, 0.9, 0.4, 0.1) == pytest.approx(0.5 * 0.2 + 0.4 * 0.7 + 0.1 * 0.9)

    def test_invalid_ratios_rejected(self):
        with pytest.raises(ConfigError):
            combine_lambda(0.5, 0.5, 0.5, 0.8, 0.5)
        with pytest.raises(ConfigError):
            LumixConfig(r1=0.8, r2=0.5).validate()


class TestMixLabels:
    def test_endpoints_and_degenerate_pair(self, rng):
        ya, yb = build_labels([1], 4, 0.1).rows, build_labels([3], 4, 0.1).rows
        np.testing.assert_array_equal(mix_labels(ya, yb, 1.0), ya)
        np.testing.assert_array_equal(mix_labels(ya, yb, 0.0), yb)
        np.testing.assert_allclose(mix_labels(ya, ya, 0.3), ya, atol=1e-16)

    def test_scalar_oracle(self, rng):
        ya = rng.dirichlet(np.ones(6))
        yb = rng.dirichlet(np.ones(6))
        expected = [0.3 * a + 0.7 * b for a, b in zip(ya, yb)]
        np.testing.assert_allclose(mix_labels(ya, yb, 0.3), expected, atol=1e-15)

    def test_fuzzed_simplex_and_range(self):
        """1e6 label mixes under random ratios: rows stay on the simplex, λ stays in [0, 1]."""
        gen = np.random.default_rng(99)
        rng = RngStream.from_seed(99)
        for _ in range(10):
            n, c = 100_000, int(gen.integers(2, 11))
            ya = build_labels(gen.integers(0, c, n), c, float(gen.uniform(0, 0.5))).rows
            yb = build_labels(gen.integers(0, c, n), c, float(gen.uniform(0, 0.5))).rows
            r1 = float(gen.uniform())
            r2 = float(gen.uniform(0, 1 - r1))
            cfg = LumixConfig(lambda_r_dist=str(gen.choice(["beta", "gaussian"])), gaussian_sigma=5.0)
            lam = combine_lambda(gen.uniform(size=n), sample_lambda_r(cfg, n, rng), gen.uniform(size=n), r1, r2)
            assert np.all((lam >= 0.0) & (lam <= 1.0))
            y = mix_labels(ya, yb, lam)
            assert np.all(y >= 0.0)
            assert np.abs(y.sum(axis=1) - 1.0).max() <= 1e-12


class TestPositiveMask:
    def test_or_rule(self):
        b = positive_mask(build_labels([2], 8).rows, build_labels([5], 8).rows)
        np.testing.assert_array_equal(np.flatnonzero(b[0]), [2, 5])

    def test_self_pair(self):
        b = positive_mask(build_labels([3], 8).rows, build_labels([3], 8).rows)
        np.testing.assert_array_equal(np.flatnonzero(b[0]), [3])

    def test_smoothing_does_not_change_mask(self, rng):
        ca, cb = rng.integers(0, 6, 20), rng.integers(0, 6, 20)
        plain = positive_mask(build_labels(ca, 6, 0.0).rows, build_labels(cb, 6, 0.0).rows)
        smooth = positive_mask(build_labels(ca, 6, 0.1).rows, build_labels(cb, 6, 0.1).rows)
        np.testing.assert_array_equal(plain, smooth)

    def test_and_rule(self):
        b = positive_mask(build_labels([2], 4).rows, build_labels([1], 4).rows, rule="and")
        assert not b.any()

    def test_uniform_row_rejected(self):
        with pytest.raises(LabelError):
            positive_mask(np.full((1, 4), 0.25), build_labels([0], 4).rows)


class TestRegularizer:
    def test_empty_positive_set(self, rng):
        p = rng.dirichlet(np.ones(5))
        assert regularizer(p, rng.dirichlet(np.ones(5)), np.zeros(5)) == 0.0

    def test_arithmetic(self):
        p = np.array([0.5, 0.2, 0.3])
        y = np.array([0.7, 0.3, 0.0])
        b = np.array([1.0, 1.0, 0.0])
        assert regularizer(p, y, b) == pytest.approx(0.59, abs=1e-15)

    def test_scalar_oracle_and_sign(self, rng):
        p = softmax(rng.normal(size=(10, 6)))
        y = rng.dirichlet(np.ones(6), size=10)
        b = (rng.uniform(size=(10, 6)) < 0.3).astype(float)
        r = regularizer(p, y, b)
        expected = [sum(y[i, k] * max(0.0, b[i, k] - p[i, k]) for k in range(6)) for i in range(10)]
        np.testing.assert_allclose(r, expected, atol=1e-15)
        assert np.all(r >= 0.0)

    def test_logits_gradient(self, rng):
        z = rng.normal(size=(3, 5))
        y = rng.dirichlet(np.ones(5), size=3)
        b = np.zeros((3, 5))
        b[np.arange(3), [0, 2, 4]] = 1.0
        numeric = central_diff(lambda: float(regularizer(softmax(z), y, b).sum()), z)
        np.testing.assert_allclose(regularizer_logits_grad(softmax(z), y, b), numeric, rtol=1e-4, atol=1e-9)


class TestLumixLoss:
    def test_reduction_to_cutmix(self, rng):
        z, la, lb, plan = _instance(rng, 8, 5)
        cfg = LumixConfig(r1=0.0, r2=0.0, eta=0.0)
        out, bd = lumix_loss(z, la, lb, plan, cfg, RngStream.from_seed(0))
        plain = soft_ce_loss(z, mix_labels(la.rows, lb.rows, plan.lambda0))
        assert out.value == plain.value
        np.testing.assert_array_equal(out.logits_grad, plain.logits_grad)
        np.testing.assert_array_equal(bd.lambda_final, bd.lambda0)
        assert not bd.tau.any()

    def test_unmixed_limit(self, rng):
        z, la, lb, _ = _instance(rng, 6, 4)
        cfg = LumixConfig(r1=0.0, r2=0.0, enable_reg=False)
        out, _ = lumix_loss(z, la, lb, _plan(np.ones(6), np.arange(6)), cfg, RngStream.from_seed(0))
        assert out.value == soft_ce_loss(z, la).value

    @pytest.mark.parametrize("case", range(100))
    def test_matches_scalar_pipeline(self, case):
        gen = np.random.default_rng(1000 + case)
        b, c = int(gen.integers(1, 9)), int(gen.integers(2, 11))
        eps = float(gen.choice([0.0, 0.1, 0.3]))
        r1 = float(gen.uniform(0, 0.8))
        cfg = LumixConfig(
            r1=r1, r2=float(gen.uniform(0, 1 - r1)), eta=float(gen.uniform(0, 2)),
            lambda_r_dist=str(gen.choice(["beta", "gaussian", "none"])), alpha_r=float(gen.uniform(0.5, 3)),
            gaussian_sigma=float(gen.uniform(0, 5)), smoothing_eps=eps,
            loss_kind=str(gen.choice(["softmax_ce", "bce"])), enable_lambda_s=bool(gen.uniform() < 0.8),
            enable_reg=bool(gen.uniform() < 0.8), positive_rule=str(gen.choice(["or", "and"])),
        )
        z, la, lb, plan = _instance(gen, b, c, eps)
        out, bd = lumix_loss(z, la, lb, plan, cfg, RngStream.from_seed(case))
        r1_eff = cfg.effective_ratios[0]
        lam_r = sample_lambda_r(cfg, b, RngStream.from_seed(case)) if r1_eff > 0 else np.zeros(b)
        np.testing.assert_array_equal(bd.lambda_r, lam_r)
        expected = scalar_pipeline(z, la.classes, lb.classes, eps, plan.lambda0, lam_r, cfg)
        assert out.value == pytest.approx(expected, abs=1e-12)
        assert np.all((bd.lambda_final >= 0) & (bd.lambda_final <= 1))

    def test_logits_gradient_with_frozen_targets(self, rng):
        """λs reads detached predictions, so the analytic gradient is the one with ỹ held fixed."""
        cfg = LumixConfig(eta=1.5)
        for _ in range(20):
            z, la, lb, plan = _instance(rng, 3, 5)
            out, bd = lumix_loss(z, la, lb, plan, cfg, RngStream.from_seed(1))
            targets = bd.targets.copy()
            b = positive_mask(la.rows, lb.rows)

            def frozen():
                p = softmax(z)
                return soft_ce_loss(z, targets).value + cfg.eta * float(regularizer(p, targets, b).mean())

            np.testing.assert_allclose(out.logits_grad, central_diff(frozen, z), rtol=1e-4, atol=1e-9)

    @pytest.mark.parametrize("loss_kind", list(LOSSES))
    def test_logits_gradient_without_prediction_weight(self, rng, loss_kind):
        """With λs off the loss is a plain function of the logits (λr stream fixed)."""
        cfg = LumixConfig(enable_lambda_s=False, eta=1.0, loss_kind=loss_kind)
        z, la, lb, plan = _instance(rng, 3, 5)
        out, _ = lumix_loss(z, la, lb, plan, cfg, RngStream.from_seed(4))
        numeric = central_diff(lambda: lumix_loss(z, la, lb, plan, cfg, RngStream.from_seed(4))[0].value, z)
        np.testing.assert_allclose(out.logits_grad, numeric, rtol=1e-4, atol=1e-9)

    def test_lambda_s_does_not_carry_gradient(self, rng):
        """Changing the predictions that feed λs, with ỹ frozen, leaves only the plain CE gradient."""
        cfg = LumixConfig(r1=0.0, r2=1.0, enable_reg=False)
        z, la, lb, plan = _instance(rng, 4, 6)
        out, bd = lumix_loss(z, la, lb, plan, cfg, RngStream.from_seed(0))
        np.testing.assert_allclose(out.logits_grad, soft_ce_loss(z, bd.targets).logits_grad, atol=1e-15)

    def test_breakdown_summary(self, rng):
        z, la, lb, plan = _instance(rng, 8, 4)
        _, bd = lumix_loss(z, la, lb, plan, LumixConfig(), RngStream.from_seed(3))
        s = bd.summary()
        assert set(s) >= {"lambda0_mean", "lambda_r_mean", "lambda_s_mean", "lambda_final_mean", "reg_mean"}
        assert s["reg_mean"] >= 0.0
        np.testing.assert_allclose(bd.tau, bd.lambda_final - bd.lambda0)

    def test_invalid_config_rejected_before_sampling(self, rng):
        z, la, lb, plan = _instance(rng, 4, 3)
        stream = RngStream.from_seed(0)
        before = RngStream.from_seed(0).uniform()
        with pytest.raises(ConfigError):
            lumix_loss(z, la, lb, plan, LumixConfig(r1=0.7, r2=0.7), stream)
        assert stream.uniform() == before

    def test_non_simplex_labels_rejected(self, rng):
        z, la, lb, plan = _instance(rng, 2, 3)
        bad = LabelBatch(np.array([[0.5, 0.5, 0.5], [1.0, 0.0, 0.0]]), np.array([0, 0]))
        with pytest.raises(LabelError):
            lumix_loss(z, bad, lb, plan, LumixConfig(), RngStream.from_seed(0))
