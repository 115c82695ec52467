"""CutMix / Mixup / patch variants and batch mix plans."""

import numpy as np
import pytest

from augment.mixing import (AugmentConfig, CropBox, apply_cutmix, apply_mix_plan, apply_mixup, build_mix_plan,
                            check_grid, mix_patches, patch_layout, per_patch_lambda_mix, permute_patches,
                            sample_cutmix_box, shuffle_patches)
from augment.sampling import RngStream, RngStreams
from common.errors import ConfigError, ShapeError


class TestCutMixBox:
    def test_mask_count_matches_lambda_exactly(self):
        """Pasted-pixel fraction equals the returned λ0 for every box, clipped or not."""
        rng = RngStream.from_seed(0)
        gen = np.random.default_rng(0)
        for _ in range(100_000):
            h, w = int(gen.integers(1, 17)), int(gen.integers(1, 17))
            raw = float(gen.uniform()) if gen.uniform() < 0.9 else float(gen.choice([0.0, 1.0]))
            box, lam = sample_cutmix_box(h, w, raw, rng)
            mixed = apply_cutmix(np.ones((1, h, w)), np.zeros((1, h, w)), box)
            assert mixed.sum() / (h * w) == lam

    def test_full_box_when_centred(self):
        class Centre:
            def integers(self, low, high, size=None):
                return high // 2

        box, lam = sample_cutmix_box(8, 8, 1.0, Centre())
        assert box == CropBox(0, 0, 8, 8)
        assert lam == 1.0

    def test_clipping_at_corner(self):
        class Corner:
            def integers(self, low, high, size=None):
                return 0

        box, lam = sample_cutmix_box(10, 10, 0.36, Corner())     # 6×6 box centred on (0, 0)
        assert box == CropBox(0, 0, 3, 3)
        assert lam == pytest.approx(0.09)

    def test_zero_lambda_keeps_b(self, rng):
        xa, xb = rng.uniform(size=(2, 3, 6, 6))
        box, lam = sample_cutmix_box(6, 6, 0.0, RngStream.from_seed(0))
        assert lam == 0.0
        np.testing.assert_array_equal(apply_cutmix(xa, xb, box), xb)

    def test_box_outside_image_rejected(self):
        with pytest.raises(ShapeError):
            apply_cutmix(np.zeros((1, 4, 4)), np.zeros((1, 4, 4)), CropBox(2, 2, 3, 3))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            apply_cutmix(np.zeros((1, 4, 4)), np.zeros((1, 4, 5)), CropBox(0, 0, 1, 1))

    def test_inputs_untouched(self, rng):
        xa, xb = rng.uniform(size=(2, 1, 5, 5))
        a0, b0 = xa.copy(), xb.copy()
        apply_cutmix(xa, xb, CropBox(1, 1, 2, 2))
        np.testing.assert_array_equal(xa, a0)
        np.testing.assert_array_equal(xb, b0)


class TestMixup:
    def test_endpoints(self, rng):
        xa, xb = rng.uniform(size=(2, 1, 4, 4))
        np.testing.assert_array_equal(apply_mixup(xa, xb, 1.0), xa)
        np.testing.assert_array_equal(apply_mixup(xa, xb, 0.0), xb)

    def test_per_sample_lambda(self, rng):
        xa, xb = rng.uniform(size=(2, 3, 1, 2, 2))
        lam = np.array([0.0, 0.5, 1.0])
        out = apply_mixup(xa, xb, lam)
        np.testing.assert_allclose(out[1], 0.5 * xa[1] + 0.5 * xb[1])
        np.testing.assert_array_equal(out[2], xa[2])

    def test_lambda_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            apply_mixup(np.zeros((1, 2, 2)), np.zeros((1, 2, 2)), 1.5)


class TestPatches:
    def test_grid_one_is_identity(self, rng):
        x = rng.uniform(size=(1, 8, 8))
        np.testing.assert_array_equal(shuffle_patches(x, 1, RngStream.from_seed(0)), x)

    def test_known_permutation(self):
        x = np.arange(16.0).reshape(1, 4, 4)
        # 2×2 grid, patches 0 1 / 2 3; reverse them
        out = permute_patches(x, 2, np.array([3, 2, 1, 0]))
        np.testing.assert_array_equal(out[0, :2, :2], x[0, 2:, 2:])
        np.testing.assert_array_equal(out[0, 2:, 2:], x[0, :2, :2])
        np.testing.assert_array_equal(out[0, :2, 2:], x[0, 2:, :2])

    def test_shuffle_preserves_patch_contents(self, rng):
        x = rng.uniform(size=(2, 8, 8))
        out = shuffle_patches(x, 4, RngStream.from_seed(5))
        def patches(a):
            return sorted(tuple(a[:, i:i + 2, j:j + 2].ravel()) for i in range(0, 8, 2) for j in range(0, 8, 2))
        assert patches(out) == patches(x)

    def test_indivisible_grid_rejected(self):
        with pytest.raises(ShapeError):
            check_grid(32, 32, 5)
        with pytest.raises(ShapeError):
            shuffle_patches(np.zeros((1, 6, 6)), 4, RngStream.from_seed(0))

    def test_bad_order_rejected(self):
        with pytest.raises(ValueError):
            permute_patches(np.zeros((1, 4, 4)), 2, np.array([0, 0, 1, 2]))

    def test_mix_patches(self, rng):
        xa, xb = rng.uniform(size=(2, 1, 4, 4))
        out = mix_patches(xa, xb, 2, np.array([1.0, 0.0, 0.0, 0.25]))
        np.testing.assert_array_equal(out[0, :2, :2], xa[0, :2, :2])
        np.testing.assert_array_equal(out[0, :2, 2:], xb[0, :2, 2:])
        np.testing.assert_allclose(out[0, 2:, 2:], 0.25 * xa[0, 2:, 2:] + 0.75 * xb[0, 2:, 2:])

    def test_per_patch_lambda_weight_is_mean(self, rng):
        xa, xb = np.ones((1, 8, 8)), np.zeros((1, 8, 8))
        out, lam = per_patch_lambda_mix(xa, xb, 4, 0.8, RngStream.from_seed(2))
        assert out.mean() == pytest.approx(lam, abs=1e-12)

    def test_patch_layout_keeps_unit_side(self):
        assert patch_layout(1, 16, 4) == (1, 4, 1, 4)
        assert patch_layout(32, 32, 4) == (4, 4, 8, 8)
        with pytest.raises(ShapeError):
            patch_layout(1, 10, 4)


class TestMixPlan:
    def _plan(self, mode, seed=0, b=8, h=8, w=8, **aug):
        return build_mix_plan(b, h, w, AugmentConfig(mode=mode, **aug), 0.8, RngStreams(seed))

    def test_none_is_identity(self, rng):
        x = rng.uniform(size=(4, 1, 8, 8))
        plan = self._plan("none", b=4)
        np.testing.assert_array_equal(plan.pairing, np.arange(4))
        np.testing.assert_array_equal(plan.lambda0, np.ones(4))
        np.testing.assert_array_equal(apply_mix_plan(x, plan), x)

    def test_deterministic_per_seed(self):
        a, b = self._plan("cutmix", seed=4), self._plan("cutmix", seed=4)
        assert a.box == b.box
        np.testing.assert_array_equal(a.pairing, b.pairing)
        np.testing.assert_array_equal(a.lambda0, b.lambda0)

    def test_cutmix_lambda_is_box_fraction(self):
        for seed in range(20):
            plan = self._plan("cutmix", seed=seed, h=8, w=12)
            np.testing.assert_array_equal(plan.lambda0, np.full(8, plan.box.area / 96))

    def test_cutmix_pixels_follow_pairing(self, rng):
        x = rng.uniform(size=(6, 1, 8, 8))
        plan = self._plan("cutmix", seed=3, b=6)
        out = apply_mix_plan(x, plan)
        mask = plan.box.mask(8, 8)
        for i in range(6):
            np.testing.assert_array_equal(out[i, 0][mask], x[i, 0][mask])
            np.testing.assert_array_equal(out[i, 0][~mask], x[plan.pairing[i], 0][~mask])

    def test_mixup_lambda_in_range(self):
        plan = self._plan("mixup", seed=1)
        assert plan.box is None
        assert np.all((plan.lambda0 >= 0) & (plan.lambda0 <= 1))
        assert len(set(plan.lambda0.tolist())) == 1

    def test_uniform_lambda0_distribution(self):
        plans = [self._plan("mixup", seed=s, lambda0_dist="uniform") for s in range(200)]
        lam = np.array([p.lambda0[0] for p in plans])
        assert 0.4 < lam.mean() < 0.6

    @pytest.mark.parametrize("p,expected", [(1.0, "cutmix"), (0.0, "mixup")])
    def test_switch_probability_extremes(self, p, expected):
        for seed in range(10):
            assert self._plan("cutmix_mixup", seed=seed, switch_prob=p).mode == expected

    def test_switch_mixes_both(self):
        modes = {self._plan("cutmix_mixup", seed=s).mode for s in range(40)}
        assert modes == {"cutmix", "mixup"}

    def test_cutmix_shuffle_orders(self, rng):
        plan = self._plan("cutmix_shuffle", seed=2, b=3, shuffle_grid=2)
        assert plan.shuffle_orders.shape == (3, 4)
        for order in plan.shuffle_orders:
            assert sorted(order.tolist()) == [0, 1, 2, 3]
        x = rng.uniform(size=(3, 1, 8, 8))
        assert apply_mix_plan(x, plan).shape == x.shape

    def test_per_patch_lambda_plan(self):
        plan = self._plan("per_patch_lambda", seed=2, b=5, patch_grid=2)
        assert plan.patch_lambdas.shape == (5, 4)
        np.testing.assert_allclose(plan.lambda0, plan.patch_lambdas.mean(axis=1))

    def test_apply_is_pure(self, rng):
        x = rng.uniform(size=(4, 1, 8, 8))
        x0 = x.copy()
        plan = self._plan("cutmix", seed=6, b=4)
        np.testing.assert_array_equal(apply_mix_plan(x, plan), apply_mix_plan(x, plan))
        np.testing.assert_array_equal(x, x0)

    def test_indivisible_patch_grid_rejected(self):
        with pytest.raises(ShapeError):
            self._plan("per_patch_lambda", h=6, w=6, patch_grid=4)

    def test_invalid_mode_rejected(self):
        with pytest.raises(ConfigError):
            AugmentConfig(mode="cutout").validate()
