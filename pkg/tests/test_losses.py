import math

import numpy as np
import pytest
import torch

from uwbright.losses import (
    FeatureExtractor,
    LossWeights,
    active_terms_for_epoch,
    brightness_loss,
    color_loss,
    composite_loss,
    lpips_loss,
    mse_loss,
    simple_loss,
    ssim_loss,
    structural_similarity,
    weighted_total,
)

import oracles


def rand_pair(rng, shape=(1, 3, 16, 16)):
    a = torch.from_numpy(rng.random(shape))
    b = torch.from_numpy(rng.random(shape))
    return a, b


class TestSimpleLoss:
    def test_zero_at_equality(self):
        x = torch.rand(2, 3, 8, 8)
        assert float(simple_loss(x, x)) == 0.0

    def test_mean_of_ones(self):
        zeros = torch.zeros(1, 3, 4, 4)
        assert float(simple_loss(zeros, torch.ones_like(zeros))) == pytest.approx(1.0)

    def test_matches_hand_computed_oracle(self):
        rng = np.random.default_rng(0)
        a, b = rand_pair(rng, (1, 3, 4, 4))
        assert float(simple_loss(a, b)) == pytest.approx(
            oracles.mse(a.numpy(), b.numpy()), abs=1e-7
        )

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            simple_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 5, 4))


class TestMseLoss:
    def test_identical_gives_zero(self):
        x = torch.rand(3, 3, 8, 8)
        assert float(mse_loss(x, x)) == 0.0

    def test_zeros_vs_ones(self):
        assert float(mse_loss(torch.zeros(1, 3, 4, 4), torch.ones(1, 3, 4, 4))) == 1.0

    def test_matches_oracle(self):
        rng = np.random.default_rng(1)
        a, b = rand_pair(rng)
        assert float(mse_loss(a, b)) == pytest.approx(oracles.mse(a.numpy(), b.numpy()), abs=1e-7)


class TestBrightnessLoss:
    def test_zero_at_equality(self):
        x = torch.rand(1, 3, 8, 8)
        assert float(brightness_loss(x, x)) == 0.0

    def test_uniform_offset_passes_through_luma(self):
        rng = np.random.default_rng(2)
        target = torch.from_numpy(rng.random((1, 3, 8, 8)) * 0.8)
        pred = target + 0.1  # no clipping; luma is affine in the channels
        assert float(brightness_loss(pred, target)) == pytest.approx(0.1, abs=1e-7)

    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(3)
        a, b = rand_pair(rng)
        expected = oracles.mean_abs_luma_diff(
            a[0].permute(1, 2, 0).numpy(), b[0].permute(1, 2, 0).numpy()
        )
        assert float(brightness_loss(a, b)) == pytest.approx(expected, abs=1e-7)


class TestColorLoss:
    def test_zero_angle_at_equality(self):
        rng = np.random.default_rng(4)
        x = torch.from_numpy(rng.random((1, 3, 8, 8)) + 0.1)
        assert float(color_loss(x, x)) < 1e-6

    def test_scale_invariance(self):
        rng = np.random.default_rng(5)
        pred = torch.from_numpy(rng.random((1, 3, 8, 8)) + 0.1)
        target = torch.from_numpy(rng.random((1, 3, 8, 8)) + 0.1)
        base = float(color_loss(pred, target))
        for k in (0.5, 2.0, 7.0):
            assert float(color_loss(k * pred, target)) == pytest.approx(base, abs=1e-6)

    def test_doubled_target_is_zero_angle(self):
        rng = np.random.default_rng(6)
        target = torch.from_numpy(rng.random((1, 3, 8, 8)) * 0.4 + 0.05)
        assert float(color_loss(2.0 * target, target)) < 1e-6

    def test_orthogonal_channels_give_right_angle(self):
        pred = torch.tensor([1.0, 0.0, 0.0]).view(1, 3, 1, 1)
        target = torch.tensor([0.0, 1.0, 0.0]).view(1, 3, 1, 1)
        assert float(color_loss(pred, target)) == pytest.approx(math.pi / 2, abs=1e-7)

    def test_zero_vectors_contribute_nothing(self):
        pred = torch.zeros(1, 3, 1, 2)
        target = torch.zeros(1, 3, 1, 2)
        pred[0, :, 0, 0] = torch.tensor([1.0, 0.0, 0.0])
        target[0, :, 0, 0] = torch.tensor([0.0, 1.0, 0.0])
        # second pixel: both vectors zero -> contributes 0; mean over 2 pixels
        assert float(color_loss(pred, target)) == pytest.approx(math.pi / 4, abs=1e-7)


class TestSsimLoss:
    def test_zero_at_equality(self):
        rng = np.random.default_rng(7)
        x = torch.from_numpy(rng.random((1, 3, 16, 16)))
        assert float(ssim_loss(x, x)) == 0.0

    def test_constant_pair_similarity_exactly_one(self):
        a = torch.full((1, 3, 16, 16), 0.37)
        assert float(structural_similarity(a, a.clone())) == 1.0

    def test_inverted_image_low_similarity(self):
        rng = np.random.default_rng(8)
        img = rng.random((24, 24, 3))
        got = float(structural_similarity(img, 1.0 - img))
        assert got < 0.5
        assert got == pytest.approx(oracles.ssim_direct(img, 1.0 - img), abs=1e-7)

    def test_symmetry(self):
        rng = np.random.default_rng(9)
        a, b = rand_pair(rng)
        assert float(ssim_loss(a, b)) == pytest.approx(float(ssim_loss(b, a)), abs=1e-7)

    def test_window_larger_than_image_is_an_error(self):
        with pytest.raises(ValueError):
            ssim_loss(torch.rand(1, 3, 8, 8), torch.rand(1, 3, 8, 8))


class TestLpipsLoss:
    def test_zero_at_equality(self, extractor):
        x = torch.rand(1, 3, 32, 32)
        assert float(lpips_loss(x, x, extractor)) == 0.0

    def test_monotone_in_perturbation(self, extractor):
        rng = np.random.default_rng(10)
        x = torch.from_numpy((rng.random((1, 3, 64, 64)) * 0.6 + 0.2).astype(np.float32))
        values = [
            float(lpips_loss(x, (x + delta).clamp(0, 1), extractor))
            for delta in (0.01, 0.05, 0.1)
        ]
        assert values[0] < values[1] < values[2]

    def test_deterministic(self, extractor):
        rng = np.random.default_rng(11)
        a = torch.from_numpy(rng.random((1, 3, 32, 32)).astype(np.float32))
        b = torch.from_numpy(rng.random((1, 3, 32, 32)).astype(np.float32))
        assert float(lpips_loss(a, b, extractor)) == float(lpips_loss(a, b, extractor))

    def test_missing_extractor_instructs_fallback(self):
        with pytest.raises(RuntimeError, match="seeded"):
            lpips_loss(torch.rand(1, 3, 32, 32), torch.rand(1, 3, 32, 32), None)

    def test_too_small_image_is_an_error(self, extractor):
        with pytest.raises(ValueError, match="small"):
            lpips_loss(torch.rand(1, 3, 16, 16), torch.rand(1, 3, 16, 16), extractor)

    def test_pretrained_unavailable_raises_with_instruction(self, monkeypatch):
        import torchvision.models

        def boom(*args, **kwargs):
            raise OSError("no network")

        monkeypatch.setattr(torchvision.models, "alexnet", boom)
        with pytest.raises(RuntimeError, match="seeded"):
            FeatureExtractor.pretrained()


class TestCompositeLoss:
    def test_zero_total_at_equality_any_epoch(self, extractor):
        rng = np.random.default_rng(12)
        x = torch.from_numpy(rng.random((1, 3, 32, 32)).astype(np.float32))
        for epoch in (0, 5, 19, 20, 25):
            report = composite_loss(x, x.clone(), epoch, LossWeights(), extractor)
            assert report.total_value < 1e-5

    def test_staged_activation(self, extractor):
        assert active_terms_for_epoch(5) == frozenset({"lpips", "ssim", "mse"})
        assert active_terms_for_epoch(19) == frozenset({"lpips", "ssim", "mse"})
        assert active_terms_for_epoch(20) == frozenset(
            {"lpips", "ssim", "mse", "brightness", "color"}
        )
        rng = np.random.default_rng(13)
        x = torch.from_numpy(rng.random((1, 3, 32, 32)).astype(np.float32))
        y = torch.from_numpy(rng.random((1, 3, 32, 32)).astype(np.float32))
        early = composite_loss(x, y, 5, LossWeights(), extractor)
        assert early.active_terms == frozenset({"lpips", "ssim", "mse"})
        assert set(early.per_term) == set(early.active_terms)
        late = composite_loss(x, y, 25, LossWeights(), extractor)
        assert late.active_terms == frozenset({"lpips", "ssim", "mse", "brightness", "color"})

    def test_unit_terms_arithmetic(self):
        per_term = {name: 1.0 for name in ("lpips", "ssim", "mse", "brightness", "color")}
        total = weighted_total(per_term, LossWeights(), per_term.keys())
        assert total == pytest.approx(153.83, abs=1e-9)

    def test_total_is_weighted_dot_product(self, extractor):
        rng = np.random.default_rng(14)
        x = torch.from_numpy(rng.random((1, 3, 32, 32)).astype(np.float32))
        y = torch.from_numpy(rng.random((1, 3, 32, 32)).astype(np.float32))
        weights = LossWeights()
        report = composite_loss(x, y, 25, weights, extractor)
        recomputed = sum(
            weights.as_dict()[name] * value for name, value in report.scalars().items()
        )
        assert report.total_value == pytest.approx(recomputed, rel=1e-6)

    def test_every_active_term_has_gradient(self, extractor):
        rng = np.random.default_rng(15)
        x = torch.from_numpy(rng.random((1, 3, 32, 32)).astype(np.float32))
        y = torch.from_numpy(rng.random((1, 3, 32, 32)).astype(np.float32))
        report_terms = composite_loss(x, y, 25, LossWeights(), extractor).per_term
        for name in report_terms:
            xg = x.clone().requires_grad_(True)
            term = composite_loss(xg, y, 25, LossWeights(), extractor).per_term[name]
            term.backward()
            assert float(xg.grad.abs().max()) > 0.0, f"dead gradient for {name}"

    def test_finite_difference_gradient(self, extractor):
        torch.manual_seed(0)
        ex64 = FeatureExtractor.seeded(0).double()
        rng = np.random.default_rng(16)
        x = torch.from_numpy(rng.random((1, 3, 32, 32)))
        y = torch.from_numpy(rng.random((1, 3, 32, 32)))
        xg = x.clone().requires_grad_(True)
        composite_loss(xg, y, 25, LossWeights(), ex64).total.backward()
        h = 1e-5
        coords = [(0, 0, 5, 7), (0, 1, 20, 3), (0, 2, 13, 29)]
        for coord in coords:
            plus, minus = x.clone(), x.clone()
            plus[coord] += h
            minus[coord] -= h
            f_plus = composite_loss(plus, y, 25, LossWeights(), ex64).total_value
            f_minus = composite_loss(minus, y, 25, LossWeights(), ex64).total_value
            fd = (f_plus - f_minus) / (2 * h)
            autograd = float(xg.grad[coord])
            assert fd == pytest.approx(autograd, rel=1e-3, abs=1e-6)


class TestTermProperties:
    def test_every_term_nonnegative_on_random_pairs(self, extractor):
        rng = np.random.default_rng(17)
        for _ in range(5):
            a = torch.from_numpy(rng.random((1, 3, 32, 32)).astype(np.float32))
            b = torch.from_numpy(rng.random((1, 3, 32, 32)).astype(np.float32))
            assert float(simple_loss(a, b)) >= 0.0
            assert float(mse_loss(a, b)) >= 0.0
            assert float(ssim_loss(a, b)) >= 0.0
            assert float(brightness_loss(a, b)) >= 0.0
            assert float(color_loss(a, b)) >= 0.0
            assert float(lpips_loss(a, b, extractor)) >= 0.0


class TestLossWeights:
    def test_defaults(self):
        w = LossWeights()
        assert (w.lpips, w.ssim, w.mse, w.brightness, w.color) == (30.0, 2.83, 1.0, 20.0, 100.0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            LossWeights(color=-1.0)
