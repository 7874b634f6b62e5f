import numpy as np
import pytest
import torch
from skimage.color import rgb2hsv

from headcam.augment import (
    AugmentConfig,
    ContrastiveAugmentConfig,
    FramePipeline,
    NormalizationConstants,
    color_jitter,
    normalize,
    random_grayscale,
    stream_generator,
    to_tensor,
)
from headcam.errors import ConfigError, FormatError

ZERO_STRENGTH = dict(brightness=0.0, contrast=0.0, saturation=0.0, hue=0.0)


@pytest.fixture
def frame(rng) -> np.ndarray:
    return rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)


class TestColorJitter:
    def test_zero_strengths_are_identity(self, frame):
        image = to_tensor(frame)
        config = AugmentConfig(jitter_prob=1.0, **ZERO_STRENGTH)
        assert torch.equal(color_jitter(image, config, stream_generator(0, 1)), image)

    def test_same_stream_same_output(self, frame):
        pipeline = FramePipeline(AugmentConfig())
        first = pipeline(frame, stream_generator(7, 0, 3, 1))
        second = pipeline(frame, stream_generator(7, 0, 3, 1))
        assert torch.equal(first, second)

    def test_streams_differ_per_view(self, frame):
        pipeline = FramePipeline(AugmentConfig(jitter_prob=1.0))
        first = pipeline(frame, stream_generator(7, 0, 3, 0))
        second = pipeline(frame, stream_generator(7, 0, 3, 1))
        assert not torch.equal(first, second)

    def test_saturation_keeps_gray_pixels(self, rng):
        gray = np.repeat(rng.integers(0, 256, size=(8, 8, 1), dtype=np.uint8), 3, axis=2)
        image = to_tensor(gray)
        config = AugmentConfig(jitter_prob=1.0, brightness=0.0, contrast=0.0, saturation=0.8, hue=0.0)
        for seed in range(10):
            out = color_jitter(image, config, stream_generator(seed))
            np.testing.assert_allclose(out.numpy(), image.numpy(), atol=1e-4)
            hsv = rgb2hsv(out.permute(1, 2, 0).numpy().astype(np.float64))
            np.testing.assert_allclose(hsv[..., 1], 0.0, atol=1e-5)

    def test_output_stays_in_unit_range(self, frame):
        config = AugmentConfig(jitter_prob=1.0)
        for seed in range(10):
            out = color_jitter(to_tensor(frame), config, stream_generator(seed))
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_application_rate_matches_jitter_prob(self):
        image = torch.full((3, 2, 2), 0.5)
        config = AugmentConfig(jitter_prob=0.8, brightness=0.5, contrast=0.0, saturation=0.0, hue=0.0)
        n_draws = 10_000
        applied = sum(
            not torch.equal(color_jitter(image, config, stream_generator(3, draw)), image) for draw in range(n_draws)
        )
        sigma = np.sqrt(n_draws * 0.8 * 0.2)
        assert abs(applied - 0.8 * n_draws) <= 3 * sigma

    @pytest.mark.parametrize("kwargs", [dict(jitter_prob=1.5), dict(brightness=-0.1), dict(hue=0.6)])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigError):
            AugmentConfig(**kwargs)


class TestGrayscale:
    def test_pure_red(self):
        red = torch.zeros(3, 2, 2)
        red[0] = 1.0
        out = random_grayscale(red, p=1.0, generator=stream_generator(0))
        np.testing.assert_allclose(out.numpy(), 0.299, atol=1e-6)

    def test_probability_zero_is_identity(self, frame):
        image = to_tensor(frame)
        assert torch.equal(random_grayscale(image, p=0.0, generator=stream_generator(0)), image)

    def test_gray_is_a_fixed_point(self):
        gray = torch.full((3, 4, 4), 0.4)
        out = random_grayscale(gray, p=1.0, generator=stream_generator(0))
        np.testing.assert_allclose(out.numpy(), 0.4, atol=1e-6)

    def test_wrong_channel_count(self):
        with pytest.raises(FormatError):
            random_grayscale(torch.zeros(1, 4, 4), p=1.0, generator=stream_generator(0))


class TestNormalize:
    def test_channel_mean_maps_to_zero(self):
        constants = NormalizationConstants()
        image = torch.tensor(constants.mean).view(3, 1, 1).expand(3, 2, 2)
        np.testing.assert_allclose(normalize(image, constants).numpy(), 0.0, atol=1e-6)

    def test_unit_pixel(self):
        out = normalize(torch.ones(3, 1, 1), NormalizationConstants())
        assert float(out[0, 0, 0]) == pytest.approx((1 - 0.485) / 0.229, abs=1e-5)
        assert float(out[0, 0, 0]) == pytest.approx(2.249, abs=1e-3)

    def test_standard_constants_are_identity(self, frame):
        image = to_tensor(frame)
        constants = NormalizationConstants(mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0))
        assert torch.equal(normalize(image, constants), image)

    def test_zero_std(self):
        with pytest.raises(ConfigError):
            NormalizationConstants(std=(0.2, 0.0, 0.2))


class TestFramePipeline:
    def test_disabled_augmentation_only_normalizes(self, frame):
        pipeline = FramePipeline(AugmentConfig(enabled=False))
        expected = normalize(to_tensor(frame), NormalizationConstants())
        assert torch.equal(pipeline(frame, stream_generator(0)), expected)

    def test_contrastive_views(self, frame):
        pipeline = FramePipeline(AugmentConfig(), contrastive=ContrastiveAugmentConfig())
        views = [pipeline(frame, stream_generator(1, 0, 0, view)) for view in range(2)]
        assert views[0].shape == (3, 16, 16)
        assert not torch.equal(views[0], views[1])

    def test_contrastive_views_are_seeded(self, frame):
        pipeline = FramePipeline(AugmentConfig(), contrastive=ContrastiveAugmentConfig())
        assert torch.equal(pipeline(frame, stream_generator(1, 0, 0, 1)), pipeline(frame, stream_generator(1, 0, 0, 1)))

    def test_crop_leaves_global_rng_untouched(self, frame):
        pipeline = FramePipeline(AugmentConfig(), contrastive=ContrastiveAugmentConfig())
        torch.manual_seed(0)
        expected = torch.rand(4)
        torch.manual_seed(0)
        pipeline(frame, stream_generator(2))
        assert torch.equal(torch.rand(4), expected)

    def test_invalid_crop_scale(self):
        with pytest.raises(ConfigError):
            ContrastiveAugmentConfig(crop_scale_min=0.0)
