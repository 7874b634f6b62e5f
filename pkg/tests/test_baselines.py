import numpy as np
import pytest
import torch

from headcam.baselines import HogConfig, HogExtractor, hog_features, random_backbone
from headcam.errors import ConfigError, FormatError, ParameterError


def brute_force_length(height: int, width: int, config: HogConfig) -> int:
    """Counts block positions one by one."""
    cells_row, cells_col = height // config.cell_px, width // config.cell_px
    n_blocks = sum(
        1
        for row in range(cells_row)
        for col in range(cells_col)
        if row + config.block_cells <= cells_row and col + config.block_cells <= cells_col
    )
    return n_blocks * config.block_cells**2 * config.orientations


class TestHog:
    def test_length_at_224(self):
        features = hog_features(np.zeros((224, 224, 3), dtype=np.uint8))
        assert features.shape == (11664,)
        assert HogConfig().feature_length(224, 224) == 11664

    def test_length_formula(self, rng):
        config = HogConfig(orientations=6, cell_px=8, block_cells=2)
        for _ in range(10):
            height, width = (int(v) for v in rng.integers(16, 80, size=2))
            image = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
            assert len(hog_features(image, config)) == config.feature_length(height, width)
            assert config.feature_length(height, width) == brute_force_length(height, width, config)

    def test_blocks_have_unit_norm(self, rng):
        for _ in range(100):
            image = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
            norms = np.linalg.norm(hog_features(image).reshape(-1, 81), axis=1)
            np.testing.assert_allclose(norms, 1.0, atol=1e-6)

    def test_low_energy_blocks_have_unit_norm(self, rng):
        single_pixel = np.zeros((64, 64, 3), dtype=np.uint8)
        single_pixel[0, 0] = 1
        near_constant = 0.5 + 1e-3 * rng.random((64, 64, 3))
        for image in (single_pixel, near_constant):
            norms = np.linalg.norm(hog_features(image).reshape(-1, 81), axis=1)
            assert np.all((np.abs(norms - 1.0) <= 1e-6) | (norms == 0.0))
        assert np.any(np.linalg.norm(hog_features(single_pixel).reshape(-1, 81), axis=1) == 0.0)

    def test_constant_image(self):
        features = hog_features(np.full((64, 64, 3), 90, dtype=np.uint8))
        assert np.all(features == 0.0)

    def test_vertical_edge_fills_horizontal_gradient_bin(self):
        image = np.zeros((48, 48, 3), dtype=np.uint8)
        image[:, 24:] = 255
        # One block of 3×3 cells, 9 orientations each
        histograms = hog_features(image).reshape(3, 3, 9)
        edge_cells = histograms[:, 1, :]
        assert np.all(np.argmax(edge_cells, axis=1) == 0)
        assert np.all(histograms[:, [0, 2], :] == 0.0)

    def test_invariant_to_intensity_offset(self, rng):
        image = rng.uniform(0, 100, size=(64, 64, 3))
        for offset in rng.uniform(-50, 50, size=5):
            np.testing.assert_allclose(hog_features(image + offset), hog_features(image), atol=1e-10)

    def test_image_smaller_than_a_block(self):
        with pytest.raises(ParameterError):
            hog_features(np.zeros((40, 64, 3)))

    def test_grayscale_input(self):
        with pytest.raises(FormatError):
            hog_features(np.zeros((64, 64)))

    def test_signed_gradients(self):
        with pytest.raises(ConfigError):
            HogConfig(signed_gradients=True)

    def test_extractor_stacks_rows(self, rng):
        frames = rng.integers(0, 256, size=(3, 48, 48, 3), dtype=np.uint8)
        features = HogExtractor()(frames)
        assert features.shape == (3, 81)
        np.testing.assert_array_equal(features[1], hog_features(frames[1]))


class TestRandomBackbone:
    def test_same_seed(self):
        images = torch.randn(2, 3, 32, 32)
        with torch.no_grad():
            assert torch.equal(random_backbone("reference_cnn", 4)(images), random_backbone("reference_cnn", 4)(images))

    def test_different_seeds(self):
        images = torch.randn(2, 3, 32, 32)
        with torch.no_grad():
            assert not torch.equal(random_backbone("reference_cnn", 4)(images),
                                   random_backbone("reference_cnn", 5)(images))

    def test_inference_mode(self):
        assert not random_backbone("reference_cnn", 0).training

    def test_unknown_architecture(self):
        with pytest.raises(ConfigError):
            random_backbone("vgg", 0)
