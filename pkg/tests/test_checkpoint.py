import json
import zipfile
from pathlib import Path

import numpy as np
import pytest
import torch

from headcam.errors import ConfigError, DataFileNotFoundError, FormatError
from headcam.objectives import Checkpoint, build_backbone, cache_dir, load_checkpoint, resolve_weights, save_checkpoint


@pytest.fixture
def checkpoint() -> Checkpoint:
    backbone = build_backbone("reference_cnn", embedding_dim=16, seed=3)
    return Checkpoint(
        architecture_id=backbone.architecture_id,
        embedding_dim=backbone.embedding_dim,
        backbone_state=backbone.state_dict(),
        config={"objective": "temporal_classification"},
        seed=3,
        epoch=2,
        metrics={"loss": 1.5, "accuracy": 0.5, "step": 10},
    )


class TestBackbones:
    def test_same_seed_same_embeddings(self):
        images = torch.randn(2, 3, 32, 32)
        first = build_backbone("reference_cnn", seed=5).eval()
        second = build_backbone("reference_cnn", seed=5).eval()
        with torch.no_grad():
            assert torch.equal(first(images), second(images))

    def test_different_seeds_differ(self):
        images = torch.randn(2, 3, 32, 32)
        with torch.no_grad():
            first = build_backbone("reference_cnn", seed=5).eval()(images)
            second = build_backbone("reference_cnn", seed=6).eval()(images)
        assert not torch.equal(first, second)

    def test_embedding_is_spatial_average(self):
        backbone = build_backbone("reference_cnn", seed=0).eval()
        with torch.no_grad():
            embeddings, spatial = backbone.embed(torch.randn(2, 3, 32, 32))
        assert spatial.shape == (2, 128, 4, 4)
        torch.testing.assert_close(embeddings, spatial.mean(dim=(2, 3)))

    def test_mobilenet_geometry(self):
        backbone = build_backbone("mobilenet_v2", seed=0).eval()
        with torch.no_grad():
            embeddings, spatial = backbone.embed(torch.randn(1, 3, 224, 224))
        assert embeddings.shape == (1, 1280)
        assert spatial.shape == (1, 1280, 7, 7)
        assert backbone.layer_names[-1] == "features.18"

    def test_unknown_architecture(self):
        with pytest.raises(ConfigError):
            build_backbone("resnet_1000")

    def test_missing_weights_file(self, tmp_path):
        with pytest.raises(DataFileNotFoundError):
            build_backbone("mobilenet_v2", path_weights=tmp_path / "missing.pt")

    def test_cache_dir_override(self, monkeypatch, tmp_path):
        monkeypatch.setenv("HEADCAM_CACHE_DIR", str(tmp_path))
        assert cache_dir() == tmp_path

    def test_relative_weights_come_from_cache_dir(self, monkeypatch, tmp_path):
        dir_cache = tmp_path / "cache"
        dir_cache.mkdir()
        source = build_backbone("mobilenet_v2", seed=1)
        torch.save(source.features.state_dict(), dir_cache / "mobilenet.pt")
        monkeypatch.setenv("HEADCAM_CACHE_DIR", str(dir_cache))
        monkeypatch.chdir(tmp_path)
        assert resolve_weights(Path("mobilenet.pt")) == dir_cache / "mobilenet.pt"
        loaded = build_backbone("mobilenet_v2", seed=2, path_weights=Path("mobilenet.pt"))
        for name, tensor in source.features.state_dict().items():
            assert torch.equal(loaded.features.state_dict()[name], tensor)

    def test_existing_relative_weights_are_used_as_given(self, monkeypatch, tmp_path):
        monkeypatch.setenv("HEADCAM_CACHE_DIR", str(tmp_path / "cache"))
        monkeypatch.chdir(tmp_path)
        (tmp_path / "local.pt").touch()
        assert resolve_weights(Path("local.pt")) == Path("local.pt")


class TestCheckpoint:
    def test_round_trip_embeds_identically(self, checkpoint, tmp_path):
        path_file = save_checkpoint(checkpoint, tmp_path / "checkpoint.zip")
        loaded = load_checkpoint(path_file)
        images = torch.randn(3, 3, 32, 32)
        with torch.no_grad():
            assert torch.equal(checkpoint.backbone().eval()(images), loaded.backbone()(images))
        assert loaded.metrics == checkpoint.metrics
        assert loaded.epoch == 2
        assert loaded.id == "temporal_classification-reference_cnn-seed3-epoch2"

    def test_no_temporary_files_left(self, checkpoint, tmp_path):
        save_checkpoint(checkpoint, tmp_path / "checkpoint.zip")
        save_checkpoint(checkpoint, tmp_path / "checkpoint.zip")
        assert [path.name for path in tmp_path.iterdir()] == ["checkpoint.zip"]

    def test_metadata_is_readable_json(self, checkpoint, tmp_path):
        save_checkpoint(checkpoint, tmp_path / "checkpoint.zip")
        with zipfile.ZipFile(tmp_path / "checkpoint.zip") as archive:
            metadata = json.loads(archive.read("metadata.json"))
        assert metadata["format_version"] == "1.0"
        assert metadata["embedding_dim"] == 16

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFileNotFoundError):
            load_checkpoint(tmp_path / "missing.zip")

    def test_not_an_archive(self, tmp_path):
        (tmp_path / "checkpoint.zip").write_bytes(np.arange(10).tobytes())
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "checkpoint.zip")

    def test_unknown_major_version(self, checkpoint, tmp_path):
        path_file = save_checkpoint(checkpoint, tmp_path / "checkpoint.zip")
        with zipfile.ZipFile(path_file) as archive:
            state = archive.read("state.pt")
        with zipfile.ZipFile(tmp_path / "future.zip", "w") as archive:
            archive.writestr("metadata.json", json.dumps({**checkpoint.metadata(), "format_version": "2.0"}))
            archive.writestr("state.pt", state)
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "future.zip")
