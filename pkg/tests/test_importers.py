import numpy as np
import polars as pl
import pytest

from conftest import make_manifest
from headcam.errors import DataFileNotFoundError, EmptyInputError, FormatError, ParameterError
from headcam.importers import (
    AnnotationCell,
    AnnotationFile,
    DataConfig,
    FrameStore,
    Manifest,
    PreprocessConfig,
    SynonymTable,
    assign_temporal_classes,
    curate_labels,
    decode_and_sample,
    discover_recordings,
    frames_per_class,
    ingest_recordings,
    normalize_label,
    preprocess_frame,
    probe_recording,
)
from headcam.importers.preprocess import resized_shape
from headcam.importers.recordings import sample_timestamps


@pytest.fixture
def stream_dir(tmp_path, rng):
    """Three 10 s frame streams of 16×16 frames stored at 2 fps."""
    dir_videos = tmp_path / "videos"
    dir_videos.mkdir()
    for name in ("S_rec02", "S_rec01", "A_rec01"):
        np.save(dir_videos / f"{name}.npy", rng.integers(0, 256, size=(20, 16, 16, 3), dtype=np.uint8))
    (dir_videos / "notes.txt").write_text("not a recording")
    return dir_videos


class TestSampling:
    def test_uniform_timestamps(self):
        np.testing.assert_array_equal(sample_timestamps(10.0, 1.0), np.arange(10.0))

    def test_frame_count_at_five_fps(self):
        assert len(sample_timestamps(288.0, 5.0)) == 1440

    def test_stream_sampling(self, tmp_path):
        frames = (np.arange(300) % 256).astype(np.uint8).reshape(300, 1, 1, 1).repeat(3, axis=3)
        np.save(tmp_path / "clip.npy", frames)
        recording = probe_recording(tmp_path / "clip.npy", stream_fps=30.0)
        assert recording.duration_s == pytest.approx(10.0)
        sampled = list(decode_and_sample(recording, target_fps=1.0))
        assert [timestamp for timestamp, _ in sampled] == [float(t) for t in range(10)]
        # Nearest native frame of t seconds is frame 30 t
        assert [int(frame[0, 0, 0]) for _, frame in sampled] == [(30 * t) % 256 for t in range(10)]

    def test_sampling_is_deterministic(self, tmp_path, rng):
        np.save(tmp_path / "clip.npy", rng.integers(0, 256, size=(45, 4, 4, 3), dtype=np.uint8))
        recording = probe_recording(tmp_path / "clip.npy", stream_fps=30.0)
        first = [t for t, _ in decode_and_sample(recording, target_fps=7.0)]
        second = [t for t, _ in decode_and_sample(recording, target_fps=7.0)]
        assert first == second

    def test_target_above_native_fps(self, tmp_path):
        np.save(tmp_path / "clip.npy", np.zeros((30, 4, 4, 3), dtype=np.uint8))
        recording = probe_recording(tmp_path / "clip.npy", stream_fps=30.0)
        with pytest.raises(ParameterError):
            list(decode_and_sample(recording, target_fps=60.0))

    def test_discover_filters_by_child(self, stream_dir):
        recordings = discover_recordings(stream_dir, child_tag="S", stream_fps=2.0)
        assert [recording.id for recording in recordings] == ["S_rec01", "S_rec02"]
        assert all(recording.child_tag == "S" for recording in recordings)
        assert len(discover_recordings(stream_dir, stream_fps=2.0)) == 3


class TestPreprocess:
    def test_resize_of_vga_frame(self):
        assert resized_shape(480, 640, 256) == (256, 341)
        frame = np.zeros((480, 640, 3), dtype=np.uint8)
        assert preprocess_frame(frame).shape == (224, 224, 3)

    def test_crop_geometry_on_square_input(self, rng):
        frame = rng.integers(0, 256, size=(256, 256, 3), dtype=np.uint8)
        np.testing.assert_array_equal(preprocess_frame(frame), frame[0:224, 16:240])

    def test_constant_image_passes_unchanged(self):
        frame = np.full((224, 224, 3), 128, dtype=np.uint8)
        out = preprocess_frame(frame)
        assert out.shape == (224, 224, 3)
        assert np.all(out == 128)

    def test_wrong_channel_count(self):
        with pytest.raises(FormatError):
            preprocess_frame(np.zeros((256, 256), dtype=np.uint8))
        with pytest.raises(FormatError):
            preprocess_frame(np.zeros((256, 256, 4), dtype=np.uint8))

    def test_invalid_geometry(self):
        with pytest.raises(ParameterError):
            PreprocessConfig(minor_edge=200, crop_size=224)


class TestTemporalClasses:
    def test_floor_rule(self):
        labeling = assign_temporal_classes(make_manifest(10), segment_length_s=5.0)
        np.testing.assert_array_equal(labeling.class_ids, [0, 0, 0, 0, 0, 1, 1, 1, 1, 1])
        assert labeling.n_classes == 2

    def test_remainder_episode(self):
        labeling = assign_temporal_classes(make_manifest(11), segment_length_s=5.0)
        assert labeling.n_classes == 3
        assert np.sum(labeling.class_ids == 2) == 1

    def test_drop_last_episode(self):
        labeling = assign_temporal_classes(make_manifest(11), segment_length_s=5.0, drop_last_episode=True)
        assert labeling.n_classes == 2
        assert len(labeling.frame_ids) == 10

    def test_reset_per_recording(self):
        manifest = make_manifest(8, recording_ids=["a"] * 3 + ["b"] * 5)
        labeling = assign_temporal_classes(manifest, segment_length_s=2.0, reset_episodes_per_recording=True)
        np.testing.assert_array_equal(labeling.class_ids, [0, 0, 1, 2, 2, 3, 3, 4])

    def test_frames_per_class_constant(self):
        assert frames_per_class(288.0, 5.0) == 1440

    def test_partition_property(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 2000))
            fps = float(rng.choice([0.5, 1.0, 5.0]))
            segment = float(rng.uniform(2.0, 100.0))
            labeling = assign_temporal_classes(make_manifest(n, fps=fps), segment_length_s=segment)
            steps = np.diff(labeling.class_ids)
            assert np.all((steps == 0) | (steps == 1))
            sizes = np.bincount(labeling.class_ids)
            assert np.all(sizes[:-1] == frames_per_class(segment, fps))

    def test_matches_frame_by_frame_count(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 500))
            fps = float(rng.choice([0.5, 1.0, 2.0, 5.0, 25.0]))
            segment = float(rng.uniform(1.0, 60.0))
            n_per_class = frames_per_class(segment, fps)
            if n_per_class < 1:
                continue
            expected, class_id, count = [], 0, 0
            for _ in range(n):
                if count == n_per_class:
                    class_id, count = class_id + 1, 0
                expected.append(class_id)
                count += 1
            labeling = assign_temporal_classes(make_manifest(n, fps=fps), segment_length_s=segment)
            np.testing.assert_array_equal(labeling.class_ids, expected)

    def test_class_of(self):
        labeling = assign_temporal_classes(make_manifest(10), segment_length_s=5.0)
        assert labeling.class_of(7) == 1
        with pytest.raises(KeyError):
            labeling.class_of(99)

    def test_empty_manifest(self):
        with pytest.raises(EmptyInputError):
            assign_temporal_classes(make_manifest(0), segment_length_s=5.0)

    def test_segment_shorter_than_a_frame(self):
        with pytest.raises(ParameterError):
            assign_temporal_classes(make_manifest(10, fps=1.0), segment_length_s=0.2)


class TestCuration:
    def test_rule_application(self):
        cells = [
            AnnotationCell("r", 0.0, 300.0, ("a",)),
            AnnotationCell("r", 300.0, 500.0, ("b", "a")),
            AnnotationCell("r", 500.0, 550.0, ("c",)),
        ]
        df = curate_labels(cells, min_frames=100, top_k=3, drop_top=1, fps=1.0)
        assert df["label"].unique().to_list() == ["b"]
        assert df.height == 200

    def test_normalization(self):
        assert normalize_label("Cat ") == normalize_label("cat") == "cat"
        synonyms = SynonymTable({"kitty": "Cat"})
        assert normalize_label(" Kitty", synonyms=synonyms) == "cat"

    def test_raising_min_frames_is_monotone(self, rng):
        cells = [
            AnnotationCell("r", float(10 * i), float(10 * i + rng.integers(1, 10)), (f"label{rng.integers(0, 8)}",))
            for i in range(200)
        ]
        sizes = [curate_labels(cells, min_frames=m, top_k=8, drop_top=0).height for m in (1, 20, 60, 120)]
        assert sizes == sorted(sizes, reverse=True)

    def test_thresholds_counted_at_label_rate(self):
        cells = [AnnotationCell("r", 0.0, 25.0, ("ball",)), AnnotationCell("r", 25.0, 200.0, ("cup",))]
        df_sampled_rate = curate_labels(cells, min_frames=100, drop_top=0, fps=5.0)
        assert sorted(df_sampled_rate["label"].unique().to_list()) == ["ball", "cup"]
        df = curate_labels(cells, min_frames=100, drop_top=0, fps=5.0, count_fps=1.0)
        assert df["label"].unique().to_list() == ["cup"]
        assert df.height == 175 * 5

    def test_annotation_file(self, tmp_path):
        path_file = tmp_path / "annotations.csv"
        path_file.write_text("recording_id,start_s,end_s,labels\nr,0,2,Ball | Car\nr,2,3,\n")
        cells = AnnotationFile(path_file).cells
        assert cells[0].labels == ("Ball", "Car")
        assert cells[1].labels == ()

    def test_missing_annotation_file(self, tmp_path):
        with pytest.raises(DataFileNotFoundError):
            AnnotationFile(tmp_path / "missing.csv")


class TestManifest:
    def test_write_read(self, tmp_path):
        manifest = make_manifest(5, labels=["a", None, "b", "a", None])
        manifest.write(tmp_path / "manifest.ndjson")
        read = Manifest.read(tmp_path / "manifest.ndjson")
        assert read.fps == 1.0
        assert read.entries.equals(manifest.entries)

    def test_labeled_and_label_ids(self):
        manifest = make_manifest(5, labels=["b", None, "a", "b", None])
        ids, vocabulary = manifest.label_ids()
        assert vocabulary == ["a", "b"]
        np.testing.assert_array_equal(ids, [1, -1, 0, 1, -1])
        np.testing.assert_array_equal(manifest.labeled().frame_ids, [0, 2, 3])

    def test_resample(self):
        resampled = make_manifest(20, fps=5.0).resample(1.0)
        assert resampled.fps == 1.0
        np.testing.assert_array_equal(resampled.frame_ids, [0, 5, 10, 15])
        with pytest.raises(ParameterError):
            make_manifest(20, fps=5.0).resample(10.0)

    def test_resample_rejects_fractional_step(self):
        with pytest.raises(ParameterError, match="whole-number"):
            make_manifest(20, fps=5.0).resample(2.0)
        assert make_manifest(30, fps=1.0).resample(1 / 3).fps == pytest.approx(1 / 3)

    def test_rejects_decreasing_frame_ids(self):
        entries = pl.DataFrame({"frame_id": [0, 2, 1], "recording_id": ["r"] * 3, "timestamp_s": [0.0, 1.0, 2.0]})
        with pytest.raises(FormatError):
            Manifest(entries=entries, fps=1.0)

    def test_unknown_format(self, tmp_path):
        path_file = tmp_path / "manifest.ndjson"
        path_file.write_text('{"format": "other"}\n')
        with pytest.raises(FormatError):
            Manifest.read(path_file)


class TestIngest:
    def test_ingest_streams(self, stream_dir, tmp_path):
        config = DataConfig(fps=1.0, stream_fps=2.0, segment_length_s=4.0, minor_edge=16, crop_size=16,
                            crop_shift=0, shard_size=7)
        recordings = discover_recordings(stream_dir, stream_fps=config.stream_fps)
        dir_output = tmp_path / "data"
        manifest, labeling = ingest_recordings(recordings, config, dir_output)
        assert len(manifest) == 30
        assert manifest.recording_ids[0] == "A_rec01"
        assert labeling.n_classes == 8
        assert (dir_output / "manifest.ndjson").exists()
        assert (dir_output / "temporal_classes.csv").exists()

        frames = FrameStore(Manifest.read(dir_output / "manifest.ndjson"), dir_output).load()
        assert frames.shape == (30, 16, 16, 3)
        original = np.load(stream_dir / "A_rec01.npy")
        # 1 fps from a 2 fps stream takes every second native frame
        np.testing.assert_array_equal(frames[:10], original[::2])

    def test_missing_shard(self, stream_dir, tmp_path):
        config = DataConfig(fps=1.0, stream_fps=2.0, minor_edge=16, crop_size=16, crop_shift=0)
        manifest, _ = ingest_recordings(discover_recordings(stream_dir, stream_fps=2.0), config, tmp_path)
        for path_shard in (tmp_path / "shards").iterdir():
            path_shard.unlink()
        with pytest.raises(DataFileNotFoundError):
            FrameStore(manifest, tmp_path).load()

    def test_parallel_decoding_keeps_order(self, stream_dir, tmp_path):
        config = DataConfig(fps=1.0, stream_fps=2.0, minor_edge=16, crop_size=16, crop_shift=0, shard_size=4)
        recordings = discover_recordings(stream_dir, stream_fps=config.stream_fps)
        serial, _ = ingest_recordings(recordings, config, tmp_path / "serial", workers=1)
        parallel, _ = ingest_recordings(list(reversed(recordings)), config, tmp_path / "parallel", workers=3)
        assert parallel.entries.equals(serial.entries)
        np.testing.assert_array_equal(
            FrameStore(parallel, tmp_path / "parallel").load(), FrameStore(serial, tmp_path / "serial").load()
        )

    def test_curated_labels_are_joined(self, stream_dir, tmp_path):
        path_annotations = tmp_path / "annotations.csv"
        path_annotations.write_text(
            "recording_id,start_s,end_s,labels\nA_rec01,0,4,Ball\nA_rec01,4,10,cup\nS_rec01,0,10,Cup | ball\n"
        )
        config = DataConfig(fps=2.0, stream_fps=2.0, minor_edge=16, crop_size=16, crop_shift=0,
                            annotations=str(path_annotations), label_fps=1.0, min_frames=5, drop_top=0)
        manifest, _ = ingest_recordings(discover_recordings(stream_dir, stream_fps=2.0), config, tmp_path / "data")
        labels = manifest.entries["label"].to_list()
        # ball has 4 frames at 1 fps and is dropped although it has 8 at the sampling rate
        assert labels[:20] == [None] * 8 + ["cup"] * 12
        assert labels[20:40] == ["cup"] * 20
        assert labels[40:] == [None] * 20
        assert manifest.label_vocabulary() == ["cup"]
