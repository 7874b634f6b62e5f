import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Tuple

import cv2
import numpy as np

from headcam.errors import DecodeError, ParameterError

logger = logging.getLogger(__name__)

VIDEO_SUFFIXES = {".mp4", ".avi", ".mov", ".mkv"}
STREAM_SUFFIX = ".npy"


@dataclass(frozen=True)
class RawRecording:
    """A source recording: a video file or a stored frame stream (N×H×W×3 `.npy`).

    Attributes:
        id (str): Identifier, unique within a corpus.
        uri (Path): Location of the recording.
        native_fps (float): Frame rate the recording was captured at.
        duration_s (float): Length of the recording in seconds.
        child_tag (str): Whose recording this is ("S", "A", "Y" or a synthetic id).
    """

    id: str
    uri: Path
    native_fps: float
    duration_s: float
    child_tag: str = ""

    def __post_init__(self):
        if self.native_fps <= 0:
            raise ParameterError(f"Recording '{self.id}' has non-positive native fps {self.native_fps}.")
        if self.duration_s <= 0:
            raise ParameterError(f"Recording '{self.id}' has non-positive duration {self.duration_s}.")


def sample_timestamps(duration_s: float, target_fps: float) -> np.ndarray:
    """Returns uniformly spaced sampling instants 0, 1/fps, 2/fps, ... within the recording."""
    n_frames = math.floor(duration_s * target_fps + 1e-9)
    return np.arange(n_frames, dtype=np.float64) / target_fps


def native_indices(timestamps: np.ndarray, native_fps: float, n_native: int) -> np.ndarray:
    """Maps sampling instants to the nearest native frame index."""
    indices = np.floor(timestamps * native_fps + 0.5).astype(np.int64)
    return np.clip(indices, 0, max(n_native - 1, 0))


def probe_recording(path_file: Path, child_tag: str = "", stream_fps: float = 30.0) -> RawRecording:
    """Reads frame rate and duration of a recording without decoding it.

    Args:
        path_file (Path): Video file or `.npy` frame stream.
        child_tag (str): Tag stored on the recording.
        stream_fps (float): Native frame rate assumed for `.npy` frame streams.

    Returns:
        RawRecording: The described recording.

    Raises:
        DecodeError: If the file cannot be opened.
    """
    if path_file.suffix == STREAM_SUFFIX:
        try:
            frames = np.load(path_file, mmap_mode="r")
        except (OSError, ValueError) as exc:
            raise DecodeError(f"Recording '{path_file.stem}' could not be read: {exc}") from exc
        return RawRecording(
            id=path_file.stem,
            uri=path_file,
            native_fps=stream_fps,
            duration_s=frames.shape[0] / stream_fps,
            child_tag=child_tag,
        )
    capture = cv2.VideoCapture(str(path_file))
    try:
        if not capture.isOpened():
            raise DecodeError(f"Recording '{path_file.stem}' could not be opened.")
        fps = capture.get(cv2.CAP_PROP_FPS)
        n_frames = int(capture.get(cv2.CAP_PROP_FRAME_COUNT))
    finally:
        capture.release()
    if fps <= 0 or n_frames <= 0:
        raise DecodeError(f"Recording '{path_file.stem}' reports no frames.")
    return RawRecording(
        id=path_file.stem, uri=path_file, native_fps=fps, duration_s=n_frames / fps, child_tag=child_tag
    )


def discover_recordings(dir_videos: Path, child_tag: str | None = None, stream_fps: float = 30.0) -> List[RawRecording]:
    """Lists the recordings in a directory, sorted by id.

    The child tag is the file name prefix before the first underscore (e.g. `S_20130612_01.mp4`).

    Args:
        dir_videos (Path): Directory holding video files and/or `.npy` frame streams.
        child_tag (str | None): When given, only recordings of this child are returned.
        stream_fps (float): Native frame rate assumed for `.npy` frame streams.

    Returns:
        List[RawRecording]: Recordings in id order.
    """
    recordings = []
    for path_file in sorted(dir_videos.iterdir()):
        if path_file.suffix.lower() not in VIDEO_SUFFIXES | {STREAM_SUFFIX}:
            continue
        tag = path_file.stem.split("_")[0] if "_" in path_file.stem else ""
        if child_tag is not None and tag != child_tag:
            continue
        recordings.append(probe_recording(path_file, child_tag=tag, stream_fps=stream_fps))
    logger.info(f"Found {len(recordings)} recordings in '{dir_videos}'.")
    return sorted(recordings, key=lambda recording: recording.id)


def decode_and_sample(recording: RawRecording, target_fps: float) -> Iterator[Tuple[float, np.ndarray]]:
    """Decodes a recording and yields frames sampled at a fixed rate.

    Frames are taken at t = k / target_fps, each from the nearest native frame.

    Args:
        recording (RawRecording): The recording to decode.
        target_fps (float): Sampling rate, at most the native rate.

    Yields:
        Tuple[float, np.ndarray]: Timestamp in seconds and the H×W×3 RGB frame.

    Raises:
        ParameterError: If target_fps is not in (0, native_fps].
        DecodeError: If the source cannot be read.
    """
    if target_fps <= 0:
        raise ParameterError(f"Target fps must be positive, got {target_fps}.")
    if target_fps > recording.native_fps + 1e-9:
        raise ParameterError(
            f"Target fps {target_fps} exceeds native fps {recording.native_fps} of recording '{recording.id}'."
        )
    timestamps = sample_timestamps(recording.duration_s, target_fps)
    if recording.uri.suffix == STREAM_SUFFIX:
        yield from _sample_stream(recording, timestamps)
    else:
        yield from _sample_video(recording, timestamps)


def _sample_stream(recording: RawRecording, timestamps: np.ndarray) -> Iterator[Tuple[float, np.ndarray]]:
    try:
        frames = np.load(recording.uri, mmap_mode="r")
    except (OSError, ValueError) as exc:
        raise DecodeError(f"Recording '{recording.id}' could not be read: {exc}") from exc
    indices = native_indices(timestamps, recording.native_fps, frames.shape[0])
    for timestamp, index in zip(timestamps, indices):
        yield float(timestamp), np.asarray(frames[index])


def _sample_video(recording: RawRecording, timestamps: np.ndarray) -> Iterator[Tuple[float, np.ndarray]]:
    capture = cv2.VideoCapture(str(recording.uri))
    if not capture.isOpened():
        raise DecodeError(f"Recording '{recording.id}' could not be opened.")
    n_native = int(round(recording.duration_s * recording.native_fps))
    wanted = native_indices(timestamps, recording.native_fps, n_native)
    try:
        position = -1
        frame = None
        for timestamp, index in zip(timestamps, wanted):
            # Sequential grabbing; repeated indices reuse the last decoded frame
            while position < index:
                if not capture.grab():
                    logger.warning(f"Recording '{recording.id}' ended early at native frame {position}.")
                    return
                position += 1
                frame = None
            if frame is None:
                ok, bgr = capture.retrieve()
                if not ok:
                    raise DecodeError(f"Recording '{recording.id}' failed to decode native frame {index}.")
                frame = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
            yield float(timestamp), frame
    finally:
        capture.release()
