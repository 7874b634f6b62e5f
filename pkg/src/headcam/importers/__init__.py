from .annotations import AnnotationCell, AnnotationFile, SynonymTable, curate_labels, normalize_label
from .ingest import DataConfig, ingest_recordings
from .manifest import FrameRecord, FrameStore, Manifest, ShardWriter
from .preprocess import PreprocessConfig, preprocess_frame
from .recordings import RawRecording, decode_and_sample, discover_recordings, probe_recording
from .temporal import TemporalLabeling, assign_temporal_classes, frames_per_class
