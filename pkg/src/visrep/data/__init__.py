from .corpus import (
    CorpusIndex,
    DemoBatch,
    ImageBatch,
    SamplingError,
    TrajectoryBatch,
    VideoBatch,
    clip_reward,
    returns_to_go,
    sample_batch,
    stack_frames,
    worker_streams,
)
from .manifest import REGIMES, CurationError, DatasetManifest, RegimeSpec, Selection, curate
from .records import FRAME_SHAPE, RecordFile, record_path, write_record_file

__all__ = [
    "CorpusIndex", "DemoBatch", "ImageBatch", "SamplingError", "TrajectoryBatch",
    "VideoBatch", "clip_reward", "returns_to_go", "sample_batch", "stack_frames",
    "worker_streams", "REGIMES", "CurationError", "DatasetManifest", "RegimeSpec",
    "Selection", "curate", "FRAME_SHAPE", "RecordFile", "record_path",
    "write_record_file",
]
