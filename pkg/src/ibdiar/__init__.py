"""Speaker diarization with Information Bottleneck clustering.

Two-pass system: an IB clustering over MFCC-derived relevance variables,
followed by a second pass whose relevance variables come from fusing the
spectral stream with the latent stream of a small speaker-discriminative
network.  The network can be carried from recording to recording
(incremental transfer) through a :class:`~ibdiar.transfer.TransferState`.
"""

from .annotation import DiarizationHypothesis, ReferenceAnnotation, Turn, read_rttm, write_rttm
from .corpus import Corpus, RecordingInput
from .exceptions import (
    CheckpointError,
    DiarizationError,
    FeatureFileError,
    ParameterError,
    TransferStoreError,
)
from .features import FeatureMatrix, Recording, SpeechMask, extract_mfcc
from .fusion import StreamWeights, fuse_posteriors
from .pipeline import PipelineConfig, RunReport, System, run_system
from .scoring import ScoreBreakdown, score
from .synth import SynthSpec, generate, make_corpus
from .transfer import TransferMode, TransferState

__version__ = "0.1.0"

__all__ = [
    "CheckpointError", "Corpus", "DiarizationError", "DiarizationHypothesis", "FeatureFileError",
    "FeatureMatrix", "ParameterError", "PipelineConfig", "Recording", "RecordingInput",
    "ReferenceAnnotation", "RunReport", "ScoreBreakdown", "SpeechMask", "StreamWeights",
    "SynthSpec", "System", "TransferMode", "TransferState", "TransferStoreError", "Turn",
    "extract_mfcc", "fuse_posteriors", "generate", "make_corpus", "read_rttm", "run_system",
    "score", "write_rttm",
]
