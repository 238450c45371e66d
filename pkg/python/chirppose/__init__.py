"""
chirppose - pose keypoints over audio

Encodes human-pose keypoints into chirp spread spectrum audio, passes it
through an emulated codec/network channel, decodes it with a synchronizing
receiver and repairs the recovered poses with small neural models.

Example:
    >>> import chirppose
    >>> poses = chirppose.generate_poses(chirppose.SyntheticCorpusConfig(n_frames=50))
    >>> cfg = chirppose.PipelineConfig(rate_kbps=6)
    >>> report = chirppose.run_pipeline(cfg, poses)
    >>> print(report.summary())
"""

__version__ = "0.1.0"

from .errors import (
    ChirpPoseError,
    ConfigError,
    PoseRangeError,
    PayloadError,
    MalformedFrameError,
    SymbolError,
    NeedMoreData,
    ShapeError,
    TrainingDivergedError,
    ModelFormatError,
    ModelVersionError,
    ExternalToolError,
    UndefinedMetricError,
    StageError,
    DegenerateDataError,
)
from .pose_core import (
    FrameType,
    Side,
    FullPose,
    TransmitPose,
    QuantizedPose,
    Displacement,
    FramePayload,
    PoseEncoder,
    PoseDecoder,
    select_keypoints,
    quantize,
    dequantize,
    diff_pose,
    apply_displacement,
    pack_payload,
    unpack_payload,
)
from .data import (
    PoseDataset,
    load_pose_file,
    save_pose_file,
    load_received_file,
    save_received_file,
)
from .modem import (
    ModemConfig,
    AudioBuffer,
    DecoderState,
    create_modem_config,
    modulate,
    build_frame,
    build_stream,
    demodulate_symbol,
    matched_filter_detect,
    fine_sync,
    decode_stream,
    decode_audio,
    ser,
    ser_test,
    sync_bench,
)
from .wav import read_wav, write_wav
from .channel import (
    CodecSegment,
    CodecSchedule,
    NetworkModel,
    ExternalCodec,
    ChannelConfig,
    apply_codec,
    apply_network,
    apply_channel,
    external_codec_passthrough,
)
from .network import MlpModel
from .trainer import Trainer, TrainConfig, NoiseInjection, create_train_config, train
from .renderer import (
    DetectorModel,
    PcaDetector,
    PredictorModel,
    LinearModel,
    NoiseParams,
    ReconstructedPose,
    fit_detector,
    fit_pca_detector,
    fit_predictor,
    fit_linear_regression,
    detect_error,
    predict_hand,
    interpolate_hand,
    estimate_noise_params,
    load_detector,
    reconstruct,
)
from .render import render_skeleton, render_frames
from .corpus import SyntheticCorpusConfig, create_corpus_config, generate_poses, generate_corpus
from .metrics import MetricsReport, joint_error, regression_metrics, classification_metrics
from .pipeline import PipelineConfig, run_pipeline
from .experiments import ser_sweep, predictor_comparison, noise_robustness, detector_comparison

__all__ = [
    "__version__",
    # Errors
    "ChirpPoseError",
    "ConfigError",
    "PoseRangeError",
    "PayloadError",
    "MalformedFrameError",
    "SymbolError",
    "NeedMoreData",
    "ShapeError",
    "TrainingDivergedError",
    "ModelFormatError",
    "ModelVersionError",
    "ExternalToolError",
    "UndefinedMetricError",
    "StageError",
    "DegenerateDataError",
    # Poses
    "FrameType",
    "Side",
    "FullPose",
    "TransmitPose",
    "QuantizedPose",
    "Displacement",
    "FramePayload",
    "PoseEncoder",
    "PoseDecoder",
    "select_keypoints",
    "quantize",
    "dequantize",
    "diff_pose",
    "apply_displacement",
    "pack_payload",
    "unpack_payload",
    "PoseDataset",
    "load_pose_file",
    "save_pose_file",
    "load_received_file",
    "save_received_file",
    # Modem
    "ModemConfig",
    "AudioBuffer",
    "DecoderState",
    "create_modem_config",
    "modulate",
    "build_frame",
    "build_stream",
    "demodulate_symbol",
    "matched_filter_detect",
    "fine_sync",
    "decode_stream",
    "decode_audio",
    "ser",
    "ser_test",
    "sync_bench",
    "read_wav",
    "write_wav",
    # Channel
    "CodecSegment",
    "CodecSchedule",
    "NetworkModel",
    "ExternalCodec",
    "ChannelConfig",
    "apply_codec",
    "apply_network",
    "apply_channel",
    "external_codec_passthrough",
    # Models
    "MlpModel",
    "Trainer",
    "TrainConfig",
    "NoiseInjection",
    "create_train_config",
    "train",
    "DetectorModel",
    "PcaDetector",
    "PredictorModel",
    "LinearModel",
    "NoiseParams",
    "ReconstructedPose",
    "fit_detector",
    "fit_pca_detector",
    "fit_predictor",
    "fit_linear_regression",
    "detect_error",
    "predict_hand",
    "interpolate_hand",
    "estimate_noise_params",
    "load_detector",
    "reconstruct",
    "render_skeleton",
    "render_frames",
    # Harness
    "SyntheticCorpusConfig",
    "create_corpus_config",
    "generate_poses",
    "generate_corpus",
    "MetricsReport",
    "joint_error",
    "regression_metrics",
    "classification_metrics",
    "PipelineConfig",
    "run_pipeline",
    "ser_sweep",
    "predictor_comparison",
    "noise_robustness",
    "detector_comparison",
]


def info():
    """Print chirppose package information"""
    import cv2
    import numpy
    import scipy

    print(f"chirppose version {__version__}")
    print(f"  numpy {numpy.__version__}, scipy {scipy.__version__}, opencv {cv2.__version__}")
    for rate in ("1.5", "3", "6"):
        cfg = ModemConfig.from_preset(rate)
        print(f"  {rate:>3s} kbps preset: Ns={cfg.samples_per_symbol}, "
              f"{cfg.framed_pose_rate:.2f} complete poses/s")
