"""Binaural MVDR speech enhancement driven by estimated relative transfer functions.

The package covers the full experiment loop: synthetic acoustic scenes (or
recorded WAV input), STFT analysis, VAD-gated recursive covariance tracking,
four RTF estimators plus the ground-truth reference, the binaural MVDR
beamformer, and noise-reduction / spatial-cue metrics with a CSV/JSON
reporting CLI.
"""

from .beamformer import BeamformerFilters, DegenerateSteeringError, apply, compute_bmvdr
from .covariance import (
    CovarianceState,
    alpha_from_time_constant,
    initialize,
    oracle_vad,
)
from .experiment import (
    ConfigError,
    ExperimentConfig,
    InputFiles,
    config_from_file,
    run_experiment,
    speech_like_source,
)
from .metrics import (
    CueErrors,
    MetricReport,
    binaural_cue_errors,
    isnr_improvement,
    load_band_weights,
    measure_msc,
)
from .rtf import (
    ESTIMATOR_TAGS,
    RtfVector,
    UnreliableBinError,
    estimate_biased,
    estimate_cw,
    estimate_sc,
    estimate_sc_oracle,
    true_rtf,
)
from .scene import (
    ArrayGeometry,
    GroundTruth,
    RenderedScene,
    SceneDescription,
    binaural_geometry,
    diffuse_msc,
    generate_diffuse_noise,
    render_scene,
)
from .stft import SpectralFrameTensor, StftConfig, analyze, synthesize
from .wavio import read_wav, write_wav

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry",
    "BeamformerFilters",
    "ConfigError",
    "CovarianceState",
    "CueErrors",
    "DegenerateSteeringError",
    "ESTIMATOR_TAGS",
    "ExperimentConfig",
    "GroundTruth",
    "InputFiles",
    "MetricReport",
    "RenderedScene",
    "RtfVector",
    "SceneDescription",
    "SpectralFrameTensor",
    "StftConfig",
    "UnreliableBinError",
    "alpha_from_time_constant",
    "analyze",
    "apply",
    "binaural_cue_errors",
    "binaural_geometry",
    "compute_bmvdr",
    "config_from_file",
    "diffuse_msc",
    "estimate_biased",
    "estimate_cw",
    "estimate_sc",
    "estimate_sc_oracle",
    "generate_diffuse_noise",
    "initialize",
    "isnr_improvement",
    "load_band_weights",
    "measure_msc",
    "oracle_vad",
    "read_wav",
    "render_scene",
    "run_experiment",
    "speech_like_source",
    "synthesize",
    "true_rtf",
    "write_wav",
    "__version__",
]
