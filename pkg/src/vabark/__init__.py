"""Continuous valence-arousal labeling and a multi-task audio transformer for animal vocalizations."""

__version__ = "0.1.0"

CHECKPOINT_FORMAT_VERSION = 1

from .anchors import AnchorSet, fit_anchors, norm_feature
from .audio import (
    MelSpectrogram,
    SpectrogramConfig,
    Waveform,
    load_wav,
    mel_spectrogram,
    standardize_duration,
    write_wav,
)
from .features import AcousticFeatures, extract_features
from .metrics import EvalReport, accuracy, pearson_r, va_mae
from .model import ModelConfig, ModelOutput, backward, count_params, forward, init_params, predict
from .synth import SampleSpec, synth_corpus, synth_sample
from .training import LossWeights, TrainConfig, cosine_lr, multitask_loss, stratified_split, train
from .valabel import (
    DEFAULT_EMOTION_BIAS,
    EMOTIONS,
    VALabel,
    acoustic_score,
    compute_arousal,
    compute_valence,
    generate_va_label,
)

__all__ = [
    "AcousticFeatures", "AnchorSet", "CHECKPOINT_FORMAT_VERSION", "DEFAULT_EMOTION_BIAS",
    "EMOTIONS", "EvalReport", "LossWeights", "MelSpectrogram", "ModelConfig", "ModelOutput",
    "SampleSpec", "SpectrogramConfig", "TrainConfig", "VALabel", "Waveform",
    "accuracy", "acoustic_score", "backward", "compute_arousal", "compute_valence",
    "cosine_lr", "count_params", "extract_features", "fit_anchors", "forward",
    "generate_va_label", "init_params", "load_wav", "mel_spectrogram", "multitask_loss",
    "norm_feature", "pearson_r", "predict", "standardize_duration", "stratified_split",
    "synth_corpus", "synth_sample", "train", "va_mae", "write_wav",
]
