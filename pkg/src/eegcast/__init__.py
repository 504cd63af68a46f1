"""Masked-diffusion forecasting of multi-channel EEG and seizure early warning."""
from .classifier import SeizureClassifier, early_warning, predict_seizure, train_classifier
from .denoiser import Denoiser, DenoiserConfig, init_denoiser, train_denoiser
from .diffusion import NoiseSchedule, build_schedule, complete_image, completion_mask, ddim_step, forward_noise
from .edf import STANDARD_CHANNELS, RecordingSession, read_edf, select_channels, window_signals
from .forecast import LSTMBaselineForecaster, forecast_batch, lstm_baseline_forecast
from .imaging import ChannelScaler, SignalImageTransformer, denormalize, from_image, normalize, to_image
from .metrics import delong_test, paired_t_test, regression_report, roc_auc
from .synth import gen_coupled, gen_events, make_session, write_edf

__version__ = "0.1.0"

__all__ = [
    "ChannelScaler", "Denoiser", "DenoiserConfig", "LSTMBaselineForecaster", "NoiseSchedule",
    "STANDARD_CHANNELS", "RecordingSession", "SeizureClassifier", "SignalImageTransformer",
    "build_schedule", "complete_image", "completion_mask", "ddim_step", "delong_test",
    "denormalize", "early_warning", "forecast_batch", "forward_noise", "from_image",
    "gen_coupled", "gen_events", "init_denoiser", "lstm_baseline_forecast", "make_session",
    "normalize", "paired_t_test", "predict_seizure", "read_edf", "regression_report", "roc_auc",
    "select_channels", "to_image", "train_classifier", "train_denoiser", "window_signals", "write_edf",
]
