"""Audio preprocessing and spectro-temporal feature extraction.

Three feature kinds are produced from fixed-duration mono audio:

* ``logspec`` -- log power magnitude spectrogram,
* ``lfbank``  -- log energies of linearly spaced triangular filters,
* ``gdgram``  -- modified group-delay gram with compression exponents.

Framing convention: a signal of ``n`` samples yields ``floor(n / hop)``
frames; frame ``i`` starts at ``i * hop`` and the signal tail is
zero-padded so the last window is complete.  With the default 50 ms
window / 15 ms hop at 16 kHz, 8.5 s of audio gives 401 x 566 spectral
features and 80 x 566 filterbank features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidAudio, InvalidConfig

SAMPLE_RATE = 16000
BUFFER_SECONDS = 8.5

# Floors keep log() and the group-delay division finite on padded silence.
LOG_FLOOR = 1e-10
SPECTRAL_FLOOR = 1e-8

KIND_LOGSPEC = "logspec"
KIND_LFBANK = "lfbank"
KIND_GDGRAM = "gdgram"
FEATURE_KINDS = (KIND_LOGSPEC, KIND_LFBANK, KIND_GDGRAM)

DEFAULT_NUM_FILTERS = 80


@dataclass(frozen=True)
class AudioBuffer:
    """Mono waveform samples plus their sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.samples.ndim != 1:
            raise InvalidAudio(f"expected mono audio, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise InvalidAudio(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    """Analysis window / hop in seconds; FFT length equals the window length."""

    window_len: float = 0.050
    hop: float = 0.015

    def __post_init__(self):
        if not (self.window_len > self.hop > 0):
            raise InvalidConfig(
                f"need window_len > hop > 0, got {self.window_len}, {self.hop}"
            )

    def window_samples(self, sample_rate: int) -> int:
        return int(round(self.window_len * sample_rate))

    def hop_samples(self, sample_rate: int) -> int:
        return int(round(self.hop * sample_rate))

    def fft_bins(self, sample_rate: int) -> int:
        return self.window_samples(sample_rate) // 2 + 1


@dataclass(frozen=True)
class GdConfig:
    """Modified group-delay parameters.

    ``alpha`` and ``gamma`` are the spectral compression exponents;
    ``lifter_len`` is the cepstral smoothing cutoff (``None`` disables
    smoothing so the raw magnitude spectrum is used, which reduces the
    gram to classical group delay at alpha = gamma = 1).
    """

    alpha: float = 0.4
    gamma: float = 0.9
    lifter_len: int | None = 30

    def __post_init__(self):
        if not (0 < self.alpha <= 1):
            raise InvalidConfig(f"alpha must be in (0, 1], got {self.alpha}")
        if not (0 < self.gamma <= 1):
            raise InvalidConfig(f"gamma must be in (0, 1], got {self.gamma}")
        if self.lifter_len is not None and self.lifter_len < 1:
            raise InvalidConfig(f"lifter_len must be >= 1, got {self.lifter_len}")


@dataclass
class FeatureMatrix:
    """2-D feature data tagged with its kind, laid out [bins x frames]."""

    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise InvalidConfig(f"unknown feature kind {self.kind!r}")
        if self.data.ndim != 2:
            raise InvalidConfig(f"feature data must be 2-D, got shape {self.data.shape}")

    @property
    def bins(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]


def cut_or_pad(audio: AudioBuffer, buffer_seconds: float) -> AudioBuffer:
    """Trim or zero-pad the END of the signal to exactly ``buffer_seconds``."""
    if len(audio.samples) == 0:
        raise InvalidAudio("cannot cut or pad zero-length audio")
    target = int(round(buffer_seconds * audio.sample_rate))
    samples = audio.samples.astype(np.float64, copy=False)
    if len(samples) >= target:
        out = samples[:target].copy()
    else:
        out = np.zeros(target, dtype=np.float64)
        out[: len(samples)] = samples
    return AudioBuffer(out, audio.sample_rate)


def frame_signal(samples: np.ndarray, window_samples: int, hop_samples: int) -> np.ndarray:
    """Slice a signal into overlapping frames, shape [n_frames, window_samples].

    n_frames = floor(len / hop); the tail is zero-padded so the last
    window is complete.
    """
    n = len(samples)
    if n < window_samples:
        raise InvalidAudio(
            f"audio of {n} samples is shorter than one window ({window_samples})"
        )
    n_frames = n // hop_samples
    needed = (n_frames - 1) * hop_samples + window_samples
    if needed > n:
        samples = np.concatenate([samples, np.zeros(needed - n, dtype=samples.dtype)])
    starts = np.arange(n_frames) * hop_samples
    idx = starts[:, None] + np.arange(window_samples)[None, :]
    return samples[idx]


def stft(audio: AudioBuffer, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Complex STFT, shape [fft_bins x n_frames], Hamming-windowed frames."""
    win = cfg.window_samples(audio.sample_rate)
    hop = cfg.hop_samples(audio.sample_rate)
    frames = frame_signal(np.asarray(audio.samples, dtype=np.float64), win, hop)
    frames = frames * np.hamming(win)[None, :]
    return np.fft.rfft(frames, n=win, axis=1).T


def logspec(audio: AudioBuffer, cfg: StftConfig = StftConfig()) -> FeatureMatrix:
    """Log power magnitude spectrogram: log(|STFT|^2 + floor)."""
    spec = stft(audio, cfg)
    power = np.abs(spec) ** 2
    return FeatureMatrix(KIND_LOGSPEC, np.log(power + LOG_FLOOR))


def linear_filterbank(num_filters: int, n_bins: int, sample_rate: int) -> np.ndarray:
    """Triangular filters of equal width in Hz spanning [0, Nyquist].

    Returns a [num_filters x n_bins] weight matrix; each filter is a
    triangle peaking at 1 at its center frequency.
    """
    nyquist = sample_rate / 2
    bin_freqs = np.linspace(0.0, nyquist, n_bins)
    edges = np.linspace(0.0, nyquist, num_filters + 2)
    left = edges[:-2, None]
    center = edges[1:-1, None]
    right = edges[2:, None]
    rising = (bin_freqs[None, :] - left) / (center - left)
    falling = (right - bin_freqs[None, :]) / (right - center)
    return np.clip(np.minimum(rising, falling), 0.0, None)


def lfbank(
    audio: AudioBuffer,
    cfg: StftConfig = StftConfig(),
    num_filters: int = DEFAULT_NUM_FILTERS,
) -> FeatureMatrix:
    """Log energies of linearly spaced triangular filters.

    No delta coefficients and no cosine decorrelation step are applied.
    """
    n_bins = cfg.fft_bins(audio.sample_rate)
    if num_filters > n_bins:
        raise InvalidConfig(
            f"num_filters={num_filters} exceeds the {n_bins} available FFT bins"
        )
    spec = stft(audio, cfg)
    power = np.abs(spec) ** 2
    fb = linear_filterbank(num_filters, n_bins, audio.sample_rate)
    return FeatureMatrix(KIND_LFBANK, np.log(fb @ power + LOG_FLOOR))


def _smoothed_magnitude(mag: np.ndarray, lifter_len: int, n_fft: int) -> np.ndarray:
    """Cepstrally smoothed magnitude spectrum, per column of [bins x frames]."""
    log_mag = np.log(mag + LOG_FLOOR)
    ceps = np.fft.irfft(log_mag, n=n_fft, axis=0)
    keep = np.zeros(n_fft)
    keep[:lifter_len] = 1.0
    # The real cepstrum is symmetric; keep both ends of the lifter window.
    if lifter_len > 1:
        keep[n_fft - lifter_len + 1 :] = 1.0
    smoothed_log = np.fft.rfft(ceps * keep[:, None], n=n_fft, axis=0).real
    return np.exp(smoothed_log)


def gd_gram(
    audio: AudioBuffer,
    cfg: StftConfig = StftConfig(),
    gd: GdConfig = GdConfig(),
) -> FeatureMatrix:
    """Modified group-delay gram.

    Per frame with spectrum X and delay-weighted spectrum Y = DFT(n * x):

        tau = (Re X * Re Y + Im X * Im Y) / S^(2 alpha)
        out = sign(tau) * |tau|^gamma

    where S is the cepstrally smoothed magnitude spectrum, clamped below
    at a spectral floor so padded silence never divides by zero.
    """
    win = cfg.window_samples(audio.sample_rate)
    hop = cfg.hop_samples(audio.sample_rate)
    frames = frame_signal(np.asarray(audio.samples, dtype=np.float64), win, hop)
    frames = frames * np.hamming(win)[None, :]
    x_spec = np.fft.rfft(frames, n=win, axis=1).T
    y_spec = np.fft.rfft(frames * np.arange(win)[None, :], n=win, axis=1).T

    mag = np.abs(x_spec)
    if gd.lifter_len is None:
        smooth = mag
    else:
        smooth = _smoothed_magnitude(mag, gd.lifter_len, win)
    smooth = np.maximum(smooth, SPECTRAL_FLOOR)

    tau = (x_spec.real * y_spec.real + x_spec.imag * y_spec.imag) / smooth ** (2 * gd.alpha)
    out = np.sign(tau) * np.abs(tau) ** gd.gamma
    return FeatureMatrix(KIND_GDGRAM, out)


def scale_to_unit_range(feat: FeatureMatrix) -> FeatureMatrix:
    """Divide by the max absolute value so every entry lies in [-1, 1].

    All-zero input is returned unchanged.  This is deliberately not a
    mean/variance normalization.
    """
    peak = np.max(np.abs(feat.data)) if feat.data.size else 0.0
    if peak == 0.0:
        return FeatureMatrix(feat.kind, feat.data.copy())
    return FeatureMatrix(feat.kind, feat.data / peak)


def extract_feature(
    audio: AudioBuffer,
    kind: str,
    cfg: StftConfig = StftConfig(),
    gd: GdConfig = GdConfig(),
    num_filters: int = DEFAULT_NUM_FILTERS,
    buffer_seconds: float = BUFFER_SECONDS,
) -> FeatureMatrix:
    """Full pipeline: fixed 16 kHz check, cut/pad, feature, unit-range scaling."""
    if audio.sample_rate != SAMPLE_RATE:
        raise InvalidAudio(
            f"expected {SAMPLE_RATE} Hz audio, got {audio.sample_rate} Hz "
            "(resampling is out of scope; convert the input first)"
        )
    fixed = cut_or_pad(audio, buffer_seconds)
    if kind == KIND_LOGSPEC:
        feat = logspec(fixed, cfg)
    elif kind == KIND_LFBANK:
        feat = lfbank(fixed, cfg, num_filters)
    elif kind == KIND_GDGRAM:
        feat = gd_gram(fixed, cfg, gd)
    else:
        raise InvalidConfig(f"unknown feature kind {kind!r}")
    return scale_to_unit_range(feat)
