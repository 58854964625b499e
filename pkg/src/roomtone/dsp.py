"""Core signal primitives shared by every other module.

Windows, STFT/ISTFT, mel filterbank, FFT convolution, SNR-controlled noise
injection, and WAV I/O. Everything operates on mono float64 signals at a
fixed project rate of 16 kHz; foreign sample rates are rejected, never
silently resampled.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.io.wavfile
import scipy.signal

from .errors import (
    InputTooShort,
    RateMismatch,
    ShapeMismatch,
    ZeroSignal,
)

DEFAULT_SAMPLE_RATE = 16000

_EPS = 1e-12


@dataclass
class Waveform:
    """Mono time-domain signal with its sample rate."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ShapeMismatch("waveform must be a non-empty 1-D array")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    def energy(self) -> float:
        return float(np.sum(self.samples**2))

    def peak(self) -> float:
        return float(np.max(np.abs(self.samples)))

    def copy(self) -> "Waveform":
        return Waveform(self.samples.copy(), self.sample_rate)


@dataclass(frozen=True)
class StftParams:
    """Analysis geometry: FFT size, hop, and Hann window length."""

    fft_size: int = 512
    hop: int = 128
    window_length: int = 512

    def __post_init__(self):
        if not (0 < self.hop <= self.window_length <= self.fft_size):
            raise ValueError(
                f"need 0 < hop <= window_length <= fft_size, got "
                f"{self.hop}/{self.window_length}/{self.fft_size}"
            )

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def window(self) -> np.ndarray:
        return hann_window(self.window_length)


@dataclass
class Spectrogram:
    """Magnitude spectrogram, frames x bins."""

    magnitude: np.ndarray
    params: StftParams
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.magnitude = np.asarray(self.magnitude, dtype=np.float64)
        if self.magnitude.ndim != 2:
            raise ShapeMismatch("magnitude must be a 2-D frames x bins array")
        if self.magnitude.shape[1] != self.params.bins:
            raise ShapeMismatch(
                f"expected {self.params.bins} bins, got {self.magnitude.shape[1]}"
            )
        if not np.all(np.isfinite(self.magnitude)) or np.any(self.magnitude < 0):
            raise ValueError("magnitude entries must be finite and non-negative")

    @property
    def n_frames(self) -> int:
        return self.magnitude.shape[0]


@dataclass
class MelFilterbank:
    """Triangular mel filterbank matched to a specific FFT size and rate."""

    n_mels: int
    f_min: float
    f_max: float
    weights: np.ndarray  # n_mels x bins
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.n_mels:
            raise ShapeMismatch("weights must be an n_mels x bins matrix")
        if np.any(self.weights.sum(axis=1) <= 0):
            raise ValueError("every mel filter must have positive total weight")


@lru_cache(maxsize=16)
def _hann_cached(length: int) -> np.ndarray:
    # periodic Hann; COLA-compatible at hop = length/4
    n = np.arange(length)
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)
    w.setflags(write=False)
    return w


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window of the given length."""
    return _hann_cached(int(length))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int = 80,
    f_min: float = 0.0,
    f_max: float = 8000.0,
    fft_size: int = 512,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> MelFilterbank:
    """Build an area-normalized triangular mel filterbank."""
    if f_max > sample_rate / 2:
        raise ValueError("f_max beyond Nyquist")
    mel_pts = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_freqs = np.fft.rfftfreq(fft_size, 1.0 / sample_rate)

    lower = hz_pts[:-2, None]
    center = hz_pts[1:-1, None]
    upper = hz_pts[2:, None]
    up = (bin_freqs[None, :] - lower) / np.maximum(center - lower, _EPS)
    down = (upper - bin_freqs[None, :]) / np.maximum(upper - center, _EPS)
    weights = np.maximum(0.0, np.minimum(up, down))
    # area normalization: equal integrated response per filter
    weights *= (2.0 / (hz_pts[2:] - hz_pts[:-2]))[:, None]
    return MelFilterbank(n_mels, f_min, f_max, weights, sample_rate)


def _frame_signal(x: np.ndarray, window_length: int, hop: int) -> np.ndarray:
    if x.size < window_length:
        raise InputTooShort(
            f"signal of {x.size} samples shorter than one window ({window_length})"
        )
    return np.lib.stride_tricks.sliding_window_view(x, window_length)[::hop]


def stft_complex(w: Waveform, p: StftParams | None = None) -> np.ndarray:
    """Complex STFT, frames x bins. No center padding."""
    p = p or StftParams()
    frames = _frame_signal(w.samples, p.window_length, p.hop)
    return np.fft.rfft(frames * p.window, n=p.fft_size, axis=1)


def stft(w: Waveform, p: StftParams | None = None) -> Spectrogram:
    """Magnitude spectrogram of `w`; frame count = (len - window)//hop + 1."""
    p = p or StftParams()
    return Spectrogram(np.abs(stft_complex(w, p)), p, w.sample_rate)


def istft(
    spec: np.ndarray,
    p: StftParams | None = None,
    length: int | None = None,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> Waveform:
    """Weighted overlap-add inverse of `stft_complex`.

    Reconstruction is exact wherever the shifted squared windows overlap;
    samples with no window support come back as zeros.
    """
    p = p or StftParams()
    frames = np.fft.irfft(spec, n=p.fft_size, axis=1)[:, : p.window_length]
    n_frames = frames.shape[0]
    out_len = (n_frames - 1) * p.hop + p.window_length
    y = np.zeros(out_len)
    den = np.zeros(out_len)
    w = p.window
    w2 = w * w
    for t in range(n_frames):
        start = t * p.hop
        y[start : start + p.window_length] += frames[t] * w
        den[start : start + p.window_length] += w2
    good = den > 1e-10
    y[good] /= den[good]
    if length is not None:
        if length > out_len:
            y = np.concatenate([y, np.zeros(length - out_len)])
        else:
            y = y[:length]
    return Waveform(y, sample_rate)


def fft_convolve(x: Waveform, h: "Waveform | object") -> Waveform:
    """Full linear convolution of a waveform with an impulse response."""
    h_wave = getattr(h, "wave", h)  # accepts ImpulseResponse or Waveform
    if x.sample_rate != h_wave.sample_rate:
        raise RateMismatch(
            f"sample rates differ: {x.sample_rate} vs {h_wave.sample_rate}"
        )
    y = scipy.signal.fftconvolve(x.samples, h_wave.samples, mode="full")
    return Waveform(y, x.sample_rate)


def mel_spectrogram(
    w: Waveform, p: StftParams | None = None, fb: MelFilterbank | None = None
) -> np.ndarray:
    """Filterbank-weighted linear-magnitude spectrogram, frames x n_mels."""
    p = p or StftParams()
    fb = fb or mel_filterbank(fft_size=p.fft_size, sample_rate=w.sample_rate)
    if fb.weights.shape[1] != p.bins:
        raise ShapeMismatch(
            f"filterbank built for {fb.weights.shape[1]} bins, params give {p.bins}"
        )
    if fb.sample_rate != w.sample_rate:
        raise ShapeMismatch(
            f"filterbank built for {fb.sample_rate} Hz, waveform is {w.sample_rate} Hz"
        )
    return stft(w, p).magnitude @ fb.weights.T


def add_noise_at_snr(w: Waveform, snr_db: float, seed: int) -> Waveform:
    """Add white Gaussian noise scaled to an exact signal/noise energy ratio."""
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    sig_energy = w.energy()
    if sig_energy < _EPS:
        raise ZeroSignal("cannot set an SNR against a zero-energy signal")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(w))
    noise_energy = float(np.sum(noise**2))
    target = sig_energy * 10.0 ** (-snr_db / 10.0)
    noise *= np.sqrt(target / noise_energy)
    return Waveform(w.samples + noise, w.sample_rate)


def measured_snr_db(noisy: Waveform, clean: Waveform) -> float:
    """SNR implied by a (noisy, clean) pair; inverse check for add_noise_at_snr."""
    noise = noisy.samples - clean.samples
    ne = float(np.sum(noise**2))
    if ne < _EPS:
        return np.inf
    return 10.0 * np.log10(clean.energy() / ne)


# ---------------------------------------------------------------------------
# WAV I/O: PCM 16-bit and 32-bit float, mono only, project rate enforced.
# ---------------------------------------------------------------------------


def read_wav(path, expected_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    rate, data = scipy.io.wavfile.read(str(path))
    if data.ndim != 1:
        raise ShapeMismatch(
            f"{path}: only mono WAV is supported, file has {data.shape[1]} channels"
        )
    if expected_rate is not None and rate != expected_rate:
        raise RateMismatch(
            f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz "
            "(resampling is not performed)"
        )
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ShapeMismatch(f"{path}: unsupported WAV sample format {data.dtype}")
    return Waveform(samples, rate)


def write_wav(path, w: Waveform, fmt: str = "float32") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "float32":
        scipy.io.wavfile.write(str(path), w.sample_rate, w.samples.astype(np.float32))
    elif fmt == "pcm16":
        clipped = np.clip(w.samples, -1.0, 32767.0 / 32768.0)
        scipy.io.wavfile.write(
            str(path), w.sample_rate, np.round(clipped * 32768.0).astype(np.int16)
        )
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
