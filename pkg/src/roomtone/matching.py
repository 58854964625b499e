"""Acoustic matching via parametric impulse-response synthesis.

Estimates (RT60, DRR) from a reference recording of the target space (or
takes them directly), shapes an exponentially decaying white-noise impulse
response with those parameters, and convolves it with the source audio.
Also hosts the signal-based dereverberator used by the alteration pipeline.
"""

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .analysis import (
    DIRECT_WINDOW_S,
    AcousticParams,
    blind_drr,
    blind_rt60,
)
from .dsp import (
    DEFAULT_SAMPLE_RATE,
    StftParams,
    Waveform,
    fft_convolve,
    istft,
    stft_complex,
)
from .errors import NoDecayRegions, ParamOutOfRange, ZeroSignal
from .rir import ImpulseResponse

# amplitude decay rate: exp(-DECAY_RATE * t / rt60) falls 60 dB over rt60
DECAY_RATE = 3.0 * np.log(10.0)  # 6.9078...

RT60_SYNTH_RANGE = (0.05, 3.0)
DRR_ESTIMATE_CLAMP = (-20.0, 25.0)


@dataclass
class MatchRequest:
    """Source audio plus either a reference recording or explicit parameters."""

    source: Waveform
    reference: "Waveform | AcousticParams"
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.reference, (Waveform, AcousticParams)):
            raise TypeError("reference must be a Waveform or AcousticParams")


def synthesize_ir(
    params: AcousticParams,
    length: float | None = None,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    seed: int = 0,
) -> ImpulseResponse:
    """Exponentially decaying white-noise IR with exact RT60/DRR.

    A unit direct impulse at sample 0 is followed, one sample after the
    direct-energy window closes, by seeded Gaussian noise under the envelope
    exp(-DECAY_RATE * t / rt60). The tail is rescaled so the realized
    direct-to-tail energy ratio equals `params.drr` exactly, then the whole
    IR is normalized to unit energy.
    """
    lo, hi = RT60_SYNTH_RANGE
    if not (lo <= params.rt60 <= hi):
        raise ParamOutOfRange(f"rt60 {params.rt60}s outside [{lo}, {hi}] s")
    if length is None:
        length = params.rt60 + 0.3
    if length < params.rt60:
        raise ParamOutOfRange("ir length must be at least rt60")

    n = int(round(length * sample_rate))
    half = int(round(DIRECT_WINDOW_S * sample_rate))
    tail_start = half + 1
    if n <= tail_start + 8:
        raise ParamOutOfRange("ir length leaves no room for a tail")

    h = np.zeros(n)
    h[0] = 1.0
    k = np.arange(n - tail_start)
    envelope = np.exp(-DECAY_RATE * k / (params.rt60 * sample_rate))
    rng = np.random.default_rng(seed)
    tail = rng.standard_normal(n - tail_start) * envelope
    tail_energy = float(np.sum(tail**2))
    if tail_energy <= 0:
        raise ZeroSignal("degenerate tail")
    target_tail_energy = 10.0 ** (-params.drr / 10.0)  # direct energy is 1
    tail *= np.sqrt(target_tail_energy / tail_energy)
    h[tail_start:] = tail
    h /= np.sqrt(np.sum(h**2))
    return ImpulseResponse(Waveform(h, sample_rate), direct_index=0)


def estimate_reference_params(reference: Waveform) -> AcousticParams:
    """Blind (RT60, DRR) from a reverberant reference recording."""
    rt = blind_rt60(reference)
    rt = float(np.clip(rt, *RT60_SYNTH_RANGE))
    dr = blind_drr(reference, rt60_hint=rt)
    dr = float(np.clip(dr, *DRR_ESTIMATE_CLAMP))
    return AcousticParams(rt60=rt, drr=dr)


def match(req: MatchRequest) -> Waveform:
    """Re-render the source with the target space's acoustic signature.

    Output is the convolution of the source with the synthesized IR, trimmed
    to the source length and peak-normalized to the source's peak.
    """
    src = req.source
    if src.energy() < 1e-12:
        raise ZeroSignal("source audio is silent")
    if isinstance(req.reference, AcousticParams):
        params = req.reference
    else:
        params = estimate_reference_params(req.reference)
    ir = synthesize_ir(params, sample_rate=src.sample_rate, seed=req.seed)
    wet = fft_convolve(src, ir)
    out = wet.samples[: len(src)]
    peak = np.max(np.abs(out))
    if peak > 0:
        out = out * (src.peak() / peak)
    return Waveform(out, src.sample_rate)


# ---------------------------------------------------------------------------
# Signal-based dereverberation (late-reverberation spectral suppression)
# ---------------------------------------------------------------------------

LATE_REVERB_ONSET_S = 0.05  # past frames closer than this count as "early"
SPECTRAL_FLOOR = 0.1
REVERB_GAIN_PERCENTILE = 15.0
OVERSUBTRACTION = 2.0  # classic spectral over-subtraction safety margin


def _estimate_reverb_gain(mag: np.ndarray, pred: np.ndarray) -> float:
    """Scale factor mapping the decayed-past-frame sum onto the actual tail.

    In speech gaps the spectrum is pure reverberation, so a low percentile of
    the frame-wise magnitude/prediction ratio tracks the true proportionality
    (and collapses to ~0 for dry input, where gaps are silent).
    """
    num = mag.sum(axis=1)
    den = pred.sum(axis=1)
    good = den > 1e-12
    if not np.any(good):
        return 0.0
    ratio = num[good] / den[good]
    gain = float(np.percentile(ratio, REVERB_GAIN_PERCENTILE))
    return float(np.clip(gain, 0.0, 1.0))


def dereverberate(
    speech: Waveform,
    params: StftParams | None = None,
    return_info: bool = False,
):
    """Suppress late reverberation; returns the processed waveform.

    The late-reverberant magnitude is predicted per bin as an exponentially
    decaying weighted sum of past frames (decay constant from the blind RT60
    estimate), scaled by an estimated reverberation gain, and subtracted with
    a 0.1 * |X| spectral floor; phases are kept. Falls back to an identity
    copy (flagged in `info`) when no decay regions are found.

    With `return_info=True` also returns {"rt60_estimate", "fallback", "gain"}.
    """
    params = params or StftParams()
    info = {"rt60_estimate": None, "fallback": False, "gain": 0.0}

    def _done(wave):
        return (wave, info) if return_info else wave

    if speech.duration_s < 1.0:
        raise ValueError("dereverberation needs at least 1 s of audio")
    try:
        rt60_est = blind_rt60(speech) if speech.duration_s >= 2.0 else None
        if rt60_est is None:
            # short clips: fall back to a mid-range decay constant
            rt60_est = 0.5
    except NoDecayRegions:
        info["fallback"] = True
        return _done(speech.copy())
    info["rt60_estimate"] = rt60_est

    n = len(speech)
    pad = np.concatenate([speech.samples, np.zeros(params.window_length)])
    spec = stft_complex(Waveform(pad, speech.sample_rate), params)
    mag = np.abs(spec)

    frame_dt = params.hop / speech.sample_rate
    tau0 = max(1, int(round(LATE_REVERB_ONSET_S / frame_dt)))
    tau_max = int(min(1.5, max(2 * rt60_est, 0.2)) / frame_dt)
    taus = np.arange(tau0, max(tau_max, tau0 + 1) + 1)
    weights = np.exp(-DECAY_RATE * taus * frame_dt / rt60_est)
    weights /= weights.sum()

    kernel = np.zeros(taus[-1] + 1)
    kernel[taus] = weights
    pred = scipy.signal.fftconvolve(mag, kernel[:, None], mode="full")[: mag.shape[0]]

    gain = _estimate_reverb_gain(mag, pred)
    info["gain"] = gain
    late = OVERSUBTRACTION * gain * pred
    out_mag = np.maximum(mag - late, SPECTRAL_FLOOR * mag)
    ratio = np.ones_like(mag)
    nz = mag > 0
    ratio[nz] = out_mag[nz] / mag[nz]
    cleaned = istft(spec * ratio, params, length=n, sample_rate=speech.sample_rate)
    return _done(cleaned)
