"""Acoustic signature measurement.

Energy decay curves and RT60 via backward (Schroeder) integration, DRR from
impulse responses, and blind RT60/DRR estimation directly from reverberant
speech. The blind estimators are signal-based (free-decay detection and
envelope-modulation calibration) rather than learned, so their absolute
errors are validated against this package's own simulators.
"""

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .dsp import DEFAULT_SAMPLE_RATE, StftParams, Waveform, stft
from .errors import (
    InputTooShort,
    InsufficientDecay,
    NoDecayRegions,
    ZeroSignal,
)
from .rir import ImpulseResponse

EDC_FLOOR_DB = -120.0
DRR_CLAMP_DB = 60.0
DIRECT_WINDOW_S = 0.0025  # half-width of the "direct" energy window

# Free-decay detection bands. Octave-spaced from 250 Hz, with the top
# octaves split in half where speech energy is diffuse. Frequencies below
# ~250 Hz sit in the modal region of desk-scale rooms, where narrowband
# notches mimic free decay; they are excluded on purpose.
DECAY_BAND_EDGES = (250.0, 500.0, 1000.0, 2000.0, 2828.0, 4000.0, 5657.0, 8000.0)
MIN_SEGMENT_DROP_DB = 15.0
SEGMENT_MAX_S = 0.5
DECAY_PERCENTILE = 5.0
# offsets are broadband events: a decay segment counts only when at least
# this many other bands start decaying within the tolerance window
CORROBORATING_BANDS = 2
CORROBORATION_TOL_FRAMES = 6


@dataclass
class EnergyDecayCurve:
    """Backward-integrated squared IR, normalized to 0 dB at the start."""

    values: np.ndarray  # dB, non-increasing
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError("EDC must be a non-empty 1-D array")
        if self.values[0] != 0.0:
            raise ValueError("EDC must start at 0 dB")
        if np.any(np.diff(self.values) > 0):
            raise ValueError("EDC must be non-increasing")


@dataclass
class AcousticParams:
    """Low-dimensional room signature: reverberation time and direct ratio."""

    rt60: float
    drr: float

    def __post_init__(self):
        if not (np.isfinite(self.rt60) and self.rt60 > 0):
            raise ValueError(f"rt60 must be positive and finite, got {self.rt60}")
        if not np.isfinite(self.drr):
            raise ValueError("drr must be finite")


def schroeder_edc(ir: ImpulseResponse | Waveform) -> EnergyDecayCurve:
    """EDC(t) = 10 log10( sum_{tau >= t} h^2 / total ), floored at -120 dB."""
    wave = getattr(ir, "wave", ir)
    h2 = wave.samples**2
    tail = np.cumsum(h2[::-1])[::-1]
    total = tail[0]  # cumsum's own total keeps the ratio exactly monotone
    if total <= 0:
        raise ZeroSignal("impulse response has no energy")
    with np.errstate(divide="ignore"):
        edc = 10.0 * np.log10(tail / total)
    edc = np.maximum(edc, EDC_FLOOR_DB)
    edc[0] = 0.0
    return EnergyDecayCurve(edc, wave.sample_rate)


def rt60_from_edc(edc: EnergyDecayCurve) -> float:
    """T20 estimate: line fit on the -5..-25 dB EDC segment, extrapolated x3."""
    v = edc.values
    above_floor = v > EDC_FLOOR_DB
    cross5 = np.nonzero((v <= -5.0) & above_floor)[0]
    cross25 = np.nonzero((v <= -25.0) & above_floor)[0]
    if cross5.size == 0 or cross25.size == 0:
        raise InsufficientDecay("EDC does not reach -25 dB before its floor")
    i5, i25 = cross5[0], cross25[0]
    if i25 - i5 < 2:
        raise InsufficientDecay("decay from -5 to -25 dB spans fewer than 2 samples")
    t = np.arange(i5, i25 + 1) / edc.sample_rate
    y = v[i5 : i25 + 1]
    slope, _ = np.polyfit(t, y, 1)
    if slope >= 0:
        raise InsufficientDecay("EDC segment has no downward slope")
    return float(-60.0 / slope)


def drr(ir: ImpulseResponse) -> float:
    """Direct-to-reverberant ratio in dB.

    Direct = energy within +-2.5 ms of the direct-path sample; everything
    else is reverberant. Clamped to +-60 dB (a +60 return means the tail
    carried no measurable energy).
    """
    h2 = ir.wave.samples**2
    half = int(round(DIRECT_WINDOW_S * ir.wave.sample_rate))
    lo = max(0, ir.direct_index - half)
    hi = min(h2.size, ir.direct_index + half + 1)
    direct = h2[lo:hi].sum()
    rest = h2.sum() - direct
    if rest <= 0:
        return DRR_CLAMP_DB
    if direct <= 0:
        return -DRR_CLAMP_DB
    val = 10.0 * np.log10(direct / rest)
    return float(np.clip(val, -DRR_CLAMP_DB, DRR_CLAMP_DB))


def ir_rt60(ir: ImpulseResponse, highpass_hz: float = 80.0) -> float:
    """Schroeder RT60 of an impulse response's reverberant decay.

    Two measurement choices beyond the raw EDC fit: the direct-path window is
    excluded (the direct spike carries no decay information and, for
    direct-dominated IRs, would put a flat shelf inside the T20 fit range),
    and energy below `highpass_hz` is removed first. Sample-quantized
    image-source IRs accumulate same-sign amplitudes coherently within each
    sample, which builds a near-DC hump that flattens the broadband EDC; the
    decay of the band speech actually occupies is the meaningful quantity.
    """
    sr = ir.wave.sample_rate
    half = int(round(DIRECT_WINDOW_S * sr))
    start = min(ir.direct_index + half + 1, len(ir.wave) - 1)
    tail = ir.wave.samples[start:]
    if np.sum(tail**2) <= 0:
        raise InsufficientDecay("no reverberant tail beyond the direct window")
    if highpass_hz and tail.size > 30:
        sos = scipy.signal.butter(4, highpass_hz, btype="highpass", fs=sr, output="sos")
        tail = scipy.signal.sosfiltfilt(sos, tail)
    return rt60_from_edc(schroeder_edc(Waveform(tail, sr)))


def ir_acoustic_params(ir: ImpulseResponse) -> AcousticParams:
    """Measured (rt60, drr) pair for an impulse response."""
    return AcousticParams(rt60=ir_rt60(ir), drr=drr(ir))


# ---------------------------------------------------------------------------
# Blind estimation from reverberant speech
# ---------------------------------------------------------------------------


def _band_envelopes_db(speech: Waveform, params: StftParams):
    """Sub-band log-energy envelopes, (bands, frames), lightly smoothed."""
    spec = stft(speech, params)
    power = spec.magnitude**2
    freqs = np.fft.rfftfreq(params.fft_size, 1.0 / speech.sample_rate)
    envs = []
    for lo, hi in zip(DECAY_BAND_EDGES[:-1], DECAY_BAND_EDGES[1:]):
        sel = (freqs >= lo) & (freqs < hi)
        envs.append(power[:, sel].sum(axis=1))
    env = np.asarray(envs)
    floor = max(env.max(), 1e-300) * 1e-12
    env_db = 10.0 * np.log10(env + floor)
    if env_db.shape[1] >= 3:  # 3-frame moving average
        sm = env_db.copy()
        sm[:, 1:-1] = (env_db[:, :-2] + env_db[:, 1:-1] + env_db[:, 2:]) / 3.0
        env_db = sm
    frame_rate = speech.sample_rate / params.hop
    return env_db, frame_rate


def _find_decay_segments(env_db: np.ndarray, frame_rate: float):
    """Offset-decay segments in one band envelope: (peak_idx, end_idx) pairs.

    A segment runs from a local peak while the running minimum keeps falling
    (rises above it by > 2 dB end the segment), capped at SEGMENT_MAX_S, and
    is kept when the total fall reaches MIN_SEGMENT_DROP_DB.
    """
    n = env_db.size
    max_len = int(SEGMENT_MAX_S * frame_rate)
    peak_floor = env_db.max() - 45.0
    is_peak = np.zeros(n, dtype=bool)
    if n >= 3:
        is_peak[1:-1] = (env_db[1:-1] >= env_db[:-2]) & (env_db[1:-1] >= env_db[2:])
    is_peak &= env_db > peak_floor
    segments = []
    for p in np.nonzero(is_peak)[0]:
        run_min = env_db[p]
        end = p
        for t in range(p + 1, min(n, p + max_len)):
            if env_db[t] > run_min + 2.0:
                break
            if env_db[t] < run_min:
                run_min = env_db[t]
                end = t
        if env_db[p] - run_min >= MIN_SEGMENT_DROP_DB:
            segments.append((p, end))
    return segments


_FIT_WINDOW_DB = 10.0
_GUARD_TOP_DB = 2.0  # skip the peak frame itself
_GUARD_BOTTOM_DB = 3.0  # skip the knee into the (noise or silence) floor


def _segment_decay_time(seg_db: np.ndarray, frame_rate: float) -> float | None:
    """RT60 implied by one decay segment.

    The segment's frame energies are backward-integrated (Schroeder applied
    to the detected free decay) to suppress frame-to-frame fluctuation, then
    the slowest 10-dB stretch between the guards sets the decay time. An
    offset decay is usually concave — a cliff where the direct sound vanishes
    with the excitation, then the room's free decay — so the slowest stretch
    tracks the free decay when a reverberant tail is visible and the cliff
    itself when there is none (dry input), the honest answer in both cases.
    """
    power = 10.0 ** (seg_db / 10.0)
    cum = np.cumsum(power[::-1])[::-1]
    with np.errstate(divide="ignore"):
        y = 10.0 * np.log10(cum / cum[0])
    depth = -y[-1]
    if not np.isfinite(depth):
        depth = 120.0
        y = np.maximum(y, -120.0)
    if depth < _GUARD_TOP_DB + _FIT_WINDOW_DB + _GUARD_BOTTOM_DB:
        return None
    levels = np.arange(_GUARD_TOP_DB, depth - _GUARD_BOTTOM_DB - _FIT_WINDOW_DB + 0.5)
    best_dt = None
    for lev in levels:
        t1 = int(np.searchsorted(-y, lev, side="left"))
        t2 = int(np.searchsorted(-y, lev + _FIT_WINDOW_DB, side="left"))
        dt = max(t2 - t1, 1) / frame_rate
        if best_dt is None or dt > best_dt:
            best_dt = dt
    if best_dt is None:
        return None
    return float(best_dt * 60.0 / _FIT_WINDOW_DB)


def decay_time_estimates(
    speech: Waveform, params: StftParams | None = None
) -> np.ndarray:
    """Per-segment RT60 estimates pooled across bands.

    Single-band fades (harmonics sliding past band edges, narrowband
    interference) are rejected by requiring each segment's start to be
    corroborated by near-simultaneous decays in other bands.
    """
    params = params or StftParams()
    if speech.energy() < 1e-12:
        raise NoDecayRegions("signal is silent")
    env_db, frame_rate = _band_envelopes_db(speech, params)
    candidates = []
    for band_idx, band in enumerate(env_db):
        for p, end in _find_decay_segments(band, frame_rate):
            est = _segment_decay_time(band[p : end + 1], frame_rate)
            if est is not None and np.isfinite(est):
                candidates.append((band_idx, p, est))
    estimates = [
        est
        for band_idx, p, est in candidates
        if sum(
            1
            for other_band, other_p, _ in candidates
            if other_band != band_idx
            and abs(other_p - p) <= CORROBORATION_TOL_FRAMES
        )
        >= CORROBORATING_BANDS
    ]
    if not estimates:
        raise NoDecayRegions("no corroborated free-decay segments found")
    return np.asarray(estimates)


# Mapping from the raw low-percentile decay statistic to RT60, fitted offline
# on rooms from `rir.sample_random_room` rendered with `speech.synth_speech`
# (see scripts/calibrate_blind_rt60.py; regenerate after estimator changes).
RT60_CAL_KNOTS_RAW = (0.12, 0.24, 0.336, 0.442, 0.528, 0.707)
RT60_CAL_KNOTS_RT60 = (0.08, 0.306, 0.531, 0.811, 0.922, 1.126)
RT60_ESTIMATE_FLOOR = 0.02


def blind_rt60(speech: Waveform, params: StftParams | None = None) -> float:
    """Blind RT60 from free-decay regions of reverberant speech.

    The 5th percentile of per-segment decay times tracks the true free decay
    (speech tails bias individual segments long); a monotone piecewise-linear
    calibration fitted on simulated rooms removes the residual compression of
    that statistic.
    """
    if speech.duration_s < 2.0:
        raise InputTooShort("blind RT60 needs at least 2.0 s of audio")
    estimates = decay_time_estimates(speech, params)
    raw = float(np.percentile(estimates, DECAY_PERCENTILE))
    cal = float(np.interp(raw, RT60_CAL_KNOTS_RAW, RT60_CAL_KNOTS_RT60))
    return max(cal, RT60_ESTIMATE_FLOOR)


def _envelope_modulation_spectrum(speech: Waveform, params: StftParams | None = None):
    """Power spectrum of the mean-removed broadband amplitude envelope."""
    params = params or StftParams()
    spec = stft(speech, params)
    env = np.sqrt((spec.magnitude**2).sum(axis=1))
    env = env - env.mean()
    if not np.any(env):
        raise NoDecayRegions("flat envelope; no modulation to measure")
    mod = np.abs(np.fft.rfft(env)) ** 2
    freqs = np.fft.rfftfreq(env.size, params.hop / speech.sample_rate)
    return mod, freqs


def modulation_ratio(speech: Waveform, params: StftParams | None = None) -> float:
    """Fraction of envelope-spectrum energy in the syllabic 2-8 Hz band."""
    mod, freqs = _envelope_modulation_spectrum(speech, params)
    total = mod[(freqs > 0.5) & (freqs <= 32.0)].sum()
    syllabic = mod[(freqs >= 2.0) & (freqs <= 8.0)].sum()
    if total <= 0:
        raise NoDecayRegions("envelope has no modulation energy")
    return float(syllabic / total)


def edge_retention_db(speech: Waveform, params: StftParams | None = None) -> float:
    """High-rate (20-60 Hz) vs syllabic modulation energy, in dB.

    Reverberation low-passes the energy envelope, so modulation well above
    the decay knee survives only through the direct sound; its retention
    tracks the direct fraction where the syllabic ratio is flat (short RT60).
    """
    mod, freqs = _envelope_modulation_spectrum(speech, params)
    syllabic = mod[(freqs >= 2.0) & (freqs <= 8.0)].sum()
    high = mod[(freqs >= 20.0) & (freqs <= 60.0)].sum()
    if syllabic <= 0 or high <= 0:
        raise NoDecayRegions("envelope has no modulation energy")
    return float(10.0 * np.log10(high / syllabic))


# Calibration surfaces for blind DRR, fitted offline on parametric IRs
# (`matching.synthesize_ir`) rendered with `speech.synth_speech`
# (see scripts/calibrate_drr.py; regenerate after estimator changes).
DRR_CAL_RT60_GRID = (0.2, 0.45, 0.7, 1.0, 1.3)
DRR_CAL_DRR_GRID = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
DRR_CAL_RHO = (
    (0.447, 0.447, 0.450, 0.468, 0.484, 0.485, 0.498),
    (0.348, 0.348, 0.373, 0.421, 0.450, 0.482, 0.494),
    (0.301, 0.307, 0.357, 0.397, 0.444, 0.477, 0.490),
    (0.233, 0.274, 0.308, 0.399, 0.443, 0.470, 0.492),
    (0.260, 0.260, 0.327, 0.391, 0.457, 0.478, 0.491),
)
DRR_CAL_EDGE_DB = (
    (-24.64, -23.49, -21.02, -20.54, -19.35, -18.72, -18.56),
    (-21.96, -21.96, -19.92, -19.22, -18.56, -18.31, -18.31),
    (-21.93, -20.32, -19.73, -18.63, -18.12, -18.04, -18.04),
    (-17.60, -17.60, -17.36, -17.36, -17.36, -17.36, -17.36),
    (-16.56, -15.43, -15.43, -15.43, -15.43, -15.43, -15.43),
)
# weight of the edge-retention feature vs the syllabic ratio, by RT60
DRR_EDGE_WEIGHT_BY_RT60 = (0.85, 0.70, 0.50, 0.15, 0.10)


def _interp_row(table, grid, hint):
    rows = np.asarray(table, dtype=np.float64)
    idx = np.clip(np.searchsorted(grid, hint), 1, len(grid) - 1)
    w = (hint - grid[idx - 1]) / (grid[idx] - grid[idx - 1])
    w = float(np.clip(w, 0.0, 1.0))
    return np.maximum.accumulate((1 - w) * rows[idx - 1] + w * rows[idx])


def blind_drr(speech: Waveform, rt60_hint: float) -> float:
    """Blind DRR from envelope modulation features.

    Inverts two monotone calibration curves indexed by RT60: the syllabic
    2-8 Hz modulation-energy ratio (informative at long RT60, where the
    reverberant tail low-passes the envelope) and the high-rate edge
    retention (informative at short RT60). Coarse by construction;
    monotone in the true DRR.
    """
    if speech.duration_s < 2.0:
        raise InputTooShort("blind DRR needs at least 2.0 s of audio")
    if speech.energy() < 1e-12:
        raise NoDecayRegions("signal is silent")
    rho = modulation_ratio(speech)
    edge = edge_retention_db(speech)
    grid = np.asarray(DRR_CAL_RT60_GRID)
    drrs = np.asarray(DRR_CAL_DRR_GRID)
    hint = float(np.clip(rt60_hint, grid[0], grid[-1]))
    est_rho = float(np.interp(rho, _interp_row(DRR_CAL_RHO, grid, hint), drrs))
    est_edge = float(np.interp(edge, _interp_row(DRR_CAL_EDGE_DB, grid, hint), drrs))
    w_edge = float(np.interp(hint, grid, np.asarray(DRR_EDGE_WEIGHT_BY_RT60)))
    return w_edge * est_edge + (1.0 - w_edge) * est_rho
