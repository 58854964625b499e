"""Synthetic speech-like test signals.

Real corpora are deliberately not bundled; these clips stand in for dry
speech wherever the pipeline needs audio content. A clip is a sequence of
voiced "syllables" (harmonic complexes shaped by random formants, sharp
offsets), occasional fricative noise bursts, word gaps, and a few longer
phrase pauses so that free-decay regions exist after reverberation.
"""

import numpy as np

from .dsp import DEFAULT_SAMPLE_RATE, Waveform


def _voiced_syllable(rng, dur_s, sr):
    n = int(dur_s * sr)
    t = np.arange(n) / sr
    f0 = rng.uniform(90.0, 220.0)
    # small drift: heavy intra-syllable pitch sweeps smear band envelopes
    drift = rng.uniform(-0.02, 0.02)
    f0_t = f0 * (1.0 + drift * t / max(dur_s, 1e-6))
    phase0 = np.cumsum(2.0 * np.pi * f0_t / sr)

    n_harm = int(6000.0 / f0)
    k = np.arange(1, n_harm + 1)
    freqs = k * f0
    # 1/k source tilt shaped by two or three random formant resonances
    amps = 1.0 / k
    gain = np.zeros_like(freqs)
    n_formants = rng.integers(2, 4)
    centers = np.sort(rng.uniform([300, 900, 2200][:n_formants], [900, 2200, 3400][:n_formants]))
    for fc in centers:
        bw = rng.uniform(120.0, 300.0)
        gain += 1.0 / (1.0 + ((freqs - fc) / bw) ** 2)
    amps = amps * (0.15 + gain)

    phases = rng.uniform(0, 2 * np.pi, n_harm)
    sig = (np.sin(phase0[:, None] * k[None, :] + phases[None, :]) * amps[None, :]).sum(axis=1)

    # raised-cosine onset and a sharper offset
    onset = int(rng.uniform(0.015, 0.030) * sr)
    offset = int(rng.uniform(0.008, 0.020) * sr)
    env = np.ones(n)
    env[:onset] = 0.5 - 0.5 * np.cos(np.pi * np.arange(onset) / onset)
    env[n - offset :] = 0.5 + 0.5 * np.cos(np.pi * np.arange(offset) / offset)
    return sig * env


def _fricative_burst(rng, dur_s, sr):
    n = int(dur_s * sr)
    noise = rng.standard_normal(n)
    spec = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(n, 1.0 / sr)
    lo = rng.uniform(1800.0, 3000.0)
    hi = rng.uniform(5500.0, 7200.0)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    sig = np.fft.irfft(spec, n=n)
    ramp = max(4, int(0.006 * sr))
    env = np.ones(n)
    env[:ramp] = np.linspace(0, 1, ramp)
    env[-ramp:] = np.linspace(1, 0, ramp)
    peak = np.max(np.abs(sig))
    if peak > 0:
        sig = sig / peak
    return sig * env


def synth_speech(
    duration_s: float = 3.0,
    seed: int = 0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> Waveform:
    """Deterministic speech-like clip of at least `duration_s` seconds."""
    rng = np.random.default_rng(seed)
    sr = sample_rate
    trailing = 0.5
    total = int(duration_s * sr)
    out = np.zeros(total)
    pos = int(rng.uniform(0.0, 0.05) * sr)
    syllables_since_pause = 0
    next_pause_after = rng.integers(3, 6)
    while pos < total - int(trailing * sr):
        dur = rng.uniform(0.12, 0.35)
        syl = _voiced_syllable(rng, dur, sr)
        level = rng.uniform(0.5, 1.0)
        peak = np.max(np.abs(syl))
        if peak > 0:
            syl = syl / peak * level
        end = min(pos + syl.size, total)
        out[pos:end] += syl[: end - pos]
        pos = end
        if rng.uniform() < 0.15:
            fric = _fricative_burst(rng, rng.uniform(0.05, 0.12), sr) * (level * 0.4)
            end = min(pos + fric.size, total)
            out[pos:end] += fric[: end - pos]
            pos = end
        syllables_since_pause += 1
        if syllables_since_pause >= next_pause_after:
            pos += int(rng.uniform(0.30, 0.50) * sr)  # phrase pause
            syllables_since_pause = 0
            next_pause_after = rng.integers(3, 6)
        else:
            pos += int(rng.uniform(0.05, 0.14) * sr)  # word gap
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= 0.95 / peak
    return Waveform(out, sr)
