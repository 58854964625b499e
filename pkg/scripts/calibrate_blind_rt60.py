"""Refit the blind-RT60 calibration curve on freshly simulated rooms.

Renders speech clips through image-source rooms spanning RT60 0.2-1.1 s,
collects the raw low-percentile decay statistic, and fits a monotone
piecewise-linear map to the Schroeder ground truth, anchored at the dry end
by unprocessed clips. Paste the printed knots into roomtone.analysis
(RT60_CAL_KNOTS_*) after any change to the segment detector, the band
layout, or the speech generator.
"""

import argparse

import numpy as np

from roomtone import analysis
from roomtone.dsp import Waveform, fft_convolve
from roomtone.rir import sabine_rt60, sample_random_room, simulate_rir
from roomtone.speech import synth_speech


def raw_statistic(speech):
    estimates = analysis.decay_time_estimates(speech)
    return float(np.percentile(estimates, analysis.DECAY_PERCENTILE))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rooms", type=int, default=100)
    ap.add_argument("--seed", type=int, default=3000)
    ap.add_argument("--clip-seconds", type=float, default=4.0)
    args = ap.parse_args()

    truths, raws = [], []
    # dry anchors: the raw statistic's resolution floor maps to "no reverb"
    for s in range(8):
        raws.append(raw_statistic(synth_speech(args.clip_seconds, seed=90000 + s)))
        truths.append(0.05)
        print(f"dry {s}: raw={raws[-1]:.3f}")
    for i in range(args.rooms):
        lo = 0.2 + 0.9 * i / (args.rooms - 1)
        room = sample_random_room(
            args.seed + i, rt60_range=(max(0.18, lo - 0.02), lo + 0.02)
        )
        ir = simulate_rir(room, ir_length=0.9 * sabine_rt60(room) + 0.1)
        clip = synth_speech(args.clip_seconds, seed=args.seed + 7000 + i)
        reverberant = Waveform(
            fft_convolve(clip, ir).samples[: len(clip)], clip.sample_rate
        )
        truths.append(analysis.ir_rt60(ir))
        raws.append(raw_statistic(reverberant))
        print(f"room {i:3d}: true={truths[-1]:.3f} raw={raws[-1]:.3f}")

    truths, raws = np.asarray(truths), np.asarray(raws)
    edges = np.quantile(raws, np.linspace(0.0, 1.0, 8))
    knots_raw, knots_rt = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (raws >= lo) & (raws <= hi)
        if sel.sum() >= 3:
            kr = float(np.median(raws[sel]))
            kt = float(np.median(truths[sel]))
            if knots_raw and kr <= knots_raw[-1] + 1e-9:
                knots_rt[-1] = (knots_rt[-1] + kt) / 2.0
                continue
            knots_raw.append(kr)
            knots_rt.append(kt)
    knots_rt = np.maximum.accumulate(knots_rt)

    corrected = np.interp(raws, knots_raw, knots_rt)
    err = np.abs(corrected - truths)
    print(f"\nin-sample median |err| = {np.median(err):.3f} s")
    print("\npaste into roomtone/analysis.py:")
    print(f"RT60_CAL_KNOTS_RAW = {tuple(round(v, 3) for v in knots_raw)}")
    print(f"RT60_CAL_KNOTS_RT60 = {tuple(round(float(v), 3) for v in knots_rt)}")


if __name__ == "__main__":
    main()
