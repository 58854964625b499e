"""Regenerate the blind-DRR modulation calibration tables.

For each (RT60, DRR) grid point, synthesize parametric IRs, convolve them
with a handful of speech clips, and record the two modulation features the
estimator inverts: the syllabic-band energy ratio and the high-rate edge
retention. Paste the printed tables into roomtone.analysis (DRR_CAL_*) after
any change to the feature definitions or the speech generator.
"""

import argparse

import numpy as np

from roomtone.analysis import (
    AcousticParams,
    edge_retention_db,
    modulation_ratio,
)
from roomtone.dsp import Waveform, fft_convolve
from roomtone.matching import synthesize_ir
from roomtone.speech import synth_speech

RT60_GRID = (0.2, 0.45, 0.7, 1.0, 1.3)
DRR_GRID = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--clips", type=int, default=8)
    ap.add_argument("--clip-seconds", type=float, default=4.0)
    ap.add_argument("--seed", type=int, default=40000)
    args = ap.parse_args()

    clips = [
        synth_speech(args.clip_seconds, seed=args.seed + s) for s in range(args.clips)
    ]
    rho_table, edge_table = [], []
    for i, rt in enumerate(RT60_GRID):
        rho_row, edge_row = [], []
        for j, dr in enumerate(DRR_GRID):
            rhos, edges = [], []
            for k, clip in enumerate(clips):
                ir = synthesize_ir(
                    AcousticParams(rt60=rt, drr=dr),
                    seed=args.seed + 100 * i + 10 * j + k,
                )
                wet = Waveform(
                    fft_convolve(clip, ir).samples[: len(clip)], clip.sample_rate
                )
                rhos.append(modulation_ratio(wet))
                edges.append(edge_retention_db(wet))
            rho_row.append(float(np.mean(rhos)))
            edge_row.append(float(np.mean(edges)))
            print(f"rt60={rt} drr={dr:+.0f}: rho={rho_row[-1]:.3f} edge={edge_row[-1]:+.2f}")
        rho_table.append(list(np.maximum.accumulate(rho_row)))
        edge_table.append(list(np.maximum.accumulate(edge_row)))

    print("\npaste into roomtone/analysis.py:")
    print(f"DRR_CAL_RT60_GRID = {RT60_GRID}")
    print(f"DRR_CAL_DRR_GRID = {DRR_GRID}")
    for name, table, fmt in (
        ("DRR_CAL_RHO", rho_table, "{:.3f}"),
        ("DRR_CAL_EDGE_DB", edge_table, "{:.2f}"),
    ):
        print(f"{name} = (")
        for row in table:
            print("    (" + ", ".join(fmt.format(v) for v in row) + "),")
        print(")")


if __name__ == "__main__":
    main()
