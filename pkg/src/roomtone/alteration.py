"""Self-supervised acoustics alteration.

Turns a recording that matches its space into a content-preserving,
acoustically mismatched source: strip the original acoustics by
dereverberation, re-reverberate with an impulse response drawn from a pool,
and bury the residue under Gaussian noise at a random SNR in [2, 10] dB.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import Waveform, add_noise_at_snr, fft_convolve, write_wav
from .errors import BadVariant, EmptyPool, InputTooShort, ZeroSignal
from .matching import dereverberate
from .rir import ImpulseResponse, load_ir

SNR_RANGE_DB = (2.0, 10.0)

VARIANTS = (
    "full",
    "dereverb-randomize",
    "dereverb-noise",
    "dereverb",
    "randomize-noise",
)
_VARIANT_STAGES = {
    "full": (True, True, True),
    "dereverb-randomize": (True, True, False),
    "dereverb-noise": (True, False, True),
    "dereverb": (True, False, False),
    "randomize-noise": (False, True, True),
}

SPLITS = ("train", "val", "test")


@dataclass
class IrPoolEntry:
    id: str
    ir: ImpulseResponse
    split: str
    rt60: float | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")


@dataclass
class IrPool:
    """Impulse responses with unique ids and train/val/test split tags."""

    entries: list[IrPoolEntry] = field(default_factory=list)

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("pool ids must be unique")

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, entry: IrPoolEntry) -> None:
        if any(e.id == entry.id for e in self.entries):
            raise ValueError(f"duplicate pool id {entry.id!r}")
        self.entries.append(entry)

    def split_entries(self, split: str) -> list[IrPoolEntry]:
        return [e for e in self.entries if e.split == split]

    def get(self, entry_id: str) -> IrPoolEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise KeyError(entry_id)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        index = []
        for e in self.entries:
            wav_path = directory / f"{e.id}.wav"
            write_wav(wav_path, e.ir.wave, fmt="float32")
            meta = {"direct_index": e.ir.direct_index}
            wav_path.with_suffix(".json").write_text(json.dumps(meta))
            index.append(
                {"id": e.id, "wav": wav_path.name, "split": e.split, "rt60": e.rt60}
            )
        (directory / "pool.jsonl").write_text(
            "".join(json.dumps(row) + "\n" for row in index)
        )

    @classmethod
    def load(cls, directory) -> "IrPool":
        directory = Path(directory)
        entries = []
        for line in (directory / "pool.jsonl").read_text().splitlines():
            row = json.loads(line)
            ir = load_ir(directory / row["wav"])
            entries.append(
                IrPoolEntry(
                    id=row["id"], ir=ir, split=row["split"], rt60=row.get("rt60")
                )
            )
        return cls(entries)


@dataclass
class AlterationTrace:
    """Every stage of one alteration run, in order of application."""

    a_t: Waveform  # original (acoustically matched) audio
    a_c: Waveform  # after dereverberation
    a_r: Waveform  # after random re-reverberation
    a_s: Waveform  # after noise injection: the training source
    sampled_ir_id: str
    snr_db: float
    seed: int


def _reverberate(clean: Waveform, ir: ImpulseResponse) -> Waveform:
    """Convolve, trim to the input length, and match the input's peak."""
    wet = fft_convolve(clean, ir)
    out = wet.samples[: len(clean)]
    peak = np.max(np.abs(out))
    ref_peak = clean.peak()
    if peak <= 0 or ref_peak <= 0:
        raise ZeroSignal("re-reverberation produced or received silence")
    return Waveform(out * (ref_peak / peak), clean.sample_rate)


def _run_stages(a_t, pool, split, seed, do_dereverb, do_randomize, do_noise):
    entries = pool.split_entries(split)
    if not entries:
        raise EmptyPool(f"no impulse responses in split {split!r}")
    if a_t.duration_s < 2.0:
        raise InputTooShort("alteration needs at least 2.0 s of audio")
    rng = np.random.default_rng(seed)

    a_c = dereverberate(a_t) if do_dereverb else a_t.copy()

    ir_id = ""
    a_r = a_c
    if do_randomize:
        entry = entries[int(rng.integers(len(entries)))]
        ir_id = entry.id
        a_r = _reverberate(a_c, entry.ir)

    snr_db = float("nan")
    a_s = a_r
    if do_noise:
        snr_db = float(rng.uniform(*SNR_RANGE_DB))
        noise_seed = int(rng.integers(2**31))
        a_s = add_noise_at_snr(a_r, snr_db, seed=noise_seed)

    return AlterationTrace(
        a_t=a_t.copy(),
        a_c=a_c,
        a_r=a_r,
        a_s=a_s,
        sampled_ir_id=ir_id,
        snr_db=snr_db,
        seed=seed,
    )


def alter(a_t: Waveform, pool: IrPool, split: str, seed: int) -> AlterationTrace:
    """Full alteration: dereverberate, re-reverberate with a pool IR sampled
    uniformly from the split, then add noise at an SNR drawn from [2, 10] dB.
    Deterministic per seed."""
    return _run_stages(a_t, pool, split, seed, True, True, True)


def ablation_variants(
    a_t: Waveform, pool: IrPool, split: str, seed: int, variant: str
) -> Waveform:
    """Run a named subset of the alteration stages and return the result.

    `full` is bit-identical to `alter(...).a_s` for the same seed.
    """
    if variant not in _VARIANT_STAGES:
        raise BadVariant(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    trace = _run_stages(a_t, pool, split, seed, *_VARIANT_STAGES[variant])
    return trace.a_s


def derive_clip_seed(corpus_seed: int, clip_index: int) -> int:
    """Per-clip seed: corpus seed XOR clip index, reproducible under any
    scheduling order."""
    return int(corpus_seed) ^ int(clip_index)
