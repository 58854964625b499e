"""Metrics, corpus construction, and reporting.

Spectrogram MSE, blind-RT60 error, mel-L1, and a multi-resolution STFT loss
score a matching method; the corpus tools build synthetic paired datasets
(clean/reverberant) and filter manifests the way a scraped corpus would be
cleaned: drop near-anechoic clips and rebalance the RT60 histogram.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import blind_rt60, ir_rt60
from .dsp import (
    StftParams,
    Waveform,
    fft_convolve,
    mel_spectrogram,
    read_wav,
    stft,
    write_wav,
)
from .errors import (
    EmptyAfterFilter,
    EmptyPool,
    InputTooShort,
    LengthMismatch,
    NoDecayRegions,
    RateMismatch,
)

PAIR_CLIP_SECONDS = 2.56
MULTIRES_RESOLUTIONS = ((512, 128), (1024, 256), (2048, 512))
_LOG_EPS = 1e-7


def _check_aligned(a: Waveform, b: Waveform) -> None:
    if a.sample_rate != b.sample_rate:
        raise RateMismatch(f"sample rates differ: {a.sample_rate} vs {b.sample_rate}")
    if len(a) != len(b):
        raise LengthMismatch(f"lengths differ: {len(a)} vs {len(b)} (no implicit trim)")


def stft_distance(a: Waveform, b: Waveform, p: StftParams | None = None) -> float:
    """MSE between magnitude spectrograms."""
    _check_aligned(a, b)
    p = p or StftParams()
    ma = stft(a, p).magnitude
    mb = stft(b, p).magnitude
    return float(np.mean((ma - mb) ** 2))


def rte(output: Waveform, target: Waveform) -> float:
    """Absolute blind-RT60 difference in seconds."""
    return abs(blind_rt60(output) - blind_rt60(target))


def mel_l1(a: Waveform, b: Waveform, p: StftParams | None = None) -> float:
    """Mean absolute difference of mel spectrograms."""
    _check_aligned(a, b)
    return float(np.mean(np.abs(mel_spectrogram(a, p) - mel_spectrogram(b, p))))


def single_res_stft_loss(a: Waveform, b: Waveform, fft_size: int, hop: int) -> float:
    """Spectral convergence plus log-magnitude L1 at one resolution."""
    _check_aligned(a, b)
    p = StftParams(fft_size=fft_size, hop=hop, window_length=fft_size)
    ma = stft(a, p).magnitude
    mb = stft(b, p).magnitude
    norm_a = np.linalg.norm(ma)
    sc = float(np.linalg.norm(ma - mb) / norm_a) if norm_a > 0 else 0.0
    log_l1 = float(np.mean(np.abs(np.log(ma + _LOG_EPS) - np.log(mb + _LOG_EPS))))
    return sc + log_l1


def multires_stft_loss(a: Waveform, b: Waveform, resolutions=MULTIRES_RESOLUTIONS) -> float:
    """Sum of per-resolution spectral-convergence and log-magnitude terms.

    A zero-energy first argument contributes only its log-magnitude terms
    (the convergence denominator would vanish).
    """
    return float(sum(single_res_stft_loss(a, b, f, h) for f, h in resolutions))


def envelope_correlation(a: Waveform, b: Waveform, p: StftParams | None = None) -> float:
    """Pearson correlation of the 2-8 Hz band of the broadband energy
    envelopes; a content-preservation proxy robust to acoustic changes."""
    _check_aligned(a, b)
    p = p or StftParams()

    def banded_envelope(w):
        env = np.sqrt((stft(w, p).magnitude ** 2).sum(axis=1))
        env = env - env.mean()
        spec = np.fft.rfft(env)
        freqs = np.fft.rfftfreq(env.size, p.hop / w.sample_rate)
        spec[(freqs < 2.0) | (freqs > 8.0)] = 0.0
        return np.fft.irfft(spec, n=env.size)

    ea, eb = banded_envelope(a), banded_envelope(b)
    denom = np.linalg.norm(ea) * np.linalg.norm(eb)
    if denom == 0:
        return 0.0
    return float(np.dot(ea, eb) / denom)


# ---------------------------------------------------------------------------
# Corpus manifests
# ---------------------------------------------------------------------------


@dataclass
class ManifestEntry:
    id: str
    wav_path: str
    split: str
    blind_rt60: float | None = None
    duration_s: float | None = None
    tags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "wav_path": self.wav_path,
            "split": self.split,
            "blind_rt60": self.blind_rt60,
            "duration_s": self.duration_s,
            "tags": self.tags,
        }


@dataclass
class CorpusManifest:
    """JSON-lines corpus index; paths are relative to `root`."""

    entries: list
    root: Path | None = None

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest ids must be unique")
        for e in self.entries:
            if e.split not in ("train", "val", "test"):
                raise ValueError(f"bad split {e.split!r} for entry {e.id!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        base = self.root or Path(".")
        return Path(base) / entry.wav_path

    def by_id(self, entry_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise KeyError(entry_id)

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            for e in self.entries:
                f.write(json.dumps(e.to_dict()) + "\n")

    @classmethod
    def load(cls, path, root=None, check_paths: bool = True) -> "CorpusManifest":
        path = Path(path)
        root = Path(root) if root is not None else path.parent
        entries = []
        for line in path.read_text().splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            entries.append(
                ManifestEntry(
                    id=d["id"],
                    wav_path=d["wav_path"],
                    split=d["split"],
                    blind_rt60=d.get("blind_rt60"),
                    duration_s=d.get("duration_s"),
                    tags=d.get("tags") or {},
                )
            )
        manifest = cls(entries, root=root)
        if check_paths:
            for e in entries:
                p = manifest.resolve(e)
                if not p.exists():
                    raise FileNotFoundError(f"manifest entry {e.id!r}: missing {p}")
        return manifest


def build_paired_corpus(
    clean_manifest: CorpusManifest,
    ir_pool,
    seed: int,
    out_dir,
    clip_seconds: float = PAIR_CLIP_SECONDS,
):
    """Render (source, target) pairs: each clean clip, trimmed to a fixed
    length, is convolved with an IR drawn from its split.

    Writes `<id>_src.wav` / `<id>_tgt.wav` under `out_dir` plus
    `sources.jsonl` and `targets.jsonl`. Returns (sources, targets)
    manifests; target tags carry the source path, the IR id, and the IR's
    measured RT60.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    src_entries, tgt_entries = [], []
    for idx, entry in enumerate(clean_manifest.entries):
        clip = read_wav(clean_manifest.resolve(entry))
        n = int(round(clip_seconds * clip.sample_rate))
        if len(clip) < n:
            raise InputTooShort(
                f"clip {entry.id!r} is {clip.duration_s:.2f}s, needs {clip_seconds}s"
            )
        pool_entries = ir_pool.split_entries(entry.split)
        if not pool_entries:
            raise EmptyPool(f"no impulse responses in split {entry.split!r}")
        rng = np.random.default_rng(seed ^ idx)
        pool_entry = pool_entries[int(rng.integers(len(pool_entries)))]

        source = Waveform(clip.samples[:n], clip.sample_rate)
        target = Waveform(
            fft_convolve(source, pool_entry.ir).samples[:n], clip.sample_rate
        )
        src_name = f"{entry.id}_src.wav"
        tgt_name = f"{entry.id}_tgt.wav"
        write_wav(out_dir / src_name, source, fmt="float32")
        write_wav(out_dir / tgt_name, target, fmt="float32")
        true_rt = pool_entry.rt60
        if true_rt is None:
            true_rt = ir_rt60(pool_entry.ir)
        src_entries.append(
            ManifestEntry(
                id=entry.id,
                wav_path=src_name,
                split=entry.split,
                duration_s=clip_seconds,
                tags={"role": "source"},
            )
        )
        tgt_entries.append(
            ManifestEntry(
                id=entry.id,
                wav_path=tgt_name,
                split=entry.split,
                blind_rt60=None,
                duration_s=clip_seconds,
                tags={"source_wav": src_name, "ir_id": pool_entry.id, "ir_rt60": true_rt},
            )
        )
    sources = CorpusManifest(src_entries, root=out_dir)
    targets = CorpusManifest(tgt_entries, root=out_dir)
    sources.save(out_dir / "sources.jsonl")
    targets.save(out_dir / "targets.jsonl")
    return sources, targets


def filter_corpus(
    manifest: CorpusManifest,
    min_rt60: float = 0.1,
    bin_width: float = 0.1,
    cap_ratio: float = 2.0,
    seed: int = 0,
) -> CorpusManifest:
    """Drop near-anechoic entries and flatten the RT60 histogram.

    Entries below `min_rt60` are removed; each `bin_width`-wide RT60 bin is
    then capped at `cap_ratio` times the median occupied-bin count by seeded
    random subsampling.
    """
    kept = [
        e
        for e in manifest.entries
        if e.blind_rt60 is not None and e.blind_rt60 >= min_rt60
    ]
    if not kept:
        raise EmptyAfterFilter(f"no entries with RT60 >= {min_rt60}s")
    bins = {}
    for e in kept:
        bins.setdefault(int(e.blind_rt60 / bin_width), []).append(e)
    median_count = float(np.median([len(v) for v in bins.values()]))
    cap = max(1, int(np.floor(cap_ratio * median_count + 1e-9)))
    rng = np.random.default_rng(seed)
    out = []
    for key in sorted(bins):
        members = bins[key]
        if len(members) > cap:
            pick = rng.choice(len(members), size=cap, replace=False)
            members = [members[i] for i in sorted(pick)]
        out.extend(members)
    return CorpusManifest(out, root=manifest.root)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

METRIC_NAMES = ("stft_distance", "rte_seconds", "mel_l1", "mrstft")


@dataclass
class ClipMetrics:
    clip_id: str
    stft_distance: float
    rte_seconds: float  # nan when flagged
    mel_l1: float
    mrstft: float
    flags: list = field(default_factory=list)


@dataclass
class EvalReport:
    rows: list
    aggregates: dict


def evaluate_pair(output: Waveform, target: Waveform, clip_id: str) -> ClipMetrics:
    """All four metrics for one (output, target) pair; blind-RT60 failures
    flag the row instead of aborting the run."""
    flags = []
    if output.energy() == 0.0:
        flags.append("mrstft_sc_skipped")  # convergence denominator vanishes
    try:
        rte_val = rte(output, target)
    except NoDecayRegions:
        rte_val = float("nan")
        flags.append("rte_no_decay_regions")
    return ClipMetrics(
        clip_id=clip_id,
        stft_distance=stft_distance(output, target),
        rte_seconds=rte_val,
        mel_l1=mel_l1(output, target),
        mrstft=multires_stft_loss(output, target),
        flags=flags,
    )


def aggregate_rows(rows) -> dict:
    """Mean/median/standard error per metric over non-flagged values."""
    out = {}
    for name in METRIC_NAMES:
        vals = np.asarray(
            [getattr(r, name) for r in rows if np.isfinite(getattr(r, name))]
        )
        if vals.size == 0:
            out[name] = {"mean": None, "median": None, "stderr": None, "count": 0}
            continue
        stderr = float(np.std(vals, ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
        out[name] = {
            "mean": float(np.mean(vals)),
            "median": float(np.median(vals)),
            "stderr": stderr,
            "count": int(vals.size),
        }
    return out


def evaluate_corpus(outputs: CorpusManifest, targets: CorpusManifest) -> EvalReport:
    """Score every output clip against the target with the same id."""
    target_ids = {e.id for e in targets.entries}
    rows = []
    for entry in outputs.entries:
        if entry.id not in target_ids:
            raise KeyError(f"clip id {entry.id!r} missing from targets manifest")
        out_wave = read_wav(outputs.resolve(entry))
        tgt_wave = read_wav(targets.resolve(targets.by_id(entry.id)))
        rows.append(evaluate_pair(out_wave, tgt_wave, entry.id))
    return EvalReport(rows=rows, aggregates=aggregate_rows(rows))


def write_report_csv(report: EvalReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["clip_id", *METRIC_NAMES, "flags"])
        for r in report.rows:
            writer.writerow(
                [
                    r.clip_id,
                    *(f"{getattr(r, name):.8g}" for name in METRIC_NAMES),
                    ";".join(r.flags),
                ]
            )


def write_report_json(report: EvalReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.aggregates, indent=2))
