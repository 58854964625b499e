"""Shoebox image-source room-impulse-response simulator.

Mirrors the source across the six walls of a rectangular room to enumerate
reflection paths. Per-bounce reflection factor is sqrt(1 - alpha) (energy
absorption convention) so Sabine-formula oracles are directly comparable.
Delays are quantized to the nearest sample; adequate for RT60/DRR-level
validation at 16 kHz, a known source of high-frequency error.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import DEFAULT_SAMPLE_RATE, Waveform, read_wav, write_wav
from .errors import (
    DegenerateGeometry,
    InfeasibleTarget,
    InfiniteReverb,
    InputTooShort,
)

SPEED_OF_SOUND = 343.0

# keep the broadcast image grid under ~8M entries per chunk
_CHUNK_LIMIT = 8_000_000


@dataclass
class ShoeboxRoom:
    """Rectangular room with per-surface absorption.

    `absorption` order: (x=0, x=Lx, y=0, y=Ly, z=0, z=Lz).
    """

    dims: np.ndarray
    absorption: np.ndarray
    source_pos: np.ndarray
    receiver_pos: np.ndarray
    speed_of_sound: float = SPEED_OF_SOUND
    max_order: int = 60

    def __post_init__(self):
        self.dims = np.asarray(self.dims, dtype=np.float64)
        self.source_pos = np.asarray(self.source_pos, dtype=np.float64)
        self.receiver_pos = np.asarray(self.receiver_pos, dtype=np.float64)
        alpha = np.asarray(self.absorption, dtype=np.float64)
        if alpha.size == 1:
            alpha = np.full(6, float(alpha))
        self.absorption = alpha
        if self.dims.shape != (3,) or np.any(self.dims <= 0):
            raise ValueError("dims must be three positive lengths")
        if self.absorption.shape != (6,):
            raise ValueError("absorption must give one coefficient per surface (6)")
        if np.any(self.absorption < 0) or np.any(self.absorption > 1):
            raise ValueError("absorption coefficients must lie in [0, 1]")
        for name, p in (("source", self.source_pos), ("receiver", self.receiver_pos)):
            if p.shape != (3,) or np.any(p <= 0) or np.any(p >= self.dims):
                raise ValueError(f"{name} position must be strictly inside the room")
        if self.max_order < 0:
            raise ValueError("max_order must be >= 0")

    @property
    def volume(self) -> float:
        return float(np.prod(self.dims))

    @property
    def surface_areas(self) -> np.ndarray:
        """Areas paired with `absorption`: (yz, yz, xz, xz, xy, xy)."""
        lx, ly, lz = self.dims
        return np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])

    def to_dict(self) -> dict:
        return {
            "dims": self.dims.tolist(),
            "absorption": self.absorption.tolist(),
            "source_pos": self.source_pos.tolist(),
            "receiver_pos": self.receiver_pos.tolist(),
            "speed_of_sound": self.speed_of_sound,
            "max_order": self.max_order,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShoeboxRoom":
        return cls(
            dims=d["dims"],
            absorption=d["absorption"],
            source_pos=d["source_pos"],
            receiver_pos=d["receiver_pos"],
            speed_of_sound=d.get("speed_of_sound", SPEED_OF_SOUND),
            max_order=d.get("max_order", 60),
        )


@dataclass
class ImpulseResponse:
    """Room transfer function tagged with its direct-path arrival sample."""

    wave: Waveform
    direct_index: int

    def __post_init__(self):
        if not (0 <= self.direct_index < len(self.wave)):
            raise ValueError("direct_index out of bounds")
        e = self.wave.energy()
        if not np.isfinite(e) or e <= 0:
            raise ValueError("impulse response must have positive finite energy")

    @property
    def sample_rate(self) -> int:
        return self.wave.sample_rate


def sabine_rt60(room: ShoeboxRoom) -> float:
    """Sabine reverberation time 0.161 * V / sum(S_i * alpha_i)."""
    denom = float(np.sum(room.surface_areas * room.absorption))
    if denom <= 0:
        raise InfiniteReverb("all absorption coefficients are zero")
    return 0.161 * room.volume / denom


def _axis_images(length, src, recv, beta_lo, beta_hi, n_max):
    """Coordinates, per-axis reflection factors and bounce counts for one axis.

    Image x-coordinate for parity q in {0,1} and integer n:
        (1 - 2q) * src + 2 n L, with |n - q| bounces at the wall at 0 and
        |n| bounces at the wall at L.
    """
    n = np.arange(-n_max, n_max + 1)
    coords, factors, orders = [], [], []
    for q in (0, 1):
        c = (1 - 2 * q) * src + 2.0 * n * length - recv
        k_lo = np.abs(n - q)
        k_hi = np.abs(n)
        f = beta_lo**k_lo * beta_hi**k_hi
        coords.append(c)
        factors.append(f)
        orders.append(k_lo + k_hi)
    c = np.concatenate(coords)
    f = np.concatenate(factors)
    o = np.concatenate(orders)
    keep = (f > 0) | (o == 0)  # drop fully absorbed images, keep the direct parity
    return c[keep], f[keep], o[keep]


def simulate_rir(
    room: ShoeboxRoom,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    ir_length: float = 0.5,
) -> ImpulseResponse:
    """Image-source impulse response of a shoebox room.

    Each image contributes amplitude (prod of per-bounce sqrt(1-alpha)) / (4 pi d)
    at the nearest sample to d / c. Images beyond `max_order` total bounces or
    arriving after `ir_length` are dropped.
    """
    c = room.speed_of_sound
    d_direct = float(np.linalg.norm(room.source_pos - room.receiver_pos))
    if d_direct < 1e-9:
        raise DegenerateGeometry("source and receiver coincide")
    n_samples = int(round(ir_length * sample_rate))
    direct_index = int(np.rint(d_direct / c * sample_rate))
    if direct_index >= n_samples:
        raise InputTooShort(
            f"ir_length {ir_length}s cannot contain the direct path "
            f"({d_direct / c:.4f}s)"
        )

    max_dist = c * ir_length
    beta = np.sqrt(1.0 - room.absorption)
    per_axis = []
    for a in range(3):
        n_cap_dist = int(max_dist / (2.0 * room.dims[a])) + 2
        n_cap_order = (room.max_order + 1) // 2 + 1
        n_max = min(n_cap_dist, n_cap_order)
        per_axis.append(
            _axis_images(
                room.dims[a],
                room.source_pos[a],
                room.receiver_pos[a],
                beta[2 * a],
                beta[2 * a + 1],
                n_max,
            )
        )
    (cx, fx, ox), (cy, fy, oy), (cz, fz, oz) = per_axis

    h = np.zeros(n_samples)
    # chunk over the x axis so the 3-D broadcast stays in memory bounds
    block = max(1, _CHUNK_LIMIT // max(1, cy.size * cz.size))
    yz_d2 = cy[:, None] ** 2 + cz[None, :] ** 2
    yz_f = fy[:, None] * fz[None, :]
    yz_o = oy[:, None] + oz[None, :]
    for start in range(0, cx.size, block):
        sl = slice(start, start + block)
        d2 = cx[sl, None, None] ** 2 + yz_d2[None, :, :]
        order = ox[sl, None, None] + yz_o[None, :, :]
        amp = fx[sl, None, None] * yz_f[None, :, :]
        d = np.sqrt(d2)
        idx = np.rint(d / c * sample_rate).astype(np.int64)
        mask = (order <= room.max_order) & (idx < n_samples) & (d > 1e-12)
        if not np.any(mask):
            continue
        vals = amp[mask] / (4.0 * np.pi * d[mask])
        h += np.bincount(idx[mask], weights=vals, minlength=n_samples)

    return ImpulseResponse(Waveform(h, sample_rate), direct_index)


def sample_random_room(
    rng_seed: int,
    rt60_range: tuple[float, float] = (0.2, 1.0),
    max_attempts: int = 100,
) -> ShoeboxRoom:
    """Random shoebox whose Sabine RT60 lands in `rt60_range`.

    Dimensions uniform in [2.5, 12] m per axis, uniform absorption solved from
    the Sabine formula, source/receiver uniform with 0.5 m wall clearance.
    Deterministic per seed.
    """
    lo, hi = rt60_range
    if not (0.05 < lo < hi < 2.0):
        raise ValueError("rt60_range must lie within (0.05, 2.0) s")
    rng = np.random.default_rng(rng_seed)
    for _ in range(max_attempts):
        dims = rng.uniform(2.5, 12.0, size=3)
        target = rng.uniform(lo, hi)
        volume = float(np.prod(dims))
        lx, ly, lz = dims
        total_surface = 2.0 * (lx * ly + lx * lz + ly * lz)
        alpha = 0.161 * volume / (total_surface * target)
        if alpha > 1.0:
            continue
        src = rng.uniform(0.5, dims - 0.5)
        recv = rng.uniform(0.5, dims - 0.5)
        if np.linalg.norm(src - recv) < 0.1:
            continue
        # enough reflection orders to support the Schroeder fit down to -30 dB
        order = int(np.clip(np.ceil(7.5 / alpha), 40, 160))
        return ShoeboxRoom(
            dims=dims,
            absorption=np.full(6, alpha),
            source_pos=src,
            receiver_pos=recv,
            max_order=order,
        )
    raise InfeasibleTarget(
        f"no feasible room for rt60_range={rt60_range} in {max_attempts} attempts"
    )


def save_ir(path_wav, ir: ImpulseResponse, room: ShoeboxRoom | None = None) -> None:
    """Write an IR as float32 WAV plus a JSON sidecar with its metadata."""
    path_wav = Path(path_wav)
    write_wav(path_wav, ir.wave, fmt="float32")
    meta: dict = {"direct_index": ir.direct_index}
    if room is not None:
        meta.update(
            {
                "dims": room.dims.tolist(),
                "absorption": room.absorption.tolist(),
                "source_pos": room.source_pos.tolist(),
                "receiver_pos": room.receiver_pos.tolist(),
                "sabine_rt60": sabine_rt60(room),
            }
        )
    path_wav.with_suffix(".json").write_text(json.dumps(meta, indent=2))


def load_ir(path_wav, expected_rate: int = DEFAULT_SAMPLE_RATE) -> ImpulseResponse:
    path_wav = Path(path_wav)
    wave = read_wav(path_wav, expected_rate)
    meta = json.loads(path_wav.with_suffix(".json").read_text())
    return ImpulseResponse(wave, int(meta["direct_index"]))
