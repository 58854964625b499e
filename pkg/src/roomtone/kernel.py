"""Cross-modal tensor machinery on plain numpy arrays.

Single-head projection-free cross-modal attention (forward and analytic
backward), sinusoidal positional encoding, the strided 1D-conv waveform
encoder and its exact-adjoint transposed decoder, multi-head attention, and
a conformer-style block. Weights are caller-supplied (seeded random or file
loaded); there is no training loop — the point is verified mechanism, not
learning.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import DEFAULT_SAMPLE_RATE, Waveform
from .errors import BadDim, LengthNotAligned, ShapeMismatch

FEATURE_DIM = 512
ATTENTION_HEADS = 8
ENCODER_BLOCKS = 4

# Training-objective constants carried by the generator loss family; only
# the mel-spectrogram term is computed in this artifact (see evaluate.mel_l1),
# the adversarial and feature-matching terms need trained discriminators.
FEATURE_MATCH_WEIGHT = 1.0
MEL_LOSS_WEIGHT = 45.0
DISCRIMINATOR_SCALES = 3


@dataclass
class FeatureSequence:
    """Length x dim real matrix; one row per sequence position."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeMismatch("feature sequence must be 2-D (length x dim)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature sequence contains non-finite entries")

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def random_features(length: int, dim: int = FEATURE_DIM, seed: int = 0) -> FeatureSequence:
    rng = np.random.default_rng(seed)
    return FeatureSequence(rng.standard_normal((length, dim)))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax; stable enough for finite-difference checks."""
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def cross_modal_attention(A: FeatureSequence, V: FeatureSequence) -> FeatureSequence:
    """Projection-free single-head attention of queries A over keys/values V.

    scores = A V^T / sqrt(dim), row-softmaxed, then applied to V. Output has
    A's length and the shared feature dimension.
    """
    if A.dim != V.dim:
        raise ShapeMismatch(f"feature dims differ: {A.dim} vs {V.dim}")
    scores = (A.values @ V.values.T) / np.sqrt(A.dim)
    weights = softmax(scores, axis=1)
    return FeatureSequence(weights @ V.values)


def cross_modal_attention_grad(
    A: FeatureSequence, V: FeatureSequence, upstream_grad: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of `cross_modal_attention` w.r.t. A and V."""
    if A.dim != V.dim:
        raise ShapeMismatch(f"feature dims differ: {A.dim} vs {V.dim}")
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.shape != (A.length, A.dim):
        raise ShapeMismatch(
            f"upstream grad shape {g.shape} != output shape {(A.length, A.dim)}"
        )
    scale = 1.0 / np.sqrt(A.dim)
    scores = (A.values @ V.values.T) * scale
    p = softmax(scores, axis=1)
    # out = p @ V
    dp = g @ V.values.T
    dv = p.T @ g
    # softmax backward: ds = p * (dp - sum(dp * p, rows))
    ds = p * (dp - (dp * p).sum(axis=1, keepdims=True))
    da = ds @ V.values * scale
    dv += ds.T @ A.values * scale
    return da, dv


def positional_encoding(length: int, dim: int) -> FeatureSequence:
    """Sinusoidal table: PE[pos, 2i] = sin(pos / 10000^(2i/dim)), cos at odd."""
    if dim % 2 != 0:
        raise BadDim(f"positional encoding needs an even dim, got {dim}")
    pos = np.arange(length)[:, None]
    rates = 1.0 / (10000.0 ** (np.arange(0, dim, 2) / dim))[None, :]
    pe = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(pos * rates)
    pe[:, 1::2] = np.cos(pos * rates)
    return FeatureSequence(pe)


# ---------------------------------------------------------------------------
# Strided 1D convolution codec
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvStackSpec:
    """Geometry of the waveform codec.

    An embedding convolution (stride 1) is followed by strided layers that
    double the channel count while downsampling; the decoder mirrors them
    with transposed convolutions. The product of strides is the total
    down/upsampling factor.
    """

    kernel_sizes: tuple = (16, 8, 4, 4)
    strides: tuple = (8, 4, 2, 2)
    base_channels: int = 32
    embed_kernel: int = 15

    def __post_init__(self):
        if len(self.kernel_sizes) != len(self.strides):
            raise ValueError("kernel_sizes and strides must align")
        if any(k < s for k, s in zip(self.kernel_sizes, self.strides)):
            raise ValueError("kernels must cover their stride")
        if self.embed_kernel % 2 != 1:
            raise ValueError("embedding kernel must be odd for symmetric padding")

    @property
    def total_factor(self) -> int:
        return int(np.prod(self.strides))

    @property
    def channels(self) -> tuple:
        """Channel count after the embedding and after each strided layer."""
        return tuple(
            self.base_channels * 2**i for i in range(len(self.strides) + 1)
        )

    @property
    def feature_dim(self) -> int:
        return self.channels[-1]


@dataclass
class ConvStackWeights:
    """Kernels for the codec; shared between encoder and adjoint decoder."""

    embed: np.ndarray  # (C0, 1, embed_kernel)
    layers: list  # layer i: (C_{i+1}, C_i, kernel_i)
    embed_bias: np.ndarray | None = None
    layer_biases: list | None = None


def random_conv_weights(
    spec: ConvStackSpec, seed: int = 0, with_bias: bool = False
) -> ConvStackWeights:
    rng = np.random.default_rng(seed)
    ch = spec.channels
    embed = rng.standard_normal((ch[0], 1, spec.embed_kernel)) / np.sqrt(
        spec.embed_kernel
    )
    layers = [
        rng.standard_normal((ch[i + 1], ch[i], k)) / np.sqrt(ch[i] * k)
        for i, (k, _) in enumerate(zip(spec.kernel_sizes, spec.strides))
    ]
    embed_bias = rng.standard_normal(ch[0]) * 0.01 if with_bias else None
    layer_biases = (
        [rng.standard_normal(w.shape[0]) * 0.01 for w in layers] if with_bias else None
    )
    return ConvStackWeights(embed, layers, embed_bias, layer_biases)


def _conv_pad(kernel: int, stride: int) -> tuple[int, int]:
    total = kernel - stride
    left = total // 2
    return left, total - left


def strided_conv1d(
    x: np.ndarray,
    weight: np.ndarray,
    stride: int,
    bias: np.ndarray | None = None,
) -> np.ndarray:
    """1D convolution, (T, C_in) -> (T/stride, C_out), length-exact padding."""
    c_out, c_in, kernel = weight.shape
    if x.ndim != 2 or x.shape[1] != c_in:
        raise ShapeMismatch(f"input channels {x.shape} do not match weight {weight.shape}")
    if x.shape[0] % stride != 0:
        raise LengthNotAligned(
            f"length {x.shape[0]} is not a multiple of stride {stride}"
        )
    left, right = _conv_pad(kernel, stride)
    xp = np.pad(x, ((left, right), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, kernel, axis=0)[::stride]
    out = np.einsum("tck,ock->to", windows, weight, optimize=True)
    if bias is not None:
        out = out + bias
    return out


def transposed_conv1d(
    y: np.ndarray,
    weight: np.ndarray,
    stride: int,
    out_length: int,
) -> np.ndarray:
    """Exact adjoint of `strided_conv1d` with the same weight and stride."""
    c_out, c_in, kernel = weight.shape
    if y.ndim != 2 or y.shape[1] != c_out:
        raise ShapeMismatch(f"input channels {y.shape} do not match weight {weight.shape}")
    left, right = _conv_pad(kernel, stride)
    padded_len = out_length + left + right
    xg = np.zeros((padded_len, c_in))
    t_count = y.shape[0]
    for k in range(kernel):
        contrib = np.einsum("to,oc->tc", y, weight[:, :, k], optimize=True)
        xg[k : k + t_count * stride : stride] += contrib
    return xg[left : left + out_length]


def conv_encode(
    w: Waveform, weights: ConvStackWeights, spec: ConvStackSpec | None = None
) -> FeatureSequence:
    """Waveform -> feature sequence, length divided by the stride product."""
    spec = spec or ConvStackSpec()
    n = len(w)
    if n % spec.total_factor != 0:
        raise LengthNotAligned(
            f"input length {n} is not a multiple of {spec.total_factor}; pad first"
        )
    x = w.samples[:, None]
    x = strided_conv1d(x, weights.embed, stride=1, bias=weights.embed_bias)
    for i, (wt, s) in enumerate(zip(weights.layers, spec.strides)):
        bias = weights.layer_biases[i] if weights.layer_biases else None
        x = strided_conv1d(x, wt, stride=s, bias=bias)
    return FeatureSequence(x)


def conv_decode(
    M: FeatureSequence,
    weights: ConvStackWeights,
    spec: ConvStackSpec | None = None,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> Waveform:
    """Feature sequence -> waveform; exact adjoint of `conv_encode` under
    shared weights and zero bias, so output length = M.length x stride product."""
    spec = spec or ConvStackSpec()
    if M.dim != spec.feature_dim:
        raise ShapeMismatch(
            f"feature dim {M.dim} does not match codec top width {spec.feature_dim}"
        )
    x = M.values
    length = M.length
    for i in reversed(range(len(weights.layers))):
        length *= spec.strides[i]
        x = transposed_conv1d(x, weights.layers[i], spec.strides[i], out_length=length)
    x = transposed_conv1d(x, weights.embed, stride=1, out_length=length)
    return Waveform(x[:, 0], sample_rate)


# ---------------------------------------------------------------------------
# Multi-head attention and the conformer-style block
# ---------------------------------------------------------------------------


@dataclass
class AttentionWeights:
    """Projection matrices for multi-head attention."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    heads: int = ATTENTION_HEADS

    def __post_init__(self):
        dim = self.wq.shape[0]
        for name in ("wq", "wk", "wv", "wo"):
            m = getattr(self, name)
            if m.shape != (dim, dim):
                raise ShapeMismatch(f"{name} must be square ({dim} x {dim})")
        if dim % self.heads != 0:
            raise ShapeMismatch(f"dim {dim} not divisible by {self.heads} heads")


def random_attention_weights(
    dim: int, heads: int = ATTENTION_HEADS, seed: int = 0, scale: float | None = None
) -> AttentionWeights:
    rng = np.random.default_rng(seed)
    s = scale if scale is not None else 1.0 / np.sqrt(dim)
    return AttentionWeights(
        wq=rng.standard_normal((dim, dim)) * s,
        wk=rng.standard_normal((dim, dim)) * s,
        wv=rng.standard_normal((dim, dim)) * s,
        wo=rng.standard_normal((dim, dim)) * s,
        heads=heads,
    )


def multi_head_attention(
    query_seq: np.ndarray, kv_seq: np.ndarray, weights: AttentionWeights
) -> np.ndarray:
    """Projected multi-head attention; queries from one sequence, keys and
    values from another (or the same, for self-attention)."""
    dim = weights.wq.shape[0]
    if query_seq.shape[1] != dim or kv_seq.shape[1] != dim:
        raise ShapeMismatch("sequence dims do not match attention weights")
    h = weights.heads
    dh = dim // h
    q = (query_seq @ weights.wq).reshape(-1, h, dh)
    k = (kv_seq @ weights.wk).reshape(-1, h, dh)
    v = (kv_seq @ weights.wv).reshape(-1, h, dh)
    out = np.empty((query_seq.shape[0], h, dh))
    for i in range(h):
        scores = (q[:, i] @ k[:, i].T) / np.sqrt(dh)
        out[:, i] = softmax(scores, axis=1) @ v[:, i]
    return out.reshape(query_seq.shape[0], dim) @ weights.wo


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + 1e-8) * gamma + beta


def _silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


@dataclass
class FeedForwardWeights:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def _feed_forward(x: np.ndarray, ff: FeedForwardWeights) -> np.ndarray:
    return _silu(x @ ff.w1 + ff.b1) @ ff.w2 + ff.b2


@dataclass
class ConformerWeights:
    """Sub-block parameters; zero output projections make every residual
    branch vanish, which reduces the block to the identity."""

    ff1: FeedForwardWeights
    cross_attn: AttentionWeights
    self_attn: AttentionWeights
    conv_kernel: np.ndarray  # (dim, kernel) depthwise
    conv_bias: np.ndarray
    ff2: FeedForwardWeights
    ln_gamma: np.ndarray
    ln_beta: np.ndarray
    apply_final_norm: bool = True


def _random_ff(rng, dim: int, hidden: int) -> FeedForwardWeights:
    return FeedForwardWeights(
        w1=rng.standard_normal((dim, hidden)) / np.sqrt(dim),
        b1=np.zeros(hidden),
        w2=rng.standard_normal((hidden, dim)) / np.sqrt(hidden),
        b2=np.zeros(dim),
    )


def random_conformer_weights(
    dim: int,
    seed: int = 0,
    heads: int = ATTENTION_HEADS,
    hidden: int | None = None,
    conv_kernel_size: int = 15,
) -> ConformerWeights:
    rng = np.random.default_rng(seed)
    hidden = hidden or 4 * dim
    return ConformerWeights(
        ff1=_random_ff(rng, dim, hidden),
        cross_attn=random_attention_weights(dim, heads, seed=seed + 1),
        self_attn=random_attention_weights(dim, heads, seed=seed + 2),
        conv_kernel=rng.standard_normal((dim, conv_kernel_size))
        / np.sqrt(conv_kernel_size),
        conv_bias=np.zeros(dim),
        ff2=_random_ff(rng, dim, hidden),
        ln_gamma=np.ones(dim),
        ln_beta=np.zeros(dim),
        apply_final_norm=True,
    )


def identity_conformer_weights(
    dim: int, heads: int = ATTENTION_HEADS, conv_kernel_size: int = 15
) -> ConformerWeights:
    """Zero-weight residual branches and no final normalization: the block
    passes its input through unchanged."""
    zeros = lambda *shape: np.zeros(shape)
    ff = FeedForwardWeights(
        w1=zeros(dim, dim), b1=zeros(dim), w2=zeros(dim, dim), b2=zeros(dim)
    )
    attn = AttentionWeights(
        wq=np.eye(dim), wk=np.eye(dim), wv=np.eye(dim), wo=zeros(dim, dim), heads=heads
    )
    return ConformerWeights(
        ff1=ff,
        cross_attn=attn,
        self_attn=AttentionWeights(
            wq=np.eye(dim), wk=np.eye(dim), wv=np.eye(dim), wo=zeros(dim, dim),
            heads=heads,
        ),
        conv_kernel=zeros(dim, conv_kernel_size),
        conv_bias=zeros(dim),
        ff2=FeedForwardWeights(
            w1=zeros(dim, dim), b1=zeros(dim), w2=zeros(dim, dim), b2=zeros(dim)
        ),
        ln_gamma=np.ones(dim),
        ln_beta=np.zeros(dim),
        apply_final_norm=False,
    )


def _depthwise_conv(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    dim, k = kernel.shape
    half = k // 2
    xp = np.pad(x, ((half, k - 1 - half), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=0)
    return np.einsum("tck,ck->tc", windows, kernel, optimize=True) + bias


def conformer_block_forward(
    A: FeatureSequence, V: FeatureSequence, weights: ConformerWeights
) -> FeatureSequence:
    """Conformer-style block with a cross-modal attention stage.

    Half-step feed-forward, multi-head cross-modal attention over V,
    multi-head self-attention over the running sequence, depthwise
    convolution, a second half-step feed-forward, then layer normalization;
    every sub-block sits inside a residual connection.
    """
    if A.dim != V.dim:
        raise ShapeMismatch(f"feature dims differ: {A.dim} vs {V.dim}")
    x = A.values
    x = x + 0.5 * _feed_forward(x, weights.ff1)
    x = x + multi_head_attention(x, V.values, weights.cross_attn)
    x = x + multi_head_attention(x, x, weights.self_attn)
    x = x + _depthwise_conv(x, weights.conv_kernel, weights.conv_bias)
    x = x + 0.5 * _feed_forward(x, weights.ff2)
    if weights.apply_final_norm:
        x = layer_norm(x, weights.ln_gamma, weights.ln_beta)
    return FeatureSequence(x)


def conformer_stack(
    A: FeatureSequence,
    V: FeatureSequence,
    weights_list,
) -> FeatureSequence:
    """Apply several conformer blocks in sequence (positional encoding is the
    caller's responsibility, added to V once)."""
    x = A
    for w in weights_list:
        x = conformer_block_forward(x, V, w)
    return x


# ---------------------------------------------------------------------------
# Weight files: little-endian float32 payload behind a JSON header
# ---------------------------------------------------------------------------

_MAGIC = b"RTW1"


def save_weights(path, tensors: dict) -> None:
    """Write named float32 tensors: magic, u32 header length, JSON header
    (name/shape list in payload order), then raw little-endian float32 data."""
    path = Path(path)
    header = {
        "tensors": [
            {"name": name, "shape": list(np.asarray(t).shape)}
            for name, t in tensors.items()
        ]
    }
    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for t in tensors.values():
            f.write(np.asarray(t, dtype="<f4").tobytes())


def load_weights(path) -> dict:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a weight file (bad magic)")
    (header_len,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    offset = 8 + header_len
    out = {}
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        out[spec["name"]] = arr.reshape(shape).astype(np.float64)
        offset += 4 * count
    return out
