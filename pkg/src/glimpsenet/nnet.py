"""Glimpse-sequence LSTM classifiers with exact analytic gradients.

Two variants share one cell implementation:

* concat: a single LSTM chain consumes the color and depth feature vectors
  concatenated at every step; a logistic head reads the final hidden state.
* fusion: separate color and depth chains consume their own modality, and a
  main fusion chain consumes only the two bypass hidden states at each step
  (no raw features); the logistic head reads the fusion chain's final state.

The cell follows the standard formulation. With gate blocks stacked in the
order [input; forget; output; candidate]:

    [i; f; o; u] = [sigmoid; sigmoid; sigmoid; tanh](W @ [x_t; h_{t-1}] + b)
    c_t = i * u + f * c_{t-1}
    h_t = o * tanh(c_t)

Gradients are computed by unrolling the recurrence over all steps
(backpropagation through time); for the fusion variant they flow from the
main chain into both bypass chains through the fused hidden states. All
math is float64; training may feed float32 data through the same code path.

Checkpoints are a small binary format: magic "MGCK", version u16, variant
u8 (0 = concat, 1 = fusion), hidden size u32, per-modality feature dim u32,
sequence length u16 (little-endian), each tensor in declaration order as
float64 little-endian, and a trailing CRC32 of the tensor payload.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError
from .features import FeatureSequence
from .rng import SplitMix64

# probability clamp applied before logs in the loss
P_EPS = 1e-12

_CKPT_MAGIC = b"MGCK"
_CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sHBIIH")


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmParams:
    """One chain's affine map. W has shape (4H, input_dim + H) with gate
    row blocks ordered [input; forget; output; candidate]; b has length 4H."""

    W: np.ndarray
    b: np.ndarray
    hidden_size: int

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        H = self.hidden_size
        if self.W.ndim != 2 or self.W.shape[0] != 4 * H:
            raise ValueError("W must have shape (4H, input_dim + H)")
        if self.W.shape[1] <= H:
            raise ValueError("W must have at least one input column")
        if self.b.shape != (4 * H,):
            raise ValueError("b must have length 4H")

    @property
    def input_dim(self) -> int:
        return self.W.shape[1] - self.hidden_size


@dataclass
class CellState:
    """Output state h and cell state c of one chain at one step."""

    h: np.ndarray
    c: np.ndarray

    @staticmethod
    def zeros(hidden_size: int) -> "CellState":
        return CellState(h=np.zeros(hidden_size), c=np.zeros(hidden_size))


@dataclass
class Gates:
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    u: np.ndarray


@dataclass
class ConcatModelParams:
    chain: LstmParams           # input_dim = 2 * D
    head_w: np.ndarray          # (H,)
    head_b: np.ndarray          # (1,)

    def __post_init__(self):
        self.head_w = np.asarray(self.head_w, dtype=np.float64)
        self.head_b = np.asarray(self.head_b, dtype=np.float64).reshape(1)
        if self.head_w.shape != (self.chain.hidden_size,):
            raise ValueError("head_w must have length H")
        if self.chain.input_dim % 2 != 0:
            raise ValueError("concat chain input_dim must be even (2 * D)")

    @property
    def feature_dim(self) -> int:
        return self.chain.input_dim // 2

    @property
    def hidden_size(self) -> int:
        return self.chain.hidden_size

    def tensors(self) -> dict[str, np.ndarray]:
        """Name -> array, in declaration (serialization) order."""
        return {"chain.W": self.chain.W, "chain.b": self.chain.b,
                "head_w": self.head_w, "head_b": self.head_b}


@dataclass
class FusionModelParams:
    color_chain: LstmParams     # input_dim = D
    depth_chain: LstmParams     # input_dim = D
    fusion_chain: LstmParams    # input_dim = 2 * H, no raw features
    head_w: np.ndarray
    head_b: np.ndarray

    def __post_init__(self):
        self.head_w = np.asarray(self.head_w, dtype=np.float64)
        self.head_b = np.asarray(self.head_b, dtype=np.float64).reshape(1)
        H = self.color_chain.hidden_size
        if not (self.depth_chain.hidden_size == H
                and self.fusion_chain.hidden_size == H):
            raise ValueError("all three chains must share the hidden size")
        if self.color_chain.input_dim != self.depth_chain.input_dim:
            raise ValueError("color and depth chains must share input_dim")
        if self.fusion_chain.input_dim != 2 * H:
            raise ValueError("fusion chain input_dim must be 2 * H")
        if self.head_w.shape != (H,):
            raise ValueError("head_w must have length H")

    @property
    def feature_dim(self) -> int:
        return self.color_chain.input_dim

    @property
    def hidden_size(self) -> int:
        return self.color_chain.hidden_size

    def tensors(self) -> dict[str, np.ndarray]:
        return {"color.W": self.color_chain.W, "color.b": self.color_chain.b,
                "depth.W": self.depth_chain.W, "depth.b": self.depth_chain.b,
                "fusion.W": self.fusion_chain.W,
                "fusion.b": self.fusion_chain.b,
                "head_w": self.head_w, "head_b": self.head_b}


ModelParams = ConcatModelParams | FusionModelParams


@dataclass
class ChainCache:
    """Per-step activations of one chain; arrays are (..., T, width)."""

    xs: np.ndarray
    gi: np.ndarray
    gf: np.ndarray
    go: np.ndarray
    gu: np.ndarray
    c: np.ndarray
    h: np.ndarray


@dataclass
class ForwardTrace:
    """Everything the backward pass needs: per-step gate activations, cell
    and hidden states for every chain ('main' for concat; 'color', 'depth'
    and 'fusion' otherwise), the head pre-activation and the probability."""

    chains: dict[str, ChainCache] = field(default_factory=dict)
    logit: float = 0.0
    p: float = 0.5


# ---------------------------------------------------------------------------
# Initialization. Weights are uniform in [-k, k] with k = 1 / sqrt(fan_in);
# the forget-gate bias starts at 1.0 (keeps the memory path open early in
# training), every other bias at 0.

def init_lstm_params(input_dim: int, hidden_size: int,
                     rng: SplitMix64) -> LstmParams:
    k = 1.0 / np.sqrt(input_dim + hidden_size)
    W = rng.uniform(-k, k, (4 * hidden_size, input_dim + hidden_size))
    b = np.zeros(4 * hidden_size)
    b[hidden_size:2 * hidden_size] = 1.0
    return LstmParams(W=W, b=b, hidden_size=hidden_size)


def init_concat(feature_dim: int, hidden_size: int,
                rng: SplitMix64) -> ConcatModelParams:
    chain = init_lstm_params(2 * feature_dim, hidden_size, rng)
    k = 1.0 / np.sqrt(hidden_size)
    return ConcatModelParams(chain=chain,
                             head_w=rng.uniform(-k, k, hidden_size),
                             head_b=np.zeros(1))


def init_fusion(feature_dim: int, hidden_size: int,
                rng: SplitMix64) -> FusionModelParams:
    # draw order is fixed: color, depth, fusion, head
    color = init_lstm_params(feature_dim, hidden_size, rng)
    depth = init_lstm_params(feature_dim, hidden_size, rng)
    fusion = init_lstm_params(2 * hidden_size, hidden_size, rng)
    k = 1.0 / np.sqrt(hidden_size)
    return FusionModelParams(color_chain=color, depth_chain=depth,
                             fusion_chain=fusion,
                             head_w=rng.uniform(-k, k, hidden_size),
                             head_b=np.zeros(1))


# ---------------------------------------------------------------------------
# Forward

def _cell_math(W, b, H, x, h_prev, c_prev):
    """One cell step; works for single vectors and for (B, ·) batches."""
    z = np.concatenate([x, h_prev], axis=-1)
    pre = z @ W.T + b
    gi = sigmoid(pre[..., :H])
    gf = sigmoid(pre[..., H:2 * H])
    go = sigmoid(pre[..., 2 * H:3 * H])
    gu = np.tanh(pre[..., 3 * H:])
    c = gi * gu + gf * c_prev
    h = go * np.tanh(c)
    return gi, gf, go, gu, c, h


def lstm_cell(params: LstmParams, x_t: np.ndarray,
              prev: CellState) -> tuple[CellState, Gates]:
    """Single cell step on one input vector."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (params.input_dim,):
        raise ValueError(
            f"input has shape {x_t.shape}, expected ({params.input_dim},)")
    if prev.h.shape != (params.hidden_size,) or prev.c.shape != prev.h.shape:
        raise ValueError("previous state shape does not match hidden size")
    gi, gf, go, gu, c, h = _cell_math(params.W, params.b, params.hidden_size,
                                      x_t, prev.h, prev.c)
    return CellState(h=h, c=c), Gates(i=gi, f=gf, o=go, u=gu)


def _chain_forward(params: LstmParams, xs: np.ndarray) -> ChainCache:
    """Run one chain over a (B, T, input_dim) batch from the zero state."""
    B, T, _ = xs.shape
    H = params.hidden_size
    gi = np.empty((B, T, H))
    gf = np.empty((B, T, H))
    go = np.empty((B, T, H))
    gu = np.empty((B, T, H))
    c = np.empty((B, T, H))
    h = np.empty((B, T, H))
    h_prev = np.zeros((B, H))
    c_prev = np.zeros((B, H))
    for t in range(T):
        out = _cell_math(params.W, params.b, H, xs[:, t], h_prev, c_prev)
        gi[:, t], gf[:, t], go[:, t], gu[:, t], c[:, t], h[:, t] = out
        h_prev = h[:, t]
        c_prev = c[:, t]
    return ChainCache(xs=xs, gi=gi, gf=gf, go=go, gu=gu, c=c, h=h)


def _head(head_w, head_b, h_last):
    logit = h_last @ head_w + head_b[0]
    return logit, sigmoid(logit)


def forward_concat_batch(params: ConcatModelParams, color: np.ndarray,
                         depth: np.ndarray):
    """Batched forward; returns (p, logit, cache) with leading batch dim."""
    xs = np.concatenate([color, depth], axis=-1)
    if xs.shape[-1] != params.chain.input_dim:
        raise ValueError(
            f"feature dim {color.shape[-1]} does not match the model's "
            f"{params.feature_dim}")
    cache = _chain_forward(params.chain, xs)
    logit, p = _head(params.head_w, params.head_b, cache.h[:, -1])
    return p, logit, {"main": cache}


def forward_fusion_batch(params: FusionModelParams, color: np.ndarray,
                         depth: np.ndarray):
    if color.shape[-1] != params.feature_dim:
        raise ValueError(
            f"feature dim {color.shape[-1]} does not match the model's "
            f"{params.feature_dim}")
    cache_c = _chain_forward(params.color_chain, color)
    cache_d = _chain_forward(params.depth_chain, depth)
    fused = np.concatenate([cache_c.h, cache_d.h], axis=-1)
    cache_f = _chain_forward(params.fusion_chain, fused)
    logit, p = _head(params.head_w, params.head_b, cache_f.h[:, -1])
    return p, logit, {"color": cache_c, "depth": cache_d, "fusion": cache_f}


def _squeeze_cache(cache: ChainCache) -> ChainCache:
    return ChainCache(xs=cache.xs[0], gi=cache.gi[0], gf=cache.gf[0],
                      go=cache.go[0], gu=cache.gu[0], c=cache.c[0],
                      h=cache.h[0])


def _expand_cache(cache: ChainCache) -> ChainCache:
    return ChainCache(xs=cache.xs[None], gi=cache.gi[None],
                      gf=cache.gf[None], go=cache.go[None],
                      gu=cache.gu[None], c=cache.c[None], h=cache.h[None])


def forward_concat(params: ConcatModelParams,
                   seq: FeatureSequence) -> ForwardTrace:
    """Single-chain forward over one sequence, from the zero state."""
    p, logit, caches = forward_concat_batch(params, seq.color[None],
                                            seq.depth[None])
    return ForwardTrace(chains={k: _squeeze_cache(v)
                                for k, v in caches.items()},
                        logit=float(logit[0]), p=float(p[0]))


def forward_fusion(params: FusionModelParams,
                   seq: FeatureSequence) -> ForwardTrace:
    """Three-chain forward; the fusion chain sees only bypass hidden states."""
    p, logit, caches = forward_fusion_batch(params, seq.color[None],
                                            seq.depth[None])
    return ForwardTrace(chains={k: _squeeze_cache(v)
                                for k, v in caches.items()},
                        logit=float(logit[0]), p=float(p[0]))


def loss_nll(p, y):
    """Negative log-likelihood with the probability clamped away from 0/1."""
    p = np.clip(p, P_EPS, 1.0 - P_EPS)
    y = np.asarray(y, dtype=np.float64)
    out = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(out) if out.ndim == 0 else out


def predict(params: ModelParams, seq: FeatureSequence,
            variant: str | None = None) -> float:
    """Forward only; returns the probability. At threshold 0.5 a tie is
    classified negative."""
    if isinstance(params, ConcatModelParams):
        if variant not in (None, "concat"):
            raise ValueError("params are the concat variant")
        return forward_concat(params, seq).p
    if variant not in (None, "fusion"):
        raise ValueError("params are the fusion variant")
    return forward_fusion(params, seq).p


# ---------------------------------------------------------------------------
# Backward (BPTT)

def _head_grad(p, y):
    """d loss / d logit per sample; zero where the clamp is active."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    g = p - y
    return np.where((p > P_EPS) & (p < 1.0 - P_EPS), g, 0.0)


def _chain_backward(params: LstmParams, cache: ChainCache,
                    dh_ext: np.ndarray):
    """BPTT through one chain.

    `dh_ext` (B, T, H) is the gradient injected into h_t from outside the
    chain (logistic head, fusion consumers). Returns (dW, db, dxs) with dW
    and db summed over the batch and dxs per sample.
    """
    B, T, in_dim = cache.xs.shape
    H = params.hidden_size
    W = params.W
    dW = np.zeros_like(W)
    db = np.zeros(4 * H)
    dxs = np.empty((B, T, in_dim))
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        gi, gf = cache.gi[:, t], cache.gf[:, t]
        go, gu = cache.go[:, t], cache.gu[:, t]
        dh_t = dh + dh_ext[:, t]
        tanh_c = np.tanh(cache.c[:, t])
        do = dh_t * tanh_c
        dc = dc + dh_t * go * (1.0 - tanh_c * tanh_c)
        di = dc * gu
        du = dc * gi
        df = dc * cache.c[:, t - 1] if t > 0 else np.zeros((B, H))
        d_pre = np.concatenate([di * gi * (1.0 - gi),
                                df * gf * (1.0 - gf),
                                do * go * (1.0 - go),
                                du * (1.0 - gu * gu)], axis=-1)
        h_prev = cache.h[:, t - 1] if t > 0 else np.zeros((B, H))
        z = np.concatenate([cache.xs[:, t], h_prev], axis=-1)
        dW += d_pre.T @ z
        db += d_pre.sum(axis=0)
        dz = d_pre @ W
        dxs[:, t] = dz[:, :in_dim]
        dh = dz[:, in_dim:]
        dc = dc * gf
    return dW, db, dxs


def backward_concat_batch(params: ConcatModelParams, caches, p, y):
    """Gradients summed over the batch, as a flat name -> array dict
    matching params.tensors()."""
    cache = caches["main"]
    B, T, _ = cache.xs.shape
    H = params.hidden_size
    g = _head_grad(p, y)
    dh_ext = np.zeros((B, T, H))
    dh_ext[:, -1] = g[:, None] * params.head_w[None, :]
    dW, db, _ = _chain_backward(params.chain, cache, dh_ext)
    return {"chain.W": dW, "chain.b": db,
            "head_w": cache.h[:, -1].T @ g,
            "head_b": np.array([g.sum()])}


def backward_fusion_batch(params: FusionModelParams, caches, p, y):
    cache_f = caches["fusion"]
    B, T, _ = cache_f.xs.shape
    H = params.hidden_size
    g = _head_grad(p, y)
    dh_ext = np.zeros((B, T, H))
    dh_ext[:, -1] = g[:, None] * params.head_w[None, :]
    dWf, dbf, dxf = _chain_backward(params.fusion_chain, cache_f, dh_ext)
    # the fused input [h_color; h_depth] routes gradient into both bypasses
    dWc, dbc, _ = _chain_backward(params.color_chain, caches["color"],
                                  dxf[:, :, :H])
    dWd, dbd, _ = _chain_backward(params.depth_chain, caches["depth"],
                                  dxf[:, :, H:])
    return {"color.W": dWc, "color.b": dbc,
            "depth.W": dWd, "depth.b": dbd,
            "fusion.W": dWf, "fusion.b": dbf,
            "head_w": cache_f.h[:, -1].T @ g,
            "head_b": np.array([g.sum()])}


def backward(params: ModelParams, trace: ForwardTrace, y) -> dict:
    """Exact gradient of loss_nll(trace.p, y) w.r.t. every parameter,
    accumulated across all steps. Keys match params.tensors()."""
    caches = {k: _expand_cache(v) for k, v in trace.chains.items()}
    p = np.array([trace.p])
    ya = np.array([float(y)])
    if isinstance(params, ConcatModelParams):
        if set(caches) != {"main"}:
            raise ValueError("trace does not belong to a concat model")
        return backward_concat_batch(params, caches, p, ya)
    if set(caches) != {"color", "depth", "fusion"}:
        raise ValueError("trace does not belong to a fusion model")
    return backward_fusion_batch(params, caches, p, ya)


# ---------------------------------------------------------------------------
# Checkpoints

def _variant_tag(params: ModelParams) -> int:
    return 0 if isinstance(params, ConcatModelParams) else 1


def save_checkpoint(path, params: ModelParams, steps: int) -> None:
    """`steps` records the glimpse-sequence length the model was trained
    for; the parameters themselves are length-agnostic."""
    payload = b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes()
                       for t in params.tensors().values())
    header = _CKPT_HEADER.pack(_CKPT_MAGIC, _CKPT_VERSION,
                               _variant_tag(params), params.hidden_size,
                               params.feature_dim, steps)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    from .imaging import _atomic_write
    _atomic_write(path, header + payload + struct.pack("<I", crc))


def _read_tensor(data, offset, shape, path):
    count = int(np.prod(shape))
    need = count * 8
    if len(data) - offset < need + 4:  # payload plus trailing CRC
        raise FormatError("truncated payload", path=path, offset=len(data))
    arr = np.frombuffer(data, dtype="<f8", count=count,
                        offset=offset).reshape(shape)
    return arr.astype(np.float64), offset + need


def load_checkpoint(path) -> tuple[ModelParams, int]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _CKPT_HEADER.size + 4:
        raise FormatError("truncated header", path=path, offset=len(data))
    magic, version, variant, H, D, steps = _CKPT_HEADER.unpack_from(data, 0)
    if magic != _CKPT_MAGIC:
        raise FormatError("bad magic, expected MGCK", path=path, offset=0)
    if version != _CKPT_VERSION:
        raise FormatError(f"unsupported version {version}", path=path,
                          offset=4)
    if variant not in (0, 1):
        raise FormatError(f"unknown variant tag {variant}", path=path,
                          offset=6)
    crc_stored, = struct.unpack_from("<I", data, len(data) - 4)
    payload = data[_CKPT_HEADER.size:-4]
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise FormatError("payload CRC mismatch", path=path,
                          offset=len(data) - 4)
    offset = _CKPT_HEADER.size
    if variant == 0:
        W, offset = _read_tensor(data, offset, (4 * H, 2 * D + H), path)
        b, offset = _read_tensor(data, offset, (4 * H,), path)
        hw, offset = _read_tensor(data, offset, (H,), path)
        hb, offset = _read_tensor(data, offset, (1,), path)
        params: ModelParams = ConcatModelParams(
            chain=LstmParams(W=W, b=b, hidden_size=H), head_w=hw, head_b=hb)
    else:
        Wc, offset = _read_tensor(data, offset, (4 * H, D + H), path)
        bc, offset = _read_tensor(data, offset, (4 * H,), path)
        Wd, offset = _read_tensor(data, offset, (4 * H, D + H), path)
        bd, offset = _read_tensor(data, offset, (4 * H,), path)
        Wf, offset = _read_tensor(data, offset, (4 * H, 3 * H), path)
        bf, offset = _read_tensor(data, offset, (4 * H,), path)
        hw, offset = _read_tensor(data, offset, (H,), path)
        hb, offset = _read_tensor(data, offset, (1,), path)
        params = FusionModelParams(
            color_chain=LstmParams(W=Wc, b=bc, hidden_size=H),
            depth_chain=LstmParams(W=Wd, b=bd, hidden_size=H),
            fusion_chain=LstmParams(W=Wf, b=bf, hidden_size=H),
            head_w=hw, head_b=hb)
    if offset != len(data) - 4:
        raise FormatError("trailing bytes after payload", path=path,
                          offset=offset)
    return params, steps
