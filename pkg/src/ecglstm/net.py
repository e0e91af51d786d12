"""Two-layer bidirectional LSTM classifier with backpropagation through time.

Layer 1 runs a forward and a backward LSTM over the 12-lead input and fuses
them per time step by element-wise product. Layer 2 runs both directions over
the fused sequence; the forward stream's output at its last step and the
backward stream's output at its last processing step (time 0) are
concatenated and fed to a dense softmax head. Dropout is applied to the fused
layer-1 sequence and to the concatenated readout.

Batches are time-major internally and may be zero-padded at the end; every
element carries its own valid length. The backward streams reverse each
element within its valid length, so padding never reaches a readout and
receives zero gradient.

Gate order in every ``4 * hidden`` block is ``[input, forget, candidate, output]``.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, fields

import numpy as np

STREAMS = ("l1f", "l1b", "l2f", "l2b")
READOUTS = ("first", "last")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 12
    hidden_dim: int = 100
    class_count: int = 9
    dropout_prob: float = 0.5
    # step of the layer-2 backward stream read out: "first" = time 0 (its final
    # processing step), "last" = time T-1
    backward_readout: str = "first"

    def __post_init__(self):
        if self.hidden_dim < 1 or self.input_dim < 1:
            raise ValueError("hidden_dim and input_dim must be >= 1")
        if not 0 <= self.dropout_prob < 1:
            raise ValueError("dropout_prob must be in [0, 1)")
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if self.backward_readout not in READOUTS:
            raise ValueError(f"backward_readout must be one of {READOUTS}")


@dataclass(eq=False)
class ModelState:
    config: ModelConfig
    params: dict[str, np.ndarray]
    seed: int = 0
    version: int = 0  # bumped on every parameter update; guards stale caches

    def copy(self) -> "ModelState":
        return ModelState(self.config, {k: v.copy() for k, v in self.params.items()},
                          self.seed, self.version)

    @property
    def dtype(self):
        return self.params["dense.W"].dtype

    def param_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    h = config.hidden_dim
    shapes = {}
    for stream in STREAMS:
        in_dim = config.input_dim if stream.startswith("l1") else h
        shapes[f"{stream}.W"] = (4 * h, in_dim)
        shapes[f"{stream}.U"] = (4 * h, h)
        shapes[f"{stream}.b"] = (4 * h,)
    shapes["dense.W"] = (config.class_count, 2 * h)
    shapes["dense.b"] = (config.class_count,)
    return shapes


def he_init(config: ModelConfig = ModelConfig(), seed: int = 0, dtype=np.float32) -> ModelState:
    """Normal(0, 2 / fan_in) weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if len(shape) == 1:
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            std = np.sqrt(2.0 / shape[1])
            params[name] = (rng.standard_normal(shape) * std).astype(dtype)
    return ModelState(config, params, seed)


# ------------------------------------------------------------------------ LSTM

def _sigmoid(z):
    return 0.5 * np.tanh(0.5 * z) + 0.5


def lstm_cell_step(W, U, b, x_t, h_prev, c_prev):
    """One LSTM step; works on a single vector or a batch of row vectors."""
    x_t = np.asarray(x_t)
    if not (np.all(np.isfinite(x_t)) and np.all(np.isfinite(h_prev)) and np.all(np.isfinite(c_prev))):
        raise FloatingPointError("non-finite input to LSTM cell")
    hd = U.shape[1]
    z = x_t @ W.T + h_prev @ U.T + b
    i = _sigmoid(z[..., :hd])
    f = _sigmoid(z[..., hd:2 * hd])
    g = np.tanh(z[..., 2 * hd:3 * hd])
    o = _sigmoid(z[..., 3 * hd:])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def _gate_scale(hd: int, dtype) -> np.ndarray:
    # sigmoid(z) = 0.5 * tanh(z / 2) + 0.5, so sigmoid rows are pre-halved
    scale = np.full(4 * hd, 0.5, dtype=dtype)
    scale[2 * hd:3 * hd] = 1.0
    return scale


def _lstm_forward(W, U, b, X, keep_cache=True):
    """Run one stream over time-major ``X`` (T, B, D)."""
    T, B, _ = X.shape
    hd = U.shape[1]
    scale = _gate_scale(hd, X.dtype)
    Zx = X @ (W * scale[:, None]).T + b * scale
    Ut = (U * scale[:, None]).T.copy()
    offset = np.where(scale == 0.5, 0.5, 0.0).astype(X.dtype)
    dt = X.dtype
    H = np.empty((T, B, hd), dtype=dt)
    if keep_cache:
        A = np.empty((T, B, 4 * hd), dtype=dt)
        C = np.empty((T, B, hd), dtype=dt)
        TC = np.empty((T, B, hd), dtype=dt)
    else:
        A, C, TC = (np.empty((1, B, k * hd), dtype=dt) for k in (4, 1, 1))
    h = np.zeros((B, hd), dtype=dt)
    c = np.zeros((B, hd), dtype=dt)
    for t in range(T):
        k = t if keep_cache else 0
        a, c_new, tc = A[k], C[k], TC[k]
        z = Zx[t]
        z += h @ Ut
        np.tanh(z, out=a)
        a *= scale
        a += offset
        np.multiply(a[:, hd:2 * hd], c, out=c_new)
        c_new += a[:, :hd] * a[:, 2 * hd:3 * hd]
        np.tanh(c_new, out=tc)
        h = np.multiply(a[:, 3 * hd:], tc, out=H[t])
        c = c_new if keep_cache else c_new.copy()
    cache = (X, H, A, C, TC) if keep_cache else None
    return H, cache


def _lstm_backward(W, U, cache, dH, need_dx=True):
    X, H, A, C, TC = cache
    T, B, _ = X.shape
    hd = U.shape[1]
    dZ = np.empty((T, B, 4 * hd), dtype=X.dtype)
    dh_next = np.zeros((B, hd), dtype=X.dtype)
    dc_next = np.zeros((B, hd), dtype=X.dtype)
    zero = np.zeros((B, hd), dtype=X.dtype)
    deriv = A * (1.0 - A)
    deriv[:, :, 2 * hd:3 * hd] = 1.0 - A[:, :, 2 * hd:3 * hd] ** 2
    # gate derivatives: sigmoid' = a(1-a) on i, f, o; tanh' = 1 - g^2 on g
    for t in range(T - 1, -1, -1):
        a = A[t]
        i, f, g, o = a[:, :hd], a[:, hd:2 * hd], a[:, 2 * hd:3 * hd], a[:, 3 * hd:]
        tc = TC[t]
        dh = dH[t] + dh_next
        dz = dZ[t]
        np.multiply(dh, tc, out=dz[:, 3 * hd:])
        dc = dh * o
        dc *= 1.0 - tc * tc
        dc += dc_next
        c_prev = C[t - 1] if t > 0 else zero
        np.multiply(dc, g, out=dz[:, :hd])
        np.multiply(dc, c_prev, out=dz[:, hd:2 * hd])
        np.multiply(dc, i, out=dz[:, 2 * hd:3 * hd])
        dz *= deriv[t]
        dh_next = dz @ U
        dc_next = dc * f
    flat = dZ.reshape(T * B, 4 * hd)
    dW = flat.T @ X.reshape(T * B, -1)
    dU = dZ[1:].reshape(-1, 4 * hd).T @ H[:-1].reshape(-1, hd) if T > 1 else np.zeros_like(U)
    db = flat.sum(axis=0)
    dX = dZ @ W if need_dx else None
    return dX, dW, dU, db


def _reverse_index(lengths: np.ndarray, T: int) -> np.ndarray:
    """(T, B) time index that reverses each column within its valid length."""
    t = np.arange(T)[:, None]
    L = lengths[None, :]
    return np.where(t < L, L - 1 - t, t)


def _take_time(X, idx):
    return X[idx, np.arange(X.shape[1])[None, :]]


# --------------------------------------------------------------------- forward

@dataclass
class ForwardCache:
    version: int
    lengths: np.ndarray
    rev: np.ndarray
    caches: dict
    H1f: np.ndarray
    H1b: np.ndarray
    mask1: np.ndarray | None
    q: np.ndarray
    mask2: np.ndarray | None
    qd: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    extras: dict = field(default_factory=dict)


def _dropout_mask(rng, shape, p, dtype):
    keep = 1.0 - p
    return (rng.random(shape) < keep).astype(dtype) / dtype.type(keep)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward_batch(state: ModelState, X: np.ndarray, lengths=None, train_mode: bool = False,
                  rng: np.random.Generator | None = None, keep_cache: bool = True):
    """Forward pass on a padded batch ``X`` of shape (B, T, input_dim).

    Returns ``(probabilities (B, classes), cache)``; the cache is ``None``
    when *keep_cache* is false.
    """
    cfg = state.config
    p = state.params
    dt = state.dtype
    X = np.asarray(X, dtype=dt)
    if X.ndim != 3 or X.shape[2] != cfg.input_dim:
        raise ValueError(f"expected (batch, time, {cfg.input_dim}) input, got {X.shape}")
    B, T, _ = X.shape
    if T == 0:
        raise ValueError("empty sequence")
    lengths = np.full(B, T, dtype=np.int64) if lengths is None else np.asarray(lengths, dtype=np.int64)
    if lengths.shape != (B,) or lengths.min() < 1 or lengths.max() > T:
        raise ValueError("lengths must lie in [1, T] for every batch element")
    if not np.all(np.isfinite(X)):
        raise FloatingPointError("non-finite model input")
    drop = train_mode and cfg.dropout_prob > 0
    if drop and rng is None:
        rng = np.random.default_rng(state.seed)

    Xt = np.ascontiguousarray(X.transpose(1, 0, 2))
    rev = _reverse_index(lengths, T)
    caches = {}

    def run(stream, inp):
        H, cache = _lstm_forward(p[f"{stream}.W"], p[f"{stream}.U"], p[f"{stream}.b"], inp, keep_cache)
        caches[stream] = cache
        return H

    H1f = run("l1f", Xt)
    H1b = _take_time(run("l1b", _take_time(Xt, rev)), rev)
    F = H1f * H1b
    mask1 = _dropout_mask(rng, F.shape, cfg.dropout_prob, dt) if drop else None
    Fd = F * mask1 if drop else F
    H2f = run("l2f", Fd)
    H2b_rev = run("l2b", _take_time(Fd, rev))
    bidx = np.arange(B)
    last = lengths - 1
    back_step = last if cfg.backward_readout == "first" else np.zeros(B, dtype=np.int64)
    q = np.concatenate([H2f[last, bidx], H2b_rev[back_step, bidx]], axis=1)
    mask2 = _dropout_mask(rng, q.shape, cfg.dropout_prob, dt) if drop else None
    qd = q * mask2 if drop else q
    logits = qd @ p["dense.W"].T + p["dense.b"]
    probs = softmax(logits)
    if not keep_cache:
        return probs, None
    cache = ForwardCache(state.version, lengths, rev, caches, H1f, H1b, mask1, q, mask2, qd,
                         logits, probs, {"back_step": back_step})
    return probs, cache


def forward(state: ModelState, segment: np.ndarray, train_mode: bool = False,
            rng: np.random.Generator | None = None):
    """Forward pass on one ``(input_dim, T)`` segment; returns (probabilities, cache)."""
    segment = np.asarray(segment)
    if segment.ndim != 2 or segment.shape[1] == 0:
        raise ValueError("segment must be a non-empty (leads, T) matrix")
    probs, cache = forward_batch(state, segment.T[None], None, train_mode, rng)
    return probs[0], cache


def cross_entropy(probabilities: np.ndarray, true_label: int) -> float:
    return float(-np.log(probabilities[int(true_label)]))


def cross_entropy_logits(logits: np.ndarray, labels) -> np.ndarray:
    """Per-example ``-log softmax(logits)[label]`` via log-sum-exp."""
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    return -log_softmax(logits.astype(np.float64))[np.arange(labels.size), labels]


def batch_loss(cache: ForwardCache, labels) -> float:
    return float(np.mean(cross_entropy_logits(cache.logits, labels)))


# -------------------------------------------------------------------- backward

def backward(state: ModelState, cache: ForwardCache, labels) -> dict[str, np.ndarray]:
    """Gradients of the batch-mean cross-entropy with respect to every parameter."""
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if cache is None or not isinstance(cache, ForwardCache):
        raise ValueError("backward needs the cache of a forward call with keep_cache=True")
    if cache.version != state.version:
        raise ValueError("stale cache: parameters changed since the forward pass")
    B = cache.probs.shape[0]
    if labels.shape != (B,):
        raise ValueError(f"expected {B} labels, got {labels.shape}")
    p = state.params
    hd = state.config.hidden_dim
    dt = state.dtype
    grads = {}

    ds = cache.probs.astype(dt).copy()
    ds[np.arange(B), labels] -= 1.0
    ds /= B
    grads["dense.W"] = ds.T @ cache.qd
    grads["dense.b"] = ds.sum(axis=0)
    dq = ds @ p["dense.W"]
    if cache.mask2 is not None:
        dq *= cache.mask2

    T = cache.H1f.shape[0]
    bidx = np.arange(B)
    last = cache.lengths - 1
    dH2f = np.zeros((T, B, hd), dtype=dt)
    dH2f[last, bidx] = dq[:, :hd]
    dH2b = np.zeros((T, B, hd), dtype=dt)
    dH2b[cache.extras["back_step"], bidx] = dq[:, hd:]

    def back(stream, dH, need_dx):
        dX, dW, dU, db = _lstm_backward(p[f"{stream}.W"], p[f"{stream}.U"], cache.caches[stream],
                                        dH, need_dx)
        grads[f"{stream}.W"], grads[f"{stream}.U"], grads[f"{stream}.b"] = dW, dU, db
        return dX

    dFd = back("l2f", dH2f, True) + _take_time(back("l2b", dH2b, True), cache.rev)
    dF = dFd * cache.mask1 if cache.mask1 is not None else dFd
    back("l1f", dF * cache.H1b, False)
    back("l1b", _take_time(dF * cache.H1f, cache.rev), False)
    return {k: grads[k] for k in p}


def predict_proba(state: ModelState, segments, batch_size: int = 64) -> np.ndarray:
    """Eval-mode probabilities for a list of ``(leads, T)`` arrays."""
    out = np.empty((len(segments), state.config.class_count))
    order = np.argsort([s.shape[-1] for s in segments], kind="stable")
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        X, lengths = pad_batch([segments[i] for i in idx], state.config.input_dim)
        probs, _ = forward_batch(state, X, lengths, False, keep_cache=False)
        out[idx] = probs
    return out


def pad_batch(segments, input_dim: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Stack ``(leads, T_i)`` arrays into a zero-padded (B, T_max, leads) batch."""
    lengths = np.array([s.shape[-1] for s in segments], dtype=np.int64)
    X = np.zeros((len(segments), int(lengths.max()), input_dim))
    for k, s in enumerate(segments):
        X[k, :s.shape[-1]] = np.asarray(s).T
    return X, lengths


# ------------------------------------------------------------------ checkpoint

BLTM_MAGIC = b"BLTM"
BLTM_VERSION = 1


def save_checkpoint(state: ModelState, path) -> None:
    """Write the ``BLTM`` checkpoint.

    Layout (little-endian): magic, u16 version, u32 header length, UTF-8
    ``key=value`` header lines, u32 tensor count, a directory of
    ``(u16 name length, name, u8 rank, u32 dims..., u64 offset)`` entries,
    then float32 payloads at those offsets relative to the payload start.
    """
    cfg = state.config
    header = "".join(f"{f.name}={getattr(cfg, f.name)}\n" for f in fields(cfg))
    header += f"seed={state.seed}\n"
    hbytes = header.encode("utf-8")
    buf = io.BytesIO()
    buf.write(BLTM_MAGIC)
    buf.write(struct.pack("<HI", BLTM_VERSION, len(hbytes)))
    buf.write(hbytes)
    buf.write(struct.pack("<I", len(state.params)))
    payloads = []
    offset = 0
    for name, arr in state.params.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        nb = name.encode("utf-8")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(struct.pack("<Q", offset))
        payloads.append(data)
        offset += len(data)
    for data in payloads:
        buf.write(data)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> ModelState:
    raw = open(path, "rb").read()
    if raw[:4] != BLTM_MAGIC:
        raise ValueError(f"{path}: not a BLTM checkpoint")
    version, hlen = struct.unpack_from("<HI", raw, 4)
    if version != BLTM_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 10
    header = raw[pos:pos + hlen].decode("utf-8")
    pos += hlen
    kv = dict(line.split("=", 1) for line in header.splitlines() if line)
    types = {f.name: f.type for f in fields(ModelConfig)}
    conv = {"int": int, "float": float, "str": str}
    cfg = ModelConfig(**{k: conv[types[k]](v) for k, v in kv.items() if k in types})
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    directory = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        dims = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        (off,) = struct.unpack_from("<Q", raw, pos)
        pos += 8
        directory.append((name, dims, off))
    params = {}
    for name, dims, off in directory:
        n = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=pos + off).reshape(dims)
        params[name] = arr.astype(np.float32)
    expected = param_shapes(cfg)
    if set(params) != set(expected) or any(params[k].shape != expected[k] for k in expected):
        raise ValueError(f"{path}: tensor directory does not match the model config")
    return ModelState(cfg, {k: params[k] for k in expected}, int(kv.get("seed", 0)))
