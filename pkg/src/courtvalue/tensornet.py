"""
Stacked LSTM + player embedding classifier with hand-written BPTT.

Everything runs on batches: a batch is ``B`` windows of ``T`` frames plus
the ten lineup identifiers of each window. Gate pre-activations are stored
stacked in the order (input, forget, candidate, output), so the LSTM
weights of layer ``l`` are

    lstm{l}.U : (D_in, 4H)   input transform
    lstm{l}.W : (H, 4H)      recurrent transform
    lstm{l}.b : (4H,)

The head is ``dense = relu([h_T, a_1 .. a_10] @ dense.W + dense.b)``
followed by ``logits = dense @ out.W + out.b`` and a softmax.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from courtvalue.tracking import MOMENT_DIM, N_CLASSES, N_PLAYERS

CHECKPOINT_VERSION = 1
GATES = ("i", "f", "c", "o")


@dataclass(frozen=True)
class ArchConfig:
    roster_size: int
    n_features: int = MOMENT_DIM
    hidden: int = 32
    layers: int = 3
    embed_dim: int = 8
    dense: int = 128
    n_classes: int = N_CLASSES
    window: int = 128
    dense_dropout: float = 0.3
    input_dropout: float = 0.2
    recurrent_dropout: float = 0.2
    forget_bias: float = 1.0

    @property
    def head_inputs(self) -> int:
        return self.hidden + N_PLAYERS * self.embed_dim

    def layer_inputs(self, layer: int) -> int:
        return self.n_features if layer == 0 else self.hidden


@dataclass
class ModelParams:
    """Trainable tensors keyed by name plus fixed input standardization."""

    config: ArchConfig
    tensors: dict[str, np.ndarray]
    input_mean: np.ndarray = field(default_factory=lambda: np.zeros(MOMENT_DIM))
    input_std: np.ndarray = field(default_factory=lambda: np.ones(MOMENT_DIM))

    def __post_init__(self):
        expected = param_shapes(self.config)
        if set(expected) != set(self.tensors):
            raise ValueError(f"parameter names differ: {sorted(set(expected) ^ set(self.tensors))}")
        for name, shape in expected.items():
            arr = np.asarray(self.tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: non-finite values")
            self.tensors[name] = arr
        self.input_mean = np.asarray(self.input_mean, dtype=np.float64).reshape(self.config.n_features)
        self.input_std = np.asarray(self.input_std, dtype=np.float64).reshape(self.config.n_features)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.config,
            {k: v.copy() for k, v in self.tensors.items()},
            self.input_mean.copy(),
            self.input_std.copy(),
        )

    def gate(self, layer: int, kind: str, gate: str) -> np.ndarray:
        """Slice of ``U``, ``W`` or ``b`` belonging to one gate of one layer."""
        H = self.config.hidden
        k = GATES.index(gate)
        return self.tensors[f"lstm{layer}.{kind}"][..., k * H : (k + 1) * H]


def param_shapes(cfg: ArchConfig) -> dict[str, tuple[int, ...]]:
    H = cfg.hidden
    shapes = {"embedding": (cfg.roster_size, cfg.embed_dim)}
    for l in range(cfg.layers):
        shapes[f"lstm{l}.U"] = (cfg.layer_inputs(l), 4 * H)
        shapes[f"lstm{l}.W"] = (H, 4 * H)
        shapes[f"lstm{l}.b"] = (4 * H,)
    shapes["dense.W"] = (cfg.head_inputs, cfg.dense)
    shapes["dense.b"] = (cfg.dense,)
    shapes["out.W"] = (cfg.dense, cfg.n_classes)
    shapes["out.b"] = (cfg.n_classes,)
    return shapes


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(cfg: ArchConfig, rng: np.random.Generator) -> ModelParams:
    """Uniform(-0.05, 0.05) embeddings, fan-based uniform matrices, zero
    biases except a forget-gate bias of ``cfg.forget_bias``."""
    H = cfg.hidden
    t = {"embedding": rng.uniform(-0.05, 0.05, size=(cfg.roster_size, cfg.embed_dim))}
    for l in range(cfg.layers):
        d = cfg.layer_inputs(l)
        t[f"lstm{l}.U"] = _glorot(rng, d, 4 * H, (d, 4 * H))
        t[f"lstm{l}.W"] = _glorot(rng, H, 4 * H, (H, 4 * H))
        b = np.zeros(4 * H)
        b[H : 2 * H] = cfg.forget_bias
        t[f"lstm{l}.b"] = b
    t["dense.W"] = _glorot(rng, cfg.head_inputs, cfg.dense, (cfg.head_inputs, cfg.dense))
    t["dense.b"] = np.zeros(cfg.dense)
    t["out.W"] = _glorot(rng, cfg.dense, cfg.n_classes, (cfg.dense, cfg.n_classes))
    t["out.b"] = np.zeros(cfg.n_classes)
    return ModelParams(cfg, t)


def zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.tensors.items()}


# --------------------------------------------------------------------------
# dropout masks


@dataclass
class DropoutMasks:
    """Per-sequence masks, reused at every timestep.

    ``inputs[l]`` is (B, D_l) and ``recurrent[l]`` is (B, H); ``dense`` is
    (B, dense). Entries are 0 or 1/keep.
    """

    inputs: list[np.ndarray]
    recurrent: list[np.ndarray]
    dense: np.ndarray


def _bernoulli_mask(rng, rate, shape):
    if rate <= 0.0:
        return np.ones(shape)
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def sample_dropout_masks(
    cfg: ArchConfig, batch: int, rng: np.random.Generator | None = None, training: bool = True
) -> DropoutMasks:
    """Draw one input and one recurrent mask per layer per sequence.

    ``training=False`` (or ``rng=None``) gives all-ones masks.
    """
    if not training or rng is None:
        return DropoutMasks(
            [np.ones((batch, cfg.layer_inputs(l))) for l in range(cfg.layers)],
            [np.ones((batch, cfg.hidden)) for _ in range(cfg.layers)],
            np.ones((batch, cfg.dense)),
        )
    inputs, recurrent = [], []
    for l in range(cfg.layers):
        inputs.append(_bernoulli_mask(rng, cfg.input_dropout, (batch, cfg.layer_inputs(l))))
        recurrent.append(_bernoulli_mask(rng, cfg.recurrent_dropout, (batch, cfg.hidden)))
    return DropoutMasks(inputs, recurrent, _bernoulli_mask(rng, cfg.dense_dropout, (batch, cfg.dense)))


# --------------------------------------------------------------------------
# forward


def sigmoid(x):
    # exp of a non-positive argument only
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _cell(pre, c_prev, H):
    i = sigmoid(pre[:, :H])
    f = sigmoid(pre[:, H : 2 * H])
    g = np.tanh(pre[:, 2 * H : 3 * H])
    o = sigmoid(pre[:, 3 * H :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    return i, f, g, o, c, tc, o * tc


def lstm_cell_step(x_t, h_prev, c_prev, U, W, b, x_mask=None, h_mask=None):
    """One LSTM step for a batch; returns ``(h_t, c_t)``.

    Masks, when given, multiply ``x_t`` and ``h_prev`` before the matrix
    products.
    """
    x_t = np.atleast_2d(x_t)
    h_prev = np.atleast_2d(h_prev)
    c_prev = np.atleast_2d(c_prev)
    H = W.shape[0]
    if x_t.shape[1] != U.shape[0] or h_prev.shape[1] != H or c_prev.shape[1] != H:
        raise ValueError(
            f"shape mismatch: x {x_t.shape}, h {h_prev.shape}, c {c_prev.shape} for U {U.shape}, W {W.shape}"
        )
    if x_mask is not None:
        x_t = x_t * x_mask
    if h_mask is not None:
        h_prev = h_prev * h_mask
    pre = x_t @ U + h_prev @ W + b
    *_, c, _, h = _cell(pre, c_prev, H)
    return h, c


def embed_lineup(lineup_ids: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Concatenate the embedding rows of the ten slots: (B, 10) -> (B, 10 d).

    Row lookup is the same as multiplying the table by each one-hot slot.
    """
    ids = np.asarray(lineup_ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.shape[1] != N_PLAYERS:
        raise ValueError(f"expected 10 identifiers per lineup, got {ids.shape[1]}")
    if ids.min() < 0 or ids.max() >= A.shape[0]:
        raise IndexError(f"player identifier outside roster of size {A.shape[0]}")
    return A[ids].reshape(ids.shape[0], -1)


@dataclass
class ForwardCache:
    params_id: int
    masks: DropoutMasks
    layers: list[dict]
    head_in: np.ndarray
    dense_pre: np.ndarray
    dense_out: np.ndarray
    lineup_ids: np.ndarray
    probs: np.ndarray


def standardize(frames: np.ndarray, params: ModelParams) -> np.ndarray:
    return (frames - params.input_mean) / params.input_std


def forward(
    frames: np.ndarray,
    lineup_ids: np.ndarray,
    params: ModelParams,
    masks: DropoutMasks | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Class probabilities for a batch of windows.

    ``frames`` is (B, T, 24) raw polar frames; standardization happens here.
    ``masks=None`` runs in inference mode.
    """
    cfg = params.config
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 2:
        frames = frames[None]
    B, T, D = frames.shape
    if D != cfg.n_features:
        raise ValueError(f"expected {cfg.n_features} features per frame, got {D}")
    if T != cfg.window:
        raise ValueError(f"expected windows of length {cfg.window}, got {T}")
    lineup_ids = np.asarray(lineup_ids, dtype=np.int64).reshape(B, N_PLAYERS)
    if masks is None:
        masks = sample_dropout_masks(cfg, B, training=False)

    H = cfg.hidden
    x = standardize(frames, params)
    layers = []
    for l in range(cfg.layers):
        U, W, b = params[f"lstm{l}.U"], params[f"lstm{l}.W"], params[f"lstm{l}.b"]
        xm = x * masks.inputs[l][:, None, :]
        xu = (xm.reshape(B * T, -1) @ U).reshape(B, T, 4 * H)
        mh = masks.recurrent[l]
        h = np.zeros((B, T + 1, H))
        c = np.zeros((B, T + 1, H))
        hm = np.zeros((B, T, H))
        gates = np.empty((4, B, T, H))
        tanh_c = np.empty((B, T, H))
        for t in range(T):
            hm[:, t] = h[:, t] * mh
            pre = xu[:, t] + hm[:, t] @ W + b
            i, f, g, o, c[:, t + 1], tanh_c[:, t], h[:, t + 1] = _cell(pre, c[:, t], H)
            gates[0, :, t], gates[1, :, t], gates[2, :, t], gates[3, :, t] = i, f, g, o
        layers.append(dict(xm=xm, hm=hm, gates=gates, c=c, tanh_c=tanh_c, h=h))
        x = h[:, 1:]

    head_in = np.concatenate([layers[-1]["h"][:, T], embed_lineup(lineup_ids, params["embedding"])], axis=1)
    dense_pre = head_in @ params["dense.W"] + params["dense.b"]
    dense_out = np.maximum(dense_pre, 0.0) * masks.dense
    logits = dense_out @ params["out.W"] + params["out.b"]
    probs = softmax(logits)
    cache = ForwardCache(id(params), masks, layers, head_in, dense_pre, dense_out, lineup_ids, probs)
    return probs, cache


def predict(frames: np.ndarray, lineup_ids: np.ndarray, params: ModelParams, batch_size: int = 256) -> np.ndarray:
    """Inference-mode probabilities, evaluated in chunks."""
    frames = np.asarray(frames, dtype=np.float64)
    lineup_ids = np.asarray(lineup_ids, dtype=np.int64).reshape(-1, N_PLAYERS)
    out = np.empty((frames.shape[0], params.config.n_classes))
    for s in range(0, frames.shape[0], batch_size):
        out[s : s + batch_size], _ = forward(frames[s : s + batch_size], lineup_ids[s : s + batch_size], params)
    return out


def nll(probs: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels, dtype=np.int64)
    p = probs[np.arange(labels.size), labels]
    return float(-np.mean(np.log(np.maximum(p, 1e-300))))


# --------------------------------------------------------------------------
# backward


def backward(cache: ForwardCache, labels: np.ndarray, params: ModelParams) -> dict[str, np.ndarray]:
    """Gradient of the mean NLL over the batch w.r.t. every tensor."""
    if cache.params_id != id(params):
        raise ValueError("forward cache was produced with a different parameter object")
    cfg = params.config
    labels = np.asarray(labels, dtype=np.int64)
    B = cache.probs.shape[0]
    if labels.shape != (B,):
        raise ValueError(f"expected {B} labels, got shape {labels.shape}")
    H = cfg.hidden
    grads = {}

    d_logits = cache.probs.copy()
    d_logits[np.arange(B), labels] -= 1.0
    d_logits /= B
    grads["out.W"] = cache.dense_out.T @ d_logits
    grads["out.b"] = d_logits.sum(axis=0)
    d_dense = (d_logits @ params["out.W"].T) * cache.masks.dense
    d_dense *= cache.dense_pre > 0
    grads["dense.W"] = cache.head_in.T @ d_dense
    grads["dense.b"] = d_dense.sum(axis=0)
    d_head = d_dense @ params["dense.W"].T

    d_emb = d_head[:, H:].reshape(B * N_PLAYERS, cfg.embed_dim)
    g_emb = np.zeros_like(params["embedding"])
    np.add.at(g_emb, cache.lineup_ids.ravel(), d_emb)
    grads["embedding"] = g_emb

    T = cfg.window
    d_h_ext = np.zeros((B, T, H))
    d_h_ext[:, T - 1] = d_head[:, :H]
    for l in reversed(range(cfg.layers)):
        layer = cache.layers[l]
        U, W = params[f"lstm{l}.U"], params[f"lstm{l}.W"]
        i, f, g, o = layer["gates"]
        c, tanh_c = layer["c"], layer["tanh_c"]
        mh = cache.masks.recurrent[l]
        d_pre = np.empty((B, T, 4 * H))
        d_h_rec = np.zeros((B, H))
        d_c = np.zeros((B, H))
        for t in reversed(range(T)):
            dh = d_h_ext[:, t] + d_h_rec
            ot, tct = o[:, t], tanh_c[:, t]
            d_c = d_c + dh * ot * (1.0 - tct * tct)
            it, ft, gt = i[:, t], f[:, t], g[:, t]
            dp = d_pre[:, t]
            dp[:, :H] = d_c * gt * it * (1.0 - it)
            dp[:, H : 2 * H] = d_c * c[:, t] * ft * (1.0 - ft)
            dp[:, 2 * H : 3 * H] = d_c * it * (1.0 - gt * gt)
            dp[:, 3 * H :] = dh * tct * ot * (1.0 - ot)
            d_c = d_c * ft
            d_h_rec = (dp @ W.T) * mh
        flat = d_pre.reshape(B * T, 4 * H)
        grads[f"lstm{l}.U"] = layer["xm"].reshape(B * T, -1).T @ flat
        grads[f"lstm{l}.W"] = layer["hm"].reshape(B * T, H).T @ flat
        grads[f"lstm{l}.b"] = flat.sum(axis=0)
        if l > 0:
            d_h_ext = (flat @ U.T).reshape(B, T, -1) * cache.masks.inputs[l][:, None, :]
    return grads


def loss_and_grads(frames, lineup_ids, labels, params, masks=None):
    probs, cache = forward(frames, lineup_ids, params, masks)
    return nll(probs, labels), backward(cache, labels, params), probs


# --------------------------------------------------------------------------
# checkpoint


def save_checkpoint(path, params: ModelParams, metadata: dict | None = None) -> None:
    """Little-endian float64 tensor dump with an embedded JSON header."""
    header = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(params.config),
        "shapes": {k: list(v.shape) for k, v in params.tensors.items()},
        "metadata": metadata or {},
    }
    arrays = {f"t/{k}": v.astype("<f8") for k, v in params.tensors.items()}
    arrays["input_mean"] = params.input_mean.astype("<f8")
    arrays["input_std"] = params.input_std.astype("<f8")
    arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(bytes(data["header"]).decode("utf-8"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')!r}")
        cfg = ArchConfig(**header["config"])
        tensors = {}
        for name, shape in header["shapes"].items():
            arr = data[f"t/{name}"].astype(np.float64)
            if list(arr.shape) != shape:
                raise ValueError(f"{name}: stored shape {arr.shape} disagrees with header {shape}")
            tensors[name] = arr
        params = ModelParams(cfg, tensors, data["input_mean"].astype(np.float64), data["input_std"].astype(np.float64))
    return params, header["metadata"]
