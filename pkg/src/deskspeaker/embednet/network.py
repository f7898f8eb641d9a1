"""TDNN embedding network: parameters, forward pass, analytic backward pass.

Everything is float64 numpy. Normalization layers read their running buffers
during the differentiated computation (the buffers are updated between steps,
never inside them), so the analytic gradients are exact for the loss actually
evaluated and can be checked against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import (FormatError, MissingAttentionError,
                      TooShortUtteranceError)
from ..fileio import read_named_tensors, write_named_tensors
from .ops import (AttentionParams, BatchNorm, PooledStats, attention_scores,
                  attention_weights, pool_weighted_stats)

DEFAULT_TDNN_OFFSETS = ((-2, -1, 0, 1, 2), (-2, 0, 2), (-3, 0, 3), (0,), (0,))


@dataclass
class Linear:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)


@dataclass
class TdnnLayer:
    linear: Linear
    offsets: tuple[int, ...]
    norm: BatchNorm


@dataclass
class EmbedNetConfig:
    """Architecture plus optimizer knobs for one training run."""

    input_dim: int
    n_speakers: int
    hidden_dim: int = 64
    pool_dim: int = 128
    embed_dim: int = 32
    attention_dim: int = 16
    attentive: bool = True
    tdnn_offsets: tuple = DEFAULT_TDNN_OFFSETS
    epochs: int = 25
    lr: float = 0.01
    momentum: float = 0.9
    lr_decay: float = 0.5
    decay_every: int = 10
    chunk_len: int = 100
    batch_size: int = 16
    bn_momentum: float = 0.1
    seed: int = 0


@dataclass
class EmbedNetParams:
    input_dim: int
    n_speakers: int
    tdnn: list[TdnnLayer]
    attention: AttentionParams | None
    seg1: Linear
    norm1: BatchNorm
    seg2: Linear
    norm2: BatchNorm
    out: Linear
    train_loss: np.ndarray | None = field(default=None, compare=False)

    @property
    def left_context(self) -> int:
        return -sum(min(layer.offsets) for layer in self.tdnn)

    @property
    def right_context(self) -> int:
        return sum(max(layer.offsets) for layer in self.tdnn)

    @property
    def pool_dim(self) -> int:
        return self.tdnn[-1].linear.bias.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.seg1.bias.shape[0]


def init_embed_net(cfg: EmbedNetConfig, rng: np.random.Generator) -> EmbedNetParams:
    def dense(n_out, n_in, gain=2.0):
        w = rng.standard_normal((n_out, n_in)) * np.sqrt(gain / n_in)
        return Linear(w, np.zeros(n_out))

    layers = []
    in_dim = cfg.input_dim
    n_layers = len(cfg.tdnn_offsets)
    for i, offsets in enumerate(cfg.tdnn_offsets):
        out_dim = cfg.pool_dim if i == n_layers - 1 else cfg.hidden_dim
        layers.append(TdnnLayer(dense(out_dim, len(offsets) * in_dim),
                                tuple(offsets), BatchNorm.identity(out_dim)))
        in_dim = out_dim
    attention = None
    if cfg.attentive:
        att_lin = dense(cfg.attention_dim, in_dim)
        v = rng.standard_normal(cfg.attention_dim) * np.sqrt(1.0 / cfg.attention_dim)
        attention = AttentionParams(att_lin.weight, att_lin.bias, v,
                                    np.array(0.0), BatchNorm.identity(cfg.attention_dim))
    seg1 = dense(cfg.embed_dim, 2 * in_dim)
    seg2 = dense(cfg.embed_dim, cfg.embed_dim)
    out = dense(cfg.n_speakers, cfg.embed_dim, gain=1.0)
    return EmbedNetParams(cfg.input_dim, cfg.n_speakers, layers, attention,
                          seg1, BatchNorm.identity(cfg.embed_dim),
                          seg2, BatchNorm.identity(cfg.embed_dim), out)


def _as_frames(x) -> np.ndarray:
    frames = getattr(x, "frames", x)
    return np.asarray(frames, dtype=np.float64)


def _splice(x: np.ndarray, offsets: tuple[int, ...]) -> np.ndarray:
    width = offsets[-1] - offsets[0]
    n_out = x.shape[0] - width
    if n_out < 1:
        raise TooShortUtteranceError(
            f"{x.shape[0]} frames cannot cover a context of {width + 1}")
    return np.hstack([x[(o - offsets[0]):(o - offsets[0]) + n_out] for o in offsets])


def _forward_frames(params: EmbedNetParams, x: np.ndarray, cache: list | None = None):
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise FormatError(f"expected (L, {params.input_dim}) input, got {x.shape}")
    y = x
    for layer in params.tdnn:
        spliced = _splice(y, layer.offsets)
        z = spliced @ layer.linear.weight.T + layer.linear.bias
        r = np.maximum(z, 0.0)
        y = layer.norm.apply(r)
        if cache is not None:
            cache.append({"spliced": spliced, "z": z, "r": r})
    return y


def _attention_forward(att: AttentionParams, h: np.ndarray, cache: dict | None = None):
    za = h @ att.weight.T + att.bias
    ra = np.maximum(za, 0.0)
    ua = att.norm.apply(ra)
    e = ua @ att.v + att.k
    if cache is not None:
        cache.update(za=za, ra=ra, ua=ua)
    return e


def _segment_forward(params: EmbedNetParams, s: np.ndarray, cache: dict | None = None):
    emb = params.seg1.weight @ s + params.seg1.bias
    r1 = np.maximum(emb, 0.0)
    y1 = params.norm1.apply(r1)
    z2 = params.seg2.weight @ y1 + params.seg2.bias
    r2 = np.maximum(z2, 0.0)
    y2 = params.norm2.apply(r2)
    logits = params.out.weight @ y2 + params.out.bias
    if cache is not None:
        cache.update(s=s, emb=emb, r1=r1, y1=y1, z2=z2, r2=r2, y2=y2)
    return emb, logits


def tdnn_forward(frames, params: EmbedNetParams) -> np.ndarray:
    """Hidden frame sequence h (valid frames only: L_out = L - total context)."""
    return _forward_frames(params, _as_frames(frames))


def segment_forward(stats: PooledStats, params: EmbedNetParams):
    """(embedding, logits) from pooled statistics. The embedding is the
    pre-activation output of the first segment layer."""
    return _segment_forward(params, stats.concat())


def _resolve_weights(h: np.ndarray, params: EmbedNetParams, weights):
    if isinstance(weights, str):
        if weights == "uniform":
            return np.full(h.shape[0], 1.0 / h.shape[0])
        if weights == "internal":
            if params.attention is None:
                raise MissingAttentionError(
                    "internal weights requested from a network without attention")
            return attention_weights(attention_scores(h, params.attention))
        raise FormatError(f"unknown weight source {weights!r}")
    return np.asarray(weights, dtype=np.float64)


def extract_embedding(frames, params: EmbedNetParams, weights="uniform") -> np.ndarray:
    """Segment embedding with the requested pooling weights.

    weights: "uniform", "internal" (the network's own attention), or an
    explicit per-frame weight vector over the valid frames.
    """
    h = tdnn_forward(frames, params)
    w = _resolve_weights(h, params, weights)
    emb, _ = _segment_forward(params, pool_weighted_stats(h, w).concat())
    return emb


def export_attention_weights(frames, params: EmbedNetParams) -> np.ndarray:
    """The network's attention weights over the valid frames of an utterance."""
    h = tdnn_forward(frames, params)
    if params.attention is None:
        raise MissingAttentionError("network has no attention layer to export")
    return attention_weights(attention_scores(h, params.attention))


def forward_logits(frames, params: EmbedNetParams, weights=None) -> np.ndarray:
    """Inference-mode logits; defaults to the network's natural pooling."""
    if weights is None:
        weights = "internal" if params.attention is not None else "uniform"
    h = tdnn_forward(frames, params)
    w = _resolve_weights(h, params, weights)
    _, logits = _segment_forward(params, pool_weighted_stats(h, w).concat())
    return logits


# ---------------------------------------------------------------------------
# parameter flattening (fixed order; norm buffers are not parameters)

def _param_items(params: EmbedNetParams):
    for i, layer in enumerate(params.tdnn):
        yield f"tdnn{i}.w", layer.linear.weight
        yield f"tdnn{i}.b", layer.linear.bias
        yield f"tdnn{i}.gamma", layer.norm.gamma
        yield f"tdnn{i}.beta", layer.norm.beta
    if params.attention is not None:
        att = params.attention
        yield "att.w", att.weight
        yield "att.b", att.bias
        yield "att.v", att.v
        yield "att.k", att.k
        yield "att.gamma", att.norm.gamma
        yield "att.beta", att.norm.beta
    yield "seg1.w", params.seg1.weight
    yield "seg1.b", params.seg1.bias
    yield "norm1.gamma", params.norm1.gamma
    yield "norm1.beta", params.norm1.beta
    yield "seg2.w", params.seg2.weight
    yield "seg2.b", params.seg2.bias
    yield "norm2.gamma", params.norm2.gamma
    yield "norm2.beta", params.norm2.beta
    yield "out.w", params.out.weight
    yield "out.b", params.out.bias


def param_names(params: EmbedNetParams) -> list[str]:
    return [name for name, _ in _param_items(params)]


def get_param_vector(params: EmbedNetParams) -> np.ndarray:
    return np.concatenate([np.ravel(arr) for _, arr in _param_items(params)])


def set_param_vector(params: EmbedNetParams, vec: np.ndarray):
    pos = 0
    for _, arr in _param_items(params):
        n = arr.size
        arr[...] = np.asarray(vec[pos:pos + n]).reshape(arr.shape)
        pos += n
    if pos != vec.size:
        raise FormatError(f"parameter vector has {vec.size} entries, expected {pos}")


def grads_to_vector(params: EmbedNetParams, grads: dict[str, np.ndarray]) -> np.ndarray:
    # Parameters outside the active route (attention under uniform pooling)
    # get zero gradient rather than a missing entry.
    parts = []
    for name, arr in _param_items(params):
        g = grads.get(name)
        parts.append(np.zeros(arr.size) if g is None else np.ravel(g))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# loss + analytic backward

def softmax_cross_entropy(logits: np.ndarray, label: int):
    shifted = logits - logits.max()
    logz = np.log(np.exp(shifted).sum())
    prob = np.exp(shifted - logz)
    loss = logz - shifted[label]
    dlogits = prob.copy()
    dlogits[label] -= 1.0
    return loss, dlogits


def chunk_loss(params: EmbedNetParams, x: np.ndarray, label: int, mode: str) -> float:
    """Training-objective forward only (used by finite-difference checks)."""
    h = _forward_frames(params, x)
    if mode == "internal":
        w = attention_weights(_attention_forward(params.attention, h))
    else:
        w = np.full(h.shape[0], 1.0 / h.shape[0])
    _, logits = _segment_forward(params, pool_weighted_stats(h, w).concat())
    return softmax_cross_entropy(logits, label)[0]


def kink_margin(params: EmbedNetParams, x: np.ndarray, mode: str):
    """Distance of the training forward pass from its non-smooth points.

    Returns (smallest |pre-activation| over every ReLU input, smallest
    standard-deviation radicand). Finite-difference gradient checks are
    only trustworthy when both are comfortably larger than the probe
    step, so callers redraw instances that land too close to a kink.
    """
    frame_cache: list = []
    h = _forward_frames(params, x, frame_cache)
    margins = [float(np.abs(c["z"]).min()) for c in frame_cache]
    if mode == "internal":
        att_cache: dict = {}
        e = _attention_forward(params.attention, h, att_cache)
        alpha = attention_weights(e)
        margins.append(float(np.abs(att_cache["za"]).min()))
    else:
        alpha = np.full(h.shape[0], 1.0 / h.shape[0])
    mean = alpha @ h
    radicand = alpha @ (h * h) - mean * mean
    sigma = np.sqrt(np.maximum(radicand, 0.0))
    seg_cache: dict = {}
    _segment_forward(params, np.concatenate([mean, sigma]), seg_cache)
    margins.append(float(np.abs(seg_cache["emb"]).min()))
    margins.append(float(np.abs(seg_cache["z2"]).min()))
    return min(margins), float(radicand.min())


def chunk_loss_and_grads(params: EmbedNetParams, x: np.ndarray, label: int, mode: str):
    """Forward + analytic backward for one chunk.

    Returns (loss, grads, activations): grads keyed like _param_items;
    activations holds the pre-norm (post-ReLU) arrays each norm layer saw,
    for the running-statistics update done outside the gradient path.
    """
    frame_cache: list = []
    h = _forward_frames(params, x, frame_cache)
    att_cache: dict = {}
    if mode == "internal":
        e = _attention_forward(params.attention, h, att_cache)
        alpha = attention_weights(e)
    elif mode == "uniform":
        alpha = np.full(h.shape[0], 1.0 / h.shape[0])
    else:
        raise FormatError(f"unknown training mode {mode!r}")

    mean = alpha @ h
    second = alpha @ (h * h)
    radicand = second - mean * mean
    sigma = np.sqrt(np.maximum(radicand, 0.0))
    seg_cache: dict = {}
    _, logits = _segment_forward(params, np.concatenate([mean, sigma]), seg_cache)
    loss, dlogits = softmax_cross_entropy(logits, label)

    grads: dict[str, np.ndarray] = {}
    acts = {"norm1": seg_cache["r1"][None, :], "norm2": seg_cache["r2"][None, :]}

    # segment layers
    grads["out.w"] = np.outer(dlogits, seg_cache["y2"])
    grads["out.b"] = dlogits
    dy2 = params.out.weight.T @ dlogits

    inv2 = params.norm2.scale()
    grads["norm2.gamma"] = dy2 * (seg_cache["r2"] - params.norm2.running_mean) * inv2
    grads["norm2.beta"] = dy2
    dr2 = dy2 * params.norm2.gamma * inv2
    dz2 = dr2 * (seg_cache["z2"] > 0)
    grads["seg2.w"] = np.outer(dz2, seg_cache["y1"])
    grads["seg2.b"] = dz2
    dy1 = params.seg2.weight.T @ dz2

    inv1 = params.norm1.scale()
    grads["norm1.gamma"] = dy1 * (seg_cache["r1"] - params.norm1.running_mean) * inv1
    grads["norm1.beta"] = dy1
    dr1 = dy1 * params.norm1.gamma * inv1
    demb = dr1 * (seg_cache["emb"] > 0)
    grads["seg1.w"] = np.outer(demb, seg_cache["s"])
    grads["seg1.b"] = demb
    ds = params.seg1.weight.T @ demb

    # pooling
    dim = mean.shape[0]
    dmean = ds[:dim].copy()
    dsigma = ds[dim:]
    pos = radicand > 1e-12
    dradicand = np.where(pos, dsigma * 0.5 / np.where(pos, sigma, 1.0), 0.0)
    dmean -= 2.0 * mean * dradicand
    dh = alpha[:, None] * (dmean[None, :] + 2.0 * h * dradicand[None, :])
    if mode == "internal":
        dalpha = h @ dmean + (h * h) @ dradicand
        de = alpha * (dalpha - alpha @ dalpha)
        att = params.attention
        grads["att.v"] = att_cache["ua"].T @ de
        grads["att.k"] = np.asarray(de.sum())
        dua = np.outer(de, att.v)
        inva = att.norm.scale()
        grads["att.gamma"] = (dua * (att_cache["ra"] - att.norm.running_mean) * inva).sum(axis=0)
        grads["att.beta"] = dua.sum(axis=0)
        dra = dua * att.norm.gamma * inva
        dza = dra * (att_cache["za"] > 0)
        grads["att.w"] = dza.T @ h
        grads["att.b"] = dza.sum(axis=0)
        dh = dh + dza @ att.weight
        acts["att"] = att_cache["ra"]

    # TDNN stack
    dy = dh
    for i in reversed(range(len(params.tdnn))):
        layer = params.tdnn[i]
        cache = frame_cache[i]
        acts[f"tdnn{i}"] = cache["r"]
        inv = layer.norm.scale()
        grads[f"tdnn{i}.gamma"] = (dy * (cache["r"] - layer.norm.running_mean) * inv).sum(axis=0)
        grads[f"tdnn{i}.beta"] = dy.sum(axis=0)
        dr = dy * layer.norm.gamma * inv
        dz = dr * (cache["z"] > 0)
        grads[f"tdnn{i}.w"] = dz.T @ cache["spliced"]
        grads[f"tdnn{i}.b"] = dz.sum(axis=0)
        dspliced = dz @ layer.linear.weight
        in_dim = params.input_dim if i == 0 else params.tdnn[i - 1].linear.bias.shape[0]
        in_len = (x.shape[0] if i == 0
                  else frame_cache[i - 1]["z"].shape[0])
        n_out = dz.shape[0]
        dx = np.zeros((in_len, in_dim))
        for j, o in enumerate(layer.offsets):
            shift = o - layer.offsets[0]
            dx[shift:shift + n_out] += dspliced[:, j * in_dim:(j + 1) * in_dim]
        dy = dx

    return loss, grads, acts


# ---------------------------------------------------------------------------
# serialization (EMB1)

def save_embed_net(path, params: EmbedNetParams):
    meta = {
        "input_dim": params.input_dim,
        "n_speakers": params.n_speakers,
        "n_tdnn": len(params.tdnn),
        "has_attention": int(params.attention is not None),
    }
    for i, layer in enumerate(params.tdnn):
        meta[f"tdnn{i}.n_offsets"] = len(layer.offsets)
        for j, o in enumerate(layer.offsets):
            meta[f"tdnn{i}.offset{j}"] = o
    tensors = dict(_param_items(params))
    for name, norm in _norm_items(params):
        tensors[f"{name}.mean"] = norm.running_mean
        tensors[f"{name}.var"] = norm.running_var
    write_named_tensors(path, b"EMB1", meta, tensors)


def _norm_items(params: EmbedNetParams):
    for i, layer in enumerate(params.tdnn):
        yield f"tdnn{i}.norm", layer.norm
    if params.attention is not None:
        yield "att.norm", params.attention.norm
    yield "norm1", params.norm1
    yield "norm2", params.norm2


def load_embed_net(path) -> EmbedNetParams:
    meta, tensors = read_named_tensors(path, b"EMB1")
    layers = []
    for i in range(meta["n_tdnn"]):
        offsets = tuple(meta[f"tdnn{i}.offset{j}"]
                        for j in range(meta[f"tdnn{i}.n_offsets"]))
        norm = BatchNorm(tensors[f"tdnn{i}.gamma"], tensors[f"tdnn{i}.beta"],
                         tensors[f"tdnn{i}.norm.mean"], tensors[f"tdnn{i}.norm.var"])
        layers.append(TdnnLayer(Linear(tensors[f"tdnn{i}.w"], tensors[f"tdnn{i}.b"]),
                                offsets, norm))
    attention = None
    if meta["has_attention"]:
        attention = AttentionParams(
            tensors["att.w"], tensors["att.b"], tensors["att.v"],
            tensors["att.k"],
            BatchNorm(tensors["att.gamma"], tensors["att.beta"],
                      tensors["att.norm.mean"], tensors["att.norm.var"]))
    return EmbedNetParams(
        meta["input_dim"], meta["n_speakers"], layers, attention,
        Linear(tensors["seg1.w"], tensors["seg1.b"]),
        BatchNorm(tensors["norm1.gamma"], tensors["norm1.beta"],
                  tensors["norm1.mean"], tensors["norm1.var"]),
        Linear(tensors["seg2.w"], tensors["seg2.b"]),
        BatchNorm(tensors["norm2.gamma"], tensors["norm2.beta"],
                  tensors["norm2.mean"], tensors["norm2.var"]),
        Linear(tensors["out.w"], tensors["out.b"]))
