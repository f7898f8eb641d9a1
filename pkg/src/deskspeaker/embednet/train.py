"""Training loop: chunked SGD with momentum, step-decayed learning rate,
running-statistics updates for the normalization layers.

Determinism contract: given the same utterances, labels, and config (incl.
seed), two runs produce bit-identical parameters. All randomness flows
through one seeded Generator in a fixed draw order, and every reduction runs
single-threaded numpy.
"""

from __future__ import annotations

import logging

import numpy as np

from ..errors import EmptyInputError, NumericsError
from .network import (EmbedNetConfig, EmbedNetParams, _as_frames,
                      _norm_items, chunk_loss_and_grads, forward_logits,
                      get_param_vector, grads_to_vector, init_embed_net,
                      set_param_vector)

log = logging.getLogger(__name__)


def _sample_chunk(frames: np.ndarray, chunk_len: int, rng: np.random.Generator):
    if frames.shape[0] <= chunk_len:
        return frames
    offset = int(rng.integers(0, frames.shape[0] - chunk_len + 1))
    return frames[offset:offset + chunk_len]


def _update_norms(params: EmbedNetParams, collected: dict[str, list], momentum: float):
    norms = dict(_norm_items_by_act(params))
    for name, chunks in collected.items():
        if not chunks:
            continue
        stacked = np.vstack(chunks)
        mean = stacked.mean(axis=0)
        var = stacked.var(axis=0)
        norm = norms[name]
        norm.running_mean = (1.0 - momentum) * norm.running_mean + momentum * mean
        norm.running_var = (1.0 - momentum) * norm.running_var + momentum * var


def _norm_items_by_act(params: EmbedNetParams):
    # activation keys used by chunk_loss_and_grads
    for name, norm in _norm_items(params):
        yield name.replace(".norm", ""), norm


def train_embed_network(utterances, labels, cfg: EmbedNetConfig) -> EmbedNetParams:
    """Train a speaker-classification network and return its parameters.

    utterances: list of (L, D) frame arrays (or frame-sequence objects);
    labels: parallel list of speaker indices in [0, cfg.n_speakers).
    """
    frames = [_as_frames(u) for u in utterances]
    if not frames:
        raise EmptyInputError("empty training corpus")
    labels = [int(lb) for lb in labels]
    if min(labels) < 0 or max(labels) >= cfg.n_speakers:
        raise ValueError(f"labels must lie in [0, {cfg.n_speakers})")

    rng = np.random.default_rng(cfg.seed)
    params = init_embed_net(cfg, rng)
    mode = "internal" if cfg.attentive else "uniform"
    n_utts = len(frames)

    # Settle the normalization buffers before the first step. Each site is
    # replaced in topological order with the statistics of its own pre-norm
    # activations, recomputed after every earlier site has settled; one pass
    # leaves every site exactly normalized on the warmup sample, so early
    # gradients see unit-scale activations everywhere.
    warm_idx = rng.permutation(n_utts)[:min(n_utts, 4 * cfg.batch_size)]
    warm_chunks = [_sample_chunk(frames[i], cfg.chunk_len, rng) for i in warm_idx]
    site_order = [name for name, _ in _norm_items_by_act(params)]
    for site in site_order:
        stacks: list = []
        for chunk, i in zip(warm_chunks, warm_idx):
            _, _, acts = chunk_loss_and_grads(params, chunk, labels[i], mode)
            stacks.append(acts[site])
        _update_norms(params, {site: stacks}, momentum=1.0)

    velocity = np.zeros_like(get_param_vector(params))
    history = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr * (cfg.lr_decay ** (epoch // cfg.decay_every))
        order = rng.permutation(n_utts)
        epoch_loss = 0.0
        for start in range(0, n_utts, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            grad_sum = np.zeros_like(velocity)
            collected = {}
            for i in batch:
                chunk = _sample_chunk(frames[i], cfg.chunk_len, rng)
                loss, grads, acts = chunk_loss_and_grads(params, chunk, labels[i], mode)
                epoch_loss += loss
                grad_sum += grads_to_vector(params, grads)
                for key, arr in acts.items():
                    collected.setdefault(key, []).append(arr)
            velocity = cfg.momentum * velocity + grad_sum / len(batch)
            set_param_vector(params, get_param_vector(params) - lr * velocity)
            _update_norms(params, collected, cfg.bn_momentum)
        history.append(epoch_loss / n_utts)
        if not np.isfinite(history[-1]):
            raise NumericsError(
                f"training diverged: non-finite mean loss at epoch {epoch}")
        log.debug("epoch %d: lr %.4g mean loss %.4f", epoch, lr, history[-1])

    params.train_loss = np.asarray(history)
    return params


def training_accuracy(params: EmbedNetParams, utterances, labels) -> float:
    """Fraction of utterances whose argmax logit matches the label."""
    hits = 0
    for utt, label in zip(utterances, labels):
        logits = forward_logits(_as_frames(utt), params)
        hits += int(np.argmax(logits) == int(label))
    return hits / len(labels)
