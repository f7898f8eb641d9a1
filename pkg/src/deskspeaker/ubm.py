"""Diagonal-covariance GMM background model trained with EM.

Initialization is k-means++ followed by a few Lloyd iterations; EM then runs
with per-dimension variance flooring at a small fraction of the global data
variance. The per-iteration total log-likelihood is recorded on the returned
model so monotonicity is checkable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import EmptyInputError
from .fileio import read_gmm, write_gmm

VAR_FLOOR_FRAC = 1e-6
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class DiagGmm:
    weights: np.ndarray    # (C,)
    means: np.ndarray      # (C, D)
    variances: np.ndarray  # (C, D)
    em_loglik: np.ndarray | None = field(default=None, compare=False)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def save(self, path):
        write_gmm(path, self.weights, self.means, self.variances)

    @classmethod
    def load(cls, path) -> "DiagGmm":
        return cls(*read_gmm(path))


def _log_densities(frames: np.ndarray, gmm: DiagGmm) -> np.ndarray:
    """Per-frame, per-component log N(x; mu_c, diag(var_c)). Shape (N, C)."""
    inv = 1.0 / gmm.variances
    const = -0.5 * (gmm.dim * _LOG_2PI + np.log(gmm.variances).sum(axis=1)
                    + (gmm.means ** 2 * inv).sum(axis=1))
    return (frames ** 2) @ (-0.5 * inv).T + frames @ (gmm.means * inv).T + const


def _log_joint(frames: np.ndarray, gmm: DiagGmm) -> np.ndarray:
    return _log_densities(frames, gmm) + np.log(gmm.weights)


def gmm_posteriors(frames: np.ndarray, gmm: DiagGmm) -> np.ndarray:
    """Component posteriors p(c | x_t). Accepts one frame (D,) or a batch (N, D)."""
    frames = np.asarray(frames, dtype=np.float64)
    single = frames.ndim == 1
    lj = _log_joint(np.atleast_2d(frames), gmm)
    post = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
    return post[0] if single else post


def gmm_loglik(frames: np.ndarray, gmm: DiagGmm) -> float:
    """Total log-likelihood of a frame batch under the mixture."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    return float(logsumexp(_log_joint(frames, gmm), axis=1).sum())


def _kmeans_pp(frames: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = frames.shape[0]
    centers = [frames[rng.integers(n)]]
    d2 = ((frames - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        centers.append(frames[rng.choice(n, p=probs)])
        d2 = np.minimum(d2, ((frames - centers[-1]) ** 2).sum(axis=1))
    return np.array(centers)


def train_gmm(frames: np.ndarray, n_components: int, n_iters: int = 20,
              seed: int = 0, lloyd_iters: int = 5) -> DiagGmm:
    """EM training from a k-means++ start. Returns the model with its
    per-iteration total log-likelihood in ``em_loglik``."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < n_components:
        raise EmptyInputError(
            f"need at least {n_components} frames, got {frames.shape}")
    rng = np.random.default_rng(seed)
    n, dim = frames.shape
    floor = VAR_FLOOR_FRAC * frames.var(axis=0)
    floor = np.maximum(floor, 1e-12)

    centers = _kmeans_pp(frames, n_components, rng)
    for _ in range(lloyd_iters):
        d2 = ((frames[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2) \
            if n * n_components * dim <= 2e7 else None
        if d2 is None:
            # blockwise distance computation for large inputs
            d2 = np.empty((n, n_components))
            for c in range(n_components):
                d2[:, c] = ((frames - centers[c]) ** 2).sum(axis=1)
        assign = d2.argmin(axis=1)
        for c in range(n_components):
            sel = assign == c
            if sel.any():
                centers[c] = frames[sel].mean(axis=0)

    weights = np.zeros(n_components)
    means = centers.copy()
    variances = np.empty((n_components, dim))
    assign = np.array([((frames - m) ** 2).sum(axis=1) for m in centers]).argmin(axis=0)
    for c in range(n_components):
        sel = assign == c
        weights[c] = max(sel.sum(), 1.0)
        variances[c] = np.maximum(frames[sel].var(axis=0), floor) if sel.any() \
            else np.maximum(frames.var(axis=0), floor)
    weights /= weights.sum()
    gmm = DiagGmm(weights, means, variances)

    history = []
    for _ in range(n_iters):
        lj = _log_joint(frames, gmm)
        per_frame = logsumexp(lj, axis=1)
        history.append(float(per_frame.sum()))
        post = np.exp(lj - per_frame[:, None])
        counts = post.sum(axis=0)
        occupied = counts > 1e-10
        first = post.T @ frames
        second = post.T @ (frames ** 2)
        new_means = gmm.means.copy()
        new_vars = gmm.variances.copy()
        new_means[occupied] = first[occupied] / counts[occupied, None]
        new_vars[occupied] = np.maximum(
            second[occupied] / counts[occupied, None] - new_means[occupied] ** 2,
            floor)
        new_weights = np.maximum(counts / n, 1e-12)  # keep dead components loggable
        gmm = DiagGmm(new_weights / new_weights.sum(), new_means, new_vars)
    gmm.em_loglik = np.asarray(history)
    return gmm
