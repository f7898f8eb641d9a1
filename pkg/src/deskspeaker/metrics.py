"""Detection metrics over verification trial sets.

Operating-point convention (shared by every sweep in this module): a trial is
accepted when score >= threshold; candidate thresholds are every distinct
score plus a reject-all sentinel above the maximum, which together with the
accept-all point makes the ROC endpoints explicit. EER interpolates linearly
between the two adjacent operating points where FNR - FPR changes sign.
minCprimary averages the min-cost detection metric over the configured target
priors with unit miss/false-alarm costs, normalized by min(P_t, 1 - P_t).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScoreSetError, EmptyInputError

DEFAULT_P_TARGETS = (0.01, 0.005)


@dataclass
class TrialScoreSet:
    scores: np.ndarray  # (N,)
    targets: np.ndarray  # (N,) bool

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=bool)
        if self.scores.shape != self.targets.shape or self.scores.ndim != 1:
            raise EmptyInputError("scores and targets must be parallel 1-D arrays")
        if self.scores.size == 0:
            raise EmptyInputError("empty trial set")
        if not np.all(np.isfinite(self.scores)):
            raise DegenerateScoreSetError("non-finite trial scores")
        if self.targets.all() or not self.targets.any():
            raise DegenerateScoreSetError(
                "trial set needs both target and nontarget trials")


def _error_curves(trials: TrialScoreSet):
    """FNR/FPR at each operating point, thresholds ascending.

    Point k uses threshold = sorted_unique_scores[k]; the final point is the
    reject-all sentinel. Accept iff score >= threshold.
    """
    thresholds = np.unique(trials.scores)
    n_target = int(trials.targets.sum())
    n_nontarget = trials.targets.size - n_target
    target_sorted = np.sort(trials.scores[trials.targets])
    nontarget_sorted = np.sort(trials.scores[~trials.targets])
    # misses: targets strictly below the threshold
    fnr = np.searchsorted(target_sorted, thresholds, side="left") / n_target
    # false alarms: nontargets at or above it
    fpr = 1.0 - np.searchsorted(nontarget_sorted, thresholds, side="left") / n_nontarget
    fnr = np.concatenate([fnr, [1.0]])
    fpr = np.concatenate([fpr, [0.0]])
    return fnr, fpr


def compute_eer(trials: TrialScoreSet) -> float:
    """Equal error rate with linear interpolation at the FNR/FPR crossing."""
    fnr, fpr = _error_curves(trials)
    diff = fnr - fpr  # non-decreasing along the sweep
    k = int(np.searchsorted(diff >= 0, True))
    if k == 0:
        return float(fnr[0])
    if diff[k] == 0.0:
        return float(fnr[k])
    m1, m2 = fnr[k - 1], fnr[k]
    f1, f2 = fpr[k - 1], fpr[k]
    s = (f1 - m1) / ((m2 - m1) - (f2 - f1))
    return float(m1 + s * (m2 - m1))


def compute_min_cprimary(trials: TrialScoreSet,
                         p_targets=DEFAULT_P_TARGETS) -> float:
    """Mean over target priors of the minimum normalized detection cost.

    cost(threshold) = (P_t * FNR + (1 - P_t) * FPR) / min(P_t, 1 - P_t),
    minimized over the shared operating-point sweep.
    """
    fnr, fpr = _error_curves(trials)
    costs = []
    for p_t in p_targets:
        if not 0.0 < p_t < 1.0:
            raise ValueError(f"target prior {p_t} outside (0, 1)")
        norm = min(p_t, 1.0 - p_t)
        costs.append(np.min(p_t * fnr + (1.0 - p_t) * fpr) / norm)
    return float(np.mean(costs))


def weight_posterior_correlation(alpha: np.ndarray, q: np.ndarray,
                                 eps: float = 1e-6) -> float:
    """Pearson correlation between frame weights and posterior log-odds.

    q is clipped to [eps, 1 - eps] before the log-odds transform, so hard
    0/1 posteriors stay finite.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if alpha.shape != q.shape or alpha.ndim != 1:
        raise EmptyInputError("alpha and q must be parallel 1-D arrays")
    if alpha.size < 2:
        raise EmptyInputError("correlation needs at least two frames")
    qc = np.clip(q, eps, 1.0 - eps)
    logodds = np.log(qc / (1.0 - qc))
    if alpha.std() == 0.0 or logodds.std() == 0.0:
        raise DegenerateScoreSetError("zero-variance series has no correlation")
    return float(np.corrcoef(alpha, logodds)[0, 1])
