"""Posterior-predictive link probabilities, held-out metrics and recovery scoring."""
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import comb, expit
from scipy.stats import rankdata

from .errors import InvalidArgument, UndefinedMetric
from .model import build_logits

CLAMP = 1e-12


@dataclass
class PredictionSummary:
    pairs: np.ndarray
    probs: np.ndarray
    truth: np.ndarray
    model_tag: str = "ila"

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=int).reshape(-1, 2)
        self.probs = np.asarray(self.probs, dtype=float)
        self.truth = np.asarray(self.truth, dtype=np.int8)
        if not len(self.pairs) == len(self.probs) == len(self.truth):
            raise InvalidArgument("pairs, probs and truth must have equal length")
        if len(self.probs) and (self.probs.min() < 0 or self.probs.max() > 1):
            raise InvalidArgument("probabilities must lie in [0, 1]")


# ----------------------------------------------------------- evaluators
# An evaluator maps (state, pairs) to one link probability per pair.

def ila_evaluator(state, pairs):
    eta = build_logits(state)
    return expit(eta[pairs[:, 0], pairs[:, 1]])


def lfrm_evaluator(state, pairs):
    from .baselines.lfrm import lfrm_predictive
    return lfrm_predictive(state, pairs)


def irm_evaluator(net, mask):
    """IRM predictions depend on the training counts, so the evaluator closes over them."""
    from .baselines.irm import irm_predictive
    from .sampler import PairData
    data = PairData(net, mask)

    def evaluate(state, pairs):
        return irm_predictive(state, net, mask, pairs, data)
    return evaluate


def evaluator_for(model_tag, net=None, train_mask=None):
    if model_tag in ("ila", "ila-fixed-m"):
        return ila_evaluator
    if model_tag == "lfrm":
        return lfrm_evaluator
    if model_tag == "irm":
        if net is None or train_mask is None:
            raise InvalidArgument("the IRM evaluator needs the training network and mask")
        return irm_evaluator(net, train_mask)
    raise InvalidArgument(f"unknown model tag {model_tag!r}")


def posterior_predictive(trace, pairs, evaluator: Callable, truth=None):
    """Average the per-sample link probabilities over every checkpoint in ``trace``."""
    if len(trace) == 0:
        raise InvalidArgument("empty trace")
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    acc = np.zeros(len(pairs))
    for entry in trace:
        acc += evaluator(entry.state, pairs)
    probs = acc / len(trace)
    truth = np.zeros(len(pairs), dtype=np.int8) if truth is None else truth
    return PredictionSummary(pairs, probs, truth, getattr(trace, "model_tag", "ila"))


def summarize(trace, net, mask, evaluator):
    """Posterior predictive over the canonical pairs of ``mask``, with truth read from ``net``."""
    pairs = mask.pairs()
    return posterior_predictive(trace, pairs, evaluator,
                                truth=net.adjacency[pairs[:, 0], pairs[:, 1]])


# -------------------------------------------------------------- metrics

def _freq_mean(x):
    # mean as a frequency-weighted sum over distinct values: exact when all values agree
    vals, counts = np.unique(x, return_counts=True)
    return float(np.sum(vals * (counts / len(x))))


def metric_zero_one(summary, threshold=0.5):
    if not 0.0 < threshold < 1.0:
        raise InvalidArgument("threshold must lie in (0, 1)")
    if len(summary.probs) == 0:
        raise UndefinedMetric("no pairs to score")
    pred = summary.probs >= threshold
    return float(np.mean(pred != summary.truth.astype(bool)))


def metric_test_loglik(summary):
    if len(summary.probs) == 0:
        raise UndefinedMetric("no pairs to score")
    p = np.clip(summary.probs, CLAMP, 1.0 - CLAMP)
    ll = np.where(summary.truth == 1, np.log(p), np.log1p(-p))
    return _freq_mean(ll)


def metric_auc(summary):
    """Mann-Whitney AUC; tied scores count one half."""
    pos = summary.truth == 1
    n1, n0 = int(pos.sum()), int((~pos).sum())
    if n1 == 0 or n0 == 0:
        raise UndefinedMetric("AUC needs at least one positive and one negative pair")
    ranks = rankdata(summary.probs)
    u = ranks[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


# ------------------------------------------------- sample selection / recovery

def select_lowest_energy(trace):
    if len(trace) == 0:
        raise InvalidArgument("empty trace")
    best = None
    for entry in trace:
        if best is None or entry.log_joint >= best.log_joint:
            best = entry
    return best.state


def adjusted_rand_index(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    n = len(a)
    if n != len(b):
        raise InvalidArgument("partitions must have equal length")
    if n < 2:
        return 1.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)
    s_ij = comb(table, 2).sum()
    s_a = comb(table.sum(axis=1), 2).sum()
    s_b = comb(table.sum(axis=0), 2).sum()
    expected = s_a * s_b / comb(n, 2)
    top = 0.5 * (s_a + s_b)
    if top == expected:
        return 1.0
    return float((s_ij - expected) / (top - expected))


def jaccard(x, y):
    x = np.asarray(x, dtype=bool)
    y = np.asarray(y, dtype=bool)
    union = np.sum(x | y)
    return 1.0 if union == 0 else float(np.sum(x & y) / union)


@dataclass
class RecoveryReport:
    matches: list  # (truth feature, estimated feature or None, jaccard, ari)

    @property
    def jaccards(self):
        return [m[2] for m in self.matches]

    @property
    def aris(self):
        return [m[3] for m in self.matches]

    def recovered(self, ari_min=0.9, jaccard_min=0.9):
        return all(j >= jaccard_min and a >= ari_min for _, _, j, a in self.matches)


def score_recovery(estimated, truth_c):
    """Match estimated features to planted ones greedily, then score each match.

    ``truth_c`` is an N x M_true matrix of planted subcluster labels (0 = feature
    off). Candidate pairs are ranked by Z-column Jaccard plus subcluster ARI
    (over objects holding both), so features with identical columns are told
    apart by their partitions. Unmatched planted features score 0.
    """
    truth_c = np.asarray(truth_c)
    if truth_c.shape[0] != estimated.n_nodes:
        raise InvalidArgument("estimate and truth cover different numbers of objects")
    est_c = estimated.c
    cands = []
    for t in range(truth_c.shape[1]):
        tz = truth_c[:, t] > 0
        for m in range(est_c.shape[1]):
            ez = est_c[:, m] > 0
            both = tz & ez
            j = jaccard(tz, ez)
            a = adjusted_rand_index(truth_c[both, t], est_c[both, m]) if both.any() else 0.0
            cands.append((j + a, j, a, t, m))
    cands.sort(key=lambda x: (-x[0], x[3], x[4]))
    used_t, used_m, found = set(), set(), {}
    for _, j, a, t, m in cands:
        if t in used_t or m in used_m:
            continue
        used_t.add(t)
        used_m.add(m)
        found[t] = (t, m, j, a)
    return RecoveryReport([found.get(t, (t, None, 0.0, 0.0)) for t in range(truth_c.shape[1])])
