import math

import numpy as np
import pytest
from conftest import random_state
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from ilanet.errors import InvalidArgument, UndefinedMetric
from ilanet.evaluate import (PredictionSummary, adjusted_rand_index, ila_evaluator, jaccard,
                             metric_auc, metric_test_loglik, metric_zero_one, posterior_predictive,
                             score_recovery, select_lowest_energy)
from ilanet.mcmc import RngStream
from ilanet.model import IlaState, link_prob
from ilanet.sampler import SamplerTrace, TraceEntry


def _summary(probs, truth):
    return PredictionSummary(np.zeros((len(probs), 2), dtype=int), probs, truth)


def _pair_count_auc(scores, truth):
    pos = [s for s, t in zip(scores, truth) if t]
    neg = [s for s, t in zip(scores, truth) if not t]
    tot = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return tot / (len(pos) * len(neg))


def test_zero_one_examples():
    truth = np.array([1, 0, 1, 0])
    assert metric_zero_one(_summary(truth.astype(float), truth)) == 0.0
    assert metric_zero_one(_summary(1.0 - truth, truth)) == 1.0
    assert metric_zero_one(_summary([0.6, 0.4, 0.7], [1, 1, 0])) == pytest.approx(2 / 3)
    with pytest.raises(InvalidArgument):
        metric_zero_one(_summary([0.5], [1]), threshold=1.0)


def test_test_loglik_examples():
    assert metric_test_loglik(_summary(np.full(7, 0.5), [1, 0, 1, 1, 0, 0, 1])) == math.log(0.5)
    assert metric_test_loglik(_summary([0.9, 0.1], [1, 0])) == pytest.approx(-0.10536, abs=1e-5)
    perfect = metric_test_loglik(_summary([1.0, 0.0], [1, 0]))
    assert perfect <= 0 and perfect >= math.log(1 - 1e-12) - 1e-15


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=30), st.integers(0, 2**31))
def test_test_loglik_is_nonpositive(probs, seed):
    truth = RngStream(seed).gen.integers(0, 2, len(probs))
    assert metric_test_loglik(_summary(probs, truth)) <= 0.0


def test_auc_examples():
    assert metric_auc(_summary([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])) == 1.0
    assert metric_auc(_summary([0.3] * 4, [0, 1, 0, 1])) == 0.5
    assert metric_auc(_summary([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])) == 0.75
    with pytest.raises(UndefinedMetric):
        metric_auc(_summary([0.1, 0.2], [1, 1]))


def test_auc_matches_pair_counting_exactly():
    r = RngStream(1)
    for _ in range(200):
        n = int(r.integers(2, 40))
        scores = np.round(r.gen.random(n), int(r.integers(1, 3)))  # rounding forces ties
        truth = r.gen.integers(0, 2, n)
        truth[0], truth[1] = 0, 1
        assert metric_auc(_summary(scores, truth)) == _pair_count_auc(scores, truth)


def test_auc_invariant_under_monotone_transform():
    r = RngStream(2)
    scores = r.gen.random(50)
    truth = r.gen.integers(0, 2, 50)
    a = metric_auc(_summary(scores, truth))
    assert metric_auc(_summary(expit(10 * scores - 3), truth)) == a
    assert metric_auc(_summary(scores ** 3, truth)) == a


def _trace(states, ljs=None):
    ljs = [0.0] * len(states) if ljs is None else ljs
    return SamplerTrace([TraceEntry(t + 1, s, lj) for t, (s, lj) in enumerate(zip(states, ljs))])


def test_posterior_predictive_examples():
    pairs = np.array([[0, 1]])
    a = IlaState.empty(2, s=math.log(0.2 / 0.8))
    b = IlaState.empty(2, s=math.log(0.8 / 0.2))
    one = posterior_predictive(_trace([a]), pairs, ila_evaluator)
    assert one.probs[0] == ila_evaluator(a, pairs)[0]
    assert posterior_predictive(_trace([a, b]), pairs, ila_evaluator).probs[0] == pytest.approx(0.5)
    with pytest.raises(InvalidArgument):
        posterior_predictive(_trace([]), pairs, ila_evaluator)


def test_posterior_predictive_naive_oracle_and_order():
    r = RngStream(3)
    states = [random_state(4, r) for _ in range(5)]
    pairs = np.array([(i, j) for i in range(4) for j in range(4) if i != j])
    got = posterior_predictive(_trace(states), pairs, ila_evaluator).probs
    ref = [sum(link_prob(s, i, j) for s in states) / 5 for i, j in pairs]
    assert np.allclose(got, ref, atol=1e-12, rtol=0)
    rev = posterior_predictive(_trace(states[::-1]), pairs, ila_evaluator).probs
    assert np.allclose(got, rev, atol=1e-15, rtol=0)


def test_select_lowest_energy():
    s = [IlaState.empty(2, s=float(k)) for k in range(3)]
    assert select_lowest_energy(_trace(s, [-5.0, -3.0, -1.0])) is s[2]
    assert select_lowest_energy(_trace(s[:1], [-4.0])) is s[0]
    assert select_lowest_energy(_trace(s, [-5.0, -2.0, -2.0])) is s[2]
    with pytest.raises(InvalidArgument):
        select_lowest_energy(_trace([]))


def test_ari_and_jaccard_basics():
    assert adjusted_rand_index([1, 1, 2, 2], [5, 5, 7, 7]) == 1.0
    assert adjusted_rand_index([1, 1, 1, 1, 1, 1], [1, 1, 2, 2, 3, 3]) == 0.0
    assert jaccard([1, 1, 0], [1, 0, 0]) == 0.5
    assert jaccard([0, 0], [0, 0]) == 1.0


def test_ari_null_mean():
    r = RngStream(4)
    vals = np.array([adjusted_rand_index(r.gen.integers(0, 3, 30), r.gen.integers(0, 3, 30))
                     for _ in range(1000)])
    assert abs(vals.mean()) <= 4 * vals.std(ddof=1) / math.sqrt(len(vals))


def test_score_recovery_symmetry_and_degenerate_cases():
    truth = np.zeros((12, 2), dtype=int)
    truth[:, 0] = np.repeat([1, 2, 3], 4)
    truth[:6, 1] = np.repeat([1, 2], 3)
    est_c = truth[:, [1, 0]].copy()
    est_c[:, 1] = np.array([0, 3, 2, 1])[est_c[:, 1]]  # relabel subclusters
    est = IlaState(est_c, [np.zeros((3, 3)), np.zeros((4, 4))], 0.0, 1.0, 1.0)
    rep = score_recovery(est, truth)
    assert rep.aris == [1.0, 1.0] and rep.jaccards == [1.0, 1.0] and rep.recovered()

    merged = truth.copy()
    merged[:, 0] = 1
    rep = score_recovery(IlaState(merged, [np.zeros((2, 2)), np.zeros((3, 3))], 0.0, 1.0, 1.0), truth)
    assert rep.aris[0] == 0.0 and not rep.recovered()

    rep = score_recovery(IlaState.empty(12), truth)
    assert rep.jaccards == [0.0, 0.0]
