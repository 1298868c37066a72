import numpy as np
import pytest
from conftest import random_network

from ilanet.baselines.lfrm import (LfrmCache, LfrmState, lfrm_link_logit, lfrm_link_prob,
                                   lfrm_log_joint, lfrm_sample_prior, lfrm_sequential_init,
                                   lfrm_sweep, run_lfrm_chain)
from ilanet.errors import InvalidArgument, InvalidState
from ilanet.geweke import batch_means_se
from ilanet.graph import Network, ObservationMask
from ilanet.mcmc import RngStream, sigmoid
from ilanet.model import IlaHyperParams, IlaState, harmonic, link_prob
from ilanet.sampler import PairData, SamplerOptions


def test_zero_features_gives_sigmoid_bias():
    st = LfrmState(np.zeros((3, 2)), np.ones((2, 2)), -0.7)
    assert lfrm_link_prob(st, 0, 2) == sigmoid(-0.7)
    with pytest.raises(InvalidArgument):
        lfrm_link_prob(st, 1, 1)


def test_bilinear_form_matches_double_loop():
    r = RngStream(1)
    for _ in range(20):
        Z = (r.gen.random((4, 3)) < 0.5).astype(np.int8)
        W = r.gaussians((3, 3), 1.5)
        st = LfrmState(Z, W, r.gaussian(0, 1))
        eta = LfrmCache(st).eta
        for i in range(4):
            for j in range(4):
                if i == j:
                    continue
                ref = st.s + sum(Z[i, k] * Z[j, l] * W[k, l] for k in range(3) for l in range(3))
                assert lfrm_link_logit(st, i, j) == pytest.approx(ref, abs=1e-12)
                assert eta[i, j] == pytest.approx(ref, abs=1e-12)


def test_diagonal_w_equals_ila_single_subcluster():
    r = RngStream(2)
    for _ in range(50):
        Z = (r.gen.random((5, 3)) < 0.6).astype(np.int8)
        d = r.gaussians(3, 2.0)
        s = r.gaussian(0, 1)
        lf = LfrmState(Z, np.diag(d), s)
        ila = IlaState.from_blocks(Z.astype(np.int64), [[[x]] for x in d], s)
        for i in range(5):
            for j in range(5):
                if i != j:
                    assert lfrm_link_prob(lf, i, j) == link_prob(ila, i, j)


def test_validate_and_log_joint():
    with pytest.raises(InvalidState):
        LfrmState(np.array([[1, 0], [1, 0]]), np.zeros((2, 2)), 0.0).validate()
    st = lfrm_sample_prior(6, IlaHyperParams(), RngStream(3), alpha=2.0)
    net = random_network(6, RngStream(4))
    assert np.isfinite(lfrm_log_joint(st, net, ObservationMask.full(6, "undirected"), IlaHyperParams()))


@pytest.mark.slow
def test_flat_likelihood_feature_count_matches_ibp():
    # alpha has a G(1, 1) prior, so the stationary mean of M is H_N
    n = 6
    net = Network(n, "undirected", np.zeros((n, n)))
    mask = ObservationMask.empty(n, "undirected")
    data = PairData(net, mask)
    hp, opts = IlaHyperParams(), SamplerOptions()
    st = LfrmState(np.zeros((n, 0)), np.zeros((0, 0)), -1.0, 1.0)
    cache = LfrmCache(st)
    r = RngStream(5)
    Ms = []
    for t in range(12000):
        lfrm_sweep(st, cache, data, hp, opts, r)
        if t >= 500:
            Ms.append(st.M)
    Ms = np.array(Ms, dtype=float)
    assert abs(Ms.mean() - harmonic(n)) <= 4 * batch_means_se(Ms)


def test_sweep_keeps_cache_and_is_deterministic():
    net = random_network(8, RngStream(6), density=0.4)
    mask = ObservationMask.full(8, "undirected")
    hp, opts = IlaHyperParams(), SamplerOptions()
    st, cache = lfrm_sequential_init(net, mask, hp, opts, RngStream(7))
    off = ~np.eye(8, dtype=bool)
    assert np.abs(cache.eta - LfrmCache(st).eta)[off].max() < 1e-9
    st.validate()
    a = run_lfrm_chain(net, mask, hp, opts, 6, 2, 2, RngStream(8))
    b = run_lfrm_chain(net, mask, hp, opts, 6, 2, 2, RngStream(8))
    assert [e.iteration for e in a] == [4, 6]
    for x, y in zip(a, b):
        assert np.array_equal(x.state.Z, y.state.Z) and np.array_equal(x.state.W, y.state.W)
        assert x.log_joint == y.log_joint
