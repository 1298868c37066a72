import itertools
import math

import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss
from scipy import stats
from scipy.integrate import quad

from ilanet.graph import Network, ObservationMask
from ilanet.mcmc import RngStream
from ilanet.model import BiasChange, IlaState, WeightChange, ZFlip, pad_weights


def random_state(n, rng, n_features=3, max_k=3, p_on=0.6, scale=1.5, s=None):
    """Valid random IlaState: every feature has >= 1 member and compact subcluster labels."""
    c = np.zeros((n, n_features), dtype=np.int64)
    wpad = []
    for m in range(n_features):
        on = rng.gen.random(n) < p_on
        if not on.any():
            on[rng.integers(0, n)] = True
        k = int(rng.integers(1, max_k + 1))
        labels = rng.gen.integers(1, k + 1, size=on.sum())
        _, labels = np.unique(labels, return_inverse=True)
        c[on, m] = labels.ravel() + 1
        K = int(c[:, m].max())
        wpad.append(pad_weights(rng.gaussians((K, K), scale)))
    s = rng.gaussian(0.0, 1.0) if s is None else s
    return IlaState(c, wpad, s, alpha=1.0, gamma=1.0)


def random_change(st, r):
    kind = r.integers(0, 3)
    if kind == 0:
        m = int(r.integers(0, st.M))
        return ZFlip(int(r.integers(0, st.n_nodes)), m, int(r.integers(0, st.K[m] + 1)))
    if kind == 1:
        m = int(r.integers(0, st.M))
        return WeightChange(m, int(r.integers(1, st.K[m] + 1)), int(r.integers(1, st.K[m] + 1)),
                            r.gaussian(0.0, 2.0))
    return BiasChange(r.gaussian(0.0, 2.0))


def random_network(n, rng, mode="undirected", density=0.3):
    adj = (rng.gen.random((n, n)) < density).astype(np.int8)
    if mode == "undirected":
        adj = np.triu(adj, 1)
        adj = adj | adj.T
    return Network(n, mode, adj)


def full_mask(n, mode="undirected"):
    return ObservationMask.full(n, mode)


def mc_ok(freq, p, n, k=4.0):
    """Empirical frequency within k Monte-Carlo standard errors of p."""
    se = np.sqrt(max(p * (1 - p), 1e-12) / n)
    return abs(freq - p) <= k * se


def gh_expect(f, dims, deg=40):
    """E[f(u)] for u ~ N(0, I_dims) by product Gauss-Hermite quadrature."""
    x, w = hermegauss(deg)
    w = w / math.sqrt(2 * math.pi)
    total = 0.0
    for idx in itertools.product(range(deg), repeat=dims):
        total += np.prod(w[list(idx)]) * f(x[list(idx)])
    return total


def softmax(v):
    v = np.asarray(v, dtype=float)
    e = np.exp(v - v.max())
    return e / e.sum()


def quad_block_loglik(c, net, mask, beta):
    """Sum over blocks of log integral eta^n (1 - eta)^nbar Beta(eta; beta, beta) d eta."""
    K = c.max() + 1
    n1 = np.zeros((K, K))
    n0 = np.zeros((K, K))
    for i, j in mask.pairs():
        a, b = c[i], c[j]
        if net.mode == "undirected" and a > b:
            a, b = b, a
        if net.adjacency[i, j]:
            n1[a, b] += 1
        else:
            n0[a, b] += 1
    total = 0.0
    for a in range(K):
        for b in range(K):
            if n1[a, b] + n0[a, b] == 0:
                continue
            f = lambda e, x=n1[a, b], y=n0[a, b]: e ** x * (1 - e) ** y * stats.beta.pdf(e, beta, beta)  # noqa: E731
            total += math.log(quad(f, 0, 1, epsabs=0, epsrel=1e-11, limit=200)[0])
    return total


@pytest.fixture
def rng():
    return RngStream(12345)
