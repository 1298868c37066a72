"""Latent feature relational model: IBP features with a dense feature-by-feature weight matrix."""
import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument, InvalidState
from ..mcmc import sigmoid, slice_sample
from ..model import (bernoulli_loglik, harmonic, log_gamma_density, log_ibp_mass,
                     log_normal_density, sample_ibp)
from ..sampler import (PairData, SamplerTrace, TraceEntry, _truncated_poisson,
                       check_chain_lengths, keep_iteration, sequential_init)


@dataclass
class LfrmState:
    Z: np.ndarray
    W: np.ndarray
    s: float
    alpha: float = 1.0

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=np.int8)
        self.W = np.asarray(self.W, dtype=float).reshape(self.Z.shape[1], self.Z.shape[1])

    @property
    def n_nodes(self):
        return self.Z.shape[0]

    @property
    def M(self):
        return self.Z.shape[1]

    def copy(self):
        return LfrmState(self.Z.copy(), self.W.copy(), self.s, self.alpha)

    def validate(self):
        if self.M and (self.Z.sum(axis=0) == 0).any():
            raise InvalidState("LFRM state has an empty feature column")
        if self.W.shape != (self.M, self.M):
            raise InvalidState("weight matrix does not match the number of features")


class LfrmCache:
    def __init__(self, state):
        Zf = state.Z.astype(float)
        self.eta = Zf @ state.W @ Zf.T + state.s


def lfrm_link_logit(state, i, j):
    if i == j:
        raise InvalidArgument("link probability undefined for i == j")
    acc = 0.0
    zi, zj = state.Z[i], state.Z[j]
    for k in range(state.M):
        if zi[k]:
            for l in range(state.M):
                if zj[l]:
                    acc += state.W[k, l]
    return acc + state.s


def lfrm_link_prob(state, i, j):
    return sigmoid(lfrm_link_logit(state, i, j))


def lfrm_log_likelihood(state, net, mask, cache=None):
    eta = LfrmCache(state).eta if cache is None else cache.eta
    obs = mask.observed
    return bernoulli_loglik(eta[obs], net.adjacency[obs])


def lfrm_log_joint(state, net, mask, hp, cache=None):
    state.validate()
    return (lfrm_log_likelihood(state, net, mask, cache)
            + log_ibp_mass(state.Z, state.alpha)
            + log_normal_density(state.W, 0.0, hp.sigma_w)
            + log_normal_density(state.s, hp.mu_s, hp.sigma_s)
            + log_gamma_density(state.alpha, hp.alpha_shape, hp.alpha_rate))


def lfrm_predictive(state, pairs):
    eta = LfrmCache(state).eta
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    return 1.0 / (1.0 + np.exp(-eta[pairs[:, 0], pairs[:, 1]]))


def lfrm_sample_prior(n_nodes, hp, rng, alpha=None, s=None):
    alpha = rng.gamma(hp.alpha_shape, hp.alpha_rate) if alpha is None else alpha
    s = rng.gaussian(hp.mu_s, hp.sigma_s) if s is None else s
    Z = sample_ibp(n_nodes, alpha, rng)
    W = rng.gaussians((Z.shape[1], Z.shape[1]), hp.sigma_w)
    return LfrmState(Z, W, s, alpha)


def _z_entry(state, cache, data, i, k, hp, opts, rng):
    Z = state.Z
    cur = int(Z[i, k])
    n_minus = int(Z[:, k].sum()) - cur
    if n_minus == 0:
        return
    p_on = n_minus / (data.n_active + opts.prior_n_offset)
    oi, ii = data.out_idx[i], data.in_idx[i]
    Zf = Z.astype(float)
    a_out = Zf[oi] @ state.W[k, :]
    a_in = Zf[ii] @ state.W[:, k]
    e0o = cache.eta[i, oi] - cur * a_out
    e0i = cache.eta[ii, i] - cur * a_in
    ll0 = data.node_loglik(i, e0o, e0i)
    ll1 = data.node_loglik(i, e0o + a_out, e0i + a_in)
    new = rng.categorical([math.log1p(-p_on) + ll0, math.log(p_on) + ll1])
    if new != cur:
        d = new - cur
        cache.eta[i, :] += d * (Zf @ state.W[k, :])
        cache.eta[:, i] += d * (Zf @ state.W[:, k])
        Z[i, k] = new


def _birth(state, cache, data, i, hp, opts, rng):
    """Replace the features unique to i by Poisson(alpha/N) new ones; MH on the likelihood ratio."""
    Z = state.Z
    k_new = _truncated_poisson(state.alpha / data.n_active, opts.max_new_features, rng)
    singles = np.flatnonzero((Z[i] == 1) & (Z.sum(axis=0) == 1)) if state.M else np.array([], int)
    if k_new == 0 and len(singles) == 0:
        return
    keep = np.setdiff1d(np.arange(state.M), singles)
    Kk = len(keep)
    rows = rng.gaussians((k_new, Kk), hp.sigma_w)
    cols = rng.gaussians((Kk, k_new), hp.sigma_w)
    corner = rng.gaussians((k_new, k_new), hp.sigma_w)
    Zf = Z.astype(float)
    Zk = Zf[:, keep]
    # change to i's logits: drop the rows/columns of its singletons, add the new ones
    d_out = Zk @ rows.sum(axis=0) - Zf @ state.W[singles, :].sum(axis=0)
    d_in = Zk @ cols.sum(axis=1) - Zf @ state.W[:, singles].sum(axis=1)
    oi, ii = data.out_idx[i], data.in_idx[i]
    eo, ei = cache.eta[i, oi], cache.eta[ii, i]
    log_ratio = data.node_loglik(i, eo + d_out[oi], ei + d_in[ii]) - data.node_loglik(i, eo, ei)
    if log_ratio < 0 and math.log(rng.uniform()) >= log_ratio:
        return
    K2 = Kk + k_new
    W2 = np.empty((K2, K2))
    W2[:Kk, :Kk] = state.W[np.ix_(keep, keep)]
    W2[Kk:, :Kk] = rows
    W2[:Kk, Kk:] = cols
    W2[Kk:, Kk:] = corner
    Z2 = np.zeros((state.n_nodes, K2), dtype=np.int8)
    Z2[:, :Kk] = Z[:, keep]
    Z2[i, Kk:] = 1
    cache.eta[i, :] += d_out
    cache.eta[:, i] += d_in
    state.Z, state.W = Z2, W2


def _slice_w(state, cache, data, hp, opts, rng):
    Z = state.Z.astype(bool)
    sw2 = hp.sigma_w ** 2
    eta_p = cache.eta[data.pi, data.pj]
    zi, zj = Z[data.pi], Z[data.pj]
    for k in range(state.M):
        rows_k = np.flatnonzero(Z[:, k])
        for l in range(state.M):
            idx = np.flatnonzero(zi[:, k] & zj[:, l])
            old = state.W[k, l]
            base = eta_p[idx] - old
            neg_sg = -data.sgn[idx]

            def logf(x, base=base, neg_sg=neg_sg):
                return -0.5 * x * x / sw2 - np.logaddexp(0.0, neg_sg * (base + x)).sum()
            new = slice_sample(logf, old, rng, opts.width_w, opts.max_stepout)
            delta = new - old
            state.W[k, l] = new
            eta_p[idx] += delta
            cache.eta[np.ix_(rows_k, np.flatnonzero(Z[:, l]))] += delta


def _slice_alpha_s(state, cache, data, hp, opts, rng):
    M, h = state.M, harmonic(data.n_active)

    def logf_alpha(u):
        return (hp.alpha_shape + M) * u - (hp.alpha_rate + h) * math.exp(u)
    state.alpha = math.exp(slice_sample(logf_alpha, math.log(state.alpha), rng,
                                        opts.width_alpha, opts.max_stepout))
    old = state.s
    base = cache.eta[data.pi, data.pj] - old
    neg_sg = -data.sgn
    mu, var = hp.mu_s, hp.sigma_s ** 2

    def logf_s(x):
        return -0.5 * (x - mu) ** 2 / var - np.logaddexp(0.0, neg_sg * (base + x)).sum()
    new = slice_sample(logf_s, old, rng, opts.width_s, opts.max_stepout)
    cache.eta += new - old
    state.s = new


def lfrm_sweep(state, cache, data, hp, opts, rng):
    """Gibbs over Z with feature birth per object, then W elementwise, alpha and s."""
    for i in data.active:
        for k in range(state.M):
            _z_entry(state, cache, data, i, k, hp, opts, rng)
        _birth(state, cache, data, i, hp, opts, rng)
    _slice_w(state, cache, data, hp, opts, rng)
    _slice_alpha_s(state, cache, data, hp, opts, rng)


def lfrm_sequential_init(net, mask, hp, opts, rng):
    state = LfrmState(np.zeros((net.n_nodes, 0), dtype=np.int8), np.zeros((0, 0)), hp.mu_s, 1.0)
    return sequential_init(net, mask, hp, opts, rng, sweep_fn=lfrm_sweep, state=state,
                           cache_fn=LfrmCache)


def run_lfrm_chain(net, mask, hp, opts, n_iters, burn_in, thin, rng, progress=None):
    check_chain_lengths(n_iters, burn_in, thin)
    state, cache = lfrm_sequential_init(net, mask, hp, opts, rng)
    data = PairData(net, mask)
    trace = SamplerTrace(thin=thin, burn_in=burn_in, model_tag="lfrm",
                         seed=rng.seed, stream_id=rng.stream_id)
    for t in range(1, n_iters + 1):
        lfrm_sweep(state, cache, data, hp, opts, rng)
        if keep_iteration(t, burn_in, thin) or progress is not None:
            lj = lfrm_log_joint(state, net, mask, hp, cache)
            if keep_iteration(t, burn_in, thin):
                trace.entries.append(TraceEntry(t, state.copy(), lj, rng.get_state()))
            if progress is not None:
                progress(t, state, lj)
    return trace
