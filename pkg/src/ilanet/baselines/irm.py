"""Infinite relational model with the block link probabilities integrated out.

Cluster labels are 0-based here. In undirected mode blocks are unordered
cluster pairs; in directed mode they are ordered.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln

from ..errors import InvalidArgument, InvalidState
from ..mcmc import sigmoid, slice_sample
from ..model import log_crp_mass, log_gamma_density, sample_crp
from ..sampler import PairData, SamplerTrace, TraceEntry, check_chain_lengths, keep_iteration


@dataclass
class IrmState:
    c: np.ndarray
    gamma: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.int64)

    @property
    def K(self):
        return int(self.c.max()) + 1 if self.c.size else 0

    @property
    def n_nodes(self):
        return len(self.c)

    def copy(self):
        return IrmState(self.c.copy(), self.gamma, self.beta)

    def validate(self):
        if self.c.min() < 0 or (np.bincount(self.c) == 0).any():
            raise InvalidState("IRM cluster labels must be 0..K-1 with every cluster occupied")
        if not (self.gamma > 0 and self.beta > 0):
            raise InvalidState("gamma and beta must be positive")


@dataclass
class IrmOptions:
    n_restricted: int = 5
    n_split_merge: int = 1
    width_gamma: float = 1.0
    gamma_shape: float = 1.0
    gamma_rate: float = 1.0


class BlockCounts:
    """Link / non-link counts per block, maintained under single-object moves."""

    def __init__(self, c, data, directed):
        self.data = data
        self.directed = directed
        self.c = np.asarray(c, dtype=np.int64).copy()
        K = int(self.c.max()) + 1 if len(self.c) else 0
        self.sizes = np.bincount(self.c[data.active], minlength=K).astype(np.int64)
        self.n1 = np.zeros((K, K))
        self.n0 = np.zeros((K, K))
        a, b = self.c[data.pi], self.c[data.pj]
        link = data.sgn > 0
        np.add.at(self.n1, (a[link], b[link]), 1)
        np.add.at(self.n0, (a[~link], b[~link]), 1)
        if not directed:
            self.n1 = self.n1 + self.n1.T - np.diag(np.diag(self.n1))
            self.n0 = self.n0 + self.n0.T - np.diag(np.diag(self.n0))
        self._r_out = [(s > 0).astype(float) for s in data.out_sgn]
        self._r_in = [(s > 0).astype(float) for s in data.in_sgn]

    @property
    def K(self):
        return len(self.sizes)

    def node_counts(self, i):
        d = self.data
        K = self.K
        co, ci = self.c[d.out_idx[i]], self.c[d.in_idx[i]]
        lo = np.bincount(co, weights=self._r_out[i], minlength=K)
        no = np.bincount(co, minlength=K) - lo
        li = np.bincount(ci, weights=self._r_in[i], minlength=K)
        ni = np.bincount(ci, minlength=K) - li
        return lo, no, li, ni

    def _apply(self, a, counts, sign):
        lo, no, li, ni = counts
        if self.directed:
            self.n1[a, :] += sign * lo
            self.n0[a, :] += sign * no
            self.n1[:, a] += sign * li
            self.n0[:, a] += sign * ni
        else:
            l, nl = lo + li, no + ni
            self.n1[a, :] += sign * l
            self.n1[:, a] += sign * l
            self.n1[a, a] -= sign * l[a]
            self.n0[a, :] += sign * nl
            self.n0[:, a] += sign * nl
            self.n0[a, a] -= sign * nl[a]

    def remove(self, i):
        """Take object i out; returns its per-cluster counts (computed before removal)."""
        a = int(self.c[i])
        counts = self.node_counts(i)
        self._apply(a, counts, -1.0)
        self.sizes[a] -= 1
        self.c[i] = -1
        return counts

    def add(self, i, a, counts=None):
        if a == self.K:
            self.sizes = np.append(self.sizes, 0)
            K = self.K
            for name in ("n1", "n0"):
                grown = np.zeros((K, K))
                grown[:K - 1, :K - 1] = getattr(self, name)
                setattr(self, name, grown)
            if counts is not None:
                counts = tuple(np.append(x, 0.0) for x in counts)
        if counts is None:
            counts = self.node_counts(i)
        self.c[i] = a
        self._apply(a, counts, 1.0)
        self.sizes[a] += 1

    def drop_cluster(self, a):
        if self.sizes[a] != 0:
            raise InvalidState(f"cluster {a} is not empty")
        keep = [k for k in range(self.K) if k != a]
        self.sizes = self.sizes[keep]
        self.n1 = self.n1[np.ix_(keep, keep)]
        self.n0 = self.n0[np.ix_(keep, keep)]
        self.c[self.c > a] -= 1

    def join_scores(self, counts, beta, targets=None):
        """Log collapsed-likelihood gain of placing the removed object in each cluster, plus a new one
        (last entry). ``targets`` restricts the existing clusters scored."""
        lo, no, li, ni = counts
        K = self.K
        rows = np.arange(K) if targets is None else np.asarray(targets)

        def gain(x1, x0, d1, d0):
            return betaln(x1 + d1 + beta, x0 + d0 + beta) - betaln(x1 + beta, x0 + beta)

        n1, n0 = self.n1[rows], self.n0[rows]
        if self.directed:
            s = gain(n1, n0, lo[None, :], no[None, :]).sum(axis=1)
            n1t, n0t = self.n1[:, rows].T, self.n0[:, rows].T
            s += gain(n1t, n0t, li[None, :], ni[None, :]).sum(axis=1)
            d1, d0 = self.n1[rows, rows], self.n0[rows, rows]
            s += (gain(d1, d0, lo[rows] + li[rows], no[rows] + ni[rows])
                  - gain(d1, d0, lo[rows], no[rows]) - gain(d1, d0, li[rows], ni[rows]))
            new = (gain(0.0, 0.0, lo, no) + gain(0.0, 0.0, li, ni)).sum()
        else:
            l, nl = lo + li, no + ni
            s = gain(n1, n0, l[None, :], nl[None, :]).sum(axis=1)
            new = gain(0.0, 0.0, l, nl).sum()
        return s, float(new)

    def loglik(self, beta):
        if self.K == 0:
            return 0.0
        terms = betaln(self.n1 + beta, self.n0 + beta) - betaln(beta, beta)
        if not self.directed:
            terms = np.triu(terms)
        return float(terms.sum())


def _data(net, mask, data=None):
    return PairData(net, mask) if data is None else data


def irm_collapsed_loglik(state, net, mask, data=None):
    data = _data(net, mask, data)
    return BlockCounts(state.c, data, net.mode == "directed").loglik(state.beta)


def irm_block_counts(state, net, mask):
    bc = BlockCounts(state.c, PairData(net, mask), net.mode == "directed")
    return bc.n1, bc.n0


def irm_log_joint(state, net, mask, opts=None, data=None):
    opts = IrmOptions() if opts is None else opts
    state.validate()
    return (irm_collapsed_loglik(state, net, mask, data)
            + log_crp_mass(np.bincount(state.c), state.gamma)
            + log_gamma_density(state.gamma, opts.gamma_shape, opts.gamma_rate))


def _crp_gamma_logf(n_clusters, n, opts):
    def logf(u):
        g = math.exp(u)
        return ((opts.gamma_shape + n_clusters) * u - opts.gamma_rate * g
                + gammaln(g) - gammaln(g + n))
    return logf


def irm_gibbs_site(bc, i, beta, gamma, rng):
    """Resample object i's cluster from its exact collapsed conditional; labels stay compact."""
    old = int(bc.c[i])
    counts = bc.remove(i)
    if bc.sizes[old] == 0:
        bc.drop_cluster(old)
        counts = tuple(np.delete(x, old) for x in counts)
    s, new = bc.join_scores(counts, beta)
    logw = np.append(np.log(bc.sizes) + s, math.log(gamma) + new)
    choice = rng.categorical(logw)
    bc.add(i, choice, counts)
    return choice


def irm_gibbs_sweep(state, net, mask, rng, opts=None, data=None):
    """Single-site collapsed Gibbs over every assignment, then a slice update of gamma."""
    opts = IrmOptions() if opts is None else opts
    data = _data(net, mask, data)
    bc = BlockCounts(state.c, data, net.mode == "directed")
    for i in data.active:
        irm_gibbs_site(bc, i, state.beta, state.gamma, rng)
    state.c = bc.c.copy()
    u = slice_sample(_crp_gamma_logf(bc.K, data.n_active, opts), math.log(state.gamma), rng,
                     opts.width_gamma)
    state.gamma = math.exp(u)
    return state


def _log_post(c, data, beta, gamma, directed):
    bc = BlockCounts(c, data, directed)
    return bc.loglik(beta) + log_crp_mass(bc.sizes, gamma)


def _relabel(c):
    _, inv = np.unique(c, return_inverse=True)
    return inv.astype(np.int64)


def irm_split_merge(state, net, mask, n_restricted, rng, data=None):
    """One Jain-Neal split-merge proposal using restricted Gibbs launch states."""
    data = _data(net, mask, data)
    directed = net.mode == "directed"
    nodes = data.active
    if len(nodes) < 2:
        raise InvalidArgument("split-merge needs at least two objects")
    i, j = (int(x) for x in nodes[rng.gen.choice(len(nodes), size=2, replace=False)])
    c = state.c
    ci, cj = int(c[i]), int(c[j])
    S = [int(k) for k in nodes if k != i and k != j and c[k] in (ci, cj)]
    split = ci == cj

    # launch: i keeps a fresh label, j its own; S randomly distributed
    launch = c.copy()
    lab_i = int(c.max()) + 1 if split else ci
    lab_j = cj
    launch[i] = lab_i
    for k in S:
        launch[k] = lab_i if rng.uniform() < 0.5 else lab_j
    launch = _relabel(launch)
    bc = BlockCounts(launch, data, directed)

    def scan(target=None):
        """Restricted Gibbs scan over S; returns log-probability of the assignments made
        (or of ``target``'s assignments when given)."""
        logq = 0.0
        for k in S:
            li_, lj_ = int(bc.c[i]), int(bc.c[j])
            counts = bc.remove(k)
            s, _ = bc.join_scores(counts, state.beta, targets=[li_, lj_])
            logw = np.log(bc.sizes[[li_, lj_]]) + s
            logw = np.where(bc.sizes[[li_, lj_]] > 0, logw, -np.inf)
            logw -= np.logaddexp(logw[0], logw[1])
            if target is None:
                pick = rng.categorical(logw)
            else:
                pick = 0 if target[k] == target[i] else 1
            logq += logw[pick]
            bc.add(k, li_ if pick == 0 else lj_, counts)
        return logq

    for _ in range(n_restricted):
        scan()

    if split:
        logq = scan()
        proposal = bc.c.copy()
        cur_lp = _log_post(c, data, state.beta, state.gamma, directed)
        new_lp = _log_post(proposal, data, state.beta, state.gamma, directed)
        log_acc = new_lp - cur_lp - logq
    else:
        logq = scan(target=c)
        proposal = c.copy()
        proposal[proposal == cj] = ci
        proposal = _relabel(proposal)
        cur_lp = _log_post(c, data, state.beta, state.gamma, directed)
        new_lp = _log_post(proposal, data, state.beta, state.gamma, directed)
        log_acc = new_lp - cur_lp + logq
    accepted = math.log(rng.uniform()) < log_acc
    if accepted:
        state.c = _relabel(proposal)
    return accepted


def irm_predictive(state, net, mask, pairs, data=None):
    """Posterior-mean link probability (n + beta) / (n + nbar + 2 beta) for each (i, j)."""
    data = _data(net, mask, data)
    bc = BlockCounts(state.c, data, net.mode == "directed")
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    a, b = state.c[pairs[:, 0]], state.c[pairs[:, 1]]
    n1, n0 = bc.n1[a, b], bc.n0[a, b]
    return (n1 + state.beta) / (n1 + n0 + 2 * state.beta)


def irm_logistic_link_prob(c, W, s, i, j):
    """Logistic-parameterised IRM: sigmoid(W[c_i, c_j] + s)."""
    if i == j:
        raise InvalidArgument("link probability undefined for i == j")
    return sigmoid(W[c[i], c[j]] + s)


def irm_sample_prior(n_nodes, rng, gamma=None, beta=1.0, opts=None):
    opts = IrmOptions() if opts is None else opts
    gamma = rng.gamma(opts.gamma_shape, opts.gamma_rate) if gamma is None else gamma
    return IrmState(sample_crp(n_nodes, gamma, rng) - 1, gamma, beta)


def irm_generate(state, mode, rng):
    """Draw block probabilities from Beta(beta, beta) and then the network."""
    from ..graph import Network, valid_pair_matrix
    K = state.K
    eta = rng.gen.beta(state.beta, state.beta, size=(K, K))
    if mode == "undirected":
        eta = np.triu(eta) + np.triu(eta, 1).T
    n = state.n_nodes
    p = eta[state.c[:, None], state.c[None, :]]
    adj = (rng.gen.random((n, n)) < p) & valid_pair_matrix(n, mode)
    if mode == "undirected":
        adj = adj | adj.T
    return Network(n, mode, adj.astype(np.int8))


def irm_sweep(state, net, mask, rng, opts=None, data=None):
    opts = IrmOptions() if opts is None else opts
    data = _data(net, mask, data)
    irm_gibbs_sweep(state, net, mask, rng, opts, data)
    for _ in range(opts.n_split_merge):
        irm_split_merge(state, net, mask, opts.n_restricted, rng, data)
    return state


def run_irm_chain(net, mask, n_iters, burn_in, thin, rng, opts=None, beta=1.0, progress=None):
    """Random CRP initialisation (no sequential insertion), then Gibbs + split-merge sweeps."""
    check_chain_lengths(n_iters, burn_in, thin)
    opts = IrmOptions() if opts is None else opts
    data = PairData(net, mask)
    state = irm_sample_prior(net.n_nodes, rng, gamma=1.0, beta=beta)
    trace = SamplerTrace(thin=thin, burn_in=burn_in, model_tag="irm",
                         seed=rng.seed, stream_id=rng.stream_id)
    for t in range(1, n_iters + 1):
        irm_sweep(state, net, mask, rng, opts, data)
        if keep_iteration(t, burn_in, thin) or progress is not None:
            lj = irm_log_joint(state, net, mask, opts, data)
            if keep_iteration(t, burn_in, thin):
                trace.entries.append(TraceEntry(t, state.copy(), lj, rng.get_state()))
            if progress is not None:
                progress(t, state, lj)
    return trace
