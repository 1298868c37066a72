"""MCMC for the ILA model.

One sweep visits every object: Gibbs updates of its shared features (with
Neal's auxiliary-subcluster scheme for the subcluster choice), then an MH
move over the features unique to it. Weights, bias and the two
concentrations are slice sampled afterwards.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.special import gammaln

from .errors import InvalidArgument
from .mcmc import DEFAULT_MAX_STEPOUT, slice_sample
from .model import (IlaState, LogitCache, harmonic, log_finite_feature_mass,
                    log_joint)

log = logging.getLogger(__name__)

COUNTERS = {"pair_touches": 0}


@dataclass
class SamplerOptions:
    n_aux: int = 3
    seq_init_iters: int = 3
    resample_c: bool = False
    width_w: float = 1.0
    width_s: float = 1.0
    width_alpha: float = 1.0
    width_gamma: float = 1.0
    max_stepout: int = DEFAULT_MAX_STEPOUT
    max_new_features: int = 4
    # Added to N in the feature-on prior n/N. Only for mutation-testing the Geweke harness.
    prior_n_offset: int = 0

    def __post_init__(self):
        if self.n_aux < 1:
            raise InvalidArgument("n_aux must be >= 1")
        if self.seq_init_iters < 1 or self.max_new_features < 0:
            raise InvalidArgument("seq_init_iters must be >= 1 and max_new_features >= 0")
        if min(self.width_w, self.width_s, self.width_alpha, self.width_gamma) <= 0:
            raise InvalidArgument("slice widths must be positive")


class PairData:
    """Observed ordered pairs among the ``active`` objects, indexed per object.

    For object i, ``out_idx[i]`` lists partners j of observed pairs (i, j) and
    ``in_idx[i]`` partners of observed pairs (j, i). Signs are 2r - 1.
    """

    def __init__(self, net, mask, active=None):
        n = net.n_nodes
        if mask.n_nodes != n:
            raise InvalidArgument("mask and network sizes differ")
        self.n = n
        self.active = np.arange(n) if active is None else np.sort(np.asarray(active, dtype=int))
        self.n_active = len(self.active)
        obs = mask.observed
        if active is not None:
            keep = np.zeros(n, dtype=bool)
            keep[self.active] = True
            obs = obs & keep[:, None] & keep[None, :]
        sgn = 2.0 * net.adjacency - 1.0
        self.pi, self.pj = np.nonzero(obs)
        self.sgn = sgn[self.pi, self.pj]
        self.out_idx = [np.flatnonzero(obs[i]) for i in range(n)]
        self.in_idx = [np.flatnonzero(obs[:, i]) for i in range(n)]
        self.out_sgn = [sgn[i, self.out_idx[i]] for i in range(n)]
        self.in_sgn = [sgn[self.in_idx[i], i] for i in range(n)]

    @property
    def n_pairs(self):
        return len(self.pi)

    def node_loglik(self, i, eta_out, eta_in):
        return -(np.logaddexp(0.0, -self.out_sgn[i] * eta_out).sum()
                 + np.logaddexp(0.0, -self.in_sgn[i] * eta_in).sum())


# ------------------------------------------------------- Z and C updates

def _feature_entry(state, cache, data, i, m, hp, opts, rng, allow_off):
    col = state.c[:, m]
    w = state.wpad[m]
    K = w.shape[0] - 1
    cur = int(col[i])
    counts = np.bincount(col, minlength=K + 1)
    if cur:
        counts[cur] -= 1
    n_minus = int(counts[1:].sum())
    fixed = hp.fixed_m is not None
    if allow_off and not fixed and n_minus == 0:
        return  # feature unique to i: owned by the birth/death move

    gamma = state.gamma
    A = opts.n_aux
    reuse = cur > 0 and counts[cur] == 0
    n_fresh = A - 1 if reuse else A
    Kx = K + 1 + n_fresh
    wx = np.zeros((Kx, Kx))
    wx[:K + 1, :K + 1] = w
    sw = hp.sigma_w
    for t in range(K + 1, Kx):
        wx[t, 1:K + 1] = rng.gaussians(K, sw)
        wx[1:K + 1, t] = rng.gaussians(K, sw)
        wx[t, t] = rng.gaussian(0.0, sw)

    log_new = math.log(gamma / A) - math.log(n_minus + gamma)
    options = []
    logp = []
    if allow_off:
        if fixed:
            a = state.alpha / hp.fixed_m
            p_on = (n_minus + a) / (data.n_active + a)
        else:
            p_on = n_minus / (data.n_active + opts.prior_n_offset)
        log_on = math.log(p_on)
        options.append(0)
        logp.append(math.log1p(-p_on))
    else:
        log_on = 0.0
    for k in range(1, K + 1):
        if counts[k] > 0:
            options.append(k)
            logp.append(log_on + math.log(counts[k]) - math.log(n_minus + gamma))
        elif reuse and k == cur:
            options.append(k)
            logp.append(log_on + log_new)
    for t in range(K + 1, Kx):
        options.append(t)
        logp.append(log_on + log_new)

    opt = np.array(options)
    oi, ii = data.out_idx[i], data.in_idx[i]
    co, ci = col[oi], col[ii]
    eta = cache.eta
    base_o = eta[i, oi] - w[cur, co]
    base_i = eta[ii, i] - w[ci, cur]
    lo = base_o[None, :] + wx[opt][:, co]
    li = base_i[None, :] + wx[ci][:, opt].T
    ll = -(np.logaddexp(0.0, -data.out_sgn[i] * lo).sum(axis=1)
           + np.logaddexp(0.0, -data.in_sgn[i] * li).sum(axis=1))
    COUNTERS["pair_touches"] += len(opt) * (len(oi) + len(ii))

    new = int(opt[rng.categorical(np.asarray(logp) + ll)])
    if new == cur:
        return
    cache.move_node(i, col, wx, cur, new)
    if new > K:
        keep = list(range(K + 1)) + [new]
        state.wpad[m] = wx[np.ix_(keep, keep)]
        col[i] = K + 1
    else:
        col[i] = new
    if cur and counts[cur] == 0:
        state.drop_subcluster(m, cur)


def sample_z_entry(state, cache, data, i, m, hp, opts, rng):
    """Gibbs update of (z_im, c_i^(m)) jointly over off / existing / auxiliary subclusters."""
    _feature_entry(state, cache, data, i, m, hp, opts, rng, allow_off=True)


def resample_c_entry(state, cache, data, i, m, hp, opts, rng):
    if state.c[i, m] == 0:
        raise InvalidArgument(f"object {i} does not hold feature {m}")
    _feature_entry(state, cache, data, i, m, hp, opts, rng, allow_off=False)


def _truncated_poisson(lam, cap, rng):
    if lam <= 0.0 or cap == 0:
        return 0
    ks = np.arange(cap + 1)
    logp = ks * math.log(lam) - gammaln(ks + 1)
    return rng.categorical(logp)


def sample_new_features(state, cache, data, i, hp, opts, rng):
    """MH move replacing the features unique to object i with Poisson(alpha/N) fresh ones.

    New weights come from the prior, so the acceptance ratio is the
    likelihood ratio. A feature held by i alone is on for no pair (i, j)
    (self-links are excluded), which makes that ratio exactly 1: the move is
    always accepted.
    """
    if hp.fixed_m is not None:
        return
    k_new = _truncated_poisson(state.alpha / data.n_active, opts.max_new_features, rng)
    if state.M:
        held = state.c > 0
        singles = np.flatnonzero(held[i] & (held.sum(axis=0) == 1))
    else:
        singles = []
    weights = [rng.gaussian(0.0, hp.sigma_w) for _ in range(k_new)]
    if len(singles) == 0 and k_new == 0:
        return
    state.drop_features(singles)
    for wv in weights:
        column = np.zeros(state.n_nodes, dtype=np.int64)
        column[i] = 1
        state.add_feature(column, np.array([[0.0, 0.0], [0.0, wv]]))


# --------------------------------------------------------- slice moves

def slice_weights(state, cache, data, hp, opts, rng):
    sw2 = hp.sigma_w ** 2
    for m in range(state.M):
        w = state.wpad[m]
        K = w.shape[0] - 1
        if K == 0:
            continue
        col = state.c[:, m]
        members = [None] + [np.flatnonzero(col == k) for k in range(1, K + 1)]
        keys = col[data.pi] * (K + 1) + col[data.pj]
        order = np.argsort(keys, kind="stable")
        sorted_keys = keys[order]
        eta_p = cache.eta[data.pi, data.pj]
        for k in range(1, K + 1):
            for k2 in range(1, K + 1):
                key = k * (K + 1) + k2
                lo, hi = np.searchsorted(sorted_keys, [key, key + 1])
                idx = order[lo:hi]
                old = w[k, k2]
                if len(idx):
                    base = eta_p[idx] - old
                    neg_sg = -data.sgn[idx]

                    def logf(x, base=base, neg_sg=neg_sg):
                        return -0.5 * x * x / sw2 - np.logaddexp(0.0, neg_sg * (base + x)).sum()
                else:
                    def logf(x):
                        return -0.5 * x * x / sw2
                new = slice_sample(logf, old, rng, opts.width_w, opts.max_stepout)
                COUNTERS["pair_touches"] += len(idx)
                delta = new - old
                w[k, k2] = new
                if len(idx):
                    eta_p[idx] += delta
                cache.shift_block(members[k], members[k2], delta)


def _alpha_logf(state, data, hp):
    n = data.n_active
    if hp.fixed_m is not None:
        Z = state.Z[data.active]

        def logf(u):
            a = math.exp(u)
            return hp.alpha_shape * u - hp.alpha_rate * a + log_finite_feature_mass(Z, a)
        return logf
    M = state.M
    h = harmonic(n)

    def logf(u):
        a = math.exp(u)
        return (hp.alpha_shape + M) * u - (hp.alpha_rate + h) * a
    return logf


def _gamma_logf(state, hp):
    sizes = []
    n_blocks = 0
    for m in range(state.M):
        cnt = state.counts(m)[1:]
        if cnt.sum() > 0:
            sizes.append(int(cnt.sum()))
            n_blocks += int((cnt > 0).sum())
    sizes = np.array(sizes, dtype=float)

    def logf(u):
        g = math.exp(u)
        return ((hp.gamma_shape + n_blocks) * u - hp.gamma_rate * g
                + float(np.sum(gammaln(g) - gammaln(g + sizes))))
    return logf


def slice_hypers(state, cache, data, hp, opts, rng):
    """Slice-sample alpha and gamma on the log scale, then the bias s."""
    u = slice_sample(_alpha_logf(state, data, hp), math.log(state.alpha), rng,
                     opts.width_alpha, opts.max_stepout)
    state.alpha = math.exp(u)
    u = slice_sample(_gamma_logf(state, hp), math.log(state.gamma), rng,
                     opts.width_gamma, opts.max_stepout)
    state.gamma = math.exp(u)

    old = state.s
    base = cache.eta[data.pi, data.pj] - old
    neg_sg = -data.sgn
    mu, var = hp.mu_s, hp.sigma_s ** 2

    def logf(x):
        return -0.5 * (x - mu) ** 2 / var - np.logaddexp(0.0, neg_sg * (base + x)).sum()
    new = slice_sample(logf, old, rng, opts.width_s, opts.max_stepout)
    cache.shift_bias(new - old)
    state.s = new


# ------------------------------------------------------------- sweeps

def sweep(state, cache, data, hp, opts, rng):
    for i in data.active:
        for m in range(state.M):
            sample_z_entry(state, cache, data, i, m, hp, opts, rng)
        sample_new_features(state, cache, data, i, hp, opts, rng)
    if opts.resample_c:
        for i in data.active:
            for m in range(state.M):
                if state.c[i, m]:
                    resample_c_entry(state, cache, data, i, m, hp, opts, rng)
    slice_weights(state, cache, data, hp, opts, rng)
    slice_hypers(state, cache, data, hp, opts, rng)


def initial_state(n_nodes, hp):
    state = IlaState.empty(n_nodes, s=hp.mu_s, alpha=1.0, gamma=1.0)
    if hp.fixed_m is not None:
        for _ in range(hp.fixed_m):
            state.add_feature(np.zeros(n_nodes, dtype=np.int64), np.zeros((1, 1)))
    return state


def sequential_init(net, mask, hp, opts, rng, sweep_fn=None, state=None, cache_fn=None):
    """Insert objects one at a time in random order, sweeping over the inserted set in between.

    The likelihood only ever sees pairs among inserted objects. Returns
    ``(state, cache)``.
    """
    n = net.n_nodes
    if n < 2:
        raise InvalidArgument("sequential initialisation needs at least two objects")
    sweep_fn = sweep if sweep_fn is None else sweep_fn
    cache_fn = LogitCache.build if cache_fn is None else cache_fn
    order = rng.permutation(n)
    state = initial_state(n, hp) if state is None else state
    cache = cache_fn(state)
    for t in range(2, n + 1):
        data = PairData(net, mask, order[:t])
        for _ in range(opts.seq_init_iters):
            sweep_fn(state, cache, data, hp, opts, rng)
    return state, cache


@dataclass
class TraceEntry:
    iteration: int
    state: object
    log_joint: float
    rng_state: Optional[dict] = None


@dataclass
class SamplerTrace:
    entries: List[TraceEntry] = field(default_factory=list)
    thin: int = 1
    burn_in: int = 0
    model_tag: str = "ila"
    seed: Optional[int] = None
    stream_id: Optional[int] = None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def states(self):
        return [e.state for e in self.entries]


def check_chain_lengths(n_iters, burn_in, thin):
    if not n_iters > burn_in >= 0 or thin < 1:
        raise InvalidArgument("need n_iters > burn_in >= 0 and thin >= 1")


def keep_iteration(t, burn_in, thin):
    return t > burn_in and (t - burn_in) % thin == 0


def run_chain(net, mask, hp, opts, n_iters, burn_in, thin, rng,
              progress: Optional[Callable] = None):
    """Sequential initialisation followed by ``n_iters`` sweeps; checkpoints every
    ``thin``-th post-burn-in iteration (1-based)."""
    check_chain_lengths(n_iters, burn_in, thin)
    state, cache = sequential_init(net, mask, hp, opts, rng)
    data = PairData(net, mask)
    trace = SamplerTrace(thin=thin, burn_in=burn_in, model_tag="ila",
                         seed=rng.seed, stream_id=rng.stream_id)
    for t in range(1, n_iters + 1):
        sweep(state, cache, data, hp, opts, rng)
        if keep_iteration(t, burn_in, thin) or progress is not None:
            lj = log_joint(state, net, mask, hp, cache)
            if keep_iteration(t, burn_in, thin):
                trace.entries.append(TraceEntry(t, state.copy(), lj, rng.get_state()))
            if progress is not None:
                progress(t, state, lj)
    return trace


def progress_line(t, state, lj):
    ks = state.K
    summary = ",".join(str(k) for k in ks) if ks else "-"
    return f"iter={t}\tM={state.M}\tK={summary}\tlog_joint={lj:.17g}"
