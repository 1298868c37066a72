"""ILA parameter state, link logits with an incremental cache, likelihood and log-joint."""
from collections import Counter
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.special import gammaln

from .errors import InvalidArgument, InvalidState
from .mcmc import sigmoid

# Instrumentation: weight lookups performed while building or updating logits.
COUNTERS = {"weight_lookups": 0}


def reset_counters():
    for k in COUNTERS:
        COUNTERS[k] = 0


@dataclass
class IlaHyperParams:
    sigma_w: float = 1.0
    mu_s: float = -1.0
    sigma_s: float = 4.0
    alpha_shape: float = 1.0
    alpha_rate: float = 1.0
    gamma_shape: float = 1.0
    gamma_rate: float = 1.0
    # finite beta-Bernoulli prior over exactly this many columns instead of the IBP
    fixed_m: Optional[int] = None

    def __post_init__(self):
        if not (self.sigma_w > 0 and self.sigma_s > 0):
            raise InvalidArgument("sigma_w and sigma_s must be positive")
        if self.fixed_m is not None and self.fixed_m < 1:
            raise InvalidArgument("fixed_m must be a positive integer")


def pad_weights(w):
    """K x K weights -> (K+1) x (K+1) with a zero row and column at index 0.

    Subcluster 0 means "feature off", so indexing the padded matrix with
    assignment vectors directly gives each pair's contribution.
    """
    w = np.asarray(w, dtype=float)
    K = w.shape[0]
    out = np.zeros((K + 1, K + 1))
    out[1:, 1:] = w
    return out


class IlaState:
    """Z, C, W, bias and concentrations for one ILA configuration.

    ``c[i, m]`` is the subcluster of object i in feature m (0 when the
    feature is off), so Z is ``c > 0``. ``wpad[m]`` holds feature m's weight
    matrix padded as in :func:`pad_weights`.
    """

    def __init__(self, c, wpad, s, alpha, gamma):
        self.c = np.asarray(c, dtype=np.int64)
        if self.c.ndim != 2:
            raise InvalidArgument("assignment matrix must be 2-D (N x M)")
        self.wpad = list(wpad)
        self.s = float(s)
        self.alpha = float(alpha)
        self.gamma = float(gamma)

    @classmethod
    def empty(cls, n_nodes, s=0.0, alpha=1.0, gamma=1.0):
        return cls(np.zeros((n_nodes, 0), dtype=np.int64), [], s, alpha, gamma)

    @classmethod
    def from_blocks(cls, c, weights, s, alpha=1.0, gamma=1.0):
        return cls(c, [pad_weights(w) for w in weights], s, alpha, gamma)

    @property
    def n_nodes(self):
        return self.c.shape[0]

    @property
    def M(self):
        return self.c.shape[1]

    @property
    def Z(self):
        return (self.c > 0).astype(np.int8)

    @property
    def K(self):
        return [w.shape[0] - 1 for w in self.wpad]

    def W(self, m):
        return self.wpad[m][1:, 1:]

    def counts(self, m):
        return np.bincount(self.c[:, m], minlength=self.wpad[m].shape[0])

    def copy(self):
        return IlaState(self.c.copy(), [w.copy() for w in self.wpad], self.s, self.alpha, self.gamma)

    def validate(self, allow_empty_features=False):
        if len(self.wpad) != self.M:
            raise InvalidState(f"{len(self.wpad)} weight matrices for {self.M} features")
        if not (self.alpha > 0 and self.gamma > 0):
            raise InvalidState("alpha and gamma must be positive")
        for m, w in enumerate(self.wpad):
            K = w.shape[0] - 1
            if w.shape != (K + 1, K + 1) or w[0].any() or w[:, 0].any():
                raise InvalidState(f"feature {m}: malformed padded weight matrix")
            col = self.c[:, m]
            if col.min() < 0 or col.max() > K:
                raise InvalidState(f"feature {m}: subcluster index outside 0..{K}")
            n = np.bincount(col, minlength=K + 1)
            if (n[1:] == 0).any():
                raise InvalidState(f"feature {m}: empty subcluster retained")
            if n[1:].sum() == 0 and not allow_empty_features:
                raise InvalidState(f"feature {m}: no active objects")

    # structural edits used by the samplers ----------------------------

    def add_feature(self, column, wpad):
        """Append a feature given its assignment column and padded weight matrix."""
        column = np.asarray(column, dtype=np.int64).reshape(-1, 1)
        self.c = np.hstack([self.c, column])
        self.wpad.append(np.asarray(wpad, dtype=float))

    def drop_features(self, ms):
        ms = sorted(set(ms))
        if not ms:
            return
        keep = [m for m in range(self.M) if m not in ms]
        self.c = np.ascontiguousarray(self.c[:, keep])
        self.wpad = [self.wpad[m] for m in keep]

    def drop_subcluster(self, m, k):
        """Remove an empty subcluster k >= 1 of feature m and relabel the ones above it."""
        col = self.c[:, m]
        if (col == k).any():
            raise InvalidState(f"subcluster {k} of feature {m} is not empty")
        col[col > k] -= 1
        w = self.wpad[m]
        keep = [r for r in range(w.shape[0]) if r != k]
        self.wpad[m] = w[np.ix_(keep, keep)]


# ---------------------------------------------------------------- logits

def build_logits(state):
    """Full N x N logit matrix, eta[i, j] = s + sum_m w^(m)[c_i, c_j] (diagonal meaningless)."""
    n = state.n_nodes
    eta = np.full((n, n), state.s)
    for m in range(state.M):
        col = state.c[:, m]
        eta += state.wpad[m][col[:, None], col[None, :]]
    COUNTERS["weight_lookups"] += state.M * n * n
    return eta


def link_logit(state, i, j):
    if i == j:
        raise InvalidArgument("link_logit is undefined for i == j")
    if not (0 <= i < state.n_nodes and 0 <= j < state.n_nodes):
        raise InvalidArgument(f"node index out of range: ({i}, {j})")
    acc = 0.0
    ci, cj = state.c[i], state.c[j]
    for m in range(state.M):
        if ci[m] and cj[m]:
            acc += state.wpad[m][ci[m], cj[m]]
    return acc + state.s


def link_prob(state, i, j):
    return sigmoid(link_logit(state, i, j))


class LogitCache:
    """Cached logits kept consistent with an IlaState through delta updates."""

    def __init__(self, eta):
        self.eta = eta

    @classmethod
    def build(cls, state):
        return cls(build_logits(state))

    def copy(self):
        return LogitCache(self.eta.copy())

    def move_node(self, i, col, w, old, new):
        """Object i moves from padded index ``old`` to ``new`` in a feature whose
        other assignments are ``col`` and padded weights ``w``."""
        if old == new:
            return
        ci = col[i]
        self.eta[i, :] += w[new, col] - w[old, col]
        self.eta[:, i] += w[col, new] - w[col, old]
        # the diagonal got both updates above; leave it equal to a rebuild
        self.eta[i, i] += (w[new, new] - w[old, old] - w[new, ci] + w[old, ci]
                           - w[ci, new] + w[ci, old])
        COUNTERS["weight_lookups"] += 4 * len(col)

    def shift_block(self, rows, cols, delta):
        self.eta[np.ix_(rows, cols)] += delta

    def shift_bias(self, delta):
        self.eta += delta


@dataclass
class ZFlip:
    """Set c_i^(m) to ``new_c`` (0 turns the feature off); covers flips and reassignments."""
    i: int
    m: int
    new_c: int


@dataclass
class WeightChange:
    m: int
    k: int
    k2: int
    value: float


@dataclass
class BiasChange:
    value: float


def cache_delta(cache, state, change):
    """Apply ``change`` to ``state`` and update ``cache`` touching only affected entries."""
    if isinstance(change, ZFlip):
        if not (0 <= change.m < state.M and 0 <= change.i < state.n_nodes):
            raise InvalidArgument(f"no entry ({change.i}, {change.m})")
        w = state.wpad[change.m]
        if not 0 <= change.new_c < w.shape[0]:
            raise InvalidArgument(f"subcluster {change.new_c} does not exist in feature {change.m}")
        col = state.c[:, change.m]
        old = int(col[change.i])
        col[change.i] = change.new_c
        cache.move_node(change.i, col, w, old, change.new_c)
    elif isinstance(change, WeightChange):
        if not 0 <= change.m < state.M:
            raise InvalidArgument(f"no feature {change.m}")
        w = state.wpad[change.m]
        if not (1 <= change.k < w.shape[0] and 1 <= change.k2 < w.shape[0]):
            raise InvalidArgument(f"no weight ({change.k}, {change.k2}) in feature {change.m}")
        delta = change.value - w[change.k, change.k2]
        w[change.k, change.k2] = change.value
        col = state.c[:, change.m]
        cache.shift_block(np.flatnonzero(col == change.k), np.flatnonzero(col == change.k2), delta)
    elif isinstance(change, BiasChange):
        cache.shift_bias(change.value - state.s)
        state.s = float(change.value)
    else:
        raise InvalidArgument(f"unknown change descriptor {change!r}")
    return cache


# ------------------------------------------------------- likelihood / prior

def bernoulli_loglik(eta, r):
    """Sum of log Bernoulli(r | sigmoid(eta)) terms."""
    sgn = 2.0 * np.asarray(r, dtype=float) - 1.0
    return -float(np.logaddexp(0.0, -sgn * eta).sum())


def log_likelihood(state, net, mask, cache=None):
    if net.n_nodes != state.n_nodes or mask.n_nodes != state.n_nodes:
        raise InvalidArgument("state, network and mask sizes disagree")
    eta = cache.eta if cache is not None else build_logits(state)
    obs = mask.observed
    return bernoulli_loglik(eta[obs], net.adjacency[obs])


def harmonic(n):
    return float(np.sum(1.0 / np.arange(1, n + 1))) if n > 0 else 0.0


def log_ibp_mass(Z, alpha):
    """Log probability of the left-ordered equivalence class of binary matrix Z under IBP(alpha)."""
    Z = np.asarray(Z)
    n, M = Z.shape
    lp = M * np.log(alpha) - alpha * harmonic(n)
    if M == 0:
        return float(lp)
    mk = Z.sum(axis=0)
    lp += float(np.sum(gammaln(n - mk + 1) + gammaln(mk) - gammaln(n + 1)))
    histories = Counter(Z[:, k].astype(np.int8).tobytes() for k in range(M))
    lp -= float(sum(gammaln(h + 1) for h in histories.values()))
    return float(lp)


def log_finite_feature_mass(Z, alpha):
    """Beta-Bernoulli mass of Z with exactly M = Z.shape[1] columns, pi_m ~ Beta(alpha/M, 1)."""
    Z = np.asarray(Z)
    n, M = Z.shape
    if M == 0:
        return 0.0
    a = alpha / M
    mk = Z.sum(axis=0)
    # log B(mk + a, n - mk + 1) - log B(a, 1)
    return float(np.sum(gammaln(mk + a) + gammaln(n - mk + 1) - gammaln(n + 1 + a) + np.log(a)))


def log_crp_mass(counts, gamma):
    """Log CRP probability of a partition with block sizes ``counts`` (zeros ignored)."""
    counts = np.asarray(counts)
    counts = counts[counts > 0]
    if counts.size == 0:
        return 0.0
    n = counts.sum()
    return float(counts.size * np.log(gamma) + gammaln(gamma) - gammaln(gamma + n)
                 + np.sum(gammaln(counts)))


def log_gamma_density(x, shape, rate):
    return float(shape * np.log(rate) - gammaln(shape) + (shape - 1) * np.log(x) - rate * x)


def log_normal_density(x, mu, sigma):
    x = np.asarray(x, dtype=float)
    return float(np.sum(-0.5 * ((x - mu) / sigma) ** 2 - np.log(sigma) - 0.5 * np.log(2 * np.pi)))


def log_feature_prior(state, hp):
    if hp.fixed_m is not None:
        return log_finite_feature_mass(state.Z, state.alpha)
    return log_ibp_mass(state.Z, state.alpha)


def log_prior(state, hp):
    lp = log_feature_prior(state, hp)
    for m in range(state.M):
        lp += log_crp_mass(state.counts(m)[1:], state.gamma)
        lp += log_normal_density(state.W(m), 0.0, hp.sigma_w)
    lp += log_normal_density(state.s, hp.mu_s, hp.sigma_s)
    lp += log_gamma_density(state.alpha, hp.alpha_shape, hp.alpha_rate)
    lp += log_gamma_density(state.gamma, hp.gamma_shape, hp.gamma_rate)
    return lp


def log_joint(state, net, mask, hp, cache=None):
    state.validate(allow_empty_features=hp.fixed_m is not None)
    return log_likelihood(state, net, mask, cache) + log_prior(state, hp)


# -------------------------------------------------------------- prior draws

def sample_crp(n, gamma, rng):
    """Sequential CRP seating of n customers; labels start at 1 in order of appearance."""
    labels = np.zeros(n, dtype=np.int64)
    counts: List[int] = []
    for t in range(n):
        logw = np.log(np.array(counts + [gamma], dtype=float)) if counts else np.zeros(1)
        k = rng.categorical(logw)
        if k == len(counts):
            counts.append(1)
        else:
            counts[k] += 1
        labels[t] = k + 1
    return labels


def sample_ibp(n, alpha, rng):
    """Z from the sequential Indian buffet construction."""
    cols: List[List[int]] = []
    for i in range(n):
        for col in cols:
            if rng.uniform() < sum(col) / (i + 1):
                col[i] = 1
        for _ in range(rng.poisson(alpha / (i + 1))):
            col = [0] * n
            col[i] = 1
            cols.append(col)
    return np.array(cols, dtype=np.int8).T.reshape(n, len(cols))


def sample_finite_features(n, m, alpha, rng):
    pis = rng.gen.beta(alpha / m, 1.0, size=m)
    return (rng.gen.random((n, m)) < pis[None, :]).astype(np.int8)


def sample_prior(n_nodes, hp, rng, alpha=None, gamma=None, s=None):
    """Draw a full state from the generative prior; ``alpha``/``gamma``/``s`` pin those values."""
    if n_nodes < 1:
        raise InvalidArgument("n_nodes must be >= 1")
    alpha = rng.gamma(hp.alpha_shape, hp.alpha_rate) if alpha is None else alpha
    gamma = rng.gamma(hp.gamma_shape, hp.gamma_rate) if gamma is None else gamma
    s = rng.gaussian(hp.mu_s, hp.sigma_s) if s is None else s
    if hp.fixed_m is not None:
        Z = sample_finite_features(n_nodes, hp.fixed_m, alpha, rng)
    else:
        Z = sample_ibp(n_nodes, alpha, rng)
    c = np.zeros(Z.shape, dtype=np.int64)
    wpad = []
    for m in range(Z.shape[1]):
        active = np.flatnonzero(Z[:, m])
        c[active, m] = sample_crp(len(active), gamma, rng)
        K = int(c[:, m].max())
        wpad.append(pad_weights(rng.gaussians((K, K), hp.sigma_w)))
    return IlaState(c, wpad, s, alpha, gamma)
