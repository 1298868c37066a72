"""Random streams and numerically stable scalar helpers used by every sampler."""
import math

import numpy as np
from scipy.special import gammaln

from .errors import InvalidArgument, NumericError, SamplerStuck

DEFAULT_WIDTH = 1.0
DEFAULT_MAX_STEPOUT = 32
MAX_SHRINK = 200


class RngStream:
    """Seedable PCG64 stream; distinct ``stream_id`` values give independent substreams.

    A stream is single-owner mutable state. Parallel chains should each get
    their own ``stream_id`` (or call :meth:`spawn`).
    """

    def __init__(self, seed=0, stream_id=0):
        if seed < 0 or stream_id < 0:
            raise InvalidArgument("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def spawn(self, stream_id):
        return RngStream(self.seed, stream_id)

    # cursor access for checkpoints
    def get_state(self):
        return self.gen.bit_generator.state

    def set_state(self, state):
        self.gen.bit_generator.state = state

    def uniform(self):
        return self.gen.random()

    def gaussian(self, mu=0.0, sigma=1.0):
        if not sigma > 0:
            raise InvalidArgument(f"gaussian sigma must be > 0, got {sigma}")
        return mu + sigma * self.gen.standard_normal()

    def gaussians(self, size, sigma=1.0):
        return sigma * self.gen.standard_normal(size)

    def gamma(self, shape, rate=1.0):
        if not (shape > 0 and rate > 0):
            raise InvalidArgument(f"gamma needs shape, rate > 0, got {shape}, {rate}")
        return self.gen.standard_gamma(shape) / rate

    def poisson(self, lam):
        if not lam >= 0:
            raise InvalidArgument(f"poisson rate must be >= 0, got {lam}")
        if lam == 0:
            return 0
        return int(self.gen.poisson(lam))

    def bernoulli(self, p):
        if not 0.0 <= p <= 1.0:
            raise InvalidArgument(f"bernoulli p must lie in [0, 1], got {p}")
        return int(self.gen.random() < p)

    def categorical(self, log_weights):
        """Index drawn with probability proportional to ``exp(log_weights)``."""
        lw = np.asarray(log_weights, dtype=float)
        if lw.size == 0:
            raise InvalidArgument("categorical needs at least one weight")
        top = lw.max()
        if top == -np.inf or np.isnan(top):
            raise InvalidArgument("categorical weights are all -inf or NaN")
        p = np.exp(lw - top)
        cdf = np.cumsum(p)
        k = int(np.searchsorted(cdf, self.gen.random() * cdf[-1], side="right"))
        return min(k, lw.size - 1)

    def permutation(self, n):
        return self.gen.permutation(n)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)


def draw_standard(dist, rng):
    """Draw from a named distribution: ``("gaussian", mu, sigma)``, ``("gamma", shape, rate)``,
    ``("poisson", lam)``, ``("bernoulli", p)`` or ``("categorical", log_weights)``."""
    kind, *params = dist
    try:
        method = {
            "gaussian": rng.gaussian,
            "gamma": rng.gamma,
            "poisson": rng.poisson,
            "bernoulli": rng.bernoulli,
            "categorical": rng.categorical,
        }[kind]
    except KeyError:
        raise InvalidArgument(f"unknown distribution {kind!r}") from None
    return method(*params)


def sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def log_sigmoid(x):
    x = float(x)
    if not math.isfinite(x):
        raise InvalidArgument(f"log_sigmoid needs a finite argument, got {x}")
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def log_sum_exp(values):
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise InvalidArgument("log_sum_exp of an empty sequence")
    top = v.max()
    if top == -np.inf:
        return -np.inf
    return float(top + np.log(np.sum(np.exp(v - top))))


def log_beta_fn(a, b):
    if not (a > 0 and b > 0):
        raise InvalidArgument(f"log_beta_fn needs positive arguments, got {a}, {b}")
    return float(gammaln(a) + gammaln(b) - gammaln(a + b))


def _checked(log_density, x):
    v = log_density(x)
    if v != v:
        raise NumericError(f"log density returned NaN at {x}")
    return v


def slice_sample(log_density, x0, rng, width=DEFAULT_WIDTH, max_stepout=DEFAULT_MAX_STEPOUT,
                 fx0=None):
    """One univariate slice-sampling update (stepping out, then shrinkage).

    ``fx0`` may carry ``log_density(x0)`` if the caller already has it.
    Returns the new point.
    """
    if not width > 0:
        raise InvalidArgument(f"slice width must be > 0, got {width}")
    f0 = _checked(log_density, x0) if fx0 is None else fx0
    if not math.isfinite(f0):
        raise InvalidArgument(f"log density is not finite at the start point {x0}")
    gen = rng.gen
    level = f0 - gen.standard_exponential()

    left = x0 - width * gen.random()
    right = left + width
    j = int(max_stepout * gen.random())
    k = max_stepout - 1 - j
    while j > 0 and _checked(log_density, left) > level:
        left -= width
        j -= 1
    while k > 0 and _checked(log_density, right) > level:
        right += width
        k -= 1

    for _ in range(MAX_SHRINK):
        x1 = left + gen.random() * (right - left)
        if _checked(log_density, x1) > level:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1
    raise SamplerStuck(f"slice shrinkage found no point after {MAX_SHRINK} steps from x0={x0}")
