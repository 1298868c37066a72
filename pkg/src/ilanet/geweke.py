"""Joint-distribution ("getting it right") tests for the samplers.

Forward draws come from the prior followed by data generation; the
successive-conditional chain alternates one sampler sweep with regenerating
the data from the current state. Both must give the same distribution over
(state, data), so the means of any statistic must agree.
"""
from dataclasses import dataclass
from typing import Dict

import numpy as np

from .baselines.irm import IrmOptions, irm_generate, irm_sample_prior, irm_sweep
from .baselines.lfrm import LfrmCache, lfrm_sample_prior, lfrm_sweep
from .graph import ObservationMask, generate_from_ila, generate_from_logits
from .model import LogitCache, sample_prior
from .sampler import PairData, SamplerOptions, sweep

MODELS = ("ila", "irm", "lfrm")


def batch_means_se(x, n_batches=50):
    """Standard error of the mean of an autocorrelated series via batch means."""
    x = np.asarray(x, dtype=float)
    b = len(x) // n_batches
    if b < 1:
        raise ValueError("series shorter than the number of batches")
    means = x[:b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


def _ila_stats(state, net):
    K = state.K
    return {"M": state.M, "sum_Z": int(state.Z.sum()), "max_K": max(K) if K else 0,
            "s": state.s, "alpha": state.alpha, "gamma": state.gamma,
            "density": net.density()}


def _irm_stats(state, net):
    sizes = np.bincount(state.c)
    return {"K": state.K, "largest": int(sizes.max()), "gamma": state.gamma,
            "density": net.density()}


def _lfrm_stats(state, net):
    return {"M": state.M, "sum_Z": int(state.Z.sum()), "s": state.s, "alpha": state.alpha,
            "density": net.density()}


class _Ila:
    stats = staticmethod(_ila_stats)

    def __init__(self, n, hp, opts, mode):
        self.n, self.hp, self.opts, self.mode = n, hp, opts, mode

    def prior(self, rng):
        return sample_prior(self.n, self.hp, rng)

    def generate(self, state, rng):
        return generate_from_ila(state, self.n, self.mode, rng)

    def step(self, state, net, mask, rng):
        sweep(state, LogitCache.build(state), PairData(net, mask), self.hp, self.opts, rng)


class _Lfrm(_Ila):
    stats = staticmethod(_lfrm_stats)

    def prior(self, rng):
        return lfrm_sample_prior(self.n, self.hp, rng)

    def generate(self, state, rng):
        return generate_from_logits(LfrmCache(state).eta, self.mode, rng)

    def step(self, state, net, mask, rng):
        lfrm_sweep(state, LfrmCache(state), PairData(net, mask), self.hp, self.opts, rng)


class _Irm(_Ila):
    stats = staticmethod(_irm_stats)

    def __init__(self, n, hp, opts, mode, irm_opts=None):
        super().__init__(n, hp, opts, mode)
        self.irm_opts = IrmOptions() if irm_opts is None else irm_opts

    def prior(self, rng):
        return irm_sample_prior(self.n, rng, opts=self.irm_opts)

    def generate(self, state, rng):
        return irm_generate(state, self.mode, rng)

    def step(self, state, net, mask, rng):
        irm_sweep(state, net, mask, rng, self.irm_opts)


@dataclass
class GewekeReport:
    model: str
    forward_mean: Dict[str, float]
    chain_mean: Dict[str, float]
    z: Dict[str, float]

    def max_abs_z(self):
        return max(abs(v) for v in self.z.values())

    def passed(self, threshold):
        return self.max_abs_z() < threshold

    def rows(self):
        return [(k, self.forward_mean[k], self.chain_mean[k], self.z[k]) for k in self.z]


def geweke_check(n_nodes, hp, opts, n_forward, n_chain, rng, model="ila", mode="undirected",
                 irm_opts=None, n_batches=50):
    """Run both samplers and return per-statistic z-scores of the mean difference."""
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    opts = SamplerOptions() if opts is None else opts
    if model == "irm":
        m = _Irm(n_nodes, hp, opts, mode, irm_opts)
    else:
        m = (_Ila if model == "ila" else _Lfrm)(n_nodes, hp, opts, mode)
    mask = ObservationMask.full(n_nodes, mode)

    fwd = []
    for _ in range(n_forward):
        st = m.prior(rng)
        fwd.append(m.stats(st, m.generate(st, rng)))

    chain = []
    state = m.prior(rng)
    net = m.generate(state, rng)
    for _ in range(n_chain):
        m.step(state, net, mask, rng)
        net = m.generate(state, rng)
        chain.append(m.stats(state, net))

    fm, cm, z = {}, {}, {}
    for key in fwd[0]:
        a = np.array([r[key] for r in fwd], dtype=float)
        b = np.array([r[key] for r in chain], dtype=float)
        fm[key], cm[key] = float(a.mean()), float(b.mean())
        se = np.hypot(a.std(ddof=1) / np.sqrt(len(a)), batch_means_se(b, n_batches))
        diff = cm[key] - fm[key]
        z[key] = 0.0 if se == 0 and diff == 0 else float(diff / se) if se > 0 else float("inf")
    return GewekeReport(model, fm, cm, z)
