import numpy as np
import pytest

from ilanet import geweke
from ilanet.geweke import batch_means_se, geweke_check
from ilanet.mcmc import RngStream
from ilanet.model import IlaHyperParams
from ilanet.sampler import SamplerOptions


def test_batch_means_se_iid():
    x = RngStream(1).gaussians(50000)
    assert batch_means_se(x) == pytest.approx(1 / np.sqrt(50000), rel=0.3)
    with pytest.raises(ValueError):
        batch_means_se(np.ones(10), n_batches=50)


def test_harness_calibrated_with_exact_sampler(monkeypatch):
    # a "sampler" that redraws from the prior is exact, so z-scores must be small
    def step(self, state, net, mask, rng):
        fresh = self.prior(rng)
        state.c, state.wpad, state.s = fresh.c, fresh.wpad, fresh.s
        state.alpha, state.gamma = fresh.alpha, fresh.gamma
    monkeypatch.setattr(geweke._Ila, "step", step)
    rep = geweke_check(4, IlaHyperParams(), SamplerOptions(), 3000, 3000, RngStream(2))
    assert rep.max_abs_z() < 4


@pytest.mark.parametrize("model", ["ila", "irm", "lfrm"])
def test_small_run_reports_every_statistic(model):
    rep = geweke_check(3, IlaHyperParams(), SamplerOptions(), 500, 500, RngStream(3), model=model)
    assert rep.model == model and len(rep.rows()) == len(rep.z)
    assert all(np.isfinite(z) for z in rep.z.values())
    with pytest.raises(ValueError):
        geweke_check(3, IlaHyperParams(), SamplerOptions(), 10, 10, RngStream(0), model="mmsb")
