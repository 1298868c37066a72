import json

import numpy as np
import pytest
from conftest import random_state

from ilanet.baselines.irm import IrmState
from ilanet.baselines.lfrm import LfrmState
from ilanet.checkpoint import (TRACE_HEADER, load_checkpoint, load_trace, save_checkpoint,
                               save_trace, state_from_dict, state_to_dict)
from ilanet.errors import ParseError
from ilanet.mcmc import RngStream
from ilanet.sampler import SamplerTrace, TraceEntry


def test_ila_round_trip_is_bit_exact(tmp_path, rng):
    st = random_state(7, rng)
    st.s = 0.1 + 0.2  # not representable exactly in short decimal
    save_checkpoint(tmp_path / "c.json", st, "ila", 12, -123.456789012345678, rng.get_state())
    back, meta = load_checkpoint(tmp_path / "c.json")
    assert np.array_equal(back.c, st.c) and back.s == st.s
    assert all(np.array_equal(a, b) for a, b in zip(back.wpad, st.wpad))
    assert (back.alpha, back.gamma) == (st.alpha, st.gamma)
    assert meta["iteration"] == 12 and meta["log_joint"] == -123.456789012345678
    r2 = RngStream(0)
    r2.set_state(meta["rng"])
    assert r2.uniform() == rng.uniform()


def test_other_models_round_trip():
    lf = LfrmState(np.array([[1, 0], [1, 1], [0, 1]]), np.array([[0.1, -2.5], [1e-300, 7.0]]), -0.3,
                   1.7)
    back, _ = state_from_dict(json.loads(json.dumps(state_to_dict(lf, "lfrm"))))
    assert np.array_equal(back.Z, lf.Z) and np.array_equal(back.W, lf.W) and back.s == lf.s
    irm = IrmState(np.array([0, 1, 0, 2]), 0.37, 1.0)
    back, meta = state_from_dict(state_to_dict(irm, "irm"))
    assert np.array_equal(back.c, irm.c) and back.gamma == irm.gamma and meta["model"] == "irm"


def test_malformed_checkpoints(tmp_path, rng):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ParseError):
        load_checkpoint(tmp_path / "bad.json")
    d = state_to_dict(random_state(4, rng), "ila")
    d["Z"][0] = "2" * len(d["Z"][0])
    with pytest.raises(ParseError):
        state_from_dict(d)
    with pytest.raises(ParseError):
        state_from_dict({"model": "mmsb"})
    with pytest.raises(ParseError):
        state_from_dict({"model": "ila"})


def test_trace_files(tmp_path, rng):
    entries = [TraceEntry(t, random_state(5, rng), -10.0 - t / 3) for t in (2, 4)]
    path = save_trace(SamplerTrace(entries, model_tag="ila"), tmp_path)
    lines = open(path).read().splitlines()
    assert lines[0] == TRACE_HEADER and lines[1].split("\t")[2] == "ckpt_000002.json"
    back = load_trace(path)
    assert [e.iteration for e in back] == [2, 4]
    assert [e.log_joint for e in back] == [e.log_joint for e in entries]
    (tmp_path / "trace.tsv").write_text("iter\tlj\n")
    with pytest.raises(ParseError):
        load_trace(tmp_path / "trace.tsv")
