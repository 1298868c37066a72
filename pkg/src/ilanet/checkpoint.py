"""State checkpoints, trace files and progress logs.

A checkpoint is one JSON object. Reals are written as hexadecimal floats so
they round-trip bit-exactly. Layout by model tag:

    common:  model, iteration, log_joint, rng (bit-generator state or null)
    ila:     n_nodes, Z (row bitstrings), C (per-feature label vectors, 0 = off),
             K (per feature), W (per feature, row-major K x K), s, alpha, gamma
    lfrm:    n_nodes, Z, M, W (row-major M x M), s, alpha
    irm:     c (0-based labels), gamma, beta

A trace file is tab-separated with header ``iteration  log_joint  checkpoint``;
log_joint is printed with 17 significant digits.
"""
import json
import os

import numpy as np

from .baselines.irm import IrmState
from .baselines.lfrm import LfrmState
from .errors import ParseError
from .model import IlaState, pad_weights
from .sampler import SamplerTrace, TraceEntry

TRACE_HEADER = "iteration\tlog_joint\tcheckpoint"


def _hex(x):
    return float(x).hex()


def _unhex(s):
    return float.fromhex(s)


def _z_rows(Z):
    return ["".join("1" if v else "0" for v in row) for row in Z]


def _parse_z(rows, n, m):
    if len(rows) != n or any(len(r) != m or set(r) - {"0", "1"} for r in rows):
        raise ParseError("malformed Z bitstrings")
    if m == 0:
        return np.zeros((n, 0), dtype=np.int8)
    return np.array([[int(ch) for ch in r] for r in rows], dtype=np.int8)


def state_to_dict(state, model, iteration=None, log_joint=None, rng_state=None):
    d = {"model": model, "iteration": iteration,
         "log_joint": None if log_joint is None else _hex(log_joint), "rng": rng_state}
    if model in ("ila", "ila-fixed-m"):
        d.update(n_nodes=state.n_nodes, Z=_z_rows(state.c > 0),
                 C=[state.c[:, m].tolist() for m in range(state.M)], K=state.K,
                 W=[[_hex(v) for v in state.W(m).ravel()] for m in range(state.M)],
                 s=_hex(state.s), alpha=_hex(state.alpha), gamma=_hex(state.gamma))
    elif model == "lfrm":
        d.update(n_nodes=state.n_nodes, Z=_z_rows(state.Z), M=state.M,
                 W=[_hex(v) for v in state.W.ravel()], s=_hex(state.s), alpha=_hex(state.alpha))
    elif model == "irm":
        d.update(c=state.c.tolist(), gamma=_hex(state.gamma), beta=_hex(state.beta))
    else:
        raise ValueError(f"unknown model tag {model!r}")
    return d


def state_from_dict(d):
    """Inverse of :func:`state_to_dict`; returns ``(state, meta)``."""
    try:
        model = d["model"]
        if model in ("ila", "ila-fixed-m"):
            n, M = d["n_nodes"], len(d["C"])
            c = np.array(d["C"], dtype=np.int64).reshape(M, n).T.copy()
            wpad = []
            for k, w in zip(d["K"], d["W"]):
                if len(w) != k * k:
                    raise ParseError("weight array length does not match K")
                wpad.append(pad_weights(np.array([_unhex(v) for v in w]).reshape(k, k)))
            state = IlaState(c, wpad, _unhex(d["s"]), _unhex(d["alpha"]), _unhex(d["gamma"]))
            if not np.array_equal(_parse_z(d["Z"], n, M), (c > 0).astype(np.int8)):
                raise ParseError("Z bitstrings disagree with C")
        elif model == "lfrm":
            n, M = d["n_nodes"], d["M"]
            W = np.array([_unhex(v) for v in d["W"]]).reshape(M, M)
            state = LfrmState(_parse_z(d["Z"], n, M), W, _unhex(d["s"]), _unhex(d["alpha"]))
        elif model == "irm":
            state = IrmState(np.array(d["c"], dtype=np.int64), _unhex(d["gamma"]),
                             _unhex(d["beta"]))
        else:
            raise ParseError(f"unknown model tag {model!r}")
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ParseError):
            raise
        raise ParseError(f"malformed checkpoint: {e}") from e
    lj = d.get("log_joint")
    meta = {"model": model, "iteration": d.get("iteration"),
            "log_joint": None if lj is None else _unhex(lj), "rng": d.get("rng")}
    return state, meta


def save_checkpoint(path, state, model, iteration=None, log_joint=None, rng_state=None):
    with open(path, "w") as f:
        json.dump(state_to_dict(state, model, iteration, log_joint, rng_state), f)
        f.write("\n")


def load_checkpoint(path):
    try:
        with open(path) as f:
            d = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(str(e), path=path) from e
    return state_from_dict(d)


def save_trace(trace, directory, prefix="ckpt"):
    """Write one checkpoint per entry plus ``trace.tsv``; returns the trace file path."""
    os.makedirs(directory, exist_ok=True)
    lines = [TRACE_HEADER]
    for e in trace:
        name = f"{prefix}_{e.iteration:06d}.json"
        save_checkpoint(os.path.join(directory, name), e.state, trace.model_tag,
                        e.iteration, e.log_joint, e.rng_state)
        lines.append(f"{e.iteration}\t{e.log_joint:.17g}\t{name}")
    path = os.path.join(directory, "trace.tsv")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    return path


def load_trace(path, thin=1, burn_in=0):
    directory = os.path.dirname(path)
    entries, tag = [], None
    with open(path) as f:
        header = f.readline().rstrip("\n")
        if header != TRACE_HEADER:
            raise ParseError("bad trace header", line=1, path=path)
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ParseError("expected 3 tab-separated fields", line=lineno, path=path)
            state, meta = load_checkpoint(os.path.join(directory, parts[2]))
            tag = meta["model"]
            entries.append(TraceEntry(int(parts[0]), state, float(parts[1]), meta["rng"]))
    return SamplerTrace(entries, thin=thin, burn_in=burn_in, model_tag=tag or "ila")
