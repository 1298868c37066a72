"""Networks, observation masks, edge-list I/O, hold-out splits and synthetic networks."""
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .errors import InvalidArgument, ParseError
from .model import IlaState, build_logits

MODES = ("directed", "undirected")
_HEADER = re.compile(r"#\s*n_nodes\s*=\s*(\d+)(?:\s+mode\s*=\s*(\w+))?")


def _check_mode(mode):
    if mode not in MODES:
        raise InvalidArgument(f"mode must be one of {MODES}, got {mode!r}")


def valid_pair_matrix(n, mode):
    """Boolean N x N matrix of the pairs a model scores: i != j (directed) or i < j."""
    _check_mode(mode)
    if mode == "undirected":
        return np.triu(np.ones((n, n), dtype=bool), k=1)
    return ~np.eye(n, dtype=bool)


@dataclass(frozen=True, eq=False)
class Network:
    n_nodes: int
    mode: str
    adjacency: np.ndarray
    node_labels: Optional[List[str]] = None

    def __post_init__(self):
        _check_mode(self.mode)
        a = np.asarray(self.adjacency)
        if a.shape != (self.n_nodes, self.n_nodes):
            raise InvalidArgument(f"adjacency shape {a.shape} does not match n_nodes={self.n_nodes}")
        a = (a != 0).astype(np.int8)
        np.fill_diagonal(a, 0)
        if self.mode == "undirected" and not np.array_equal(a, a.T):
            raise InvalidArgument("undirected adjacency must be symmetric")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        if self.node_labels is not None and len(self.node_labels) != self.n_nodes:
            raise InvalidArgument("node_labels length must equal n_nodes")

    def edges(self):
        """Canonical sorted edge list as an (E, 2) integer array."""
        valid = valid_pair_matrix(self.n_nodes, self.mode)
        return np.argwhere(valid & (self.adjacency == 1))

    def density(self):
        valid = valid_pair_matrix(self.n_nodes, self.mode)
        return float(self.adjacency[valid].mean()) if valid.any() else 0.0


@dataclass(frozen=True, eq=False)
class ObservationMask:
    """Set of observed pairs, stored as a canonical boolean matrix.

    Undirected masks only ever have entries with i < j.
    """

    n_nodes: int
    mode: str
    observed: np.ndarray

    def __post_init__(self):
        _check_mode(self.mode)
        obs = np.asarray(self.observed, dtype=bool)
        if obs.shape != (self.n_nodes, self.n_nodes):
            raise InvalidArgument("mask shape does not match n_nodes")
        if (obs & ~valid_pair_matrix(self.n_nodes, self.mode)).any():
            raise InvalidArgument("mask contains diagonal or non-canonical pairs")
        obs = obs.copy()
        obs.setflags(write=False)
        object.__setattr__(self, "observed", obs)

    @classmethod
    def full(cls, n_nodes, mode):
        return cls(n_nodes, mode, valid_pair_matrix(n_nodes, mode))

    @classmethod
    def empty(cls, n_nodes, mode):
        return cls(n_nodes, mode, np.zeros((n_nodes, n_nodes), dtype=bool))

    @classmethod
    def from_pairs(cls, n_nodes, mode, pairs):
        obs = np.zeros((n_nodes, n_nodes), dtype=bool)
        for i, j in pairs:
            i, j = int(i), int(j)
            if not (0 <= i < n_nodes and 0 <= j < n_nodes) or i == j:
                raise InvalidArgument(f"pair ({i}, {j}) out of range or on the diagonal")
            if mode == "undirected" and i > j:
                i, j = j, i
            obs[i, j] = True
        return cls(n_nodes, mode, obs)

    def pairs(self):
        return np.argwhere(self.observed)

    def complement(self):
        return ObservationMask(self.n_nodes, self.mode,
                               valid_pair_matrix(self.n_nodes, self.mode) & ~self.observed)

    def restrict(self, nodes):
        """Keep only pairs whose endpoints both lie in ``nodes``."""
        keep = np.zeros(self.n_nodes, dtype=bool)
        keep[np.asarray(nodes, dtype=int)] = True
        return ObservationMask(self.n_nodes, self.mode, self.observed & keep[:, None] & keep[None, :])

    def __len__(self):
        return int(self.observed.sum())


# ---------------------------------------------------------------- file I/O

def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            yield lineno, raw.rstrip("\n").rstrip("\r")


def load_labels(path):
    return [line.strip() for _, line in _read_lines(path)]


def _read_pairs(path, n_nodes, labels=None):
    index = {lab: k for k, lab in enumerate(labels)} if labels is not None else None
    pairs = []
    for lineno, line in _read_lines(path):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            parts = line.split()
        if len(parts) != 2:
            raise ParseError("expected two tab-separated fields", lineno, path)
        a, b = (p.strip() for p in parts)
        if index is not None:
            try:
                i, j = index[a], index[b]
            except KeyError as exc:
                raise ParseError(f"unknown node label {exc.args[0]!r}", lineno, path) from None
        else:
            try:
                i, j = int(a), int(b)
            except ValueError:
                raise ParseError(f"non-integer node index in {line!r}", lineno, path) from None
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise ParseError(f"node index out of range [0, {n_nodes})", lineno, path)
        if i == j:
            raise ParseError(f"self-link on node {i}", lineno, path)
        pairs.append((i, j))
    return pairs


def _header_nodes(path):
    for _, line in _read_lines(path):
        m = _HEADER.match(line.strip())
        if m:
            return int(m.group(1))
        if line.strip() and not line.lstrip().startswith("#"):
            break
    return None


def load_edge_list(path, n_nodes=None, mode="undirected", labels_path=None):
    """Read a tab-separated edge list of 0-based indices (or labels with ``labels_path``).

    ``n_nodes`` falls back to the label count, then to a ``# n_nodes=`` header.
    """
    _check_mode(mode)
    labels = load_labels(labels_path) if labels_path is not None else None
    if n_nodes is None:
        n_nodes = len(labels) if labels is not None else _header_nodes(path)
    if n_nodes is None or n_nodes < 1:
        raise InvalidArgument(f"cannot determine n_nodes for {path}")
    adj = np.zeros((n_nodes, n_nodes), dtype=np.int8)
    for i, j in _read_pairs(path, n_nodes, labels):
        adj[i, j] = 1
        if mode == "undirected":
            adj[j, i] = 1
    return Network(n_nodes, mode, adj, labels)


def _write_pairs(path, pairs, header):
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i, j in pairs:
            fh.write(f"{i}\t{j}\n")


def save_edge_list(net, path):
    _write_pairs(path, net.edges(), f"# n_nodes={net.n_nodes} mode={net.mode}")


def save_labels(labels, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{lab}\n" for lab in labels)


def save_mask(mask, path):
    _write_pairs(path, mask.pairs(), f"# n_nodes={mask.n_nodes} mode={mask.mode}")


def load_mask(path, n_nodes, mode):
    return ObservationMask.from_pairs(n_nodes, mode, _read_pairs(path, n_nodes))


# ------------------------------------------------------------ hold-out split

def holdout_split(net, fraction, rng):
    """Uniformly hold out ``round(fraction * P)`` of the P valid pairs, links and non-links alike.

    Returns ``(train, test)`` masks that partition the valid pairs.
    """
    if not 0.0 < fraction < 1.0:
        raise InvalidArgument(f"hold-out fraction must be in (0, 1), got {fraction}")
    valid = valid_pair_matrix(net.n_nodes, net.mode)
    pairs = np.argwhere(valid)
    n_test = int(math.floor(fraction * len(pairs) + 0.5))
    if n_test < 1:
        raise InvalidArgument("hold-out fraction selects no pairs")
    chosen = rng.permutation(len(pairs))[:n_test]
    test = np.zeros_like(valid)
    test[pairs[chosen, 0], pairs[chosen, 1]] = True
    return (ObservationMask(net.n_nodes, net.mode, valid & ~test),
            ObservationMask(net.n_nodes, net.mode, test))


# ------------------------------------------------------------ synthetic data

def generate_from_logits(eta, mode, rng):
    n = eta.shape[0]
    valid = valid_pair_matrix(n, mode)
    # logistic draw: r = 1 iff logit(u) < eta, avoids overflow in exp
    u = rng.gen.random((n, n))
    with np.errstate(divide="ignore"):
        adj = (np.log(u) - np.log1p(-u) < eta) & valid
    adj = adj.astype(np.int8)
    if mode == "undirected":
        adj = adj | adj.T
    return Network(n, mode, adj)


def generate_from_ila(state, n_nodes, mode, rng):
    if state.n_nodes != n_nodes:
        raise InvalidArgument(f"state has {state.n_nodes} objects, expected {n_nodes}")
    return generate_from_logits(build_logits(state), mode, rng)


@dataclass
class PlantedFeature:
    kind: str
    subcluster_sizes: Sequence[int]
    in_weight: float
    out_weight: float


@dataclass
class PlantedSpec:
    n_nodes: int
    features: List[PlantedFeature] = field(default_factory=list)
    bias: float = 0.0
    mode: str = "undirected"

    def validate(self):
        if self.n_nodes < 1:
            raise InvalidArgument("n_nodes must be positive")
        for f in self.features:
            if f.kind not in ("homophilic", "heterophilic"):
                raise InvalidArgument(f"unknown feature kind {f.kind!r}")
            if not f.subcluster_sizes or min(f.subcluster_sizes) < 1:
                raise InvalidArgument("subcluster sizes must be positive")
            if sum(f.subcluster_sizes) > self.n_nodes:
                raise InvalidArgument("subcluster sizes exceed n_nodes")
            if f.kind == "homophilic" and not f.in_weight > f.out_weight:
                raise InvalidArgument("homophilic feature needs in_weight > out_weight")
            if f.kind == "heterophilic" and not f.out_weight > f.in_weight:
                raise InvalidArgument("heterophilic feature needs out_weight > in_weight")


def default_planted_spec(weight=6.0, bias=0.0):
    """30 objects; three homophilic subclusters of 10 plus two heterophilic subclusters of 15."""
    return PlantedSpec(
        n_nodes=30,
        features=[
            PlantedFeature("homophilic", [10, 10, 10], weight, -weight),
            PlantedFeature("heterophilic", [15, 15], -weight, weight),
        ],
        bias=bias,
    )


def planted_state(spec, rng=None):
    """Ground-truth state for ``spec``.

    The first feature takes contiguous blocks of objects; every later feature
    assigns a random subset (drawn from ``rng``) so features cross each other.
    """
    spec.validate()
    n = spec.n_nodes
    c = np.zeros((n, len(spec.features)), dtype=np.int64)
    weights = []
    for m, f in enumerate(spec.features):
        order = np.arange(n) if m == 0 or rng is None else rng.permutation(n)
        start = 0
        for k, size in enumerate(f.subcluster_sizes, start=1):
            c[order[start:start + size], m] = k
            start += size
        K = len(f.subcluster_sizes)
        w = np.full((K, K), float(f.out_weight))
        np.fill_diagonal(w, float(f.in_weight))
        weights.append(w)
    return IlaState.from_blocks(c, weights, s=spec.bias, alpha=1.0, gamma=1.0)


def generate_planted(spec, rng):
    """Draw a network from the planted structure; returns ``(network, truth_state)``."""
    truth = planted_state(spec, rng)
    return generate_from_ila(truth, spec.n_nodes, spec.mode, rng), truth
