"""Synthetic populations with a known social network.

A :class:`Population` holds node membership in the frame population F and the
hidden population H (F is always a subset of H), an age-sex group label per
node, and an undirected simple graph.  The exact graph counts computed here
(``d_{i,B}``, ``d_{A,B}``, average degrees, visibilities) serve as ground truth
for every estimator test.

Membership sets are given either as a boolean mask, an iterable of node ids,
or one of the names ``"frame"``, ``"hidden"``, ``"hidden_only"`` (H - F),
``"nonhidden"`` (U - H) and ``"all"``.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .rng import make_rng

AGE_BANDS = ("18_24", "25_34", "35_44", "45_54", "55_64", "65_plus")
AGE_SEX_GROUPS = tuple(f"{sex}_{band}" for sex in ("f", "m") for band in AGE_BANDS)

MembershipSet = Union[str, np.ndarray, Iterable[int]]


@dataclass(frozen=True, eq=False)
class Population:
    """Nodes, memberships and an undirected network.

    Construct with :meth:`from_edges`; the raw constructor expects canonical
    arrays (sorted unique ``node_ids``, index-based ``edges`` with ``i < j``
    in lexicographic order).
    """

    node_ids: np.ndarray
    frame: np.ndarray
    hidden: np.ndarray
    groups: np.ndarray
    edges: np.ndarray
    community: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        n = len(self.node_ids)
        if n == 0:
            raise ValidationError("population must contain at least one node")
        if np.any(np.diff(self.node_ids) <= 0):
            raise ValidationError("node_ids must be strictly increasing")
        for name in ("frame", "hidden", "groups"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"{name} must have one entry per node")
        if self.community is not None and len(self.community) != n:
            raise ValidationError("community must have one entry per node")
        if not self.frame.any():
            raise ValidationError("frame population must be non-empty")
        if np.any(self.frame & ~self.hidden):
            raise ValidationError("frame must be a subset of hidden")
        if np.any(self.groups == ""):
            raise ValidationError("every node needs a group label")
        e = self.edges
        if e.ndim != 2 or e.shape[1] != 2:
            raise ValidationError("edges must be an (m, 2) array")
        if len(e):
            if e.min() < 0 or e.max() >= n:
                raise ValidationError("edge endpoint outside population")
            if np.any(e[:, 0] >= e[:, 1]):
                raise ValidationError("edges must satisfy i < j (no self-loops)")
            key = e[:, 0].astype(np.int64) * n + e[:, 1]
            if np.any(np.diff(key) <= 0):
                raise ValidationError("edges must be sorted and unique")
        for name in ("node_ids", "frame", "hidden", "groups", "edges", "community"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    @classmethod
    def from_edges(
        cls,
        node_ids: Iterable[int],
        edges: Iterable[tuple[int, int]],
        frame: Iterable[int],
        hidden: Iterable[int],
        groups: Mapping[int, str] | Sequence[str] | str | None = None,
        community: Sequence[int] | None = None,
    ) -> "Population":
        """Build a population from node ids and edges given as id pairs.

        Duplicate edges (in either orientation) and self-loops are rejected.
        ``groups`` may map id to label, list labels in ``node_ids`` order, or be
        a single label for everyone (default ``"all"``).
        """
        ids = np.asarray(list(node_ids), dtype=np.int64)
        order = np.argsort(ids, kind="stable")
        ids_sorted = ids[order]
        if len(ids_sorted) and np.any(np.diff(ids_sorted) == 0):
            raise ValidationError("duplicate node ids")
        pos = {int(v): k for k, v in enumerate(ids_sorted)}

        def index(v: int) -> int:
            try:
                return pos[int(v)]
            except KeyError:
                raise ValidationError(f"unknown node id {v}") from None

        pairs = []
        for a, b in edges:
            ia, ib = index(a), index(b)
            if ia == ib:
                raise ValidationError(f"self-loop at node {a}")
            pairs.append((min(ia, ib), max(ia, ib)))
        e = np.asarray(sorted(pairs), dtype=np.int64).reshape(-1, 2)
        if len(e) > 1 and np.any(np.all(e[1:] == e[:-1], axis=1)):
            raise ValidationError("duplicate edge")

        n = len(ids_sorted)
        f = np.zeros(n, dtype=bool)
        f[[index(v) for v in frame]] = True
        h = np.zeros(n, dtype=bool)
        h[[index(v) for v in hidden]] = True

        if groups is None or isinstance(groups, str):
            g = np.full(n, groups or "all", dtype=object)
        elif isinstance(groups, Mapping):
            g = np.empty(n, dtype=object)
            for v in ids_sorted:
                if int(v) not in groups:
                    raise ValidationError(f"node {v} has no group label")
                g[index(v)] = str(groups[int(v)])
        else:
            labels = list(groups)
            if len(labels) != n:
                raise ValidationError("groups must have one label per node")
            g = np.asarray([str(labels[k]) for k in order], dtype=object)
        comm = None
        if community is not None:
            comm = np.asarray(list(community), dtype=np.int64)[order]
        return cls(ids_sorted, f, h, g.astype(str), e, comm)

    # -- basic counts -----------------------------------------------------

    @property
    def n_total(self) -> int:
        return len(self.node_ids)

    @property
    def n_frame(self) -> int:
        return int(self.frame.sum())

    @property
    def n_hidden(self) -> int:
        return int(self.hidden.sum())

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency matrix in CSR form (sorted indices)."""
        n = self.n_total
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        data = np.ones(len(rows), dtype=np.int64)
        a = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        a.sort_indices()
        return a

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    @cached_property
    def _index(self) -> dict[int, int]:
        return {int(v): k for k, v in enumerate(self.node_ids)}

    def index_of(self, node: int) -> int:
        try:
            return self._index[int(node)]
        except (KeyError, TypeError, ValueError):
            raise ValidationError(f"unknown node {node!r}") from None

    def neighbors(self, node: int) -> np.ndarray:
        """Node ids adjacent to ``node``, ascending."""
        k = self.index_of(node)
        a = self.adjacency
        return self.node_ids[a.indices[a.indptr[k]:a.indptr[k + 1]]]

    def mask(self, members: MembershipSet) -> np.ndarray:
        """Resolve a membership-set argument to a boolean mask over nodes."""
        if isinstance(members, str):
            named = {
                "frame": self.frame,
                "hidden": self.hidden,
                "hidden_only": self.hidden & ~self.frame,
                "nonhidden": ~self.hidden,
                "all": np.ones(self.n_total, dtype=bool),
            }
            if members not in named:
                raise ValidationError(f"unknown membership set {members!r}")
            return named[members].copy()
        arr = np.asarray(members) if not isinstance(members, np.ndarray) else members
        if arr.dtype == bool:
            if arr.shape != (self.n_total,):
                raise ValidationError("boolean mask has wrong length")
            return arr.copy()
        out = np.zeros(self.n_total, dtype=bool)
        for v in np.ravel(arr):
            out[self.index_of(v)] = True
        return out

    def group_mask(self, label: str) -> np.ndarray:
        return self.groups == label

    def group_labels(self) -> list[str]:
        return sorted(set(self.groups.tolist()))


# -- exact graph counts --------------------------------------------------------


def degree_between(pop: Population, i: int, target: MembershipSet) -> int:
    """Number of neighbours of node ``i`` that lie in ``target``."""
    k = pop.index_of(i)
    a = pop.adjacency
    nbrs = a.indices[a.indptr[k]:a.indptr[k + 1]]
    return int(pop.mask(target)[nbrs].sum())


def degrees_to(pop: Population, target: MembershipSet) -> np.ndarray:
    """``d_{i,B}`` for every node ``i`` at once."""
    return pop.adjacency @ pop.mask(target).astype(np.int64)


def total_degree_between(pop: Population, src: MembershipSet, target: MembershipSet) -> int:
    """``d_{A,B}``: edge endpoints counted from the ``src`` side."""
    return int(degrees_to(pop, target)[pop.mask(src)].sum())


def mean_degree_between(pop: Population, src: MembershipSet, target: MembershipSet) -> float:
    """``dbar_{A,B} = d_{A,B} / |A|``."""
    m = pop.mask(src)
    size = int(m.sum())
    if size == 0:
        raise ValidationError("source set is empty")
    return total_degree_between(pop, m, target) / size


def true_visibility(pop: Population, reporting=None, *, of: MembershipSet = "hidden") -> float:
    """Average expected visibility of ``of`` members to the frame population.

    Each member ``j`` of H is reported as a hidden-population member by each of
    its frame neighbours with probability ``1 - false_negative_hidden``, so its
    expected visibility is that rate times ``d_{j,F}``.  With ``of="frame"``
    the frame-status report rate is used instead (``vbar_{F,F}``).  ``reporting``
    of ``None`` means accurate reporting, under which the result equals
    ``dbar_{of,F}``.
    """
    m = pop.mask(of)
    if not m.any():
        raise ValidationError("visibility of an empty set is undefined")
    if reporting is None:
        rate = 1.0
    elif isinstance(of, str) and of == "frame":
        rate = 1.0 - reporting.false_negative_frame
    else:
        rate = 1.0 - reporting.false_negative_hidden
    return rate * mean_degree_between(pop, m, "frame")


# -- generators -----------------------------------------------------------------


def _check_prob(name: str, p: float) -> None:
    if not (0.0 <= p <= 1.0) or np.isnan(p):
        raise ValidationError(f"{name} must be a probability in [0, 1], got {p}")


def _pairs_within(nodes: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """G(n, p) on ``nodes``: each unordered pair kept independently."""
    n = len(nodes)
    total = n * (n - 1) // 2
    if total == 0 or p == 0.0:
        return np.empty((0, 2), dtype=np.int64)
    k = int(rng.binomial(total, p))
    t = np.sort(rng.choice(total, size=k, replace=False)) if k < total else np.arange(total)
    t = t.astype(np.int64)
    # row i of the strict upper triangle starts at offset(i) = i(2n - i - 1)/2
    b = 2 * n - 1
    i = np.floor((b - np.sqrt(b * b - 8.0 * t)) / 2).astype(np.int64)
    i = np.clip(i, 0, n - 2)

    def offset(r):
        return r * (2 * n - r - 1) // 2

    i = np.where(offset(i) > t, i - 1, i)
    i = np.where(offset(i + 1) <= t, i + 1, i)
    j = t - offset(i) + i + 1
    return np.column_stack([nodes[i], nodes[j]])


def _pairs_between(a: np.ndarray, b: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    total = len(a) * len(b)
    if total == 0 or p == 0.0:
        return np.empty((0, 2), dtype=np.int64)
    k = int(rng.binomial(total, p))
    t = np.sort(rng.choice(total, size=k, replace=False)) if k < total else np.arange(total)
    return np.column_stack([a[t // len(b)], b[t % len(b)]])


def _canonical_edges(parts: list[np.ndarray], n: int) -> np.ndarray:
    if not parts:
        return np.empty((0, 2), dtype=np.int64)
    e = np.concatenate(parts).astype(np.int64)
    e = np.sort(e, axis=1)
    order = np.lexsort((e[:, 1], e[:, 0]))
    return e[order]


def _assign_groups(
    n: int,
    rng: np.random.Generator,
    group_probs: Mapping[str, float] | None,
) -> np.ndarray:
    if group_probs is None:
        labels = list(AGE_SEX_GROUPS)
        probs = np.full(len(labels), 1.0 / len(labels))
    else:
        labels = list(group_probs)
        probs = np.asarray([group_probs[g] for g in labels], dtype=float)
        if np.any(probs < 0) or probs.sum() <= 0:
            raise ValidationError("group probabilities must be non-negative with positive sum")
        probs = probs / probs.sum()
    return np.asarray(labels, dtype=object)[rng.choice(len(labels), size=n, p=probs)].astype(str)


def generate_er(
    n_hidden: int,
    n_frame: int,
    p: float,
    seed: int,
    *,
    n_total: int | None = None,
    group_probs: Mapping[str, float] | None = None,
) -> Population:
    """Homogeneous mixing: Erdos-Renyi graph G(N_H, p) over the hidden population.

    The frame is a uniformly random subset of H of size ``n_frame``.  Nodes
    ``n_hidden .. n_total-1`` (if any) are outside H and isolated.
    """
    _check_prob("p", p)
    n_total = n_hidden if n_total is None else n_total
    if n_frame < 1 or n_frame > n_hidden:
        raise ValidationError("need 1 <= n_frame <= n_hidden")
    if n_total < n_hidden:
        raise ValidationError("n_total must be >= n_hidden")
    rng = make_rng(seed)
    groups = _assign_groups(n_total, rng, group_probs)
    hidden = np.zeros(n_total, dtype=bool)
    hidden[:n_hidden] = True
    frame = np.zeros(n_total, dtype=bool)
    frame[rng.choice(n_hidden, size=n_frame, replace=False)] = True
    edges = _canonical_edges([_pairs_within(np.arange(n_hidden), p, rng)], n_total)
    return Population(np.arange(n_total, dtype=np.int64), frame, hidden, groups, edges)


@dataclass(frozen=True)
class BlockModelSpec:
    """Two-block model over H: F and H - F.

    Within-block pairs connect with probability ``phi``; F to (H - F) pairs
    with probability ``sigma * phi``.
    """

    phi: float
    sigma: float
    n_frame: int
    n_hidden_only: int

    def __post_init__(self) -> None:
        _check_prob("phi", self.phi)
        _check_prob("sigma", self.sigma)
        if self.n_frame < 1 or self.n_hidden_only < 0:
            raise ValidationError("need n_frame >= 1 and n_hidden_only >= 0")

    @property
    def n_hidden(self) -> int:
        return self.n_frame + self.n_hidden_only

    @property
    def p_frame_given_hidden(self) -> float:
        return self.n_frame / self.n_hidden


def generate_block(
    spec: BlockModelSpec,
    seed: int,
    *,
    group_probs: Mapping[str, float] | None = None,
) -> Population:
    """Block-model network; nodes ``0..n_frame-1`` form F."""
    rng = make_rng(seed)
    n = spec.n_hidden
    groups = _assign_groups(n, rng, group_probs)
    f_nodes = np.arange(spec.n_frame)
    o_nodes = np.arange(spec.n_frame, n)
    parts = [
        _pairs_within(f_nodes, spec.phi, rng),
        _pairs_within(o_nodes, spec.phi, rng),
        _pairs_between(f_nodes, o_nodes, spec.sigma * spec.phi, rng),
    ]
    frame = np.zeros(n, dtype=bool)
    frame[: spec.n_frame] = True
    hidden = np.ones(n, dtype=bool)
    return Population(np.arange(n, dtype=np.int64), frame, hidden, groups, _canonical_edges(parts, n))


@dataclass(frozen=True)
class MixtureSpec:
    """Non-interacting mixture of homogeneous-mixing subpopulations.

    ``subpopulations`` holds ``(n_hidden, n_frame, p_edge)`` triples.
    """

    subpopulations: tuple[tuple[int, int, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "subpopulations", tuple(tuple(s) for s in self.subpopulations))
        if not self.subpopulations:
            raise ValidationError("mixture needs at least one subpopulation")
        for nh, nf, p in self.subpopulations:
            _check_prob("p_edge", p)
            if nf < 0 or nf > nh:
                raise ValidationError("each subpopulation needs 0 <= n_frame <= n_hidden")
        if sum(nf for _, nf, _ in self.subpopulations) < 1:
            raise ValidationError("mixture frame population is empty")


def generate_mixture(
    spec: MixtureSpec,
    seed: int,
    *,
    group_probs: Mapping[str, float] | None = None,
) -> Population:
    """Independent ER components, no edges across subpopulations.

    ``Population.community`` records each node's subpopulation index.
    """
    rng = make_rng(seed)
    n = sum(nh for nh, _, _ in spec.subpopulations)
    groups = _assign_groups(n, rng, group_probs)
    frame = np.zeros(n, dtype=bool)
    community = np.empty(n, dtype=np.int64)
    parts = []
    start = 0
    for c, (nh, nf, p) in enumerate(spec.subpopulations):
        nodes = np.arange(start, start + nh)
        community[nodes] = c
        frame[start + rng.choice(nh, size=nf, replace=False)] = True
        parts.append(_pairs_within(nodes, p, rng))
        start += nh
    hidden = np.ones(n, dtype=bool)
    return Population(
        np.arange(n, dtype=np.int64), frame, hidden, groups, _canonical_edges(parts, n), community
    )


# -- analytic expectations -------------------------------------------------------


def expected_dbar_er(n_hidden: int, n_frame: int, p: float) -> dict[str, float]:
    """Model expectations of average degrees under homogeneous mixing."""
    return {
        "dbar_FF": (n_frame - 1) * p,
        "dbar_HF": n_frame * (n_hidden - 1) * p / n_hidden,
        "dbar_HmF_F": n_frame * p,
    }


def expected_visibility_ratio_block(spec: BlockModelSpec, exact: bool = False) -> float:
    """``dbar_{H,F} / dbar_{F,F}`` under the block model.

    The default is the large-N_F approximation ``p + (1 - p) sigma`` with
    ``p = N_F / N_H``; ``exact=True`` keeps the ``N_F - 1`` term.
    """
    pf = spec.p_frame_given_hidden
    if not exact:
        return pf + (1 - pf) * spec.sigma
    nf = spec.n_frame
    if nf < 2:
        raise ValidationError("exact ratio needs n_frame >= 2")
    return pf + (1 - pf) * spec.sigma * nf / (nf - 1)


def expected_dbar_mixture(spec: MixtureSpec) -> dict[str, float]:
    """Model expectations of ``dbar_{H,F}`` and ``dbar_{F,F}`` for a mixture.

    Partition weights are the subpopulation shares of H (for ``dbar_{H,F}``)
    and of F (for ``dbar_{F,F}``); the two agree only when frame prevalence or
    the within-component frame degree is the same in every component.
    """
    n_h = sum(nh for nh, _, _ in spec.subpopulations)
    n_f = sum(nf for _, nf, _ in spec.subpopulations)
    d_hf = sum(nf * (nh - 1) * p for nh, nf, p in spec.subpopulations) / n_h
    d_ff = sum(nf * (nf - 1) * p for nh, nf, p in spec.subpopulations) / n_f
    return {"dbar_HF": d_hf, "dbar_FF": d_ff}
