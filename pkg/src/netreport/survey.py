"""Simulated two-phase network-reporting interviews.

Phase one asks a sampled frame member for their degree ``d_i``; phase two
collects details on ``r_i = min(d_i, max_alters)`` alters chosen without
replacement.  Reports pass through a :class:`ReportingModel` that can flip
hidden-population and frame flags and decides whether an alter is aware of
the respondent.  Output is the same :class:`SurveyData` the CSV loader
produces.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .population import Population
from .records import RespondentRecord, SurveyData
from .rng import make_rng


@dataclass(frozen=True)
class SamplingDesign:
    """Simple random sample without replacement from F.

    ``response_probs`` optionally maps group label to response probability;
    groups not listed respond with probability 1.
    """

    sample_size: int
    kind: str = "srswor"
    response_probs: Mapping[str, float] | None = None

    def __post_init__(self) -> None:
        if self.kind != "srswor":
            raise ValidationError(f"unsupported sampling design {self.kind!r}")
        if self.sample_size < 1:
            raise ValidationError("sample_size must be at least 1")
        if self.response_probs is not None:
            for g, p in self.response_probs.items():
                if not 0.0 < p <= 1.0:
                    raise ValidationError(f"response probability for {g!r} must be in (0, 1]")


@dataclass(frozen=True)
class AlterSelectionModel:
    """How detailed alters are picked from a respondent's neighbours.

    ``uniform`` is simple random sampling without replacement.  ``weighted``
    draws sequentially with probability proportional to each remaining
    alter's propensity: ``homophily`` when the alter shares the respondent's
    group (restricted to respondents in ``homophilic_groups`` if given), 1
    otherwise.  ``propensity_fn(respondent_group, alter_group)`` overrides
    that rule.
    """

    kind: str = "uniform"
    max_alters: int = 3
    homophily: float = 1.0
    homophilic_groups: frozenset[str] | None = None
    propensity_fn: Callable[[str, str], float] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "weighted"):
            raise ValidationError(f"unknown alter selection kind {self.kind!r}")
        if self.max_alters < 1:
            raise ValidationError("max_alters must be at least 1")
        if not self.homophily > 0:
            raise ValidationError("homophily multiplier must be positive")
        if self.homophilic_groups is not None:
            object.__setattr__(self, "homophilic_groups", frozenset(self.homophilic_groups))

    def propensities(self, respondent_groups: np.ndarray, alter_groups: np.ndarray) -> np.ndarray:
        """Selection propensity for each (respondent, alter) pair, elementwise."""
        if self.kind == "uniform":
            return np.ones(len(alter_groups))
        if self.propensity_fn is not None:
            w = np.fromiter(
                (self.propensity_fn(a, b) for a, b in zip(respondent_groups, alter_groups)),
                dtype=float,
                count=len(alter_groups),
            )
        else:
            same = respondent_groups == alter_groups
            if self.homophilic_groups is not None:
                same &= np.isin(respondent_groups, list(self.homophilic_groups))
            w = np.where(same, self.homophily, 1.0)
        if np.any(~(w > 0)) or np.any(~np.isfinite(w)):
            raise ValidationError("alter propensities must be finite and positive")
        return w


@dataclass(frozen=True)
class ReportingModel:
    """Per-alter reporting error rates (all in [0, 1]).

    A hidden alter is reported as not hidden with ``false_negative_hidden``;
    a non-hidden alter is reported as hidden with ``false_positive_hidden``;
    frame status analogously.  ``awareness_prob`` is the chance an alter is
    reported to be aware of the respondent's internet use.
    """

    false_negative_hidden: float = 0.0
    false_positive_hidden: float = 0.0
    false_negative_frame: float = 0.0
    false_positive_frame: float = 0.0
    awareness_prob: float = 1.0

    def __post_init__(self) -> None:
        for name in (
            "false_negative_hidden",
            "false_positive_hidden",
            "false_negative_frame",
            "false_positive_frame",
            "awareness_prob",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {v}")

    @property
    def is_accurate(self) -> bool:
        return (
            self.false_negative_hidden == 0
            and self.false_positive_hidden == 0
            and self.false_negative_frame == 0
            and self.false_positive_frame == 0
        )


ACCURATE = ReportingModel()


@dataclass(frozen=True)
class Sample:
    """Sampled (and responding) frame nodes with their design weights."""

    nodes: np.ndarray
    design_weights: np.ndarray
    n_drawn: int


def _draw_sample(pop: Population, design: SamplingDesign, rng: np.random.Generator) -> Sample:
    frame_idx = np.flatnonzero(pop.frame)
    n_f = len(frame_idx)
    n = design.sample_size
    if n > n_f:
        raise ValidationError(f"sample size {n} exceeds frame size {n_f}")
    picked = np.sort(rng.choice(frame_idx, size=n, replace=False))
    if design.response_probs is not None:
        probs = np.asarray([design.response_probs.get(g, 1.0) for g in pop.groups[picked]])
        picked = picked[rng.random(n) < probs]
    weights = np.full(len(picked), n_f / n)
    return Sample(pop.node_ids[picked], weights, n)


def draw_sample(pop: Population, design: SamplingDesign, seed: int) -> Sample:
    """SRSWOR of ``design.sample_size`` frame nodes, each with weight N_F / n.

    Under a response mechanism only respondents are returned and weights are
    left unadjusted; post-stratification corrects them downstream.
    """
    return _draw_sample(pop, design, make_rng(seed))


def _heap(d: np.ndarray, threshold: int | None) -> np.ndarray:
    if threshold is None:
        return d
    rounded = (5 * np.round(d / 5.0)).astype(np.int64)
    return np.where(d > threshold, rounded, d)


def _interview(
    pop: Population,
    idx: np.ndarray,
    weights: np.ndarray,
    alter_model: AlterSelectionModel,
    reporting: ReportingModel,
    rng: np.random.Generator,
    heaping_threshold: int | None = None,
) -> SurveyData:
    a = pop.adjacency
    n = len(idx)
    k = alter_model.max_alters
    starts = a.indptr[idx]
    deg = a.indptr[idx + 1] - starts
    r = np.minimum(deg, k)

    # flatten every respondent's neighbour list
    row = np.repeat(np.arange(n), deg)
    offs = np.arange(row.size) - np.repeat(np.cumsum(deg) - deg, deg)
    nbr = a.indices[np.repeat(starts, deg) + offs]

    # weighted sampling without replacement: largest log(u)/w keys win, which
    # matches sequential draws proportional to remaining propensity
    w = alter_model.propensities(pop.groups[idx][row], pop.groups[nbr])
    keys = np.log(rng.random(row.size)) / w
    order = np.lexsort((-keys, row))
    rank = np.empty(row.size, dtype=np.int64)
    rank[order] = offs
    keep = rank < r[row]
    sel_row, sel_rank, sel_nbr = row[keep], rank[keep], nbr[keep]

    m = sel_row.size
    true_h = pop.hidden[sel_nbr]
    true_f = pop.frame[sel_nbr]
    u_h, u_f, u_a = rng.random(m), rng.random(m), rng.random(m)
    rep_h = np.where(true_h, u_h >= reporting.false_negative_hidden, u_h < reporting.false_positive_hidden)
    rep_f = np.where(true_f, u_f >= reporting.false_negative_frame, u_f < reporting.false_positive_frame)
    aware = u_a < reporting.awareness_prob

    hid = np.zeros((n, k), dtype=bool)
    frm = np.zeros((n, k), dtype=bool)
    awr = np.zeros((n, k), dtype=bool)
    grp = np.full((n, k), "", dtype=object)
    alt = np.full((n, k), -1, dtype=np.int64)
    hid[sel_row, sel_rank] = rep_h
    frm[sel_row, sel_rank] = rep_f
    awr[sel_row, sel_rank] = aware
    grp[sel_row, sel_rank] = pop.groups[sel_nbr]
    alt[sel_row, sel_rank] = pop.node_ids[sel_nbr]

    reported_deg = np.maximum(_heap(deg.astype(np.int64), heaping_threshold), r)
    nodes = pop.node_ids[idx]
    return SurveyData(
        np.asarray([str(v) for v in nodes], dtype=object).astype(str),
        pop.groups[idx].astype(str),
        np.asarray(weights, dtype=float),
        reported_deg,
        r.astype(np.int64),
        hid,
        frm,
        grp.astype(str),
        awr,
        nodes.copy(),
        alt,
    )


def interview(
    pop: Population,
    respondent: int,
    alter_model: AlterSelectionModel,
    reporting: ReportingModel,
    seed: int,
    design_weight: float = 1.0,
) -> RespondentRecord:
    """Interview one frame member."""
    k = pop.index_of(respondent)
    if not pop.frame[k]:
        raise ValidationError(f"node {respondent} is not in the frame population")
    data = _interview(pop, np.array([k]), np.array([design_weight]), alter_model, reporting, make_rng(seed))
    return data.to_records()[0]


def run_survey(
    pop: Population,
    design: SamplingDesign,
    alter_model: AlterSelectionModel | None = None,
    reporting: ReportingModel | None = None,
    seed: int = 0,
    *,
    heaping_threshold: int | None = None,
) -> SurveyData:
    """Sample, then interview every respondent.  Deterministic in ``seed``.

    ``heaping_threshold`` rounds reported degrees above it to the nearest
    multiple of 5 (off by default).
    """
    alter_model = alter_model or AlterSelectionModel()
    reporting = reporting or ACCURATE
    sample = _draw_sample(pop, design, make_rng(seed, 0))
    idx = np.asarray([pop.index_of(v) for v in sample.nodes], dtype=np.int64)
    return _interview(
        pop, idx, sample.design_weights, alter_model, reporting, make_rng(seed, 1), heaping_threshold
    )


def census_design(pop: Population) -> SamplingDesign:
    return SamplingDesign(sample_size=pop.n_frame)


def full_enumeration(pop: Population) -> AlterSelectionModel:
    """Alter model that details every neighbour (``max_alters`` = max degree)."""
    return AlterSelectionModel(max_alters=max(int(pop.degrees.max(initial=0)), 1))
