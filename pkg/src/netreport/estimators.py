"""Network-reporting estimators of hidden population size.

All estimators take survey data and weights.  Weights may be a
:class:`WeightSet` (its calibrated weights are used), a length-n vector, or a
``(B, n)`` matrix of replicate weights; with a matrix every estimator returns
a length-B vector and degenerate replicates come back as NaN instead of
raising.

Records with ``d_i > 0`` but ``r_i = 0`` (no detailed alters) cannot be
expanded and are dropped from every sum, including the weight totals.
"""

from __future__ import annotations

import warnings
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDenominatorError, ValidationError
from .records import RespondentRecord, SurveyData, as_survey_data

AlterPredicate = Callable[[SurveyData], np.ndarray]


@dataclass(frozen=True)
class FrameMargins:
    """Known frame population counts ``N_{F_alpha}`` by group."""

    by_group: Mapping[str, int]

    def __post_init__(self) -> None:
        clean = {}
        for g, c in self.by_group.items():
            if not c > 0:
                raise ValidationError(f"margin for group {g!r} must be positive, got {c}")
            clean[str(g)] = c
        if not clean:
            raise ValidationError("margins must contain at least one group")
        object.__setattr__(self, "by_group", dict(sorted(clean.items())))

    @property
    def total(self) -> float:
        return sum(self.by_group.values())

    @property
    def groups(self) -> list[str]:
        return list(self.by_group)

    def __getitem__(self, group: str) -> float:
        return self.by_group[group]

    def complement(self, group: str) -> float:
        """``N_{F_{-alpha}}``."""
        return self.total - self.by_group[group]


@dataclass(frozen=True, eq=False)
class WeightSet:
    """Design and post-stratified weights for one sample."""

    respondent_id: np.ndarray
    design: np.ndarray
    calibrated: np.ndarray
    margins: FrameMargins
    k_factors: dict[str, float]
    empty_cells: tuple[str, ...] = ()

    def group_totals(self, groups: np.ndarray) -> dict[str, float]:
        return {g: float(self.calibrated[groups == g].sum()) for g in self.margins.groups}


@dataclass(frozen=True, eq=False)
class EstimateWithCI:
    point: float
    replicates: np.ndarray
    ci_low: float
    ci_high: float
    level: float
    n_degenerate: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def se(self) -> float:
        r = self.replicates[np.isfinite(self.replicates)]
        return float(np.std(r, ddof=1)) if len(r) > 1 else 0.0

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


# -- weighting -------------------------------------------------------------------


def _group_codes(groups: np.ndarray, margins: FrameMargins) -> np.ndarray:
    index = {g: k for k, g in enumerate(margins.groups)}
    codes = np.empty(len(groups), dtype=np.int64)
    for i, g in enumerate(groups):
        try:
            codes[i] = index[g]
        except KeyError:
            raise ValidationError(f"respondent group {g!r} is missing from the frame margins") from None
    return codes


def calibrate_matrix(
    w: np.ndarray, codes: np.ndarray, margins: FrameMargins
) -> tuple[np.ndarray, np.ndarray]:
    """Post-stratify each row of ``w`` (shape ``(B, n)`` or ``(n,)``).

    Returns the calibrated weights and the ``(B, G)`` factor matrix ``K``.
    Cells whose weight total is zero in a row get ``K = 0`` and contribute
    nothing.
    """
    w = np.asarray(w, dtype=float)
    squeeze = w.ndim == 1
    w2 = np.atleast_2d(w)
    n_groups = len(margins.groups)
    onehot = np.zeros((w2.shape[1], n_groups))
    onehot[np.arange(w2.shape[1]), codes] = 1.0
    sums = w2 @ onehot
    targets = np.asarray([margins[g] for g in margins.groups], dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(sums > 0, targets / sums, 0.0)
    out = w2 * k[:, codes]
    return (out[0], k[0]) if squeeze else (out, k)


def poststratify(records: SurveyData | Sequence[RespondentRecord], margins: FrameMargins) -> WeightSet:
    """``w_i = w0_i * K_alpha`` with ``K_alpha = N_{F_alpha} / sum_{s_alpha} w0``."""
    data = as_survey_data(records)
    codes = _group_codes(data.group, margins)
    calibrated, k = calibrate_matrix(data.design_weight, codes, margins)
    empty = tuple(g for j, g in enumerate(margins.groups) if not np.any(codes == j))
    if empty:
        warnings.warn(f"margin cells without respondents contribute nothing: {', '.join(empty)}", stacklevel=2)
    k_factors = {g: float(k[j]) for j, g in enumerate(margins.groups) if g not in empty}
    return WeightSet(data.respondent_id, data.design_weight.copy(), calibrated, margins, k_factors, empty)


def _weights(weights, n: int) -> np.ndarray:
    if isinstance(weights, WeightSet):
        w = weights.calibrated
    else:
        w = np.asarray(weights, dtype=float)
    if w.shape[-1] != n:
        raise ValidationError(f"weights have length {w.shape[-1]}, data has {n} rows")
    if np.any(w < 0) or np.any(~np.isfinite(w)):
        raise ValidationError("weights must be finite and non-negative")
    return w


def _ratio(num, den):
    if np.ndim(den) == 0:
        if den == 0:
            raise DegenerateDenominatorError("degenerate denominator: estimator denominator is zero")
        return float(num / den)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den == 0, np.nan, num / np.where(den == 0, 1.0, den))


def usable_rows(data: SurveyData) -> np.ndarray:
    """Rows that enter the estimators (excludes ``d_i > 0`` with ``r_i = 0``)."""
    return ~((data.degree > 0) & (data.n_alters == 0))


def n_excluded(records) -> int:
    return int((~usable_rows(as_survey_data(records))).sum())


def expansion_factors(data: SurveyData) -> np.ndarray:
    """``d_i / r_i`` for usable rows with ``r_i > 0``, else 0."""
    ok = usable_rows(data) & (data.n_alters > 0)
    return np.where(ok, data.degree / np.maximum(data.n_alters, 1), 0.0)


def trim_degrees(records, cap: int) -> SurveyData:
    """Cap reported degrees at ``cap`` (never below the number of detailed alters)."""
    data = as_survey_data(records)
    d = np.maximum(np.minimum(data.degree, cap), data.n_alters)
    return SurveyData(
        data.respondent_id, data.group, data.design_weight, d, data.n_alters,
        data.alter_hidden, data.alter_frame, data.alter_group, data.alter_aware, data.node,
        data.alter_node,
    )


# -- estimators -------------------------------------------------------------------


def _expanded_total(data: SurveyData, w: np.ndarray, counts: np.ndarray):
    return w @ (expansion_factors(data) * counts)


def estimate_total(records, weights, alter_predicate: AlterPredicate):
    """``yhat_{F,Z} = sum_i w_i (d_i / r_i) z_i`` for an arbitrary alter trait."""
    data = as_survey_data(records)
    w = _weights(weights, len(data))
    return _as_out(_expanded_total(data, w, data.count_alters(alter_predicate)))


def estimate_y_FH(records, weights):
    """Total reported connections from F to H."""
    data = as_survey_data(records)
    w = _weights(weights, len(data))
    return _as_out(_expanded_total(data, w, data.o))


def estimate_dbar_FF(records, weights):
    """Average number of frame members each frame member reports."""
    data = as_survey_data(records)
    w = _weights(weights, len(data))
    num = _expanded_total(data, w, data.f)
    den = w @ usable_rows(data).astype(float)
    return _ratio(num, den)


def estimate_NH(records, weights):
    """Hidden population size ``yhat_{F,H} / dbarhat_{F,F}``."""
    data = as_survey_data(records)
    w = _weights(weights, len(data))
    num = _expanded_total(data, w, data.o)
    den_f = _expanded_total(data, w, data.f)
    total_w = w @ usable_rows(data).astype(float)
    return _ratio(num * total_w, den_f)


def estimate_NH_generalized(records, weights):
    """Size estimate whose denominator counts frame alters aware of the respondent.

    Same form as :func:`estimate_NH` with ``z_i`` in place of ``f_i``, so the
    two agree exactly when every frame alter is reported aware.
    """
    data = as_survey_data(records)
    w = _weights(weights, len(data))
    num = _expanded_total(data, w, data.o)
    den = _expanded_total(data, w, data.z)
    total_w = w @ usable_rows(data).astype(float)
    return _ratio(num * total_w, den)


def estimate_mean_degree(records, weights):
    """Weighted average reported degree (Table-S1 style summary)."""
    data = as_survey_data(records)
    w = _weights(weights, len(data))
    return _ratio(w @ data.degree.astype(float), w @ np.ones(len(data)))


def estimate_frame_size(records, weights):
    """``Nhat_F = sum_i w_i``."""
    data = as_survey_data(records)
    w = _weights(weights, len(data))
    return _as_out(w @ np.ones(len(data)))


def _as_out(x):
    return float(x) if np.ndim(x) == 0 else x


# -- alter predicates --------------------------------------------------------------


def alters_in_frame(data: SurveyData) -> np.ndarray:
    return data.alter_frame


def alters_hidden(data: SurveyData) -> np.ndarray:
    return data.alter_hidden


def alters_any(data: SurveyData) -> np.ndarray:
    return np.ones(data.alter_hidden.shape, dtype=bool)


def frame_alters_in_group(group: str, inside: bool = True) -> AlterPredicate:
    """Alters reported in F whose group is (or, with ``inside=False``, is not) ``group``."""

    def pred(data: SurveyData) -> np.ndarray:
        same = data.alter_group == group
        return data.alter_frame & (same if inside else ~same)

    pred.__name__ = f"frame_alters_{'in' if inside else 'not_in'}_{group}"
    return pred
