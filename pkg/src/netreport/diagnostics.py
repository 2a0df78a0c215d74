"""Internal consistency (IC) checks and the tie-definition comparison (TAE).

For a group ``alpha`` the frame-internal connection count between F_alpha and
F_{-alpha} can be estimated twice: from respondents in alpha (reports about
frame alters outside alpha) and from respondents outside alpha (reports about
frame alters in alpha).  Undirected ties make the two targets equal, so their
difference measures reporting inconsistency.  It is rescaled by
``K = N_F / (N_{F_-alpha} N_{F_alpha})`` to compare groups of different size.
"""

from __future__ import annotations

import warnings
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .estimators import (
    EstimateWithCI,
    FrameMargins,
    WeightSet,
    _weights,
    expansion_factors,
    poststratify,
)
from .records import SurveyData, as_survey_data
from .rng import derive_seed
from .uncertainty import BootstrapConfig, ReplicateWeights, percentile_interval, replicate_weights


@dataclass(frozen=True, eq=False)
class ICCheckResult:
    group: str
    delta: float
    delta_raw: float
    k_factor: float
    replicates: np.ndarray
    replicates_raw: np.ndarray
    ci_low: float
    ci_high: float
    ci_low_raw: float
    ci_high_raw: float
    n_respondents_in: int
    n_respondents_out: int

    def ci_contains_zero(self) -> bool:
        return self.ci_low <= 0.0 <= self.ci_high


def k_factor(margins: FrameMargins, group: str) -> float:
    n_in = margins[group]
    n_out = margins.complement(group)
    if n_out <= 0:
        raise ValidationError(f"group {group!r} covers the whole frame; IC check undefined")
    return margins.total / (n_out * n_in)


def ic_components(data: SurveyData, w: np.ndarray, group: str):
    """``(dhat_{F_alpha,F_-alpha}, dhat_{F_-alpha,F_alpha})`` for weights ``w``."""
    x = expansion_factors(data)
    same = data.alter_group == group
    present = data.alter_present
    out_counts = (data.alter_frame & ~same & present).sum(axis=1)
    in_counts = (data.alter_frame & same & present).sum(axis=1)
    inside = data.group == group
    d_in_out = w @ np.where(inside, x * out_counts, 0.0)
    d_out_in = w @ np.where(~inside, x * in_counts, 0.0)
    return d_in_out, d_out_in


def ic_check(
    records,
    weights: WeightSet | np.ndarray,
    margins: FrameMargins,
    group: str,
    config: BootstrapConfig | None = None,
    *,
    replicate_set: ReplicateWeights | None = None,
) -> ICCheckResult:
    """IC statistic for one group, with a bootstrap CI when a config is given."""
    data = as_survey_data(records)
    inside = data.group == group
    n_in, n_out = int(inside.sum()), int((~inside).sum())
    if n_in == 0 or n_out == 0:
        raise ValidationError(f"one-sided check undefined for group {group!r}: no respondents on one side")
    k = k_factor(margins, group)
    w = _weights(weights, len(data))
    a, b = ic_components(data, w, group)
    raw = float(b - a)

    if replicate_set is None and config is not None:
        replicate_set = replicate_weights(data, margins, config)
    if replicate_set is not None:
        ra, rb = ic_components(data, replicate_set.weights, group)
        reps_raw = rb - ra
        level = config.ci_level if config is not None else 0.95
        lo_raw, hi_raw = percentile_interval(reps_raw, level)
    else:
        reps_raw = np.empty(0)
        lo_raw = hi_raw = float("nan")
    return ICCheckResult(
        group, k * raw, raw, k, k * reps_raw, reps_raw,
        k * lo_raw, k * hi_raw, lo_raw, hi_raw, n_in, n_out,
    )


def ic_checks(records, margins: FrameMargins, config: BootstrapConfig | None = None) -> list[ICCheckResult]:
    """IC checks for every margin group, sharing one set of replicate weights.

    Groups with no respondents on one side are skipped with a warning.
    """
    data = as_survey_data(records)
    weights = poststratify(data, margins)
    reps = replicate_weights(data, margins, config) if config is not None else None
    out = []
    skipped = []
    for g in margins.groups:
        n_in = int((data.group == g).sum())
        if n_in == 0 or n_in == len(data):
            skipped.append(g)
            continue
        out.append(ic_check(data, weights, margins, g, config, replicate_set=reps))
    if skipped:
        warnings.warn(f"IC checks skipped for groups without respondents on both sides: {', '.join(skipped)}", stacklevel=2)
    return out


def tae(cc_checks: Sequence[ICCheckResult], meal_checks: Sequence[ICCheckResult]) -> float:
    """``sum_alpha |Delta_cc| - |Delta_meal|``; positive favours the meal network."""
    cc = {c.group: c.delta for c in cc_checks}
    meal = {c.group: c.delta for c in meal_checks}
    if set(cc) != set(meal) or len(cc) != len(cc_checks) or len(meal) != len(meal_checks):
        raise ValidationError("TAE needs the same set of groups in both arms")
    return float(sum(abs(cc[g]) - abs(meal[g]) for g in sorted(cc)))


def favoured_network(tae_value: float) -> str:
    """Which tie definition a TAE value favours: ``"meal"``, ``"cc"`` or ``"neither"``.

    Positive TAE means the conversational-contact reports were less internally
    consistent.
    """
    if tae_value > 0:
        return "meal"
    if tae_value < 0:
        return "cc"
    return "neither"


def _delta_matrix(data: SurveyData, w: np.ndarray, margins: FrameMargins, groups: list[str]) -> np.ndarray:
    cols = []
    for g in groups:
        a, b = ic_components(data, w, g)
        cols.append(k_factor(margins, g) * (b - a))
    return np.stack(cols, axis=-1)


def tae_distribution(
    cc_records,
    meal_records,
    margins: FrameMargins,
    config: BootstrapConfig,
    *,
    meal_margins: FrameMargins | None = None,
    meal_config: BootstrapConfig | None = None,
) -> EstimateWithCI:
    """Bootstrap distribution of TAE with arms resampled independently.

    The meal arm uses ``meal_config`` if given, otherwise ``config`` with a
    derived seed.  Only groups checkable in both arms enter the sum.
    """
    cc = as_survey_data(cc_records)
    meal = as_survey_data(meal_records)
    if len(cc) == 0 or len(meal) == 0:
        raise ValidationError("both tie-definition arms need respondents")
    meal_margins = meal_margins or margins
    if meal_config is None:
        meal_config = replace(config, seed=derive_seed(config.seed, 1))
    if meal_config.replicates != config.replicates:
        raise ValidationError("both arms need the same number of replicates")

    def checkable(d: SurveyData, m: FrameMargins) -> set[str]:
        return {g for g in m.groups if 0 < int((d.group == g).sum()) < len(d)}

    groups = sorted(checkable(cc, margins) & checkable(meal, meal_margins))
    if not groups:
        raise ValidationError("no group is checkable in both arms")
    d_cc = _delta_matrix(cc, poststratify(cc, margins).calibrated, margins, groups)
    d_meal = _delta_matrix(meal, poststratify(meal, meal_margins).calibrated, meal_margins, groups)
    point = float(np.abs(d_cc).sum() - np.abs(d_meal).sum())

    r_cc = _delta_matrix(cc, replicate_weights(cc, margins, config).weights, margins, groups)
    r_meal = _delta_matrix(meal, replicate_weights(meal, meal_margins, meal_config).weights, meal_margins, groups)
    reps = np.abs(r_cc).sum(axis=1) - np.abs(r_meal).sum(axis=1)
    lo, hi = percentile_interval(reps, config.ci_level)
    return EstimateWithCI(point, reps, lo, hi, config.ci_level, 0, {"groups": groups})
