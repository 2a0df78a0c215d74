"""Rescaled bootstrap replicate weights and percentile intervals.

Each replicate draws ``m`` respondents with replacement (one stratum), sets

    w*_i = w0_i * (1 - lam + lam * (n / m) * t_i),   lam = sqrt(m / (n - 1))

where ``t_i`` counts how often unit ``i`` was drawn, and then post-stratifies
the replicate weights to the frame margins.  With the default ``m = n - 1``
this is ``w0_i * n / (n - 1) * t_i``.

Replicate ``r`` uses the random stream ``make_rng(seed, r)``, so results do
not depend on evaluation order or on ``n_jobs``.
"""

from __future__ import annotations

from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NetReportError, ValidationError
from .estimators import EstimateWithCI, FrameMargins, _group_codes, calibrate_matrix, poststratify
from .records import SurveyData, as_survey_data
from .rng import make_rng

MAX_DEGENERATE_SHARE = 0.01


class DegenerateReplicatesError(NetReportError):
    def __init__(self, n_degenerate: int, n_replicates: int):
        self.n_degenerate = n_degenerate
        self.n_replicates = n_replicates
        super().__init__(
            f"{n_degenerate} of {n_replicates} bootstrap replicates had a zero estimator "
            f"denominator (limit {MAX_DEGENERATE_SHARE:.0%}); the sample is too thin for this estimator"
        )


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 1000
    resample_size: int | None = None
    seed: int = 0
    ci_level: float = 0.95
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise ValidationError("need at least one bootstrap replicate")
        if not 0 < self.ci_level < 1:
            raise ValidationError("ci_level must be in (0, 1)")
        if self.n_jobs < 1:
            raise ValidationError("n_jobs must be >= 1")

    def m_for(self, n: int) -> int:
        if n < 2:
            raise ValidationError("the rescaled bootstrap needs at least 2 respondents")
        m = n - 1 if self.resample_size is None else self.resample_size
        if not 1 <= m <= n - 1:
            raise ValidationError(f"resample size must be in [1, {n - 1}], got {m}")
        return m


@dataclass(frozen=True, eq=False)
class ReplicateWeights:
    """``(B, n)`` replicate weights.

    ``raw`` is before calibration; ``empty_cells[b]`` counts margin cells whose
    respondents were all left out of replicate ``b``.
    """

    weights: np.ndarray
    raw: np.ndarray
    empty_cells: np.ndarray


def _draw_counts(n: int, m: int, seed: int, reps: range) -> np.ndarray:
    p = np.full(n, 1.0 / n)
    return np.stack([make_rng(seed, r).multinomial(m, p) for r in reps]) if len(reps) else np.empty((0, n))


def resample_counts(n: int, config: BootstrapConfig) -> np.ndarray:
    """``(B, n)`` matrix of draw counts ``t_i``."""
    m = config.m_for(n)
    b = config.replicates
    if config.n_jobs == 1:
        return _draw_counts(n, m, config.seed, range(b))
    bounds = np.linspace(0, b, config.n_jobs + 1).astype(int)
    chunks = [range(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=config.n_jobs) as ex:
        parts = list(ex.map(lambda c: _draw_counts(n, m, config.seed, c), chunks))
    return np.concatenate([p for p in parts if len(p)])


def rescaled_weights(design_weights: np.ndarray, counts: np.ndarray, m: int) -> np.ndarray:
    n = counts.shape[-1]
    lam = np.sqrt(m / (n - 1))
    return design_weights * (1.0 - lam + lam * (n / m) * counts)


def is_census(design_weights: np.ndarray, margins: FrameMargins) -> bool:
    w = np.asarray(design_weights, dtype=float)
    return bool(len(w) == margins.total and np.all(w == 1.0))


def replicate_weights(
    records,
    margins: FrameMargins | None,
    config: BootstrapConfig,
    *,
    design_weights: np.ndarray | None = None,
    calibrate: bool = True,
) -> ReplicateWeights:
    """Rescaled bootstrap weights, post-stratified per replicate unless ``calibrate=False``.

    A census (unit design weights and one respondent per frame member) has
    no sampling variance, so every replicate repeats the full-sample weights.
    """
    data = as_survey_data(records)
    n = len(data)
    w0 = data.design_weight if design_weights is None else np.asarray(design_weights, dtype=float)
    if len(w0) != n:
        raise ValidationError("design weights do not match the records")
    if margins is not None and is_census(w0, margins):
        fixed = poststratify(data, margins).calibrated if calibrate else w0
        tiled = np.tile(fixed, (config.replicates, 1))
        return ReplicateWeights(tiled, np.tile(w0, (config.replicates, 1)), np.zeros(config.replicates, dtype=np.int64))
    counts = resample_counts(n, config)
    raw = rescaled_weights(w0, counts, config.m_for(n))
    if not calibrate:
        return ReplicateWeights(raw, raw, np.zeros(len(raw), dtype=np.int64))
    if margins is None:
        raise ValidationError("margins are required for calibrated replicate weights")
    codes = _group_codes(data.group, margins)
    cal, k = calibrate_matrix(raw, codes, margins)
    present = np.zeros(len(margins.groups), dtype=bool)
    present[codes] = True
    empty = ((k == 0) & present[None, :]).sum(axis=1)
    return ReplicateWeights(cal, raw, empty)


def percentile_interval(replicates: np.ndarray, level: float) -> tuple[float, float]:
    """Percentile CI using the outer order statistics around the nominal positions.

    For B replicates the lower bound is ``sorted[floor((B-1) a)]`` and the upper
    is ``sorted[ceil((B-1)(1-a))]`` with ``a = (1-level)/2``; for B = 1000 at 95%
    that is the 25th and 976th order statistics.
    """
    r = np.asarray(replicates, dtype=float)
    r = r[np.isfinite(r)]
    if len(r) == 0:
        return float("nan"), float("nan")
    a = (1.0 - level) / 2.0
    lo = np.percentile(r, 100 * a, method="lower")
    hi = np.percentile(r, 100 * (1 - a), method="higher")
    return float(lo), float(hi)


def _evaluate(estimator_fn, data: SurveyData, w: np.ndarray) -> np.ndarray:
    out = np.asarray(estimator_fn(data, w), dtype=float)
    if out.shape == (w.shape[0],):
        return out
    return np.asarray([estimator_fn(data, row) for row in w], dtype=float)


def bootstrap_estimate(
    records,
    margins: FrameMargins,
    config: BootstrapConfig,
    estimator_fn: Callable,
    *,
    replicate_set: ReplicateWeights | None = None,
) -> EstimateWithCI:
    """Point estimate on calibrated weights plus bootstrap percentile CI.

    ``estimator_fn(data, weights)`` must accept a ``(B, n)`` weight matrix (all
    estimators in :mod:`netreport.estimators` do).  Replicates with a zero
    denominator are excluded and counted; more than 1% of them is an error.
    """
    data = as_survey_data(records)
    point = float(estimator_fn(data, poststratify(data, margins)))
    reps = replicate_set or replicate_weights(data, margins, config)
    values = _evaluate(estimator_fn, data, reps.weights)
    bad = int((~np.isfinite(values)).sum())
    if bad > MAX_DEGENERATE_SHARE * len(values):
        raise DegenerateReplicatesError(bad, len(values))
    lo, hi = percentile_interval(values, config.ci_level)
    return EstimateWithCI(
        point, values, lo, hi, config.ci_level, bad,
        {"empty_cell_replicates": int((reps.empty_cells > 0).sum())},
    )
