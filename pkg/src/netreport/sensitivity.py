"""Adjustment factors, predicted estimator bias and block-model sweeps.

The size estimator targets ``(eta_F / eta_H) * nu * N_H`` where

* ``eta_H = y+_{F,H} / y_{F,H}``: share of reported connections to H that
  really lead to H (false positives push it below 1),
* ``eta_F = y+_{F,F} / y_{F,F}``: the same for frame reports,
* ``nu = vbar_{H,F} / vbar_{F,F}``: visibility of H relative to F under the
  reporting model (false negatives and non-homogeneous mixing move it).

Ground-truth quantities here come from exact graph counts and the reporting
error rates; :func:`measure_factors_simulated` gives a census-simulation
cross-check.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDenominatorError, ValidationError
from .estimators import FrameMargins, estimate_NH, poststratify
from .population import (
    BlockModelSpec,
    MembershipSet,
    Population,
    expected_visibility_ratio_block,
    generate_block,
    total_degree_between,
    true_visibility,
)
from .rng import derive_seed, make_rng
from .survey import (
    ACCURATE,
    AlterSelectionModel,
    ReportingModel,
    SamplingDesign,
    _interview,
    full_enumeration,
    run_survey,
)


@dataclass(frozen=True)
class AdjustmentFactors:
    eta_H: float
    eta_F: float
    nu: float
    tpr_hidden: float = 1.0
    tpr_frame: float = 1.0

    def __post_init__(self) -> None:
        for name in ("eta_H", "eta_F"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0 + 1e-12:
                raise ValidationError(f"{name} must be in [0, 1], got {v}")
        if not self.nu >= 0:
            raise ValidationError(f"nu must be non-negative, got {self.nu}")

    @property
    def multiplier(self) -> float:
        """``(eta_F / eta_H) * nu``."""
        if self.eta_H == 0:
            raise DegenerateDenominatorError("fully masked population: eta_H is zero")
        return self.eta_F / self.eta_H * self.nu


def _safe_div(num: float, den: float, what: str) -> float:
    if den == 0:
        raise DegenerateDenominatorError(f"{what} is undefined: zero denominator")
    return num / den


def measure_factors(pop: Population, reporting: ReportingModel | None = None) -> AdjustmentFactors:
    """Expected-value adjustment factors from ground truth and error rates."""
    rep = reporting or ACCURATE
    d_fh = total_degree_between(pop, "frame", "hidden")
    d_f_nonh = total_degree_between(pop, "frame", "nonhidden")
    d_ff = total_degree_between(pop, "frame", "frame")
    d_f_nonf = total_degree_between(pop, "frame", ~pop.frame)

    y_plus_fh = (1 - rep.false_negative_hidden) * d_fh
    y_fh = y_plus_fh + rep.false_positive_hidden * d_f_nonh
    y_plus_ff = (1 - rep.false_negative_frame) * d_ff
    y_ff = y_plus_ff + rep.false_positive_frame * d_f_nonf

    eta_h = _safe_div(y_plus_fh, y_fh, "eta_H")
    eta_f = _safe_div(y_plus_ff, y_ff, "eta_F")
    nu = _safe_div(true_visibility(pop, rep, of="hidden"), true_visibility(pop, rep, of="frame"), "nu")
    return AdjustmentFactors(eta_h, eta_f, nu, 1 - rep.false_negative_hidden, 1 - rep.false_negative_frame)


def measure_factors_simulated(
    pop: Population, reporting: ReportingModel, replicates: int, seed: int
) -> AdjustmentFactors:
    """Average of simulated full-enumeration censuses of F (ratio of sums)."""
    alter_model = full_enumeration(pop)
    idx = np.flatnonzero(pop.frame)
    w = np.ones(len(idx))
    y_fh = y_plus_fh = y_ff = y_plus_ff = 0.0
    vis_h = vis_f = 0.0
    true_h = pop.hidden
    true_f = pop.frame
    for r in range(replicates):
        data = _interview(pop, idx, w, alter_model, reporting, make_rng(seed, r))
        present = data.alter_present
        alt_idx = np.searchsorted(pop.node_ids, np.where(present, data.alter_node, pop.node_ids[0]))
        is_h = true_h[alt_idx] & present
        is_f = true_f[alt_idx] & present
        y_fh += data.alter_hidden.sum()
        y_plus_fh += (data.alter_hidden & is_h).sum()
        y_ff += data.alter_frame.sum()
        y_plus_ff += (data.alter_frame & is_f).sum()
        vis_h += (data.alter_hidden & is_h).sum()
        vis_f += (data.alter_frame & is_f).sum()
    eta_h = float(_safe_div(y_plus_fh, y_fh, "eta_H"))
    eta_f = float(_safe_div(y_plus_ff, y_ff, "eta_F"))
    nu = float(_safe_div(vis_h / pop.n_hidden, vis_f / pop.n_frame, "nu"))
    return AdjustmentFactors(
        eta_h, eta_f, nu, 1 - reporting.false_negative_hidden, 1 - reporting.false_negative_frame
    )


def predict_estimand(nh_true: float, factors: AdjustmentFactors) -> float:
    """What the size estimator is consistent for: ``(eta_F / eta_H) nu N_H``."""
    return factors.multiplier * nh_true


def predicted_bias(nh_true: float, factors: AdjustmentFactors) -> float:
    return nh_true * (factors.multiplier - 1.0)


# -- imperfect weights -------------------------------------------------------------


def _trait_counts(pop: Population, trait: MembershipSet) -> np.ndarray:
    """``y_{i,Z}`` for frame members (accurate census reports)."""
    z = pop.mask(trait).astype(np.int64)
    return (pop.adjacency @ z)[pop.frame]


def _frame_vector(pop: Population, values, name: str) -> np.ndarray:
    frame_ids = pop.node_ids[pop.frame]
    if isinstance(values, Mapping):
        try:
            v = np.asarray([values[int(i)] for i in frame_ids], dtype=float)
        except KeyError as exc:
            raise ValidationError(f"{name} missing for frame node {exc.args[0]}") from None
    else:
        v = np.asarray(values, dtype=float)
        if v.shape != (len(frame_ids),):
            raise ValidationError(f"{name} needs one value per frame node")
    return v


def bias_from_bad_weights(pop: Population, epsilon, trait: MembershipSet = "hidden") -> float:
    """Bias of the total estimator when weights are off by ``epsilon_i = w'_i / w_i``.

    ``N_F [ybar_{F,Z} (epsbar - 1) + cov_F(y_{i,Z}, eps_i)]`` with the finite
    population covariance (divisor N_F).  ``epsilon`` is indexed by frame node
    (mapping) or given in ascending frame-node order.
    """
    eps = _frame_vector(pop, epsilon, "epsilon")
    if np.any(~(eps > 0)):
        raise ValidationError("epsilon must be positive")
    y = _trait_counts(pop, trait).astype(float)
    n_f = len(y)
    cov = np.mean((y - y.mean()) * (eps - eps.mean()))
    return float(n_f * (y.mean() * (eps.mean() - 1.0) + cov))


# -- non-uniform alter selection ---------------------------------------------------


def inclusion_probabilities(propensities: Sequence[float], r: int) -> np.ndarray:
    """Exact inclusion probabilities for ``r`` sequential draws without replacement.

    Each draw picks a remaining item with probability proportional to its
    propensity.  Items with equal propensity are exchangeable, so the state is
    the number drawn from each propensity class.
    """
    w = np.asarray(propensities, dtype=float)
    d = len(w)
    if r > d or r < 0:
        raise ValidationError("need 0 <= r <= number of items")
    if np.any(~(w > 0)):
        raise ValidationError("propensities must be positive")
    if r == d:
        return np.ones(d)
    vals, cls = np.unique(w, return_inverse=True)
    sizes = np.bincount(cls, minlength=len(vals))
    n_cls = len(vals)
    expected_drawn = np.zeros(n_cls)
    states = {tuple([0] * n_cls): 1.0}
    for _ in range(r):
        nxt: dict[tuple[int, ...], float] = {}
        for state, prob in states.items():
            remaining = float(np.dot(sizes - np.asarray(state), vals))
            for c in range(n_cls):
                left = sizes[c] - state[c]
                if left == 0:
                    continue
                p = prob * left * vals[c] / remaining
                expected_drawn[c] += p
                s2 = state[:c] + (state[c] + 1,) + state[c + 1:]
                nxt[s2] = nxt.get(s2, 0.0) + p
        states = nxt
    return (expected_drawn / sizes)[cls]


@dataclass(frozen=True)
class AlterSelectionBias:
    """Bias of the total estimator under non-uniform alter selection.

    ``total`` is the direct sum over respondent-alter pairs; the three terms
    are the aggregate weight error, the network-size/weight-error relation and
    the weight-error/alter-trait relation, in units of connections.
    """

    total: float
    aggregate_weight_error: float
    size_weight_relation: float
    weight_trait_relation: float
    y_FZ: float

    @property
    def terms_sum(self) -> float:
        return self.aggregate_weight_error + self.size_weight_relation + self.weight_trait_relation

    def relative_terms(self) -> tuple[float, float, float]:
        """Terms divided by ``y_{F,Z}`` (the bracketed factors)."""
        if self.y_FZ == 0:
            raise DegenerateDenominatorError("y_FZ is zero")
        return (
            self.aggregate_weight_error / self.y_FZ,
            self.size_weight_relation / self.y_FZ,
            self.weight_trait_relation / self.y_FZ,
        )


def alter_weight_errors(pop: Population, alter_model: AlterSelectionModel) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """For each frame node: (neighbour indices, ``eps_ij = pi_ij * d_i / r_i``)."""
    a = pop.adjacency
    out = {}
    for i in np.flatnonzero(pop.frame):
        nbrs = a.indices[a.indptr[i]:a.indptr[i + 1]]
        d = len(nbrs)
        if d == 0:
            out[int(i)] = (nbrs, np.empty(0))
            continue
        r = min(d, alter_model.max_alters)
        w = alter_model.propensities(np.repeat(pop.groups[i], d), pop.groups[nbrs])
        pi = inclusion_probabilities(w, r)
        out[int(i)] = (nbrs, pi * d / r)
    return out


def alter_selection_bias(
    pop: Population, alter_model: AlterSelectionModel, trait: MembershipSet = "hidden"
) -> AlterSelectionBias:
    """Exact bias of ``yhat'_{F,Z}`` when alters are not a simple random subsample.

    Assumes accurate reports and correct respondent weights.  Isolated frame
    members have no alters; they get ``epsbar_i = 1`` and ``sigma_i = 0``,
    which leaves every sum unchanged.
    """
    zmask = pop.mask(trait)
    errs = alter_weight_errors(pop, alter_model)
    frame_idx = np.flatnonzero(pop.frame)
    n_f = len(frame_idx)
    y = np.zeros(n_f)
    z = np.zeros(n_f)
    eps_bar = np.ones(n_f)
    sigma = np.zeros(n_f)
    direct = 0.0
    for k, i in enumerate(frame_idx):
        nbrs, eps = errs[int(i)]
        if len(nbrs) == 0:
            continue
        zij = zmask[nbrs].astype(float)
        y[k] = len(nbrs)
        z[k] = zij.sum()
        eps_bar[k] = eps.mean()
        sigma[k] = np.mean(zij * eps) - zij.mean() * eps.mean()
        direct += float(np.sum(zij * (eps - 1.0)))

    def cov(a, b):
        return float(np.mean((a - a.mean()) * (b - b.mean())))

    y_fz = float(z.sum())
    term1 = float(y_fz * (eps_bar.mean() - 1.0))
    term2 = float(n_f * (sigma.mean() * y.mean() + cov(y, sigma)))
    term3 = n_f * cov(z, eps_bar)
    return AlterSelectionBias(direct, term1, term2, term3, y_fz)


# -- block-model sweep --------------------------------------------------------------


SWEEP_COLUMNS = (
    "sigma", "p_f_given_h", "nu_measured", "nu_predicted", "eta_f", "eta_h", "nh_hat_mean", "nh_true",
)


@dataclass(frozen=True)
class SweepConfig:
    """Grid over (sigma, p_{F|H}) for the two-block model.

    ``phi`` is set per cell so the expected F-F degree is ``frame_degree``.
    """

    sigmas: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    p_f_given_h: tuple[float, ...] = (0.1, 0.5, 0.9)
    n_hidden: int = 5000
    frame_degree: float = 5.0
    seeds: int = 200
    sample_fraction: float = 0.5
    max_alters: int = 3
    reporting: ReportingModel = ACCURATE
    seed: int = 0
    budget: float = 5e8

    def cell_spec(self, sigma: float, p: float) -> BlockModelSpec:
        n_f = int(round(p * self.n_hidden))
        if n_f < 2 or n_f > self.n_hidden:
            raise ValidationError(f"p_f_given_h={p} gives an unusable frame size {n_f}")
        phi = min(1.0, self.frame_degree / (n_f - 1))
        return BlockModelSpec(phi=phi, sigma=sigma, n_frame=n_f, n_hidden_only=self.n_hidden - n_f)

    def work_units(self) -> float:
        total = 0.0
        for s in self.sigmas:
            for p in self.p_f_given_h:
                spec = self.cell_spec(s, p)
                nf, no = spec.n_frame, spec.n_hidden_only
                edges = spec.phi * (nf * nf / 2 + no * no / 2 + spec.sigma * nf * no)
                total += self.seeds * (edges + self.n_hidden)
        return total


@dataclass(frozen=True)
class SweepCell:
    sigma: float
    p_f_given_h: float
    nu_measured: float
    nu_se: float
    nu_predicted: float
    eta_f: float
    eta_h: float
    nh_hat_mean: float
    nh_hat_se: float
    nh_true: int
    predicted_mean: float
    n_seeds: int

    def row(self) -> dict:
        return {k: getattr(self, k) for k in SWEEP_COLUMNS}


def run_cell(cfg: SweepConfig, sigma: float, p: float, cell_key: int) -> SweepCell:
    spec = cfg.cell_spec(sigma, p)
    nus, etas_f, etas_h, preds, nh_hats = [], [], [], [], []
    n = max(2, int(round(cfg.sample_fraction * spec.n_frame)))
    alter_model = AlterSelectionModel(max_alters=cfg.max_alters)
    for s in range(cfg.seeds):
        pop_seed = derive_seed(cfg.seed, cell_key, s, 0)
        pop = generate_block(spec, pop_seed)
        factors = measure_factors(pop, cfg.reporting)
        data = run_survey(pop, SamplingDesign(n), alter_model, cfg.reporting, derive_seed(cfg.seed, cell_key, s, 1))
        margins = FrameMargins(dict(Counter(pop.groups[pop.frame].tolist())))
        with warnings.catch_warnings():
            # small cells can miss a group; that cell then contributes nothing
            warnings.simplefilter("ignore")
            weights = poststratify(data, margins)
        nh_hats.append(estimate_NH(data, weights))
        nus.append(factors.nu)
        etas_f.append(factors.eta_F)
        etas_h.append(factors.eta_H)
        preds.append(predict_estimand(spec.n_hidden, factors))
    nus_a, nh_a = np.asarray(nus), np.asarray(nh_hats)
    k = len(nus)
    return SweepCell(
        sigma, p,
        float(nus_a.mean()), float(nus_a.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0,
        expected_visibility_ratio_block(spec),
        float(np.mean(etas_f)), float(np.mean(etas_h)),
        float(nh_a.mean()), float(nh_a.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0,
        spec.n_hidden, float(np.mean(preds)), k,
    )


def sensitivity_sweep(cfg: SweepConfig) -> list[SweepCell]:
    """Run every grid cell; refuses grids whose edge budget exceeds ``cfg.budget``."""
    work = cfg.work_units()
    if work > cfg.budget:
        scale = cfg.budget / work
        raise ValidationError(
            f"sweep needs about {work:.3g} work units, budget is {cfg.budget:.3g}; "
            f"try seeds <= {max(1, int(cfg.seeds * scale))} or a smaller n_hidden"
        )
    cells = []
    key = 0
    for p in cfg.p_f_given_h:
        for s in cfg.sigmas:
            cells.append(run_cell(cfg, s, p, key))
            key += 1
    return cells
