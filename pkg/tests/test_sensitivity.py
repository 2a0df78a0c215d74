import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netreport.errors import DegenerateDenominatorError, ValidationError
from netreport.estimators import FrameMargins, estimate_NH, poststratify
from netreport.population import BlockModelSpec, Population, generate_block, generate_er
from netreport.sensitivity import (
    SWEEP_COLUMNS,
    AdjustmentFactors,
    SweepConfig,
    alter_selection_bias,
    bias_from_bad_weights,
    inclusion_probabilities,
    measure_factors,
    measure_factors_simulated,
    predict_estimand,
    predicted_bias,
    run_cell,
    sensitivity_sweep,
)
from netreport.survey import AlterSelectionModel, ReportingModel, SamplingDesign, run_survey


def test_ideal_conditions():
    pop = generate_er(2000, 400, 0.01, seed=1)
    f = measure_factors(pop)
    assert (f.eta_H, f.eta_F) == (1.0, 1.0)
    assert f.nu == pytest.approx(1.0, abs=0.05)


def test_false_negatives_move_nu_not_eta():
    pop = generate_er(1000, 300, 0.02, seed=2)
    rep = ReportingModel(false_negative_hidden=0.2)
    f = measure_factors(pop, rep)
    base = measure_factors(pop)
    assert f.eta_H == 1.0 and f.tpr_hidden == pytest.approx(0.8)
    assert f.nu == pytest.approx(0.8 * base.nu)
    sim = measure_factors_simulated(pop, rep, replicates=40, seed=3)
    assert sim.eta_H == 1.0
    assert sim.nu == pytest.approx(f.nu, rel=0.01)


def test_false_positives_lower_eta_analytically_and_in_simulation():
    pop = generate_er(600, 200, 0.03, seed=4, n_total=900)
    # non-hidden nodes need ties to F for false positives to matter
    extra = [(int(a), int(b)) for a, b in zip(range(600, 900), range(0, 300))]
    ids = pop.node_ids
    edges = [(int(ids[a]), int(ids[b])) for a, b in pop.edges] + extra
    pop = Population.from_edges(ids, edges, ids[pop.frame], ids[pop.hidden], list(pop.groups))
    rep = ReportingModel(false_positive_hidden=0.3, false_positive_frame=0.1, false_negative_frame=0.1)
    f = measure_factors(pop, rep)
    assert f.eta_H < 1 and f.eta_F < 1
    sim = measure_factors_simulated(pop, rep, replicates=200, seed=5)
    assert sim.eta_H == pytest.approx(f.eta_H, rel=0.01)
    assert sim.eta_F == pytest.approx(f.eta_F, rel=0.01)
    assert sim.nu == pytest.approx(f.nu, rel=0.01)


def test_predict_estimand_arithmetic():
    assert predict_estimand(1000, AdjustmentFactors(1, 1, 1)) == 1000
    assert predict_estimand(1000, AdjustmentFactors(0.6, 0.9, 1.0)) == pytest.approx(1500)
    assert predicted_bias(1000, AdjustmentFactors(0.6, 0.9, 1.0)) == pytest.approx(500)
    with pytest.raises(DegenerateDenominatorError, match="fully masked"):
        predict_estimand(1000, AdjustmentFactors(0.0, 0.9, 1.0))
    with pytest.raises(ValidationError):
        AdjustmentFactors(1.2, 1, 1)
    with pytest.raises(ValidationError):
        AdjustmentFactors(1, 1, -0.1)


def test_zero_frame_ties_are_degenerate():
    pop = Population.from_edges([1, 2, 3], [(2, 3)], frame=[1], hidden=[1, 2, 3])
    with pytest.raises(DegenerateDenominatorError):
        measure_factors(pop)


def test_block_model_nu_and_bias():
    spec = BlockModelSpec(phi=5 / 499, sigma=0.5, n_frame=500, n_hidden_only=500)
    nus, nh = [], []
    for s in range(200):
        pop = generate_block(spec, seed=s)
        nus.append(measure_factors(pop).nu)
        data = run_survey(pop, SamplingDesign(250), seed=s)
        labels, counts = np.unique(pop.groups[pop.frame], return_counts=True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            w = poststratify(data, FrameMargins(dict(zip(labels.tolist(), counts.tolist()))))
        nh.append(estimate_NH(data, w))
    assert abs(np.mean(nus) / 0.75 - 1) < 0.03
    predicted = predict_estimand(1000, AdjustmentFactors(1, 1, 0.75))
    assert predicted == 750
    assert abs(np.mean(nh) / predicted - 1) < 0.03


# -- imperfect weights ----------------------------------------------------------------


def _ys(pop, trait_mask):
    return np.array([sum(trait_mask[pop.index_of(v)] for v in pop.neighbors(int(i))) for i in pop.node_ids[pop.frame]])


def test_bad_weights_trivial_cases():
    pop = generate_er(100, 40, 0.1, seed=1)
    n_f = pop.n_frame
    assert bias_from_bad_weights(pop, np.ones(n_f)) == 0
    y = _ys(pop, pop.hidden)
    assert bias_from_bad_weights(pop, np.full(n_f, 1.5)) == pytest.approx(n_f * y.mean() * 0.5)
    with pytest.raises(ValidationError):
        bias_from_bad_weights(pop, np.zeros(n_f))
    with pytest.raises(ValidationError):
        bias_from_bad_weights(pop, np.ones(n_f - 1))


def test_bad_weights_match_exhaustive_design_expectation():
    pop = generate_er(20, 8, 0.3, seed=7)
    frame_ids = pop.node_ids[pop.frame]
    y = _ys(pop, pop.hidden)
    eps = 0.5 + y / y.max()  # correlated with the trait count
    n = 3
    n_f = len(frame_ids)
    samples = list(itertools.combinations(range(n_f), n))
    expected = np.mean([sum(n_f / n * eps[i] * y[i] for i in s) for s in samples])
    bias = expected - y.sum()
    mapping = {int(v): float(e) for v, e in zip(frame_ids, eps)}
    assert bias_from_bad_weights(pop, mapping) == pytest.approx(bias, rel=1e-12)


# -- alter selection --------------------------------------------------------------------


def _perm_inclusion(w, r):
    d = len(w)
    out = np.zeros(d)
    for seq in itertools.permutations(range(d), r):
        p, left = 1.0, float(sum(w))
        for j in seq:
            p *= w[j] / left
            left -= w[j]
        out[list(seq)] += p
    return out


@given(st.lists(st.sampled_from([0.5, 1.0, 2.0, 3.0]), min_size=1, max_size=7), st.integers(1, 4))
@settings(max_examples=80, deadline=None)
def test_inclusion_probabilities_match_permutation_enumeration(w, r):
    r = min(r, len(w))
    got = inclusion_probabilities(w, r)
    assert np.allclose(got, _perm_inclusion(w, r), rtol=1e-12, atol=1e-14)
    assert got.sum() == pytest.approx(r)


def test_inclusion_probabilities_validation():
    with pytest.raises(ValidationError):
        inclusion_probabilities([1.0, 0.0], 1)
    with pytest.raises(ValidationError):
        inclusion_probabilities([1.0], 2)


def test_uniform_selection_has_no_bias():
    pop = generate_er(30, 15, 0.3, seed=1, group_probs={"a": 1, "b": 1})
    b = alter_selection_bias(pop, AlterSelectionModel(max_alters=3), trait=pop.groups == "a")
    assert b.total == pytest.approx(0, abs=1e-12)
    assert max(abs(b.aggregate_weight_error), abs(b.size_weight_relation), abs(b.weight_trait_relation)) < 1e-12


def _enumerated_bias(pop, model, zmask):
    """E[yhat'] - y by walking every ordered alter sequence."""
    total = 0.0
    for i in np.flatnonzero(pop.frame):
        node = int(pop.node_ids[i])
        nbrs = [pop.index_of(v) for v in pop.neighbors(node)]
        d = len(nbrs)
        if d == 0:
            continue
        r = min(d, model.max_alters)
        w = model.propensities(np.repeat(pop.groups[i], d), pop.groups[nbrs])
        expect = 0.0
        for seq in itertools.permutations(range(d), r):
            p, left = 1.0, w.sum()
            for j in seq:
                p *= w[j] / left
                left -= w[j]
            expect += p * d / r * sum(zmask[nbrs[j]] for j in seq)
        total += expect - sum(zmask[k] for k in nbrs)
    return total


def test_homophilic_selection_matches_enumeration_on_15_nodes():
    pop = generate_er(15, 9, 0.35, seed=3, group_probs={"a": 1, "b": 1})
    model = AlterSelectionModel("weighted", max_alters=3, homophily=3.0)
    zmask = pop.groups == "a"
    b = alter_selection_bias(pop, model, trait=zmask)
    oracle = _enumerated_bias(pop, model, zmask)
    assert b.total == pytest.approx(oracle, rel=1e-12, abs=1e-12)
    assert abs(oracle) > 0.1


@given(
    st.integers(0, 10_000),
    st.integers(5, 14),
    st.floats(0.15, 0.6),
    st.integers(1, 3),
    st.floats(0.2, 5.0),
)
@settings(max_examples=100, deadline=None)
def test_decomposition_sums_to_direct_bias(seed, n, p, k, h):
    pop = generate_er(n, max(2, n // 2), p, seed=seed, group_probs={"a": 1, "b": 1, "c": 1})
    model = AlterSelectionModel("weighted", max_alters=k, homophily=h)
    b = alter_selection_bias(pop, model, trait=pop.groups == "a")
    scale = max(1.0, abs(b.total), b.y_FZ)
    assert abs(b.terms_sum - b.total) <= 1e-9 * scale


def test_zero_propensity_is_rejected():
    pop = generate_er(10, 5, 0.5, seed=1)
    model = AlterSelectionModel("weighted", propensity_fn=lambda a, b: 0.0)
    with pytest.raises(ValidationError):
        alter_selection_bias(pop, model)


# -- sweep --------------------------------------------------------------------------------


def test_sweep_refuses_oversized_grid():
    with pytest.raises(ValidationError, match="budget"):
        sensitivity_sweep(SweepConfig(seeds=10**6))


def test_small_sweep_rows():
    cfg = SweepConfig(sigmas=(0.5, 1.0), p_f_given_h=(0.5,), n_hidden=1000, seeds=20)
    cells = sensitivity_sweep(cfg)
    assert [tuple(c.row()) for c in cells] == [SWEEP_COLUMNS, SWEEP_COLUMNS]
    by_sigma = {c.sigma: c for c in cells}
    assert by_sigma[1.0].nu_measured == pytest.approx(1.0, abs=4 * by_sigma[1.0].nu_se + 0.01)
    assert by_sigma[0.5].nu_predicted == 0.75
    assert run_cell(cfg, 0.5, 0.5, 0) == run_cell(cfg, 0.5, 0.5, 0)
