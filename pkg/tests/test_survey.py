import itertools

import numpy as np
import pytest
from scipy import stats

from netreport.errors import ValidationError
from netreport.population import Population, generate_er, total_degree_between
from netreport.rng import make_rng
from netreport.survey import (
    AlterSelectionModel,
    ReportingModel,
    SamplingDesign,
    _interview,
    census_design,
    draw_sample,
    full_enumeration,
    interview,
    run_survey,
)


def test_census_on_fixture(fixture6):
    data = run_survey(fixture6, census_design(fixture6), full_enumeration(fixture6), seed=0)
    assert data.respondent_id.tolist() == ["2", "3"]
    assert data.degree.tolist() == [3, 3]
    assert data.o.tolist() == [3, 2]
    assert data.f.tolist() == [1, 1]
    assert data.design_weight.tolist() == [1.0, 1.0]


def test_interview_single_respondent(fixture6):
    rec = interview(fixture6, 2, full_enumeration(fixture6), ReportingModel(), seed=1)
    assert (rec.degree, rec.n_hidden, rec.n_frame) == (3, 3, 1)
    with pytest.raises(ValidationError, match="not in the frame"):
        interview(fixture6, 1, full_enumeration(fixture6), ReportingModel(), seed=1)


def test_zero_degree_respondent():
    pop = Population.from_edges([1, 2, 3], [(2, 3)], frame=[1, 2], hidden=[1, 2, 3])
    rec = interview(pop, 1, AlterSelectionModel(), ReportingModel(), seed=0)
    assert rec.degree == 0 and rec.n_alters == 0


def test_sample_weights():
    pop = generate_er(1000, 400, 0.01, seed=0)
    s = draw_sample(pop, SamplingDesign(100), seed=3)
    assert len(s.nodes) == 100 and s.design_weights.sum() == 400
    one = draw_sample(pop, SamplingDesign(1), seed=3)
    assert one.design_weights.tolist() == [400.0]
    full = draw_sample(pop, SamplingDesign(400), seed=3)
    assert np.array_equal(np.sort(full.nodes), pop.node_ids[pop.frame]) and np.all(full.design_weights == 1)
    with pytest.raises(ValidationError):
        draw_sample(pop, SamplingDesign(401), seed=3)


def test_nonresponse_returns_only_respondents():
    pop = generate_er(2000, 1000, 0.005, seed=0, group_probs={"a": 0.5, "b": 0.5})
    s = draw_sample(pop, SamplingDesign(600, response_probs={"a": 0.5}), seed=1)
    groups = pop.groups[np.searchsorted(pop.node_ids, s.nodes)]
    assert s.n_drawn == 600 and len(s.nodes) < 600
    assert (groups == "a").sum() < (groups == "b").sum()
    assert np.all(s.design_weights == 1000 / 600)


def test_false_negative_one_blanks_hidden_reports():
    pop = generate_er(400, 100, 0.05, seed=1)
    data = run_survey(pop, SamplingDesign(50), reporting=ReportingModel(false_negative_hidden=1.0), seed=2)
    assert data.o.sum() == 0


def test_fixed_seed_is_reproducible():
    pop = generate_er(400, 100, 0.05, seed=1)
    a = run_survey(pop, SamplingDesign(50), seed=7).to_records()
    b = run_survey(pop, SamplingDesign(50), seed=7).to_records()
    assert a == b


def test_small_degree_gives_every_neighbour_truthfully():
    pop = generate_er(60, 30, 0.03, seed=5)
    data = run_survey(pop, census_design(pop), AlterSelectionModel(max_alters=3), seed=0)
    small = data.degree <= 3
    for i in np.flatnonzero(small):
        node = int(data.node[i])
        nbrs = sorted(pop.neighbors(node).tolist())
        got = sorted(int(v) for v in data.alter_node[i, : data.n_alters[i]])
        assert got == nbrs


def test_accurate_census_reports_true_totals():
    pop = generate_er(300, 80, 0.04, seed=2)
    data = run_survey(pop, census_design(pop), full_enumeration(pop), seed=0)
    assert data.o.sum() == total_degree_between(pop, "frame", "hidden")
    assert data.f.sum() == total_degree_between(pop, "frame", "frame")
    assert np.array_equal(data.z, data.f)


def test_uniform_alter_inclusion_is_r_over_d():
    # hub with 10 neighbours, pick 3
    edges = [(0, k) for k in range(1, 11)]
    pop = Population.from_edges(range(11), edges, frame=[0], hidden=range(11))
    model = AlterSelectionModel(max_alters=3)
    counts = np.zeros(11)
    draws = 20000
    for r in range(draws // 100):
        idx = np.zeros(100, dtype=np.int64)
        data = _interview(pop, idx, np.ones(100), model, ReportingModel(), make_rng(99, r))
        for v in data.alter_node.ravel():
            counts[v] += 1
    freq = counts[1:]
    assert freq.sum() == 3 * draws
    p = stats.chisquare(freq).pvalue
    assert p > 0.01


def test_weighted_selection_matches_sequential_pps():
    # respondent in group a; neighbours a, a, b, b with 3x same-group propensity
    pop = Population.from_edges(
        range(5), [(0, k) for k in range(1, 5)], frame=[0], hidden=range(5),
        groups={0: "a", 1: "a", 2: "a", 3: "b", 4: "b"},
    )
    model = AlterSelectionModel("weighted", max_alters=2, homophily=3.0)
    w = {1: 3.0, 2: 3.0, 3: 1.0, 4: 1.0}
    expected = dict.fromkeys(w, 0.0)
    for a, b in itertools.permutations(w, 2):
        p = w[a] / 8.0 * w[b] / (8.0 - w[a])
        expected[a] += p
        expected[b] += p
    counts = dict.fromkeys(w, 0)
    n = 20000
    data = _interview(pop, np.zeros(n, dtype=np.int64), np.ones(n), model, ReportingModel(), make_rng(4))
    for v in data.alter_node.ravel():
        counts[int(v)] += 1
    for k in w:
        assert abs(counts[k] / n - expected[k]) < 4 * np.sqrt(expected[k] * (1 - expected[k]) / n)


def test_heaping_rounds_large_degrees():
    pop = generate_er(300, 100, 0.1, seed=1)
    data = run_survey(pop, census_design(pop), seed=0, heaping_threshold=10)
    big = data.degree > 12
    assert np.all(data.degree[big] % 5 == 0)


@pytest.mark.parametrize(
    "kwargs",
    [{"kind": "cluster"}, {"max_alters": 0}, {"homophily": 0.0}],
)
def test_alter_model_validation(kwargs):
    with pytest.raises(ValidationError):
        AlterSelectionModel(**kwargs)


def test_reporting_model_validation():
    with pytest.raises(ValidationError):
        ReportingModel(false_negative_hidden=1.5)
    assert ReportingModel().is_accurate
    assert not ReportingModel(false_positive_frame=0.1).is_accurate
