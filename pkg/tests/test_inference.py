import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctsim.inference import (
    NARROW_LEGEND,
    CFS_POPULATION_MEAN,
    ClassificationThresholds,
    Grade,
    GradeMode,
    IrreversibilityError,
    Metric,
    PipelineError,
    SubjectRecord,
    TransitionCounts,
    TransitionTable,
    Treatment,
    aggregate_grades,
    audit_irreversibility,
    classify_post,
    classify_pre,
    estimate_lambda_hat,
    frequency_to_intensity,
    intensity_se,
    pairwise_tests,
    significance_stars,
    subgroup_split,
    synthetic_records,
    threshold_sweep,
    transition_table,
    two_prop_test,
)
from ctsim.io import load_counts
from ctsim.model import ModelError, State

P, F = Grade.PASS, Grade.FAIL
DEFAULT = ClassificationThresholds()
grades_st = st.lists(st.sampled_from([P, F]), min_size=1, max_size=7)


def _rec(sid="1", kts=8, fam=1, own=2, opp=2, grades=(P, P, P), treatment="newspaper", **kw):
    return SubjectRecord(sid, treatment, kts, fam, own, opp, grades, **kw)


def test_aggregate_examples():
    assert aggregate_grades([P, P, F], GradeMode.MAJORITY) is P
    assert aggregate_grades([P, P, F], GradeMode.UNANIMITY) is F
    assert aggregate_grades([P, F], GradeMode.MAJORITY) is F
    with pytest.raises(PipelineError):
        aggregate_grades([])


@given(grades_st)
def test_unanimity_pass_implies_majority_pass(grades):
    if aggregate_grades(grades, GradeMode.UNANIMITY) is P:
        assert aggregate_grades(grades, GradeMode.MAJORITY) is P


def test_classify_pre_examples():
    assert classify_pre(_rec(), DEFAULT) is State.A
    assert classify_pre(_rec(kts=4), DEFAULT) is State.S
    assert classify_pre(_rec(kts=10, fam=0), DEFAULT) is State.S
    assert classify_pre(_rec(kts=7, own=1, opp=2), DEFAULT) is State.A
    assert classify_pre(_rec(kts=7, own=0, opp=5), DEFAULT) is State.S


def test_strict_knowledge_threshold():
    strict = ClassificationThresholds(kts_strict=True)
    assert classify_pre(_rec(kts=7), DEFAULT) is State.A
    assert classify_pre(_rec(kts=7), strict) is State.S


@given(st.integers(0, 10), st.integers(0, 1), st.integers(0, 5), st.integers(0, 5),
       st.integers(0, 9), st.integers(0, 3), st.integers(0, 6))
def test_classify_pre_monotone_in_thresholds(kts, fam, own, opp, tau, mps, total):
    r = _rec(kts=kts, fam=fam, own=own, opp=opp)
    loose = ClassificationThresholds(tau, mps, total)
    for tighter in (ClassificationThresholds(tau + 1, mps, total),
                    ClassificationThresholds(tau, mps + 1, total),
                    ClassificationThresholds(tau, mps, total + 1)):
        if classify_pre(r, loose) is State.S:
            assert classify_pre(r, tighter) is State.S


def test_classify_post_modes():
    r = _rec(grades=(P, P, F))
    assert classify_post(r, DEFAULT) is State.A
    assert classify_post(r, ClassificationThresholds(grade_mode="unanimity")) is State.S
    assert classify_post(_rec(grades=(P, F, F)), DEFAULT) is State.S
    with pytest.raises(PipelineError):
        classify_post(_rec(grades=()), DEFAULT)


def test_record_validation():
    with pytest.raises(ModelError):
        _rec(kts=11)
    with pytest.raises(ModelError):
        _rec(fam=2)
    with pytest.raises(ValueError):
        _rec(treatment="radio")
    with pytest.raises(ModelError):
        ClassificationThresholds(tau_kts=11)


def test_reason_counter_mapping():
    th = ClassificationThresholds.from_reason_counter(7, 2)
    assert (th.min_per_side, th.total) == (1, 3) and th == DEFAULT


def test_transition_table_empty_and_basic():
    assert transition_table([], DEFAULT).counts == {}
    recs = [_rec("1", kts=2, grades=(P, P, F)), _rec("2", kts=2, grades=(F, F, F)),
            _rec("3", grades=(P, P, P), treatment="twitter")]
    tt = transition_table(recs, DEFAULT)
    assert tt["newspaper"] == TransitionCounts(s_to_s=1, s_to_a=1)
    assert tt[Treatment.TWITTER] == TransitionCounts(a_to_a=1)


def test_transition_table_rejects_backward_moves():
    recs = [_rec("ok", kts=2), _rec("bad-7", grades=(F, F, F))]
    with pytest.raises(IrreversibilityError) as err:
        transition_table(recs, DEFAULT)
    assert err.value.subject_ids == ["bad-7"]
    assert "bad-7" in str(err.value)


def test_fixture_counts_and_lambda_hat():
    tt = load_counts("two_state")
    assert tt["newspaper"] == TransitionCounts(s_to_s=111, s_to_a=49, a_to_a=12)
    assert tt["twitter"] == TransitionCounts(s_to_s=135, s_to_a=43, a_to_a=15)
    assert tt["facebook"] == TransitionCounts(s_to_s=111, s_to_a=60, a_to_a=11)
    fb = estimate_lambda_hat(tt, "facebook")
    assert fb.as_fraction() == Fraction(60, 171)
    assert fb.freq == pytest.approx(0.350877, abs=1e-6)
    assert estimate_lambda_hat(tt, "newspaper").freq == 0.30625
    assert fb.se == pytest.approx(math.sqrt(fb.freq * (1 - fb.freq) / 171))


def test_lambda_hat_edge_cases():
    tt = TransitionTable({"x": TransitionCounts(s_to_s=100), "y": TransitionCounts(a_to_a=3)})
    e = estimate_lambda_hat(tt, "x")
    assert (e.freq, e.se) == (0.0, 0.0)
    with pytest.raises(PipelineError):
        estimate_lambda_hat(tt, "y")


def test_two_prop_examples():
    assert two_prop_test(0.241573, 178, 0.350877, 171).t_ratio == pytest.approx(-2.249, abs=5e-4)
    assert two_prop_test(0.30625, 160, 0.241573, 178).t_ratio == pytest.approx(1.332, abs=5e-4)
    assert two_prop_test(0.3, 50, 0.3, 50).t_ratio == 0.0
    with pytest.raises(PipelineError):
        two_prop_test(0.5, 0, 0.5, 10)


def test_pooled_variant_differs():
    a = two_prop_test(0.241573, 178, 0.350877, 171)
    b = two_prop_test(0.241573, 178, 0.350877, 171, pooled=True)
    assert a.se != b.se and a.diff == b.diff


@given(st.floats(0.01, 0.99), st.integers(1, 500), st.floats(0.01, 0.99), st.integers(1, 500),
       st.booleans())
def test_two_prop_antisymmetry(f1, n1, f2, n2, pooled):
    a = two_prop_test(f1, n1, f2, n2, pooled)
    b = two_prop_test(f2, n2, f1, n1, pooled)
    assert a.t_ratio == -b.t_ratio and a.p_value == b.p_value


def test_pairwise_fixture_matrix():
    m = pairwise_tests(load_counts("two_state"))
    assert m.get("newspaper", "twitter").t_ratio == pytest.approx(1.332, abs=5e-3)
    assert m.get("newspaper", "facebook").t_ratio == pytest.approx(-0.865, abs=5e-3)
    assert m.get("twitter", "facebook").t_ratio == pytest.approx(-2.249, abs=5e-3)
    assert m.get("facebook", "twitter").t_ratio == -m.get("twitter", "facebook").t_ratio
    assert m.significant() == [("twitter", "facebook")]
    text = m.render()
    assert "-2.249**" in text and "p<0.1" in text


def test_pairwise_duplicate_is_zero():
    c = TransitionCounts(s_to_s=10, s_to_a=5)
    m = pairwise_tests(TransitionTable({"a": c, "b": c}))
    assert m.get("a", "b").t_ratio == 0.0
    with pytest.raises(PipelineError):
        pairwise_tests(TransitionTable({"a": c}))


def test_star_legends():
    assert significance_stars(0.02) == "**"
    assert significance_stars(0.02, NARROW_LEGEND) == "*"
    assert significance_stars(0.0005, NARROW_LEGEND) == "***"
    assert significance_stars(0.2) == ""


def test_audit_irreversibility():
    audit_irreversibility(load_counts("three_state"))
    bad = TransitionTable({"pooled": TransitionCounts(s_to_s=3, t_to_a=1)})
    with pytest.raises(IrreversibilityError) as err:
        audit_irreversibility(bad)
    assert err.value.cells == {"pooled": {"t_to_a": 1}}


def test_subgroup_split_conventions():
    recs = [_rec(str(i), cfs_score=55.0, nfc_score=3.0) for i in range(4)]
    s = subgroup_split(recs, Metric.CFS, CFS_POPULATION_MEAN)
    assert s.sizes == (4, 0) and s.cut == 55.0
    assert subgroup_split(recs, Metric.NFC, "mean").sizes == (4, 0)
    with pytest.raises(PipelineError):
        subgroup_split([_rec()], Metric.AI_GRADE)
    with pytest.raises(PipelineError):
        subgroup_split(recs, Metric.NFC, "median")


def test_subgroup_split_bimodal():
    rng = np.random.default_rng(4)
    scores = np.concatenate([rng.normal(2, 0.2, 50), rng.normal(4, 0.2, 50)])
    recs = [_rec(str(i), nfc_score=float(s)) for i, s in enumerate(scores)]
    s = subgroup_split(recs, Metric.NFC)
    hi = np.mean([r.nfc_score for r in s.high])
    lo = np.mean([r.nfc_score for r in s.low])
    assert lo < s.cut <= hi and s.sizes == (50, 50)


def _synthetic(seed=0, n=300):
    probs = {"newspaper": 0.3, "twitter": 0.24, "facebook": 0.35}
    return synthetic_records(n, probs, np.random.default_rng(seed))


def test_sweep_grid_shape_and_monotone_pre_aware():
    cells = threshold_sweep(_synthetic(), [6, 7, 8], [2, 3])
    assert len(cells) == 6
    for rc in (2, 3):
        pre = [c.pre_aware for c in cells if c.reason_counter == rc]
        assert pre == sorted(pre, reverse=True)


def test_sweep_single_cell_equals_baseline():
    recs = _synthetic(1)
    (cell,) = threshold_sweep(recs, [7], [2])
    base = pairwise_tests(transition_table(recs, DEFAULT))
    assert cell.matrix == base and cell.table == transition_table(recs, DEFAULT)


def test_sweep_rejects_empty_grid():
    with pytest.raises(PipelineError):
        threshold_sweep([], [], [2])


def test_grade_mode_changes_matrix():
    recs = _synthetic(2)
    a = pairwise_tests(transition_table(recs, DEFAULT))
    b = pairwise_tests(transition_table(recs, ClassificationThresholds(grade_mode="unanimity")))
    assert a != b


def test_frequency_to_intensity():
    assert frequency_to_intensity(0.0, 2.0) == 0.0
    assert frequency_to_intensity(1 - math.exp(-1), 1.0) == pytest.approx(1.0, abs=1e-15)
    assert frequency_to_intensity(0.350877, 1.0) == pytest.approx(0.432133, abs=1e-6)
    with pytest.raises(PipelineError):
        frequency_to_intensity(1.0, 1.0)
    with pytest.raises(PipelineError):
        frequency_to_intensity(0.5, 0.0)


@pytest.mark.parametrize("lam,exposure", [(0.4, 1.0), (1.5, 0.5)])
def test_intensity_recovered_from_model_data(lam, exposure):
    rng = np.random.default_rng(int(lam * 10))
    n = 20_000
    moved = int(np.count_nonzero(rng.standard_exponential(n) / lam <= exposure))
    tt = TransitionTable({"x": TransitionCounts(s_to_s=n - moved, s_to_a=moved)})
    est = estimate_lambda_hat(tt, "x")
    got = frequency_to_intensity(est.freq, exposure)
    assert abs(got - lam) <= 4 * intensity_se(est, exposure)
