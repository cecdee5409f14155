import pytest

from stepset import Kind, StepwiseProcedure, ThresholdFunction, builtin, compile, parse
from stepset.verify import (
    CheckConfig,
    as_compiled,
    boundary_gap,
    check_condition1_part1,
    check_condition1_part2,
    check_condition2,
    check_monotonicity,
    oracle_equivalence,
    reference_cases,
)

SMALL = CheckConfig(trials=300)


def test_reports_are_deterministic():
    h = compile(parse("diff(bh(alpha), bonferroni(alpha))"))
    first = check_monotonicity(h, CheckConfig(trials=200, seed=3))
    again = check_monotonicity(h, CheckConfig(trials=200, seed=3))
    other = check_monotonicity(h, CheckConfig(trials=200, seed=4))
    assert first == again
    assert first.violations and first.violations != other.violations


def test_monotonicity_witnesses_replay():
    h = compile(parse("complement(bh(0.05), 0.05)"))
    report = check_monotonicity(h, SMALL)
    assert not report.passed
    for v in report.violations:
        assert all(x >= y for x, y in zip(v.p, v.q))
        assert not h(v.p) <= h(v.q)


def test_invariance_witnesses_replay():
    h = compile(parse("intersect(bh(0.1), sidak_sd(0.1))"))
    report = check_condition1_part1(h, CheckConfig(trials=2000))
    assert not report.passed
    for v in report.violations:
        rejected = h(v.p)
        assert h(v.q) != rejected
        for i, (a, b) in enumerate(zip(v.p, v.q), start=1):
            assert b <= a if i in rejected else b >= a


@pytest.mark.parametrize("expr", ["holm(alpha)", "union(bh(alpha), hochberg(alpha))", "sidak_su(0.2)"])
def test_guaranteed_procedures_pass(expr):
    h = compile(parse(expr))
    for check in (check_monotonicity, check_condition1_part1, check_condition1_part2):
        assert check(h, SMALL).passed


def test_decreasing_rank_threshold_rejected_by_condition2():
    tau = ThresholdFunction("down", lambda _a, sp: tuple(reversed(range(len(sp)))), depends_on_alpha=False)
    report = check_condition2(tau, 3, CheckConfig())
    assert not report.passed


def test_decreasing_level_caught():
    tau = ThresholdFunction("shrinking", lambda a, sp: (1.0 - a,) * len(sp))
    assert not check_condition2(tau, 2, CheckConfig()).passed
    assert not check_monotonicity(StepwiseProcedure(Kind.STEP_UP, tau), SMALL).passed


def test_discontinuous_level_caught():
    tau = ThresholdFunction("jump", lambda a, sp: (0.5 if a >= 0.305 else 0.0,) * len(sp))
    report = check_condition2(tau, 1, CheckConfig())
    assert any("jump" in v.detail for v in report.violations)


def test_rank_condition_implied_by_monotonicity():
    # thresholds that decrease in rank, with the last one below 1, are not monotone
    for top, bottom in [(0.9, 0.2), (0.5, 0.0), (0.3, 0.29)]:
        tau = ThresholdFunction("d", lambda _a, _sp, t=(top, bottom): t, depends_on_alpha=False, min_m=2)
        h = as_compiled(StepwiseProcedure(Kind.STEP_UP, tau, m=2))
        assert not check_monotonicity(h, CheckConfig(trials=0)).passed


def test_condition2_at_fixed_level_only_checks_rank():
    tau = builtin("bh").threshold
    report = check_condition2(tau, 4, CheckConfig(), alpha=0.05)
    assert report.passed and report.trials_run == 1


def test_boundary_gap():
    h = compile(parse("bonferroni(0.1)"))
    assert boundary_gap(h, (0.05, 0.5), None) == pytest.approx(0.0)
    assert boundary_gap(h, (0.04, 0.5), None) == pytest.approx(0.01)
    # a data-driven threshold equals one p-value by construction
    assert boundary_gap(compile(parse("topk(1)")), (0.2, 0.5), None) == pytest.approx(0.3)


def test_oracle_passes_for_exact_direction():
    report = oracle_equivalence(parse("union(bh(alpha), hochberg(alpha))"), SMALL)
    assert report.passed and report.trials_run == 300


def test_oracle_needs_closed_form():
    with pytest.raises(ValueError):
        oracle_equivalence(parse("diff(bh(0.1), holm(0.1))"), SMALL)


def test_reference_cases_pass():
    reports = reference_cases()
    assert len(reports) == 8
    assert all(r.passed for r in reports), [r.summary() for r in reports if not r.passed]


def test_config_validation():
    with pytest.raises(ValueError):
        CheckConfig(m_range=(0, 3))
    with pytest.raises(ValueError):
        CheckConfig(delta=1e-3, boundary_margin=1e-4)
    with pytest.raises(ValueError):
        CheckConfig(alpha_range=(0.5, 0.1))


def test_pinned_procedure_rejects_other_level():
    h = compile(parse("complement(bh(alpha), alpha)"), alpha=0.1)
    with pytest.raises(ValueError, match="fixed"):
        check_monotonicity(h, CheckConfig(trials=1, alpha=0.2))
    assert check_monotonicity(h, CheckConfig(trials=10)).trials_run == 10


def test_summary_text():
    report = check_monotonicity(compile(parse("holm(0.05)")), CheckConfig(trials=5))
    assert report.summary() == "monotonicity: pass over 5 trials"
    assert report.first_witness is None
