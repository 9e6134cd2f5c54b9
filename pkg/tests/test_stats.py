"""Statistical battery: distributions, tests, and the group report."""

import numpy as np
import pytest

scipy_stats = pytest.importorskip("scipy.stats")

from gaitfusion.errors import ValidationError
from gaitfusion.stats import (Comparison, anova, baseline_offset, betainc_reg,
                              compare_groups, f_upper_p, mann_whitney,
                              normal_cdf, normal_ppf, normal_sf, pearson,
                              shapiro_wilk, standardize, student_t_two_sided_p,
                              t_test)


def test_normal_cdf_known_points():
    assert normal_cdf(0.0) == pytest.approx(0.5, abs=1e-15)
    assert normal_cdf(1.959963984540054) == pytest.approx(0.975, abs=1e-12)
    assert normal_sf(1.0) == pytest.approx(1.0 - normal_cdf(1.0), abs=1e-15)


def test_normal_ppf_round_trip():
    for p in (1e-6, 0.01, 0.3, 0.5, 0.7, 0.99, 1 - 1e-6):
        assert normal_cdf(normal_ppf(p)) == pytest.approx(p, abs=1e-9)
    assert normal_ppf(0.975) == pytest.approx(1.959963984540054, abs=1e-9)


def test_normal_ppf_matches_reference():
    ps = np.linspace(0.001, 0.999, 97)
    ours = np.array([normal_ppf(p) for p in ps])
    np.testing.assert_allclose(ours, scipy_stats.norm.ppf(ps), atol=1e-12)


def test_betainc_identities_and_reference():
    for x in (0.0, 0.25, 0.5, 0.9, 1.0):
        assert betainc_reg(1.0, 1.0, x) == pytest.approx(x, abs=1e-14)
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = rng.uniform(0.5, 20.0, 2)
        x = rng.uniform(0.0, 1.0)
        ours = betainc_reg(a, b, x)
        assert ours == pytest.approx(scipy_stats.beta.cdf(x, a, b), abs=1e-12)
        assert ours + betainc_reg(b, a, 1.0 - x) == pytest.approx(1.0,
                                                                  abs=1e-12)


def test_student_t_p_values():
    # Cauchy case has the closed form 1 - (2/pi) atan|t|.
    assert student_t_two_sided_p(1.0, 1.0) == pytest.approx(0.5, abs=1e-12)
    for t in (0.0, 0.5, 2.1, 7.3):
        for dof in (1, 2, 5, 30, 200):
            ref = 2.0 * scipy_stats.t.sf(abs(t), dof)
            assert student_t_two_sided_p(t, dof) == pytest.approx(ref,
                                                                  abs=1e-12)


def test_f_p_values_match_reference():
    for f in (0.2, 1.0, 3.7, 10.0):
        for d1, d2 in ((1, 10), (2, 57), (5, 3)):
            ref = scipy_stats.f.sf(f, d1, d2)
            assert f_upper_p(f, d1, d2) == pytest.approx(ref, abs=1e-12)


def test_shapiro_wilk_matches_reference():
    rng = np.random.default_rng(1)
    for n in (3, 5, 11, 25, 50):
        x = rng.standard_normal(n)
        ours = shapiro_wilk(x)
        ref = scipy_stats.shapiro(x)
        assert 0.0 < ours.w <= 1.0
        assert ours.w == pytest.approx(ref.statistic, abs=1e-6)
        assert ours.p == pytest.approx(ref.pvalue, abs=1e-4)


def test_shapiro_wilk_separates_shapes():
    rng = np.random.default_rng(2)
    assert shapiro_wilk(rng.standard_normal(50)).p > 0.05
    assert shapiro_wilk(rng.exponential(1.0, 50)).p < 0.05


def test_shapiro_wilk_guards():
    with pytest.raises(ValidationError):
        shapiro_wilk([1.0, 2.0])
    with pytest.raises(ValidationError):
        shapiro_wilk(np.full(20, 3.3))


def test_mann_whitney_hand_case():
    res = mann_whitney([1.0, 2.0], [3.0, 4.0])
    assert res.u_a == 0.0 and res.u_b == 4.0


def test_mann_whitney_u_identity_and_reference():
    rng = np.random.default_rng(3)
    for _ in range(25):
        a = rng.integers(0, 8, rng.integers(4, 12)).astype(float)
        b = rng.integers(0, 8, rng.integers(4, 12)).astype(float)
        res = mann_whitney(a, b)
        assert res.u_a + res.u_b == pytest.approx(len(a) * len(b), abs=1e-12)
        ref = scipy_stats.mannwhitneyu(a, b, alternative="two-sided",
                                       method="asymptotic")
        assert res.p == pytest.approx(ref.pvalue, abs=1e-12)


def test_t_test_welch_and_pooled_match_reference():
    rng = np.random.default_rng(4)
    a = rng.normal(0.0, 1.0, 14)
    b = rng.normal(0.6, 2.0, 9)
    welch = t_test(a, b)
    ref_w = scipy_stats.ttest_ind(a, b, equal_var=False)
    assert welch.statistic == pytest.approx(ref_w.statistic, abs=1e-12)
    assert welch.p == pytest.approx(ref_w.pvalue, abs=1e-12)
    assert min(len(a), len(b)) - 1 <= welch.dof <= len(a) + len(b) - 2
    pooled = t_test(a, b, pooled=True)
    ref_p = scipy_stats.ttest_ind(a, b, equal_var=True)
    assert pooled.statistic == pytest.approx(ref_p.statistic, abs=1e-12)
    assert pooled.p == pytest.approx(ref_p.pvalue, abs=1e-12)
    assert pooled.dof == len(a) + len(b) - 2


def test_anova_matches_reference_and_t_square():
    rng = np.random.default_rng(5)
    groups = [rng.normal(m, 1.0, n) for m, n in ((0.0, 11), (0.4, 9),
                                                 (0.9, 13))]
    res = anova(groups)
    ref = scipy_stats.f_oneway(*groups)
    assert res.f == pytest.approx(ref.statistic, abs=1e-10)
    assert res.p == pytest.approx(ref.pvalue, abs=1e-12)
    assert (res.df_between, res.df_within) == (2, 30)
    a, b = groups[:2]
    two = anova([a, b])
    tt = t_test(a, b, pooled=True)
    assert two.f == pytest.approx(tt.statistic ** 2, rel=1e-12)
    assert two.p == pytest.approx(tt.p, abs=1e-12)


def test_anova_needs_two_groups():
    with pytest.raises(ValidationError):
        anova([np.arange(5.0)])


def test_pearson_perfect_lines_and_reference():
    x = np.arange(20.0)
    assert pearson(x, 3.0 * x + 1.0) == pytest.approx(1.0, abs=1e-12)
    assert pearson(x, -0.5 * x + 4.0) == pytest.approx(-1.0, abs=1e-12)
    rng = np.random.default_rng(6)
    u, v = rng.standard_normal(40), rng.standard_normal(40)
    assert pearson(u, v) == pytest.approx(scipy_stats.pearsonr(u, v).statistic,
                                          abs=1e-12)


def test_standardize_columns():
    rng = np.random.default_rng(7)
    m = rng.normal(3.0, 2.5, (40, 4))
    z, means, sds = standardize(m)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(z.std(axis=0, ddof=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(means, m.mean(axis=0))
    m[:, 2] = 5.0
    with pytest.raises(ValidationError, match="2"):
        standardize(m)


def test_baseline_offset_identity_and_shift():
    rng = np.random.default_rng(8)
    base = rng.normal(0.0, 1.0, 5)
    assert baseline_offset(base[None, :], base) == pytest.approx(0.0,
                                                                 abs=1e-12)
    rows = np.tile(base, (7, 1)) + 1.0
    assert baseline_offset(rows, base) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValidationError):
        baseline_offset(rows, base[:3])


def _grouped(rng, shift=0.0, heavy=False):
    def draw(n):
        if heavy:
            return rng.integers(0, 4, n).astype(float)
        return rng.normal(0.0, 1.0, n)

    return {
        "one": np.column_stack([draw(20), draw(20) + shift]),
        "two": np.column_stack([draw(20) + shift, draw(20)]),
    }


def test_compare_groups_parametric_branch():
    rng = np.random.default_rng(0)   # all four draws pass the normality screen
    grouped = _grouped(rng, shift=2.0)
    report = compare_groups(grouped, ("f1", "f2"),
                            (Comparison("pair", ("one", "two")),))
    row = report.row("f1")
    assert row.outcomes[0].method_used == "t"
    assert report.significant("f1", "pair")
    assert report.p_value("f1", "pair") < 0.01
    stats_one = row.group_stats["one"]
    assert stats_one[2] == 20


def test_compare_groups_rank_branch_for_ties():
    rng = np.random.default_rng(10)
    grouped = _grouped(rng, heavy=True)
    report = compare_groups(grouped, ("f1", "f2"),
                            (Comparison("pair", ("one", "two")),))
    assert report.row("f1").outcomes[0].method_used == "mannwhitney"


def test_compare_groups_anova_method():
    rng = np.random.default_rng(11)
    grouped = {g: rng.normal(i, 1.0, (15, 2))
               for i, g in enumerate(("a", "b", "c"))}
    report = compare_groups(grouped, ("f1", "f2"),
                            (Comparison("abc", ("a", "b", "c"),
                                        method="anova"),))
    out = report.row("f2").outcomes[0]
    assert out.method_used == "anova"
    assert out.p < 0.05


def test_compare_groups_unknown_lookups_raise():
    rng = np.random.default_rng(12)
    report = compare_groups(_grouped(rng), ("f1", "f2"),
                            (Comparison("pair", ("one", "two")),))
    with pytest.raises(KeyError):
        report.row("nope")
    with pytest.raises(KeyError):
        report.p_value("f1", "nope")


def test_compare_groups_unknown_method_rejected():
    rng = np.random.default_rng(13)
    with pytest.raises(ValidationError, match="bayes"):
        compare_groups(_grouped(rng), ("f1", "f2"),
                       (Comparison("pair", ("one", "two"),
                                   method="bayes"),))
