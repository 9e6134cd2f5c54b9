"""Statistical battery for gait feature tables.

Normality screening (Shapiro-Wilk, Royston's approximation), two-sample
location tests (Welch or pooled t when both samples look normal, otherwise
the Mann-Whitney rank test with midranks, tie-corrected variance and
continuity correction), one-way ANOVA for multi-group rows, and Pearson
correlation.  Student-t and F tail probabilities go through the regularized
incomplete beta function evaluated by continued fraction.

Also here: column z-scoring for the radar-style group profiles and the mean
absolute offset of a standardized group from a baseline vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ValidationError

NORMALITY_ALPHA = 0.05  # Shapiro threshold steering the auto test branch


# ---------------------------------------------------------------------------
# special functions

def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def normal_ppf(p: float) -> float:
    """Inverse standard normal CDF (Wichura's rational approximation)."""
    if not (0.0 < p < 1.0):
        raise ValidationError(f"ppf argument {p} outside (0, 1)")
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    x = num / den
    return -x if q < 0 else x


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    MAXIT, EPS, FPMIN = 300, 3e-16, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < FPMIN:
        d = FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            return h
    raise NumericError("incomplete beta continued fraction did not converge")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValidationError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
             + a * math.log(x) + b * math.log(1.0 - x))
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, dof: float) -> float:
    return betainc_reg(0.5 * dof, 0.5, dof / (dof + t * t))


def f_upper_p(f: float, d1: float, d2: float) -> float:
    if f <= 0:
        return 1.0
    return betainc_reg(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f))


# ---------------------------------------------------------------------------
# tests

@dataclass(frozen=True)
class ShapiroResult:
    w: float
    p: float


@dataclass(frozen=True)
class MannWhitneyResult:
    u_a: float
    u_b: float
    p: float


@dataclass(frozen=True)
class TTestResult:
    statistic: float
    dof: float
    p: float
    pooled: bool


@dataclass(frozen=True)
class AnovaResult:
    f: float
    df_between: int
    df_within: int
    p: float


def shapiro_wilk(sample) -> ShapiroResult:
    """Shapiro-Wilk normality test, Royston's coefficient and p approximations.

    Valid for 3 <= n <= 5000 non-degenerate samples.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if n < 3 or n > 5000:
        raise ValidationError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    ssd = float(np.sum((x - x.mean()) ** 2))
    if ssd == 0.0 or x[0] == x[-1]:
        raise ValidationError("Shapiro-Wilk undefined for identical values")

    m = np.array([normal_ppf((i - 0.375) / (n + 0.25)) for i in range(1, n + 1)])
    ssq = float(m @ m)
    a = np.empty(n)
    if n == 3:
        a[0], a[1], a[2] = -math.sqrt(0.5), 0.0, math.sqrt(0.5)
    else:
        u = 1.0 / math.sqrt(n)
        c = m / math.sqrt(ssq)
        an = (c[-1] + 0.221157 * u - 0.147981 * u ** 2 - 2.071190 * u ** 3
              + 4.434685 * u ** 4 - 2.706056 * u ** 5)
        if n <= 5:
            phi = (ssq - 2.0 * m[-1] ** 2) / (1.0 - 2.0 * an ** 2)
            a[1:-1] = m[1:-1] / math.sqrt(phi)
            a[-1], a[0] = an, -an
        else:
            an1 = (c[-2] + 0.042981 * u - 0.293762 * u ** 2 - 1.752461 * u ** 3
                   + 5.682633 * u ** 4 - 3.582633 * u ** 5)
            phi = ((ssq - 2.0 * m[-1] ** 2 - 2.0 * m[-2] ** 2)
                   / (1.0 - 2.0 * an ** 2 - 2.0 * an1 ** 2))
            a[2:-2] = m[2:-2] / math.sqrt(phi)
            a[-1], a[0] = an, -an
            a[-2], a[1] = an1, -an1

    w = float((a @ x) ** 2 / ssd)
    w = min(w, 1.0)
    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        p = min(max(p, 0.0), 1.0)
    elif n <= 11:
        g = -2.273 + 0.459 * n
        mu = 0.5440 - 0.39978 * n + 0.025054 * n ** 2 - 0.0006714 * n ** 3
        sigma = math.exp(1.3822 - 0.77857 * n + 0.062767 * n ** 2
                         - 0.0020322 * n ** 3)
        if g - math.log(1.0 - w) <= 0:
            p = 0.0
        else:
            z = (-math.log(g - math.log(1.0 - w)) - mu) / sigma
            p = normal_sf(z)
    else:
        ln_n = math.log(n)
        mu = -1.5861 - 0.31082 * ln_n - 0.083751 * ln_n ** 2 + 0.0038915 * ln_n ** 3
        sigma = math.exp(-0.4803 - 0.082676 * ln_n + 0.0030302 * ln_n ** 2)
        z = (math.log(1.0 - w) - mu) / sigma
        p = normal_sf(z)
    return ShapiroResult(w=w, p=p)


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def mann_whitney(a, b) -> MannWhitneyResult:
    """Two-sided Mann-Whitney via the normal approximation.

    Midranks for ties, tie-corrected variance, continuity correction.  Both U
    statistics are computed from their own rank sums, so u_a + u_b = n_a*n_b
    holds only if the ranking is consistent.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = len(a), len(b)
    if na < 1 or nb < 1:
        raise ValidationError("both samples must be non-empty")
    combined = np.concatenate([a, b])
    n = na + nb
    ranks = _midranks(combined)
    u_a = float(np.sum(ranks[:na]) - na * (na + 1) / 2.0)
    u_b = float(np.sum(ranks[na:]) - nb * (nb + 1) / 2.0)
    _, counts = np.unique(combined, return_counts=True)
    tie_term = float(np.sum(counts.astype(float) ** 3 - counts))
    if n < 2 or tie_term >= n ** 3 - n:
        raise ValidationError("degenerate samples: all values identical")
    sigma2 = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)))
    mu = na * nb / 2.0
    diff = u_a - mu
    correction = -0.5 if diff > 0 else (0.5 if diff < 0 else 0.0)
    z = (diff + correction) / math.sqrt(sigma2)
    p = min(1.0, 2.0 * normal_sf(abs(z)))
    return MannWhitneyResult(u_a=u_a, u_b=u_b, p=p)


def t_test(a, b, pooled: bool = False) -> TTestResult:
    """Two-sample t test; Welch by default, classic pooled on request."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValidationError("t test needs at least two values per sample")
    va = float(np.var(a, ddof=1))
    vb = float(np.var(b, ddof=1))
    if pooled:
        dof = na + nb - 2
        sp2 = ((na - 1) * va + (nb - 1) * vb) / dof
        se2 = sp2 * (1.0 / na + 1.0 / nb)
    else:
        se2 = va / na + vb / nb
        dof = se2 ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    if se2 == 0.0:
        raise ValidationError("zero variance in both samples")
    t = (float(np.mean(a)) - float(np.mean(b))) / math.sqrt(se2)
    return TTestResult(statistic=t, dof=float(dof),
                       p=student_t_two_sided_p(t, float(dof)), pooled=pooled)


def anova(groups) -> AnovaResult:
    """One-way fixed-effects ANOVA over two or more groups."""
    arrays = [np.asarray(g, dtype=float) for g in groups]
    if len(arrays) < 2 or any(len(g) < 2 for g in arrays):
        raise ValidationError("ANOVA needs >= 2 groups with >= 2 values each")
    all_values = np.concatenate(arrays)
    grand = float(np.mean(all_values))
    ssb = sum(len(g) * (float(np.mean(g)) - grand) ** 2 for g in arrays)
    ssw = sum(float(np.sum((g - np.mean(g)) ** 2)) for g in arrays)
    dfb = len(arrays) - 1
    dfw = len(all_values) - len(arrays)
    if ssw == 0.0:
        raise ValidationError("zero within-group variance")
    f = (ssb / dfb) / (ssw / dfw)
    return AnovaResult(f=f, df_between=dfb, df_within=dfw,
                       p=f_upper_p(f, dfb, dfw))


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 3:
        raise ValidationError("pearson needs two equal-length samples, n >= 3")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        raise ValidationError("pearson undefined for a constant sample")
    return float(xc @ yc) / denom


# ---------------------------------------------------------------------------
# standardization and group profiles

def standardize(matrix):
    """Column z-scores with the sample SD; returns (z, means, sds)."""
    X = np.asarray(matrix, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValidationError("standardize expects a 2-D matrix with n >= 2 rows")
    means = X.mean(axis=0)
    sds = X.std(axis=0, ddof=1)
    zero = np.nonzero(sds == 0.0)[0]
    if len(zero):
        raise ValidationError(f"constant column(s) {zero.tolist()} cannot be standardized")
    return (X - means) / sds, means, sds


def baseline_offset(group_rows, baseline) -> float:
    """Mean absolute deviation of standardized members from a baseline
    profile, averaged over members and features."""
    rows = np.atleast_2d(np.asarray(group_rows, dtype=float))
    base = np.asarray(baseline, dtype=float)
    if rows.shape[1] != len(base):
        raise ValidationError("baseline length does not match feature count")
    return float(np.mean(np.abs(rows - base)))


# ---------------------------------------------------------------------------
# the comparison battery

@dataclass(frozen=True)
class Comparison:
    name: str
    groups: tuple       # keys into the grouped data
    method: str = "auto"  # auto | ttest | mannwhitney | anova


@dataclass(frozen=True)
class ComparisonOutcome:
    name: str
    method_used: str
    statistic: float
    p: float


@dataclass(frozen=True)
class FeatureRow:
    feature: str
    group_stats: dict    # group -> (mean, sd, n)
    outcomes: tuple


@dataclass
class GroupReport:
    rows: list
    groups: tuple
    comparisons: tuple
    alpha: float = 0.05

    def row(self, feature: str) -> FeatureRow:
        for r in self.rows:
            if r.feature == feature:
                return r
        raise KeyError(feature)

    def p_value(self, feature: str, comparison: str) -> float:
        for o in self.row(feature).outcomes:
            if o.name == comparison:
                return o.p
        raise KeyError(comparison)

    def significant(self, feature: str, comparison: str) -> bool:
        return self.p_value(feature, comparison) < self.alpha


def _auto_two_sample(a, b, pooled_t: bool) -> ComparisonOutcome:
    """Normality-gated branch: t test when both samples pass Shapiro-Wilk at
    the 0.05 screening level, Mann-Whitney otherwise."""
    normal = False
    if len(a) >= 3 and len(b) >= 3:
        try:
            normal = (shapiro_wilk(a).p > NORMALITY_ALPHA
                      and shapiro_wilk(b).p > NORMALITY_ALPHA)
        except ValidationError:
            normal = False
    if normal:
        r = t_test(a, b, pooled=pooled_t)
        return ComparisonOutcome("", "t", r.statistic, r.p)
    r = mann_whitney(a, b)
    return ComparisonOutcome("", "mannwhitney", r.u_a, r.p)


def compare_groups(grouped: dict, feature_names, comparisons,
                   alpha: float = 0.05, pooled_t: bool = False) -> GroupReport:
    """Run the battery for every feature over named group matrices.

    grouped maps a group key to an (n_members, n_features) matrix.  Every
    comparison runs per feature; "auto" picks t vs Mann-Whitney from the
    Shapiro-Wilk screen, anything else forces that test.
    """
    for key, mat in grouped.items():
        mat = np.asarray(mat, dtype=float)
        if mat.ndim != 2 or mat.shape[1] != len(feature_names):
            raise ValidationError(
                f"group {key!r} must be (members x {len(feature_names)} features)")
    rows = []
    for j, feature in enumerate(feature_names):
        stats_by_group = {}
        for key, mat in grouped.items():
            col = np.asarray(mat, dtype=float)[:, j]
            stats_by_group[key] = (float(np.mean(col)),
                                   float(np.std(col, ddof=1)), len(col))
        outcomes = []
        for comp in comparisons:
            cols = [np.asarray(grouped[g], dtype=float)[:, j] for g in comp.groups]
            if comp.method == "anova" or len(cols) > 2:
                r = anova(cols)
                outcomes.append(ComparisonOutcome(comp.name, "anova", r.f, r.p))
            elif comp.method == "ttest":
                r = t_test(cols[0], cols[1], pooled=pooled_t)
                outcomes.append(ComparisonOutcome(comp.name, "t", r.statistic, r.p))
            elif comp.method == "mannwhitney":
                r = mann_whitney(cols[0], cols[1])
                outcomes.append(ComparisonOutcome(comp.name, "mannwhitney", r.u_a, r.p))
            elif comp.method == "auto":
                o = _auto_two_sample(cols[0], cols[1], pooled_t)
                outcomes.append(ComparisonOutcome(comp.name, o.method_used,
                                                  o.statistic, o.p))
            else:
                raise ValidationError(f"unknown comparison method {comp.method!r}")
        rows.append(FeatureRow(feature=feature, group_stats=stats_by_group,
                               outcomes=tuple(outcomes)))
    return GroupReport(rows=rows, groups=tuple(grouped.keys()),
                       comparisons=tuple(c.name for c in comparisons), alpha=alpha)
