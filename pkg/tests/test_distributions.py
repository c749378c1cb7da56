"""Closed forms, threshold stability, and distortion families."""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from tailsplit.distributions import (
    GpdParams,
    GpdTransform,
    WeibullParams,
    gamma_mixture_check,
    gpd_cdf,
    gpd_condition,
    gpd_quantile,
    gpd_survival,
    gpd_truncated_quantile,
    inverted_gpd_cdf,
    transform_cdf,
    transform_survival,
    weibull_cdf,
    weibull_conditional_survival,
    weibull_quantile,
    weibull_survival,
    weibull_truncated_quantile,
)

# parameter ranges keep every probability comfortably inside double precision
gpd_shapes = st.floats(0.05, 5.0)
gpd_scales = st.floats(0.1, 30.0)
wb_scales = st.floats(0.1, 30.0)
wb_shapes = st.floats(0.3, 4.0)
levels = st.floats(0.0, 50.0)
probs = st.floats(1e-9, 1.0 - 1e-9)


def test_gpd_params_validation():
    with pytest.raises(ValueError):
        GpdParams(c=0.0, a=1.0)
    with pytest.raises(ValueError):
        GpdParams(c=1.0, a=-2.0)
    with pytest.raises(ValueError):
        GpdParams(c=math.inf, a=1.0)
    with pytest.raises(ValueError):
        WeibullParams(alpha=1.0, beta=0.0)


def test_gpd_survival_matches_direct_formula():
    p = GpdParams(c=0.7, a=2.5)
    for x in (0.0, 0.3, 1.0, 10.0, 250.0):
        direct = (1.0 + p.c * x / p.a) ** (-1.0 / p.c)
        assert gpd_survival(x, p) == pytest.approx(direct, rel=1e-13)
    assert gpd_survival(0.0, p) == 1.0


def test_gpd_survival_rejects_negative_argument():
    with pytest.raises(ValueError):
        gpd_survival(-0.1, GpdParams(1.0, 1.0))


def test_gpd_quantile_domain():
    p = GpdParams(1.0, 1.0)
    assert gpd_quantile(0.0, p) == 0.0
    with pytest.raises(ValueError):
        gpd_quantile(1.0, p)
    with pytest.raises(ValueError):
        gpd_quantile(-0.2, p)


@given(c=gpd_shapes, a=gpd_scales, q=probs)
@settings(max_examples=200)
def test_gpd_quantile_round_trip(c, a, q):
    p = GpdParams(c, a)
    x = gpd_quantile(q, p)
    assert gpd_cdf(x, p) == pytest.approx(q, rel=1e-10, abs=1e-12)
    assert gpd_survival(x, p) == pytest.approx(1.0 - q, rel=1e-10)


@given(c=gpd_shapes, a=gpd_scales, x=levels)
@settings(max_examples=200)
def test_gpd_cdf_survival_complement(c, a, x):
    p = GpdParams(c, a)
    assert gpd_cdf(x, p) + gpd_survival(x, p) == pytest.approx(1.0, abs=1e-12)


@given(c=gpd_shapes, a=gpd_scales, s=levels, x=levels)
@settings(max_examples=300)
def test_gpd_threshold_stability(c, a, s, x):
    # the conditional law of the excess over s is again GPD with scale a + c*s
    p = GpdParams(c, a)
    ratio = gpd_survival(s + x, p) / gpd_survival(s, p)
    assert ratio == pytest.approx(gpd_survival(x, gpd_condition(p, s)), rel=1e-10)


@given(c=gpd_shapes, a=gpd_scales, s=st.floats(0.0, 20.0), t=st.floats(0.0, 20.0))
@settings(max_examples=200)
def test_gpd_condition_composes(c, a, s, t):
    p = GpdParams(c, a)
    once = gpd_condition(p, s + t)
    twice = gpd_condition(gpd_condition(p, s), t)
    assert twice.c == once.c
    assert twice.a == pytest.approx(once.a, rel=1e-12)


def test_gpd_condition_rejects_negative_threshold():
    with pytest.raises(ValueError):
        gpd_condition(GpdParams(1.0, 1.0), -1.0)


@given(c=gpd_shapes, a=gpd_scales, s=st.floats(0.0, 20.0), u=probs)
@settings(max_examples=200)
def test_gpd_truncated_quantile_law(c, a, s, u):
    p = GpdParams(c, a)
    x = gpd_truncated_quantile(u, p, s)
    assert x >= s
    # P(R~ <= x | R~ > s) should equal u
    cond_cdf = 1.0 - gpd_survival(x, p) / gpd_survival(s, p)
    assert cond_cdf == pytest.approx(u, rel=1e-9, abs=1e-12)


@given(c=gpd_shapes, a=gpd_scales, x=st.floats(1e-3, 1e3))
@settings(max_examples=200)
def test_inverted_cdf_is_survival_of_reciprocal(c, a, x):
    p = GpdParams(c, a)
    assert inverted_gpd_cdf(x, p) == pytest.approx(gpd_survival(1.0 / x, p),
                                                   rel=1e-12)


def test_inverted_cdf_boundary():
    p = GpdParams(0.8, 1.5)
    assert inverted_gpd_cdf(0.0, p) == 0.0
    grid = np.linspace(0.0, 5.0, 50)
    vals = inverted_gpd_cdf(grid, p)
    assert np.all(np.diff(vals) >= 0)


@given(al=wb_scales, be=wb_shapes, u=probs)
@settings(max_examples=200)
def test_weibull_quantile_round_trip(al, be, u):
    p = WeibullParams(al, be)
    x = weibull_quantile(u, p)
    assert weibull_cdf(x, p) == pytest.approx(u, rel=1e-10, abs=1e-12)


@given(al=wb_scales, be=wb_shapes, s1=st.floats(0.01, 20.0),
       gap=st.floats(0.0, 20.0))
@settings(max_examples=200)
def test_weibull_conditional_survival_is_ratio(al, be, s1, gap):
    p = WeibullParams(al, be)
    s2 = s1 + gap
    assume((s2 / al) ** be < 500.0)  # keep survival away from underflow
    ratio = weibull_survival(s2, p) / weibull_survival(s1, p)
    assert weibull_conditional_survival(s1, s2, p) == pytest.approx(ratio,
                                                                    rel=1e-10)


@given(al=wb_scales, be=wb_shapes, s1=st.floats(0.05, 10.0),
       mult=st.floats(1.0, 3.0))
@settings(max_examples=200)
def test_weibull_log_identity(al, be, s1, mult):
    # log of the conditional survival factorizes through the level ratio
    p = WeibullParams(al, be)
    s2 = s1 * mult
    assume(1e-12 < (s1 / al) ** be and (s2 / al) ** be < 500.0)
    lhs = math.log(weibull_conditional_survival(s1, s2, p))
    rhs = ((s2 / s1) ** be - 1.0) * math.log(weibull_survival(s1, p))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_weibull_conditional_survival_rejects_reversed_levels():
    with pytest.raises(ValueError):
        weibull_conditional_survival(2.0, 1.0, WeibullParams(1.0, 1.0))


@given(al=wb_scales, be=wb_shapes, s=st.floats(0.0, 10.0), u=probs)
@settings(max_examples=200)
def test_weibull_truncated_quantile_law(al, be, s, u):
    p = WeibullParams(al, be)
    assume((s / al) ** be < 500.0)
    x = weibull_truncated_quantile(u, p, s)
    assert x >= s
    assume((x / al) ** be < 500.0)
    cond = 1.0 - weibull_survival(x, p) / weibull_survival(s, p)
    assert cond == pytest.approx(u, rel=1e-9, abs=1e-12)


def test_gamma_mixture_identity_spot_checks():
    for c, a in ((0.5, 1.0), (0.8, 1.5), (2.0, 3.0)):
        p = GpdParams(c, a)
        for x in (0.2, 0.7, 5.0):
            assert gamma_mixture_check(p, x) < 1e-8


def test_gamma_mixture_check_validation():
    p = GpdParams(0.8, 1.5)
    with pytest.raises(ValueError):
        gamma_mixture_check(p, -1.0)
    with pytest.raises(ValueError):
        gamma_mixture_check(p, 1.0, n_nodes=8)


# ---------------------------------------------------------------------------
# distorted families


def _transforms():
    base = GpdParams(0.8, 1.5)
    return [
        GpdTransform("exponential", base, lam=2.0, theta=0.7),
        GpdTransform("logarithmic", base, theta=1.5),
        GpdTransform("root", base),
        GpdTransform("fraction", base, theta=0.8),
    ]


@pytest.mark.parametrize("t", _transforms(), ids=lambda t: t.kind)
def test_transform_is_normalized(t):
    # L(0) = 0 and L(1) = 1: the distortion is a distribution on [0, 1]
    assert transform_cdf(0.0, t) == pytest.approx(0.0, abs=1e-12)
    assert transform_cdf(1e12, t) == pytest.approx(1.0, abs=1e-6)
    assert transform_survival(0.0, t) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("t", _transforms(), ids=lambda t: t.kind)
def test_transform_monotone_and_complement(t):
    xs = np.linspace(0.0, 50.0, 200)
    cdf = transform_cdf(xs, t)
    surv = transform_survival(xs, t)
    assert np.all(np.diff(cdf) >= -1e-14)
    assert np.allclose(cdf + surv, 1.0, atol=1e-12)


def test_transform_validation():
    base = GpdParams(1.0, 1.0)
    with pytest.raises(ValueError):
        GpdTransform("nope", base)
    with pytest.raises(ValueError):
        GpdTransform("exponential", base, lam=-1.0)
    with pytest.raises(ValueError):
        GpdTransform("exponential", base, lam=1.0, theta=1.5)
    with pytest.raises(ValueError):
        GpdTransform("logarithmic", base, theta=0.0)
