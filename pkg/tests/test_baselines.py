"""Up-and-down designs, the reassessment scheme, and the complete-sample
log-quantile estimator."""

import math

import numpy as np
import pytest
from scipy import stats

from tailsplit.baselines import (
    CrmConfig,
    StaircaseConfig,
    crm_run,
    devalk_fit,
    devalk_h,
    devalk_quantile,
    devalk_theta_sum,
    staircase_mle,
    staircase_moment_estimate,
    staircase_quantile,
    staircase_run,
)
from tailsplit.distributions import gpd_quantile, GpdParams, WeibullParams, weibull_quantile


# ---------------------------------------------------------------------------
# staircase walk


def test_staircase_config_validation():
    with pytest.raises(ValueError):
        StaircaseConfig(s_ini=1.0, delta=0.0, trials=10)
    with pytest.raises(ValueError):
        StaircaseConfig(s_ini=1.0, delta=1.0, trials=1)
    with pytest.raises(ValueError):
        StaircaseConfig(s_ini=1.0, delta=1.0, trials=10, model="weird")


def test_staircase_walk_moves_down_on_failure():
    cfg = StaircaseConfig(s_ini=10.0, delta=2.0, trials=6)
    script = iter([1, 1, 0, 0, 1, 0])
    levels, outcomes = staircase_run(cfg, lambda level: next(script))
    assert outcomes == [1, 1, 0, 0, 1, 0]
    # failure lowers the next level by delta, survival raises it
    assert levels == [10.0, 8.0, 6.0, 8.0, 10.0, 8.0]


def test_staircase_walk_stays_on_lattice():
    cfg = StaircaseConfig(s_ini=5.0, delta=1.5, trials=40)
    rng = np.random.default_rng(3)
    levels, _ = staircase_run(cfg, lambda level: int(rng.random() < 0.5))
    offsets = (np.asarray(levels) - cfg.s_ini) / cfg.delta
    assert np.allclose(offsets, np.rint(offsets))


def test_staircase_rejects_non_binary_outcome():
    cfg = StaircaseConfig(s_ini=5.0, delta=1.0, trials=3)
    with pytest.raises(ValueError):
        staircase_run(cfg, lambda level: 2)


def test_staircase_mle_exponential_recovers_rate():
    lam = 0.21
    cfg = StaircaseConfig(s_ini=5.0, delta=3.0, trials=400)
    rng = np.random.default_rng(12)

    def outcome(level):
        return int(rng.random() < -math.expm1(-lam * level))

    levels, outcomes = staircase_run(cfg, outcome)
    params, flags = staircase_mle(levels, outcomes, model="exponential")
    assert flags == []
    assert params["lam"] == pytest.approx(lam, rel=0.25)


def test_staircase_mle_flags_degenerate_run():
    levels = [5.0, 6.0, 7.0, 8.0]
    params, flags = staircase_mle(levels, [0, 0, 0, 0], model="exponential")
    assert "degenerate-staircase" in flags


def test_staircase_mle_gaussian_recovers_location():
    mu, sigma = 60.0, 10.0
    cfg = StaircaseConfig(s_ini=60.0, delta=7.0, trials=300, model="gaussian")
    rng = np.random.default_rng(5)

    def outcome(level):
        return int(rng.random() < stats.norm.cdf(level, mu, sigma))

    levels, outcomes = staircase_run(cfg, outcome)
    params, flags = staircase_mle(levels, outcomes, model="gaussian")
    assert params["mu"] == pytest.approx(mu, abs=cfg.delta)
    assert params["sigma"] == pytest.approx(sigma, rel=0.6)


def test_staircase_mle_gaussian_flags_separation():
    # all failures strictly above all survivals: the likelihood has no
    # interior maximum in sigma
    levels = [1.0, 2.0, 3.0, 4.0]
    outcomes = [0, 0, 1, 1]
    params, flags = staircase_mle(levels, outcomes, model="gaussian")
    assert "separation" in flags


def test_moment_estimate_hand_computed():
    # failures at lattice points 10, 25, 10, 40 with step 15:
    # indices (0, 1, 0, 2), n=4, sum=3, sumsq=5,
    # spread = (4*5 - 9)/16 = 0.6875,
    # mu = 10 + 15*(3/4 - 1/2) = 13.75,
    # sigma = 1.62*15*(0.6875 + 0.029) = 17.41095
    levels = [10.0, 25.0, 10.0, 40.0]
    outcomes = [1, 1, 1, 1]
    params, flags = staircase_moment_estimate(levels, outcomes, delta=15.0,
                                              event="failures")
    assert params["mu"] == pytest.approx(13.75)
    assert params["sigma"] == pytest.approx(1.62 * 15.0 * (0.6875 + 0.029))
    assert flags == []


def test_moment_estimate_survival_convention():
    # survival counts carry the +1/2 correction instead of -1/2
    levels = [10.0, 25.0, 10.0, 40.0]
    outcomes = [0, 0, 0, 0]
    params, _ = staircase_moment_estimate(levels, outcomes, delta=15.0,
                                          event="survivals")
    assert params["mu"] == pytest.approx(10.0 + 15.0 * (3.0 / 4.0 + 0.5))


def test_moment_estimate_narrow_design_flag():
    levels = [10.0, 10.0, 10.0]
    params, flags = staircase_moment_estimate(levels, [1, 1, 1], delta=5.0)
    assert "narrow-design" in flags


def test_moment_estimate_validation():
    with pytest.raises(ValueError):
        staircase_moment_estimate([1.0], [1], delta=0.0)
    with pytest.raises(ValueError):
        staircase_moment_estimate([1.0], [1], delta=1.0, event="losses")
    with pytest.raises(ValueError):
        staircase_moment_estimate([1.0], [0], delta=1.0, event="failures")


def test_staircase_quantile_closed_forms():
    assert staircase_quantile({"lam": 0.2}, 0.1, "exponential") == pytest.approx(
        -math.log1p(-0.1) / 0.2)
    assert staircase_quantile({"mu": 60.0, "sigma": 10.0}, 0.1, "gaussian") == \
        pytest.approx(60.0 + 10.0 * stats.norm.ppf(0.1))
    with pytest.raises(ValueError):
        staircase_quantile({"lam": 0.2}, 0.0, "exponential")


# ---------------------------------------------------------------------------
# reassessment scheme


def test_crm_config_validation():
    good = dict(levels=(1.0, 2.0, 3.0), alpha=0.1)
    CrmConfig(**good)
    with pytest.raises(ValueError):
        CrmConfig(levels=(2.0, 1.0), alpha=0.1)  # not increasing
    with pytest.raises(ValueError):
        CrmConfig(levels=(1.0,), alpha=0.1)  # too few
    with pytest.raises(ValueError):
        CrmConfig(levels=(1.0, 2.0), alpha=1.5)
    with pytest.raises(ValueError):
        CrmConfig(levels=(1.0, 2.0), alpha=0.1, prior_k=5, prior_n=3)
    with pytest.raises(ValueError):
        CrmConfig(levels=(1.0, 2.0), alpha=0.1, conversion="other")


def test_crm_posterior_bookkeeping_without_failures():
    cfg = CrmConfig(levels=(0.5, 1.0, 2.0, 4.0), alpha=0.1, prior_k=2,
                    prior_n=10, iterations=4, trials_per_iter=5, draws=50)
    res = crm_run(cfg, lambda level: 0, np.random.default_rng(0))
    assert len(res.tested_levels) == 4
    assert res.failures == [0, 0, 0, 0]
    # Beta(prior_k, prior_n - prior_k + 1) updated by 20 survivals
    assert res.posterior == (2.0, 10 + 20 - 2 + 1)
    # with no failures the rate estimate falls and the pick drifts upward
    assert res.lambda_history[-1] < res.lambda_history[0]
    assert res.selected_level == max(res.tested_levels + [res.selected_level])
    assert res.quantile_continuous == pytest.approx(
        -math.log1p(-cfg.alpha) / res.lambda_history[-1])


def test_crm_flags_grid_edge():
    # constant failures drive the rate estimate up until the scheme pins the
    # lowest grid point
    cfg = CrmConfig(levels=(0.5, 1.0, 2.0), alpha=0.1, iterations=3,
                    trials_per_iter=5, draws=50)
    res = crm_run(cfg, lambda level: 1, np.random.default_rng(1))
    assert res.selected_level == 0.5
    assert "grid-edge" in res.flags


def test_crm_tracks_known_rate():
    lam = 0.35
    grid = tuple(np.linspace(0.05, 3.0, 12))
    cfg = CrmConfig(levels=grid, alpha=0.1, iterations=8, trials_per_iter=40)
    rng = np.random.default_rng(42)

    def outcome(level):
        return int(rng.random() < -math.expm1(-lam * level))

    res = crm_run(cfg, outcome, rng)
    snapped = grid[int(np.argmin(np.abs(-np.expm1(-lam * np.asarray(grid))
                                        - cfg.alpha)))]
    assert res.selected_level == pytest.approx(snapped, abs=2 * (grid[1] - grid[0]))


# ---------------------------------------------------------------------------
# complete-sample log-quantile estimator


def test_theta_sum_is_harmonic_tail():
    assert devalk_theta_sum(3, 6) == pytest.approx(1 / 3 + 1 / 4 + 1 / 5 + 1 / 6)
    assert devalk_theta_sum(1, 1) == 1.0
    with pytest.raises(ValueError):
        devalk_theta_sum(4, 3)


def test_h_transform_limits():
    assert devalk_h(1.0, 2.5) == pytest.approx(1.5)
    assert devalk_h(0.0, 2.5) == pytest.approx(math.log(2.5))
    # continuous at theta -> 0
    assert devalk_h(1e-10, 2.5) == pytest.approx(math.log(2.5), rel=1e-6)
    with pytest.raises(ValueError):
        devalk_h(1.0, 0.0)


def test_devalk_quantile_hand_formula():
    sample = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0]
    n, l = 12, 3
    z = -math.log(0.01)
    g = lambda x: 0.8 * x
    anchor = sorted(sample)[n - l - 1]
    t_l = devalk_theta_sum(l, n)
    t_l1 = devalk_theta_sum(l + 1, n)
    expected = anchor * math.exp(g(t_l) * devalk_h(1.0, z / t_l1))
    got = devalk_quantile(sample, z, g, theta=1.0, l_n=l)
    assert got == pytest.approx(expected, rel=1e-12)


def test_devalk_quantile_validation():
    with pytest.raises(ValueError):
        devalk_quantile([1.0] * 5, 1.0, lambda x: x)  # too small
    with pytest.raises(ValueError):
        devalk_quantile(list(range(10)), 1.0, lambda x: x, l_n=10)


def test_devalk_consistency_on_gpd_grid():
    # deterministic plotting-position sample from a heavy GPD tail
    truth = GpdParams(0.8, 1.5)
    n = 5000
    u = (np.arange(n) + 0.5) / n
    sample = gpd_quantile(u, truth)
    alpha = 1e-3
    est = devalk_quantile(sample, -math.log(alpha), lambda x: truth.c * x,
                          theta=1.0, l_n=n // 10)
    target = gpd_quantile(1 - alpha, truth)
    assert est == pytest.approx(target, rel=0.2)


def test_devalk_consistency_on_weibull_grid():
    truth = WeibullParams(3.0, 1.5)
    n = 5000
    u = (np.arange(n) + 0.5) / n
    sample = weibull_quantile(u, truth)
    alpha = 1e-3
    est = devalk_quantile(sample, -math.log(alpha),
                          lambda x: 1.0 / truth.beta, theta=0.0, l_n=n // 10)
    target = weibull_quantile(1 - alpha, truth)
    assert est == pytest.approx(target, rel=0.15)


def test_devalk_fit_finds_weibull_regime():
    # on a Weibull-tailed sample the joint fit should land near theta = 0
    # with slope close to 1/beta
    truth = WeibullParams(3.0, 1.5)
    n = 2000
    u = (np.arange(n) + 0.5) / n
    sample = weibull_quantile(u, truth)
    grid = np.linspace(0.0, 0.75, 9)
    g_hat, theta_hat = devalk_fit(sample, grid, l_n=200)
    assert theta_hat <= 0.25
    assert g_hat == pytest.approx(1.0 / truth.beta, rel=0.25)


def test_devalk_fit_validation():
    with pytest.raises(ValueError):
        devalk_fit([1.0] * 5, [0.0, 1.0])
    with pytest.raises(ValueError):
        devalk_fit(list(range(20)), [0.0, 1.0], l_n=1)
