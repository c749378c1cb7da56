"""Reference procedures the sequential design is benchmarked against.

Three classical approaches to small-quantile estimation of a strength R from
stress tests:

* the Dixon-Mood staircase: walk a fixed grid of stress levels up after each
  survival and down after each failure, then fit the strength model by ML on
  the binary outcomes;
* a continual-reassessment-style Bayesian scheme (CRM) with a conjugate Beta
  prior on the failure probability at a reference level, reassessing the
  tested level after each block of trials;
* de Valk's semi-parametric extreme quantile estimator from a *complete*
  sample, used as the information-rich yardstick.

All of these work on the original strength scale, except de Valk which is
applied to whatever sample it is given.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

__all__ = [
    "StaircaseConfig",
    "StaircaseResult",
    "staircase_run",
    "staircase_mle",
    "staircase_moment_estimate",
    "staircase_quantile",
    "CrmConfig",
    "CrmResult",
    "crm_run",
    "devalk_theta_sum",
    "devalk_h",
    "devalk_fit",
    "devalk_quantile",
]


# ---------------------------------------------------------------------------
# Dixon-Mood staircase


@dataclass(frozen=True)
class StaircaseConfig:
    """Staircase walk: start at s_ini, move by delta down on failure, up on survival."""

    s_ini: float
    delta: float
    trials: int
    model: str = "exponential"  # strength model fitted afterwards

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.trials < 2:
            raise ValueError("need at least 2 trials")
        if self.model not in ("exponential", "gaussian"):
            raise ValueError(f"unknown staircase model {self.model!r}")


@dataclass
class StaircaseResult:
    levels: list[float]
    outcomes: list[int]
    params: dict
    flags: list[str] = field(default_factory=list)


def _failure_prob(level: float, model: str, params) -> float:
    """P(R <= level) under the strength model; 0 below the support."""
    if model == "exponential":
        lam = params if np.isscalar(params) else params[0]
        return -math.expm1(-lam * level) if level > 0 else 0.0
    mu, sigma = params
    return stats.norm.cdf((level - mu) / sigma)


def staircase_run(config: StaircaseConfig, outcome_fn) -> tuple[list[float], list[int]]:
    """Walk the staircase; ``outcome_fn(level) -> 1`` on failure, 0 on survival."""
    levels, outcomes = [], []
    s = config.s_ini
    for _ in range(config.trials):
        y = int(outcome_fn(s))
        if y not in (0, 1):
            raise ValueError("outcome_fn must return 0 or 1")
        levels.append(s)
        outcomes.append(y)
        s = s - config.delta if y == 1 else s + config.delta
    return levels, outcomes


def _exp_negloglik(lam: float, levels, outcomes) -> float:
    total = 0.0
    for s, y in zip(levels, outcomes):
        if s <= 0:
            # no failure can occur below the support; survivals carry no info
            if y == 1:
                return math.inf
            continue
        p = -math.expm1(-lam * s)
        p = min(max(p, 1e-300), 1.0 - 1e-15)
        total -= y * math.log(p) + (1 - y) * math.log1p(-p)
    return total


def staircase_mle(levels, outcomes, model: str = "exponential") -> tuple[dict, list[str]]:
    """Maximum-likelihood strength parameters from staircase data.

    Returns (params, flags).  Degenerate runs - all failures or all survivals
    at informative levels, or complete separation for the gaussian model - are
    fitted at the search boundary and flagged rather than raised, since they
    occur with positive probability in legitimate simulations.
    """
    levels = list(map(float, levels))
    outcomes = list(map(int, outcomes))
    if len(levels) != len(outcomes) or not levels:
        raise ValueError("levels and outcomes must be equally long and non-empty")
    flags: list[str] = []

    if model == "exponential":
        informative = [(s, y) for s, y in zip(levels, outcomes) if s > 0]
        n_fail = sum(y for _, y in informative)
        n_surv = len(informative) - n_fail
        if n_fail == 0 or n_surv == 0:
            flags.append("degenerate-staircase")
        lo, hi = 1e-8, 1e4
        # the clipped likelihood is flat far from the optimum, which can trap a
        # bounded line search; locate the basin on a log-spaced grid first
        grid = np.logspace(math.log10(lo), math.log10(hi), 49)
        values = [_exp_negloglik(g, levels, outcomes) for g in grid]
        i = int(np.argmin(values))
        b_lo = grid[max(i - 1, 0)]
        b_hi = grid[min(i + 1, len(grid) - 1)]
        res = optimize.minimize_scalar(
            _exp_negloglik, bounds=(b_lo, b_hi), args=(levels, outcomes),
            method="bounded", options={"xatol": 1e-12})
        lam = float(res.x)
        if lam <= lo * 1.01 or lam >= hi * 0.99:
            flags.append("boundary-fit")
        return {"lam": lam}, flags

    if model != "gaussian":
        raise ValueError(f"unknown staircase model {model!r}")

    ymin = min(outcomes)
    ymax = max(outcomes)
    if ymin == ymax:
        flags.append("degenerate-staircase")
    fail_levels = [s for s, y in zip(levels, outcomes) if y == 1]
    surv_levels = [s for s, y in zip(levels, outcomes) if y == 0]
    if fail_levels and surv_levels and min(fail_levels) > max(surv_levels):
        flags.append("separation")

    def negloglik(x):
        mu, log_sigma = x
        sigma = math.exp(log_sigma)
        total = 0.0
        for s, y in zip(levels, outcomes):
            z = (s - mu) / sigma
            logp = stats.norm.logcdf(z)
            logq = stats.norm.logsf(z)
            total -= y * logp + (1 - y) * logq
        return total

    spread = max(np.std(levels), 1e-3)
    x0 = np.array([float(np.mean(levels)), math.log(spread)])
    res = optimize.minimize(negloglik, x0, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-12,
                                     "maxiter": 2000})
    mu, sigma = float(res.x[0]), float(math.exp(res.x[1]))
    if sigma < 1e-6 * spread or sigma > 1e6 * spread:
        flags.append("boundary-fit")
    return {"mu": mu, "sigma": sigma}, flags


def staircase_moment_estimate(levels, outcomes, delta: float,
                              event: str = "failures") -> tuple[dict, list[str]]:
    """Closed-form location/spread estimates from the visited-level counts.

    This is the classical count-based analysis of an up-and-down experiment:
    index the visited lattice, form the first two moments of the index
    distribution, and convert them into a location (with the half-step
    correction) and a spread.  ``event`` selects which trials enter the
    counts - "failures", "survivals", or "all".  The location sign convention
    follows the analyzed event (failure counts carry the -1/2 correction,
    survival counts +1/2, and "all" behaves like the failure convention).

    Returns ({"mu": ..., "sigma": ...}, flags).  The caller maps (mu, sigma)
    onto its strength family; for an exponential model the natural rate
    estimate is 1/sigma.
    """
    if event not in ("failures", "survivals", "all"):
        raise ValueError(f"unknown event selection {event!r}")
    if delta <= 0:
        raise ValueError("delta must be positive")
    levels = np.asarray(levels, dtype=float)
    outcomes = np.asarray(outcomes, dtype=int)
    if levels.shape != outcomes.shape or levels.size == 0:
        raise ValueError("levels and outcomes must be equally long and non-empty")
    flags: list[str] = []
    if event == "failures":
        sel = levels[outcomes == 1]
        sign = -0.5
    elif event == "survivals":
        sel = levels[outcomes == 0]
        sign = +0.5
    else:
        sel = levels
        sign = -0.5
    if sel.size == 0:
        raise ValueError(f"no {event} trials to analyze")
    s0 = sel.min()
    idx = np.rint((sel - s0) / delta)
    n = idx.size
    a = idx.sum()
    b = (idx * idx).sum()
    spread = (n * b - a * a) / (n * n)
    if spread < 0.3:
        # outside the validity range of the spread formula; keep the value but
        # tell the caller the experiment was too narrow for a reliable sigma
        flags.append("narrow-design")
    mu = s0 + delta * (a / n + sign)
    sigma = 1.62 * delta * (spread + 0.029)
    return {"mu": float(mu), "sigma": float(sigma)}, flags


def staircase_quantile(params: dict, alpha: float, model: str = "exponential") -> float:
    """alpha-quantile of the fitted strength model (the allowable stress)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if model == "exponential":
        return -math.log1p(-alpha) / params["lam"]
    if model == "gaussian":
        return params["mu"] + params["sigma"] * stats.norm.ppf(alpha)
    raise ValueError(f"unknown staircase model {model!r}")


# ---------------------------------------------------------------------------
# Continual reassessment scheme


@dataclass(frozen=True)
class CrmConfig:
    """Bayesian reassessment over a fixed grid of stress levels.

    The Beta(prior_k, prior_n - prior_k + 1) prior encodes "about prior_k
    failures in prior_n trials at stress prior_level".  Each iteration tests
    ``trials_per_iter`` specimens at the currently selected level, updates the
    posterior with the accumulated failure count, re-estimates the exponential
    hazard rate from ``draws`` posterior draws and snaps the tested level to
    the grid point whose estimated failure probability is closest to alpha.
    """

    levels: tuple[float, ...]
    alpha: float
    prior_k: int = 2
    prior_n: int = 10
    prior_level: float = 1.0
    draws: int = 100
    iterations: int = 10
    trials_per_iter: int = 50
    conversion: str = "current"  # level at which posterior draws become rates

    def __post_init__(self):
        if len(self.levels) < 2 or any(s <= 0 for s in self.levels):
            raise ValueError("need >= 2 strictly positive levels")
        if list(self.levels) != sorted(self.levels):
            raise ValueError("levels must be increasing")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 1 <= self.prior_k <= self.prior_n:
            raise ValueError("need 1 <= prior_k <= prior_n")
        if min(self.draws, self.iterations, self.trials_per_iter) < 1:
            raise ValueError("draws, iterations and trials_per_iter must be >= 1")
        if self.prior_level <= 0:
            raise ValueError("prior_level must be > 0")
        if self.conversion not in ("current", "anchor"):
            raise ValueError("conversion must be 'current' or 'anchor'")


@dataclass
class CrmResult:
    tested_levels: list[float]
    failures: list[int]
    lambda_history: list[float]
    posterior: tuple[float, float]
    selected_level: float
    quantile_continuous: float
    flags: list[str] = field(default_factory=list)


def _rate_from_draws(draws: np.ndarray, level: float) -> float:
    return float(np.mean(-np.log1p(-draws) / level))


def crm_run(config: CrmConfig, outcome_fn, rng: np.random.Generator) -> CrmResult:
    """Run the reassessment scheme; ``outcome_fn(level)`` as in the staircase.

    The returned ``selected_level`` is the scheme's allowable-stress
    recommendation (a grid point); ``quantile_continuous`` is the smooth
    counterpart -log(1-alpha)/lambda_hat from the final rate estimate.
    """
    levels = np.asarray(config.levels, dtype=float)
    a = float(config.prior_k)
    b = float(config.prior_n - config.prior_k + 1)
    draws = rng.beta(a, b, size=config.draws)
    lam = _rate_from_draws(draws, config.prior_level)
    lam_hist = [lam]

    def pick(lam_val: float) -> int:
        probs = -np.expm1(-lam_val * levels)
        return int(np.argmin(np.abs(probs - config.alpha)))

    idx = pick(lam)
    tested, fails = [], []
    n_fail_total = 0
    n_trials_total = 0
    for _ in range(config.iterations):
        level = float(levels[idx])
        n_fail = sum(int(outcome_fn(level)) for _ in range(config.trials_per_iter))
        tested.append(level)
        fails.append(n_fail)
        n_fail_total += n_fail
        n_trials_total += config.trials_per_iter
        post_a = a + n_fail_total
        post_b = config.prior_n + n_trials_total - (config.prior_k + n_fail_total) + 1
        post_b = max(post_b, 1e-9)
        draws = rng.beta(post_a, post_b, size=config.draws)
        conv_level = level if config.conversion == "current" else config.prior_level
        lam = _rate_from_draws(draws, conv_level)
        lam_hist.append(lam)
        idx = pick(lam)

    flags = []
    if idx in (0, len(levels) - 1):
        flags.append("grid-edge")
    return CrmResult(tested_levels=tested, failures=fails, lambda_history=lam_hist,
                     posterior=(post_a, post_b), selected_level=float(levels[idx]),
                     quantile_continuous=-math.log1p(-config.alpha) / lam,
                     flags=flags)


# ---------------------------------------------------------------------------
# de Valk's estimator from complete samples


def devalk_theta_sum(k: int, n: int) -> float:
    """Partial harmonic sum 1/k + 1/(k+1) + ... + 1/n."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    return float(np.sum(1.0 / np.arange(k, n + 1)))


def devalk_h(theta: float, lam: float) -> float:
    """Box-Cox style transform (lam**theta - 1)/theta, log(lam) at theta = 0."""
    if lam <= 0:
        raise ValueError("lam must be > 0")
    if theta == 0.0:
        return math.log(lam)
    return (lam ** theta - 1.0) / theta


def devalk_fit(sample, theta_grid, l_n: int | None = None) -> tuple[float, float]:
    """Estimate the slope/curvature pair of the log-quantile function.

    When neither the tail family nor its shape is known, both ingredients of
    the extrapolation can be read off the sample itself: regress the
    log-spacings of the top ``l_n`` order statistics above the anchor through
    the origin on h_theta of the harmonic-sum ratios, separately for each
    curvature on ``theta_grid``, and keep the pair with the smallest residual
    sum of squares.

    Returns ``(g_hat, theta_hat)``; feed them to :func:`devalk_quantile` as
    ``g=lambda _: g_hat, theta=theta_hat`` with the same ``l_n``.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n < 10:
        raise ValueError("need at least 10 observations")
    l = l_n if l_n is not None else n // 10
    if not 2 <= l < n:
        raise ValueError("l_n must lie in [2, n)")
    anchor = x[n - l - 1]
    if anchor <= 0:
        raise ValueError("anchor order statistic must be > 0")
    t_l1 = devalk_theta_sum(l + 1, n)
    lam = np.array([devalk_theta_sum(j, n) for j in range(1, l + 1)]) / t_l1
    # spacings in descending order: ys[j-1] = log(X_(n-j+1:n) / X_(n-l:n))
    ys = np.log(x[n - l:][::-1]) - math.log(anchor)
    best: tuple[float, float, float] | None = None
    for theta in np.atleast_1d(np.asarray(theta_grid, dtype=float)):
        h = np.array([devalk_h(float(theta), v) for v in lam])
        num = float(h @ ys)
        den = float(h @ h)
        g_hat = num / den
        rss = float(ys @ ys) - g_hat * num
        if best is None or rss < best[0]:
            best = (rss, g_hat, float(theta))
    assert best is not None
    return best[1], best[2]


def devalk_quantile(sample, z: float, g, theta: float = 1.0,
                    l_n: int | None = None) -> float:
    """de Valk's extreme quantile estimate from a complete sample.

    Parameters
    ----------
    sample : array_like
        Complete observations of the variable whose upper tail is targeted.
    z : float
        Log-scale exceedance argument; for a (1-alpha)-quantile use
        z = -log(alpha).
    g : callable
        Normalizing slope of the log-quantile function, evaluated at the
        harmonic sum of the retained order statistics.  For a GPD tail with
        shape c use g = lambda x: c * x; for a Weibull tail with shape beta
        use the constant g = lambda x: 1/beta.
    theta : float
        Curvature of the log-quantile function (1 for GPD, 0 for Weibull).
    l_n : int, optional
        Number of upper order statistics above the anchor; defaults to
        floor(n/10).

    The estimate is X_(n-l:n) * exp(g(theta_sum(l, n)) * h_theta(z / theta_sum(l+1, n))).
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n < 10:
        raise ValueError("need at least 10 observations")
    l = l_n if l_n is not None else n // 10
    if not 1 <= l < n:
        raise ValueError("l_n must lie in [1, n)")
    anchor = x[n - l - 1]  # X_(n-l:n)
    if anchor <= 0:
        raise ValueError("anchor order statistic must be > 0")
    t_l = devalk_theta_sum(l, n)
    t_l1 = devalk_theta_sum(l + 1, n)
    return float(anchor * math.exp(g(t_l) * devalk_h(theta, z / t_l1)))
