"""Misspecification neighborhoods and goodness-of-fit statistics.

The campaign model assumes the inverted strength follows a generalized
Pareto tail exactly.  This module quantifies what happens when the true
distribution only lies *near* that model: a weighted sup-norm neighborhood

    V_eps(F) = { G : sup_x w(x) |F_bar(x) - G_bar(x)| <= eps }

around the nominal survival F_bar, with an increasing weight w so that the
constraint tightens in the tail.  From it we derive interval bounds on
conditional exceedance probabilities, a first-order bound on the relative
error of the splitting recommendation, and the smallest threshold at which
a given error budget can still be honoured.

The Cramer-von Mises and Anderson-Darling statistics operate on complete
samples only; binary exceedance campaigns carry too little information for
distributional tests, so the campaign service deliberately does not expose
them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .distributions import GpdParams, gpd_survival

__all__ = [
    "NeighborhoodSpec",
    "make_weight",
    "conditional_bounds",
    "relative_error_bound",
    "admissible_threshold",
    "cvm_statistic",
    "ad_statistic",
    "null_critical_value",
]


def make_weight(kind: str, kappa: float):
    """Monotone weight function for the neighborhood.

    * ``power``: w(x) = x**kappa (kappa > 0); vanishes at 0, unbounded.
    * ``exp``:   w(x) = exp(kappa*x) (kappa > 0); equals 1 at 0, unbounded.
    """
    if kappa <= 0:
        raise ValueError("weight exponent kappa must be positive")
    if kind == "power":
        return lambda x: float(x) ** kappa
    if kind == "exp":
        return lambda x: math.exp(kappa * float(x))
    raise ValueError(f"unknown weight kind {kind!r}")


@dataclass(frozen=True)
class NeighborhoodSpec:
    """A weighted sup-norm ball of radius epsilon around a GPD survival.

    ``weight`` is a (kind, kappa) pair understood by :func:`make_weight`.
    ``delta_target`` is the relative-error budget used by
    :func:`admissible_threshold`; leave it None when only bounds are needed.
    """

    base: GpdParams
    epsilon: float
    weight: tuple[str, float] = ("power", 1.0)
    delta_target: float | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        make_weight(*self.weight)  # validate eagerly
        if self.delta_target is not None and self.delta_target <= 0:
            raise ValueError("delta_target must be positive when given")

    def weight_fn(self):
        return make_weight(*self.weight)


def conditional_bounds(spec: NeighborhoodSpec, s: float, x: float) -> tuple[float, float]:
    """Interval containing G_bar(x)/G_bar(s) for every G in the neighborhood.

    For the exceedance campaign this is the set of values the conditional
    failure probability beyond x, given survival to s, can take when the
    model is only eps-correct.  At eps = 0 both endpoints collapse onto the
    exact GPD conditional.
    """
    if not 0.0 <= s <= x:
        raise ValueError("need 0 <= s <= x")
    fs = gpd_survival(s, spec.base)
    fx = gpd_survival(x, spec.base)
    if spec.epsilon == 0.0:
        exact = fx / fs
        return (exact, exact)
    w = spec.weight_fn()
    slack_s = spec.epsilon / w(s) if w(s) > 0 else math.inf
    slack_x = spec.epsilon / w(x) if w(x) > 0 else math.inf
    denom_hi = fs - slack_s
    if denom_hi <= 0.0:
        raise ValueError(
            f"neighborhood vacuous at s={s}: survival {fs:.3g} does not exceed "
            f"the allowed deviation {slack_s:.3g}")
    lo = (fx - slack_x) / (fs + slack_s)
    hi = (fx + slack_x) / denom_hi
    return (max(lo, 0.0), min(hi, 1.0))


def _growth(t: float, params: GpdParams) -> float:
    # reciprocal survival (1 + c t / a)**(1/c)
    return (1.0 + params.c * t / params.a) ** (1.0 / params.c)


def relative_error_bound(spec: NeighborhoodSpec, s: float, x: float) -> float:
    """First-order bound u(s, x) * eps on the conditional's relative error.

    u collects the two places the neighborhood can move mass: at the
    conditioning threshold s and at the target x, each inflated by the
    reciprocal survival and deflated by the weight.
    """
    if not 0.0 <= s <= x:
        raise ValueError("need 0 <= s <= x")
    if spec.epsilon == 0.0:
        return 0.0
    w = spec.weight_fn()
    if w(s) <= 0 or w(x) <= 0:
        raise ValueError("weight must be positive at s and x")
    u = _growth(s, spec.base) / w(s) + _growth(x, spec.base) / w(x)
    bound = u * spec.epsilon
    if bound > 0.5:
        warnings.warn("first-order bound exceeds 0.5; the Taylor expansion "
                      "is unreliable at this epsilon", stacklevel=2)
    return bound


def admissible_threshold(spec: NeighborhoodSpec, x: float) -> float:
    """Smallest conditioning threshold that keeps the error budget.

    Solves (1 + c s / a)**(1/c) / w(s) <= delta/eps - (1 + c x / a)**(1/c) / w(x)
    for the smallest admissible s by bisection.  Raises when the budget is
    infeasible: either the target term alone exhausts delta/eps, or the
    weight grows too slowly for the threshold term ever to fall below the
    remaining budget.
    """
    if spec.delta_target is None:
        raise ValueError("spec.delta_target is required")
    if x < 0:
        raise ValueError("x must be >= 0")
    if spec.epsilon == 0.0:
        return 0.0
    w = spec.weight_fn()
    if w(x) <= 0:
        raise ValueError("weight must be positive at x")
    budget = spec.delta_target / spec.epsilon - _growth(x, spec.base) / w(x)
    if budget <= 0.0:
        raise ValueError(
            f"infeasible budget: the target term (1+cx/a)^(1/c)/w(x) = "
            f"{_growth(x, spec.base) / w(x):.3g} already exceeds "
            f"delta/eps = {spec.delta_target / spec.epsilon:.3g}")

    def g(s: float) -> float:
        ws = w(s)
        return math.inf if ws <= 0 else _growth(s, spec.base) / ws

    if g(0.0) <= budget:
        return 0.0
    # geometric sweep for the first point inside the admissible region
    lo, hi = 0.0, None
    t = 1e-12
    while t <= 1e15:
        if g(t) <= budget:
            hi = t
            break
        lo = t
        t *= 10.0
    if hi is None:
        raise ValueError(
            "infeasible budget: the threshold term (1+cs/a)^(1/c)/w(s) never "
            "falls below the remaining budget; the weight grows too slowly")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) <= budget:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# Goodness-of-fit statistics for complete samples


def _fitted_probs(sample, cdf) -> np.ndarray:
    x = np.sort(np.asarray(sample, dtype=float))
    if x.size == 0:
        raise ValueError("sample must be non-empty")
    return np.asarray([cdf(v) for v in x], dtype=float)


def cvm_statistic(sample, cdf) -> float:
    """Cramer-von Mises W^2 of a complete sample against a fitted cdf."""
    u = _fitted_probs(sample, cdf)
    n = u.size
    i = np.arange(1, n + 1)
    return float(np.sum((u - (2 * i - 1) / (2 * n)) ** 2) + 1.0 / (12 * n))


def ad_statistic(sample, cdf) -> float:
    """Anderson-Darling A^2 of a complete sample against a fitted cdf."""
    u = _fitted_probs(sample, cdf)
    n = u.size
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ValueError("fitted cdf must lie strictly inside (0, 1) at all "
                         "sample points")
    i = np.arange(1, n + 1)
    return float(-n - np.mean((2 * i - 1) * (np.log(u) + np.log1p(-u[::-1]))))


def null_critical_value(statistic, sampler, level: float, reps: int,
                        rng: np.random.Generator) -> float:
    """Monte Carlo (1 - level) quantile of a statistic under the null.

    ``sampler(rng)`` draws one null sample; ``statistic(sample)`` evaluates
    the test statistic.  Used instead of published critical-point tables.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    values = np.array([statistic(sampler(rng)) for _ in range(reps)])
    return float(np.quantile(values, 1.0 - level))
