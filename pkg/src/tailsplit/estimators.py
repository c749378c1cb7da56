"""Fitting tail parameters from batched binary exceedance data.

Each batch records K specimens tested between two thresholds on the inverted
scale: a specimen counts as a *failure* when its inverted strength exceeds the
tested level.  Only the count of failures is observed, never the strengths
themselves, so every estimator here works from Bernoulli likelihoods or from
moment-style residuals on the ladder of tested levels.

The plain Bernoulli likelihood of such data is notoriously flat: a whole
ridge of (shape, scale) pairs reproduces the same exceedance probabilities.
``enhanced_fit`` therefore constrains the search to parameters that keep the
latest batch's conditional exceedance inside a binomial confidence interval
and picks, within that plausible set, the parameters that best reproduce the
previously observed gaps between ladder levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy import stats as _stats

from .distributions import (
    GpdParams,
    WeibullParams,
    gpd_condition,
    gpd_quantile,
    gpd_survival,
    weibull_conditional_survival,
    weibull_truncated_quantile,
)

__all__ = [
    "BinaryBatch",
    "BinaryDataset",
    "FitResult",
    "OptResult",
    "NoFeasiblePointError",
    "phat",
    "conditional_exceedance",
    "binary_loglik",
    "confidence_interval_p",
    "in_plausible_set",
    "backward_residual",
    "probability_residual",
    "derivative_free_minimize",
    "mle_fit",
    "pilot_anchor_fit",
    "divergence_fit",
    "enhanced_fit",
    "default_box",
    "default_init",
]

_PROB_FLOOR = 1e-12


class NoFeasiblePointError(ValueError):
    """Raised when a feasibility predicate rejects every searched point."""


@dataclass(frozen=True)
class BinaryBatch:
    """K binary trials between thresholds s_prev < s_curr on the inverted scale.

    ``failures`` counts trials whose inverted strength exceeded ``s_curr``
    (i.e. physical failures at the corresponding stress).  The first,
    unconditional batch of a campaign uses ``s_prev = 0``.
    """

    s_prev: float
    s_curr: float
    k: int
    failures: int

    def __post_init__(self):
        if not 0.0 <= self.s_prev < self.s_curr:
            raise ValueError(
                f"need 0 <= s_prev < s_curr, got ({self.s_prev}, {self.s_curr})")
        if self.k < 1:
            raise ValueError("batch needs at least one trial")
        if not 0 <= self.failures <= self.k:
            raise ValueError("failures must lie in [0, k]")


@dataclass(frozen=True)
class BinaryDataset:
    """Ordered collection of batches from one sequential run."""

    batches: tuple[BinaryBatch, ...]

    def __init__(self, batches):
        object.__setattr__(self, "batches", tuple(batches))

    def __len__(self):
        return len(self.batches)

    def __iter__(self):
        return iter(self.batches)

    def __getitem__(self, i):
        return self.batches[i]


def phat(batch: BinaryBatch) -> float:
    """Empirical exceedance frequency failures/k."""
    return batch.failures / batch.k


def conditional_exceedance(params, s_prev: float, s_curr: float) -> float:
    """P(R~ > s_curr | R~ > s_prev) under a GPD or Weibull tail."""
    if isinstance(params, GpdParams):
        return gpd_survival(s_curr - s_prev, gpd_condition(params, s_prev))
    return weibull_conditional_survival(s_prev, s_curr, params)


def _fast_exceedance(params, s_prev, s_curr):
    # scalar hot path used inside the optimizer loops
    if isinstance(params, GpdParams):
        a_cond = params.a + params.c * s_prev
        return math.exp(-math.log1p(params.c * (s_curr - s_prev) / a_cond)
                        / params.c)
    r = (s_prev / params.alpha) ** params.beta - (s_curr / params.alpha) ** params.beta
    return math.exp(r)


def binary_loglik(params, data: BinaryDataset) -> float:
    """Bernoulli log-likelihood of the batched counts under ``params``.

    Probabilities are clamped to [1e-12, 1 - 1e-12] so that degenerate
    batches keep the criterion finite; clamping is reported through the fit
    diagnostics rather than here.
    """
    total = 0.0
    for b in data:
        pi = _fast_exceedance(params, b.s_prev, b.s_curr)
        pi = min(max(pi, _PROB_FLOOR), 1.0 - _PROB_FLOOR)
        total += b.failures * math.log(pi) + (b.k - b.failures) * math.log1p(-pi)
    return total


def confidence_interval_p(batch: BinaryBatch, gamma: float = 0.05) -> tuple[float, float]:
    """Normal-approximation confidence interval for the batch exceedance rate.

    Returns the closed interval p^ -/+ z_{1-gamma/2} * sqrt(p^(1-p^)/(K-1)),
    intersected with [0, 1].  Degenerate batches (p^ in {0, 1}) give a
    zero-width interval.
    """
    if batch.k < 2:
        raise ValueError("confidence interval needs at least 2 trials")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    p = phat(batch)
    z = _stats.norm.ppf(1.0 - gamma / 2.0)
    half = z * math.sqrt(p * (1.0 - p) / (batch.k - 1))
    return (max(0.0, p - half), min(1.0, p + half))


def in_plausible_set(params, batch: BinaryBatch, interval: tuple[float, float]) -> bool:
    """Whether the model's conditional exceedance of ``batch`` lies in ``interval``.

    Endpoints count as inside (the set is closed).
    """
    lo, hi = interval
    pi = conditional_exceedance(params, batch.s_prev, batch.s_curr)
    return lo <= pi <= hi


def _conditional_quantile_gap(params, s_base: float, p_exceed: float) -> float:
    # Gap x - s_base with P(R~ > x | R~ > s_base) = p_exceed.
    if isinstance(params, GpdParams):
        a_cond = params.a + params.c * s_base
        return (a_cond / params.c) * math.expm1(-params.c * math.log(p_exceed))
    x = weibull_truncated_quantile(1.0 - p_exceed, params, s_base)
    return x - s_base


def backward_residual(params, s_jm2: float, s_jm1: float, phat_prev: float) -> float:
    """Quantile-scale residual of a past ladder step under ``params``.

    Compares the realized gap s_{j-1} - s_{j-2} with the gap the model
    conditioned at s_{j-2} assigns to the observed exceedance frequency
    phat_prev.  Zero iff the model reproduces the step exactly.
    """
    if not 0.0 < phat_prev < 1.0:
        raise ValueError("phat_prev must lie strictly in (0, 1)")
    if not 0.0 <= s_jm2 < s_jm1:
        raise ValueError("need 0 <= s_jm2 < s_jm1")
    gap = _conditional_quantile_gap(params, s_jm2, phat_prev)
    return abs((s_jm1 - s_jm2) - gap)


def probability_residual(params, s_jm2: float, s_jm1: float, phat_prev: float) -> float:
    """Probability-scale counterpart of :func:`backward_residual` (diagnostic)."""
    if not 0.0 <= s_jm2 < s_jm1:
        raise ValueError("need 0 <= s_jm2 < s_jm1")
    return abs(_fast_exceedance(params, s_jm2, s_jm1) - phat_prev)


# ---------------------------------------------------------------------------
# Derivative-free constrained search


@dataclass
class OptResult:
    x: tuple[float, ...]
    value: float
    n_eval: int
    n_starts: int
    converged: bool


def _start_points(box, n_grid, init):
    pts = []
    if init is not None:
        pts.append(tuple(float(v) for v in init))
    (lo0, hi0), (lo1, hi1) = box
    for i in range(n_grid):
        for j in range(n_grid):
            pts.append((lo0 + (i + 0.5) * (hi0 - lo0) / n_grid,
                        lo1 + (j + 0.5) * (hi1 - lo1) / n_grid))
    return pts


def derivative_free_minimize(objective, box, feasibility=None, budget=2000,
                             init=None, n_grid=4) -> OptResult:
    """Deterministic multi-start compass search over a 2-d box.

    Parameters
    ----------
    objective : callable
        Maps a 2-tuple to a finite float (smaller is better).
    box : ((lo, hi), (lo, hi))
        Closed search region, one pair per coordinate.
    feasibility : callable or None
        Optional predicate; infeasible points are never evaluated.  If no
        feasible point can be found at all, :class:`NoFeasiblePointError` is
        raised.
    budget : int
        Total number of objective evaluations allowed across all starts.
    init : tuple or None
        Extra start point (clipped into the box).
    n_grid : int
        The fixed start grid is n_grid x n_grid cell centres.

    Exact ties between candidate optima are broken toward the smallest first
    coordinate, then the smallest second.  The search is fully deterministic.
    """
    (lo0, hi0), (lo1, hi1) = box
    if not (lo0 < hi0 and lo1 < hi1):
        raise ValueError("box bounds must be strictly increasing")
    if budget < 1:
        raise ValueError("budget must be positive")

    def clip(pt):
        return (min(max(pt[0], lo0), hi0), min(max(pt[1], lo1), hi1))

    feasible = feasibility if feasibility is not None else (lambda pt: True)
    starts = [clip(p) for p in _start_points(box, n_grid, init)]
    starts = [p for p in starts if feasible(p)]
    if not starts:
        # scan progressively finer grids for any feasible seed
        for g in (16, 48):
            cand = [(lo0 + (i + 0.5) * (hi0 - lo0) / g,
                     lo1 + (j + 0.5) * (hi1 - lo1) / g)
                    for i in range(g) for j in range(g) if
                    feasible((lo0 + (i + 0.5) * (hi0 - lo0) / g,
                              lo1 + (j + 0.5) * (hi1 - lo1) / g))]
            if cand:
                starts = cand[:4]
                break
        else:
            raise NoFeasiblePointError("no feasible point found in search box")

    n_eval = 0
    step_tol = 1e-10

    # phase 1: screen every start, keep the most promising few
    scored = []
    for s in starts:
        scored.append((objective(s), s))
        n_eval += 1
    scored.sort(key=lambda t: (t[0], t[1]))
    refine = [s for _, s in scored[:3]]
    budget_left = max(budget - n_eval, 8 * len(refine))
    per_start = budget_left // len(refine)

    # phase 2: compass search with step halving from each survivor
    best = None
    for start, f0 in zip(refine, (v for v, _ in scored[:3])):
        x, fx = start, f0
        used = 0
        step = ((hi0 - lo0) * 0.25, (hi1 - lo1) * 0.25)
        while used < per_start:
            improved = False
            for dim in (0, 1):
                for sgn in (1.0, -1.0):
                    cand = list(x)
                    cand[dim] += sgn * step[dim]
                    cand = clip(tuple(cand))
                    if cand == x or not feasible(cand):
                        continue
                    fc = objective(cand)
                    n_eval += 1
                    used += 1
                    if fc < fx:
                        x, fx = cand, fc
                        improved = True
                    if used >= per_start:
                        break
                if used >= per_start:
                    break
            if not improved:
                step = (step[0] * 0.5, step[1] * 0.5)
                if max(step[0] / max(hi0 - lo0, 1e-300),
                       step[1] / max(hi1 - lo1, 1e-300)) < step_tol:
                    break
        if best is None or (fx, x) < best:
            best = (fx, x)

    value, x = best
    return OptResult(x=x, value=value, n_eval=n_eval, n_starts=len(starts),
                     converged=True)


# ---------------------------------------------------------------------------
# Fit front-ends


@dataclass
class FitResult:
    """Parameters plus search diagnostics from one fitting call."""

    params: object
    criterion: float
    diagnostics: dict = field(default_factory=dict)


def default_box(data: BinaryDataset, model: str = "gpd"):
    """Default search box: shape in a fixed range, scale tied to the ladder.

    The scale coordinate runs up to ten times the largest tested level so the
    box always contains parameter values capable of explaining the data.
    """
    s_max = max(b.s_curr for b in data)
    if model == "gpd":
        return ((0.01, 5.0), (0.01, 10.0 * s_max))
    if model == "weibull":
        return ((0.01, 10.0 * s_max), (0.05, 5.0))
    raise ValueError(f"unknown model {model!r}")


def default_init(data: BinaryDataset, model: str = "gpd"):
    """Seed point: unit shape, scale solved from the first batch frequency."""
    first = data[0]
    p1 = phat(first)
    if not 0.0 < p1 < 1.0:
        return None
    s1 = first.s_curr
    if model == "gpd":
        # with c = 1: (1 + s1/a)^(-1) = p1
        return (1.0, s1 * p1 / (1.0 - p1))
    # with beta = 1: exp(-s1/alpha) = p1
    return (s1 / -math.log(p1), 1.0)


def _params_from_vec(x, model):
    if model == "gpd":
        return GpdParams(c=x[0], a=x[1])
    return WeibullParams(alpha=x[0], beta=x[1])


def _model_of(data, model):
    if model not in ("gpd", "weibull"):
        raise ValueError(f"unknown model {model!r}")
    return model


def _flatness(objective, box, best_value, threshold=1.0, n_grid=12):
    # crude level-set probe: fraction of a coarse grid within `threshold`
    # of the optimum; a wide near-optimal plateau signals a flat criterion.
    (lo0, hi0), (lo1, hi1) = box
    near = 0
    for i in range(n_grid):
        for j in range(n_grid):
            pt = (lo0 + (i + 0.5) * (hi0 - lo0) / n_grid,
                  lo1 + (j + 0.5) * (hi1 - lo1) / n_grid)
            if objective(pt) <= best_value + threshold:
                near += 1
    return near / (n_grid * n_grid)


def mle_fit(data: BinaryDataset, model: str = "gpd", box=None, budget: int = 2000,
            init="auto", flat_probe: bool = True) -> FitResult:
    """Maximum-likelihood fit of the tail parameters from binary batches.

    Maximizes :func:`binary_loglik` by deterministic multi-start search.  The
    reported criterion is the negative log-likelihood at the optimum.  The
    diagnostics include ``flat``, an indicator that more than half of the
    search box lies within one log-likelihood unit of the optimum - the
    signature of binary data that cannot identify both parameters.
    """
    data = data if isinstance(data, BinaryDataset) else BinaryDataset(data)
    model = _model_of(data, model)
    if len(data) < 1:
        raise ValueError("need at least one batch")
    box = box if box is not None else default_box(data, model)
    if init == "auto":
        init = default_init(data, model)

    def objective(x):
        return -binary_loglik(_params_from_vec(x, model), data)

    opt = derivative_free_minimize(objective, box, budget=budget, init=init)
    params = _params_from_vec(opt.x, model)
    diags = {"n_eval": opt.n_eval, "criterion": "neg-loglik"}
    if flat_probe:
        coverage = _flatness(objective, box, opt.value)
        diags["flat_coverage"] = coverage
        diags["flat"] = coverage > 0.5
    pis = [conditional_exceedance(params, b.s_prev, b.s_curr) for b in data]
    diags["clamped"] = any(pi <= _PROB_FLOOR or pi >= 1 - _PROB_FLOOR for pi in pis)
    return FitResult(params=params, criterion=opt.value, diagnostics=diags)


def pilot_anchor_fit(data: BinaryDataset, pilot, model: str = "gpd",
                     mode: str = "shape", box=None) -> FitResult:
    """Single-batch fit that anchors one parameter to the operator's pilot.

    One batch constrains only one function of the two parameters - the
    exceedance probability at its level - so a joint fit is ill-posed: a whole
    one-dimensional ridge of parameter pairs attains the maximal likelihood.
    This fit resolves the ambiguity the way the level s1 itself was chosen,
    from the pilot model, in one of two ways:

    * ``mode="shape"``: keep the pilot shape (c or beta), solve the scale so
      the observed batch frequency is matched exactly.
    * ``mode="scale"``: keep the pilot scale (a or alpha), solve the shape.
      If the one-batch equation has no solution at the pilot scale, or the
      solved shape falls outside ``box``, the fit falls back to shape
      anchoring.  Clipping a shape into the box would silently pin the most
      explosive extrapolations to the box edge, so an out-of-box solve is
      treated as "no admissible solution" instead.

    Either way the result lies on the ridge and maximizes the single-batch
    likelihood.  With ``box`` given, a solved scale is clipped into it.
    """
    if mode not in ("shape", "scale"):
        raise ValueError(f"unknown pilot mode {mode!r}")
    data = data if isinstance(data, BinaryDataset) else BinaryDataset(data)
    model = _model_of(data, model)
    first = data[0]
    p1 = min(max(phat(first), 1e-6), 1.0 - 1e-6)
    s1 = first.s_curr
    pvec = _params_vector_any(pilot, model)
    params = None
    if mode == "scale":
        params = _solve_shape_at_scale(model, pvec, s1, p1, box)
    if params is None:
        params = _solve_scale_at_shape(model, pvec, s1, p1, box)
    nll = -binary_loglik(params, data)
    return FitResult(params=params, criterion=nll,
                     diagnostics={"criterion": "neg-loglik",
                                  "anchor": f"pilot-{mode}"})


def _params_vector_any(pilot, model):
    if isinstance(pilot, (GpdParams, WeibullParams)):
        return _params_vector(pilot)
    return (float(pilot[0]), float(pilot[1]))


def _params_vector(params):
    if isinstance(params, GpdParams):
        return (params.c, params.a)
    return (params.alpha, params.beta)


def _clip_coord(value, box, coord):
    if box is None:
        return value
    lo, hi = box[coord]
    return min(max(value, lo), hi)


def _solve_scale_at_shape(model, pvec, s1, p1, box):
    if model == "gpd":
        c0 = pvec[0]
        # survival (1 + c*s1/a)^(-1/c) = p1  =>  a = c*s1 / (p1^(-c) - 1)
        a = c0 * s1 / math.expm1(-c0 * math.log(p1))
        return GpdParams(c=c0, a=_clip_coord(a, box, 1))
    b0 = pvec[1]
    # survival exp(-(s1/alpha)^beta) = p1  =>  alpha = s1/(-log p1)^(1/beta)
    alpha = s1 / (-math.log(p1)) ** (1.0 / b0)
    return WeibullParams(alpha=_clip_coord(alpha, box, 0), beta=b0)


def _solve_shape_at_scale(model, pvec, s1, p1, box):
    t = -math.log(p1)
    if model == "weibull":
        alpha0 = pvec[0]
        ratio = s1 / alpha0
        if ratio <= 1.0 or t <= 0.0:
            return None
        beta = math.log(t) / math.log(ratio)
        if beta <= 0.0:
            return None
        if box is not None and not box[1][0] <= beta <= box[1][1]:
            return None
        return WeibullParams(alpha=alpha0, beta=beta)
    a0 = pvec[1]
    # survival (1 + c*s1/a0)^(-1/c) = p1; solve for c by bisection on a
    # bracket that always contains a sign change when a solution exists
    f = lambda c: math.log1p(c * s1 / a0) / c - t
    lo, hi = 1e-6, 50.0
    if f(lo) * f(hi) > 0:
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(lo) * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    c = 0.5 * (lo + hi)
    if box is not None and not box[0][0] <= c <= box[0][1]:
        return None
    return GpdParams(c=c, a=a0)


_DIVERGENCES = ("kl", "hellinger", "l1")


def divergence_fit(data: BinaryDataset, kind: str = "kl", model: str = "gpd",
                   box=None, budget: int = 2000, init="auto") -> FitResult:
    """Minimum-divergence fit between batch frequencies and model probabilities.

    ``kind`` selects the per-batch divergence between the empirical Bernoulli
    (p^, 1-p^) and the model's (pi, 1-pi), summed over batches:

    * "kl":        p^ log(p^/pi) + (1-p^) log((1-p^)/(1-pi))
    * "hellinger": (sqrt(p^)-sqrt(pi))^2 + (sqrt(1-p^)-sqrt(1-pi))^2
    * "l1":        |p^-pi| + |(1-p^)-(1-pi)|

    All three vanish iff the model matches every batch frequency exactly.
    """
    if kind not in _DIVERGENCES:
        raise ValueError(f"unknown divergence {kind!r}")
    data = data if isinstance(data, BinaryDataset) else BinaryDataset(data)
    model = _model_of(data, model)
    box = box if box is not None else default_box(data, model)
    if init == "auto":
        init = default_init(data, model)

    rows = [(b.s_prev, b.s_curr, phat(b)) for b in data]

    def objective(x):
        params = _params_from_vec(x, model)
        total = 0.0
        for s_prev, s_curr, p in rows:
            pi = _fast_exceedance(params, s_prev, s_curr)
            pi = min(max(pi, _PROB_FLOOR), 1.0 - _PROB_FLOOR)
            if kind == "kl":
                if p > 0.0:
                    total += p * math.log(p / pi)
                if p < 1.0:
                    total += (1.0 - p) * math.log((1.0 - p) / (1.0 - pi))
            elif kind == "hellinger":
                total += (math.sqrt(p) - math.sqrt(pi)) ** 2
                total += (math.sqrt(1.0 - p) - math.sqrt(1.0 - pi)) ** 2
            else:
                total += 2.0 * abs(p - pi)
        return total

    opt = derivative_free_minimize(objective, box, budget=budget, init=init)
    return FitResult(params=_params_from_vec(opt.x, model), criterion=opt.value,
                     diagnostics={"n_eval": opt.n_eval, "criterion": kind})


def _scale_for_exceedance(model, shape, t, s_prev, s_curr):
    # Scale parameter making the conditional exceedance over (s_prev, s_curr]
    # equal to t, at a fixed shape.  Monotone increasing in t for both models.
    if model == "gpd":
        gap = s_curr - s_prev
        return shape * gap / math.expm1(-shape * math.log(t)) - shape * s_prev
    return ((s_curr ** shape - s_prev ** shape) / -math.log(t)) ** (1.0 / shape)


def _assemble(model, shape, scale):
    if model == "gpd":
        return (shape, scale)
    return (scale, shape)


def enhanced_fit(data: BinaryDataset, gamma: float = 0.05, model: str = "gpd",
                 box=None, budget: int = 2000, init="auto",
                 mode: str = "all-pairs", tie: str = "previous",
                 anchor=None) -> FitResult:
    """Constrained backward fit: plausible for the latest batch, faithful to the past.

    The search is restricted to parameters whose conditional exceedance of the
    *latest* batch lies inside that batch's binomial confidence interval (the
    plausible set at level gamma).  Within it, the objective is the sum of
    :func:`backward_residual` over all earlier ladder steps (``mode
    "all-pairs"``), i.e. the parameters must re-create the gaps between
    previously tested levels at their observed frequencies.  ``mode "latest"``
    keeps only the most recent step's residual.

    The plausible set is a thin curved band in the parameter plane, so the
    search runs in constraint-aligned coordinates: for each shape value the
    scale is solved in closed form from a target exceedance t inside the
    interval (the conditional exceedance is monotone in the scale).  Every
    evaluated point is feasible by construction.

    Early in a campaign the backward objective vanishes on a whole curve of
    parameter pairs (two batches, two parameters), so the minimizer is not
    unique; a vanishing tie-break term selects among the exact solutions.
    ``tie`` names the rule:

    * ``"previous"`` - smallest revision of the running shape estimate
      (``anchor``); sequential use passes the preceding stage's fit here.
      Falls back to ``"observed"`` when no anchor is given.
    * ``"observed"`` - exceedance of the latest batch closest to its observed
      frequency (exact frequency interpolation; noisiest).
    * ``"lower"`` / ``"upper"`` - exceedance nearest the corresponding edge
      of the plausible interval.

    If the plausible set is empty inside the search box, the constraint is
    relaxed: the fit returns the box point whose conditional exceedance is
    nearest the interval, flagged with ``relaxed=True``.

    Degenerate earlier batches (0 or K failures) enter the objective with
    their frequency clamped to half a count, flagged via ``clamped_batches``.
    """
    data = data if isinstance(data, BinaryDataset) else BinaryDataset(data)
    model = _model_of(data, model)
    if len(data) < 2:
        raise ValueError("enhanced fit needs at least two batches; "
                         "fit the first stage by mle_fit")
    if mode not in ("all-pairs", "latest"):
        raise ValueError(f"unknown mode {mode!r}")
    if tie not in ("previous", "observed", "lower", "upper"):
        raise ValueError(f"unknown tie rule {tie!r}")
    box = box if box is not None else default_box(data, model)
    if init == "auto":
        init = default_init(data, model)
    if tie == "previous" and anchor is None:
        tie = "observed"

    latest = data[-1]
    lo, hi = confidence_interval_p(latest, gamma)

    past = list(data.batches[:-1]) if mode == "all-pairs" else [data.batches[-2]]
    clamped = []
    rows = []
    for b in past:
        p = phat(b)
        p_clip = min(max(p, 0.5 / b.k), 1.0 - 0.5 / b.k)
        if p_clip != p:
            clamped.append(b)
        rows.append((b.s_prev, b.s_curr, p_clip))

    shape_bounds = box[0] if model == "gpd" else box[1]
    scale_bounds = box[1] if model == "gpd" else box[0]
    t_lo = max(lo, _PROB_FLOOR)
    t_hi = min(hi, 1.0 - _PROB_FLOOR)
    p_obs = phat(latest)
    if anchor is not None:
        avec = _params_vector_any(anchor, model)
        anchor_shape = avec[0] if model == "gpd" else avec[1]
    else:
        anchor_shape = None

    n_eval = 0

    def residual_sum(params):
        total = 0.0
        for s_prev, s_curr, p in rows:
            gap = _conditional_quantile_gap(params, s_prev, p)
            total += abs((s_curr - s_prev) - gap)
        return total

    def make_params(shape, scale):
        return _params_from_vec(_assemble(model, shape, scale), model)

    def scale_window(shape):
        # Range of scales keeping the latest batch's exceedance inside the
        # interval; the exceedance is monotone increasing in the scale.
        if t_lo > t_hi:
            return None
        s_min = _scale_for_exceedance(model, shape, t_lo, latest.s_prev,
                                      latest.s_curr)
        s_max = _scale_for_exceedance(model, shape, t_hi, latest.s_prev,
                                      latest.s_curr)
        w_lo = max(s_min, scale_bounds[0])
        w_hi = min(s_max, scale_bounds[1])
        if w_lo > w_hi:
            return None
        return (w_lo, w_hi)

    def profile(shape):
        # Minimize the backward objective over the feasible scales at this
        # shape.  Each past step's residual vanishes at a closed-form scale
        # (the kink of its absolute value); the constrained minimum sits at a
        # kink, a window edge, or between two kinks, so evaluating kinks,
        # edges and midpoints brackets it tightly.
        nonlocal n_eval
        w = scale_window(shape)
        if w is None:
            return None
        cands = {w[0], w[1]}
        for s_prev, s_curr, p in rows:
            x = _scale_for_exceedance(model, shape, p, s_prev, s_curr)
            if w[0] < x < w[1]:
                cands.add(x)
        cands = sorted(cands)
        cands += [0.5 * (u + v) for u, v in zip(cands, cands[1:])]
        best = None
        for s in sorted(cands):
            val = residual_sum(make_params(shape, s))
            n_eval += 1
            if best is None or val < best[0]:
                best = (val, s)
        return best

    n_shapes = max(17, min(81, budget // 25))
    shapes = [shape_bounds[0] + i * (shape_bounds[1] - shape_bounds[0])
              / (n_shapes - 1) for i in range(n_shapes)]
    if init is not None:
        extra = init[0] if model == "gpd" else init[1]
        if shape_bounds[0] <= extra <= shape_bounds[1]:
            shapes = sorted(set(shapes) | {float(extra)})

    diags = {"interval": (lo, hi), "gamma": gamma, "mode": mode, "tie": tie,
             "clamped_batches": len(clamped), "relaxed": False}

    table = []
    for shape in shapes:
        prof = profile(shape)
        if prof is not None:
            table.append((shape, prof[1], prof[0]))

    if not table:
        # empty plausible set inside the box: drop the constraint and move the
        # exceedance as close as possible to the interval's centre
        mid = 0.5 * (lo + hi)

        def violation(x):
            pi = _fast_exceedance(_params_from_vec(x, model), latest.s_prev,
                                  latest.s_curr)
            return abs(pi - mid)

        opt = derivative_free_minimize(violation, box, budget=budget,
                                       init=init)
        diags["relaxed"] = True
        diags["n_eval"] = n_eval + opt.n_eval
        params = _params_from_vec(opt.x, model)
        return FitResult(params=params, criterion=residual_sum(params),
                         diagnostics=diags)

    f_best = min(r[2] for r in table)
    tol = 1e-9 * max(1.0, latest.s_curr)
    ties_set = [r for r in table if r[2] <= f_best + tol]

    if len(ties_set) == 1:
        # unique minimizer: polish the shape between its grid neighbours
        shape0 = ties_set[0][0]
        i = next(j for j, r in enumerate(table) if r[0] == shape0)
        lo_s = table[i - 1][0] if i > 0 else shape0
        hi_s = table[i + 1][0] if i + 1 < len(table) else shape0
        if hi_s > lo_s:
            from scipy import optimize as _optimize

            def f_of_shape(s):
                prof = profile(s)
                return prof[0] if prof is not None else math.inf

            res = _optimize.minimize_scalar(
                f_of_shape, bounds=(lo_s, hi_s), method="bounded",
                options={"xatol": 1e-6 * max(1.0, hi_s)})
            if res.fun < ties_set[0][2]:
                prof = profile(float(res.x))
                ties_set = [(float(res.x), prof[1], prof[0])]
    else:
        # flat minimum (typical with only one past step): resolve by the
        # tie rule rather than by search-path accident
        def t_of(r):
            return _fast_exceedance(make_params(r[0], r[1]),
                                    latest.s_prev, latest.s_curr)

        if tie == "previous":
            a_sh = min(max(anchor_shape, shape_bounds[0]), shape_bounds[1])
            prof = profile(a_sh)
            if prof is not None and prof[0] <= f_best + tol:
                ties_set = [(a_sh, prof[1], prof[0])]
            else:
                ties_set = [min(ties_set, key=lambda r: abs(r[0] - a_sh))]
        elif tie == "observed":
            ties_set = [min(ties_set, key=lambda r: abs(t_of(r) - p_obs))]
        elif tie == "lower":
            ties_set = [min(ties_set, key=t_of)]
        else:
            ties_set = [max(ties_set, key=t_of)]

    shape0, scale0, value0 = ties_set[0]
    diags["n_eval"] = n_eval
    return FitResult(params=make_params(shape0, scale0), criterion=value0,
                     diagnostics=diags)
