"""Monte Carlo harness: seeded oracles, study specs, summary tables.

Reproducibility contract: every replica draws from its own counter-based
stream keyed by (study seed, replica index), so results are independent of
execution order and identical across runs and machines.  ``run_study`` twice
with the same spec and seed produces byte-identical replica records.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import stats as _sstats

from .baselines import (
    CrmConfig,
    CrmResult,
    StaircaseConfig,
    crm_run,
    devalk_fit,
    devalk_quantile,
    staircase_mle,
    staircase_moment_estimate,
    staircase_quantile,
    staircase_run,
)
from .distributions import (
    GpdParams,
    WeibullParams,
    gpd_quantile,
    gpd_truncated_quantile,
    weibull_quantile,
    weibull_truncated_quantile,
)
from .estimators import conditional_exceedance
from .splitting import LadderConfig, run_splitting

__all__ = [
    "replica_rng",
    "exceedance_oracle",
    "truncated_sample_oracle",
    "strength_outcome_fn",
    "relative_error",
    "StudySpec",
    "StudyResult",
    "SummaryStats",
    "run_study",
    "emit_table",
]


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    """Independent counter-based stream for one replica of one study.

    Philox is keyed on (seed, replica); streams are reproducible and mutually
    independent regardless of how many draws each replica consumes.
    """
    if seed < 0 or replica < 0:
        raise ValueError("seed and replica must be >= 0")
    key = np.array([seed, replica], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _truth_params(model: str, params: dict):
    if model == "gpd":
        return GpdParams(c=params["c"], a=params["a"])
    if model == "weibull":
        return WeibullParams(alpha=params["alpha"], beta=params["beta"])
    if model == "exponential":
        return {"lam": params["lam"]}
    if model == "gaussian":
        return {"mu": params["mu"], "sigma": params["sigma"]}
    raise ValueError(f"unknown truth model {model!r}")


def exceedance_oracle(truth, rng: np.random.Generator):
    """Direct Bernoulli oracle: draws outcomes at the exact conditional rate."""

    def oracle(stage, s_prev, s_curr, k):
        pi = conditional_exceedance(truth, s_prev, s_curr)
        return (rng.random(k) < pi).astype(int)

    return oracle


def truncated_sample_oracle(truth, rng: np.random.Generator):
    """Latent-variable oracle: samples truncated strengths, then thresholds.

    Distributionally equivalent to :func:`exceedance_oracle`; exists so the
    two routes can cross-check each other.
    """

    def oracle(stage, s_prev, s_curr, k):
        u = rng.random(k)
        if isinstance(truth, GpdParams):
            x = gpd_truncated_quantile(u, truth, s_prev)
        else:
            x = weibull_truncated_quantile(u, truth, s_prev)
        return (x > s_curr).astype(int)

    return oracle


def strength_outcome_fn(model: str, params: dict, rng: np.random.Generator):
    """Per-specimen failure indicator at a stress level, original scale."""

    if model == "exponential":
        lam = params["lam"]

        def fn(level):
            p = -math.expm1(-lam * level) if level > 0 else 0.0
            return int(rng.random() < p)

        return fn
    if model == "gaussian":
        mu, sigma = params["mu"], params["sigma"]

        def fn(level):
            p = _sstats.norm.cdf((level - mu) / sigma)
            return int(rng.random() < p)

        return fn
    raise ValueError(f"unknown strength model {model!r}")


def relative_error(estimate: float, truth: float) -> float:
    """(estimate - truth)/truth."""
    if truth == 0:
        raise ZeroDivisionError("truth quantile is zero")
    return (estimate - truth) / truth


# ---------------------------------------------------------------------------
# Study specification and execution


@dataclass(frozen=True)
class StudySpec:
    """A self-contained description of one Monte Carlo experiment.

    ``procedure`` is one of "splitting", "staircase", "crm", "devalk".
    ``truth_model``/``truth`` give the data-generating distribution;
    ``config`` holds the procedure's own settings (see the corresponding
    runner for keys).  Specs serialize to JSON for the command line.
    """

    name: str
    procedure: str
    truth_model: str
    truth: dict
    config: dict
    replicas: int
    oracle: str = "bernoulli"

    def __post_init__(self):
        if self.procedure not in ("splitting", "staircase", "crm", "devalk"):
            raise ValueError(f"unknown procedure {self.procedure!r}")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.oracle not in ("bernoulli", "truncated"):
            raise ValueError(f"unknown oracle {self.oracle!r}")
        _truth_params(self.truth_model, self.truth)  # validate eagerly

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "StudySpec":
        return cls(**json.loads(text))


@dataclass
class SummaryStats:
    """Location/dispersion summary of one metric across replicas."""

    n: int
    mean: float
    std: float
    minimum: float
    q25: float
    median: float
    q75: float
    maximum: float
    n_flagged: int = 0

    @classmethod
    def from_values(cls, values, n_flagged: int = 0) -> "SummaryStats":
        arr = np.asarray(values, dtype=float)
        if arr.size == 0:
            raise ValueError("no values to summarize")
        q25, med, q75 = np.percentile(arr, [25, 50, 75])
        return cls(n=int(arr.size), mean=float(np.mean(arr)),
                   std=float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0,
                   minimum=float(np.min(arr)), q25=float(q25),
                   median=float(med), q75=float(q75),
                   maximum=float(np.max(arr)), n_flagged=n_flagged)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class StudyResult:
    spec: StudySpec
    seed: int
    metrics: dict
    replicas: list = field(default_factory=list)

    def metric(self, name: str) -> SummaryStats:
        return self.metrics[name]


def _true_quantile(spec: StudySpec) -> float:
    alpha = spec.config["alpha"]
    truth = _truth_params(spec.truth_model, spec.truth)
    if spec.procedure in ("splitting", "devalk"):
        # upper tail of the inverted strength
        if spec.truth_model == "gpd":
            return gpd_quantile(1.0 - alpha, truth)
        if spec.truth_model == "weibull":
            return weibull_quantile(1.0 - alpha, truth)
        raise ValueError(f"{spec.procedure} needs a gpd or weibull truth")
    # lower tail of the strength itself
    if spec.truth_model == "exponential":
        return -math.log1p(-alpha) / spec.truth["lam"]
    if spec.truth_model == "gaussian":
        return spec.truth["mu"] + spec.truth["sigma"] * _sstats.norm.ppf(alpha)
    raise ValueError(f"{spec.procedure} needs an exponential or gaussian truth")


def _resolve_s1(spec: StudySpec, truth) -> float:
    s1 = spec.config.get("s1", "quantile")
    if s1 == "quantile":
        p = spec.config["p"]
        if isinstance(truth, GpdParams):
            return gpd_quantile(1.0 - p, truth)
        return weibull_quantile(1.0 - p, truth)
    return float(s1)


def _run_splitting_replica(spec, truth, rng, q_true):
    cfg = LadderConfig(
        alpha=spec.config["alpha"], p=spec.config["p"],
        s1=_resolve_s1(spec, truth), k=spec.config["k"],
        m=spec.config.get("m"), gamma=spec.config.get("gamma", 0.05),
        budget=spec.config.get("budget", 2000))
    make = exceedance_oracle if spec.oracle == "bernoulli" else truncated_sample_oracle
    ladder = run_splitting(
        cfg, make(truth, rng),
        estimator=spec.config.get("estimator", "enhanced"),
        model=spec.config.get("model", spec.truth_model),
        estimator_options=spec.config.get("estimator_options"))
    rec = {"estimate": ladder.estimate,
           "relative_error": relative_error(ladder.estimate, q_true),
           "attained_alpha": ladder.attained_alpha,
           "flags": len(ladder.flags)}
    return rec


def _run_staircase_replica(spec, truth, rng, q_true):
    cfg = StaircaseConfig(s_ini=spec.config["s_ini"], delta=spec.config["delta"],
                          trials=spec.config["trials"], model=spec.truth_model)
    fn = strength_outcome_fn(spec.truth_model, spec.truth, rng)
    levels, outcomes = staircase_run(cfg, fn)
    if spec.config.get("estimator", "likelihood") == "moments":
        moments, flags = staircase_moment_estimate(
            levels, outcomes, spec.config["delta"],
            event=spec.config.get("event", "failures"))
        if spec.truth_model == "exponential":
            params = {"lam": 1.0 / moments["sigma"]}
        else:
            params = moments
    else:
        params, flags = staircase_mle(levels, outcomes, model=spec.truth_model)
    q_est = staircase_quantile(params, spec.config["alpha"], model=spec.truth_model)
    rec = {"estimate": q_est, "relative_error": relative_error(q_est, q_true),
           "flags": len(flags)}
    if spec.truth_model == "exponential":
        rec["lam_relative_error"] = relative_error(params["lam"], spec.truth["lam"])
    else:
        rec["mu_relative_error"] = relative_error(params["mu"], spec.truth["mu"])
        rec["sigma_relative_error"] = relative_error(params["sigma"],
                                                     spec.truth["sigma"])
    return rec


def _run_crm_replica(spec, truth, rng, q_true):
    cfg = CrmConfig(
        levels=tuple(spec.config["levels"]), alpha=spec.config["alpha"],
        prior_k=spec.config.get("prior_k", 2),
        prior_n=spec.config.get("prior_n", 10),
        prior_level=spec.config.get("prior_level", 1.0),
        draws=spec.config.get("draws", 100),
        iterations=spec.config.get("iterations", 10),
        trials_per_iter=spec.config.get("trials_per_iter", 50),
        conversion=spec.config.get("conversion", "current"))
    fn = strength_outcome_fn(spec.truth_model, spec.truth, rng)
    res: CrmResult = crm_run(cfg, fn, rng)
    return {"estimate": res.selected_level,
            "relative_error": relative_error(res.selected_level, q_true),
            "continuous_relative_error":
                relative_error(res.quantile_continuous, q_true),
            "flags": len(res.flags)}


def _run_devalk_replica(spec, truth, rng, q_true):
    n = spec.config["n"]
    l_n = spec.config.get("l_n")
    u = rng.random(n)
    if isinstance(truth, GpdParams):
        sample = gpd_quantile(u, truth)
        g = (lambda x, c=truth.c: c * x)
        theta = 1.0
    else:
        sample = weibull_quantile(u, truth)
        g = (lambda x, b=truth.beta: 1.0 / b)
        theta = 0.0
    if spec.config.get("slope", "true") == "fit":
        # family-agnostic variant: estimate slope and curvature from the
        # sample itself instead of plugging in the known shape
        grid = spec.config.get("theta_grid", np.linspace(0.0, 0.75, 9))
        g_hat, theta = devalk_fit(sample, grid, l_n=l_n)
        g = (lambda x, g0=g_hat: g0)
    z = -math.log(spec.config["alpha"])
    q_est = devalk_quantile(sample, z, g=g, theta=theta, l_n=l_n)
    return {"estimate": q_est, "relative_error": relative_error(q_est, q_true),
            "flags": 0}


_RUNNERS = {
    "splitting": _run_splitting_replica,
    "staircase": _run_staircase_replica,
    "crm": _run_crm_replica,
    "devalk": _run_devalk_replica,
}


def run_study(spec: StudySpec, seed: int) -> StudyResult:
    """Execute all replicas of a study and summarize every recorded metric."""
    truth = _truth_params(spec.truth_model, spec.truth)
    q_true = _true_quantile(spec)
    runner = _RUNNERS[spec.procedure]
    records = []
    for i in range(spec.replicas):
        rng = replica_rng(seed, i)
        rec = runner(spec, truth, rng, q_true)
        rec["replica"] = i
        records.append(rec)

    metric_names = [k for k in records[0] if k not in ("replica", "flags")]
    n_flagged = sum(1 for r in records if r.get("flags", 0) > 0)
    metrics = {name: SummaryStats.from_values([r[name] for r in records],
                                              n_flagged=n_flagged)
               for name in metric_names}
    return StudyResult(spec=spec, seed=seed, metrics=metrics, replicas=records)


# ---------------------------------------------------------------------------
# Table rendering


_LAYOUTS = {
    "mean-std": ("Mean", "Std"),
    "quartiles": ("Min", "Q25", "Q50", "Mean", "Q75", "Max"),
    "binary-vs-complete": ("Mean (binary)", "Std (binary)",
                           "Mean (complete)", "Std (complete)"),
}


def _stat_fields(stats: SummaryStats, layout: str):
    if layout == "mean-std":
        return [stats.mean, stats.std]
    return [stats.minimum, stats.q25, stats.median, stats.mean, stats.q75,
            stats.maximum]


def emit_table(rows, layout: str = "mean-std") -> tuple[str, str]:
    """Render summary rows as (canonical CSV, aligned text).

    ``rows`` is a list of (label, SummaryStats) for the single-block layouts,
    or (label, SummaryStats, SummaryStats) for "binary-vs-complete".  An empty
    list yields a header-only CSV and an empty table body.
    """
    if layout not in _LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}")
    header = _LAYOUTS[layout]
    table = []
    for row in rows:
        label = row[0]
        if layout == "binary-vs-complete":
            if len(row) != 3:
                raise ValueError("paired layout needs (label, stats, stats)")
            cells = _stat_fields(row[1], "mean-std") + _stat_fields(row[2], "mean-std")
        else:
            cells = _stat_fields(row[1], layout)
        table.append((label, cells))

    csv_lines = ["label," + ",".join(h.replace(" ", "_").replace("(", "")
                                     .replace(")", "").lower()
                                     for h in header)]
    for label, cells in table:
        csv_lines.append(label + "," + ",".join(format(v, ".10g") for v in cells))
    csv_text = "\n".join(csv_lines) + "\n"

    width = max([len("label")] + [len(lbl) for lbl, _ in table]) + 2
    colw = max([10] + [len(h) + 2 for h in header])
    out = ["label".ljust(width) + "".join(h.rjust(colw) for h in header)]
    for label, cells in table:
        out.append(label.ljust(width)
                   + "".join(format(v, ".3f").rjust(colw) for v in cells))
    text = "\n".join(out) + "\n"
    return csv_text, text
