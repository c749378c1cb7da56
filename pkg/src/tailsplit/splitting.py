"""Sequential ladder design for extreme quantile estimation.

The target is the (1-alpha)-quantile of the inverted strength R~ for very
small alpha (say 1e-3).  Estimating it directly would need thousands of
specimens, so the tail event {R~ > q} is split into a cascade of m
conditional events of moderate probability p each,

    P(R~ > s_m) = P(R~ > s_1) * prod_j P(R~ > s_{j+1} | R~ > s_j),

with p**m ~ alpha.  Each stage tests K specimens between consecutive levels,
refits the tail model on all binary outcomes so far, and places the next
level at the fitted conditional (1-p)-quantile.  After m stages the last
level itself is the quantile estimate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

from .distributions import GpdParams, WeibullParams, gpd_condition, gpd_quantile
from .estimators import (
    BinaryBatch,
    BinaryDataset,
    FitResult,
    divergence_fit,
    enhanced_fit,
    mle_fit,
    phat,
    pilot_anchor_fit,
)

__all__ = [
    "LadderConfig",
    "Ladder",
    "StageRecord",
    "TrialOracle",
    "plan_stage_count",
    "splitting_identity",
    "next_level_gpd",
    "next_level_weibull",
    "pending_stage",
    "ingest_batch",
    "run_splitting",
]


def plan_stage_count(alpha: float, p: float) -> int:
    """Smallest m with p**m <= alpha, i.e. ceil(log alpha / log p)."""
    if not 0.0 < alpha < p < 1.0:
        raise ValueError("need 0 < alpha < p < 1")
    ratio = math.log(alpha) / math.log(p)
    return int(math.ceil(ratio - 1e-9))


def splitting_identity(p1: float, stage_probs) -> float:
    """Tail probability recomposed from the conditional cascade."""
    out = p1
    for q in stage_probs:
        out *= q
    return out


def next_level_gpd(fit: GpdParams, s_j: float, p: float) -> float:
    """Next ladder level under a GPD conditional fit at the current level.

    ``fit`` must already be the parameters of the excess distribution above
    s_j (see :func:`tailsplit.distributions.gpd_condition`); the new level
    sits at its (1-p)-quantile, measured from s_j.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    return s_j + gpd_quantile(1.0 - p, fit)


def next_level_weibull(beta_hat: float, s_curr: float, s_prev: float | None = None,
                       p: float | None = None) -> float:
    """Next ladder level under a Weibull shape estimate.

    For the Weibull tail the step equation "the conditional exceedance of the
    next level equals that of the current one" has closed-form solutions in
    which the stage probability cancels:

    * after the first stage:  s_2 = s_1 * 2**(1/beta)
    * afterwards:             s_{j+1} = (2*s_j**beta - s_{j-1}**beta)**(1/beta)

    ``p`` is accepted for interface symmetry with :func:`next_level_gpd` but
    does not enter the level update.
    """
    if beta_hat <= 0:
        raise ValueError("beta must be > 0")
    if s_curr <= 0:
        raise ValueError("s_curr must be > 0")
    if s_prev is None:
        return s_curr * 2.0 ** (1.0 / beta_hat)
    if not 0.0 <= s_prev < s_curr:
        raise ValueError("need 0 <= s_prev < s_curr")
    return (2.0 * s_curr ** beta_hat - s_prev ** beta_hat) ** (1.0 / beta_hat)


class TrialOracle(Protocol):
    """Source of binary outcomes for one batch of trials.

    Called as ``oracle(stage, s_prev, s_curr, k)`` and must return an iterable
    of k ints in {0, 1}; 1 means the specimen's inverted strength exceeded
    s_curr given it exceeded s_prev (a physical failure).
    """

    def __call__(self, stage: int, s_prev: float, s_curr: float, k: int): ...


@dataclass(frozen=True)
class LadderConfig:
    """Design parameters of one sequential campaign.

    alpha : float
        Target tail probability of the quantile to estimate.
    p : float
        Conditional stage probability; p**m should be ~alpha.
    s1 : float
        First tested level (inverted scale), typically from expert advice so
        that P(R~ > s1) is close to p.
    k : int
        Specimens tested per stage.
    m : int, optional
        Stage count; derived from alpha and p when omitted.
    gamma : float
        Confidence level parameter of the plausible set used by the enhanced
        estimator.
    budget : int
        Objective-evaluation budget per fit.
    """

    alpha: float
    p: float
    s1: float
    k: int
    m: int | None = None
    gamma: float = 0.05
    budget: int = 2000

    def __post_init__(self):
        if not 0.0 < self.alpha < self.p < 1.0:
            raise ValueError("need 0 < alpha < p < 1")
        if self.s1 <= 0:
            raise ValueError("s1 must be > 0")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be >= 1 when given")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")

    @property
    def stages(self) -> int:
        return self.m if self.m is not None else plan_stage_count(self.alpha, self.p)


@dataclass
class StageRecord:
    """Everything observed and fitted at one stage."""

    stage: int
    s_prev: float
    s_curr: float
    k: int
    failures: int
    phat: float
    params: dict
    criterion: float
    diagnostics: dict

    def to_dict(self):
        return {
            "stage": self.stage, "s_prev": self.s_prev, "s_curr": self.s_curr,
            "k": self.k, "failures": self.failures, "phat": self.phat,
            "params": self.params, "criterion": self.criterion,
            "diagnostics": self.diagnostics,
        }


def _params_to_dict(params) -> dict:
    if isinstance(params, GpdParams):
        return {"c": params.c, "a": params.a}
    return {"alpha": params.alpha, "beta": params.beta}


def _params_from_dict(d: dict):
    if "c" in d:
        return GpdParams(c=d["c"], a=d["a"])
    return WeibullParams(alpha=d["alpha"], beta=d["beta"])


@dataclass
class Ladder:
    """Outcome of a sequential splitting run."""

    model: str
    estimator: str
    config: LadderConfig
    levels: list[float] = field(default_factory=list)
    stages: list[StageRecord] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    estimate: float | None = None
    attained_alpha: float | None = None

    def to_dict(self) -> dict:
        cfg = {"alpha": self.config.alpha, "p": self.config.p,
               "s1": self.config.s1, "k": self.config.k, "m": self.config.m,
               "gamma": self.config.gamma, "budget": self.config.budget}
        return {
            "model": self.model, "estimator": self.estimator, "config": cfg,
            "levels": list(self.levels),
            "stages": [s.to_dict() for s in self.stages],
            "flags": list(self.flags), "estimate": self.estimate,
            "attained_alpha": self.attained_alpha,
        }

    def to_json(self) -> str:
        """Canonical (sorted, compact) JSON rendering; replay-stable."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "Ladder":
        cfg = LadderConfig(**d["config"])
        out = cls(model=d["model"], estimator=d["estimator"], config=cfg,
                  levels=list(d["levels"]), flags=list(d["flags"]),
                  estimate=d["estimate"], attained_alpha=d["attained_alpha"])
        out.stages = [StageRecord(**s) for s in d["stages"]]
        return out

    @property
    def dataset(self) -> BinaryDataset:
        return BinaryDataset(BinaryBatch(s.s_prev, s.s_curr, s.k, s.failures)
                             for s in self.stages)


_FALLBACK_NOTE = "degenerate-first-batch-fallback"


def _fallback_params(model: str, s1: float):
    # neutral unit-shape seed when the very first batch is all-0 or all-1
    if model == "gpd":
        return GpdParams(c=1.0, a=s1)
    return WeibullParams(alpha=s1, beta=1.0)


def _fit_stage(dataset: BinaryDataset, stage: int, model: str, estimator: str,
               config: LadderConfig, prev_params, options: dict) -> FitResult:
    """Fit tail parameters after the given stage's batch has been recorded.

    Shared by :func:`run_splitting` and the campaign service so that both
    produce bit-identical fits from identical data.
    """
    budget = options.get("budget", config.budget)
    box = options.get("box")
    if "warm" not in options:
        warm = "auto"
    elif options["warm"] and prev_params is not None:
        warm = _params_vector(prev_params)
    else:
        # independent multistart at every stage: no information flows between
        # refits except through the accumulated batches themselves
        warm = None
    pilot = options.get("pilot")
    if stage == 1 and pilot is not None:
        # single-batch likelihood has a flat ridge; resolve it with the
        # operator's pilot model rather than an arbitrary ridge point
        return pilot_anchor_fit(dataset, tuple(pilot), model=model,
                                mode=options.get("pilot_mode", "shape"),
                                box=box)
    refit = options.get("refit", "always")
    if refit not in ("always", "stage1"):
        raise ValueError(f"unknown refit policy {refit!r}")
    if refit == "stage1" and prev_params is not None:
        # keep steering the ladder with the first-stage fit; later batches are
        # recorded but do not feed back into the parameters
        return FitResult(params=prev_params, criterion=math.nan,
                         diagnostics={"note": "stage1-fit-carried"})
    if estimator == "enhanced":
        if stage == 1:
            return mle_fit(dataset, model=model, budget=budget, box=box)
        return enhanced_fit(dataset, gamma=config.gamma, model=model,
                            budget=budget, box=box, init=warm,
                            mode=options.get("mode", "all-pairs"),
                            tie=options.get("tie", "previous"),
                            anchor=prev_params)
    if estimator == "mle":
        return mle_fit(dataset, model=model, budget=budget, box=box,
                       init=warm)
    if estimator in ("kl", "hellinger", "l1"):
        return divergence_fit(dataset, kind=estimator, model=model,
                              budget=budget, box=box, init=warm)
    raise ValueError(f"unknown estimator {estimator!r}")


def _params_vector(params):
    if params is None:
        return None
    if isinstance(params, GpdParams):
        return (params.c, params.a)
    return (params.alpha, params.beta)


def pending_stage(ladder: Ladder) -> tuple[int, float, float]:
    """(stage index, s_prev, s_curr) of the next batch still to be tested."""
    stage = len(ladder.stages) + 1
    if stage > ladder.config.stages:
        raise ValueError("ladder already complete")
    s_prev = 0.0 if stage == 1 else ladder.levels[stage - 2]
    s_curr = ladder.levels[stage - 1]
    return stage, s_prev, s_curr


def ingest_batch(ladder: Ladder, outcomes,
                 estimator: str | Callable = "enhanced",
                 estimator_options: dict | None = None) -> Ladder:
    """Record one batch of outcomes and advance the ladder by one stage.

    This is the whole per-stage state transition: append the batch, refit,
    place the next level (or, at the last stage, freeze the estimate and the
    attained tail probability).  :func:`run_splitting` and the live campaign
    service both drive the ladder exclusively through this function, so a
    recorded campaign and a simulated run with the same outcomes coincide
    bit for bit.
    """
    config = ladder.config
    m = config.stages
    options = dict(estimator_options or {})
    stage, s_prev, s_curr = pending_stage(ladder)
    outcomes = list(outcomes)
    if len(outcomes) != config.k or any(o not in (0, 1) for o in outcomes):
        raise ValueError(f"need exactly {config.k} outcomes in {{0, 1}}")
    batch = BinaryBatch(s_prev, s_curr, config.k, int(sum(outcomes)))
    dataset = BinaryDataset(
        [BinaryBatch(s.s_prev, s.s_curr, s.k, s.failures)
         for s in ladder.stages] + [batch])
    params = (None if stage == 1
              else _params_from_dict(ladder.stages[-1].params))

    degenerate = batch.failures in (0, batch.k)
    if degenerate:
        ladder.flags.append(f"degenerate-batch:{stage}")
    if degenerate and stage == 1:
        params = _fallback_params(ladder.model, config.s1)
        fit = FitResult(params=params, criterion=math.nan,
                        diagnostics={"note": _FALLBACK_NOTE})
        ladder.flags.append(_FALLBACK_NOTE)
    elif degenerate and params is not None:
        fit = FitResult(params=params, criterion=math.nan,
                        diagnostics={"note": f"reused-fit-from-stage-{stage - 1}"})
    elif callable(estimator):
        fit = estimator(dataset, stage, ladder.model, config, params)
        params = fit.params
    else:
        fit = _fit_stage(dataset, stage, ladder.model, estimator, config,
                         params, options)
        params = fit.params

    ladder.stages.append(StageRecord(
        stage=stage, s_prev=s_prev, s_curr=s_curr, k=config.k,
        failures=batch.failures, phat=phat(batch),
        params=_params_to_dict(fit.params), criterion=fit.criterion,
        diagnostics=dict(fit.diagnostics)))

    if stage < m:
        if ladder.model == "gpd":
            cond = gpd_condition(params, s_curr)
            nxt = next_level_gpd(cond, s_curr, config.p)
        else:
            nxt = next_level_weibull(params.beta, s_curr,
                                     s_prev if stage > 1 else None)
        if not nxt > s_curr:
            raise ArithmeticError(
                f"stage {stage} produced a non-increasing level {nxt}")
        ladder.levels.append(nxt)
    else:
        ladder.estimate = ladder.levels[-1]
        ladder.attained_alpha = ladder.stages[0].phat * config.p ** (m - 1)
    return ladder


def run_splitting(config: LadderConfig, oracle: TrialOracle,
                  estimator: str | Callable = "enhanced", model: str = "gpd",
                  estimator_options: dict | None = None) -> Ladder:
    """Run the full sequential procedure against a trial oracle.

    Parameters
    ----------
    config : LadderConfig
    oracle : TrialOracle
        Supplies the binary outcomes of each batch; all randomness lives here,
        so for a deterministic oracle the whole run is deterministic.
    estimator : str or callable
        "enhanced" (constrained backward fit, ML at the first stage), "mle",
        or one of the divergence kinds "kl"/"hellinger"/"l1".  A callable is
        invoked as f(dataset, stage, model, config, prev_params) -> FitResult.
    model : str
        "gpd" or "weibull".

    Returns the completed :class:`Ladder`; the quantile estimate is the last
    level of the ladder and the attained tail probability is
    phat_1 * p**(m-1).
    """
    if model not in ("gpd", "weibull"):
        raise ValueError(f"unknown model {model!r}")
    est_name = estimator if isinstance(estimator, str) else "custom"
    ladder = Ladder(model=model, estimator=est_name, config=config,
                    levels=[config.s1])
    for stage in range(1, config.stages + 1):
        _, s_prev, s_curr = pending_stage(ladder)
        outcomes = oracle(stage, s_prev, s_curr, config.k)
        ingest_batch(ladder, outcomes, estimator, estimator_options)
    return ladder
