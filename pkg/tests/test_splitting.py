"""Ladder mechanics: planning, level placement, batch ingestion, replay."""

import json
import math

import numpy as np
import pytest

from tailsplit.distributions import (
    GpdParams,
    WeibullParams,
    gpd_condition,
    gpd_quantile,
    gpd_survival,
    weibull_conditional_survival,
)
from tailsplit.estimators import FitResult
from tailsplit.splitting import (
    Ladder,
    LadderConfig,
    ingest_batch,
    next_level_gpd,
    next_level_weibull,
    pending_stage,
    plan_stage_count,
    run_splitting,
    splitting_identity,
)


def make_config(**kw):
    base = dict(alpha=1e-3, p=10 ** -0.6, s1=3.7874, k=50, m=5)
    base.update(kw)
    return LadderConfig(**base)


def exact_oracle(truth, config):
    """Outcome batches whose failure counts match the exact conditional
    probabilities, so that fits against them are noiseless."""

    def oracle(stage, s_prev, s_curr, k):
        pi = gpd_survival(s_curr - s_prev, gpd_condition(truth, s_prev))
        f = int(round(k * pi))
        return [1] * f + [0] * (k - f)

    return oracle


def exact_estimator(truth):
    """Estimator that always returns the truth; isolates level placement."""

    def estimator(data, stage, model, config, prev_params):
        return FitResult(params=truth, criterion=0.0, diagnostics={})

    return estimator


# ---------------------------------------------------------------------------
# planning and closed-form level placement


def test_plan_stage_count_values():
    assert plan_stage_count(1e-3, 10 ** -0.6) == 5
    assert plan_stage_count(1e-3, 0.2) == 5
    assert plan_stage_count(1e-3, 0.1) == 3
    assert plan_stage_count(0.01, 0.1) == 2


def test_plan_stage_count_validation():
    with pytest.raises(ValueError):
        plan_stage_count(0.2, 0.1)  # alpha must be below p
    with pytest.raises(ValueError):
        plan_stage_count(0.0, 0.1)
    with pytest.raises(ValueError):
        plan_stage_count(1e-3, 1.0)


def test_splitting_identity_product():
    assert splitting_identity(0.3, (0.25, 0.25, 0.2)) == pytest.approx(
        0.3 * 0.25 * 0.25 * 0.2)


def test_next_level_gpd_is_conditional_quantile():
    truth = GpdParams(0.8, 1.5)
    s = 3.0
    p = 0.25
    cond = gpd_condition(truth, s)
    nxt = next_level_gpd(cond, s, p)
    assert nxt == pytest.approx(s + gpd_quantile(1.0 - p, cond))
    # the step is chosen so the conditional exceedance of the new level is p
    assert gpd_survival(nxt - s, cond) == pytest.approx(p, rel=1e-12)


def test_next_level_weibull_first_step():
    # no previous level: place so the conditional survival halves per the
    # shape-only doubling rule s * 2**(1/beta)
    beta = 1.5
    s = 2.0
    assert next_level_weibull(beta, s) == pytest.approx(s * 2 ** (1 / beta))


def test_next_level_weibull_equalizes_conditional_survival():
    # with a previous level the new one keeps the conditional survival equal
    # across consecutive steps for any scale
    beta = 1.7
    s_prev, s_curr = 2.0, 3.1
    nxt = next_level_weibull(beta, s_curr, s_prev)
    w = WeibullParams(alpha=2.4, beta=beta)
    lhs = weibull_conditional_survival(s_prev, s_curr, w)
    rhs = weibull_conditional_survival(s_curr, nxt, w)
    assert lhs == pytest.approx(rhs, rel=1e-12)


# ---------------------------------------------------------------------------
# configuration and state


def test_ladder_config_validation():
    with pytest.raises(ValueError):
        make_config(alpha=0.5, p=0.25)
    with pytest.raises(ValueError):
        make_config(s1=0.0)
    with pytest.raises(ValueError):
        make_config(k=1)
    with pytest.raises(ValueError):
        make_config(m=0)
    with pytest.raises(ValueError):
        make_config(gamma=1.0)


def test_config_stages_defaults_to_plan():
    cfg = make_config(m=None)
    assert cfg.stages == plan_stage_count(cfg.alpha, cfg.p)
    assert make_config(m=7).stages == 7


def test_pending_stage_progression():
    cfg = make_config(k=4, m=2)
    ladder = Ladder(model="gpd", estimator="mle", config=cfg,
                    levels=[cfg.s1])
    stage, s_prev, s_curr = pending_stage(ladder)
    assert (stage, s_prev, s_curr) == (1, 0.0, cfg.s1)
    ingest_batch(ladder, [1, 0, 1, 0], estimator="mle")
    stage, s_prev, s_curr = pending_stage(ladder)
    assert stage == 2 and s_prev == cfg.s1 and s_curr > cfg.s1
    ingest_batch(ladder, [1, 0, 1, 0], estimator="mle")
    assert ladder.estimate is not None
    with pytest.raises(ValueError):
        pending_stage(ladder)


def test_ingest_batch_validates_outcomes():
    cfg = make_config(k=4, m=2)
    ladder = Ladder(model="gpd", estimator="mle", config=cfg,
                    levels=[cfg.s1])
    with pytest.raises(ValueError):
        ingest_batch(ladder, [1, 0, 1])  # wrong count
    with pytest.raises(ValueError):
        ingest_batch(ladder, [1, 0, 2, 0])  # not binary


def test_degenerate_first_batch_falls_back():
    cfg = make_config(k=4, m=3)
    ladder = Ladder(model="gpd", estimator="mle", config=cfg,
                    levels=[cfg.s1])
    ingest_batch(ladder, [0, 0, 0, 0], estimator="mle")
    assert any(f.startswith("degenerate-batch:1") for f in ladder.flags)
    assert any("fallback" in f for f in ladder.flags)
    # a usable (finite, increasing) next level was still placed
    assert len(ladder.levels) == 2
    assert ladder.levels[1] > ladder.levels[0]


def test_degenerate_later_batch_reuses_previous_fit():
    cfg = make_config(k=4, m=3)
    ladder = Ladder(model="gpd", estimator="mle", config=cfg,
                    levels=[cfg.s1])
    ingest_batch(ladder, [1, 0, 1, 0], estimator="mle")
    params_before = ladder.stages[-1].params
    ingest_batch(ladder, [1, 1, 1, 1], estimator="mle")
    assert any(f.startswith("degenerate-batch:2") for f in ladder.flags)
    assert ladder.stages[-1].params == params_before


def test_completion_freezes_estimate_and_attained_alpha():
    truth = GpdParams(0.8, 1.5)
    cfg = make_config(k=8, m=4)
    ladder = run_splitting(cfg, exact_oracle(truth, cfg), model="gpd",
                           estimator=exact_estimator(truth))
    assert ladder.estimate == ladder.levels[-1]
    phat1 = ladder.stages[0].failures / cfg.k
    assert ladder.attained_alpha == pytest.approx(
        phat1 * cfg.p ** (cfg.stages - 1))
    # levels are driven by the fits alone; the final batch is recorded but
    # places no further level
    assert len(ladder.levels) == cfg.stages
    assert len(ladder.stages) == cfg.stages


def test_non_increasing_level_is_an_error():
    # a colossal Weibull shape overflows the level recursion, which must
    # surface as an arithmetic error rather than a silent bad level
    cfg = make_config(s1=1.5, k=4, m=4)
    ladder = Ladder(model="weibull", estimator="mle", config=cfg,
                    levels=[cfg.s1])
    bad = FitResult(params=WeibullParams(alpha=1.0, beta=2000.0),
                    criterion=0.0, diagnostics={})
    est = lambda data, stage, model, config, prev: bad
    ingest_batch(ladder, [1, 0, 1, 0], estimator=est)
    with pytest.raises(ArithmeticError):
        ingest_batch(ladder, [1, 0, 1, 0], estimator=est)


def test_ladder_round_trip():
    truth = GpdParams(0.8, 1.5)
    cfg = make_config(k=8, m=3)
    ladder = run_splitting(cfg, exact_oracle(truth, cfg), model="gpd",
                           estimator=exact_estimator(truth))
    doc = ladder.to_dict()
    clone = Ladder.from_dict(doc)
    assert clone.to_json() == ladder.to_json()
    assert json.loads(ladder.to_json())["estimate"] == ladder.estimate


def test_run_splitting_rejects_unknown_model():
    cfg = make_config()
    with pytest.raises(ValueError):
        run_splitting(cfg, lambda *a: [1], model="lognormal")


def test_run_splitting_seeded_reproducibility():
    from tailsplit.simulation import exceedance_oracle, replica_rng

    truth = GpdParams(0.8, 1.5)
    cfg = make_config(k=20)
    docs = []
    for _ in range(2):
        oracle = exceedance_oracle(truth, replica_rng(11, 0))
        ladder = run_splitting(cfg, oracle, model="gpd", estimator="mle")
        docs.append(ladder.to_json())
    assert docs[0] == docs[1]
