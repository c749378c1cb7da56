"""Replica streams, oracles, study execution, and table rendering."""

import math

import numpy as np
import pytest
from scipy import stats

from tailsplit.distributions import GpdParams
from tailsplit.estimators import conditional_exceedance
from tailsplit.simulation import (
    StudyResult,
    StudySpec,
    SummaryStats,
    emit_table,
    exceedance_oracle,
    relative_error,
    replica_rng,
    run_study,
    strength_outcome_fn,
    truncated_sample_oracle,
)
from tailsplit.studies import STUDIES, build_study


# ---------------------------------------------------------------------------
# randomness plumbing


def test_replica_rng_reproducible_and_distinct():
    a = replica_rng(7, 3).random(8)
    b = replica_rng(7, 3).random(8)
    c = replica_rng(7, 4).random(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(ValueError):
        replica_rng(-1, 0)
    with pytest.raises(ValueError):
        replica_rng(0, -2)


def test_replica_streams_uncorrelated():
    n = 2000
    x = replica_rng(7, 0).random(n)
    for rep in (1, 2, 57):
        y = replica_rng(7, rep).random(n)
        assert abs(np.corrcoef(x, y)[0, 1]) < 0.05


def test_oracles_agree_in_distribution():
    # the Bernoulli oracle and the latent truncated-sample oracle draw the
    # same law; compare failure frequencies by a two-sample z statistic
    truth = GpdParams(0.8, 1.5)
    s_prev, s_curr, n = 2.0, 5.0, 4000
    pi = conditional_exceedance(truth, s_prev, s_curr)
    direct = exceedance_oracle(truth, replica_rng(7, 0))
    latent = truncated_sample_oracle(truth, replica_rng(7, 1))
    f1 = np.sum(direct(1, s_prev, s_curr, n)) / n
    f2 = np.sum(latent(1, s_prev, s_curr, n)) / n
    z = (f1 - f2) / math.sqrt(2 * pi * (1 - pi) / n)
    assert abs(z) < 3.0


def test_truncated_oracle_frequency_matches_conditional():
    truth = GpdParams(1.5, 3.0)
    s_prev, s_curr, n = 1.0, 4.0, 5000
    pi = conditional_exceedance(truth, s_prev, s_curr)
    oracle = truncated_sample_oracle(truth, replica_rng(11, 0))
    freq = np.sum(oracle(1, s_prev, s_curr, n)) / n
    assert freq == pytest.approx(pi, abs=3 * math.sqrt(pi * (1 - pi) / n))


def test_strength_outcome_fn():
    rng = replica_rng(3, 0)
    fn = strength_outcome_fn("exponential", {"lam": 0.2}, rng)
    assert fn(-1.0) == 0  # non-positive stress never fails
    n = 4000
    p = -math.expm1(-0.2 * 5.0)
    freq = sum(fn(5.0) for _ in range(n)) / n
    assert freq == pytest.approx(p, abs=3 * math.sqrt(p * (1 - p) / n))
    gauss = strength_outcome_fn("gaussian", {"mu": 60.0, "sigma": 10.0}, rng)
    freq = sum(gauss(60.0) for _ in range(n)) / n
    assert freq == pytest.approx(0.5, abs=0.03)
    with pytest.raises(ValueError):
        strength_outcome_fn("gamma", {}, rng)


def test_relative_error():
    assert relative_error(1.2, 1.0) == pytest.approx(0.2)
    with pytest.raises(ZeroDivisionError):
        relative_error(1.0, 0.0)


# ---------------------------------------------------------------------------
# study specs and execution


def tiny_spec(**kw):
    base = dict(
        name="tiny", procedure="splitting", truth_model="gpd",
        truth={"c": 0.8, "a": 1.5},
        config={"alpha": 1e-3, "p": 10 ** -0.6, "m": 3, "k": 10,
                "s1": "quantile", "estimator": "mle"},
        replicas=3)
    base.update(kw)
    return StudySpec(**base)


def test_spec_validation():
    with pytest.raises(ValueError):
        tiny_spec(procedure="bootstrap")
    with pytest.raises(ValueError):
        tiny_spec(replicas=0)
    with pytest.raises(ValueError):
        tiny_spec(oracle="latent")
    with pytest.raises(ValueError):
        tiny_spec(truth={"c": -1.0, "a": 1.5})


def test_spec_json_round_trip():
    spec = tiny_spec()
    clone = StudySpec.from_json(spec.to_json())
    assert clone == spec


def test_summary_stats_hand_check():
    vals = [1.0, 2.0, 3.0, 4.0]
    s = SummaryStats.from_values(vals, n_flagged=1)
    assert s.n == 4
    assert s.mean == pytest.approx(2.5)
    assert s.std == pytest.approx(np.std(vals, ddof=1))
    assert s.median == pytest.approx(2.5)
    assert s.n_flagged == 1
    assert SummaryStats.from_values([5.0]).std == 0.0
    with pytest.raises(ValueError):
        SummaryStats.from_values([])


def test_summary_stats_ordering_invariant():
    rng = np.random.default_rng(0)
    s = SummaryStats.from_values(rng.normal(size=500))
    assert (s.minimum <= s.q25 <= s.median <= s.q75 <= s.maximum)


def test_run_study_deterministic():
    spec = tiny_spec()
    r1 = run_study(spec, seed=7)
    r2 = run_study(spec, seed=7)
    assert r1.replicas == r2.replicas
    assert r1.metric("relative_error").mean == r2.metric("relative_error").mean
    r3 = run_study(spec, seed=8)
    assert r1.replicas != r3.replicas


def test_run_study_records_expected_metrics():
    res = run_study(tiny_spec(), seed=7)
    for name in ("estimate", "relative_error", "attained_alpha"):
        assert res.metric(name).n == 3
    assert all("replica" in r for r in res.replicas)


def test_run_study_single_replica_has_zero_std():
    res = run_study(tiny_spec(replicas=1), seed=7)
    assert res.metric("estimate").std == 0.0


# ---------------------------------------------------------------------------
# tables


def make_stats(mean):
    return SummaryStats.from_values([mean - 0.1, mean, mean + 0.1])


def test_emit_table_mean_std():
    csv_text, text = emit_table([("row-a", make_stats(1.0))], layout="mean-std")
    lines = csv_text.strip().splitlines()
    assert lines[0] == "label,mean,std"
    cells = lines[1].split(",")
    assert cells[0] == "row-a"
    assert float(cells[1]) == pytest.approx(1.0)
    assert "row-a" in text


def test_emit_table_quartiles_field_order():
    s = SummaryStats.from_values([1.0, 2.0, 3.0, 10.0])
    csv_text, _ = emit_table([("r", s)], layout="quartiles")
    header, row = csv_text.strip().splitlines()
    assert header == "label,min,q25,q50,mean,q75,max"
    cells = [float(v) for v in row.split(",")[1:]]
    assert cells == pytest.approx([s.minimum, s.q25, s.median, s.mean,
                                   s.q75, s.maximum])


def test_emit_table_paired_layout():
    s = make_stats(0.5)
    csv_text, _ = emit_table([("r", s, s)], layout="binary-vs-complete")
    assert csv_text.splitlines()[0] == \
        "label,mean_binary,std_binary,mean_complete,std_complete"
    with pytest.raises(ValueError):
        emit_table([("r", s)], layout="binary-vs-complete")
    with pytest.raises(ValueError):
        emit_table([], layout="sideways")


def test_emit_table_empty_rows():
    csv_text, text = emit_table([], layout="mean-std")
    assert csv_text == "label,mean,std\n"


# ---------------------------------------------------------------------------
# preset registry


def test_registry_builds_every_study():
    seen = set()
    for name in STUDIES:
        specs, seed = build_study(name)
        assert isinstance(seed, int)
        assert specs, name
        for spec in specs:
            assert spec.name not in seen, f"duplicate spec name {spec.name}"
            seen.add(spec.name)


def test_registry_unknown_study():
    with pytest.raises(KeyError):
        build_study("no-such-study")
