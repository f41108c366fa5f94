import json
import math

import numpy as np
import pytest

from kcoverage import harness
from kcoverage.errors import ConfigError, DegenerateTrial
from kcoverage.harness import (SweepConfig, degenerate_overflow, jackknife_dispersion,
                               oracle_compare, run_sweep, run_trial, run_variance_check,
                               summarize_counts, sweep_radius, to_csv)


def _cfg(**kw):
    base = dict(d=2, k=2, n_values=[2000], w_values=[-2.0, 2.0], mu_targets=[2], trials=20,
                master_seed=3)
    base.update(kw)
    return SweepConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigError):
        _cfg(trials=0)
    with pytest.raises(ConfigError):
        _cfg(n_values=[2])
    with pytest.raises(ConfigError):
        _cfg(mu_targets=[3])


def test_config_json_round_trip():
    cfg = _cfg()
    assert SweepConfig.from_json(cfg.to_json()) == cfg
    obj = json.loads(cfg.to_json())
    assert obj["schema_version"] == harness.SCHEMA_VERSION
    del obj["schema_version"]
    with pytest.raises(ConfigError):
        SweepConfig.from_json(json.dumps(obj))
    obj.update(schema_version=1, bogus=1)
    with pytest.raises(ConfigError):
        SweepConfig.from_json(json.dumps(obj))


def test_sweep_radius():
    r, Lam = sweep_radius(1e4, 2, 2, 2, 1.5)
    assert Lam == pytest.approx(math.log(1e4) + 2 * math.log(math.log(1e4)) + 1.5)
    assert 1e4 * math.pi * r ** 2 == pytest.approx(Lam)


def test_sweep_deterministic_and_csv():
    a = to_csv(run_sweep(_cfg()))
    b = to_csv(run_sweep(_cfg()))
    assert a == b
    lines = a.strip().split("\n")
    assert len(lines) == 3
    head = lines[0].split(",")
    assert {"n", "w", "mu", "r", "p_zero", "p_zero_se", "mean", "var", "mean_se",
            "excluded"} <= set(head)
    r = lines[1].split(",")[head.index("r")]
    assert len(r.replace(".", "").lstrip("0").replace("e-", "")) >= 15
    assert float(r) == sweep_radius(2000, 2, 2, 2, -2.0)[0]


def test_sweep_parallel_matches_serial():
    assert run_sweep(_cfg(trials=6), threads=2) == run_sweep(_cfg(trials=6), threads=1)


def test_aggregates_recomputable_from_records():
    recs = []
    rows = run_sweep(_cfg(), records=recs)
    assert len(recs) == 40
    first = [x.counts[2] for x in recs[:20] if not x.degenerate]
    assert rows[0]["mean"] == pytest.approx(np.mean(first))
    assert rows[0]["p_zero"] == pytest.approx(np.mean(np.array(first) == 0))


def test_trial_record_fields():
    rec = run_trial((2000, 2, 2, 0.02, 1, 0))
    assert rec.point_count > 0 and not rec.degenerate
    assert set(rec.counts) == {0, 1, 2}
    assert rec.covered_morse == ("no" if rec.counts[2] else "yes")
    assert rec.chi is not None


def test_degenerate_trials_excluded(monkeypatch):
    calls = {"n": 0}
    real = harness.enumerate_critical_points

    def flaky(*a, **kw):
        calls["n"] += 1
        if calls["n"] % 5 == 0:
            raise DegenerateTrial("forced")
        return real(*a, **kw)

    monkeypatch.setattr(harness, "enumerate_critical_points", flaky)
    rows = run_sweep(_cfg(w_values=[0.0]))
    assert rows[0]["excluded"] == 4 and rows[0]["trials"] == 16
    assert degenerate_overflow(4, 20) and not degenerate_overflow(1, 2000)


def test_jackknife_on_synthetic_poisson():
    rng = np.random.default_rng(0)
    ratio, se = jackknife_dispersion(rng.poisson(1.3, 2000))
    assert 0.9 <= ratio <= 1.1 and 0 < se < 0.1
    x = rng.poisson(2.0, 50)
    assert jackknife_dispersion(x)[0] == pytest.approx(np.var(x, ddof=1) / np.mean(x))
    with pytest.raises(ValueError):
        jackknife_dispersion([0, 0, 0, 0])


def test_variance_check_skips_trivial_regime():
    rows = run_variance_check(_cfg(n_values=[2000], w_values=[10.0], trials=30))
    assert rows[0]["mean"] < 0.05 and math.isnan(rows[0]["ratio"])


def test_mu_ordering():
    # E N^mu ~ C_mu n Lambda^{mu+k-2} e^{-Lambda}: at a fixed radius in the
    # transition zone the counts grow with mu
    for w in (-2.0, 0.0, 2.0):
        recs = []
        run_sweep(_cfg(w_values=[w], mu_targets=[2], trials=30), records=recs)
        means = [np.mean([x.counts[mu] for x in recs]) for mu in (0, 1, 2)]
        assert means[0] <= means[1] <= means[2]


def test_summarize_counts():
    s = summarize_counts([0, 1, 2, 0])
    assert s["p_zero"] == 0.5 and s["mean"] == 0.75 and s["trials"] == 4


def test_oracle_compare_rows():
    rows = oracle_compare(2000, 2, 2, [0.02, 0.03, 0.05], master_seed=4)
    assert [r["trial_id"] for r in rows] == [0, 1, 2]
    assert all(r["agree"] in (True, None) for r in rows)
