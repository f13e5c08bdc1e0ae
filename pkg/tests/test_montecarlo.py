import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from longmem import montecarlo as mc
from longmem.arfima import ArfimaSpec
from longmem.errors import ConfigError, DegenerateDataError
from longmem.montecarlo import (
    QUANTILES,
    CriticalValues,
    McConfig,
    hypothesis_test,
    null_critical_values,
    null_panel,
    parse_prefilter_mode,
    power_analysis,
    prefilter_bias_study,
    replicate_seed,
    summarize,
)
from longmem.rra import DEFAULT_GRID


def reference_null(T=2608):
    """Hand-built critical values: mean 0.572 and q0.95 = 0.601 at T = 2608.
    The remaining levels are just plausible monotone fillers."""
    q = {0.005: 0.526, 0.01: 0.53, 0.025: 0.538, 0.05: 0.543, 0.10: 0.55,
         0.90: 0.594, 0.95: 0.601, 0.975: 0.607, 0.99: 0.613, 0.995: 0.617}
    return CriticalValues(0.572, 0.018, q, McConfig(T=T, replications=5000))


# ---------------------------------------------------------------- seeds and config


def test_replicate_seeds_stable_and_distinct():
    a = [replicate_seed(42, i) for i in range(1000)]
    assert a == [replicate_seed(42, i) for i in range(1000)]
    assert len(set(a)) == 1000
    assert replicate_seed(42, 0, mc.STREAM_ALT) != replicate_seed(42, 0, mc.STREAM_NULL)
    assert replicate_seed(43, 0) != replicate_seed(42, 0)


@pytest.mark.parametrize("kwargs", [dict(T=63), dict(T=100, replications=99), dict(T=100, estimator_variant="X"),
                                    dict(T=100, master_seed=-1), dict(T=100, prefilter_mode="ar2")])
def test_config_invariants(kwargs):
    with pytest.raises(ConfigError):
        McConfig(**kwargs)


def test_config_round_trip():
    cfg = McConfig(T=500, replications=200, master_seed=3, estimator_variant="H_L", prefilter_mode="fixed_lags:8,4")
    assert cfg.prefilter_mode == "fixed_lags:4,8"
    assert McConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.mark.parametrize("mode, parsed", [
    ("none", ("none", ())), ("ar1", ("ar1", (1,))), ("pacf_sparse", ("pacf_sparse", ())),
    ("fixed_lags:4", ("fixed_lags", (4,))), ("fixed_lags(3, 5)", ("fixed_lags", (3, 5))),
])
def test_parse_prefilter_mode(mode, parsed):
    assert parse_prefilter_mode(mode) == parsed


@pytest.mark.parametrize("mode", ["ar2", "fixed_lags:", "fixed_lags:0", "fixed_lags:11", ""])
def test_parse_prefilter_mode_rejects(mode):
    with pytest.raises(ConfigError):
        parse_prefilter_mode(mode)


# ---------------------------------------------------------------- critical values


@pytest.fixture(scope="module")
def small_panel():
    return null_panel(McConfig(T=400, replications=300, master_seed=5))


def test_panel_shape_and_consistency(small_panel):
    assert set(small_panel) == {"H", "H_S", "H_L"}
    for variant, cv in small_panel.items():
        assert cv.config.estimator_variant == variant
        qs = [cv.quantiles[p] for p in QUANTILES]
        assert qs == sorted(qs)
        assert cv.quantile(0.05) <= cv.mean <= cv.quantile(0.95)
        assert cv.quantile(0.005) <= cv.mean <= cv.quantile(0.995)
        assert cv.n_failed == 0
        assert len(cv.estimates) == 300


def test_quantiles_are_linear_order_statistics(small_panel):
    cv = small_panel["H"]
    est = np.sort(cv.estimates)
    for p in QUANTILES:
        h = (len(est) - 1) * p
        lo = int(math.floor(h))
        expected = est[lo] + (h - lo) * (est[min(lo + 1, len(est) - 1)] - est[lo])
        assert cv.quantile(p) == pytest.approx(expected, abs=1e-14)


def test_single_variant_matches_panel(small_panel):
    cfg = McConfig(T=400, replications=300, master_seed=5, estimator_variant="H_S")
    cv = null_critical_values(cfg)
    assert cv.to_dict() == small_panel["H_S"].to_dict()


def test_unknown_quantile_rejected(small_panel):
    with pytest.raises(ConfigError):
        small_panel["H"].quantile(0.999)


def test_critical_values_json_round_trip(small_panel):
    cv = small_panel["H_L"]
    back = CriticalValues.from_dict(json.loads(json.dumps(cv.to_dict())))
    assert back.to_dict() == cv.to_dict()
    assert set(cv.to_dict()["quantiles"]) == {f"{p:.3f}" for p in QUANTILES}


@given(st.lists(st.floats(0.3, 0.9), min_size=20, max_size=200))
def test_summarize_invariants(values):
    cv = summarize(np.array(values), McConfig(T=100, replications=100))
    qs = [cv.quantiles[p] for p in QUANTILES]
    assert all(a <= b for a, b in zip(qs, qs[1:]))
    assert min(values) - 1e-12 <= cv.mean <= max(values) + 1e-12


def test_determinism_across_workers():
    cfg = McConfig(T=300, replications=100, master_seed=11)
    one = null_panel(cfg, workers=1)
    many = null_panel(cfg, workers=3)
    for v in one:
        np.testing.assert_array_equal(one[v].estimates, many[v].estimates)
        assert one[v].to_dict() == many[v].to_dict()


def test_bias_study_determinism_across_workers():
    specs = [ArfimaSpec({1: 0.2})]
    a = prefilter_bias_study(specs, T=300, replications=100, seed=2, workers=1)
    b = prefilter_bias_study(specs, T=300, replications=100, seed=2, workers=2)
    assert a[0].to_dict() == b[0].to_dict()


def test_failure_rate_aborts(monkeypatch):
    real = mc._estimate
    calls = {"n": 0}

    def flaky(x, scales, knot):
        calls["n"] += 1
        if calls["n"] % 50 == 0:
            raise DegenerateDataError("synthetic failure")
        return real(x, scales, knot)

    monkeypatch.setattr(mc, "_estimate", flaky)
    with pytest.raises(DegenerateDataError, match="aborting"):
        null_panel(McConfig(T=200, replications=100))


def test_isolated_failure_is_tolerated(monkeypatch):
    real = mc._estimate
    calls = {"n": 0}

    def flaky(x, scales, knot):
        calls["n"] += 1
        if calls["n"] == 7:
            raise DegenerateDataError("synthetic failure")
        return real(x, scales, knot)

    monkeypatch.setattr(mc, "_estimate", flaky)
    panel = null_panel(McConfig(T=200, replications=1000))
    assert panel["H"].n_failed == 1
    assert np.isnan(panel["H"].estimates[6])


def test_empirical_size():
    T, alpha = 300, 0.10
    cv = null_critical_values(McConfig(T=T, replications=2000, master_seed=21))
    n = 1000
    est = mc._simulate_estimates(ArfimaSpec(), T, ["none"], n, 21, DEFAULT_GRID, 40,
                                 stream=mc.STREAM_ALT)[:, 0, 0]
    rate = np.mean([hypothesis_test(h, cv, alpha, "upper").rejected for h in est])
    assert abs(rate - alpha) < 3 * math.sqrt(alpha * (1 - alpha) / n)


# ---------------------------------------------------------------- verdicts


def test_verdict_rejects_above_upper_quantile():
    v = hypothesis_test(0.613, reference_null(), alpha=0.05, tail="upper", T=2608)
    assert v.rejected and v.significance == "0.05" and v.stars == "**"
    assert v.warnings == ()


def test_verdict_does_not_reject_inside():
    v = hypothesis_test(0.568, reference_null(), alpha=0.05, tail="upper")
    assert not v.rejected and v.significance == "ns" and v.stars == ""


def test_boundary_is_not_a_rejection():
    cv = reference_null()
    assert not hypothesis_test(cv.quantile(0.95), cv, 0.05, "upper").rejected
    assert not hypothesis_test(cv.quantile(0.025), cv, 0.05, "two_sided").rejected
    assert hypothesis_test(np.nextafter(cv.quantile(0.95), 1), cv, 0.05, "upper").rejected


def test_two_sided_uses_both_tails():
    cv = reference_null()
    low = hypothesis_test(0.52, cv, 0.05, "two_sided")
    assert low.rejected and low.significance == "0.01"
    # 0.604 is past q0.95 but not past q0.975
    assert not hypothesis_test(0.604, cv, 0.05, "two_sided").rejected
    assert hypothesis_test(0.604, cv, 0.10, "two_sided").significance == "0.10"
    assert not hypothesis_test(0.52, cv, 0.05, "upper").rejected


def test_length_mismatch_warns():
    v = hypothesis_test(0.6, reference_null(), T=2600)
    assert v.warnings and "2600" in v.warnings[0]


@pytest.mark.parametrize("alpha, tail", [(0.2, "upper"), (0.05, "lower")])
def test_verdict_config_errors(alpha, tail):
    with pytest.raises(ConfigError):
        hypothesis_test(0.6, reference_null(), alpha, tail)


# ---------------------------------------------------------------- power


@pytest.fixture(scope="module")
def small_power():
    return power_analysis([0.52, 0.58, 0.66], [300, 600], alpha=0.05, replications=200, seed=4)


def test_power_monotone_in_H_and_T(small_power):
    r = small_power.rate
    for T in (300, 600):
        assert r(0.52, T) <= r(0.58, T) + 0.03 <= r(0.66, T) + 0.06
    for H in (0.58, 0.66):
        assert r(H, 300) <= r(H, 600) + 0.03
    assert all(0 <= v <= 1 for v in small_power.rates.values())


def test_power_near_null_is_near_alpha(small_power):
    # H = 0.52 is close to the null; the rate should be closer to alpha than to 1
    assert small_power.rate(0.52, 300) < 0.3


def test_power_critical_values_recorded(small_power):
    d = small_power.to_dict()
    assert set(d["critical_values"]) == {"300", "600"}
    assert len(d["cells"]) == 6
    assert d["critical_values"]["300"]["lower"] is None


def test_power_rejects_null_alternative():
    with pytest.raises(ConfigError):
        power_analysis([0.5], [300], replications=100)
