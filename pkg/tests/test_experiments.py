import json
import math

import numpy as np
import pytest

from remlab import constants as K
from remlab.errors import DomainError, InvalidSchedule, UnsupportedRegime
from remlab.experiments import (
    CELL_COLUMNS, DatasetCache, StudyReport, clt_study, equivalence_study, format_value, gaussian_band_overlap,
    ldp_spot_check, lln_study, log_linear_violations, overscaling_study, tail_study,
)
from remlab.moments import truncation_spec
from remlab.rng import RngSpec
from remlab.simulator import CSV_COLUMNS, ReplicaDataset, run_replicas
from remlab.stats import intervals_overlap
from remlab.theory import BETA_C, BETA_CRIT, LOG2, ModelParams, Regime, ScalingSchedule, fluct_scale_log

FIXED_T2 = ScalingSchedule("table", table=((12, 2.0),))


class TestReport:
    def test_serialization(self):
        r = StudyReport("lln", {"cells": [[0.3, 8]]}, [
            {"beta": 0.3, "n": 8, "replicas": 2, "seed": 1, "mean_f": 0.1, "sd_f": None, "target_f": 0.5,
             "gap": 0.4, "all_log2": False}], 1, 2, {"ok": True}, wall_seconds=3.0)
        text = r.to_json()
        assert "wall_seconds" not in text
        assert json.loads(text)["cells"][0]["gap"] == 0.4
        lines = r.to_csv().splitlines()
        assert lines[0].split(",") == list(CELL_COLUMNS["lln"])
        assert lines[1] == "0.3,8,2,1,0.1,,0.5,0.4,false"

    def test_non_finite_rejected(self):
        r = StudyReport("lln", {}, [{"gap": math.nan}], 1, 1)
        with pytest.raises(ValueError):
            r.to_json()

    def test_format_value(self):
        assert format_value(0.1) == "0.1"
        assert format_value(np.bool_(True)) == "true"
        assert format_value(None) == ""
        assert format_value(7) == "7"


def test_cache_returns_prefix():
    cache = DatasetCache()
    p = ModelParams(0.4, 6)
    big = cache.get(p, 1.0, 30, 5)
    small = cache.get(p, 1.0, 10, 5)
    assert small.to_csv() == run_replicas(p, 1.0, 10, RngSpec(5)).to_csv()
    assert big.head(10).to_csv() == small.to_csv()


class TestLln:
    def test_zero_temperature(self):
        r = lln_study([(0.0, 5), (0.0, 10)], 20)
        assert all(c["all_log2"] and c["gap"] == 0.0 and c["mean_f"] == LOG2 for c in r.cells)
        assert r.checks == {}

    def test_gap_check_and_determinism(self):
        cells = [(0.3, 6), (0.3, 10)]
        a, b = lln_study(cells, 50, seed=3), lln_study(cells, 50, seed=3, workers=4)
        assert a.to_json() == b.to_json() and a.to_csv() == b.to_csv()
        assert "gap_decreasing_beta_0.3" in a.checks
        assert a.cells[0]["target_f"] == pytest.approx(0.3 ** 2 / 2 + LOG2)

    def test_supercritical_band(self, shared_cache):
        # mean f_n sits below beta * beta_c by a finite-size bias that the band was fitted to
        r = lln_study([(1.5, 24)], 1000, cache=shared_cache)
        cell = r.cells[0]
        assert cell["target_f"] == pytest.approx(1.5 * BETA_C, rel=1e-15)
        assert cell["target_f"] == pytest.approx(1.76612, abs=5e-6)
        assert cell["gap"] <= K.LLN_SUPERCRIT_BAND.value


class TestClt:
    def test_subcritical_small(self):
        r = clt_study(0.3, [10, 12], 4000, seed=7)
        for c in r.cells:
            assert c["target_s2"] == pytest.approx(-math.expm1(-c["n"] * 0.09), rel=1e-15)
            assert c["var_ok"] is True
            assert c["ks_half"] is None and c["ks_one"] is None
        assert set(r.checks) == {"n_10", "n_12"}

    def test_critical_is_exploratory(self):
        r = clt_study(BETA_CRIT, [8], 200, regime=Regime.CRITICAL)
        c = r.cells[0]
        assert r.checks == {} and c["var_ok"] is None and c["ks_ok"] is None
        assert 0 <= c["ks_half"] <= 1 and 0 <= c["ks_one"] <= 1

    def test_supercritical_rejected(self):
        with pytest.raises(UnsupportedRegime):
            clt_study(1.0, [8], 10)


@pytest.fixture(scope="module")
def report():
    return tail_study(0.3, [12], FIXED_T2, [0.0, 1.0], 20_000, seed=11)


class TestTails:
    def test_median_anchor(self, report):
        for c in report.cells:
            if c["x"] == 0.0:
                assert c["wilson_lo"] <= 0.5 <= c["wilson_hi"]
                assert c["chernoff"] is None
                assert str(c["threshold"]) == "0.0"

    def test_tails_are_nearly_symmetric(self, report):
        up, low = [c for c in report.cells if c["x"] == 1.0]
        assert intervals_overlap((up["wilson_lo"], up["wilson_hi"]), (low["wilson_lo"], low["wilson_hi"]))

    def test_comparators_emitted(self, report):
        for c in report.cells:
            assert c["wilson_lo"] <= c["p_hat"] <= c["wilson_hi"]
            assert 0 < c["gauss_q"] <= 0.5
            if c["x"] > 0:
                assert c["chernoff"] is not None and c["chernoff"] < 0

    def test_chernoff_check_when_untruncated(self):
        # a small fixed t puts c far out, so no replica is truncated and the check is live
        sched = ScalingSchedule("table", table=((8, 0.05),))
        r = tail_study(0.3, [8], sched, [1.0], 4000, seed=2)
        assert all(c["trunc_hit_freq"] == 0.0 and c["hits"] > 0 for c in r.cells)
        assert len(r.checks) == 2 and all(r.checks.values())
        for c in r.cells:
            assert c["chernoff"] >= math.log(c["wilson_hi"]) / 0.05 ** 2

    def test_schedule_must_be_sub_root(self):
        with pytest.raises(UnsupportedRegime):
            tail_study(0.3, [12], ScalingSchedule.power(0.5), [1.0], 10)
        with pytest.raises(UnsupportedRegime):
            tail_study(1.0, [12], FIXED_T2, [1.0], 10)
        with pytest.raises(InvalidSchedule):
            tail_study(0.3, [16], FIXED_T2, [1.0], 10)

    def test_band_overlap_helper(self):
        cell = {"gauss_q": 0.01, "wilson_lo": 0.018, "wilson_hi": 0.03}
        assert gaussian_band_overlap(cell)
        assert not gaussian_band_overlap({"gauss_q": 0.01, "wilson_lo": 0.021, "wilson_hi": 0.03})


class TestEquivalence:
    def test_small_study(self):
        r = equivalence_study(0.3, [12], FIXED_T2, 5000, seed=4)
        c = r.cells[0]
        assert c["log_linear_violations"] == 0 and c["trunc_mismatch"] == 0
        assert c["eligible"] == 5000
        assert all(r.checks.values())
        assert c["rate_exact"] < 0

    def test_violation_counter_oracle(self):
        p = ModelParams(0.3, 12)
        e = math.exp(-fluct_scale_log(p))
        w_lin = np.array([0.5, -0.2, 0.3, 1.0])
        # the third gap is twice its bound; the fourth replica is excluded by t_dev < -1/2
        w_log = w_lin - np.array([0.5 * w_lin[0] ** 2 * e, 0.0, 2 * w_lin[2] ** 2 * e, 100.0])
        cols = {name: np.zeros(4) for name in CSV_COLUMNS}
        cols.update(replica_id=np.arange(4), w_linear=w_lin, w_log=w_log,
                    t_dev=np.array([0.1, -0.1, 0.2, -0.7]), trunc_hit=np.zeros(4, bool))
        viol, eligible, gmax, _, _ = log_linear_violations(ReplicaDataset(p, 2.0, cols))
        assert (viol, eligible) == (1, 3)
        assert gmax == pytest.approx(2 * 0.09 * e)


class TestOverscaling:
    def test_small_study(self):
        r = overscaling_study(0.3, [9, 12], 3000, seed=5)
        # log1p is concave, so the median of w_log sits a little below 0 at small N
        anchors = [c for c in r.cells if c["x"] == 0.0]
        assert all(abs(c["p_hat"] - 0.5) <= 0.05 for c in anchors)
        assert all(c["speed"] == c["n"] ** 0.8 for c in r.cells)

    def test_needs_subcritical(self):
        with pytest.raises(UnsupportedRegime):
            overscaling_study(1.0, [9], 10)


class TestLdp:
    def test_rate_value_and_cells(self):
        r = ldp_spot_check(1.0, [8], 0.3, 2000, seed=9)
        up = [c for c in r.cells if c["side"] == "upper"][0]
        assert up["rate_theory"] == pytest.approx(1.4931471805599453 ** 2 / 2 - LOG2, rel=1e-14)
        assert up["rate_theory"] == pytest.approx(0.421597, abs=1e-6)
        low = [c for c in r.cells if c["side"] == "lower"][0]
        assert low["rate_theory"] is None and low["ratio"] is None

    def test_zero_delta_excluded(self):
        r = ldp_spot_check(1.0, [6], 0.0, 500)
        assert all(c["ratio"] is None for c in r.cells) and r.checks == {}

    @pytest.mark.parametrize("beta,ns,delta", [(0.0, [8], 0.3), (1.0, [17], 0.3), (1.0, [8], -0.1)])
    def test_domain(self, beta, ns, delta):
        with pytest.raises(DomainError):
            ldp_spot_check(beta, ns, delta, 10)


def test_replica_count_validated():
    with pytest.raises(DomainError):
        lln_study([(0.3, 4)], 0)


def test_truncation_threshold_used_by_studies_matches_moments():
    p = ModelParams(0.3, 12)
    assert truncation_spec(p, 2.0).c > 0
