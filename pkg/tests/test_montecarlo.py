import math

import numpy as np
import pytest

from arselect.criteria import CriterionSpec, DeltaRule, select
from arselect.errors import ConfigurationError
from arselect.montecarlo import (
    EFFICIENCY_CSV_HEADER, INDEPENDENT, PUBLISHED_TABLE1, TABLE1_COLUMNS, ExperimentPlan, check_cells,
    estimate_re, relative_efficiency, replication_seed, run_independent_realization, run_replication,
    run_replications, table1_criteria, table1_wide, run_table1,
)
from arselect.oracle import L_n, PopulationModel
from arselect.procgen import ProcessSpec, SeriesWindow

ARMA = ProcessSpec.arma11(0.5, 0.4)
WN = ProcessSpec.white_noise()
FIXED = [CriterionSpec.fixed(k) for k in (1, 3, 5)]


def test_replication_is_deterministic_and_order_free():
    crit = [CriterionSpec.bic(), CriterionSpec.hq(), CriterionSpec.ape(DeltaRule.inv_log()), CriterionSpec.two_stage(0.72)]
    a = run_replication(ARMA, 300, crit, replication_seed(5, 300, 0))
    b = run_replication(ARMA, 300, crit[::-1], replication_seed(5, 300, 0))
    assert a == b
    assert CriterionSpec.aic().key in a  # baseline always present
    c = run_replication(ARMA, 300, crit, replication_seed(5, 300, 1))
    assert a != c


def test_excess_is_squared_gap_to_conditional_mean():
    out = run_replication(ARMA, 200, [CriterionSpec.fixed(2)], 3)
    o = out[CriterionSpec.fixed(2).key]
    assert o.excess >= 0 and o.sq_error >= 0
    assert o.k_hat == 2


def test_noiseless_fixed_order_predicts_exactly():
    s = SeriesWindow(0.9 ** np.arange(50))
    rec = select(s.head(49), CriterionSpec.fixed(1, K=1))
    assert rec.prediction == pytest.approx(s.values[49], rel=1e-12)


def _mean_se(x):
    return x.mean(), x.std(ddof=1) / math.sqrt(x.size)


@pytest.mark.slow
def test_fixed_order_excess_matches_oracle_white_noise():
    plan = ExperimentPlan(WN, (500,), tuple(FIXED), 2000, 11)
    arr = run_replications(plan, 500)
    pop = PopulationModel.from_spec(WN, max_lag=30)
    for spec in FIXED:
        col = arr.keys.index(spec.key)
        m, se = _mean_se(arr.excess[:, col])
        assert abs(m - L_n(pop, spec.order, 500, 22)) < 3 * se


@pytest.mark.slow
def test_independent_realization_matches_oracle():
    plan = ExperimentPlan(ARMA, (500,), (CriterionSpec.fixed(5),), 2000, 12, mode=INDEPENDENT)
    arr = run_replications(plan, 500)
    col = arr.keys.index(CriterionSpec.fixed(5).key)
    m, se = _mean_se(arr.excess[:, col])
    pop = PopulationModel.from_spec(ARMA, max_lag=100)
    assert abs(m - L_n(pop, 5, 500, 22)) < 3 * se


def test_same_and_independent_agree_for_white_noise():
    crit = (CriterionSpec.fixed(3),)
    same = run_replications(ExperimentPlan(WN, (300,), crit, 600, 13), 300)
    ind = run_replications(ExperimentPlan(WN, (300,), crit, 600, 13, mode=INDEPENDENT), 300)
    c = same.keys.index(crit[0].key)
    (m1, s1), (m2, s2) = _mean_se(same.excess[:, c]), _mean_se(ind.excess[:, c])
    assert abs(m1 - m2) < 3 * math.hypot(s1, s2)
    r = run_independent_realization(WN, 300, crit, 4)
    assert set(r) == {CriterionSpec.aic().key, crit[0].key}


def test_aic_baseline_is_exactly_one():
    plan = ExperimentPlan(ARMA, (200, 300), (CriterionSpec.bic(),), 20, 1)
    tab = estimate_re(plan)
    for n in (200, 300):
        row = tab.row(n, "AIC")
        assert row.RE == 1.0 and row.RE_se == 0.0
        assert row.mspe_num == row.mspe_den


def test_flagged_row_when_denominator_not_positive():
    # with the raw estimator and R = 1 the denominator is e_{n+1}^2 - 1 + ...,
    # negative for most seeds
    flagged = 0
    for seed in range(10):
        plan = ExperimentPlan(WN, (100,), (CriterionSpec.bic(),), 1, seed, estimator="raw")
        row = estimate_re(plan).row(100, "BIC")
        if row.flagged:
            flagged += 1
            assert math.isnan(row.RE)
            assert row.csv_row()[5] == ""
    assert flagged > 0


def test_relative_efficiency_delta_method():
    rng = np.random.default_rng(0)
    a = rng.exponential(2.0, 4000)
    b = 0.5 * a + rng.exponential(0.5, 4000)
    r, se = relative_efficiency(a, b)
    assert r == pytest.approx(a.mean() / b.mean())
    # bootstrap check of the standard error
    idx = rng.integers(0, a.size, (400, a.size))
    boot = a[idx].mean(axis=1) / b[idx].mean(axis=1)
    assert se == pytest.approx(boot.std(), rel=0.15)
    assert math.isnan(relative_efficiency(a, -b)[0])


def test_scheduling_invariance():
    plan = ExperimentPlan(ARMA, (150, 200), (CriterionSpec.bic(), CriterionSpec.two_stage(0.72)), 30, 9)
    assert estimate_re(plan, workers=1).to_csv() == estimate_re(plan, workers=3).to_csv()


def test_plan_validation():
    with pytest.raises(ConfigurationError):
        ExperimentPlan(ARMA, (100,), (), 0, 1)
    with pytest.raises(ConfigurationError):
        ExperimentPlan(ARMA, (100,), (), 5, 1, mode="other")
    with pytest.raises(ConfigurationError):
        ExperimentPlan(ARMA, (100,), (CriterionSpec.bic(), CriterionSpec.bic()), 5, 1)


def test_csv_layouts():
    cells = [(180, 0.5, 0.4)]
    tab = run_table1(cells, 5, 3)
    lines = tab.to_csv().splitlines()
    assert lines[0] == ",".join(EFFICIENCY_CSV_HEADER)
    assert len(lines) == 1 + 1 + len(TABLE1_COLUMNS)
    wide = table1_wide(tab, cells).splitlines()
    assert wide[0].split(",")[3:12] == list(TABLE1_COLUMNS)
    assert wide[1].startswith("180,0.5,0.4,")
    with pytest.raises(ConfigurationError, match="valid cells"):
        check_cells([(180, 0.5, 0.5)])


def test_table1_criteria_settings():
    crit = {c.label: c for c in table1_criteria()}
    assert list(crit) == list(TABLE1_COLUMNS)
    n = 1000
    assert crit["APE_d1"].delta.resolve(n) == pytest.approx(1 / math.log(n))
    assert crit["APE_d3"].delta.resolve(n) == pytest.approx(1 - (2 / 3) * math.log(n) ** -0.12)
    assert crit["HQ"].penalty.resolve(n) == pytest.approx(2.001 * math.log(math.log(n)))
    assert crit["TS_0.72"].penalty.resolve(n) == pytest.approx(0.8 * math.log(n))
    assert all(c.max_order(n) == 31 for c in crit.values())
    assert len(PUBLISHED_TABLE1) == 16


# -- statistical properties of the harness ------------------------------------

@pytest.mark.slow
def test_ordering_bic_over_hq_over_aic_for_ar1():
    spec = ProcessSpec.arma11(0.9, 0.0)
    bic, hq = CriterionSpec.bic(), CriterionSpec.hq()
    for n in (500, 1000):
        arr = run_replications(ExperimentPlan(spec, (n,), (bic, hq), 2000, 31), n)
        a = arr.excess[:, arr.keys.index(CriterionSpec.aic().key)]
        b = arr.excess[:, arr.keys.index(bic.key)]
        h = arr.excess[:, arr.keys.index(hq.key)]
        rb, rh = a.mean() / b.mean(), a.mean() / h.mean()
        # paired influence functions of the two ratios
        ib = (a - rb * b) / b.mean()
        ih = (a - rh * h) / h.mean()
        z_diff = (rb - rh) / (np.std(ib - ih, ddof=1) / math.sqrt(a.size))
        z_hq = (rh - 1) / (np.std(ih, ddof=1) / math.sqrt(a.size))
        assert z_diff > 1.645 and z_hq > 1.645


@pytest.mark.slow
def test_bic_loses_to_aic_for_near_noninvertible_ma():
    plan = ExperimentPlan(ProcessSpec.arma11(0.0, 0.98), (1000,), (CriterionSpec.bic(),), 1000, 32)
    assert estimate_re(plan).row(1000, "BIC").RE < 0.85


@pytest.mark.slow
@pytest.mark.parametrize("phi,theta,band", [(0.9, 0.0, (3.1, 5.1)), (0.0, 0.98, (0.52, 0.82))])
def test_paper_bic_cells_at_full_replication_count(phi, theta, band):
    # published 4.07 and 0.66; checked against the same +-25% band used for acceptance
    plan = ExperimentPlan(ProcessSpec.arma11(phi, theta), (1000,), (CriterionSpec.bic(),), 5000, 33)
    row = estimate_re(plan).row(1000, "BIC")
    assert band[0] <= row.RE <= band[1]


@pytest.mark.slow
def test_table1_bic_small_n_near_noninvertible_ma():
    plan = ExperimentPlan(ProcessSpec.arma11(0.0, 0.98), (180,), (CriterionSpec.bic(),), 1000, 34)
    assert 0.62 <= estimate_re(plan).row(180, "BIC").RE <= 0.94
