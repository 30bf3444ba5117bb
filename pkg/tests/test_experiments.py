import math

import numpy as np
import pytest

from treepolymer import theory
from treepolymer.experiments import (
    ExperimentReport,
    mc_fractional_moment,
    mc_second_moment,
    phase_scan,
    quenched_point_estimate,
    replica_seed,
    sample_set,
    survival_probability,
    weak_exponent_check,
    zn_samples,
)
from treepolymer.laws import Constant, Gaussian, TwoPoint
from treepolymer.oracle import exact_expectation
from treepolymer.theory import RegimeError

GAUSS = Gaussian(0.0, 1.0)
TP = TwoPoint(0.0, 1.0, 0.5)
BC = math.sqrt(2.0 * math.log(2.0))


def test_replica_seed_stable_and_distinct():
    assert replica_seed(7, 0) == replica_seed(7, 0)
    seeds = {replica_seed(7, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert replica_seed(7, 1) != replica_seed(8, 1)


def test_zn_samples_reproducible_across_workers():
    a = zn_samples(TP, 3, 1.0, 6, 150, seed=5, workers=1)
    b = zn_samples(TP, 3, 1.0, 6, 150, seed=5, workers=2)
    c = zn_samples(TP, 3, 1.0, 6, 150, seed=5, workers=3)
    assert np.array_equal(a, b)
    assert np.array_equal(a, c)
    assert a.shape == (150, 7)
    assert np.all(a[:, 0] == 1.0)


def test_zn_samples_martingale_mean():
    z = zn_samples(TP, 3, 0.8, 8, 2000, seed=11, workers=1)
    means = z.mean(axis=0)
    ses = z.std(axis=0, ddof=1) / math.sqrt(len(z))
    for n in range(1, 9):
        assert abs(means[n] - 1.0) <= 4.0 * ses[n]


def test_min_replicas_enforced():
    with pytest.raises(ValueError):
        zn_samples(TP, 3, 1.0, 4, 50, seed=1)
    with pytest.raises(ValueError):
        mc_fractional_moment(TP, 3, 1.0, 0.5, [1, 2], 500, seed=1)
    with pytest.raises(ValueError):
        mc_second_moment(TP, 3, 1.0, [1, 2], 50, seed=1)


class TestMcFractionalMoment:
    def test_theta_one_is_martingale(self):
        rep = mc_fractional_moment(TP, 3, 1.0, 1.0, list(range(1, 7)), 2000, seed=21)
        for row in rep.rows:
            n, est, se, bound, ok = row
            assert bound == pytest.approx(1.0, rel=1e-12)
            assert abs(est - 1.0) <= 4.0 * se

    def test_constant_law_all_ones(self):
        rep = mc_fractional_moment(Constant(1.0), 3, 1.3, 0.5, [1, 3, 5], 1000, seed=3)
        for n, est, se, bound, ok in rep.rows:
            assert est == pytest.approx(1.0, rel=1e-12)
            assert se == pytest.approx(0.0, abs=1e-15)
            assert bound >= 1.0
            assert ok
        assert rep.passed

    def test_strong_disorder_bound(self):
        rep = mc_fractional_moment(GAUSS, 3, 2 * BC, 0.5, list(range(1, 9)), 2000, seed=33)
        assert rep.check("estimates_below_bound")["passed"]
        assert rep.check("decay_slope_below_log_r")["passed"]

    def test_sample_reuse(self):
        ss = sample_set(TP, 3, 1.0, 6, 1200, seed=77)
        a = mc_fractional_moment(TP, 3, 1.0, 0.5, [1, 3, 6], 1200, seed=77, samples=ss)
        b = mc_fractional_moment(TP, 3, 1.0, 0.5, [1, 3, 6], 1200, seed=77)
        assert a.rows == b.rows


class TestMcSecondMoment:
    def test_constant_law(self):
        rep = mc_second_moment(Constant(1.0), 3, 1.0, [1, 2, 4], 500, seed=4)
        for n, est, se, ref, ok in rep.rows:
            assert est == pytest.approx(1.0, rel=1e-12)
            assert ref == pytest.approx(1.0, rel=1e-12)
        assert rep.params["l2_bounded"]  # r(2) = 1/2 < 1

    def test_matches_oracle_within_mc_error(self):
        rep = mc_second_moment(TP, 3, 1.0, [1, 2, 3], 4000, seed=14)
        for n, est, se, ref, ok in rep.rows:
            want = exact_expectation(TP, 1.0, 3, n, "second_moment")
            assert ref == pytest.approx(want, abs=1e-10)
            assert abs(est - want) <= 4.0 * se
        assert rep.check("matches_closed_form")["passed"]

    def test_l2_bounded_instance_agrees_deeper(self):
        rep = mc_second_moment(TP, 3, 1.0, list(range(1, 9)), 3000, seed=15)
        assert rep.check("matches_closed_form")["passed"]
        assert not rep.params["divergent"]


class TestSurvivalProbability:
    def test_weak_disorder_rejected(self):
        with pytest.raises(RegimeError):
            survival_probability(GAUSS, 3, BC / 2, 0.1, [4, 6], 500, seed=2)
        with pytest.raises(RegimeError):
            survival_probability(Constant(1.0), 3, 2.0, 0.1, [4, 6], 500, seed=2)

    def test_eps_range_validated(self):
        with pytest.raises(ValueError):
            survival_probability(GAUSS, 3, 2 * BC, 5.0, [4, 6], 500, seed=2)

    def test_probabilities_sane(self):
        tc = theory.theta_c(GAUSS, 2 * BC, 3)
        r = theory.r_theta(GAUSS, 2 * BC, tc, 3)
        rep = survival_probability(GAUSS, 3, 2 * BC, r / 2, [4, 6, 8], 1000, seed=8)
        for n, thr, p, se in rep.rows:
            assert 0.0 <= p <= 1.0
            assert thr == pytest.approx((r - r / 2) ** (n / tc), rel=1e-12)

    def test_tiny_eps_threshold_collapses(self):
        # eps -> r(theta_c): threshold base -> 0, so P(Z_n > thr) -> 1
        tc = theory.theta_c(GAUSS, 2 * BC, 3)
        r = theory.r_theta(GAUSS, 2 * BC, tc, 3)
        rep = survival_probability(GAUSS, 3, 2 * BC, r * (1 - 1e-9), [4, 6], 500, seed=8)
        for n, thr, p, se in rep.rows:
            assert p == pytest.approx(1.0, abs=1e-9)


class TestPhaseScan:
    def test_gaussian_regime_flip(self):
        grid = np.arange(0.0, 3.01, 0.05)
        rep = phase_scan(GAUSS, 3, grid)
        regimes = [row[3] for row in rep.rows]
        flips = sum(1 for a, b in zip(regimes, regimes[1:]) if a != b)
        assert flips == 1
        idx = regimes.index("strong")
        assert grid[idx - 1] < BC < grid[idx] + 1e-12

    def test_beta_zero_row(self):
        rep = phase_scan(GAUSS, 3, [0.0])
        beta, h_a, f, regime, h_q, r2, tc, t1, tmin, note = rep.rows[0]
        assert h_a == pytest.approx(math.log(2.0), rel=1e-14)
        assert regime == "weak"
        assert h_q == pytest.approx(h_a, rel=1e-14)
        assert t1 is None

    def test_constant_all_weak(self):
        rep = phase_scan(Constant(1.0), 3, np.linspace(0.0, 5.0, 11))
        assert all(row[3] == "weak" for row in rep.rows)
        for row in rep.rows:
            assert row[4] == pytest.approx(row[1], rel=1e-13)  # h_q = h_a

    def test_h_q_kink_at_beta_c(self):
        rep = phase_scan(GAUSS, 3, np.linspace(0.2, 3.0, 29))
        for row in rep.rows:
            beta, h_a, _, regime, h_q = row[0], row[1], row[2], row[3], row[4]
            if regime == "weak":
                assert h_q == pytest.approx(h_a, rel=1e-12)
            else:
                assert h_q == pytest.approx(beta * BC, rel=1e-9)
                assert h_q < h_a


class TestQuenchedPointEstimate:
    def test_beta_zero_deterministic(self):
        n = 12
        rep = quenched_point_estimate(GAUSS, 3, 0.0, n, 100, seed=6, workers=1)
        (d1, m1, s1, hq, g1), (d2, m2, s2, _, g2) = rep.rows
        assert (d1, d2) == (6, 12)
        assert m1 == pytest.approx(math.log(2.0) + math.log(1.5) / 6, rel=1e-12)
        assert m2 == pytest.approx(math.log(2.0) + math.log(1.5) / 12, rel=1e-12)
        assert s1 == pytest.approx(0.0, abs=1e-13)

    def test_constant_law_deterministic(self):
        beta, n = 0.9, 10
        rep = quenched_point_estimate(Constant(1.0), 3, beta, n, 100, seed=6, workers=1)
        for d, m, s, hq, gap in rep.rows:
            assert m == pytest.approx(math.log(2.0) - beta + math.log(1.5) / d, rel=1e-12)


class TestWeakExponentCheck:
    def test_requires_weak_disorder(self):
        with pytest.raises(RegimeError):
            weak_exponent_check(GAUSS, 3, 2 * BC, [0.125], seed=1)

    def test_constant_law_closed_form(self):
        # Z_n = 1: product = delta * (1 + kappa * sum of e^{-delta n})
        deltas = [2.0 ** -k for k in range(3, 9)]
        rep = weak_exponent_check(Constant(1.0), 3, 1.0, deltas, seed=1, profile_depth=12)
        for (d, n_terms, product) in rep.rows:
            q = math.exp(-d)
            want = d * (1.0 + 1.5 * q * (1.0 - q ** n_terms) / (1.0 - q))
            assert product == pytest.approx(want, rel=1e-12)
        assert rep.params["product_ratio"] < 2.0

    def test_beta_zero_closed_form(self):
        deltas = [0.25, 0.125]
        rep = weak_exponent_check(GAUSS, 3, 0.0, deltas, seed=3, profile_depth=10)
        for (d, n_terms, product) in rep.rows:
            q = math.exp(-d)
            want = d * (1.0 + 1.5 * q * (1.0 - q ** n_terms) / (1.0 - q))
            assert product == pytest.approx(want, rel=1e-12)

    def test_gaussian_ratio_bounded(self):
        deltas = [2.0 ** -k for k in range(3, 11)]
        for seed in (101, 102):
            rep = weak_exponent_check(GAUSS, 3, BC / 2, deltas, seed=seed, profile_depth=16)
            assert rep.check("product_ratio_bounded")["passed"]
            assert rep.params["product_ratio"] < 10.0


class TestExperimentReport:
    def test_csv_shape(self):
        rep = ExperimentReport(
            experiment="demo",
            params={"alpha": 1, "law": "constant:1"},
            columns=["n", "value"],
            rows=[(1, 0.5), (2, None)],
        )
        text = rep.csv_text()
        lines = text.splitlines()
        assert lines[0].startswith("# treepolymer experiment=demo")
        assert lines[1] == "n,value"
        assert lines[2] == "1,0.5"
        assert lines[3] == "2,nan"
        assert text.endswith("\n")

    def test_floats_round_trip(self):
        v = 1.0 / 3.0 + 1e-16
        rep = ExperimentReport("demo", {}, ["x"], rows=[(v,)])
        cell = rep.csv_text().splitlines()[2]
        assert float(cell) == v

    def test_checks_carry_reference_and_tolerance(self):
        rep = ExperimentReport("demo", {}, ["x"])
        rep.add_check("c", True, reference="ref", tolerance=1e-6, observed=0.0)
        c = rep.check("c")
        assert c["reference"] == "ref" and c["tolerance"] == 1e-6
        assert rep.passed
