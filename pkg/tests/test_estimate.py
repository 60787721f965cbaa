"""Estimation: log-likelihood, isotonic MLE, constrained MLE."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from prevci.estimate import (
    log_likelihood,
    log_likelihood_array,
    mle_constrained,
    mle_constrained_array,
    mle_unconstrained,
    mle_unconstrained_array,
)
from prevci.model import SampleSizes, SurveyCounts, b_vector

SURVEY = SurveyCounts(50, 2, 103, SampleSizes(3300, 401, 122))


def counts(x1, x2, x3, n1=10, n2=10, n3=10):
    return SurveyCounts(x1, x2, x3, SampleSizes(n1, n2, n3))


def loglik_direct(p, x: SurveyCounts) -> float:
    """Oracle: term-by-term log-likelihood with math.* only."""
    total = 0.0
    ns = (x.sizes.n1, x.sizes.n2, x.sizes.n3)
    for pi_, xi, ni in zip(p, x.as_array(), ns):
        total += math.log(math.comb(ni, int(xi)))
        if xi > 0:
            if pi_ == 0.0:
                return -math.inf
            total += xi * math.log(pi_)
        if ni - xi > 0:
            if pi_ == 1.0:
                return -math.inf
            total += (ni - xi) * math.log(1.0 - pi_)
    return total


def slsqp_constrained_loglik(x: SurveyCounts, pi0: float) -> float:
    """Oracle: SQP solve of the reduced 2-D problem, interior-clipped."""

    def neg(z):
        p2, p3 = z
        p1 = (1.0 - pi0) * p2 + pi0 * p3
        return -log_likelihood((min(max(p1, 0.0), 1.0), p2, p3), x)

    best = math.inf
    for z0 in ([0.3, 0.7], [0.1, 0.9], [0.45, 0.55]):
        res = minimize(
            neg,
            z0,
            method="SLSQP",
            bounds=[(1e-9, 1 - 1e-9)] * 2,
            constraints=[{"type": "ineq", "fun": lambda z: z[1] - z[0]}],
            options={"maxiter": 300, "ftol": 1e-14},
        )
        best = min(best, res.fun)
    return -best


class TestLogLikelihood:
    def test_matches_direct_summation_on_survey_data(self):
        p = SURVEY.frequencies()
        assert log_likelihood(p, SURVEY) == pytest.approx(
            loglik_direct(p, SURVEY), abs=1e-9
        )

    def test_all_zero_outcome_has_probability_one(self):
        x = counts(0, 0, 0, 1, 1, 1)
        assert log_likelihood((0.0, 0.0, 0.0), x) == 0.0

    def test_impossible_outcome_is_minus_inf(self):
        x = counts(1, 1, 1, 1, 1, 1)
        assert log_likelihood((0.0, 0.5, 0.5), x) == -math.inf
        x = counts(0, 0, 0, 1, 1, 1)
        assert log_likelihood((1.0, 0.0, 0.0), x) == -math.inf

    def test_rejects_out_of_range_p(self):
        with pytest.raises(ValueError):
            log_likelihood((1.2, 0.0, 0.5), counts(1, 1, 1))

    @given(
        p=st.tuples(*[st.floats(0.01, 0.99)] * 3),
        x=st.tuples(*[st.integers(0, 10)] * 3),
    )
    @settings(max_examples=100)
    def test_matches_direct_on_random_points(self, p, x):
        c = counts(*x)
        assert log_likelihood(p, c) == pytest.approx(loglik_direct(p, c), abs=1e-9)

    def test_array_version_matches_scalar(self):
        rng = np.random.default_rng(5)
        xs = rng.integers(0, 11, size=(40, 3))
        ps = rng.uniform(0.01, 0.99, size=(40, 3))
        ns = np.array([10, 10, 10])
        got = log_likelihood_array(ps, xs, ns)
        for i in range(40):
            want = log_likelihood(ps[i], counts(*map(int, xs[i])))
            assert got[i] == pytest.approx(want, abs=1e-9)


class TestUnconstrainedMle:
    def test_survey_data_is_interior(self):
        res = mle_unconstrained(SURVEY)
        np.testing.assert_allclose(res.p_hat.as_array(), SURVEY.frequencies())
        assert res.case_tag == "interior"

    def test_pool_12_example(self):
        res = mle_unconstrained(counts(1, 2, 5))
        np.testing.assert_allclose(res.p_hat.as_array(), [0.15, 0.15, 0.5])
        assert res.case_tag == "pool-12"

    def test_equal_frequencies_stay_interior(self):
        res = mle_unconstrained(counts(3, 3, 3))
        np.testing.assert_allclose(res.p_hat.as_array(), [0.3, 0.3, 0.3])
        assert res.case_tag == "interior"

    def test_pool_13_merges_survey_and_sensitivity(self):
        # x1/n1 > x3/n3 binds p1 = p3; pooled rate (x1+x3)/(n1+n3)
        res = mle_unconstrained(counts(9, 4, 1))
        np.testing.assert_allclose(res.p_hat.as_array(), [0.5, 0.4, 0.5])
        assert res.case_tag == "pool-13"

    def test_pool_12_cascades_to_full_pool(self):
        res = mle_unconstrained(counts(6, 9, 1))
        np.testing.assert_allclose(res.p_hat.as_array(), [16 / 30] * 3)
        assert res.case_tag == "pool-all"

    def test_pool_13_cascades_to_full_pool(self):
        res = mle_unconstrained(counts(5, 4, 0))
        np.testing.assert_allclose(res.p_hat.as_array(), [0.3, 0.3, 0.3])
        assert res.case_tag == "pool-all"

    def test_log_lik_field_consistent(self):
        for x in (SURVEY, counts(1, 2, 5), counts(9, 4, 1), counts(5, 4, 0)):
            res = mle_unconstrained(x)
            assert res.log_lik == pytest.approx(
                log_likelihood(res.p_hat, x), abs=1e-10
            )

    def test_dominates_parameter_grid(self):
        # the fit must beat every ordered triple on a 50^3 grid
        g = np.linspace(0.0, 1.0, 50)
        p1, p2, p3 = np.meshgrid(g, g, g, indexing="ij")
        mask = (p2 <= p1) & (p1 <= p3)
        grid = np.stack([p1[mask], p2[mask], p3[mask]], axis=1)
        rng = np.random.default_rng(11)
        cases = [SURVEY] + [
            counts(*(int(rng.integers(0, n + 1)) for n in (17, 11, 23)), 17, 11, 23)
            for _ in range(5)
        ]
        for x in cases:
            lls = log_likelihood_array(
                grid, np.tile(x.as_array(), (len(grid), 1)), x.sizes.as_array()
            )
            assert mle_unconstrained(x).log_lik >= lls.max() - 1e-6

    def test_matches_sqp_oracle(self):
        rng = np.random.default_rng(19)
        for _ in range(30):
            ns = rng.integers(2, 60, size=3)
            xs = np.array([rng.integers(0, n + 1) for n in ns])
            x = SurveyCounts(*map(int, xs), SampleSizes(*map(int, ns)))

            def neg(p):
                return -log_likelihood(np.clip(p, 0, 1), x)

            best = math.inf
            for p0 in ([0.2, 0.1, 0.8], [0.5, 0.4, 0.6]):
                res = minimize(
                    neg,
                    p0,
                    method="SLSQP",
                    bounds=[(1e-9, 1 - 1e-9)] * 3,
                    constraints=[
                        {"type": "ineq", "fun": lambda p: p[0] - p[1]},
                        {"type": "ineq", "fun": lambda p: p[2] - p[0]},
                    ],
                    options={"maxiter": 300, "ftol": 1e-14},
                )
                best = min(best, res.fun)
            assert mle_unconstrained(x).log_lik >= -best - 1e-6

    @given(x=st.tuples(*[st.integers(0, 12)] * 3))
    @settings(max_examples=200)
    def test_fit_is_ordered_and_tagged(self, x):
        res = mle_unconstrained(counts(*x, 12, 12, 12))
        p = res.p_hat
        assert p.p2 <= p.p1 <= p.p3
        if res.case_tag == "interior":
            np.testing.assert_allclose(p.as_array(), np.array(x) / 12.0)
        elif res.case_tag == "pool-12":
            assert p.p1 == p.p2 <= p.p3
        elif res.case_tag == "pool-13":
            assert p.p2 <= p.p1 == p.p3
        else:
            assert p.p1 == p.p2 == p.p3

    def test_array_matches_scalar(self):
        rng = np.random.default_rng(23)
        ns = np.array([14, 9, 21])
        xs = np.stack([rng.integers(0, n + 1, size=200) for n in ns], axis=1)
        fits, tags = mle_unconstrained_array(xs, ns)
        for i in range(200):
            res = mle_unconstrained(
                SurveyCounts(*map(int, xs[i]), SampleSizes(*map(int, ns)))
            )
            np.testing.assert_allclose(fits[i], res.p_hat.as_array(), atol=1e-15)
            assert ("interior", "pool-12", "pool-13", "pool-all")[
                tags[i]
            ] == res.case_tag


def random_instances(rng, k, nmax=120):
    out = []
    for _ in range(k):
        ns = rng.integers(1, nmax, size=3)
        xs = np.array([rng.integers(0, n + 1) for n in ns])
        out.append(SurveyCounts(*map(int, xs), SampleSizes(*map(int, ns))))
    return out


class TestConstrainedMle:
    def test_inactive_constraint_returns_unconstrained_fit(self):
        free = mle_unconstrained(SURVEY)
        pi_hat = (free.p_hat.p1 - free.p_hat.p2) / (free.p_hat.p3 - free.p_hat.p2)
        res = mle_constrained(SURVEY, pi_hat)
        assert res.log_lik == pytest.approx(free.log_lik, abs=1e-9)
        np.testing.assert_allclose(
            res.p_hat.as_array(), free.p_hat.as_array(), atol=1e-6
        )

    def test_pi0_zero_closed_form(self):
        res = mle_constrained(SURVEY, 0.0)
        q = 52 / 3701
        np.testing.assert_allclose(res.p_hat.as_array(), [q, q, 103 / 122])

    def test_pi0_zero_cascades_when_pool_exceeds_p3(self):
        x = counts(8, 6, 2)
        res = mle_constrained(x, 0.0)
        np.testing.assert_allclose(res.p_hat.as_array(), [16 / 30] * 3)

    def test_pi0_one_closed_form(self):
        x = counts(7, 2, 9)
        res = mle_constrained(x, 1.0)
        r = 16 / 20
        np.testing.assert_allclose(res.p_hat.as_array(), [r, 0.2, r])

    def test_pi0_one_cascades_when_pool_falls_below_p2(self):
        x = counts(1, 9, 2)
        res = mle_constrained(x, 1.0)
        np.testing.assert_allclose(res.p_hat.as_array(), [12 / 30] * 3)

    def test_constraint_residual_is_tiny(self):
        rng = np.random.default_rng(31)
        for x in random_instances(rng, 50):
            pi0 = float(rng.uniform())
            res = mle_constrained(x, pi0)
            resid = abs(b_vector(pi0) @ res.p_hat.as_array())
            assert resid <= 1e-10

    def test_matches_sqp_oracle(self):
        rng = np.random.default_rng(37)
        for x in random_instances(rng, 30, nmax=80):
            pi0 = float(rng.uniform(0.02, 0.98))
            want = slsqp_constrained_loglik(x, pi0)
            assert mle_constrained(x, pi0).log_lik >= want - 1e-6

    def test_dominates_random_feasible_points(self):
        # 1e3 random (x, pi0) pairs, each checked against 1e3 feasible points
        rng = np.random.default_rng(41)
        for x in random_instances(rng, 1000, nmax=150):
            pi0 = float(rng.uniform())
            res = mle_constrained(x, pi0)
            z = np.sort(rng.uniform(0.0, 1.0, size=(1000, 2)), axis=1)
            p1 = (1.0 - pi0) * z[:, 0] + pi0 * z[:, 1]
            ps = np.stack([np.clip(p1, z[:, 0], z[:, 1]), z[:, 0], z[:, 1]], axis=1)
            lls = log_likelihood_array(
                ps, np.tile(x.as_array(), (1000, 1)), x.sizes.as_array()
            )
            assert res.log_lik >= lls.max() - 1e-8

    def test_boundary_counts_handled(self):
        # zero false positives and a perfect sensitivity sample
        for x in (counts(0, 0, 10), counts(3, 0, 10), counts(0, 0, 0), counts(10, 10, 10)):
            for pi0 in (0.0, 0.25, 0.5, 0.9, 1.0):
                res = mle_constrained(x, pi0)
                assert np.isfinite(res.p_hat.as_array()).all()
                assert abs(b_vector(pi0) @ res.p_hat.as_array()) <= 1e-10

    def test_array_matches_scalar(self):
        rng = np.random.default_rng(43)
        ns = np.array([30, 20, 25])
        xs = np.stack([rng.integers(0, n + 1, size=100) for n in ns], axis=1)
        for pi0 in (0.0, 0.17, 0.5, 0.93, 1.0):
            ps = mle_constrained_array(xs, ns, pi0)
            for i in range(0, 100, 7):
                x = SurveyCounts(*map(int, xs[i]), SampleSizes(*map(int, ns)))
                want = mle_constrained(x, pi0).log_lik
                got = log_likelihood(np.clip(ps[i], 0, 1), x)
                assert got == pytest.approx(want, abs=1e-7)
