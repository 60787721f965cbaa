"""Acceptance suite: headline numerical targets and structural guarantees.

Every test is one pass/fail line under `pytest -v`.  Monte Carlo checks
run at fixed seeds, so a passing suite is reproducible bit for bit.
Stated time budgets are asserted alongside the numerical targets.
"""

import itertools
import math
import time
from bisect import bisect_right
from fractions import Fraction

import numpy as np
import pytest

from prevci import (
    ExperimentConfig,
    InversionConfig,
    RngSeed,
    SampleSizes,
    SurveyCounts,
    bca_interval,
    binomial_pmf,
    bootstrap_distribution,
    clopper_pearson,
    delta_interval,
    delta_variance,
    emit_report,
    evaluate_statistic,
    exact_interval,
    exact_p_values,
    invert,
    mle_unconstrained,
    percentile_interval,
    prevalence_of,
    projection_interval,
    run_coverage,
)
from prevci.bootstrap import BcaConstants, adjusted_level, empirical_quantile

X = SurveyCounts(50, 2, 103, SampleSizes(3300, 401, 122))


def r3(v: float) -> float:
    return round(v, 3)


def test_criterion_01_point_estimate():
    """pi_hat equals 0.012 at three decimals, in under a millisecond."""
    fit = mle_unconstrained(X)  # warm caches before timing
    best = math.inf
    for _ in range(5):
        t0 = time.perf_counter()
        fit = mle_unconstrained(X)
        pi = prevalence_of(fit.p_hat)
        best = min(best, time.perf_counter() - t0)
    assert r3(pi) == 0.012
    assert best < 1e-3


def test_criterion_02_delta_interval():
    """Closed-form delta interval matches [0.003, 0.022] at 3 dp."""
    t0 = time.perf_counter()
    iv = delta_interval(X, 0.05)
    assert (r3(iv.lower), r3(iv.upper)) == (0.003, 0.022)
    assert time.perf_counter() - t0 < 1.0


def test_criterion_02_projection_interval():
    """Projection interval target is [0.001, 0.028] at 3 dp.

    The computed lower endpoint is about 0.0005, which rounds to 0.000,
    so the lower-endpoint assertion fails by half a thousandth.  The
    interval is left as computed rather than nudged to match.
    """
    t0 = time.perf_counter()
    iv = projection_interval(X, 0.05)
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    assert r3(iv.upper) == 0.028
    assert r3(iv.lower) == 0.001


def test_criterion_03_percentile_and_bca():
    """Percentile [0.001, 0.021] and BCa [0.001, 0.020], B=1e5, +-0.002."""
    t0 = time.perf_counter()
    pb = percentile_interval(X, 0.05, B=100_000, seed=RngSeed(0))
    bca = bca_interval(X, 0.05, B=100_000, seed=RngSeed(0))
    elapsed = time.perf_counter() - t0
    assert pb.lower == pytest.approx(0.001, abs=2e-3)
    assert pb.upper == pytest.approx(0.021, abs=2e-3)
    assert bca.lower == pytest.approx(0.001, abs=2e-3)
    assert bca.upper == pytest.approx(0.020, abs=2e-3)
    assert elapsed < 30.0


def test_criterion_04_asymptotic_inversion():
    """Normal-calibrated inversion intervals for the four smooth roots."""
    targets = {
        "pi_tilde_c": (0.000, 0.020, 1e-3),
        "phi_tilde_c": (0.000, 0.020, 1e-3),
        "w": (0.000, 0.021, 1e-3),
        "r_tilde": (0.000, 0.021, 2e-3),
    }
    t0 = time.perf_counter()
    for stat, (lo, hi, tol) in targets.items():
        res = invert(stat, "asymptotic", X, 0.05,
                     InversionConfig(seed=RngSeed(0), scan="bracket"))
        assert res.interval.lower == pytest.approx(lo, abs=tol), stat
        assert res.interval.upper == pytest.approx(hi, abs=tol), stat
    assert time.perf_counter() - t0 < 60.0


def test_criterion_05_bootstrap_inversion():
    """Bootstrap-calibrated inversion, B=1e4: all six statistics
    produce [0.000, 0.021] within +-0.002."""
    stats = ("pi_hat", "pi_tilde_c", "phi_hat", "phi_tilde_c", "w", "r")
    t0 = time.perf_counter()
    for stat in stats:
        cfg = InversionConfig(b_replicates=10_000, seed=RngSeed(0),
                              scan="bracket")
        res = invert(stat, "bootstrap", X, 0.05, cfg)
        assert res.interval.lower == pytest.approx(0.000, abs=2e-3), stat
        assert res.interval.upper == pytest.approx(0.021, abs=2e-3), stat
    assert time.perf_counter() - t0 < 600.0


def test_criterion_06_exact_intervals():
    """Finite-sample intervals across the error-budget ladder, +-0.002."""
    t0 = time.perf_counter()
    cases = (
        (1e-4, True, 0.000, 0.028),
        (1e-3, True, 0.000, 0.027),
        (1e-2, True, 0.000, 0.026),
        (1e-2, False, 0.000, 0.025),
    )
    for gamma, corrected, lo, hi in cases:
        res = exact_interval(X, 0.05, gamma, g=10, corrected=corrected)
        assert res.interval.lower == pytest.approx(lo, abs=2e-3), gamma
        assert res.interval.upper == pytest.approx(hi, abs=2e-3), (gamma,
                                                                   corrected)
    assert time.perf_counter() - t0 < 600.0


def test_criterion_07_coverage_closed_form_and_bootstrap():
    """Coverage at the observed design point, R=1e4: delta 0.904,
    percentile 0.895, BCa 0.895, each +-0.01."""
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        x=X, methods=("delta", "pb", "bca"), replicates=10_000,
        b_replicates=10_000, seed=2026,
    )
    rep = run_coverage(cfg)
    elapsed = time.perf_counter() - t0
    cov = {c.method: float(c.covered) for c in rep.cells}
    assert cov["delta"] == pytest.approx(0.904, abs=0.01)
    assert cov["pb"] == pytest.approx(0.895, abs=0.01)
    assert cov["bca"] == pytest.approx(0.895, abs=0.01)
    assert elapsed < 900.0


def test_criterion_07_coverage_r_statistic_bootstrap():
    """Bootstrap inversion of the signed root: coverage 0.950 +- 0.012.

    Runs at R=2500 rather than 1e4 to fit a single-core time budget; the
    Monte Carlo standard error is about 0.0044, well inside the band.
    """
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        x=X, methods=("inv-boot",), statistics=("r",), replicates=2500,
        b_replicates=10_000, seed=2026, length_reps=0,
    )
    (cell,) = run_coverage(cfg).cells
    elapsed = time.perf_counter() - t0
    assert float(cell.covered) == pytest.approx(0.950, abs=0.012)
    assert elapsed < 800.0


def test_criterion_07_coverage_exact():
    """Exact method at gamma=1e-3: coverage at least 0.95 with R=1e3."""
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        x=X, methods=("exact",), gamma=1e-3, replicates=1000, seed=2026,
        length_reps=0,
    )
    (cell,) = run_coverage(cfg).cells
    elapsed = time.perf_counter() - t0
    assert float(cell.covered) >= 0.95
    assert elapsed < 100.0


def test_criterion_08a_clopper_pearson_enumerated_coverage():
    """CP coverage is at least the nominal level for every p on a
    99-point grid and every n up to 30."""
    for level in (0.90, 0.95):
        for n in range(1, 31):
            ivs = [clopper_pearson(x, n, level) for x in range(n + 1)]
            for i in range(1, 100):
                p = i / 100.0
                pmf = [binomial_pmf(n, p, x) for x in range(n + 1)]
                cov = sum(w for w, iv in zip(pmf, ivs)
                          if iv.lower <= p <= iv.upper)
                assert cov >= level - 1e-9, (level, n, p)


def test_criterion_08b_exact_p_value_validity_enumerated():
    """Both exact p-values are valid: P{q <= u} <= u for u in
    {0.01,...,0.99}, exhaustively at n=(5,5,5) over a 5-mark lattice."""
    t0 = time.perf_counter()
    sizes = SampleSizes(5, 5, 5)
    marks = (0.1, 0.3, 0.5, 0.7, 0.9)
    outcomes = list(itertools.product(range(6), repeat=3))
    pmf_table = {}
    for m in marks:
        q = Fraction(m)
        pmf_table[m] = [
            math.comb(5, k) * q ** k * (1 - q) ** (5 - k) for k in range(6)
        ]
    checked = 0
    for p1, p2, p3 in itertools.product(marks, repeat=3):
        if not (p2 <= p1 <= p3 and p2 < p3):
            continue
        pi0 = (p1 - p2) / (p3 - p2)
        rows = []
        for x1, x2, x3 in outcomes:
            w = pmf_table[p1][x1] * pmf_table[p2][x2] * pmf_table[p3][x3]
            q = exact_p_values(
                SurveyCounts(x1, x2, x3, sizes), pi0, gamma=1e-3, g=10
            )
            rows.append((q.q_lower, q.q_upper, w))
        for col in (0, 1):
            pairs = sorted((row[col], row[2]) for row in rows)
            qs = [q for q, _ in pairs]
            cum, run = [], Fraction(0)
            for _, w in pairs:
                run += w
                cum.append(run)
            for i in range(1, 100):
                u = Fraction(i, 100)
                k = bisect_right(qs, u)
                if k:
                    assert cum[k - 1] <= u, (p1, p2, p3, col, i)
        checked += 1
    assert checked >= 30
    assert time.perf_counter() - t0 < 300.0


def test_criterion_08c_stochastic_monotonicity_enumerated():
    """Raising p1 and lowering p2, p3 shifts the test statistic up in
    distribution: exact cdf dominance at n=(4,4,4), 20 ordered pairs."""
    sizes = SampleSizes(4, 4, 4)
    rng = np.random.default_rng(42)
    outcomes = list(itertools.product(range(5), repeat=3))

    def exact_cdfs(p, pi0):
        # map statistic value -> cumulative probability, all in Fractions
        table = {}
        for x1, x2, x3 in outcomes:
            w = 1
            for pv, xv in zip(p, (x1, x2, x3)):
                w *= math.comb(4, xv) * pv ** xv * (1 - pv) ** (4 - xv)
            t = (Fraction(x1, 4) - (1 - pi0) * Fraction(x2, 4)
                 - pi0 * Fraction(x3, 4))
            table[t] = table.get(t, Fraction(0)) + w
        ts = sorted(table)
        cum, run = {}, Fraction(0)
        for t in ts:
            run += table[t]
            cum[t] = run
        return cum

    pi0 = Fraction(1, 4)
    for _ in range(20):
        a = sorted(rng.choice(np.arange(1, 8), size=3, replace=False))
        base = (Fraction(int(a[1]), 8), Fraction(int(a[0]), 8),
                Fraction(int(a[2]), 8))
        bump = Fraction(1, 16)
        higher = (min(base[0] + bump, Fraction(1)),
                  max(base[1] - bump, Fraction(0)),
                  max(base[2] - bump, Fraction(0)))
        lo_cdf = exact_cdfs(base, pi0)
        hi_cdf = exact_cdfs(higher, pi0)
        support = sorted(set(lo_cdf) | set(hi_cdf))

        def cdf_at(cum, t):
            keys = [k for k in cum if k <= t]
            return cum[max(keys)] if keys else Fraction(0)

        for t in support:
            assert cdf_at(hi_cdf, t) <= cdf_at(lo_cdf, t), (base, t)


def test_criterion_08d_signed_root_squares_to_lr():
    """r^2 equals the likelihood-ratio statistic and r carries the sign
    of pi_hat - pi0, on a thousand random instances."""
    rng = np.random.default_rng(8)
    checked = 0
    for _ in range(1000):
        n = [int(v) for v in rng.integers(15, 200, size=3)]
        p2 = rng.uniform(0.01, 0.4)
        p3 = rng.uniform(p2 + 0.05, 0.98)
        pi = rng.uniform(0.02, 0.98)
        p1 = (1 - pi) * p2 + pi * p3
        x = SurveyCounts(
            int(rng.binomial(n[0], p1)), int(rng.binomial(n[1], p2)),
            int(rng.binomial(n[2], p3)),
            SampleSizes(n[0], n[1], n[2]),
        )
        pi0 = rng.uniform(0.01, 0.99)
        w = evaluate_statistic("w", x, pi0)
        r = evaluate_statistic("r", x, pi0)
        ph = evaluate_statistic("pi_hat", x, pi0)
        if not (w.defined and r.defined and ph.defined):
            continue
        assert abs(r.value ** 2 - w.value) <= 1e-10
        if w.value > 1e-12 and ph.value != pi0:
            assert math.copysign(1.0, r.value) == \
                math.copysign(1.0, ph.value - pi0)
        checked += 1
    assert checked >= 800


def test_criterion_08e_delta_variance_matches_finite_differences():
    """Analytic variance agrees with a finite-difference gradient
    composition to 1e-6 relative error on a thousand interior points."""
    rng = np.random.default_rng(9)

    def pi_of(p):
        return (p[0] - p[1]) / (p[2] - p[1])

    for _ in range(1000):
        p2 = rng.uniform(0.005, 0.35)
        p3 = rng.uniform(p2 + 0.15, 0.99)
        pi = rng.uniform(0.05, 0.95)
        p1 = (1 - pi) * p2 + pi * p3
        p = np.array([p1, p2, p3])
        n = [int(v) for v in rng.integers(20, 500, size=3)]
        sizes = SampleSizes(*n)
        analytic = delta_variance(tuple(p), sizes).value
        h = 1e-6
        fd = 0.0
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            g = (pi_of(p + e) - pi_of(p - e)) / (2 * h)
            fd += g * g * p[i] * (1 - p[i]) / n[i]
        assert abs(analytic - fd) <= 1e-6 * fd, (p, n)


def test_criterion_08f_bca_reduces_to_percentile_without_corrections():
    """With z0 = a = 0 the BCa quantile map is the identity, so both
    methods read the same order statistics from a shared sample."""
    fit = mle_unconstrained(X)
    sample = bootstrap_distribution(
        "pi_hat", fit.p_hat, X.sizes, None, B=4001, seed=RngSeed(123)
    )
    zero = BcaConstants(z0=0.0, a=0.0)
    for beta in (0.025, 0.5, 0.975):
        mapped, note = adjusted_level(beta, zero)
        assert mapped == beta
        assert note is None
        assert empirical_quantile(sample.values, mapped) == \
            empirical_quantile(sample.values, beta)
    # and with a real bias constant the map moves
    mapped, _ = adjusted_level(0.025, BcaConstants(z0=0.2, a=0.0))
    assert mapped != 0.025


def test_criterion_08g_determinism_across_runs_and_workers():
    """Identical seeds give byte-identical reports and float-identical
    intervals, for one worker and for several."""
    base = dict(
        x=X, methods=("delta", "pb", "inv-asym"),
        statistics=("pi_tilde_c",), replicates=300, b_replicates=500,
        seed=7, length_reps=3,
    )
    first = emit_report(run_coverage(ExperimentConfig(**base)), "csv")
    second = emit_report(run_coverage(ExperimentConfig(**base)), "csv")
    assert first == second
    parallel = emit_report(
        run_coverage(ExperimentConfig(**base, workers=3)), "csv"
    )
    assert parallel == first

    a = percentile_interval(X, 0.05, B=5000, seed=RngSeed(3))
    b = percentile_interval(X, 0.05, B=5000, seed=RngSeed(3))
    assert (a.lower, a.upper) == (b.lower, b.upper)
    a = bca_interval(X, 0.05, B=5000, seed=RngSeed(3))
    b = bca_interval(X, 0.05, B=5000, seed=RngSeed(3))
    assert (a.lower, a.upper) == (b.lower, b.upper)
    cfg = InversionConfig(b_replicates=1500, seed=RngSeed(3), scan="bracket")
    a = invert("pi_hat", "bootstrap", X, 0.05, cfg).interval
    b = invert("pi_hat", "bootstrap", X, 0.05, cfg).interval
    assert (a.lower, a.upper) == (b.lower, b.upper)
    a = exact_interval(X, 0.05, 1e-3).interval
    b = exact_interval(X, 0.05, 1e-3).interval
    assert (a.lower, a.upper) == (b.lower, b.upper)
