"""Parametric bootstrap: replicate distributions, percentile and BCa intervals.

Replicates are drawn from the fitted three-sample binomial model and the
chosen statistic is evaluated on each draw.  Quantiles use the inverse
empirical cdf (order statistic ceil(q*B)), which is exact for the discrete
bootstrap distribution.  The BCa interval adjusts the percentile levels with
a bias constant z0 (from the bootstrap cdf at the observed statistic) and an
acceleration constant a (closed form in the per-sample Fisher information).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .estimate import mle_unconstrained
from .intervals import IntervalResult, _check_alpha
from .model import ParamPoint, RngSeed, SampleSizes, SurveyCounts, sample_counts_array
from .stats import evaluate_statistic, evaluate_statistic_array, kind_of

# Value recorded for replicates whose statistic is undefined (the ordered
# fit has p2 = p3, so the prevalence scale collapses).  Zero ranks such
# replicates least extreme: quantiles of pi_hat stay in [0, 1] and signed
# test statistics never reject on account of an undefined replicate.
UNDEFINED_SENTINEL = 0.0


@dataclass(frozen=True)
class BootstrapSample:
    """Statistic values over B parametric replicates, regenerable from seed."""

    values: np.ndarray
    n_replicates: int
    seed: RngSeed
    p: ParamPoint
    kind_tag: str
    pi0: float | None = None
    n_undefined: int = 0

    def __post_init__(self):
        if len(self.values) != self.n_replicates:
            raise ValueError(
                f"got {len(self.values)} values for B={self.n_replicates}"
            )
        self.values.setflags(write=False)


@dataclass(frozen=True)
class BcaConstants:
    """Bias correction z0 and acceleration a for the BCa quantile map."""

    z0: float
    a: float

    def __post_init__(self):
        if not (math.isfinite(self.z0) and math.isfinite(self.a)):
            raise ValueError(f"non-finite BCa constants z0={self.z0}, a={self.a}")


def bootstrap_distribution(
    stat,
    p,
    sizes: SampleSizes,
    pi0: float | None = None,
    B: int = 100_000,
    seed: RngSeed = RngSeed(0),
    inner_b: int = 200,
) -> BootstrapSample:
    """Draw B replicates from the model at p and evaluate `stat` on each.

    `pi0` is required for every statistic except the plug-in estimate.
    `r_tilde` nests an inner bootstrap of size `inner_b` per replicate
    (stream `seed.child(1, i)` for replicate i) and is far more expensive
    than the vectorized kinds; `inner_b` is ignored otherwise.
    """
    kind = kind_of(stat)
    if B < 1:
        raise ValueError(f"B={B} must be at least 1")
    if not isinstance(seed, RngSeed):
        raise ValueError("seed must be an RngSeed")
    if kind.tag != "pi_hat" and pi0 is None:
        raise ValueError(f"statistic {kind.tag} requires pi0")

    point = p if isinstance(p, ParamPoint) else ParamPoint(*p)
    draws = sample_counts_array(point, sizes, seed.generator(), B)

    if kind.tag == "r_tilde":
        inner_seed = seed.child(1)
        values = np.empty(B)
        defined = np.empty(B, dtype=bool)
        for i, row in enumerate(draws):
            x = SurveyCounts(int(row[0]), int(row[1]), int(row[2]), sizes)
            sv = evaluate_statistic(
                kind, x, pi0, boot_cfg=(inner_b, inner_seed.child(i))
            )
            values[i] = sv.value if sv.defined else np.nan
            defined[i] = sv.defined
    else:
        values, defined = evaluate_statistic_array(
            kind, draws, sizes.as_array(), 0.0 if pi0 is None else pi0
        )

    n_bad = int(np.count_nonzero(~defined))
    if n_bad:
        values = np.where(defined, values, UNDEFINED_SENTINEL)
    return BootstrapSample(
        values=values,
        n_replicates=B,
        seed=seed,
        p=point,
        kind_tag=kind.tag,
        pi0=pi0,
        n_undefined=n_bad,
    )


def empirical_quantile(values, q: float) -> float:
    """Order statistic ceil(q*B) of `values` (inverse empirical cdf)."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level q={q} outside (0, 1)")
    ordered = np.sort(np.asarray(values, dtype=float))
    b = len(ordered)
    # guard against float noise in q*B when the product is a whole number
    m = min(max(int(math.ceil(q * b - 1e-9)), 1), b)
    return float(ordered[m - 1])


def percentile_interval(
    x: SurveyCounts, alpha: float, B: int = 100_000, seed: RngSeed = RngSeed(0)
) -> IntervalResult:
    """Equal-tailed percentile bootstrap interval for the prevalence."""
    _check_alpha(alpha)
    sample = _pi_hat_sample(x, B, seed)
    ordered = np.sort(sample.values)
    notes = _undefined_note(sample)
    return IntervalResult(
        lower=empirical_quantile(ordered, alpha / 2.0),
        upper=empirical_quantile(ordered, 1.0 - alpha / 2.0),
        level=1.0 - alpha,
        method="percentile-bootstrap",
        diagnostics=tuple(notes),
    )


def bca_constants(x: SurveyCounts, sample: BootstrapSample) -> BcaConstants:
    """Bias and acceleration constants for the sample generated at p_hat(x)."""
    t_obs = _observed_pi_hat(x)
    b = sample.n_replicates
    prop = np.count_nonzero(sample.values <= t_obs) / b
    prop = min(max(prop, 1.0 / (b + 1)), b / (b + 1))
    z0 = float(ndtri(prop))

    freqs = x.frequencies()
    return BcaConstants(z0=z0, a=_acceleration(freqs, x.sizes.as_array()))


def _acceleration(freqs, ns) -> float:
    """Closed-form a_hat at the empirical frequencies.

    a = sum(lam_i mu_i^3) / (6 (sum(lam_i mu_i^2))^(3/2)) with
    lam_i = n_i / (p_i (1 - p_i)) the per-sample information and
    mu_i = theta_i / lam_i the information-weighted prevalence gradient.

    Components at 0 or 1 carry infinite information and drop out of both
    sums; a tied (p2, p3) pair leaves no prevalence gradient, so a = 0 and
    the interval falls back toward the percentile one.
    """
    p1, p2, p3 = (float(v) for v in freqs)
    den = p3 - p2
    if den == 0.0:
        return 0.0
    theta = np.array([1.0 / den, (p1 - p3) / den**2, (p2 - p1) / den**2])

    num_sum = 0.0
    den_sum = 0.0
    for theta_i, p_i, n_i in zip(theta, (p1, p2, p3), ns):
        if p_i <= 0.0 or p_i >= 1.0:
            continue
        lam = n_i / (p_i * (1.0 - p_i))
        mu = theta_i / lam
        num_sum += lam * mu**3
        den_sum += lam * mu**2
    if den_sum <= 0.0:
        return 0.0
    return float(num_sum / (6.0 * den_sum**1.5))


def bca_interval(
    x: SurveyCounts, alpha: float, B: int = 100_000, seed: RngSeed = RngSeed(0)
) -> IntervalResult:
    """Accelerated bias-corrected bootstrap interval for the prevalence."""
    _check_alpha(alpha)
    sample = _pi_hat_sample(x, B, seed)
    constants = bca_constants(x, sample)
    ordered = np.sort(sample.values)
    notes = _undefined_note(sample)

    endpoints = []
    for q in (alpha / 2.0, 1.0 - alpha / 2.0):
        q_adj, note = adjusted_level(q, constants)
        if note:
            notes.append(note)
        endpoints.append(empirical_quantile(ordered, q_adj))
    lo, hi = endpoints
    if lo > hi:
        lo, hi = hi, lo
        notes.append("adjusted quantile levels crossed; endpoints swapped")
    return IntervalResult(
        lower=lo,
        upper=hi,
        level=1.0 - alpha,
        method="bca-bootstrap",
        diagnostics=tuple(notes),
    )


def adjusted_level(q: float, constants: BcaConstants):
    """Map a nominal quantile level through the BCa correction.

    Returns (level, note); the note flags the percentile fallback taken
    when the acceleration denominator is not positive.
    """
    if constants.z0 == 0.0 and constants.a == 0.0:
        return q, None
    z = constants.z0 + float(ndtri(q))
    denom = 1.0 - constants.a * z
    if denom <= 0.0:
        return q, f"BCa denominator non-positive at level {q:g}; used percentile"
    return float(ndtr(constants.z0 + z / denom)), None


def _pi_hat_sample(x: SurveyCounts, B: int, seed: RngSeed) -> BootstrapSample:
    fit = mle_unconstrained(x)
    return bootstrap_distribution("pi_hat", fit.p_hat, x.sizes, None, B, seed)


def _observed_pi_hat(x: SurveyCounts) -> float:
    sv = evaluate_statistic("pi_hat", x, 0.0)
    return sv.value if sv.defined else UNDEFINED_SENTINEL


def _undefined_note(sample: BootstrapSample):
    if sample.n_undefined:
        return [
            f"{sample.n_undefined} of {sample.n_replicates} replicates "
            f"undefined; recorded as {UNDEFINED_SENTINEL}"
        ]
    return []
