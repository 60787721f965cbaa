"""Wald (delta method), Clopper-Pearson, and projection intervals.

The delta interval linearizes the prevalence map pi(p) at the MLE:

    V(p) = s1^2/(p3-p2)^2 + (p1-p3)^2 s2^2/(p3-p2)^4
         + (p2-p1)^2 s3^2/(p3-p2)^4,      s_i^2 = p_i(1-p_i)/n_i,

and reports pi_hat +/- z_{1-alpha/2} sqrt(V(p_hat)) clamped to [0,1].

The projection interval combines three exact Clopper-Pearson intervals,
each at level (1-alpha)^(1/3), through the monotonicity of pi: increasing
in p1, decreasing in p2 and p3 on the ordered region.  Its coverage is at
least 1-alpha in finite samples, at the price of extra width.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .model import ParamPoint, SampleSizes, SurveyCounts, binomial_cdf, prevalence_of
from .estimate import mle_unconstrained

__all__ = [
    "IntervalResult",
    "DeltaVariance",
    "delta_variance",
    "delta_interval",
    "clopper_pearson",
    "projection_interval",
]


@dataclass(frozen=True)
class IntervalResult:
    """A confidence interval with its nominal level and provenance.

    Prevalence intervals live on [0, 1], the default support.  Intervals
    for other functionals (a difference of proportions, an odds ratio)
    override `support` with their own range, which may be unbounded.
    """

    lower: float
    upper: float
    level: float
    method: str
    diagnostics: tuple = ()
    support: tuple = (0.0, 1.0)

    def __post_init__(self):
        if not self.support[0] <= self.lower <= self.upper <= self.support[1]:
            raise ValueError(
                f"invalid interval [{self.lower}, {self.upper}] for {self.method}"
            )
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level={self.level} outside (0, 1)")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class DeltaVariance:
    """Asymptotic variance of pi_hat with its three per-sample summands."""

    value: float
    components: tuple

    def __post_init__(self):
        if self.value < 0.0 or any(c < 0.0 for c in self.components):
            raise ValueError("variance terms must be nonnegative")


def delta_variance(p, sizes: SampleSizes) -> DeltaVariance:
    """Delta-method variance of pi_hat at p; rejects the p2 = p3 boundary."""
    arr = p.as_array() if isinstance(p, ParamPoint) else np.asarray(p, dtype=float)
    p1, p2, p3 = arr
    if not (0.0 <= p2 <= p1 <= p3 <= 1.0) or p2 == p3:
        raise ValueError(f"({p1}, {p2}, {p3}) is not in Omega")
    comps = delta_variance_array(arr[None, :], sizes.as_array())[1]
    c1, c2, c3 = (float(v) for v in comps[0])
    return DeltaVariance(value=c1 + c2 + c3, components=(c1, c2, c3))


def delta_variance_array(ps, ns):
    """Vectorized variance: ps (m,3) -> (values (m,), components (m,3))."""
    ps = np.asarray(ps, dtype=float)
    ns = np.asarray(ns, dtype=float)
    s2 = ps * (1.0 - ps) / ns
    den = ps[:, 2] - ps[:, 1]
    comps = np.stack(
        [
            s2[:, 0] / den**2,
            (ps[:, 0] - ps[:, 2]) ** 2 * s2[:, 1] / den**4,
            (ps[:, 1] - ps[:, 0]) ** 2 * s2[:, 2] / den**4,
        ],
        axis=1,
    )
    return comps.sum(axis=1), comps


def delta_interval(x: SurveyCounts, alpha: float) -> IntervalResult:
    """Wald interval pi_hat +/- z sqrt(V(p_hat)), clamped to [0, 1].

    Raises when the MLE pools all three components (prevalence undefined);
    a pooled-pair MLE is usable and only noted in the diagnostics.
    """
    _check_alpha(alpha)
    res = mle_unconstrained(x)
    if res.p_hat.degenerate:
        raise ValueError("prevalence undefined: the MLE has p2 = p3")
    notes = []
    if res.case_tag != "interior":
        notes.append(f"mle not interior ({res.case_tag})")
    pi_hat = prevalence_of(res.p_hat)
    v = delta_variance(res.p_hat, x.sizes)
    half = ndtri(1.0 - alpha / 2.0) * np.sqrt(v.value)
    lo_raw, hi_raw = pi_hat - half, pi_hat + half
    if lo_raw <= 0.0:
        notes.append("lower endpoint clamped to 0")
    if hi_raw >= 1.0:
        notes.append("upper endpoint clamped to 1")
    return IntervalResult(
        lower=float(max(lo_raw, 0.0)),
        upper=float(min(hi_raw, 1.0)),
        level=1.0 - alpha,
        method="delta",
        diagnostics=tuple(notes),
    )


def clopper_pearson(x: int, n: int, level: float, side: str = "two-sided") -> IntervalResult:
    """Exact binomial confidence interval for a single proportion.

    Two-sided: [pL, pU] with pL solving P{X >= x} = (1-level)/2 (pL = 0 at
    x = 0) and pU solving P{X <= x} = (1-level)/2 (pU = 1 at x = n).  The
    one-sided variants put the whole 1-level mass on the named side.
    Endpoints are found by bisection on the binomial cdf to 1e-12.
    """
    if not 0 <= x <= n:
        raise ValueError(f"x={x} outside [0, n={n}]")
    _check_alpha(1.0 - level)
    if side == "two-sided":
        tail = (1.0 - level) / 2.0
        lo, hi = _cp_lower(x, n, tail), _cp_upper(x, n, tail)
    elif side == "lower":
        lo, hi = _cp_lower(x, n, 1.0 - level), 1.0
    elif side == "upper":
        lo, hi = 0.0, _cp_upper(x, n, 1.0 - level)
    else:
        raise ValueError(f"unknown side {side!r}")
    return IntervalResult(lower=lo, upper=hi, level=level, method="clopper-pearson")


def _cp_lower(x, n, tail):
    if x == 0:
        return 0.0
    # P{X >= x} = tail  <=>  P{X <= x-1} = 1 - tail; cdf decreases in p
    return _bisect_cdf(lambda p: binomial_cdf(n, p, x, strict=True), 1.0 - tail)


def _cp_upper(x, n, tail):
    if x == n:
        return 1.0
    return _bisect_cdf(lambda p: binomial_cdf(n, p, x), tail)


def _bisect_cdf(f, target, iters: int = 52):
    lo, hi = 0.0, 1.0  # f(lo) >= target >= f(hi), f decreasing
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) >= target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def projection_interval(x: SurveyCounts, alpha: float) -> IntervalResult:
    """Projection of a joint exact confidence box through the prevalence map.

    Componentwise Clopper-Pearson intervals I_i at level (1-alpha)^(1/3)
    give a joint box of simultaneous level 1-alpha; pi's monotonicity puts
    its image's extremes at two opposite corners.  Corners falling outside
    the ordered region evaluate to the clamped endpoint with a note.
    """
    _check_alpha(alpha)
    gamma = 1.0 - (1.0 - alpha) ** (1.0 / 3.0)
    lvl = 1.0 - gamma
    n = x.sizes
    i1 = clopper_pearson(x.x1, n.n1, lvl)
    i2 = clopper_pearson(x.x2, n.n2, lvl)
    i3 = clopper_pearson(x.x3, n.n3, lvl)
    lower, notes_lo = _corner_pi(i1.lower, i2.upper, i3.upper, "lower")
    upper, notes_hi = _corner_pi(i1.upper, i2.lower, i3.lower, "upper")
    notes = list(notes_lo) + list(notes_hi)
    if lower > upper:  # clamped corners can cross in degenerate geometries
        lower, upper = upper, lower
        notes.append("corner evaluations crossed; endpoints swapped")
    return IntervalResult(
        lower=lower,
        upper=upper,
        level=1.0 - alpha,
        method="projection",
        diagnostics=tuple(notes),
    )


def _corner_pi(a, b, c, which):
    """Evaluate pi at a box corner (p1, p2, p3) = (a, b, c), clamped."""
    den = c - b
    if den <= 0.0:
        val = 0.0 if which == "lower" else 1.0
        return val, (f"{which} corner has p3 <= p2; conservative endpoint used",)
    raw = (a - b) / den
    if raw < 0.0 or raw > 1.0:
        return min(max(raw, 0.0), 1.0), (f"{which} corner outside the ordered region; clamped",)
    return raw, ()


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha={alpha} outside (0, 1)")
