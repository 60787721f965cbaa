"""Test statistics for the pointwise null hypothesis pi = pi0.

Nine statistics, all oriented (except W) so that larger values indicate
evidence of prevalence above pi0:

    pi_hat       pi(p_hat), the MLE plug-in
    pi_tilde     (pi_hat - pi0) / sqrt(V(p_hat))           (delta variance)
    pi_tilde_c   (pi_hat - pi0) / sqrt(V(p_hat(pi0)))      (null-restricted)
    phi_hat      b(pi0)' p_check, a linear statistic in the counts
    phi_tilde    phi_hat / sqrt(Vphi(p_hat, pi0))
    phi_tilde_c  phi_hat / sqrt(Vphi(p_hat(pi0), pi0))
    w            2 [logL(p_hat) - logL(p_hat(pi0))], two-sided
    r            sign(pi_hat - pi0) sqrt(w), the signed root
    r_tilde      (r - m) / sqrt(V), m and V bootstrap moments of r under
                 p_hat(pi0)

phi_hat uses the empirical frequencies p_check = x/n, making it strictly
increasing in x1 and strictly decreasing in x2 and x3 for pi0 in (0,1);
the linear form has the exact variance

    Vphi(p, pi0) = s1^2 + (1-pi0)^2 s2^2 + pi0^2 s3^2,  s_i^2 = p_i(1-p_i)/n_i.
"""

from dataclasses import dataclass

import numpy as np

from .estimate import (
    log_likelihood_array,
    mle_constrained,
    mle_constrained_array,
    mle_unconstrained_array,
)
from .intervals import delta_variance_array
from .model import RngSeed, SampleSizes, SurveyCounts, b_vector, sample_counts_array

__all__ = [
    "StatisticKind",
    "StatValue",
    "KINDS",
    "kind_of",
    "phi_variance",
    "evaluate_statistic",
    "evaluate_statistic_array",
]


@dataclass(frozen=True)
class StatisticKind:
    """A statistic tag plus its orientation.

    `signed` means larger values indicate larger prevalence; w is the lone
    two-sided statistic (large values reject in both directions).
    """

    tag: str
    signed: bool


KINDS = {
    k.tag: k
    for k in (
        StatisticKind("pi_hat", True),
        StatisticKind("pi_tilde", True),
        StatisticKind("pi_tilde_c", True),
        StatisticKind("phi_hat", True),
        StatisticKind("phi_tilde", True),
        StatisticKind("phi_tilde_c", True),
        StatisticKind("w", False),
        StatisticKind("r", True),
        StatisticKind("r_tilde", True),
    )
}


def kind_of(kind) -> StatisticKind:
    if isinstance(kind, StatisticKind):
        return kind
    tag = str(kind).lower()
    if tag not in KINDS:
        raise ValueError(f"unknown statistic {kind!r}; choose from {sorted(KINDS)}")
    return KINDS[tag]


@dataclass(frozen=True)
class StatValue:
    """A statistic evaluation; `defined` is False on degenerate denominators."""

    value: float
    defined: bool
    aux: dict = None


def phi_variance(p, sizes: SampleSizes, pi0: float) -> float:
    """Exact variance of the linear statistic b(pi0)' p_check under p."""
    arr = np.asarray(p.as_array() if hasattr(p, "as_array") else p, dtype=float)
    if np.any((arr < 0.0) | (arr > 1.0)):
        raise ValueError(f"components of {arr} outside [0, 1]")
    if not 0.0 <= pi0 <= 1.0:
        raise ValueError(f"pi0={pi0} outside [0, 1]")
    return float(phi_variance_array(arr[None, :], sizes.as_array(), pi0)[0])


def phi_variance_array(ps, ns, pi0):
    ps = np.asarray(ps, dtype=float)
    s2 = ps * (1.0 - ps) / np.asarray(ns, dtype=float)
    return s2[:, 0] + (1.0 - pi0) ** 2 * s2[:, 1] + pi0**2 * s2[:, 2]


def evaluate_statistic(kind, x: SurveyCounts, pi0: float, boot_cfg=None) -> StatValue:
    """Evaluate one test statistic at (x, pi0).

    boot_cfg, required for r_tilde only, is a pair (B, RngSeed) controlling
    the bootstrap that recenters and rescales the signed root.
    """
    kind = kind_of(kind)
    if not 0.0 <= pi0 <= 1.0:
        raise ValueError(f"pi0={pi0} outside [0, 1]")
    xs = x.as_array()[None, :]
    ns = x.sizes.as_array()

    if kind.tag == "r_tilde":
        if boot_cfg is None:
            raise ValueError("r_tilde requires boot_cfg=(B, RngSeed)")
        B, seed = boot_cfg
        if not isinstance(seed, RngSeed):
            raise ValueError("boot_cfg seed must be an RngSeed")
        t0, t0_def = evaluate_statistic_array("r", xs, ns, pi0)
        cons = mle_constrained(x, pi0)
        draws = sample_counts_array(
            cons.p_hat.as_array(), x.sizes, seed.generator(), int(B)
        )
        rstar, _ = evaluate_statistic_array("r", draws, ns, pi0)
        m = float(rstar.mean())
        v = float(rstar.var(ddof=1)) if B > 1 else 0.0
        aux = {"constrained_mle": cons.p_hat, "boot_mean": m, "boot_var": v}
        if not (t0_def[0] and v > 0.0):
            return StatValue(value=float("nan"), defined=False, aux=aux)
        return StatValue(value=float((t0[0] - m) / np.sqrt(v)), defined=True, aux=aux)

    vals, defined = evaluate_statistic_array(kind, xs, ns, pi0)
    aux = None
    if kind.tag in ("pi_tilde_c", "phi_tilde_c", "w", "r"):
        cons = mle_constrained_array(xs, ns, pi0)
        aux = {"constrained_mle": tuple(float(v) for v in cons[0])}
    return StatValue(value=float(vals[0]), defined=bool(defined[0]), aux=aux)


def evaluate_statistic_array(kind, xs, ns, pi0):
    """Vectorized evaluation over count rows.

    Parameters
    ----------
    kind : StatisticKind or tag
    xs : (m, 3) counts
    ns : (3,) sizes
    pi0 : null prevalence

    Returns
    -------
    values : (m,) float (nan where undefined)
    defined : (m,) bool

    r_tilde is excluded: its bootstrap recentering is per-row work; use
    evaluate_statistic for it.
    """
    kind = kind_of(kind)
    xs = np.asarray(xs, dtype=float)
    ns = np.asarray(ns, dtype=float)
    tag = kind.tag

    if tag == "r_tilde":
        raise ValueError("r_tilde is not vectorizable here; use evaluate_statistic")

    if tag == "phi_hat":
        vals = (xs / ns) @ b_vector(pi0)
        return vals, np.ones(len(xs), dtype=bool)

    # bootstrap batches at small n repeat the same few count triples many
    # times over; solving each distinct row once is bit-identical because
    # every kind is computed row-independently
    if len(xs) > 256:
        uniq, inv = np.unique(xs, axis=0, return_inverse=True)
        if len(uniq) <= 0.6 * len(xs):
            vals, defined = evaluate_statistic_array(kind, uniq, ns, pi0)
            return vals[inv], defined[inv]

    fits, _ = mle_unconstrained_array(xs, ns)
    deg = fits[:, 1] == fits[:, 2]

    with np.errstate(divide="ignore", invalid="ignore"):
        if tag == "pi_hat":
            vals = (fits[:, 0] - fits[:, 1]) / (fits[:, 2] - fits[:, 1])
            return np.where(deg, np.nan, vals), ~deg

        if tag == "pi_tilde":
            pi = (fits[:, 0] - fits[:, 1]) / (fits[:, 2] - fits[:, 1])
            v, _ = delta_variance_array(fits, ns)
            ok = ~deg & np.isfinite(v) & (v > 0.0)
            vals = np.where(ok, (pi - pi0) / np.sqrt(v), np.nan)
            return vals, ok

        if tag == "phi_tilde":
            v = phi_variance_array(fits, ns, pi0)
            ok = v > 0.0
            vals = np.where(ok, ((xs / ns) @ b_vector(pi0)) / np.sqrt(v), np.nan)
            return vals, ok

        cons = mle_constrained_array(xs, ns, pi0)

        if tag == "pi_tilde_c":
            pi = (fits[:, 0] - fits[:, 1]) / (fits[:, 2] - fits[:, 1])
            v, _ = delta_variance_array(cons, ns)
            ok = ~deg & (cons[:, 1] < cons[:, 2]) & np.isfinite(v) & (v > 0.0)
            vals = np.where(ok, (pi - pi0) / np.sqrt(v), np.nan)
            return vals, ok

        if tag == "phi_tilde_c":
            v = phi_variance_array(cons, ns, pi0)
            ok = v > 0.0
            vals = np.where(ok, ((xs / ns) @ b_vector(pi0)) / np.sqrt(v), np.nan)
            return vals, ok

        ll_u = log_likelihood_array(fits, xs, ns, include_const=False)
        ll_c = log_likelihood_array(cons, xs, ns, include_const=False)
        w = np.maximum(2.0 * (ll_u - ll_c), 0.0)

        if tag == "w":
            return w, np.ones(len(xs), dtype=bool)

        # r: the sign of pi_hat - pi0 extends continuously through pooled
        # fits via b(pi0)' p_hat = (p3 - p2)(pi_hat - pi0)
        sign = np.sign(fits @ b_vector(pi0))
        return sign * np.sqrt(w), np.ones(len(xs), dtype=bool)
