"""Test inversion: p-values at each null prevalence, then an interval.

Each candidate null value pi0 gets a pair of directional p-values, from a
normal or chi-square reference distribution or from a parametric bootstrap
of the statistic at the constrained fit.  The interval is the convex hull
of {pi0 : both p-values >= alpha/2}; the likelihood-ratio statistic W is
inverted as a single two-sided test (accept iff p >= alpha) because large
values carry evidence in both directions at once.

With the bootstrap method every pi0 reuses the same seed, so the scan sees
a deterministic function of pi0 (common random numbers); results cannot
depend on evaluation order.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import chdtrc, ndtr

from .bootstrap import bootstrap_distribution
from .estimate import mle_constrained
from .intervals import IntervalResult, _check_alpha
from .model import RngSeed, SurveyCounts
from .stats import evaluate_statistic, kind_of

# kinds with a usable large-sample reference distribution
ASYMPTOTIC_KINDS = ("pi_tilde_c", "phi_tilde_c", "r_tilde", "w")


@dataclass(frozen=True)
class PValuePair:
    """Directional p-values at one null prevalence.

    q_lower is evidence against values above pi0 (1 - F at t0 from the
    left), q_upper is F(t0).  For distribution-based pairs the two sum to
    at least 1; the chi-square convention for W repeats the single
    two-sided tail in both slots, which can sum below 1.
    """

    q_lower: float
    q_upper: float
    method: str
    pi0: float
    diagnostics: tuple = ()

    def __post_init__(self):
        for name in ("q_lower", "q_upper"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


@dataclass(frozen=True)
class InversionConfig:
    """Tuning for invert(): replication counts, seed, and scan control."""

    b_replicates: int = 10_000
    seed: RngSeed = field(default_factory=lambda: RngSeed(0))
    resolution: float = 1e-3
    refine_tol: float = 1e-5
    scan: str = "full"
    bracket_tol: float = 1e-4
    inner_b: int = 200

    def __post_init__(self):
        if self.scan not in ("full", "bracket"):
            raise ValueError(f"scan={self.scan!r} not in {{'full', 'bracket'}}")
        if not 0.0 < self.resolution <= 0.5:
            raise ValueError(f"resolution={self.resolution} outside (0, 0.5]")


@dataclass(frozen=True)
class InversionResult:
    """Hull of the acceptance region plus how trustworthy its shape is."""

    interval: IntervalResult
    rejection_set_convex: bool
    scan_resolution: float
    n_evaluations: int = 0


def p_values_asymptotic(
    kind, x: SurveyCounts, pi0: float, boot_cfg=None
) -> PValuePair:
    """Normal-calibrated p-values (chi-square for W) at pi0.

    `boot_cfg=(B, RngSeed)` is required for the recentered root, whose
    statistic itself is bootstrap-standardized before the normal reference
    is applied.
    """
    kind = kind_of(kind)
    if kind.tag not in ASYMPTOTIC_KINDS:
        raise ValueError(
            f"no asymptotic calibration for {kind.tag}; "
            f"choose from {ASYMPTOTIC_KINDS}"
        )
    sv = evaluate_statistic(kind, x, pi0, boot_cfg=boot_cfg)
    if not sv.defined:
        return PValuePair(
            1.0, 1.0, "asymptotic", pi0,
            diagnostics=(f"statistic {kind.tag} undefined at pi0={pi0:g}",),
        )
    if kind.tag == "w":
        p = float(chdtrc(1.0, sv.value))
        return PValuePair(p, p, "asymptotic", pi0)
    return PValuePair(
        float(ndtr(-sv.value)), float(ndtr(sv.value)), "asymptotic", pi0
    )


def p_values_bootstrap(
    kind,
    x: SurveyCounts,
    pi0: float,
    B: int = 10_000,
    seed: RngSeed = RngSeed(0),
    inner_b: int = 200,
    boot_cfg=None,
) -> PValuePair:
    """Monte Carlo p-values from B draws of the statistic under p_hat(pi0).

    Counts use the +1/(B+1) correction, so each tail is a valid p-value
    under the bootstrap law and never falls below 1/(B+1).
    """
    kind = kind_of(kind)
    if B < 1:
        raise ValueError(f"B={B} must be at least 1")
    if kind.tag == "r_tilde" and boot_cfg is None:
        boot_cfg = (inner_b, seed.child(2))
    sv = evaluate_statistic(kind, x, pi0, boot_cfg=boot_cfg)
    if not sv.defined:
        return PValuePair(
            1.0, 1.0, "bootstrap", pi0,
            diagnostics=(f"statistic {kind.tag} undefined at pi0={pi0:g}",),
        )
    cons = mle_constrained(x, pi0)
    sample = bootstrap_distribution(
        kind, cons.p_hat, x.sizes, pi0, B, seed, inner_b=inner_b
    )
    t0 = sv.value
    q_lower = (1.0 + np.count_nonzero(sample.values >= t0)) / (B + 1.0)
    q_upper = (1.0 + np.count_nonzero(sample.values <= t0)) / (B + 1.0)
    notes = ()
    if sample.n_undefined:
        notes = (
            f"{sample.n_undefined} of {B} null replicates undefined",
        )
    return PValuePair(q_lower, q_upper, "bootstrap", pi0, diagnostics=notes)


def invert(
    kind, method: str, x: SurveyCounts, alpha: float, cfg: InversionConfig = None
) -> InversionResult:
    """Confidence interval as the hull of non-rejected null prevalences.

    scan="full" walks a grid of spacing cfg.resolution and refines each
    boundary by bisection to cfg.refine_tol; scan="bracket" assumes the
    acceptance set is an interval around the best-supported point and
    bisects outward from it (falling back to the full scan if that point
    is itself rejected).
    """
    kind = kind_of(kind)
    _check_alpha(alpha)
    if method not in ("asymptotic", "bootstrap"):
        raise ValueError(f"method={method!r} not in {{'asymptotic', 'bootstrap'}}")
    if cfg is None:
        cfg = InversionConfig()
    cache = {}

    def pair(pi0: float) -> PValuePair:
        if pi0 not in cache:
            if method == "asymptotic":
                boot_cfg = (
                    (cfg.inner_b, cfg.seed.child(3))
                    if kind.tag == "r_tilde"
                    else None
                )
                cache[pi0] = p_values_asymptotic(kind, x, pi0, boot_cfg=boot_cfg)
            else:
                cache[pi0] = p_values_bootstrap(
                    kind, x, pi0, B=cfg.b_replicates, seed=cfg.seed,
                    inner_b=cfg.inner_b,
                )
        return cache[pi0]

    def score(pi0: float) -> float:
        q = pair(pi0)
        if kind.tag == "w":
            return q.q_lower
        return min(q.q_lower, q.q_upper)

    threshold = alpha if kind.tag == "w" else alpha / 2.0

    def accept(pi0: float) -> bool:
        return score(pi0) >= threshold

    method_name = f"inversion-{method}"
    return _run_inversion(
        accept, score, x, alpha, cfg, method_name, lambda: len(cache)
    )


def _run_inversion(
    accept, score, x, alpha, cfg, method_name, n_evals
) -> InversionResult:
    """Shared inversion driver: bracket attempt, then full grid scan.

    `accept` and `score` are functions of pi0; `n_evals` reports how many
    distinct pi0 values were actually computed (for the result metadata).
    """
    if cfg.scan == "bracket":
        got = _bracket_scan(accept, x, alpha, cfg, method_name)
        if got is not None:
            return InversionResult(
                interval=got,
                rejection_set_convex=True,
                scan_resolution=cfg.bracket_tol,
                n_evaluations=n_evals(),
            )

    grid = np.linspace(0.0, 1.0, int(round(1.0 / cfg.resolution)) + 1)
    flags = np.fromiter((accept(float(v)) for v in grid), dtype=bool,
                        count=len(grid))
    if not flags.any():
        best = float(grid[int(np.argmax([score(float(v)) for v in grid]))])
        interval = IntervalResult(
            lower=best, upper=best, level=1.0 - alpha, method=method_name,
            diagnostics=(
                f"empty acceptance set at alpha={alpha:g}; "
                f"degenerate interval at the best-supported point",
            ),
        )
        return InversionResult(
            interval=interval,
            rejection_set_convex=True,
            scan_resolution=cfg.resolution,
            n_evaluations=n_evals(),
        )

    idx = np.flatnonzero(flags)
    convex = bool(np.all(np.diff(idx) == 1))
    lo_i, hi_i = int(idx[0]), int(idx[-1])
    if lo_i == 0:
        lower = 0.0
    else:
        lower = _bisect_boundary(
            accept, float(grid[lo_i - 1]), float(grid[lo_i]),
            cfg.refine_tol, accepted="hi",
        )
    if hi_i == len(grid) - 1:
        upper = 1.0
    else:
        upper = _bisect_boundary(
            accept, float(grid[hi_i]), float(grid[hi_i + 1]),
            cfg.refine_tol, accepted="lo",
        )
    notes = () if convex else (
        "acceptance set not contiguous on the scan grid; returning its hull",
    )
    interval = IntervalResult(
        lower=lower, upper=upper, level=1.0 - alpha, method=method_name,
        diagnostics=notes,
    )
    return InversionResult(
        interval=interval,
        rejection_set_convex=convex,
        scan_resolution=cfg.resolution,
        n_evaluations=n_evals(),
    )


def _bracket_scan(accept, x, alpha, cfg, method_name):
    """Bisect outward from the plug-in estimate; None if it is rejected."""
    sv = evaluate_statistic("pi_hat", x, 0.0)
    center = sv.value if sv.defined else 0.5
    if not accept(center):
        return None
    tol = cfg.bracket_tol
    if accept(0.0):
        lower = 0.0
    else:
        lower = _bisect_boundary(accept, 0.0, center, tol, accepted="hi")
    if accept(1.0):
        upper = 1.0
    else:
        upper = _bisect_boundary(accept, center, 1.0, tol, accepted="lo")
    return IntervalResult(
        lower=lower, upper=upper, level=1.0 - alpha, method=method_name
    )


def _bisect_boundary(accept, lo, hi, tol, accepted):
    """Locate the accept/reject switch inside (lo, hi).

    `accepted` names the side known to be accepted ("lo" or "hi"); the
    bracket keeps that property while shrinking below tol.
    """
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if accept(mid) == (accepted == "hi"):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
