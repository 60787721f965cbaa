"""Finite-sample valid intervals by grid inversion over a nuisance box.

The test statistic at a null prevalence pi0 is the linear combination

    T = X1/n1 - (1-pi0) X2/n2 - pi0 X3/n3,

monotone increasing in X1 and decreasing in X2 and X3.  Its exact cdf at
any probability triple is a double binomial convolution, so a p-value can
be computed without simulation.  The nuisance parameter (two of the three
probabilities; the third is pinned by pi0) is confined to a product of
Clopper-Pearson intervals, that box is cut into grid cells, and each cell
is replaced by the two corner triples where T is stochastically largest
and smallest.  Maximizing the corner p-values over cells and adding gamma
(the region's miss probability) gives p-values that are valid in finite
samples, at any sample size, with no appeal to asymptotics.

Truncation of the convolution is certified: every computed cdf S comes
with the guarantee S <= true cdf <= S + eps, and eps is added to the
p-values so the validity guarantee survives the numerics.

The same machinery, with a one-dimensional nuisance region, serves
two-sample functionals (difference of proportions, relative risk
reduction, odds ratio).
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.stats import binom as _binom

from .intervals import IntervalResult, _check_alpha, clopper_pearson
from .invert import (
    InversionConfig,
    InversionResult,
    PValuePair,
    _bisect_boundary,
    _run_inversion,
)
from .model import ParamPoint, SampleSizes, SurveyCounts, binomial_cdf, binomial_pmf

__all__ = [
    "NuisanceRegion",
    "GridCell",
    "TruncatedDistribution",
    "nuisance_region",
    "grid_cells",
    "cell_extremes",
    "offset_distribution",
    "exact_statistic_cdf",
    "exact_p_values",
    "exact_interval",
    "FUNCTIONAL_KINDS",
    "functional_value",
    "functional_exact_p_values",
    "functional_exact_interval",
]

_WHICH_CHOICES = ((1, 3), (2, 3))


@dataclass(frozen=True)
class NuisanceRegion:
    """Product of two exact binomial intervals for the nuisance components.

    Each marginal interval holds its probability at level sqrt(1-gamma),
    so the rectangle covers the pair with probability at least 1-gamma.
    `which` names the two components: (1, 3) leaves p2 to be recovered
    from the null constraint, (2, 3) leaves p1.
    """

    intervals: tuple
    gamma: float
    which: tuple = (1, 3)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma={self.gamma} outside (0, 1)")
        if tuple(self.which) not in _WHICH_CHOICES:
            raise ValueError(f"which={self.which!r} not in {_WHICH_CHOICES}")
        if len(self.intervals) != 2:
            raise ValueError("a nuisance region has exactly two intervals")
        for lo, hi in self.intervals:
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"interval [{lo}, {hi}] outside [0, 1]")


@dataclass(frozen=True)
class GridCell:
    """One closed sub-rectangle of a nuisance region."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        for lo, hi in zip(self.lower, self.upper):
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"cell corner pair ({lo}, {hi}) is not ordered")


@dataclass(frozen=True)
class TruncatedDistribution:
    """A discrete distribution clipped to a finite atom list.

    `atoms` are (value, mass) pairs sorted by value; `truncation_mass` is
    the probability discarded by the clipping, so masses plus the
    truncation add back to one.  `pairs` optionally records the (x2, x3)
    count pair that generated each atom.
    """

    atoms: tuple
    truncation_mass: float
    pairs: tuple = ()

    def __post_init__(self):
        if self.truncation_mass < 0.0:
            raise ValueError("truncation_mass must be nonnegative")
        total = 0.0
        prev = -math.inf
        for value, mass in self.atoms:
            if mass <= 0.0:
                raise ValueError(f"atom mass {mass} is not positive")
            if value < prev:
                raise ValueError("atoms must be sorted by value")
            prev = value
            total += mass
        if not abs(total + self.truncation_mass - 1.0) <= 1e-12:
            raise ValueError(
                f"atom masses plus truncation sum to {total + self.truncation_mass}"
            )
        if self.pairs and len(self.pairs) != len(self.atoms):
            raise ValueError("pairs must align with atoms")


def _component_counts(x: SurveyCounts) -> dict:
    n = x.sizes
    return {1: (x.x1, n.n1), 2: (x.x2, n.n2), 3: (x.x3, n.n3)}


def nuisance_region(x: SurveyCounts, gamma: float, which=(1, 3)) -> NuisanceRegion:
    """Joint 1-gamma confidence rectangle for the two chosen components."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma={gamma} outside (0, 1)")
    which = tuple(which)
    if which not in _WHICH_CHOICES:
        raise ValueError(f"which={which!r} not in {_WHICH_CHOICES}")
    level = math.sqrt(1.0 - gamma)
    counts = _component_counts(x)
    ivs = []
    for comp in which:
        xc, nc = counts[comp]
        ci = clopper_pearson(xc, nc, level)
        ivs.append((ci.lower, ci.upper))
    return NuisanceRegion(intervals=tuple(ivs), gamma=gamma, which=which)


def grid_cells(region: NuisanceRegion, g: int) -> list:
    """The (g-1)^2 closed rectangles induced by a g x g point lattice."""
    if g < 2:
        raise ValueError(f"g={g} must be at least 2")
    (l1, u1), (l2, u2) = region.intervals
    e1 = np.linspace(l1, u1, g)
    e2 = np.linspace(l2, u2, g)
    return [
        GridCell(
            (float(e1[i]), float(e2[j])), (float(e1[i + 1]), float(e2[j + 1]))
        )
        for i in range(g - 1)
        for j in range(g - 1)
    ]


def cell_extremes(cell: GridCell, pi0: float, which=(1, 3)):
    """Bounding triples for the statistic's law over one cell.

    Returns (p_L, p_U) where T is stochastically largest at p_L and
    smallest at p_U among parameters consistent with the null prevalence
    whose nuisance pair touches the cell, or None when no such parameter
    exists.  The triples bound the cell componentwise and need not be
    ordered themselves.
    """
    if not 0.0 <= pi0 <= 1.0:
        raise ValueError(f"pi0={pi0} outside [0, 1]")
    (a_one, a_two), (b_one, b_two) = cell.lower, cell.upper
    which = tuple(which)
    if which == (1, 3):
        a1, a3, b1, b3 = a_one, a_two, b_one, b_two
        if pi0 == 1.0:
            # the null collapses to p1 = p3 and p2 roams freely below it
            if max(a1, a3) > min(b1, b3):
                return None
            p2_lo, p2_hi = 0.0, min(b1, b3)
        else:
            # p2 = (p1 - pi0 p3)/(1 - pi0) over the cell, kept inside
            # [0, p1] and [0, p3]; the sliver between those clamps is
            # exactly where the null misses the cell
            p2_lo = max(0.0, (a1 - pi0 * b3) / (1.0 - pi0))
            p2_hi = min(b1, b3, (b1 - pi0 * a3) / (1.0 - pi0))
            if p2_lo > p2_hi:
                return None
        return (b1, p2_lo, a3), (a1, p2_hi, b3)
    if which == (2, 3):
        a2, a3, b2, b3 = a_one, a_two, b_one, b_two
        if a2 > b3:
            return None
        p1_lo = (1.0 - pi0) * a2 + pi0 * max(a3, a2)
        p1_hi = (1.0 - pi0) * min(b2, b3) + pi0 * b3
        return (p1_hi, a2, a3), (p1_lo, b2, b3)
    raise ValueError(f"which={which!r} not in {_WHICH_CHOICES}")


@lru_cache(maxsize=65536)
def _support_window(n: int, p: float, tail: float):
    """Smallest count window leaving at most tail/2 outside on each side."""
    if p <= 0.0:
        return 0, 0
    if p >= 1.0:
        return n, n
    lo = int(_binom.ppf(tail / 2.0, n, p))
    hi = int(_binom.ppf(1.0 - tail / 2.0, n, p))
    return max(lo, 0), min(hi, n)


@lru_cache(maxsize=4096)
def _window_pmf(n: int, p: float, tail: float):
    lo, hi = _support_window(n, p, tail)
    pm = np.asarray(binomial_pmf(n, p, np.arange(lo, hi + 1)), dtype=float)
    pm = np.atleast_1d(pm)
    pm.setflags(write=False)
    return lo, pm


@lru_cache(maxsize=4096)
def _cdf_table(n: int, p: float, eps: float):
    """Cdf values on a window wide enough that clamping stays under eps/4."""
    lo, hi = _support_window(n, p, eps / 4.0)
    tab = np.asarray(binomial_cdf(n, p, np.arange(lo, hi + 1)), dtype=float)
    tab = np.atleast_1d(tab)
    tab.setflags(write=False)
    return lo, tab


def _offset_arrays(p2: float, p3: float, sizes: SampleSizes, pi0: float, eps: float):
    """Raw atoms of the (X2, X3) offset term, each component cut at eps/4."""
    lo2, pm2 = _window_pmf(sizes.n2, float(p2), eps / 4.0)
    lo3, pm3 = _window_pmf(sizes.n3, float(p3), eps / 4.0)
    x2 = np.arange(lo2, lo2 + len(pm2))
    x3 = np.arange(lo3, lo3 + len(pm3))
    c = np.add.outer((1.0 - pi0) * x2 / sizes.n2, pi0 * x3 / sizes.n3)
    mass = np.outer(pm2, pm3)
    return c.ravel(), mass.ravel(), x2, x3


def offset_distribution(
    p, sizes: SampleSizes, pi0: float, eps: float = 1e-10
) -> TruncatedDistribution:
    """The offset term -((1-pi0)X2/n2 + pi0 X3/n3), negated, as sorted atoms."""
    _, p2, p3 = _as_probability_triple(p)
    if not 0.0 <= pi0 <= 1.0:
        raise ValueError(f"pi0={pi0} outside [0, 1]")
    c, mass, x2, x3 = _offset_arrays(p2, p3, sizes, pi0, eps)
    keep = mass > 0.0
    c, mass = c[keep], mass[keep]
    flat = np.flatnonzero(keep)
    order = np.argsort(c, kind="stable")
    m = len(x3)
    atoms = tuple((float(c[i]), float(mass[i])) for i in order)
    pairs = tuple(
        (int(x2[flat[i] // m]), int(x3[flat[i] % m])) for i in order
    )
    delta = max(0.0, 1.0 - float(np.sum(mass)))
    return TruncatedDistribution(atoms=atoms, truncation_mass=delta, pairs=pairs)


def _as_probability_triple(p):
    if isinstance(p, ParamPoint):
        arr = p.as_array()
    else:
        arr = np.asarray(p, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"expected three probabilities, got shape {arr.shape}")
    for v in arr:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"probability {v} outside [0, 1]")
    return float(arr[0]), float(arr[1]), float(arr[2])


def _thresholds(t, pi0, sizes, c, x2, x3, strict):
    """Largest x1 with x1/n1 <= t + offset (or < t), per offset atom.

    Thresholds are floats except within 1e-6 of an integer, where the
    value is recomputed in exact rational arithmetic; float error here is
    bounded far below the band, so every genuine tie is caught.
    """
    n1 = sizes.n1
    val = n1 * (float(t) + c)
    k = np.ceil(val) - 1.0 if strict else np.floor(val)
    band = np.abs(val - np.round(val)) < 1e-6
    if np.any(band):
        tf = t if isinstance(t, Fraction) else Fraction(float(t))
        pf = Fraction(pi0)
        base = n1 * tf
        w2 = (1 - pf) * Fraction(n1, sizes.n2)
        w3 = pf * Fraction(n1, sizes.n3)
        m = len(x3)
        for i in np.flatnonzero(band):
            vf = base + w2 * int(x2[i // m]) + w3 * int(x3[i % m])
            k[i] = math.ceil(vf) - 1 if strict else math.floor(vf)
    return k.astype(np.int64)


def exact_statistic_cdf(
    p, sizes: SampleSizes, pi0: float, t, strict: bool = False, eps: float = 1e-10
):
    """Certified bounds on P{T <= t} (P{T < t} when `strict`) at triple p.

    T = X1/n1 - (1-pi0)X2/n2 - pi0 X3/n3 with independent binomial counts.
    The X2 and X3 supports are truncated and the X1 cdf is clamped to a
    finite window, all in the direction that can only lose probability,
    with total loss below eps.  The return pair (S, min(1, S+eps)) then
    brackets the exact cdf.  `p` may be any triple of probabilities; no
    ordering among its coordinates is required.
    """
    if eps <= 0.0:
        raise ValueError(f"eps={eps} must be positive")
    if not 0.0 <= pi0 <= 1.0:
        raise ValueError(f"pi0={pi0} outside [0, 1]")
    p1, p2, p3 = _as_probability_triple(p)
    c, mass, x2, x3 = _offset_arrays(p2, p3, sizes, pi0, eps)
    k = _thresholds(t, pi0, sizes, c, x2, x3, strict)
    lo, tab = _cdf_table(sizes.n1, p1, eps)
    idx = k - lo
    vals = np.take(tab, np.clip(idx, 0, len(tab) - 1))
    vals[idx < 0] = 0.0
    s = float(mass @ vals)
    s = min(max(s, 0.0), 1.0)
    return s, min(1.0, s + eps)


def _observed_statistic(x: SurveyCounts, pi0: float) -> Fraction:
    """t0 as an exact rational, so threshold ties resolve correctly."""
    pf = Fraction(pi0)
    n = x.sizes
    return (
        Fraction(x.x1, n.n1)
        - (1 - pf) * Fraction(x.x2, n.n2)
        - pf * Fraction(x.x3, n.n3)
    )


def _side_max(x, region, pi0, g, eps, t0, side):
    """Max adjusted p-value contribution over grid cells; True if all empty."""
    best = 0.0
    empty = True
    for cell in grid_cells(region, g):
        ext = cell_extremes(cell, pi0, region.which)
        if ext is None:
            continue
        empty = False
        if side == "lower":
            s = exact_statistic_cdf(ext[0], x.sizes, pi0, t0, strict=True, eps=eps)[0]
            best = max(best, 1.0 - s)
        else:
            s = exact_statistic_cdf(ext[1], x.sizes, pi0, t0, strict=False, eps=eps)[0]
            best = max(best, s)
    return best, empty


def _side_max_points(x, region, pi0, g, eps, t0, side):
    """Pointwise variant: maximize over the g x g lattice, no cell bounding."""
    (l1, u1), (l2, u2) = region.intervals
    pts1 = np.linspace(l1, u1, g)
    pts2 = np.linspace(l2, u2, g)
    best = 0.0
    empty = True
    for v1 in pts1:
        for v2 in pts2:
            point = GridCell((float(v1), float(v2)), (float(v1), float(v2)))
            ext = cell_extremes(point, pi0, region.which)
            if ext is None:
                continue
            empty = False
            if side == "lower":
                s = exact_statistic_cdf(
                    ext[0], x.sizes, pi0, t0, strict=True, eps=eps
                )[0]
                best = max(best, 1.0 - s)
            else:
                s = exact_statistic_cdf(
                    ext[1], x.sizes, pi0, t0, strict=False, eps=eps
                )[0]
                best = max(best, s)
    return best, empty


_L_BINDING = {(1, 3): ("high", "low"), (2, 3): ("low", "low")}


def _one_sided_interval(xc, nc, level, binding):
    if binding == "high":
        return 0.0, clopper_pearson(xc, nc, level, side="upper").upper
    return clopper_pearson(xc, nc, level, side="lower").lower, 1.0


def _one_sided_regions(x, gamma, which):
    """Separate regions per tail, each marginal one-sided at sqrt(1-gamma).

    The lower p-value is driven by cells at one edge of the box, so only
    that edge needs to be a confidence bound; the opposite side runs to
    the end of [0, 1].  This trades nothing in validity and tightens the
    binding edge relative to the shared two-sided region.
    """
    level = math.sqrt(1.0 - gamma)
    counts = _component_counts(x)
    flip = {"high": "low", "low": "high"}
    ivs_l, ivs_u = [], []
    for comp, binding in zip(which, _L_BINDING[tuple(which)]):
        xc, nc = counts[comp]
        ivs_l.append(_one_sided_interval(xc, nc, level, binding))
        ivs_u.append(_one_sided_interval(xc, nc, level, flip[binding]))
    return (
        NuisanceRegion(tuple(ivs_l), gamma, tuple(which)),
        NuisanceRegion(tuple(ivs_u), gamma, tuple(which)),
    )


def exact_p_values(
    x: SurveyCounts,
    pi0: float,
    gamma: float,
    g: int = 10,
    eps: float = 1e-10,
    corrected: bool = True,
    which=(1, 3),
    one_sided: bool = False,
) -> PValuePair:
    """Finite-sample valid directional p-values for the null prevalence.

    Corrected mode bounds the statistic's law over whole grid cells, so
    P{q <= u} <= u exactly at every parameter the null allows.  The
    uncorrected mode maximizes over lattice points only; it is shorter
    but carries no finite-sample guarantee.  gamma (the region's miss
    probability) and eps (the convolution truncation) are added to both.
    """
    if not 0.0 <= pi0 <= 1.0:
        raise ValueError(f"pi0={pi0} outside [0, 1]")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma={gamma} outside (0, 1)")
    if g < 2:
        raise ValueError(f"g={g} must be at least 2")
    t0 = _observed_statistic(x, pi0)
    if one_sided:
        reg_l, reg_u = _one_sided_regions(x, gamma, which)
    else:
        reg_l = reg_u = nuisance_region(x, gamma, which)
    scan = _side_max if corrected else _side_max_points
    slack = eps if corrected else 0.0
    best_l, empty_l = scan(x, reg_l, pi0, g, eps, t0, "lower")
    best_u, empty_u = scan(x, reg_u, pi0, g, eps, t0, "upper")
    notes = ()
    if empty_l and empty_u:
        notes = (
            f"no nuisance values compatible with pi0={pi0:g} inside the "
            f"confidence region; p-values fall back to gamma",
        )
    method = "exact-grid" if corrected else "exact-grid-uncorrected"
    return PValuePair(
        min(1.0, best_l + gamma + slack),
        min(1.0, best_u + gamma + slack),
        method,
        pi0,
        diagnostics=notes,
    )


def exact_interval(
    x: SurveyCounts,
    alpha: float,
    gamma: float,
    g: int = 10,
    corrected: bool = True,
    which=(1, 3),
    one_sided: bool = False,
    resolution: float = 2e-3,
    refine_tol: float = 1e-5,
) -> InversionResult:
    """Finite-sample valid interval: all pi0 with both p-values >= alpha/2.

    Needs alpha > 2*gamma, otherwise the gamma floor under the p-values
    could never reject anything on one side.  The boundary is bisected
    outward from the plug-in estimate, falling back to a full scan at
    `resolution` when that center is itself rejected.
    """
    _check_alpha(alpha)
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma={gamma} outside (0, 1)")
    if alpha <= 2.0 * gamma:
        raise ValueError(f"alpha={alpha:g} must exceed 2*gamma={2.0 * gamma:g}")
    cache = {}

    def pair(pi0: float) -> PValuePair:
        if pi0 not in cache:
            cache[pi0] = exact_p_values(
                x, pi0, gamma, g=g, corrected=corrected, which=which,
                one_sided=one_sided,
            )
        return cache[pi0]

    def score(pi0: float) -> float:
        q = pair(pi0)
        return min(q.q_lower, q.q_upper)

    def accept(pi0: float) -> bool:
        return score(pi0) >= alpha / 2.0

    name = "exact-grid" if corrected else "exact-grid-uncorrected"
    cfg = InversionConfig(
        scan="bracket", bracket_tol=refine_tol, resolution=resolution,
        refine_tol=refine_tol,
    )
    return _run_inversion(accept, score, x, alpha, cfg, name, lambda: len(cache))


# ---------------------------------------------------------------------------
# two-sample functionals


FUNCTIONAL_KINDS = ("difference", "relative_risk", "odds_ratio")

_FUNCTIONAL_SUPPORT = {
    "difference": (-1.0, 1.0),
    "relative_risk": (-math.inf, 1.0),
    "odds_ratio": (0.0, math.inf),
}

# sign of dT/dX1 and dT/dX2 for each statistic
_FUNCTIONAL_SIGNS = {
    "difference": (-1, 1),
    "relative_risk": (1, -1),
    "odds_ratio": (-1, 1),
}


def _functional_grid(kind, q1, q2):
    """Statistic values on a frequency grid, boundary conventions applied."""
    if kind == "difference":
        return q2 - q1
    if kind == "relative_risk":
        with np.errstate(divide="ignore", invalid="ignore"):
            r = 1.0 - q2 / q1
        return np.where(
            q1 == 0.0, np.where(q2 == 0.0, 0.0, -math.inf), r
        )
    if kind == "odds_ratio":
        with np.errstate(divide="ignore", invalid="ignore"):
            r = (q2 / (1.0 - q2)) / (q1 / (1.0 - q1))
        r = np.where((q1 == q2) & ((q1 == 0.0) | (q1 == 1.0)), 1.0, r)
        r = np.where((q2 == 1.0) & (q1 < 1.0), math.inf, r)
        r = np.where((q1 == 1.0) & (q2 < 1.0), 0.0, r)
        r = np.where((q1 == 0.0) & (q2 > 0.0) & (q2 < 1.0), math.inf, r)
        return r
    raise ValueError(f"kind={kind!r} not in {FUNCTIONAL_KINDS}")


def functional_value(kind, q1: float, q2: float) -> float:
    """f(q1, q2) for one frequency pair; 0/0 is 0 for the risk ratio, 1
    for the odds ratio."""
    return float(_functional_grid(kind, np.float64(q1), np.float64(q2)))


def _null_slice(kind, theta0, a1, b1):
    """Restrict a p1 cell to the null set; (p1 ends, p2 ends) or None.

    The implied p2 is increasing in p1 for every kind, so its range ends
    line up with the restricted cell ends.
    """
    if kind == "difference":
        lo = max(a1, -theta0)
        hi = min(b1, 1.0 - theta0)
        if lo > hi:
            return None
        return lo, hi, lo + theta0, hi + theta0
    if kind == "relative_risk":
        if theta0 > 1.0:
            return None
        if math.isinf(theta0):
            # reduction of -inf pins p1 at zero with p2 anywhere above it
            if a1 > 0.0:
                return None
            return 0.0, 0.0, 0.0, 1.0
        s = 1.0 - theta0
        if s == 0.0:
            return a1, b1, 0.0, 0.0
        hi = min(b1, 1.0 / s)
        if a1 > hi:
            return None
        return a1, hi, a1 * s, hi * s
    if theta0 < 0.0:
        return None
    return a1, b1, _odds_inverse(theta0, a1), _odds_inverse(theta0, b1)


def _odds_inverse(theta0, p1):
    if p1 >= 1.0:
        return 1.0
    if math.isinf(theta0):
        return 1.0 if p1 > 0.0 else 0.0
    return theta0 * p1 / (1.0 - p1 + theta0 * p1)


def _functional_cdf(kind, p1, p2, n1, n2, t, strict, eps):
    """Certified lower bound pair on P{f(X1/n1, X2/n2) <= t}."""
    lo1, pm1 = _window_pmf(n1, float(p1), eps / 4.0)
    lo2, pm2 = _window_pmf(n2, float(p2), eps / 4.0)
    q1 = (lo1 + np.arange(len(pm1))) / n1
    q2 = (lo2 + np.arange(len(pm2))) / n2
    grid = _functional_grid(kind, q1[:, None], q2[None, :])
    mask = grid < t if strict else grid <= t
    s = float(pm1 @ mask @ pm2)
    s = min(max(s, 0.0), 1.0)
    return s, min(1.0, s + eps)


def functional_exact_p_values(
    kind,
    x1: int,
    n1: int,
    x2: int,
    n2: int,
    theta0: float,
    gamma: float,
    g: int = 10,
    eps: float = 1e-10,
) -> PValuePair:
    """Valid directional p-values for f(p1, p2) = theta0, two samples.

    The nuisance is p1, boxed by a single Clopper-Pearson interval at
    level 1-gamma and cut into g cells; p2 on each cell follows from the
    null constraint.  The PValuePair's pi0 slot carries theta0.
    """
    _validate_functional(kind, x1, n1, x2, n2)
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma={gamma} outside (0, 1)")
    if g < 1:
        raise ValueError(f"g={g} must be at least 1")
    ci = clopper_pearson(x1, n1, 1.0 - gamma)
    edges = np.linspace(ci.lower, ci.upper, g + 1)
    t0 = functional_value(kind, x1 / n1, x2 / n2)
    s1, s2 = _FUNCTIONAL_SIGNS[kind]
    best_l = best_u = 0.0
    empty = True
    for a, b in zip(edges[:-1], edges[1:]):
        sl = _null_slice(kind, theta0, float(a), float(b))
        if sl is None:
            continue
        empty = False
        lo1, hi1, c, d = sl
        p_l = (lo1 if s1 < 0 else hi1, d if s2 > 0 else c)
        p_u = (hi1 if s1 < 0 else lo1, c if s2 > 0 else d)
        s = _functional_cdf(kind, p_l[0], p_l[1], n1, n2, t0, True, eps)[0]
        best_l = max(best_l, 1.0 - s)
        s = _functional_cdf(kind, p_u[0], p_u[1], n1, n2, t0, False, eps)[0]
        best_u = max(best_u, s)
    notes = ()
    if empty:
        notes = (
            f"null set for theta0={theta0:g} misses the nuisance region; "
            f"p-values fall back to gamma",
        )
    return PValuePair(
        min(1.0, best_l + gamma + eps),
        min(1.0, best_u + gamma + eps),
        "exact-functional",
        float(theta0),
        diagnostics=notes,
    )


def _validate_functional(kind, x1, n1, x2, n2):
    if kind not in FUNCTIONAL_KINDS:
        raise ValueError(f"kind={kind!r} not in {FUNCTIONAL_KINDS}")
    for name, xv, nv in (("first", x1, n1), ("second", x2, n2)):
        if nv < 1:
            raise ValueError(f"{name} sample size must be positive")
        if not 0 <= xv <= nv:
            raise ValueError(f"{name} count {xv} outside [0, {nv}]")


# map each functional's support onto [0, 1] so one bisection loop serves all
def _to_unit(kind, theta):
    if kind == "difference":
        return (theta + 1.0) / 2.0
    if kind == "relative_risk":
        return 1.0 / (2.0 - theta) if math.isfinite(theta) else 0.0
    return theta / (1.0 + theta) if math.isfinite(theta) else 1.0


def _from_unit(kind, u):
    if kind == "difference":
        return 2.0 * u - 1.0
    if kind == "relative_risk":
        return 2.0 - 1.0 / u if u > 0.0 else -math.inf
    return u / (1.0 - u) if u < 1.0 else math.inf


def functional_exact_interval(
    kind,
    x1: int,
    n1: int,
    x2: int,
    n2: int,
    alpha: float,
    gamma: float,
    g: int = 10,
) -> InversionResult:
    """Finite-sample valid interval for a two-sample functional.

    Inverts functional_exact_p_values over theta0, bisecting on a bounded
    reparametrization of the support.  An endpoint that stays accepted
    out to the edge of the scan is reported as the support bound itself
    (infinite for the open-ended kinds, with a note).
    """
    _validate_functional(kind, x1, n1, x2, n2)
    _check_alpha(alpha)
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma={gamma} outside (0, 1)")
    if alpha <= 2.0 * gamma:
        raise ValueError(f"alpha={alpha:g} must exceed 2*gamma={2.0 * gamma:g}")
    support = _FUNCTIONAL_SUPPORT[kind]
    # evaluation edges: exact support ends when finite, far proxies when not
    edge_lo = 0.0 if math.isfinite(support[0]) else 1e-9
    edge_hi = 1.0 if math.isfinite(support[1]) else 1.0 - 1e-9
    cache = {}

    def score(u: float) -> float:
        if u not in cache:
            q = functional_exact_p_values(
                kind, x1, n1, x2, n2, _from_unit(kind, u), gamma, g=g
            )
            cache[u] = min(q.q_lower, q.q_upper)
        return cache[u]

    def accept(u: float) -> bool:
        return score(u) >= alpha / 2.0

    t0 = functional_value(kind, x1 / n1, x2 / n2)
    center = min(max(_to_unit(kind, t0), edge_lo), edge_hi)
    tol = 1e-5
    notes = []
    convex = True
    if accept(center):
        if accept(edge_lo):
            u_lo = edge_lo
        else:
            u_lo = _bisect_boundary(accept, edge_lo, center, tol, accepted="hi")
        if accept(edge_hi):
            u_hi = edge_hi
        else:
            u_hi = _bisect_boundary(accept, center, edge_hi, tol, accepted="lo")
    else:
        grid = np.linspace(edge_lo, edge_hi, 401)
        flags = np.fromiter(
            (accept(float(u)) for u in grid), dtype=bool, count=len(grid)
        )
        if not flags.any():
            best = float(grid[int(np.argmax([score(float(u)) for u in grid]))])
            theta = _from_unit(kind, best)
            interval = IntervalResult(
                lower=theta, upper=theta, level=1.0 - alpha,
                method=f"exact-{kind}",
                diagnostics=(
                    f"empty acceptance set at alpha={alpha:g}; degenerate "
                    f"interval at the best-supported value",
                ),
                support=support,
            )
            return InversionResult(interval, True, tol, len(cache))
        idx = np.flatnonzero(flags)
        convex = bool(np.all(np.diff(idx) == 1))
        if not convex:
            notes.append(
                "acceptance set not contiguous on the scan grid; "
                "returning its hull"
            )
        u_lo = float(grid[idx[0]])
        if idx[0] > 0:
            u_lo = _bisect_boundary(
                accept, float(grid[idx[0] - 1]), u_lo, tol, accepted="hi"
            )
        u_hi = float(grid[idx[-1]])
        if idx[-1] < len(grid) - 1:
            u_hi = _bisect_boundary(
                accept, u_hi, float(grid[idx[-1] + 1]), tol, accepted="lo"
            )
    if u_lo <= edge_lo:
        lower = support[0]
        if not math.isfinite(support[0]):
            notes.append("unbounded below at the scan precision")
    else:
        lower = _from_unit(kind, u_lo)
    if u_hi >= edge_hi:
        upper = support[1]
        if not math.isfinite(support[1]):
            notes.append("unbounded above at the scan precision")
    else:
        upper = _from_unit(kind, u_hi)
    interval = IntervalResult(
        lower=lower, upper=upper, level=1.0 - alpha, method=f"exact-{kind}",
        diagnostics=tuple(notes), support=support,
    )
    return InversionResult(interval, convex, tol, len(cache))
