"""Three-sample binomial survey model.

A survey sample, a specificity sample (known negatives), and a sensitivity
sample (known positives) are tested with the same imperfect assay:

    X_i ~ Binomial(n_i, p_i),  i = 1, 2, 3  (independent),

where p1 is the positive rate in the survey, p2 the false-positive rate
(1 - specificity), and p3 the true-positive rate (sensitivity).  The
parameter space is

    Omega = { p in [0,1]^3 : p2 <= p1 <= p3, p2 < p3 },

and the prevalence of interest is pi = (p1 - p2) / (p3 - p2).

This module holds the domain containers, the prevalence functional, exact
binomial probability kernels, and deterministic seeded sampling.  Everything
here is a pure function of its arguments; randomness enters only through an
explicit `RngSeed`.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

__all__ = [
    "SampleSizes",
    "SurveyCounts",
    "ParamPoint",
    "PrevalenceSplit",
    "RngSeed",
    "prevalence_of",
    "b_vector",
    "binomial_pmf",
    "binomial_cdf",
    "sample_counts",
]


@dataclass(frozen=True)
class SampleSizes:
    """Number of tests in the survey, specificity, and sensitivity samples."""

    n1: int
    n2: int
    n3: int

    def __post_init__(self):
        for name in ("n1", "n2", "n3"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.n1, self.n2, self.n3], dtype=np.int64)


@dataclass(frozen=True)
class SurveyCounts:
    """Observed positive counts (x1, x2, x3) with their sample sizes."""

    x1: int
    x2: int
    x3: int
    sizes: SampleSizes

    def __post_init__(self):
        n = (self.sizes.n1, self.sizes.n2, self.sizes.n3)
        for i, name in enumerate(("x1", "x2", "x3")):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ValueError(f"{name} must be an integer, got {v!r}")
            if not 0 <= v <= n[i]:
                raise ValueError(f"{name}={v} outside [0, n{i + 1}={n[i]}]")

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3], dtype=np.int64)

    def frequencies(self) -> np.ndarray:
        """Empirical frequencies (x1/n1, x2/n2, x3/n3)."""
        return self.as_array() / self.sizes.as_array()


def in_omega(p1: float, p2: float, p3: float) -> bool:
    """Exact membership test for Omega (no epsilon; callers clamp first)."""
    ok_range = 0.0 <= p2 and p1 <= 1.0 and 0.0 <= p1 and p3 <= 1.0
    return bool(ok_range and p2 <= p1 <= p3 and p2 < p3)


@dataclass(frozen=True)
class ParamPoint:
    """A probability triple in the closure of Omega (p2 <= p1 <= p3).

    Points with p2 == p3 are representable (maximum likelihood estimates can
    pool all three components) but have no defined prevalence; `degenerate`
    flags them and `prevalence_of` rejects them.
    """

    p1: float
    p2: float
    p3: float

    def __post_init__(self):
        ok = 0.0 <= self.p2 <= self.p1 <= self.p3 <= 1.0
        if not ok:
            raise ValueError(
                f"({self.p1}, {self.p2}, {self.p3}) is not in the closure of "
                "Omega (need 0 <= p2 <= p1 <= p3 <= 1)"
            )

    @property
    def degenerate(self) -> bool:
        return self.p2 == self.p3

    def as_array(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.p3], dtype=float)


@dataclass(frozen=True)
class PrevalenceSplit:
    """Prevalence plus a two-component nuisance parametrization.

    `which` selects the nuisance pair: "p1p3" (default) or "p2p3".  The
    remaining component is recovered through p1 = (1 - pi) p2 + pi p3.
    """

    pi: float
    nuisance: tuple
    which: str = "p1p3"

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0:
            raise ValueError(f"pi={self.pi} outside [0, 1]")
        if self.which not in ("p1p3", "p2p3"):
            raise ValueError(f"unknown nuisance selection {self.which!r}")
        if len(self.nuisance) != 2:
            raise ValueError("nuisance must be a pair of probabilities")

    def assemble(self) -> ParamPoint:
        """Reassemble the full triple; raises if it falls outside Omega."""
        if self.which == "p2p3":
            p2, p3 = self.nuisance
            p1 = (1.0 - self.pi) * p2 + self.pi * p3
        else:
            p1, p3 = self.nuisance
            if self.pi == 1.0:
                # constraint degenerates to p1 = p3; p2 is unidentified
                if p1 != p3:
                    raise ValueError("pi=1 requires p1 == p3 in the p1p3 split")
                raise ValueError("p2 is not identified by (p1, p3) at pi=1")
            p2 = (p1 - self.pi * p3) / (1.0 - self.pi)
        return ParamPoint(p1, p2, p3)


@dataclass(frozen=True)
class RngSeed:
    """Root of a deterministic, splittable random stream.

    (seed, stream_id) fully determines every draw.  Distinct stream ids give
    statistically independent streams of a counter-based generator, so
    replicate r of experiment e can use stream_id = hash(e, r) and results do
    not depend on thread or process count.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.stream_id < 0:
            raise ValueError("stream_id must be nonnegative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *ids: int) -> "RngSeed":
        """Derive a sub-stream id by mixing extra indices into this stream.

        Uses SeedSequence's entropy mixing, so child(i, j) streams are
        independent across (stream_id, i, j) and reproducible everywhere.
        """
        ss = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.stream_id,) + tuple(ids)
        )
        # collapse the spawn chain into a single stream id on a fresh root
        return RngSeed(seed=int(ss.generate_state(1, np.uint64)[0]), stream_id=0)


def prevalence_of(p) -> float:
    """Prevalence pi = (p1 - p2) / (p3 - p2) of a parameter point in Omega.

    Parameters
    ----------
    p : ParamPoint or length-3 sequence
        Must lie in Omega; otherwise a ValueError is raised.

    Returns
    -------
    float in [0, 1].
    """
    p1, p2, p3 = _as_triple(p)
    if not in_omega(p1, p2, p3):
        raise ValueError(f"({p1}, {p2}, {p3}) is not in Omega")
    return (p1 - p2) / (p3 - p2)


def b_vector(pi0: float) -> np.ndarray:
    """Restriction vector b(pi0) = (1, -(1 - pi0), -pi0).

    For p in Omega, b(pi0)' p = 0 holds exactly when prevalence equals pi0,
    since b(pi0)' p = (p3 - p2) (pi(p) - pi0).
    """
    if not 0.0 <= pi0 <= 1.0:
        raise ValueError(f"pi0={pi0} outside [0, 1]")
    return np.array([1.0, -(1.0 - pi0), -pi0])


def binomial_pmf(n, p, x):
    """P{X = x} for X ~ Binomial(n, p); vectorized, clamps x outside [0, n]."""
    return binomial_cdf(n, p, x) - binomial_cdf(n, p, x, strict=True)


def binomial_cdf(n, p, x, strict: bool = False):
    """Binomial cumulative probability P{X <= x} (or P{X < x} when `strict`).

    Uses the regularized incomplete beta identity
    P{X <= x} = I_{1-p}(n - x, x + 1), which is numerically stable in the
    extreme tails (absolute error well below 1e-12).  Values of x outside
    [0, n] clamp to probability 0 or 1.

    Parameters
    ----------
    n, p, x : scalars or broadcastable arrays
    strict : bool
        When True, returns P{X < x} = P{X <= x - 1}.

    Returns
    -------
    float or ndarray of probabilities.
    """
    n = np.asarray(n, dtype=np.int64)
    p = np.asarray(p, dtype=float)
    x = np.floor(np.asarray(x, dtype=float)).astype(np.int64)
    if strict:
        x = x - 1
    n, p, x = np.broadcast_arrays(n, p, x)
    out = np.empty(np.shape(x), dtype=float)
    below = x < 0
    above = x >= n
    mid = ~(below | above)
    out[below] = 0.0
    out[above] = 1.0
    if np.any(mid):
        nm, pm, xm = n[mid], p[mid], x[mid]
        # betainc(a, b, q) with a = n - x, b = x + 1, q = 1 - p
        out[mid] = betainc(nm - xm, xm + 1.0, 1.0 - pm)
    if out.ndim == 0:
        return float(out)
    return out


def sample_counts(p, sizes: SampleSizes, seed: RngSeed) -> SurveyCounts:
    """Draw one set of survey counts X_i ~ Binomial(n_i, p_i).

    `p` may be any componentwise-[0,1] triple; membership in Omega is not
    required (pooled estimates used to drive bootstrap replicates can sit on
    the boundary).  Identical (seed, stream_id) reproduces identical counts.
    """
    p1, p2, p3 = _as_triple(p)
    for v in (p1, p2, p3):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"component {v} outside [0, 1]")
    rng = seed.generator()
    draws = sample_counts_array((p1, p2, p3), sizes, rng, 1)[0]
    return SurveyCounts(int(draws[0]), int(draws[1]), int(draws[2]), sizes)


def sample_counts_array(p, sizes: SampleSizes, rng: np.random.Generator, size: int):
    """Vectorized sampler: `size` independent (x1, x2, x3) rows.

    Draw order is fixed (all x1, then x2, then x3) so results are stable for
    a given generator state regardless of how callers batch their requests.
    """
    p1, p2, p3 = _as_triple(p)
    out = np.empty((size, 3), dtype=np.int64)
    out[:, 0] = rng.binomial(sizes.n1, p1, size=size)
    out[:, 1] = rng.binomial(sizes.n2, p2, size=size)
    out[:, 2] = rng.binomial(sizes.n3, p3, size=size)
    return out


def _as_triple(p):
    if isinstance(p, ParamPoint):
        return p.p1, p.p2, p.p3
    p1, p2, p3 = (float(v) for v in p)
    return p1, p2, p3
