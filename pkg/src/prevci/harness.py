"""Monte Carlo coverage experiments, parameter sweeps, and report output.

A coverage run draws survey counts repeatedly from a chosen truth,
computes each requested interval, and tallies where the true prevalence
fell: below the interval, inside it, or above it.  Closed-form methods
are evaluated through their endpoints on every replicate.  Inversion
methods get the same answer from a single accept/reject evaluation at
the true value (the interval covers the truth exactly when the truth's
null hypothesis is accepted), which sidesteps the full boundary search;
their average length is estimated on a leading subset of replicates.

Determinism: every replicate's stream is derived from (master seed, grid
index, replicate index), work is split into fixed-size chunks, and chunk
results are reduced in index order, so reports are byte-identical for
any worker count.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .bootstrap import bca_interval, percentile_interval
from .exact import (
    FUNCTIONAL_KINDS,
    exact_interval,
    exact_p_values,
    functional_exact_interval,
)
from .intervals import IntervalResult, delta_interval, projection_interval
from .invert import (
    ASYMPTOTIC_KINDS,
    InversionConfig,
    invert,
    p_values_asymptotic,
    p_values_bootstrap,
)
from .model import (
    RngSeed,
    SampleSizes,
    SurveyCounts,
    in_omega,
    prevalence_of,
    sample_counts,
)
from .stats import KINDS, evaluate_statistic

METHODS = (
    "delta", "pb", "bca", "proj", "inv-asym", "inv-boot", "exact", "exact-grid",
)
SWEEP_AXES = ("p1", "p2", "p3", "n1", "n2", "n3")

# methods whose intervals are cheap enough to evaluate on every replicate
_ENDPOINT_METHODS = ("delta", "pb", "bca", "proj")

_CHUNK = 256


@dataclass(frozen=True)
class ExperimentConfig:
    """One coverage or sweep experiment.

    `replicates=None` picks the per-method default: 1e5 for closed-form
    methods, 1e4 for anything involving simulation or test inversion.
    `length_reps=None` likewise defaults to all replicates for endpoint
    methods and a small leading subset for inversion methods.
    """

    x: SurveyCounts
    methods: tuple = ("delta",)
    statistics: tuple = ("pi_tilde_c",)
    alpha: float = 0.05
    gamma: float = 1e-3
    grid_g: int = 10
    b_replicates: int = 10_000
    replicates: int | None = None
    inner_b: int = 200
    sweep_param: str = ""
    sweep_values: tuple = ()
    seed: int = 0
    workers: int = 1
    length_reps: int | None = None

    def __post_init__(self):
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
        if not self.methods:
            raise ValueError("at least one method is required")
        for s in self.statistics:
            if s not in KINDS:
                raise ValueError(f"unknown statistic {s!r}; choose from {KINDS}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha={self.alpha} outside (0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma={self.gamma} outside (0, 1)")
        if self.sweep_param and self.sweep_param not in SWEEP_AXES:
            raise ValueError(
                f"sweep axis {self.sweep_param!r}; choose from {SWEEP_AXES}"
            )
        vals = tuple(float(v) for v in self.sweep_values)
        if any(not math.isfinite(v) for v in vals):
            raise ValueError("sweep values must be finite")
        if list(vals) != sorted(vals):
            raise ValueError("sweep values must be sorted")
        if self.replicates is not None and self.replicates < 1:
            raise ValueError("replicates must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        if self.b_replicates < 1 or self.inner_b < 2 or self.grid_g < 2:
            raise ValueError("b_replicates, inner_b, grid_g too small")


@dataclass(frozen=True)
class CoverageCell:
    """Tallies for one (grid point, method row).

    Rates are exact rationals over the non-failed replicates, so they sum
    to one by construction.  `avg_length` may come from a leading subset
    of replicates for the expensive inversion methods.
    """

    sweep_param: str
    sweep_value: float | None
    method: str
    statistic: str
    below: Fraction
    covered: Fraction
    above: Fraction
    avg_length: float
    avg_length_ratio_vs_delta: float
    n_fail: int
    seed: int
    replicates: int

    def __post_init__(self):
        total = self.below + self.covered + self.above
        if self.n_fail < self.replicates and total != 1:
            raise ValueError(f"rates sum to {total}, not 1")
        for r in (self.below, self.covered, self.above):
            if not 0 <= r <= 1:
                raise ValueError(f"rate {r} outside [0, 1]")


@dataclass(frozen=True)
class CoverageReport:
    cells: tuple
    alpha: float
    seed: int


def default_replicates(method: str) -> int:
    return 100_000 if method in ("delta", "proj") else 10_000


def default_length_reps(method: str, replicates: int) -> int:
    if method in _ENDPOINT_METHODS:
        return replicates
    if method == "inv-asym":
        return min(replicates, 100)
    if method == "inv-boot":
        return min(replicates, 24)
    return min(replicates, 32)  # exact grids


def default_sweep_values(x: SurveyCounts, axis: str):
    """Evenly spaced grid around the observed value, kept inside Omega."""
    f = x.frequencies()
    n = x.sizes
    if axis.startswith("n"):
        base = {"n1": n.n1, "n2": n.n2, "n3": n.n3}[axis]
        vals = sorted({max(1, round(base * s)) for s in
                       (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)})
        return tuple(float(v) for v in vals)
    base = {"p1": f[0], "p2": f[1], "p3": f[2]}[axis]
    lo, hi = 0.001, 2.0 * base
    eps = 1e-9
    if axis == "p1":
        lo, hi = max(lo, f[1]), min(hi, f[2])
    elif axis == "p2":
        hi = min(hi, f[0], f[2] - eps)
    else:
        lo, hi = max(lo, f[0]), min(hi, 1.0)
    if not lo < hi:
        raise ValueError(f"no feasible {axis} grid around the base point")
    return tuple(float(v) for v in np.linspace(lo, hi, 20))


def _rows(cfg: ExperimentConfig):
    """Expand methods into (method, statistic) report rows, in config order."""
    rows = []
    for m in cfg.methods:
        if m == "inv-asym":
            for s in cfg.statistics:
                if s not in ASYMPTOTIC_KINDS:
                    raise ValueError(
                        f"no asymptotic calibration for {s!r}; "
                        f"choose from {ASYMPTOTIC_KINDS}"
                    )
                rows.append((m, s))
        elif m == "inv-boot":
            rows.extend((m, s) for s in cfg.statistics)
        elif m in ("pb", "bca"):
            rows.append((m, "pi_hat"))
        else:
            rows.append((m, ""))
    return rows


def _grid_points(cfg: ExperimentConfig):
    """(label, value, p_true, sizes) per grid point; validates Omega."""
    f = cfg.x.frequencies()
    n = cfg.x.sizes
    if not in_omega(f[0], f[1], f[2]):
        raise ValueError(
            "observed frequencies leave the parameter space; coverage "
            "needs a valid truth to sample from"
        )
    if not cfg.sweep_param:
        return [("", None, (float(f[0]), float(f[1]), float(f[2])), n)]
    out = []
    for v in cfg.sweep_values:
        p = [float(f[0]), float(f[1]), float(f[2])]
        sizes = n
        if cfg.sweep_param.startswith("p"):
            p["p1 p2 p3".split().index(cfg.sweep_param)] = float(v)
            if not in_omega(*p):
                raise ValueError(
                    f"sweep value {cfg.sweep_param}={v:g} leaves the "
                    f"parameter space"
                )
        else:
            iv = int(round(v))
            if iv < 1 or iv != v:
                raise ValueError("size grid values must be positive integers")
            ns = [n.n1, n.n2, n.n3]
            ns["n1 n2 n3".split().index(cfg.sweep_param)] = iv
            sizes = SampleSizes(*ns)
        out.append((cfg.sweep_param, float(v), tuple(p), sizes))
    return out


def compute_interval(
    method, stat, x, cfg: ExperimentConfig, seed: RngSeed
) -> IntervalResult:
    """One interval by any harness method on one dataset."""
    if method == "delta":
        return delta_interval(x, cfg.alpha)
    if method == "pb":
        return percentile_interval(x, cfg.alpha, B=cfg.b_replicates, seed=seed)
    if method == "bca":
        return bca_interval(x, cfg.alpha, B=cfg.b_replicates, seed=seed)
    if method == "proj":
        return projection_interval(x, cfg.alpha)
    if method == "inv-asym":
        icfg = InversionConfig(seed=seed, scan="bracket", inner_b=cfg.inner_b)
        return invert(stat, "asymptotic", x, cfg.alpha, icfg).interval
    if method == "inv-boot":
        icfg = InversionConfig(
            b_replicates=cfg.b_replicates, seed=seed, scan="bracket",
            inner_b=cfg.inner_b,
        )
        return invert(stat, "bootstrap", x, cfg.alpha, icfg).interval
    if method == "exact":
        return exact_interval(x, cfg.alpha, cfg.gamma, g=cfg.grid_g).interval
    if method == "exact-grid":
        return exact_interval(
            x, cfg.alpha, cfg.gamma, g=cfg.grid_g, corrected=False
        ).interval
    raise ValueError(f"unknown method {method!r}")


def validate_counts(x, n):
    """Reject malformed count/size vectors with a user-facing message."""
    if len(x) != len(n):
        raise ValueError(f"{len(x)} counts for {len(n)} sample sizes")
    for i, (xi, ni) in enumerate(zip(x, n)):
        if int(xi) != xi or int(ni) != ni:
            raise ValueError(f"x{i + 1}, n{i + 1} must be integers")
        if ni < 1:
            raise ValueError(f"n{i + 1} must be positive")
        if xi < 0:
            raise ValueError(f"x{i + 1} is negative")
        if xi > ni:
            raise ValueError(f"x{i + 1} exceeds n{i + 1}")


def run_interval(
    x,
    n,
    methods=("delta",),
    statistics=("pi_tilde_c",),
    alpha=0.05,
    gamma=1e-3,
    grid_g=10,
    b_replicates=None,
    seed=0,
    inner_b=200,
    functional_kind="difference",
):
    """All requested intervals on one dataset.

    Returns (method, statistic, IntervalResult) triples in request order.
    `b_replicates=None` uses 1e5 draws for the percentile and BCa methods
    and 1e4 for bootstrap inversion.  All rows share one master seed, so
    methods built from the same resampling draws actually share them.
    """
    validate_counts(x, n)
    if functional_kind not in FUNCTIONAL_KINDS:
        raise ValueError(
            f"unknown functional {functional_kind!r}; "
            f"choose from {FUNCTIONAL_KINDS}"
        )
    three = [m for m in methods if m != "functional"]
    if three and len(x) != 3:
        raise ValueError("three samples are required (survey, specificity, "
                         "sensitivity)")
    if "functional" in methods and len(x) < 2:
        raise ValueError("the functional analysis needs two samples")
    counts = None
    if three:
        counts = SurveyCounts(
            int(x[0]), int(x[1]), int(x[2]),
            SampleSizes(int(n[0]), int(n[1]), int(n[2])),
        )
    sd = RngSeed(seed)
    out = []
    for m in methods:
        if m == "functional":
            res = functional_exact_interval(
                functional_kind, int(x[0]), int(n[0]), int(x[1]), int(n[1]),
                alpha, gamma, g=grid_g,
            )
            out.append((m, functional_kind, res.interval))
            continue
        b = b_replicates or (100_000 if m in ("pb", "bca") else 10_000)
        cfg = ExperimentConfig(
            x=counts, methods=(m,), statistics=tuple(statistics),
            alpha=alpha, gamma=gamma, grid_g=grid_g, b_replicates=b,
            inner_b=inner_b, seed=seed,
        )
        if m in ("inv-asym", "inv-boot"):
            for s in statistics:
                out.append((m, s, compute_interval(m, s, counts, cfg, sd)))
        elif m in ("pb", "bca"):
            out.append((m, "pi_hat", compute_interval(m, "", counts, cfg, sd)))
        else:
            out.append((m, "", compute_interval(m, "", counts, cfg, sd)))
    return out


def _classify(method, stat, x, pi_true, cfg, seed) -> str:
    """Where the truth falls relative to this replicate's interval.

    Inversion methods answer through the test at pi_true directly: the
    interval is the acceptance hull, so acceptance means coverage and the
    rejecting tail names the side.
    """
    if method in _ENDPOINT_METHODS:
        iv = compute_interval(method, stat, x, cfg, seed)
        if pi_true < iv.lower:
            return "below"
        if pi_true > iv.upper:
            return "above"
        return "covered"
    if method == "inv-asym":
        boot_cfg = (
            (cfg.inner_b, seed.child(3)) if stat == "r_tilde" else None
        )
        q = p_values_asymptotic(stat, x, pi_true, boot_cfg=boot_cfg)
    elif method == "inv-boot":
        q = p_values_bootstrap(
            stat, x, pi_true, B=cfg.b_replicates, seed=seed,
            inner_b=cfg.inner_b,
        )
    else:
        q = exact_p_values(
            x, pi_true, cfg.gamma, g=cfg.grid_g,
            corrected=(method == "exact"),
        )
    if stat == "w":
        if q.q_lower >= cfg.alpha:
            return "covered"
        sv = evaluate_statistic("phi_hat", x, pi_true)
        return "below" if sv.value > 0.0 else "above"
    if q.q_lower < cfg.alpha / 2.0:
        return "below"
    if q.q_upper < cfg.alpha / 2.0:
        return "above"
    return "covered"


def _chunk_worker(args):
    """Tallies for replicates [start, stop) of one grid point.

    Returns per-row (below, covered, above, fails, length_sum, n_length)
    with sums accumulated in replicate order.
    """
    cfg, grid_idx, p_true, sizes, start, stop = args
    rows = _rows(cfg)
    master = RngSeed(cfg.seed)
    pi_true = prevalence_of(p_true)
    tallies = [[0, 0, 0, 0, 0.0, 0] for _ in rows]
    reps = [cfg.replicates or default_replicates(m) for m, _ in rows]
    len_reps = [
        cfg.length_reps
        if cfg.length_reps is not None
        else default_length_reps(m, r)
        for (m, _), r in zip(rows, reps)
    ]
    for rep in range(start, stop):
        rep_seed = master.child(grid_idx, rep)
        x = sample_counts(p_true, sizes, rep_seed)
        for slot, (method, stat) in enumerate(rows):
            if rep >= reps[slot]:
                continue
            t = tallies[slot]
            seed = rep_seed.child(1 + slot)
            try:
                if method in _ENDPOINT_METHODS:
                    iv = compute_interval(method, stat, x, cfg, seed)
                    side = (
                        "below" if pi_true < iv.lower
                        else "above" if pi_true > iv.upper
                        else "covered"
                    )
                    length = iv.length
                else:
                    side = _classify(method, stat, x, pi_true, cfg, seed)
                    length = None
                    if rep < len_reps[slot]:
                        length = compute_interval(
                            method, stat, x, cfg, seed
                        ).length
            except (ValueError, ZeroDivisionError, FloatingPointError):
                t[3] += 1
                continue
            t[("below", "covered", "above").index(side)] += 1
            if length is not None:
                t[4] += length
                t[5] += 1
    return grid_idx, start, tallies


def run_coverage(cfg: ExperimentConfig) -> CoverageReport:
    """Estimate coverage and length for every method row and grid point."""
    if cfg.sweep_param and not cfg.sweep_values:
        raise ValueError(
            "no sweep grid values; run_sweep supplies the default grid"
        )
    for m in cfg.methods:
        if m.startswith("exact") and cfg.alpha <= 2.0 * cfg.gamma:
            raise ValueError(
                f"alpha={cfg.alpha:g} must exceed 2*gamma={2.0 * cfg.gamma:g}"
            )
    rows = _rows(cfg)
    points = _grid_points(cfg)
    reps = [cfg.replicates or default_replicates(m) for m, _ in rows]
    r_max = max(reps)
    tasks = [
        (cfg, gi, p_true, sizes, start, min(start + _CHUNK, r_max))
        for gi, (_, _, p_true, sizes) in enumerate(points)
        for start in range(0, r_max, _CHUNK)
    ]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_chunk_worker, tasks))
    else:
        results = [_chunk_worker(t) for t in tasks]
    # reduce in (grid, chunk) order no matter how workers interleaved
    results.sort(key=lambda r: (r[0], r[1]))
    cells = []
    for gi, (label, value, p_true, sizes) in enumerate(points):
        totals = [[0, 0, 0, 0, 0.0, 0] for _ in rows]
        for rgi, _, tallies in results:
            if rgi != gi:
                continue
            for t, part in zip(totals, tallies):
                t[0] += part[0]
                t[1] += part[1]
                t[2] += part[2]
                t[3] += part[3]
                t[4] += part[4]
                t[5] += part[5]
        lengths = {}
        for slot, (method, stat) in enumerate(rows):
            t = totals[slot]
            lengths[slot] = t[4] / t[5] if t[5] else math.nan
        delta_len = math.nan
        for slot, (method, stat) in enumerate(rows):
            if method == "delta":
                delta_len = lengths[slot]
                break
        for slot, (method, stat) in enumerate(rows):
            below, covered, above, fails = totals[slot][:4]
            good = below + covered + above
            denom = good if good else 1
            avg_len = lengths[slot]
            ratio = (
                avg_len / delta_len
                if math.isfinite(avg_len) and math.isfinite(delta_len)
                and delta_len > 0
                else math.nan
            )
            cells.append(
                CoverageCell(
                    sweep_param=label,
                    sweep_value=value,
                    method=method,
                    statistic=stat,
                    below=Fraction(below, denom),
                    covered=Fraction(covered, denom),
                    above=Fraction(above, denom),
                    avg_length=avg_len,
                    avg_length_ratio_vs_delta=ratio,
                    n_fail=fails,
                    seed=cfg.seed,
                    replicates=reps[slot],
                )
            )
    return CoverageReport(cells=tuple(cells), alpha=cfg.alpha, seed=cfg.seed)


def run_sweep(cfg: ExperimentConfig) -> CoverageReport:
    """Coverage over a parameter grid; fills in the default grid if none."""
    if not cfg.sweep_param:
        raise ValueError("run_sweep needs a sweep axis")
    if not cfg.sweep_values:
        cfg = replace(
            cfg, sweep_values=default_sweep_values(cfg.x, cfg.sweep_param)
        )
    return run_coverage(cfg)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, Fraction):
        v = float(v)
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


_CSV_FIELDS = (
    "sweep_param", "sweep_value", "method", "statistic", "below", "covered",
    "above", "avg_length", "n_fail", "seed",
)


def emit_report(report: CoverageReport, format: str = "csv", out=None) -> str:
    """Render a report; identical inputs yield identical bytes."""
    if format == "csv":
        lines = [",".join(_CSV_FIELDS)]
        for c in report.cells:
            lines.append(
                ",".join(_fmt(getattr(c, f)) for f in _CSV_FIELDS)
            )
        text = "\n".join(lines) + "\n"
    elif format == "json-lines":
        import json

        lines = []
        for c in report.cells:
            rec = {f: getattr(c, f) for f in _CSV_FIELDS}
            rec["avg_length_ratio_vs_delta"] = c.avg_length_ratio_vs_delta
            rec["replicates"] = c.replicates
            for k, v in rec.items():
                if isinstance(v, Fraction):
                    rec[k] = float(f"{float(v):.6g}")
                elif isinstance(v, float):
                    rec[k] = float(f"{v:.6g}") if math.isfinite(v) else None
            lines.append(json.dumps(rec))
        text = "\n".join(lines) + "\n"
    elif format == "table":
        head = (
            "sweep", "value", "method", "stat", "below", "covered", "above",
            "length", "vs delta", "fail",
        )
        body = [
            (
                c.sweep_param or "-",
                _fmt(c.sweep_value) or "-",
                c.method,
                c.statistic or "-",
                _fmt(c.below),
                _fmt(c.covered),
                _fmt(c.above),
                _fmt(c.avg_length),
                _fmt(c.avg_length_ratio_vs_delta),
                str(c.n_fail),
            )
            for c in report.cells
        ]
        widths = [
            max(len(head[i]), *(len(r[i]) for r in body)) if body else len(head[i])
            for i in range(len(head))
        ]
        lines = [
            "  ".join(h.ljust(w) for h, w in zip(head, widths)).rstrip()
        ]
        for r in body:
            lines.append(
                "  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip()
            )
        text = "\n".join(lines) + "\n"
    else:
        raise ValueError(
            f"format={format!r} not in ('table', 'csv', 'json-lines')"
        )
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    return text
