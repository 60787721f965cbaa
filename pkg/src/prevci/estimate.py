"""Maximum likelihood estimation over the ordered parameter space.

The unconstrained MLE over closure(Omega) = {p2 <= p1 <= p3} is a weighted
isotonic regression (pool adjacent violators) of the empirical frequencies
on the chain (x2/n2, x1/n1, x3/n3) with weights (n2, n1, n3).  When the
survey rate exceeds the sensitivity rate the order constraint binds as
p1 = p3 and the likelihood pools components 1 and 3 to (x1+x3)/(n1+n3);
analogously for p1 = p2 on the other side, cascading to a full pool when
one merge triggers the next.

The MLE constrained to prevalence pi0 eliminates p1 = (1-pi0) p2 + pi0 p3
and maximizes the resulting strictly concave function of (p2, p3) over the
triangle {0 <= p2 <= p3 <= 1} by damped projected Newton, then compares
exact closed-form candidates on every face of the triangle (the pooled
diagonal, the p2 = 0 and p3 = 1 edges) so boundary optima are hit exactly.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .model import ParamPoint, SurveyCounts

__all__ = [
    "MleResult",
    "ConstrainedMleResult",
    "log_likelihood",
    "mle_unconstrained",
    "mle_constrained",
]

_CASE_TAGS = ("interior", "pool-12", "pool-13", "pool-all")


@dataclass(frozen=True)
class MleResult:
    """Unconstrained MLE with the pooling branch that produced it."""

    p_hat: ParamPoint
    log_lik: float
    case_tag: str  # interior | pool-12 | pool-13 | pool-all


@dataclass(frozen=True)
class ConstrainedMleResult:
    """MLE under the restriction b(pi0)' p = 0 (prevalence fixed at pi0)."""

    p_hat: ParamPoint
    pi0: float
    log_lik: float
    kkt_residual: float


def log_likelihood(p, x: SurveyCounts) -> float:
    """Binomial log-likelihood of p = (p1, p2, p3) given counts x.

    Includes the constant log binomial coefficients.  Uses the convention
    0 log 0 = 0; an impossible outcome (p_i = 0 with x_i > 0, or p_i = 1
    with x_i < n_i) gives -inf.
    """
    arr = p.as_array() if isinstance(p, ParamPoint) else np.asarray(p, dtype=float)
    if arr.shape != (3,):
        raise ValueError("p must be a probability triple")
    if np.any((arr < 0.0) | (arr > 1.0)):
        raise ValueError(f"components of {arr} outside [0, 1]")
    val = log_likelihood_array(arr[None, :], x.as_array()[None, :], x.sizes.as_array())
    return float(val[0])


def log_likelihood_array(ps, xs, ns, include_const: bool = True):
    """Row-wise log-likelihood: ps (m,3), xs (m,3), ns (3,) -> (m,)."""
    ps = np.asarray(ps, dtype=float)
    xs = np.asarray(xs, dtype=float)
    ns = np.asarray(ns, dtype=float)
    ll = xlogy(xs, ps).sum(axis=1) + xlog1py(ns - xs, -ps).sum(axis=1)
    if include_const:
        const = gammaln(ns + 1) - gammaln(xs + 1) - gammaln(ns - xs + 1)
        ll = ll + const.sum(axis=1)
    return ll


def mle_unconstrained(x: SurveyCounts) -> MleResult:
    """MLE of p over closure(Omega), with the pooling case that fired.

    Pool-adjacent-violators on the ordered chain (p2, p1, p3): merges are
    weighted means of counts, so pool-12 gives (x1+x2)/(n1+n2), pool-13
    gives (x1+x3)/(n1+n3), and a cascading merge pools everything.
    """
    fits, tags = mle_unconstrained_array(x.as_array()[None, :], x.sizes.as_array())
    p_hat = ParamPoint(float(fits[0, 0]), float(fits[0, 1]), float(fits[0, 2]))
    return MleResult(
        p_hat=p_hat,
        log_lik=log_likelihood(p_hat, x),
        case_tag=_CASE_TAGS[tags[0]],
    )


def mle_unconstrained_array(xs, ns):
    """Vectorized isotonic MLE.

    Parameters
    ----------
    xs : (m, 3) integer counts
    ns : (3,) sample sizes

    Returns
    -------
    fits : (m, 3) fitted (p1, p2, p3) rows
    tags : (m,) int8 codes indexing ("interior", "pool-12", "pool-13",
        "pool-all")
    """
    xs = np.asarray(xs, dtype=float)
    n1, n2, n3 = (float(v) for v in ns)
    v1 = xs[:, 0] / n1
    v2 = xs[:, 1] / n2
    v3 = xs[:, 2] / n3
    q12 = (xs[:, 0] + xs[:, 1]) / (n1 + n2)
    m13 = (xs[:, 0] + xs[:, 2]) / (n1 + n3)
    t = xs.sum(axis=1) / (n1 + n2 + n3)

    fits = np.stack([v1, v2, v3], axis=1)
    tags = np.zeros(len(xs), dtype=np.int8)
    lo = v1 < v2  # violation at the (p2, p1) link
    hi = v1 > v3  # violation at the (p1, p3) link

    a = lo & (q12 <= v3)
    fits[a, 0] = q12[a]
    fits[a, 1] = q12[a]
    tags[a] = 1
    b = lo & (q12 > v3)  # merge cascades through the (p1, p3) link
    fits[b] = t[b, None]
    tags[b] = 3
    c = ~lo & hi & (m13 >= v2)
    fits[c, 0] = m13[c]
    fits[c, 2] = m13[c]
    tags[c] = 2
    d = ~lo & hi & (m13 < v2)
    fits[d] = t[d, None]
    tags[d] = 3
    return fits, tags


def mle_constrained(x: SurveyCounts, pi0: float) -> ConstrainedMleResult:
    """MLE of p over closure(Omega) subject to prevalence(p) = pi0.

    The residual |b(pi0)' p_hat| is zero by construction (p1 is assembled
    from (p2, p3) through the constraint).  kkt_residual is the norm of a
    projected-gradient step, near zero at a constrained maximum.
    """
    if not 0.0 <= pi0 <= 1.0:
        raise ValueError(f"pi0={pi0} outside [0, 1]")
    xs = x.as_array()[None, :]
    ns = x.sizes.as_array()
    ps = mle_constrained_array(xs, ns, pi0)
    z = np.array([[ps[0, 1], ps[0, 2]]])
    resid = _kkt_residual(z, xs, ns, pi0)
    if resid > 1e-6 and 0.0 < pi0 < 1.0:
        z = _polish_projected_gradient(z, xs, ns, pi0)
        ps = _assemble(z, pi0)
        resid = _kkt_residual(z, xs, ns, pi0)
    p_hat = ParamPoint(float(ps[0, 0]), float(ps[0, 1]), float(ps[0, 2]))
    return ConstrainedMleResult(
        p_hat=p_hat,
        pi0=pi0,
        log_lik=log_likelihood(p_hat, x),
        kkt_residual=float(resid),
    )


def mle_constrained_array(xs, ns, pi0, max_iter: int = 100, tol: float = 1e-10):
    """Vectorized constrained MLE: xs (m,3), ns (3,), scalar pi0 -> (m,3)."""
    xs = np.asarray(xs, dtype=float)
    ns = np.asarray(ns, dtype=float)
    m = xs.shape[0]

    if pi0 == 0.0:
        # p1 = p2 pooled; cascade to a full pool if that exceeds p3
        q = (xs[:, 0] + xs[:, 1]) / (ns[0] + ns[1])
        p3 = xs[:, 2] / ns[2]
        t = xs.sum(axis=1) / ns.sum()
        bad = q > p3
        q = np.where(bad, t, q)
        p3 = np.where(bad, t, p3)
        return np.stack([q, q, p3], axis=1)
    if pi0 == 1.0:
        r = (xs[:, 0] + xs[:, 2]) / (ns[0] + ns[2])
        p2 = xs[:, 1] / ns[1]
        t = xs.sum(axis=1) / ns.sum()
        bad = r < p2
        r = np.where(bad, t, r)
        p2 = np.where(bad, t, p2)
        return np.stack([r, p2, r], axis=1)

    # interior search: projected Newton from the isotonic fit with a
    # projected-gradient rescue.  A row drops out once no direction gives a
    # strict improvement; that stall is a KKT point of the strictly concave
    # objective, and boundary optima are re-solved exactly by the face
    # candidates below, so stalling on a face is harmless.
    fits, _ = mle_unconstrained_array(xs, ns)
    z = np.stack([fits[:, 1], fits[:, 2]], axis=1)
    z = np.clip(z, 1e-6, 1.0 - 1e-6)
    z = _project_triangle(z)
    g_cur = _reduced_loglik(z, xs, ns, pi0)
    active = np.ones(m, dtype=bool)

    for _ in range(max_iter):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        za, xa, ga = z[idx], xs[idx], g_cur[idx]
        step = _newton_step(za, xa, ns, pi0)
        z_try, g_try, ok = _backtrack(za, xa, ns, pi0, ga, step, 8)
        need = ~ok
        if np.any(need):
            grad = _gradient(za[need], xa[need], ns, pi0)
            grad = np.where(np.isnan(grad), 0.0, grad)
            norm = np.maximum(np.abs(grad).max(axis=1), 1e-30)
            z2, g2, ok2 = _backtrack(
                za[need], xa[need], ns, pi0, ga[need],
                grad / norm[:, None], 30,
            )
            z_try[need] = z2
            g_try[need] = g2
            ok[need] = ok2
        z[idx] = np.where(ok[:, None], z_try, za)
        g_cur[idx] = np.where(ok, g_try, ga)
        active[idx] = ok & (np.abs(z_try - za).max(axis=1) > 1e-12)

    # exact candidates on the faces of the triangle
    cand_z = [z]
    cand_g = [g_cur]
    t = np.clip(xs.sum(axis=1) / ns.sum(), 0.0, 1.0)
    diag = np.stack([t, t], axis=1)
    cand_z.append(diag)
    cand_g.append(_reduced_loglik(diag, xs, ns, pi0))

    e2 = xs[:, 1] == 0  # p2 = 0 edge is only viable with no false positives
    if np.any(e2):
        p3 = _edge_solve_p3(xs[e2], ns, pi0)
        ze = np.zeros((m, 2))
        ze[e2, 1] = p3
        ge = np.full(m, -np.inf)
        ge[e2] = _reduced_loglik(ze[e2], xs[e2], ns, pi0)
        cand_z.append(ze)
        cand_g.append(ge)
    e3 = xs[:, 2] == ns[2]  # p3 = 1 edge needs a perfect sensitivity sample
    if np.any(e3):
        p2 = _edge_solve_p2(xs[e3], ns, pi0)
        ze = np.ones((m, 2))
        ze[e3, 0] = p2
        ge = np.full(m, -np.inf)
        ge[e3] = _reduced_loglik(ze[e3], xs[e3], ns, pi0)
        cand_z.append(ze)
        cand_g.append(ge)
    corner = e2 & e3
    if np.any(corner):
        zc = np.zeros((m, 2))
        zc[:, 1] = 1.0
        gc = np.full(m, -np.inf)
        gc[corner] = _reduced_loglik(zc[corner], xs[corner], ns, pi0)
        cand_z.append(zc)
        cand_g.append(gc)

    G = np.stack(cand_g, axis=1)
    Z = np.stack(cand_z, axis=1)
    best = np.argmax(G, axis=1)
    zb = Z[np.arange(m), best]
    return _assemble(zb, pi0)


def _assemble(z, pi0):
    """Lift (p2, p3) rows to (p1, p2, p3) through the prevalence constraint."""
    p2 = z[:, 0]
    p3 = z[:, 1]
    p1 = (1.0 - pi0) * p2 + pi0 * p3
    p1 = np.minimum(np.maximum(p1, p2), p3)  # guard 1-ulp rounding excursions
    return np.stack([p1, p2, p3], axis=1)


def _reduced_loglik(z, xs, ns, pi0):
    return log_likelihood_array(_assemble(z, pi0), xs, ns, include_const=False)


def _derivs(z, xs, ns, pi0):
    """Per-component score d_i and curvature h_i at the assembled triple."""
    ps = _assemble(z, pi0)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = xs / ps
        bb = (ns - xs) / (1.0 - ps)
        a[xs == 0] = 0.0
        bb[(ns - xs) == 0.0] = 0.0
        d = a - bb
        h = -(xs / ps**2 + (ns - xs) / (1.0 - ps) ** 2)
    return d, h


def _gradient(z, xs, ns, pi0):
    d, _ = _derivs(z, xs, ns, pi0)
    g2 = (1.0 - pi0) * d[:, 0] + d[:, 1]
    g3 = pi0 * d[:, 0] + d[:, 2]
    return np.stack([g2, g3], axis=1)


def _newton_step(z, xs, ns, pi0):
    d, h = _derivs(z, xs, ns, pi0)
    g2 = (1.0 - pi0) * d[:, 0] + d[:, 1]
    g3 = pi0 * d[:, 0] + d[:, 2]
    a11 = (1.0 - pi0) ** 2 * h[:, 0] + h[:, 1]
    a22 = pi0**2 * h[:, 0] + h[:, 2]
    a12 = (1.0 - pi0) * pi0 * h[:, 0]
    det = a11 * a22 - a12 * a12
    # solve -H s = g; H is negative definite so det > 0
    safe = det > 1e-300
    s2 = np.where(safe, -(a22 * g2 - a12 * g3) / det, g2)
    s3 = np.where(safe, -(a11 * g3 - a12 * g2) / det, g3)
    step = np.stack([s2, s3], axis=1)
    bad = ~np.isfinite(step).all(axis=1)
    if np.any(bad):
        step[bad] = np.stack([g2[bad], g3[bad]], axis=1)
    return step


def _backtrack(z, xs, ns, pi0, g_cur, step, halvings):
    """Largest halved multiple of `step` that strictly improves each row."""
    m = len(z)
    out_z = z.copy()
    out_g = g_cur.copy()
    ok = np.zeros(m, dtype=bool)
    scale = np.ones(m)
    pending = np.ones(m, dtype=bool)
    for _ in range(halvings):
        if not np.any(pending):
            break
        idx = np.flatnonzero(pending)
        trial = _project_triangle(z[idx] + scale[idx, None] * step[idx])
        trial = np.clip(trial, 1e-14, 1.0 - 1e-14)
        g_t = _reduced_loglik(trial, xs[idx], ns, pi0)
        good = g_t > g_cur[idx]
        gi = idx[good]
        out_z[gi] = trial[good]
        out_g[gi] = g_t[good]
        ok[gi] = True
        pending[gi] = False
        scale[pending] *= 0.5
    return out_z, out_g, ok


def _project_triangle(z):
    """Retraction onto {0 <= p2 <= p3 <= 1}: clip, then pool a crossed pair."""
    z = np.clip(z, 0.0, 1.0)
    bad = z[:, 0] > z[:, 1]
    if np.any(bad):
        mid = 0.5 * (z[bad, 0] + z[bad, 1])
        z[bad, 0] = mid
        z[bad, 1] = mid
    return z


def _edge_solve_p3(xs, ns, pi0):
    """Maximize over p3 on the p2 = 0 edge (requires x2 = 0); 1-D bisection."""

    def dpsi(p3):
        c = pi0 * p3
        d1 = _safe_score(xs[:, 0], ns[0], c)
        d3 = _safe_score(xs[:, 2], ns[2], p3)
        return pi0 * d1 + d3

    return _bisect_decreasing(dpsi, len(xs))


def _edge_solve_p2(xs, ns, pi0):
    """Maximize over p2 on the p3 = 1 edge (requires x3 = n3)."""

    def dpsi(p2):
        c = (1.0 - pi0) * p2 + pi0
        d1 = _safe_score(xs[:, 0], ns[0], np.minimum(c, 1.0))
        d2 = _safe_score(xs[:, 1], ns[1], p2)
        return (1.0 - pi0) * d1 + d2

    return _bisect_decreasing(dpsi, len(xs))


def _safe_score(x, n, p):
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(x == 0, 0.0, x / p)
        b = np.where(n - x == 0, 0.0, (n - x) / (1.0 - p))
    return a - b


def _bisect_decreasing(dpsi, m, iters: int = 80):
    lo = np.full(m, 1e-15)
    hi = np.full(m, 1.0 - 1e-15)
    at_lo = dpsi(lo) <= 0.0
    at_hi = dpsi(hi) >= 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        up = dpsi(mid) > 0.0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    out = 0.5 * (lo + hi)
    out[at_lo] = 0.0
    out[at_hi] = 1.0
    return out


def _kkt_residual(z, xs, ns, pi0, t: float = 1e-7):
    """Norm of a length-t projected-gradient displacement, divided by t."""
    grad = _gradient(z, xs, ns, pi0)
    grad = np.where(np.isnan(grad), 0.0, grad)
    trial = _project_triangle(z + t * grad)
    return float(np.linalg.norm(trial - z) / t)


def _polish_projected_gradient(z, xs, ns, pi0, iters: int = 300):
    g_cur = _reduced_loglik(z, xs, ns, pi0)
    step = 1.0
    for _ in range(iters):
        grad = _gradient(z, xs, ns, pi0)
        grad = np.where(np.isnan(grad), 0.0, grad)
        accepted = False
        for _ in range(60):
            trial = _project_triangle(z + step * grad)
            trial = np.clip(trial, 1e-14, 1.0 - 1e-14)
            g_t = _reduced_loglik(trial, xs, ns, pi0)
            if g_t > g_cur:
                stalled = g_t - g_cur < 1e-13 * max(1.0, abs(float(g_cur[0])))
                z, g_cur = trial, g_t
                step *= 2.0
                accepted = not stalled
                break
            step *= 0.5
            if step < 1e-18:
                break
        if not accepted:
            break
    return z
