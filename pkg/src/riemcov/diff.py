"""Strong-differentiability probes, the density field and Lipschitz tools.

Strong partial quotients of a component ``G_i`` along axis ``j`` near ``x``
are sampled on a fixed pattern scaled by the radius ``r``: ``k`` points
``u_a = x_j + r (2a - (k - 1)) / k`` along axis ``j`` (adjacent pairs plus
the widest pair) repeated at ``k`` diagonal offsets of the other
coordinates.  All pair points lie strictly inside ``B(x, r)`` and every pair
is separated by at least ``r / k`` along axis ``j``.

The density field takes, for each entry, the largest sampled quotient at a
radius (the finite stand-in for the supremum) and then combines the radii of
a decreasing schedule (the stand-in for the infimum over ``r``).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._util import as_points, call_map, call_scalar, corner_offsets, max_norm
from .errors import SingularDerivative
from .geometry import INSIDE, AxisBox, Cube, JordanSet, as_box

PASS = "Pass"
FAIL = "Fail"
INCONCLUSIVE = "Inconclusive"

DEFAULT_RADII = (1e-2, 1e-3, 1e-4)
_EPS = np.finfo(float).eps
_CHUNK = 1 << 15


def _pattern(k):
    return (2.0 * np.arange(k) - (k - 1)) / k


def _pair_index(k):
    """Adjacent pairs plus the widest pair (deduplicated for k == 2)."""
    pairs = [(a, a + 1) for a in range(k - 1)]
    if k > 2:
        pairs.append((0, k - 1))
    return np.array(pairs, dtype=np.int64)


def _column_quotients(G, pts, j, R, k):
    """Low/high strong partial quotients along axis ``j`` for all components.

    ``pts`` is (N, m), ``R`` the per-point radius (N,).  Returns two (N, n)
    arrays.
    """
    N, m = pts.shape
    t = _pattern(k)
    offs = t if m > 1 else np.zeros(1)
    kb = len(offs)
    # shape (N, kb, k, m): diagonal offset b on the other axes, position a on axis j
    sample = np.broadcast_to(pts[:, None, None, :], (N, kb, k, m)).copy()
    other = np.arange(m) != j
    sample[..., other] += (R[:, None, None] * offs[None, :, None])[..., None]
    sample[..., j] += R[:, None, None] * t[None, None, :]
    vals = call_map(G, sample.reshape(-1, m)).reshape(N, kb, k, -1)
    pairs = _pair_index(k)
    dv = vals[:, :, pairs[:, 1], :] - vals[:, :, pairs[:, 0], :]
    du = (R[:, None] * (t[pairs[:, 1]] - t[pairs[:, 0]])[None, :])[:, None, :, None]
    q = dv / du
    return q.min(axis=(1, 2)), q.max(axis=(1, 2))


def strong_partial_quotient_range(Gi: Callable, j: int, x, r: float, k: int = 4):
    """(low, high) of sampled quotients ``(G_i(z) - G_i(y)) / (z_j - y_j)``.

    ``j`` is a 0-based axis index.  The k^2 pairs differ only in coordinate
    ``j`` and lie in ``B(x, r)``.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    if k < 2:
        raise ValueError("k must be >= 2")
    pts = as_points(x)

    def comp(P):
        return call_scalar(Gi, P, "G_i")[:, None]

    lo, hi = _column_quotients(comp, pts, j, np.full(1, float(r)), k)
    return float(lo[0, 0]), float(hi[0, 0])


def jacobian_fd(G: Callable, points, h=None):
    """Central-difference Jacobians, shape (N, n, m)."""
    pts = as_points(points)
    N, m = pts.shape
    if h is None:
        h = 1e-6 * np.maximum(1.0, np.abs(pts))
    h = np.broadcast_to(np.asarray(h, dtype=float), (N, m))
    cols = []
    for j in range(m):
        e = np.zeros((N, m))
        e[:, j] = h[:, j]
        both = call_map(G, np.concatenate([pts + e, pts - e]))
        cols.append((both[:N] - both[N:]) / (2.0 * h[:, j : j + 1]))
    return np.stack(cols, axis=2)


class DensityField:
    """The matrix field ``gbar`` of a map ``G`` on a box domain and ``|det gbar|``.

    Parameters
    ----------
    G : callable
        Vectorized map, (N, m) -> (N, m).
    domain : AxisBox, Cube or JordanSet
        Points are interior when they have positive max-norm distance to the
        boundary of its bounding box; other points get the zero matrix.
    radii : sequence of float, optional
        Strictly decreasing radius schedule.  Defaults to 1e-2, 1e-3, 1e-4
        times the smallest side of the domain box.  A point uses the radii
        not exceeding its distance to the boundary, or that distance itself
        when every radius is too large.
    k : int
        Sample count per axis for the pair pattern.
    estimator : {"min", "extrapolate"}
        ``"min"`` takes the smallest per-radius maximum quotient over the
        schedule.  ``"extrapolate"`` extrapolates the per-radius maxima of
        the two smallest usable radii linearly to ``r = 0`` and clamps the
        result to ``[max low, min high]``; the maxima carry an O(r) bias for
        curved maps which this removes to first order.
    """

    def __init__(self, G, domain, radii=None, k=4, estimator="extrapolate", cache=True):
        box = as_box(domain)
        self.G = G
        self.domain = box
        self.dim = box.dim
        widths = box.widths
        scale = float(widths[widths > 0].min()) if (widths > 0).any() else 1.0
        radii = tuple(float(r) for r in (radii if radii is not None else np.array(DEFAULT_RADII) * scale))
        if not radii or any(r <= 0 for r in radii):
            raise ValueError("radii must be positive")
        if any(b >= a for a, b in zip(radii, radii[1:])):
            raise ValueError(f"radii must be strictly decreasing, got {radii}")
        if estimator not in ("min", "extrapolate"):
            raise ValueError(f"unknown estimator {estimator!r}")
        if k < 2:
            raise ValueError("k must be >= 2")
        self.radii = radii
        self.k = k
        self.estimator = estimator
        self._cache = {} if cache else None
        self._lock = threading.Lock()

    def margin(self, pts):
        lo = np.asarray(self.domain.lo)
        hi = np.asarray(self.domain.hi)
        return np.min(np.minimum(pts - lo, hi - pts), axis=1)

    def quotient_ranges(self, points):
        """Per-radius (low, high) arrays of shape (N, R, m, m); NaN where a radius is unusable.

        The last radius slot holds the fallback radius (the point's margin)
        for points too close to the boundary for every scheduled radius.
        """
        pts = as_points(points, self.dim)
        N, m = pts.shape
        margin = self.margin(pts)
        nr = len(self.radii)
        low = np.full((N, nr + 1, m, m), np.nan)
        high = np.full((N, nr + 1, m, m), np.nan)
        radius = np.full((N, nr + 1), np.nan)
        for s, r in enumerate(self.radii):
            radius[margin >= r, s] = r
        fallback = (margin > 0) & (margin < self.radii[-1])
        radius[fallback, nr] = margin[fallback]
        for s in range(nr + 1):
            use = np.flatnonzero(~np.isnan(radius[:, s]))
            for start in range(0, len(use), _CHUNK):
                sel = use[start : start + _CHUNK]
                for j in range(m):
                    lo_j, hi_j = _column_quotients(self.G, pts[sel], j, radius[sel, s], self.k)
                    low[sel, s, :, j] = lo_j
                    high[sel, s, :, j] = hi_j
        return low, high, radius

    def gbar_many(self, points):
        """gbar at many points, shape (N, m, m); zero matrix at boundary points."""
        pts = as_points(points, self.dim)
        low, high, radius = self.quotient_ranges(pts)
        N, m = pts.shape
        out = np.zeros((N, m, m))
        valid = ~np.isnan(radius)
        has = valid.any(axis=1)
        with np.errstate(all="ignore"):
            hmin = np.nanmin(np.where(valid[:, :, None, None], high, np.inf), axis=1)
            lmax = np.nanmax(np.where(valid[:, :, None, None], low, -np.inf), axis=1)
        est = hmin
        if self.estimator == "extrapolate":
            count = valid.sum(axis=1)
            two = np.flatnonzero(count >= 2)
            if two.size:
                # the two smallest usable radii
                order = np.argsort(np.where(valid[two], radius[two], np.inf), axis=1)
                a, b = order[:, 1], order[:, 0]
                ra, rb = radius[two, a], radius[two, b]
                ha, hb = high[two, a], high[two, b]
                slope = (ha - hb) / (ra - rb)[:, None, None]
                extrap = hb - slope * rb[:, None, None]
                est = est.copy()
                est[two] = np.clip(extrap, lmax[two], hmin[two])
        out[has] = est[has]
        return out

    def gbar(self, x):
        """gbar at a single point (cached)."""
        pts = as_points(x, self.dim)
        key = tuple(float(v) for v in pts[0])
        if self._cache is not None:
            with self._lock:
                hit = self._cache.get(key)
            if hit is not None:
                return hit.copy()
        value = self.gbar_many(pts)[0]
        if self._cache is not None:
            with self._lock:
                self._cache.setdefault(key, value)
        return value.copy()

    def density_many(self, points):
        g = self.gbar_many(points)
        return np.abs(np.linalg.det(g)) if len(g) else np.zeros(0)

    def density(self, x):
        return float(abs(np.linalg.det(self.gbar(x))))

    def __call__(self, points):
        return self.density_many(points)

    def describe(self):
        return {"radii": list(self.radii), "k": self.k, "estimator": self.estimator}


# -- strong differentiability --------------------------------------------------

@dataclass
class StrongDiffReport:
    candidate: np.ndarray
    defect_by_radius: list
    verdict: str
    tol: float
    floor_by_radius: list = field(default_factory=list)


def _ball_lattice(x, r, k):
    m = len(x)
    t = _pattern(k)
    mesh = np.meshgrid(*([t] * m), indexing="ij")
    return x[None, :] + r * np.stack([g.ravel() for g in mesh], axis=1)


def strong_diff_test(G: Callable, x, A_hint=None, radii=(1e-1, 1e-2, 1e-3, 1e-4), pairs: int = 4,
                     tol: float = 1e-3, field: Optional[DensityField] = None):
    """Probe strong differentiability of ``G`` at ``x``.

    ``defect(r)`` is the largest ``||G(z) - G(y) - A (z - y)|| / ||z - y||``
    over all pairs of a ``pairs``-per-axis lattice in ``B(x, r)``.  The
    verdict is Pass when the final defect is below ``tol`` and the last two
    defects do not increase (values under the rounding floor count as
    zero); Fail when the final defect exceeds ``10 * tol`` without
    decreasing; Inconclusive otherwise.
    """
    x = as_points(x)[0]
    radii = tuple(float(r) for r in radii)
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly decreasing")
    if A_hint is not None:
        A = np.atleast_2d(np.asarray(A_hint, dtype=float))
    else:
        if field is None:
            half = radii[0] * 2
            field = DensityField(G, AxisBox(x - half, x + half), radii=radii, k=pairs, cache=False)
        A = field.gbar(x)
    defects, floors = [], []
    for r in radii:
        P = _ball_lattice(x, r, pairs)
        V = call_map(G, P)
        iu, ju = np.triu_indices(len(P), k=1)
        dz = P[ju] - P[iu]
        dg = V[ju] - V[iu]
        sep = max_norm(dz)
        resid = max_norm(dg - dz @ A.T) / sep
        defects.append(float(resid.max()))
        floors.append(float(8 * _EPS * (np.abs(V).max() + np.abs(P).max() * np.abs(A).max()) / sep.min()))
    d = [0.0 if v <= f else v for v, f in zip(defects, floors)]
    final = d[-1]
    prev = d[-2] if len(d) > 1 else d[-1]
    if final < tol and final <= prev:
        verdict = PASS
    elif final > 10 * tol and final >= prev * (1 - 1e-6):
        verdict = FAIL
    else:
        verdict = INCONCLUSIVE
    return StrongDiffReport(A, list(zip(radii, defects)), verdict, tol, list(zip(radii, floors)))


# -- set functions ---------------------------------------------------------

@dataclass
class SetFnDerivative:
    estimate: float
    trace: list  # (radius, centred quotient, min shifted, max shifted)


def setfn_derivative(Phi: Callable, u, radii, shifted: bool = True):
    """Quotients ``Phi(I) / V(I)`` over cubes shrinking to ``u``.

    For each radius ``r`` the centred cube ``B(u, r/2)`` is used, and with
    ``shifted`` also the cubes ``B(u +- (r/2) e_i, r/4)``, which lie in
    ``B(u, r)`` without containing ``u``.  The estimate is the centred
    quotient at the last radius.
    """
    u = as_points(u)[0]
    m = len(u)
    trace = []
    for r in radii:
        c0 = Cube(u, r / 2)
        q0 = float(Phi(c0)) / c0.volume
        qs = []
        if shifted:
            for i in range(m):
                for sgn in (-1.0, 1.0):
                    c = u.copy()
                    c[i] += sgn * r / 2
                    cube = Cube(c, r / 4)
                    qs.append(float(Phi(cube)) / cube.volume)
        lo = min(qs) if qs else q0
        hi = max(qs) if qs else q0
        trace.append((float(r), q0, lo, hi))
    return SetFnDerivative(trace[-1][1], trace)


# -- inverse inclusion -------------------------------------------------------

@dataclass
class InclusionReport:
    matrix: np.ndarray
    outer_ok: bool
    inner_ok: bool
    outer_witnesses: list
    inner_witnesses: list
    samples: int

    @property
    def passed(self):
        return self.outer_ok and self.inner_ok


def inverse_inclusion_check(G: Callable, u, eps: float = 0.5, delta: Optional[float] = None, r: float = 1e-2,
                            samples: int = 5, tol: float = 1e-10, det_tol: float = 1e-6,
                            field: Optional[DensityField] = None, max_iter: int = 100):
    """Check ``l(B(u,(1-eps)r)) in G(B(u,r)) in l(B(u,(1+eps)r))`` on samples.

    ``l(v) = G(u) + M (v - u)`` with ``M = gbar(u)``.  Outer inclusion maps
    sampled ``v`` back through ``l``; inner inclusion solves ``G(z) = l(v)``
    by ``z <- z - M^{-1} (G(z) - y)`` from ``z = u`` and requires
    convergence inside ``B(u, r)``.

    Raises
    ------
    SingularDerivative
        If ``|det M| < det_tol``.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    u = as_points(u)[0]
    m = len(u)
    if field is None:
        reach = delta if delta is not None else 4 * r
        field = DensityField(G, AxisBox(u - reach, u + reach), cache=False)
    M = field.gbar(u)
    if abs(np.linalg.det(M)) < det_tol:
        raise SingularDerivative(f"|det gbar| = {abs(np.linalg.det(M)):.3g} below {det_tol:g} at {tuple(float(v) for v in u)}")
    Minv = np.linalg.inv(M)
    Gu = call_map(G, u[None])[0]

    outer_pts = _ball_lattice(u, r, samples) * 1.0
    # include the exact corners of the closed ball
    outer_pts = np.vstack([outer_pts, u + r * (corner_offsets(m) * 2.0 - 1.0)])
    w = u + (call_map(G, outer_pts) - Gu) @ Minv.T
    bad = max_norm(w - u) > (1 + eps) * r
    outer_w = [tuple(p) for p in outer_pts[bad]]

    inner_v = np.vstack([_ball_lattice(u, (1 - eps) * r, samples), u + (1 - eps) * r * (corner_offsets(m) * 2.0 - 1.0)])
    y = Gu + (inner_v - u) @ M.T
    z = np.repeat(u[None], len(y), axis=0)
    scale = max(1.0, float(np.abs(Gu).max()))
    for _ in range(max_iter):
        res = call_map(G, z) - y
        if max_norm(res).max() < tol * scale:
            break
        z = z - res @ Minv.T
        if not np.isfinite(z).all():
            break
    res = call_map(G, np.where(np.isfinite(z), z, u)) - y
    ok = np.isfinite(z).all(axis=1) & (max_norm(res) < tol * scale) & (max_norm(z - u) <= r * (1 + 1e-12))
    inner_w = [tuple(p) for p in inner_v[~ok]]
    return InclusionReport(M, not outer_w, not inner_w, outer_w, inner_w, len(outer_pts) + len(inner_v))


# -- Lipschitz tools ---------------------------------------------------------

def lipschitz_estimate(G: Callable, X, pair_samples: int = 4000, safety: float = 1.25, seed=0,
                       step: Optional[float] = None):
    """Heuristic max-norm Lipschitz constant: largest sampled quotient times ``safety``.

    Half of the pairs are random pairs in the domain, half are local steps
    ``x -> x + h s`` along random sign vectors ``s``, which probe the
    max-norm operator norm of the derivative.  This is a lower estimate of
    the true constant inflated by ``safety``, not a bound.
    """
    if pair_samples < 2:
        raise ValueError("pair_samples must be >= 2")
    if safety < 1:
        raise ValueError("safety must be >= 1")
    rng = np.random.default_rng(seed)
    box = as_box(X)
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    m = box.dim

    def draw(n):
        pts = lo + (hi - lo) * rng.random((n, m))
        if isinstance(X, JordanSet):
            keep = X.classify_points(pts) == INSIDE
            pts = pts[keep] if keep.any() else pts
        return pts

    half = max(1, pair_samples // 2)
    y = draw(half)
    z = draw(len(y))
    n = min(len(y), len(z))
    y, z = y[:n], z[:n]
    h = step if step is not None else 1e-4 * float(np.max(hi - lo))
    x = draw(half)
    s = rng.choice([-1.0, 1.0], size=x.shape)
    x2 = np.clip(x + h * s, lo, hi)
    P = np.concatenate([y, x])
    Q = np.concatenate([z, x2])
    sep = max_norm(Q - P)
    keep = sep > 0
    q = max_norm(call_map(G, Q[keep]) - call_map(G, P[keep])) / sep[keep]
    return float(q.max()) * safety if q.size else 0.0


class McShaneExtension:
    """``F_i(x) = min_k (v_ik + L ||x - y_k||)``, the largest L-Lipschitz extension."""

    def __init__(self, samples, values, L):
        self.samples = as_points(samples)
        vals = np.asarray(values, dtype=float)
        self.values = vals.reshape(len(self.samples), -1)
        if len(self.samples) == 0:
            raise ValueError("McShane extension needs at least one sample")
        if L < 0:
            raise ValueError("L must be nonnegative")
        self.L = float(L)
        self.scalar = vals.ndim == 1

    def __call__(self, points):
        pts = as_points(points, self.samples.shape[1])
        out = np.empty((len(pts), self.values.shape[1]))
        step = max(1, (1 << 22) // len(self.samples))
        for start in range(0, len(pts), step):
            p = pts[start : start + step]
            dist = max_norm(p[:, None, :] - self.samples[None, :, :])
            out[start : start + step] = np.min(self.values[None, :, :] + self.L * dist[:, :, None], axis=1)
        return out[:, 0] if self.scalar else out


def mcshane_extension(samples, values, L) -> McShaneExtension:
    return McShaneExtension(samples, values, L)
