"""Pushforward content, density checks and the change-of-variables engine.

The image ``G(H)`` of a Jordan set is represented by :class:`ImageSet`:

* outer side: the union of balls ``B(G(c_k), L r_k)`` over a grid cover of
  ``H`` (valid whenever ``L`` is a Lipschitz constant of ``G``);
* inner side: a point ``y`` is Inside when the iteration
  ``z <- z - M^{-1} (G(z) - y)`` started at a nearby grid preimage converges
  to some ``z`` in ``H`` where the derivative is regular.  A cell is Inside
  when all its sample points are.

:func:`change_of_variables` compares ``int_{G(X)} f`` (integrated over the
image set) with ``int_X f(G(x)) |det gbar(x)| dx`` and attaches injectivity
and strong-differentiability probes to the verdict.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from ._util import as_points, call_map, call_scalar, max_norm
from .darboux import Bracket, BoundMode, IntegralResult, Sampled, integral_bracket
from .diff import FAIL, DensityField, jacobian_fd, lipschitz_estimate, setfn_derivative, strong_diff_test
from .geometry import (
    DEFAULT_MAX_CELLS,
    INSIDE,
    OUTSIDE,
    UNKNOWN,
    AxisBox,
    BallUnion,
    BoxSet,
    ContentBracket,
    Cube,
    CubeUnion,
    JordanSet,
    OverlapStatus,
    as_box,
    cell_bounds,
    check_cell_count,
    content_bracket,
    grid_indices,
    image_ball_union,
    iter_source_cover,
    near_cubic_counts,
    overlap_profile,
    source_cover,
)

VERIFIED = "Verified"
VIOLATED = "Violated"
INCONCLUSIVE = "Inconclusive"


def _as_set(X):
    return X if isinstance(X, JordanSet) else BoxSet(as_box(X))


def _unique_rows_by_key(pts, keys):
    order = np.argsort(keys)
    sk = keys[order]
    new = np.empty(len(sk), dtype=bool)
    new[:1] = True
    np.not_equal(sk[1:], sk[:-1], out=new[1:])
    inv = np.empty(len(sk), dtype=np.int64)
    inv[order] = np.cumsum(new) - 1
    return pts[order[new]], inv


class ImageSet(JordanSet):
    """The image ``G(H)`` as a Jordan set with a solver-backed inner side.

    Parameters
    ----------
    G : callable
        Vectorized map, finite on the bounding box of ``H``.
    H : JordanSet
    depth : int
        Grid depth of the source cover and of the outer raster.
    L : float
        Lipschitz constant used for the outer cover.
    source_extra : int
        Extra source refinement; balls shrink by ``2**-source_extra``.
    det_tol : float
        Preimages where ``|det DG| < det_tol`` never certify a point.
    """

    label = "solver"
    hierarchy_start = 4

    def __init__(self, G: Callable, H: JordanSet, depth: int, L: float, source_extra: int = 0,
                 det_tol: float = 1e-6, seed_depth: Optional[int] = None, tol: float = 1e-9,
                 max_iter: int = 60, max_cells: int = DEFAULT_MAX_CELLS):
        H = _as_set(H)
        self.G = G
        self.H = H
        self.L = float(L)
        self.det_tol = det_tol
        self.max_iter = max_iter
        balls = image_ball_union(G, H, L, depth, max_cells, source_depth=depth + source_extra)
        if balls is None:
            raise ValueError("source set has no cells")
        self.balls = balls
        super().__init__(balls.bounds)
        m = H.dim
        sd = seed_depth if seed_depth is not None else min(depth + source_extra, 7 if m <= 2 else 5)
        seeds, _ = source_cover(H, sd)
        jac = jacobian_fd(G, seeds)
        dets = np.abs(np.linalg.det(jac))
        regular = dets >= det_tol
        self._seeds = seeds[regular]
        self._minv = np.linalg.inv(jac[regular]) if regular.any() else np.empty((0, m, m))
        self._tree = cKDTree(call_map(G, self._seeds)) if regular.any() else None
        self._hlo = np.asarray(H.bounds.lo)
        self._hhi = np.asarray(H.bounds.hi)
        self.tol = tol * max(1.0, float(np.max(np.abs([balls.bounds.lo, balls.bounds.hi]))))
        self.inside_samples = 3 if m <= 2 else 2
        self.solved = 0

    def preimages(self, Y):
        """Certified preimages of the rows of ``Y``; returns (Z, ok)."""
        Y = as_points(Y, self.dim)
        n, m = Y.shape
        Z = np.full((n, m), np.nan)
        ok = np.zeros(n, dtype=bool)
        if self._tree is None or n == 0:
            return Z, ok
        kq = min(3, len(self._seeds))
        _, idx = self._tree.query(Y, k=kq)
        idx = np.asarray(idx).reshape(n, kq)
        self.solved += n
        for c in range(kq):
            todo = np.flatnonzero(~ok)
            if todo.size == 0:
                break
            s = idx[todo, c]
            z = self._newton(self._seeds[s].copy(), self._minv[s], Y[todo])
            y = Y[todo]
            conv = max_norm(call_map(self.G, z) - y) < self.tol
            cand = np.flatnonzero(conv)
            if cand.size:
                inside = self.H.classify_points(z[cand]) == INSIDE
                cand = cand[inside]
            if cand.size:
                dets = np.abs(np.linalg.det(jacobian_fd(self.G, z[cand])))
                cand = cand[dets >= self.det_tol]
            ok[todo[cand]] = True
            Z[todo[cand]] = z[cand]
        return Z, ok

    def _newton(self, z, minv, y):
        """Iterate ``z <- clip(z - M^{-1}(G(z) - y))`` on the rows still moving."""
        active = np.arange(len(z))
        prev = np.full(len(z), np.inf)
        for it in range(self.max_iter):
            res = call_map(self.G, z[active]) - y[active]
            norm = max_norm(res)
            # drop converged rows and rows whose residual stopped shrinking
            keep = (norm >= self.tol) & ~((it >= 4) & (norm > 0.9 * prev[active]))
            prev[active] = norm
            active, res = active[keep], res[keep]
            if active.size == 0:
                break
            step = np.einsum("nij,nj->ni", minv[active], res)
            z[active] = np.clip(z[active] - step, self._hlo, self._hhi)
        return z

    def classify_points(self, points):
        P = as_points(points, self.dim)
        codes = np.full(len(P), UNKNOWN, dtype=np.int8)
        maybe = self.balls.may_contain(P)
        codes[~maybe] = OUTSIDE
        idx = np.flatnonzero(maybe)
        if idx.size:
            _, ok = self.preimages(P[idx])
            codes[idx[ok]] = INSIDE
        return codes

    def _unit_samples(self):
        m, s = self.dim, self.inside_samples
        t = np.linspace(0.0, 1.0, s)
        mesh = np.meshgrid(*([t] * m), indexing="ij")
        unit = np.stack([g.ravel() for g in mesh], axis=1)
        if s % 2 == 0:
            unit = np.vstack([unit, np.full((1, m), 0.5)])
        return unit

    def classify_cells(self, lo, hi):
        lo, hi = np.asarray(lo), np.asarray(hi)
        out = np.full(len(lo), UNKNOWN, dtype=np.int8)
        meets = self.balls.meets_boxes(lo, hi)
        out[~meets] = OUTSIDE
        cand = np.flatnonzero(meets)
        if cand.size == 0:
            return out
        unit = self._unit_samples()
        w = (hi - lo)[cand]
        pts = (lo[cand][:, None, :] + w[:, None, :] * unit[None]).reshape(-1, self.dim)
        w_all = hi - lo
        if np.all(np.ptp(w_all[cand], axis=0) <= 1e-9 * w_all[cand[0]]):
            # equal cells: sample points sit on a half-cell lattice, dedupe by integer key
            q = np.rint((pts - lo[cand].min(axis=0)) / (0.5 * w_all[cand[0]])).astype(np.int64)
            span = q.max(axis=0) + 1
            keys = np.ravel_multi_index(q.T, span) if np.prod(span.astype(float)) < 2**62 else None
        else:
            keys = None
        if keys is not None:
            uniq, inv = _unique_rows_by_key(pts, keys)
        else:
            uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        codes = self.classify_points(uniq)[inv.ravel()].reshape(len(cand), len(unit))
        out[cand[np.all(codes == INSIDE, axis=1)]] = INSIDE
        return out


def _lipschitz(G, X, L, seed, samples=4000):
    return float(L) if L is not None else lipschitz_estimate(G, X, pair_samples=samples, seed=seed)


def pushforward_content(G: Callable, H, depth: int, L: Optional[float] = None, seed: int = 0,
                        **image_kw) -> ContentBracket:
    """Inner/outer content of ``G(H)`` at ``depth``."""
    H = _as_set(H)
    L = _lipschitz(G, H, L, seed)
    image = ImageSet(G, H, depth, L, **image_kw)
    return content_bracket(image, depth)


@dataclass
class AffineVolumeReport:
    bracket: ContentBracket
    expected: float
    rel_gap: float
    contains: bool


def affine_volume_check(A, b, Q, depth: int) -> AffineVolumeReport:
    """Pushforward content of ``Q`` under ``x -> A x + b`` against ``|det A| V(Q)``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    box = as_box(Q)
    L = float(np.abs(A).sum(axis=1).max())

    def ell(P):
        return P @ A.T + b

    br = pushforward_content(ell, BoxSet(box), depth, L)
    expected = abs(float(np.linalg.det(A))) * box.volume
    gap = abs(br.midpoint - expected) / expected if expected > 0 else abs(br.midpoint)
    tol = 1e-9 * max(expected, 1.0)
    return AffineVolumeReport(br, expected, gap, br.inner - tol <= expected <= br.outer + tol)


NON_OVERLAPPING = "NonOverlapping"
OVERLAP_WITNESS = "OverlapWitness"
UNDETERMINED = "Undetermined"


@dataclass
class NonOverlapReport:
    status: str
    witness: object
    shared_by_depth: list


def nonoverlap_image_check(G: Callable, A, B, depth: int, L: Optional[float] = None, seed: int = 0):
    """Do ``G(A)`` and ``G(B)`` overlap?

    OverlapWitness carries a cell Inside both images.  Image covers of sets
    that share a boundary always share cells, so NonOverlapping is reported
    when no cell is Inside both and the shared outer content at ``depth`` is
    at most 3/4 of that at ``depth - 1`` (it shrinks like the content of a
    null set) or is zero.

    Raises
    ------
    ValueError
        If ``A`` and ``B`` themselves overlap.
    """
    A, B = _as_set(A), _as_set(B)
    if overlap_profile(A, B, depth).status is OverlapStatus.OVERLAPPING:
        raise ValueError("source sets overlap")
    if L is None:
        L = max(lipschitz_estimate(G, A, seed=seed), lipschitz_estimate(G, B, seed=seed))
    shared = []
    prof = None
    for d in (depth - 1, depth):
        IA = ImageSet(G, A, d, L)
        IB = ImageSet(G, B, d, L)
        prof = overlap_profile(IA, IB, d)
        shared.append((d, prof.shared_outer))
        if prof.status is OverlapStatus.OVERLAPPING:
            return NonOverlapReport(OVERLAP_WITNESS, prof.witness, shared)
    (_, s0), (_, s1) = shared
    if s1 == 0 or s1 <= 0.75 * s0:
        return NonOverlapReport(NON_OVERLAPPING, None, shared)
    return NonOverlapReport(UNDETERMINED, None, shared)


# -- density checks ----------------------------------------------------------

@dataclass
class DensityTrial:
    cube: Cube
    integral: Bracket
    content: ContentBracket
    passed: bool


@dataclass
class DensityCheckReport:
    trials: list
    pass_rate: float


def density_check(G: Callable, X, field: DensityField, trials: int = 10, depth: int = 6,
                  L: Optional[float] = None, seed: int = 0, tol: float = 0.02,
                  size: tuple = (0.1, 0.3)) -> DensityCheckReport:
    """Compare ``int_H |det gbar|`` with ``V(G(H))`` on random subcubes ``H`` of ``X``."""
    X = _as_set(X)
    rng = np.random.default_rng(seed)
    box = X.bounds
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    wmin = float(np.min(hi - lo))
    L = _lipschitz(G, X, L, seed)
    results = []
    attempts = 0
    while len(results) < trials and attempts < 50 * trials:
        attempts += 1
        hw = 0.5 * wmin * rng.uniform(*size)
        c = lo + hw + (hi - lo - 2 * hw) * rng.random(box.dim)
        cube = Cube(c, hw)
        if X.classify_cells(cube.lo[None], cube.hi[None])[0] != INSIDE:
            continue
        integral = integral_bracket(field, BoxSet(cube), [depth]).bracket
        content = pushforward_content(G, BoxSet(cube), depth, L)
        scale = max(abs(content.midpoint), abs(integral.midpoint), 1e-300)
        overlap = integral.lower <= content.outer and content.inner <= integral.upper
        passed = overlap or abs(integral.midpoint - content.midpoint) / scale < tol
        results.append(DensityTrial(cube, integral, content, passed))
    rate = sum(t.passed for t in results) / len(results) if results else 0.0
    return DensityCheckReport(results, rate)


@dataclass
class PhiDerivativeReport:
    estimate: float
    density: float
    gap: float
    abs_gap: float
    trace: list  # (radius, centred quotient, relative gap)


def phi_derivative_check(G: Callable, u, radii, field: Optional[DensityField] = None, depth: int = 7,
                         L: Optional[float] = None, seed: int = 0, shifted: bool = False):
    """Set-function derivative of ``Phi(I) = V(G(I))`` at ``u`` against ``|det gbar(u)|``."""
    u = as_points(u)[0]
    radii = [float(r) for r in radii]
    reach = max(radii)
    if field is None:
        field = DensityField(G, AxisBox(u - reach, u + reach), cache=False)
    if L is None:
        L = lipschitz_estimate(G, AxisBox(u - reach, u + reach), seed=seed)

    def Phi(cube):
        return pushforward_content(G, BoxSet(cube), depth, L).midpoint

    est = setfn_derivative(Phi, u, radii, shifted=shifted)
    dens = field.density(u)
    scale = max(dens, 1e-300)
    trace = [(r, q, abs(q - dens) / scale) for r, q, _, _ in est.trace]
    return PhiDerivativeReport(est.estimate, dens, abs(est.estimate - dens) / scale,
                               abs(est.estimate - dens), trace)


# -- hypothesis probes ---------------------------------------------------------

@dataclass(frozen=True)
class InjectivityWitness:
    x: tuple
    y: tuple
    gx: tuple
    gy: tuple

    @property
    def separation(self):
        return float(np.max(np.abs(np.subtract(self.x, self.y))))


def _near_sets(pts, sets, eps):
    """Mask of points within max-norm distance ``eps`` of any declared set."""
    near = np.zeros(len(pts), dtype=bool)
    for K in sets or ():
        box = as_box(K)
        gap = np.maximum(np.maximum(np.asarray(box.lo) - pts, pts - np.asarray(box.hi)), 0.0)
        near |= np.max(gap, axis=1) <= eps
    return near


def _lattice(box, n):
    axes = [np.linspace(a, b, n) for a, b in zip(box.lo, box.hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def injectivity_probe(G: Callable, X, samples: int = 129, separation: Optional[float] = None,
                      tol: float = 1e-9, K: Sequence = (), max_witnesses: int = 50):
    """Pairs of lattice points far apart in ``X`` with (nearly) equal images.

    ``samples`` points per axis (a dyadic count plus one keeps periodic
    structure on the lattice); close image pairs are found with a k-d tree
    under the max norm.  Points within one lattice spacing of a declared
    set in ``K`` are ignored.  Returns ``(witnesses, total_pairs)``.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    X = _as_set(X)
    box = X.bounds
    P = _lattice(box, samples)
    P = P[X.classify_points(P) == INSIDE]
    spacing = float(np.max(box.widths)) / (samples - 1)
    if separation is None:
        separation = 0.05 * box.diameter
    P = P[~_near_sets(P, K, spacing)]
    if len(P) < 2:
        return [], 0
    V = call_map(G, P)
    scale = max(1.0, float(np.abs(V).max()))
    pairs = cKDTree(V).query_pairs(r=tol * scale, p=np.inf, output_type="ndarray")
    if len(pairs) == 0:
        return [], 0
    far = max_norm(P[pairs[:, 0]] - P[pairs[:, 1]]) >= separation
    pairs = pairs[far]
    pairs = pairs[np.lexsort(pairs.T[::-1])]
    wit = [
        InjectivityWitness(tuple(map(float, P[a])), tuple(map(float, P[b])),
                           tuple(map(float, V[a])), tuple(map(float, V[b])))
        for a, b in pairs[:max_witnesses]
    ]
    return wit, int(len(pairs))


def strong_diff_spot_checks(G: Callable, X, points_per_axis: int = 3, radii=None, K: Sequence = (),
                            tol: float = 1e-3):
    """Run the strong-differentiability probe on an interior lattice of ``X`` minus ``K``."""
    X = _as_set(X)
    box = X.bounds
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    n = points_per_axis
    frac = (np.arange(n) + 0.5) / n
    mesh = np.meshgrid(*([frac] * box.dim), indexing="ij")
    P = lo + (hi - lo) * np.stack([g.ravel() for g in mesh], axis=1)
    P = P[X.classify_points(P) == INSIDE]
    wmin = float(np.min(hi - lo))
    if radii is None:
        radii = tuple(r * wmin for r in (1e-2, 1e-3, 1e-4))
    P = P[~_near_sets(P, K, radii[0])]
    failures, reports = [], []
    for x in P:
        rep = strong_diff_test(G, x, radii=radii, tol=tol)
        reports.append((tuple(map(float, x)), rep))
        if rep.verdict == FAIL:
            failures.append((tuple(map(float, x)), rep.defect_by_radius))
    return failures, reports


# -- change of variables -------------------------------------------------------

@dataclass
class CovOptions:
    depths: tuple = (6, 8)
    radii: Optional[tuple] = None
    k: int = 4
    estimator: str = "extrapolate"
    mode: BoundMode = field(default_factory=Sampled)
    L: Optional[float] = None
    K: tuple = ()
    tol: float = 1e-6
    rel_tol: float = 0.01
    jacobian: Optional[Callable] = None
    probe_samples: int = 129
    separation: Optional[float] = None
    probe_tol: float = 1e-9
    strong_diff_points: int = 3
    seed: int = 0
    det_tol: float = 1e-6
    source_extra: int = 0
    max_cells: int = DEFAULT_MAX_CELLS


@dataclass
class CovReport:
    lhs: IntegralResult
    rhs: IntegralResult
    ratio: float
    verdict: str
    hypothesis_flags: dict
    threshold: float
    lipschitz: float
    field: dict
    timings: dict = field(default_factory=dict)
    injectivity_pairs: int = 0


def cov_verdict(lhs: Bracket, rhs: Bracket, rel_tol: float = 0.01):
    """Verdict and threshold from two brackets.

    Verified when the brackets overlap or the midpoint ratio is within
    ``1 +- max(rel_tol, combined relative widths)``; Violated when they are
    disjoint and the ratio is off by more than twice that; else Inconclusive.
    """
    lm, rm = lhs.midpoint, rhs.midpoint
    if lm == 0:
        ratio = 1.0 if rm == 0 else float("inf")
    else:
        ratio = rm / lm
    rel = lhs.width / max(abs(lm), 1e-300) + rhs.width / max(abs(rm), 1e-300)
    thr = max(rel_tol, rel)
    if lhs.overlaps(rhs) or abs(ratio - 1) <= thr:
        return VERIFIED, ratio, thr
    if abs(ratio - 1) > 2 * thr:
        return VIOLATED, ratio, thr
    return INCONCLUSIVE, ratio, thr


def change_of_variables(f: Callable, G: Callable, X, opts: Optional[CovOptions] = None) -> CovReport:
    """Check ``int_{G(X)} f = int_X f(G(x)) |det gbar(x)| dx`` numerically.

    The right side integrates over ``X`` with the density field of ``G`` (or
    with ``|det opts.jacobian|`` when a derivative is declared).  The left
    side integrates ``f`` over the :class:`ImageSet` of ``X``, extended by
    zero off its certified interior.  Injectivity and strong-differentiability
    probes run on ``X`` minus the declared null set ``opts.K``.
    """
    opts = opts or CovOptions()
    X = _as_set(X)
    depths = tuple(int(d) for d in opts.depths)
    timings = {}

    t0 = time.perf_counter()
    field_ = DensityField(G, X, radii=opts.radii, k=opts.k, estimator=opts.estimator, cache=False)
    if opts.jacobian is not None:
        jac = opts.jacobian

        def weight(P):
            J = np.asarray(jac(P), dtype=float).reshape(len(P), X.dim, X.dim)
            return np.abs(np.linalg.det(J))
    else:
        weight = field_.density_many

    def psi(P):
        return call_scalar(f, call_map(G, P)) * weight(P)

    rhs = integral_bracket(psi, X, depths, opts.mode, opts.tol, opts.max_cells)
    timings["rhs"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    L = _lipschitz(G, X, opts.L, opts.seed)
    image = ImageSet(G, X, depths[-1], L, source_extra=opts.source_extra, det_tol=opts.det_tol,
                     max_cells=opts.max_cells)
    lhs = integral_bracket(f, image, depths, opts.mode, opts.tol, opts.max_cells)
    timings["lhs"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    witnesses, npairs = injectivity_probe(G, X, opts.probe_samples, opts.separation, opts.probe_tol, opts.K)
    failures, _ = strong_diff_spot_checks(G, X, opts.strong_diff_points, K=opts.K)
    timings["probes"] = time.perf_counter() - t0

    verdict, ratio, thr = cov_verdict(lhs.bracket, rhs.bracket, opts.rel_tol)
    flags = {"injectivity_witnesses": witnesses, "strong_diff_failures": failures}
    desc = field_.describe()
    desc["declared_jacobian"] = opts.jacobian is not None
    return CovReport(lhs, rhs, ratio, verdict, flags, thr, L, desc, timings, npairs)


# -- Sard --------------------------------------------------------------------

@dataclass
class SardReport:
    det_tolerance: float
    singular_cell_count: list  # (depth, count)
    image_outer_content_by_depth: list  # (depth, value)
    lipschitz: float


def _corner_and_centre_density(field: DensityField, box: AxisBox, counts):
    """min of |det gbar| over the corners and centre of every grid cell (dense array).

    Corners on the boundary of the box move inward by 1% of a cell, since the
    field is zero on the boundary itself.
    """
    m = box.dim
    counts = list(counts)
    lo0 = np.asarray(box.lo)
    widths = box.widths
    inset = 0.01 * widths / np.asarray(counts)
    corner_idx = grid_indices([c + 1 for c in counts])
    corners = np.clip(lo0 + widths * (corner_idx / np.asarray(counts)), lo0 + inset, lo0 + widths - inset)
    dens_c = field.density_many(corners).reshape([c + 1 for c in counts])
    centres = lo0 + widths * ((grid_indices(counts) + 0.5) / np.asarray(counts))
    out = field.density_many(centres).reshape(counts)
    for off in np.ndindex(*([2] * m)):
        sl = tuple(slice(o, o + c) for o, c in zip(off, counts))
        out = np.minimum(out, dens_c[sl])
    return out


def sard_image_content(G: Callable, X, det_tol: float, depths, field: Optional[DensityField] = None,
                       L: Optional[float] = None, seed: int = 0, max_cells: int = DEFAULT_MAX_CELLS):
    """Outer content of the image of the near-singular cells along a depth schedule.

    A grid cell of ``X`` is singular when ``|det gbar|`` is below ``det_tol``
    at one of its corners or its centre.  Its image is covered by the ball
    ``B(G(centre), L half_width)``; the reported value is the rasterized
    volume of the union of those balls at the same depth.
    """
    X = _as_set(X)
    field = field or DensityField(G, X, cache=False)
    L = _lipschitz(G, X, L, seed)
    counts_by, values = [], []
    box = X.bounds
    for d in depths:
        counts = near_cubic_counts(box, d)
        check_cell_count(counts, max_cells)
        low = _corner_and_centre_density(field, box, counts)
        idx = grid_indices(counts)
        lo, hi = cell_bounds(box, counts, idx)
        keep = (X.classify_cells(lo, hi) != OUTSIDE) & (low.ravel() < det_tol)
        n_sing = int(np.count_nonzero(keep))
        counts_by.append((int(d), n_sing))
        if n_sing == 0:
            values.append((int(d), 0.0))
            continue
        centres = 0.5 * (lo[keep] + hi[keep])
        half = 0.5 * np.max(hi[keep] - lo[keep], axis=1)
        union = BallUnion.from_balls(call_map(G, centres), L * half, d, max_cells)
        values.append((int(d), union.volume))
    return SardReport(det_tol, counts_by, values, L)
