"""Darboux sums and bracketed integrals over Jordan sets.

Cell infima and suprema of a black-box ``f`` are estimated from a sample
lattice (``samples_per_axis`` points per axis, so the corners when it is 2,
plus the cell centre).  Two policies turn samples into bounds:

``Sampled``
    min / max of the samples.  Cheap, usually tight, not rigorous.
``Modulus``
    samples widened by ``lipschitz_f * half_width``.  Every point of a cell
    lies within ``half_width`` (max norm) of the centre, so these are true
    lower/upper bounds whenever ``lipschitz_f`` is a valid Lipschitz
    constant of ``f``.

:func:`integral_bracket` integrates the extension by zero of ``f`` off
``X``.  Cells that straddle the boundary contribute ``min(inf, 0) * V`` and
``max(sup, 0) * V``, and ``f`` is only ever evaluated at points the
classifier reports Inside.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from ._util import as_points, call_scalar
from .geometry import DEFAULT_MAX_CELLS, INSIDE, OUTSIDE, UNKNOWN, JordanSet, as_box
from .partition import CubePartition, DottedPartition

_EVAL_CHUNK = 1 << 18


@dataclass(frozen=True)
class Sampled:
    samples_per_axis: int = 2

    def __post_init__(self):
        if self.samples_per_axis < 1:
            raise ValueError("samples_per_axis must be >= 1")

    label = "estimate"


@dataclass(frozen=True)
class Modulus:
    lipschitz_f: float
    samples_per_axis: int = 2

    def __post_init__(self):
        if self.samples_per_axis < 1:
            raise ValueError("samples_per_axis must be >= 1")
        if not self.lipschitz_f >= 0:
            raise ValueError("lipschitz_f must be nonnegative")

    label = "enclosure"


BoundMode = Union[Sampled, Modulus]


@dataclass(frozen=True)
class Bracket:
    lower: float
    upper: float
    depth: int = 0
    label: str = "estimate"

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"bracket with lower {self.lower!r} > upper {self.upper!r}")

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def midpoint(self):
        return 0.5 * (self.lower + self.upper)

    def contains(self, value, slack=0.0):
        return self.lower - slack <= value <= self.upper + slack

    def overlaps(self, other):
        return self.lower <= other.upper and other.lower <= self.upper


@dataclass(frozen=True)
class TraceEntry:
    depth: int
    lower: float
    upper: float
    boundary_cells: int

    @property
    def width(self):
        return self.upper - self.lower


@dataclass
class IntegralResult:
    bracket: Bracket
    trace: list = field(default_factory=list)
    converged: bool = False
    tol: float = 1e-6

    @property
    def lower(self):
        return self.bracket.lower

    @property
    def upper(self):
        return self.bracket.upper


# -- per-cell bounds ---------------------------------------------------------

def _unit_lattice(m, s):
    """Sample offsets in [0, 1]^m: s points per axis (centre only when s == 1) plus the centre."""
    if s == 1:
        return np.full((1, m), 0.5)
    t = np.linspace(0.0, 1.0, s)
    mesh = np.meshgrid(*([t] * m), indexing="ij")
    lattice = np.stack([g.ravel() for g in mesh], axis=1)
    return np.vstack([lattice, np.full((1, m), 0.5)])


def _cell_bounds(f, lo, hi, mode):
    lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
    n, m = lo.shape
    unit = _unit_lattice(m, mode.samples_per_axis)
    inf = np.empty(n)
    sup = np.empty(n)
    step = max(1, _EVAL_CHUNK // len(unit))
    for start in range(0, n, step):
        a, b = lo[start : start + step], hi[start : start + step]
        pts = a[:, None, :] + (b - a)[:, None, :] * unit[None]
        vals = call_scalar(f, pts.reshape(-1, m)).reshape(len(a), len(unit))
        inf[start : start + step] = vals.min(axis=1)
        sup[start : start + step] = vals.max(axis=1)
    if isinstance(mode, Modulus):
        hw = 0.5 * np.max(hi - lo, axis=1)
        inf = inf - mode.lipschitz_f * hw
        sup = sup + mode.lipschitz_f * hw
    return inf, sup


def cell_inf_sup(f: Callable, H, mode: BoundMode = Sampled()):
    """Estimated (inf, sup) of ``f`` on the cube or box ``H``."""
    box = as_box(H)
    inf, sup = _cell_bounds(f, np.asarray(box.lo)[None], np.asarray(box.hi)[None], mode)
    return float(inf[0]), float(sup[0])


def lower_sum(f, partition: CubePartition, mode: BoundMode = Sampled()):
    inf, _ = _cell_bounds(f, partition.lo, partition.hi, mode)
    return float(np.sum(inf * partition.volumes))


def upper_sum(f, partition: CubePartition, mode: BoundMode = Sampled()):
    _, sup = _cell_bounds(f, partition.lo, partition.hi, mode)
    return float(np.sum(sup * partition.volumes))


def darboux_sums(f, partition: CubePartition, mode: BoundMode = Sampled()):
    """(lower, upper) sums from a single pass of evaluations."""
    inf, sup = _cell_bounds(f, partition.lo, partition.hi, mode)
    vol = partition.volumes
    return float(np.sum(inf * vol)), float(np.sum(sup * vol))


def oscillation_sum(f, partition: CubePartition, mode: BoundMode = Sampled()):
    inf, sup = _cell_bounds(f, partition.lo, partition.hi, mode)
    return float(np.sum((sup - inf) * partition.volumes))


def riemann_sum(f, dotted: DottedPartition):
    """``sum f(tag) * V(cell)`` over a dotted partition."""
    vals = call_scalar(f, dotted.tags)
    return float(np.sum(vals * dotted.partition.volumes))


# -- integrals over Jordan sets ---------------------------------------------

def _evaluate_where(f, coords_of, mask, q):
    """Evaluate f at the grid points selected by ``mask``; NaN elsewhere.

    ``coords_of(idx)`` maps (K, m) integer indices to points.  Values carry a
    trailing component axis of length ``q``.
    """
    out = np.full(mask.shape + (q,), np.nan)
    idx = np.argwhere(mask)
    for start in range(0, len(idx), _EVAL_CHUNK):
        chunk = idx[start : start + _EVAL_CHUNK]
        pts = coords_of(chunk)
        vals = call_scalar(f, pts).reshape(len(chunk), q)
        out[tuple(chunk.T)] = vals
    return out


def _lattice_owner_masks(codes, s):
    """Masks on the (n(s-1)+1)^m lattice: points of some Inside cell / of some non-Outside cell."""
    m = codes.ndim
    n = codes.shape[0]
    size = n * (s - 1) + 1
    of_inside = np.zeros((size,) * m, dtype=bool)
    of_candidate = np.zeros((size,) * m, dtype=bool)
    inside = codes == INSIDE
    candidate = codes != OUTSIDE
    for off in np.ndindex(*([s] * m)):
        sl = tuple(slice(o, o + n * (s - 1), s - 1) for o in off)
        of_inside[sl] |= inside
        of_candidate[sl] |= candidate
    return of_inside, of_candidate


def _cell_reduce(lattice_vals, center_vals, n, s):
    """Per-cell nan-aware min/max over the cell's lattice points and centre."""
    m = center_vals.ndim - 1
    lo = center_vals.copy()
    hi = center_vals.copy()
    if s > 1:
        for off in np.ndindex(*([s] * m)):
            sl = tuple(slice(o, o + n * (s - 1), s - 1) for o in off)
            v = lattice_vals[sl]
            lo = np.fmin(lo, v)
            hi = np.fmax(hi, v)
    return lo, hi


class _Integrator:
    """Shared engine for scalar and matrix-valued integrands."""

    def __init__(self, f, X: JordanSet, mode, q, max_cells):
        self.f = f
        self.X = X
        self.mode = mode
        self.q = q
        self.max_cells = max_cells
        self.box = X.bounds
        self.m = X.dim
        self._prev = None

    def level(self, depth):
        X, m, q, s = self.X, self.m, self.q, self.mode.samples_per_axis
        n = 2**depth
        codes = X.classify_grid(depth, self.max_cells)
        lo0 = np.asarray(self.box.lo)
        widths = self.box.widths
        cell_vol = self.box.volume / float(n**m)

        # centres: evaluate for Inside cells, and for Unknown cells whose centre is Inside
        unknown = codes == UNKNOWN
        def centre_coords(idx):
            return lo0 + widths * ((idx + 0.5) / n)
        need_c = codes == INSIDE
        if unknown.any():
            uidx = np.argwhere(unknown)
            ok = X.classify_points(centre_coords(uidx)) == INSIDE
            need_c[tuple(uidx[ok].T)] = True
        centre_vals = _evaluate_where(self.f, centre_coords, need_c, q)

        if s > 1:
            size = n * (s - 1)
            def lattice_coords(idx):
                pts = lo0 + widths * (idx / size)
                return np.where(idx == size, np.asarray(self.box.hi), pts)
            need_l, candidate_l = _lattice_owner_masks(codes, s)
            extra = candidate_l & ~need_l
            if extra.any():
                eidx = np.argwhere(extra)
                ok = X.classify_points(lattice_coords(eidx)) == INSIDE
                need_l[tuple(eidx[ok].T)] = True
            lattice_vals = _evaluate_where(self.f, lattice_coords, need_l, q)
        else:
            lattice_vals = None

        inf, sup = _cell_reduce(lattice_vals, centre_vals, n, s)
        if isinstance(self.mode, Modulus):
            hw = 0.5 * float(np.max(widths)) / n
            inf = inf - self.mode.lipschitz_f * hw
            sup = sup + self.mode.lipschitz_f * hw
            if self._prev is not None:
                p_depth, p_inf, p_sup = self._prev
                factor = 2 ** (depth - p_depth)
                for axis in range(m):
                    p_inf = np.repeat(p_inf, factor, axis=axis)
                    p_sup = np.repeat(p_sup, factor, axis=axis)
                inf = np.where(np.isnan(inf), p_inf, np.fmax(inf, p_inf))
                sup = np.where(np.isnan(sup), p_sup, np.fmin(sup, p_sup))
            self._prev = (depth, inf, sup)

        inside = codes == INSIDE
        lower = np.zeros(q)
        upper = np.zeros(q)
        lower += np.sum(inf[inside], axis=0) * cell_vol
        upper += np.sum(sup[inside], axis=0) * cell_vol
        ui, us = inf[unknown], sup[unknown]
        lower += np.sum(np.minimum(np.nan_to_num(ui, nan=0.0), 0.0), axis=0) * cell_vol
        upper += np.sum(np.maximum(np.nan_to_num(us, nan=0.0), 0.0), axis=0) * cell_vol
        return lower, upper, int(np.count_nonzero(unknown))


def _check_schedule(schedule):
    schedule = [int(d) for d in np.atleast_1d(schedule)]
    if not schedule:
        raise ValueError("depth schedule is empty")
    if any(d < 0 for d in schedule):
        raise ValueError("depths must be nonnegative")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError(f"depth schedule must be strictly increasing, got {schedule}")
    return schedule


def integral_bracket(
    f: Callable,
    X: JordanSet,
    schedule,
    mode: BoundMode = Sampled(),
    tol: float = 1e-6,
    max_cells: int = DEFAULT_MAX_CELLS,
) -> IntegralResult:
    """Bracket for the integral of ``f`` over ``X`` along a dyadic depth schedule.

    Returns the bracket at the last depth together with a per-depth trace.
    ``converged`` is set when the final width (oscillation plus boundary
    slack) is below the absolute tolerance ``tol``.  In ``Modulus`` mode cell
    bounds are intersected with the bounds of the parent cell from the
    previous depth, which makes the lower bound nondecreasing and the upper
    bound nonincreasing along the schedule.
    """
    schedule = _check_schedule(schedule)
    engine = _Integrator(f, X, mode, 1, max_cells)
    trace = []
    for depth in schedule:
        lower, upper, nb = engine.level(depth)
        trace.append(TraceEntry(depth, float(lower[0]), float(upper[0]), nb))
    last = trace[-1]
    label = mode.label if X.label in ("exact", "certified") else f"{mode.label}/{X.label}"
    bracket = Bracket(last.lower, max(last.upper, last.lower), last.depth, label)
    return IntegralResult(bracket, trace, bracket.width < tol, tol)


def integrate_matrix(
    h: Callable,
    X: JordanSet,
    schedule,
    mode: BoundMode = Sampled(),
    tol: float = 1e-6,
    max_cells: int = DEFAULT_MAX_CELLS,
):
    """Entrywise brackets for a matrix-valued integrand.

    ``h`` maps (N, m) points to an (N, a, b) array; the result is an a x b
    nested list of :class:`IntegralResult`.
    """
    schedule = _check_schedule(schedule)
    probe = np.asarray(h(as_points(X.bounds.center, X.dim)), dtype=float)
    shape = probe.shape[1:] if probe.ndim == 3 else (probe.size,)
    q = int(np.prod(shape))
    engine = _Integrator(h, X, mode, q, max_cells)
    traces = []
    for depth in schedule:
        traces.append((depth,) + engine.level(depth))
    label = mode.label
    results = []
    for k in range(q):
        trace = [TraceEntry(d, float(lo[k]), float(hi[k]), nb) for d, lo, hi, nb in traces]
        last = trace[-1]
        br = Bracket(last.lower, max(last.upper, last.lower), last.depth, label)
        results.append(IntegralResult(br, trace, br.width < tol, tol))
    if len(shape) == 2:
        return [results[i * shape[1] : (i + 1) * shape[1]] for i in range(shape[0])]
    return results
