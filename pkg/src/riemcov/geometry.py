"""Cubes, boxes, Jordan sets and grid-based inner/outer Jordan content.

Everything lives in R^m with the max norm ``||x|| = max |x_i|``, so a closed
ball ``B(c, r)`` is the cube of side ``2r`` centred at ``c``.

A :class:`JordanSet` answers two questions, both vectorized:

* ``classify_points(P)`` -- Inside / Outside / Unknown for each row of ``P``;
* ``classify_cells(lo, hi)`` -- Inside (the closed cell lies in the set),
  Outside (the open cell misses the set) or Unknown, for each box.

:func:`content_bracket` turns the cell classification on a dyadic grid into
an (inner, outer) pair.  Unknown is always an allowed answer and is counted
towards the outer content only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._util import as_points, call_map, corner_offsets
from .errors import DimensionMismatch, GridTooLarge

DEFAULT_MAX_CELLS = 2**26

# inset used for the Outside test: corners pulled towards the centre so that
# a set touching a cell only along its boundary does not claim the cell
_INSET = 1e-9
_CHUNK = 1 << 19


class Membership(enum.IntEnum):
    OUTSIDE = 0
    INSIDE = 1
    UNKNOWN = -1


INSIDE = int(Membership.INSIDE)
OUTSIDE = int(Membership.OUTSIDE)
UNKNOWN = int(Membership.UNKNOWN)


class OverlapStatus(str, enum.Enum):
    OVERLAPPING = "overlapping"
    NON_OVERLAPPING = "non-overlapping"
    UNDETERMINED = "undetermined"


def _coords(values, name):
    coords = tuple(float(v) for v in np.atleast_1d(np.asarray(values, dtype=float)))
    if not coords:
        raise DimensionMismatch(f"{name} must have at least one coordinate")
    if not all(math.isfinite(c) for c in coords):
        raise ValueError(f"{name} has non-finite coordinates: {coords}")
    return coords


@dataclass(frozen=True)
class Cube:
    """Closed cube ``B(center, half_width)`` under the max norm."""

    center: tuple
    half_width: float

    def __post_init__(self):
        object.__setattr__(self, "center", _coords(self.center, "center"))
        hw = float(self.half_width)
        if not (hw > 0 and math.isfinite(hw)):
            raise ValueError(f"half_width must be positive and finite, got {self.half_width!r}")
        object.__setattr__(self, "half_width", hw)

    @property
    def dim(self):
        return len(self.center)

    @property
    def lo(self):
        return np.asarray(self.center) - self.half_width

    @property
    def hi(self):
        return np.asarray(self.center) + self.half_width

    @property
    def side(self):
        return 2.0 * self.half_width

    @property
    def volume(self):
        return cube_volume(self)

    def to_box(self):
        return AxisBox(self.lo, self.hi)

    def contains(self, points):
        pts = as_points(points, self.dim)
        return np.all(np.abs(pts - np.asarray(self.center)) <= self.half_width, axis=1)


@dataclass(frozen=True)
class AxisBox:
    """Closed axis-aligned box ``[lo_1, hi_1] x ... x [lo_m, hi_m]``."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo, hi = _coords(self.lo, "lo"), _coords(self.hi, "hi")
        if len(lo) != len(hi):
            raise DimensionMismatch(f"lo has {len(lo)} coordinates, hi has {len(hi)}")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"box with lo > hi: {lo} / {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_intervals(cls, intervals):
        intervals = list(intervals)
        return cls([a for a, _ in intervals], [b for _, b in intervals])

    @property
    def dim(self):
        return len(self.lo)

    @property
    def widths(self):
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def volume(self):
        return float(np.prod(self.widths))

    @property
    def center(self):
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))

    @property
    def diameter(self):
        return float(np.max(self.widths))

    def contains(self, points):
        pts = as_points(points, self.dim)
        return np.all((pts >= np.asarray(self.lo)) & (pts <= np.asarray(self.hi)), axis=1)

    def hull(self, other):
        return AxisBox(np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))


def cube_volume(c):
    """Volume ``(2 * half_width) ** m`` of a cube."""
    return (2.0 * c.half_width) ** c.dim


def as_box(region):
    if isinstance(region, AxisBox):
        return region
    if isinstance(region, Cube):
        return region.to_box()
    if isinstance(region, JordanSet):
        return region.bounds
    raise TypeError(f"expected Cube, AxisBox or JordanSet, got {type(region).__name__}")


# -- grids -------------------------------------------------------------------

def check_cell_count(counts, max_cells=DEFAULT_MAX_CELLS):
    total = math.prod(int(c) for c in counts)
    if total > max_cells:
        raise GridTooLarge(total, max_cells)
    return total


def cell_bounds(box, counts, idx):
    """Lower/upper corners of the grid cells with integer indices ``idx`` (N, m)."""
    counts = np.asarray(counts, dtype=np.int64)
    lo0 = np.asarray(box.lo)
    widths = box.widths
    idx = np.asarray(idx, dtype=np.int64)
    lo = lo0 + widths * (idx / counts)
    hi = lo0 + widths * ((idx + 1) / counts)
    # pin the far faces to the box exactly
    hi = np.where(idx + 1 == counts, np.asarray(box.hi), hi)
    return lo, hi


def grid_indices(counts):
    """All multi-indices of a grid in C order, shape (prod(counts), m)."""
    axes = [np.arange(int(c), dtype=np.int64) for c in counts]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def near_cubic_counts(box, depth):
    """Per-axis cell counts ``2**depth * a_j`` with power-of-two ``a_j`` chosen so
    that cells are as close to cubes as a dyadic grid allows."""
    widths = box.widths
    positive = widths[widths > 0]
    if positive.size == 0:
        return [1] * box.dim
    wmin = positive.min()
    counts = []
    for w in widths:
        if w <= 0:
            counts.append(1)
        else:
            counts.append(2**depth * 2 ** max(0, int(round(math.log2(w / wmin)))))
    return counts


def upsample(codes):
    """Split every cell of a dense grid array into 2^m children."""
    for axis in range(codes.ndim):
        codes = np.repeat(codes, 2, axis=axis)
    return codes


# -- Jordan sets -------------------------------------------------------------

class JordanSet:
    """Bounded set with a bounding box and a trichotomous membership oracle.

    Subclasses implement :meth:`classify_points` and :meth:`classify_cells`.
    ``label`` names the rigor of the classification ("exact", "certified",
    "convex-inner" or "heuristic").
    """

    label = "heuristic"
    hierarchy_start = 0

    def __init__(self, bounds):
        self.bounds = as_box(bounds)

    @property
    def dim(self):
        return self.bounds.dim

    def classify_points(self, points):
        raise NotImplementedError

    def classify_cells(self, lo, hi):
        raise NotImplementedError

    def classify_grid(self, depth, max_cells=DEFAULT_MAX_CELLS):
        """Dense array of cell codes on the dyadic grid with ``2**depth`` cells per axis.

        Refinement is hierarchical: only Unknown cells are split and
        re-classified, so Inside/Outside decisions are inherited by children
        and content brackets are monotone in ``depth``.
        """
        if depth < 0:
            raise ValueError("depth must be nonnegative")
        m = self.dim
        check_cell_count([2**depth] * m, max_cells)
        level = min(depth, self.hierarchy_start)
        n = 2**level
        idx = grid_indices([n] * m)
        codes = self._classify_chunked(n, idx).reshape((n,) * m)
        while level < depth:
            unknown = np.argwhere(codes == UNKNOWN)
            if unknown.size == 0:
                factor = 2 ** (depth - level)
                for axis in range(m):
                    codes = np.repeat(codes, factor, axis=axis)
                break
            codes = upsample(codes)
            level += 1
            n *= 2
            children = (unknown[:, None, :] * 2 + corner_offsets(m)[None, :, :]).reshape(-1, m)
            codes[tuple(children.T)] = self._classify_chunked(n, children)
        return codes

    def _classify_chunked(self, n, idx):
        out = np.empty(len(idx), dtype=np.int8)
        for start in range(0, len(idx), _CHUNK):
            sl = slice(start, start + _CHUNK)
            lo, hi = cell_bounds(self.bounds, [n] * self.dim, idx[sl])
            out[sl] = self.classify_cells(lo, hi)
        return out


def _tolerance(box):
    scale = np.maximum(np.maximum(np.abs(box.lo), np.abs(box.hi)), box.widths)
    return 1e-12 * np.maximum(scale, 1.0)


class BoxSet(JordanSet):
    """A closed axis-aligned box, classified exactly."""

    label = "exact"

    def __init__(self, box):
        box = as_box(box)
        super().__init__(box)
        self.box = box
        self._lo = np.asarray(box.lo)
        self._hi = np.asarray(box.hi)
        self._tol = _tolerance(box)

    def classify_points(self, points):
        inside = self.box.contains(as_points(points, self.dim))
        return np.where(inside, INSIDE, OUTSIDE).astype(np.int8)

    def classify_cells(self, lo, hi):
        lo, hi = np.asarray(lo), np.asarray(hi)
        tol = self._tol
        inside = np.all((lo >= self._lo - tol) & (hi <= self._hi + tol), axis=1)
        outside = np.any((hi <= self._lo + tol) | (lo >= self._hi - tol), axis=1)
        return np.where(outside, OUTSIDE, np.where(inside, INSIDE, UNKNOWN)).astype(np.int8)


class CubeUnion(JordanSet):
    """Finite union of pairwise non-overlapping cubes (or boxes), classified exactly."""

    label = "exact"

    def __init__(self, cubes: Sequence, bounds=None):
        boxes = [as_box(c) for c in cubes]
        if not boxes:
            raise ValueError("CubeUnion needs at least one cube")
        m = boxes[0].dim
        if any(b.dim != m for b in boxes):
            raise DimensionMismatch("cubes of different dimensions")
        self.cubes = list(cubes)
        self._lo = np.array([b.lo for b in boxes])
        self._hi = np.array([b.hi for b in boxes])
        hull = AxisBox(self._lo.min(axis=0), self._hi.max(axis=0))
        super().__init__(bounds if bounds is not None else hull)
        self._check_disjoint_interiors()

    def _check_disjoint_interiors(self):
        lo, hi = self._lo, self._hi
        overlap = np.clip(np.minimum(hi[:, None], hi[None]) - np.maximum(lo[:, None], lo[None]), 0, None)
        vol = np.prod(overlap, axis=2)
        np.fill_diagonal(vol, 0.0)
        scale = np.prod(hi - lo, axis=1).max()
        if (vol > 1e-12 * max(scale, 1e-300)).any():
            i, j = np.argwhere(vol > 1e-12 * scale)[0]
            raise ValueError(f"cubes {i} and {j} overlap")

    def classify_points(self, points):
        pts = as_points(points, self.dim)
        inside = np.zeros(len(pts), dtype=bool)
        for lo, hi in zip(self._lo, self._hi):
            inside |= np.all((pts >= lo) & (pts <= hi), axis=1)
        return np.where(inside, INSIDE, OUTSIDE).astype(np.int8)

    def classify_cells(self, lo, hi):
        lo, hi = np.asarray(lo), np.asarray(hi)
        covered = np.zeros(len(lo))
        for clo, chi in zip(self._lo, self._hi):
            ext = np.clip(np.minimum(hi, chi) - np.maximum(lo, clo), 0, None)
            covered += np.prod(ext, axis=1)
        vol = np.prod(hi - lo, axis=1)
        inside = covered >= vol * (1 - 1e-10)
        outside = covered <= vol * 1e-10
        return np.where(outside, OUTSIDE, np.where(inside, INSIDE, UNKNOWN)).astype(np.int8)


class ClassifiedSet(JordanSet):
    """A set given by a user membership function.

    ``classify`` maps an (N, m) array to N codes (``INSIDE``/``OUTSIDE``/
    ``UNKNOWN``) or to booleans.  A cell counts as Inside when its 2^m corners
    and centre are Inside; with ``convex_safe=True`` that test is exact for
    the inner content of a convex set, otherwise it is a heuristic.  A
    ``cell_certificate(lo, hi)`` returning codes per cell, when given,
    overrides the corner test and is the only way a cell becomes Inside.
    A cell is Outside when its centre and slightly inset corners are all
    Outside, which is a heuristic for any set.
    """

    hierarchy_start = 3

    def __init__(self, bounds, classify: Callable, convex_safe=False, cell_certificate=None):
        super().__init__(bounds)
        self.classify = classify
        self.convex_safe = convex_safe
        self.cell_certificate = cell_certificate
        if cell_certificate is not None:
            self.label = "certified"
        elif convex_safe:
            self.label = "convex-inner"

    def classify_points(self, points):
        pts = as_points(points, self.dim)
        raw = np.asarray(self.classify(pts))
        if raw.dtype == bool:
            return np.where(raw, INSIDE, OUTSIDE).astype(np.int8)
        codes = raw.astype(np.int8).reshape(len(pts))
        if not np.isin(codes, (INSIDE, OUTSIDE, UNKNOWN)).all():
            raise ValueError("classifier returned codes outside {INSIDE, OUTSIDE, UNKNOWN}")
        return codes

    def classify_cells(self, lo, hi):
        lo, hi = np.asarray(lo), np.asarray(hi)
        n, m = lo.shape
        off = corner_offsets(m).astype(float)
        width = hi - lo
        corners = lo[:, None, :] + width[:, None, :] * off[None]
        inset = lo[:, None, :] + width[:, None, :] * (off * (1 - 2 * _INSET) + _INSET)[None]
        center = 0.5 * (lo + hi)
        k = len(off)
        pts = np.concatenate([corners.reshape(-1, m), inset.reshape(-1, m), center])
        codes = self.classify_points(pts)
        c_corner = codes[: n * k].reshape(n, k)
        c_inset = codes[n * k : 2 * n * k].reshape(n, k)
        c_center = codes[2 * n * k :]
        inside = np.all(c_corner == INSIDE, axis=1) & (c_center == INSIDE)
        outside = np.all(c_inset == OUTSIDE, axis=1) & (c_center == OUTSIDE)
        out = np.where(outside, OUTSIDE, np.where(inside, INSIDE, UNKNOWN)).astype(np.int8)
        if self.cell_certificate is not None:
            cert = np.asarray(self.cell_certificate(lo, hi)).astype(np.int8).reshape(n)
            out = np.where(out == INSIDE, UNKNOWN, out).astype(np.int8)
            out = np.where(cert != UNKNOWN, cert, out).astype(np.int8)
        return out


# -- content -----------------------------------------------------------------

@dataclass(frozen=True)
class ContentBracket:
    inner: float
    outer: float
    depth: int
    label: str = "exact"

    @property
    def width(self):
        return self.outer - self.inner

    @property
    def midpoint(self):
        return 0.5 * (self.inner + self.outer)

    def contains(self, value, slack=0.0):
        return self.inner - slack <= value <= self.outer + slack


def content_bracket(S: JordanSet, depth: int, max_cells=DEFAULT_MAX_CELLS):
    """Inner and outer Jordan content of ``S`` on the dyadic grid of its bounding box."""
    codes = S.classify_grid(depth, max_cells)
    cell_volume = S.bounds.volume / float(2 ** (depth * S.dim))
    inner = np.count_nonzero(codes == INSIDE) * cell_volume
    outer = np.count_nonzero(codes != OUTSIDE) * cell_volume
    return ContentBracket(float(inner), float(outer), depth, S.label)


@dataclass(frozen=True)
class OverlapProfile:
    status: OverlapStatus
    witness: object  # AxisBox of a cell Inside both sets, or None
    shared_outer: float  # total volume of cells not Outside either set
    depth: int


def overlap_profile(A: JordanSet, B: JordanSet, depth: int, max_cells=DEFAULT_MAX_CELLS):
    """Overlap status of the interiors of ``A`` and ``B`` on the grid of their joint hull."""
    if A.dim != B.dim:
        raise DimensionMismatch(f"sets of dimension {A.dim} and {B.dim}")
    hull = A.bounds.hull(B.bounds)
    counts = [2**depth] * A.dim
    check_cell_count(counts, max_cells)
    cell_volume = hull.volume / float(2 ** (depth * A.dim))
    shared = 0
    witness = None
    total = math.prod(counts)
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        idx = np.stack(np.unravel_index(flat, counts), axis=1)
        lo, hi = cell_bounds(hull, counts, idx)
        ca = A.classify_cells(lo, hi)
        cb = B.classify_cells(lo, hi)
        both_in = np.flatnonzero((ca == INSIDE) & (cb == INSIDE))
        if both_in.size and witness is None:
            k = both_in[0]
            witness = AxisBox(lo[k], hi[k])
        shared += int(np.count_nonzero((ca != OUTSIDE) & (cb != OUTSIDE)))
    if witness is not None:
        status = OverlapStatus.OVERLAPPING
    elif shared == 0:
        status = OverlapStatus.NON_OVERLAPPING
    else:
        status = OverlapStatus.UNDETERMINED
    return OverlapProfile(status, witness, shared * cell_volume, depth)


def find_overlap(A: JordanSet, B: JordanSet, depth: int, max_cells=DEFAULT_MAX_CELLS):
    """Overlap status plus a witness cell when Overlapping."""
    prof = overlap_profile(A, B, depth, max_cells)
    return prof.status, prof.witness


def interiors_overlap(A: JordanSet, B: JordanSet, depth: int, max_cells=DEFAULT_MAX_CELLS):
    """Overlapping if some grid cell is Inside both sets; NonOverlapping if no
    cell is non-Outside for both; Undetermined otherwise."""
    return overlap_profile(A, B, depth, max_cells).status


class BallUnion:
    """Union of closed max-norm balls ``B(c_k, r_k)`` rasterized onto a dyadic grid.

    The grid has ``2**depth`` cells per axis over ``bounds``; a cell is
    occupied when its interior meets some ball (up to a 1e-9 cell fraction
    shaved off touching faces).  ``volume`` is the total volume of occupied
    cells, an upper bound for the volume of the union.  Balls are added in
    chunks with :meth:`add`; :meth:`finalize` freezes the raster.
    """

    def __init__(self, bounds, depth, max_cells=DEFAULT_MAX_CELLS):
        self.bounds = as_box(bounds)
        m = self.bounds.dim
        self.depth = depth
        self.n = n = 2**depth
        check_cell_count([n] * m, max_cells)
        self._origin = np.asarray(self.bounds.lo)
        self._h = self.bounds.widths / n
        self._shape = (n + 1,) * m
        self._diff = np.zeros((n + 1) ** m, dtype=np.int64)
        self.count = 0
        self.occupied = None

    @classmethod
    def from_balls(cls, centers, radii, depth, max_cells=DEFAULT_MAX_CELLS):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(centers),))
        if len(centers) == 0:
            raise ValueError("BallUnion needs at least one ball")
        lo = (centers - radii[:, None]).min(axis=0)
        hi = (centers + radii[:, None]).max(axis=0)
        union = cls(AxisBox(lo, hi), depth, max_cells)
        union.add(centers, radii)
        return union.finalize()

    def add(self, centers, radii):
        if self.occupied is not None:
            raise RuntimeError("BallUnion is already finalized")
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(centers),))
        if (radii < 0).any():
            raise ValueError("negative ball radius")
        m = centers.shape[1]
        strides = np.array([np.prod(self._shape[a + 1 :], dtype=np.int64) for a in range(m)])
        for start in range(0, len(centers), _CHUNK):
            c = centers[start : start + _CHUNK]
            r = radii[start : start + _CHUNK, None]
            i0, i1 = self._index_range(c - r, c + r)
            i1 = np.maximum(i1, np.minimum(i0 + 1, self.n))
            i0 = np.minimum(i0, i1 - 1)
            base = i0 @ strides
            step = (i1 - i0) * strides
            for off in corner_offsets(m):
                np.add.at(self._diff, base + step @ off, -1 if off.sum() % 2 else 1)
        self.count += len(centers)
        return self

    def finalize(self):
        m = self.bounds.dim
        n = self.n
        diff = self._diff.reshape(self._shape)
        for axis in range(m):
            np.cumsum(diff, axis=axis, out=diff)
        self.occupied = diff[(slice(0, n),) * m] > 0
        self._diff = None
        self.cell_volume = float(np.prod(self._h))
        self.volume = float(np.count_nonzero(self.occupied)) * self.cell_volume
        inner = self.occupied.astype(np.int32)
        for axis in range(m):
            np.cumsum(inner, axis=axis, out=inner)
        prefix = np.zeros(self._shape, dtype=np.int32)
        prefix[(slice(1, None),) * m] = inner
        self._prefix = prefix
        return self

    def _index_range(self, lo, hi):
        h = np.where(self._h > 0, self._h, 1.0)
        flat = self._h <= 0
        i0 = np.floor((lo - self._origin) / h + 1e-9).astype(np.int64)
        i1 = np.ceil((hi - self._origin) / h - 1e-9).astype(np.int64)
        i0 = np.where(flat, 0, i0)
        i1 = np.where(flat, self.n, i1)
        return np.clip(i0, 0, self.n), np.clip(i1, 0, self.n)

    def _block_count(self, i0, i1):
        m = i0.shape[1]
        total = np.zeros(len(i0), dtype=np.int64)
        for off in corner_offsets(m):
            corner = np.where(off[None, :] == 1, i1, i0)
            sign = -1 if (m - off.sum()) % 2 else 1
            total += sign * self._prefix[tuple(corner.T)].astype(np.int64)
        empty = np.any(i1 <= i0, axis=1)
        return np.where(empty, 0, total)

    def meets_boxes(self, lo, hi):
        """True where the box [lo, hi] meets an occupied cell."""
        lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
        i0, i1 = self._index_range(lo, hi)
        outside = np.any((hi < np.asarray(self.bounds.lo)) | (lo > np.asarray(self.bounds.hi)), axis=1)
        return (self._block_count(i0, i1) > 0) & ~outside

    def may_contain(self, points):
        """False only for points certainly outside every ball."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h = np.where(self._h > 0, self._h, 1.0)
        t = (pts - self._origin) / h
        i0 = np.clip(np.floor(t - 1e-9).astype(np.int64), 0, self.n)
        i1 = np.clip(np.floor(t + 1e-9).astype(np.int64) + 1, 0, self.n)
        outside_hull = np.any((pts < np.asarray(self.bounds.lo)) | (pts > np.asarray(self.bounds.hi)), axis=1)
        return (self._block_count(i0, i1) > 0) & ~outside_hull


def iter_source_cover(H: JordanSet, depth: int, max_cells=DEFAULT_MAX_CELLS, chunk=_CHUNK):
    """Yield (centres, half-widths) of the near-cubic grid cells not Outside ``H``, in chunks."""
    counts = near_cubic_counts(H.bounds, depth)
    total = check_cell_count(counts, max_cells)
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total), dtype=np.int64)
        idx = np.stack(np.unravel_index(flat, counts), axis=1)
        lo, hi = cell_bounds(H.bounds, counts, idx)
        keep = H.classify_cells(lo, hi) != OUTSIDE
        if keep.any():
            yield 0.5 * (lo[keep] + hi[keep]), 0.5 * np.max(hi[keep] - lo[keep], axis=1)


def source_cover(H: JordanSet, depth: int, max_cells=DEFAULT_MAX_CELLS):
    """Centres and max-norm half-widths of the near-cubic grid cells not Outside ``H``."""
    parts = list(iter_source_cover(H, depth, max_cells))
    if not parts:
        return np.empty((0, H.dim)), np.empty(0)
    return np.concatenate([c for c, _ in parts]), np.concatenate([h for _, h in parts])


def image_ball_union(G: Callable, H: JordanSet, L: float, depth: int, max_cells=DEFAULT_MAX_CELLS,
                     source_depth=None):
    """Rasterized union of the balls ``B(G(c_k), L r_k)`` over a grid cover of ``H``.

    Two streaming passes over the cover: the first finds the hull of the
    balls, the second rasterizes them.  Returns None when ``H`` has no
    non-Outside cell.
    """
    if L < 0:
        raise ValueError("Lipschitz constant must be nonnegative")
    sd = depth if source_depth is None else source_depth
    # hull from a coarse cover: for a valid L each fine ball lies in the ball
    # of the coarse cell containing it
    lo = hi = None
    for centers, half in iter_source_cover(H, max(0, sd - 3), max_cells):
        img = call_map(G, centers, "G")
        r = L * half[:, None]
        clo, chi = (img - r).min(axis=0), (img + r).max(axis=0)
        lo = clo if lo is None else np.minimum(lo, clo)
        hi = chi if hi is None else np.maximum(hi, chi)
    if lo is None:
        return None
    union = BallUnion(AxisBox(lo, hi), depth, max_cells)
    for centers, half in iter_source_cover(H, sd, max_cells):
        union.add(call_map(G, centers, "G"), L * half)
    return union.finalize()


def outer_content_of_image(G: Callable, H: JordanSet, L: float, depth: int, max_cells=DEFAULT_MAX_CELLS):
    """Upper bound for the outer content of ``G(H)`` from a Lipschitz constant ``L``.

    ``H`` is covered by near-cubic grid cells ``I_k = B(c_k, r_k)``; since
    ``G(I_k)`` lies in ``B(G(c_k), L r_k)`` the returned value, the
    rasterized volume of the union of those balls, bounds ``V*(G(H))``
    whenever ``L`` is a valid Lipschitz constant.
    """
    union = image_ball_union(G, H, L, depth, max_cells)
    return 0.0 if union is None else union.volume
