"""Cube partitions, dotted partitions and Jordan partitions.

A :class:`CubePartition` stores its cells as two (N, m) arrays of lower and
upper corners, so partitions with millions of cells stay cheap.  Cells of a
uniform grid on an :class:`~riemcov.geometry.AxisBox` parent are boxes rather
than cubes; everything here works for both.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._util import as_points, corner_offsets
from .geometry import (
    DEFAULT_MAX_CELLS,
    AxisBox,
    Cube,
    JordanSet,
    OverlapStatus,
    as_box,
    cell_bounds,
    check_cell_count,
    content_bracket,
    grid_indices,
    interiors_overlap,
)

_REL_TOL = 1e-12


@dataclass(frozen=True)
class CubePartition:
    """Cells ``[lo[k], hi[k]]`` tiling ``parent``."""

    lo: np.ndarray
    hi: np.ndarray
    parent: AxisBox

    def __post_init__(self):
        lo = np.atleast_2d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_2d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError(f"lo has shape {lo.shape}, hi has shape {hi.shape}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "parent", as_box(self.parent))

    @classmethod
    def from_cubes(cls, cubes: Sequence[Cube], parent):
        return cls(np.array([c.lo for c in cubes]), np.array([c.hi for c in cubes]), as_box(parent))

    def __len__(self):
        return len(self.lo)

    @property
    def dim(self):
        return self.lo.shape[1]

    @property
    def volumes(self):
        return np.prod(self.hi - self.lo, axis=1)

    @property
    def centers(self):
        return 0.5 * (self.lo + self.hi)

    def cells(self):
        """Cells as :class:`AxisBox` objects (cubes when the grid is cubic)."""
        return [AxisBox(a, b) for a, b in zip(self.lo, self.hi)]

    def refine(self, n):
        """Split every cell into an ``n``-per-axis uniform grid."""
        sub = uniform_grid(AxisBox(np.zeros(self.dim), np.ones(self.dim)), n)
        w = (self.hi - self.lo)[:, None, :]
        lo = self.lo[:, None, :] + w * sub.lo[None]
        hi = self.lo[:, None, :] + w * sub.hi[None]
        return CubePartition(lo.reshape(-1, self.dim), hi.reshape(-1, self.dim), self.parent)


@dataclass(frozen=True)
class DottedPartition:
    """A cube partition together with one tag point per cell."""

    partition: CubePartition
    tags: np.ndarray

    def __post_init__(self):
        tags = as_points(self.tags, self.partition.dim)
        if len(tags) != len(self.partition):
            raise ValueError(f"{len(tags)} tags for {len(self.partition)} cells")
        object.__setattr__(self, "tags", tags)

    def __len__(self):
        return len(self.tags)

    @property
    def pairs(self):
        return list(zip(self.partition.cells(), map(tuple, self.tags)))


@dataclass
class JordanPartition:
    parts: list
    parent: JordanSet
    meta: dict = field(default_factory=dict)


def uniform_grid(parent, n, max_cells=DEFAULT_MAX_CELLS):
    """Uniform grid with ``n`` cells per axis (or per-axis counts) tiling ``parent``."""
    box = as_box(parent)
    counts = np.broadcast_to(np.asarray(n, dtype=np.int64), (box.dim,))
    if (counts < 1).any():
        raise ValueError(f"cell counts must be >= 1, got {list(counts)}")
    check_cell_count(counts, max_cells)
    lo, hi = cell_bounds(box, counts, grid_indices(counts))
    return CubePartition(lo, hi, box)


def partition_norm(p):
    """Largest max-norm diameter of a part (bounding-box diameter for Jordan parts)."""
    if isinstance(p, JordanPartition):
        if not p.parts:
            raise ValueError("empty partition")
        return max(part.bounds.diameter for part in p.parts)
    if len(p) == 0:
        raise ValueError("empty partition")
    return float(np.max(p.hi - p.lo))


def tag_centers(p: CubePartition) -> DottedPartition:
    return DottedPartition(p, p.centers)


def _merged_breakpoints(values, tol):
    v = np.unique(values)
    keep = np.concatenate([[True], np.diff(v) > tol])
    return v[keep]


def _coverage(lo, hi, tol, limit=1 << 24):
    """Coverage counts of the cells on the grid of all their face coordinates.

    Returns ``(counts, breakpoints, i0, i1)`` or None when the compressed
    grid would exceed ``limit`` entries.
    """
    m = lo.shape[1]
    bps = [_merged_breakpoints(np.concatenate([lo[:, a], hi[:, a]]), tol) for a in range(m)]
    shape = [len(b) for b in bps]
    if np.prod([s - 1 for s in shape], dtype=float) > limit:
        return None
    i0 = np.stack([np.searchsorted(b, lo[:, a] - tol) for a, b in enumerate(bps)], axis=1)
    i1 = np.stack([np.searchsorted(b, hi[:, a] - tol) for a, b in enumerate(bps)], axis=1)
    diff = np.zeros(shape, dtype=np.int32)
    for off in corner_offsets(m):
        corner = np.where(off[None, :] == 1, i1, i0)
        sign = -1 if off.sum() % 2 else 1
        np.add.at(diff, tuple(corner.T), sign)
    for axis in range(m):
        np.cumsum(diff, axis=axis, out=diff)
    counts = diff[tuple(slice(0, s - 1) for s in shape)]
    return counts, bps, i0, i1


def _cells_covering(i0, i1, cell):
    return np.flatnonzero(np.all((i0 <= cell) & (cell < i1), axis=1))


def _overlapping_pairs(lo, hi, tol):
    """Index pairs of cells whose interiors meet, by sweep and prune on axis 0."""
    order = np.argsort(lo[:, 0], kind="stable")
    slo, shi = lo[order], hi[order]
    # candidates for cell k: later cells starting before hi_k on axis 0
    stop = np.searchsorted(slo[:, 0], shi[:, 0] - tol, side="left")
    found = []
    for k in np.flatnonzero(stop > np.arange(len(slo)) + 1):
        others = np.arange(k + 1, stop[k])
        ext = np.minimum(shi[k], shi[others]) - np.maximum(slo[k], slo[others])
        hit = others[np.all(ext > tol, axis=1)]
        found.extend((int(order[k]), int(order[j])) for j in hit)
    return found


def validate(p, max_report=20):
    """List the ways ``p`` fails to be a valid dotted (or plain) cube partition.

    Checks pairwise non-overlap, containment of every cell in the parent,
    the volume identity and, for dotted partitions, that every tag lies in
    its cell.  An empty list means valid.
    """
    dotted = isinstance(p, DottedPartition)
    part = p.partition if dotted else p
    lo, hi, parent = part.lo, part.hi, part.parent
    plo, phi = np.asarray(parent.lo), np.asarray(parent.hi)
    scale = max(parent.diameter, 1e-300)
    tol = _REL_TOL * max(scale, float(np.max(np.abs([plo, phi]))))
    report = []

    if (hi < lo).any():
        report.append("degenerate cell: hi < lo")
    outside = np.flatnonzero(np.any((lo < plo - tol) | (hi > phi + tol), axis=1))
    for k in outside[:max_report]:
        report.append(f"cell outside parent: cell {k}")
    cov = _coverage(lo, hi, tol) if len(lo) else None
    if cov is None:
        pairs = _overlapping_pairs(lo, hi, tol)[:max_report]
    else:
        counts, _, i0, i1 = cov
        pairs = {}
        for cell in np.argwhere(counts > 1)[: 8 * max_report]:
            a, b = _cells_covering(i0, i1, cell)[:2]
            pairs.setdefault((int(a), int(b)), None)
        pairs = list(pairs)[:max_report]
    for a, b in pairs:
        report.append(f"overlap: cells {a} and {b}")
    total = float(np.sum(part.volumes))
    if abs(total - parent.volume) > 1e-9 * max(parent.volume, 1e-300):
        report.append(f"volume mismatch: cells sum to {total!r}, parent has {parent.volume!r}")
    if dotted:
        bad = np.flatnonzero(np.any((p.tags < lo - tol) | (p.tags > hi + tol), axis=1))
        for k in bad[:max_report]:
            report.append(f"tag outside cell: cell {k}, tag {tuple(float(x) for x in p.tags[k])}")
    return report


def validate_jordan(p: JordanPartition, depth=6, eps=1e-2):
    """Tolerance-based check of a Jordan partition.

    Parts must be pairwise not Overlapping at ``depth``; the union must
    cover the parent up to ``eps`` in the sense that
    ``outer(parent) - sum(outer(part)) <= eps``.
    """
    parts = p.parts
    report = [f"dimension mismatch: part {i}" for i, q in enumerate(parts) if q.dim != p.parent.dim]
    if report:
        return report
    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            if interiors_overlap(parts[i], parts[j], depth) is OverlapStatus.OVERLAPPING:
                report.append(f"overlap: parts {i} and {j}")
    parent_outer = content_bracket(p.parent, depth).outer
    parts_outer = sum(content_bracket(q, depth).outer for q in parts)
    if parent_outer - parts_outer > eps:
        report.append(f"union gap: parent outer {parent_outer:g} exceeds parts {parts_outer:g} by more than {eps:g}")
    return report
