"""Constructive delta-fine dotted partitions of a cube.

A dotted pair ``(I, y)`` is delta-fine when ``I`` lies inside the open
max-norm ball ``B(y, delta(y))``.  :func:`delta_fine_partition` bisects the
cube level by level; at every level all pending cubes are handled at once.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from ._util import as_points, call_scalar, corner_offsets
from .errors import MaxDepthExceeded
from .geometry import Cube
from .partition import CubePartition, DottedPartition


def _gauge_values(gauge, pts):
    vals = call_scalar(gauge, pts, "gauge")
    return np.broadcast_to(vals, (len(pts),))


def delta_fine_partition(Q: Cube, gauge: Callable, max_depth: int = 20) -> DottedPartition:
    """Delta-fine dotted partition of ``Q`` by recursive bisection.

    Each pending cube ``I`` of half-width ``h`` tries its centre (accepted
    when ``h < delta``) and then its corners in lexicographic order (accepted
    when ``2h < delta``); the first acceptable candidate becomes the tag.
    Cubes with no acceptable candidate are split into ``2**m`` children.

    Raises
    ------
    MaxDepthExceeded
        When cubes remain at ``max_depth``; the first such cube is reported
        as the witness.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be nonnegative")
    m = Q.dim
    corners = corner_offsets(m).astype(float) * 2.0 - 1.0
    kids = corner_offsets(m).astype(float) - 0.5
    pending = np.asarray(Q.center, dtype=float)[None, :]
    h = Q.half_width
    done_lo, done_hi, done_tag = [], [], []
    for depth in range(max_depth + 1):
        accepted = np.zeros(len(pending), dtype=bool)
        tags = np.empty_like(pending)
        # centre first, then corners in lexicographic order
        candidates = [np.zeros((1, m))] + [c[None, :] for c in corners]
        for k, off in enumerate(candidates):
            open_ = np.flatnonzero(~accepted)
            if open_.size == 0:
                break
            pts = pending[open_] + h * off
            delta = _gauge_values(gauge, pts)
            reach = h if k == 0 else 2.0 * h
            ok = delta > reach
            hit = open_[ok]
            accepted[hit] = True
            tags[hit] = pts[ok]
        done_lo.append(pending[accepted] - h)
        done_hi.append(pending[accepted] + h)
        done_tag.append(tags[accepted])
        pending = pending[~accepted]
        if pending.size == 0:
            break
        if depth == max_depth:
            witness = Cube(pending[0], h)
            raise MaxDepthExceeded(witness, depth, len(pending))
        pending = (pending[:, None, :] + h * kids[None]).reshape(-1, m)
        h *= 0.5
    lo = np.concatenate(done_lo)
    hi = np.concatenate(done_hi)
    tag = np.concatenate(done_tag)
    order = np.lexsort(lo.T[::-1])
    return DottedPartition(CubePartition(lo[order], hi[order], Q.to_box()), tag[order])


def _fmt(v):
    return "(" + ", ".join(f"{float(x):g}" for x in v) + ")"


def verify_delta_fine(dotted: DottedPartition, gauge: Callable, max_report=20):
    """Pairs whose cell is not inside the open ball ``B(tag, gauge(tag))``."""
    part = dotted.partition
    tags = as_points(dotted.tags, part.dim)
    delta = _gauge_values(gauge, tags)
    reach = np.maximum(np.abs(part.hi - tags), np.abs(tags - part.lo)).max(axis=1)
    bad = np.flatnonzero(~(reach < delta))
    return [
        f"not delta-fine: cell {k} [{_fmt(part.lo[k])}, {_fmt(part.hi[k])}] "
        f"reaches {reach[k]:g} from tag {_fmt(tags[k])}, gauge {delta[k]:g}"
        for k in bad[:max_report]
    ]


def constant_gauge_depth_bound(side: float, delta0: float) -> int:
    """Depth by which bisection must stop for the constant gauge ``delta0``."""
    return max(0, math.ceil(math.log2(side / delta0))) + 1


def partition_depth(dotted: DottedPartition, Q: Cube) -> int:
    """Deepest bisection level used by a partition of ``Q``."""
    sides = np.max(dotted.partition.hi - dotted.partition.lo, axis=1)
    return int(np.max(np.round(np.log2(Q.side / sides))))
