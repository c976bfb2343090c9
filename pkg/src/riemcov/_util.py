import itertools
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch, NonFiniteValue


def as_points(points, dim=None):
    """Coerce to a float array of shape (N, m); a 1-D input is a single point."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected an (N, m) array of points, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionMismatch(f"points have dimension {arr.shape[1]}, expected {dim}")
    return arr


def call_scalar(f, pts, what="f"):
    """Evaluate a vectorized scalar handle on (N, m) points; returns (N,)."""
    vals = np.asarray(f(pts), dtype=float)
    if vals.ndim == 0:
        vals = np.full(len(pts), float(vals))
    vals = vals.reshape(len(pts), -1)
    if vals.shape[1] == 1:
        vals = vals[:, 0]
    _check_finite(vals, pts, what)
    return vals


def call_map(G, pts, what="G"):
    """Evaluate a vectorized map handle on (N, m) points; returns (N, n)."""
    vals = np.asarray(G(pts), dtype=float)
    if vals.ndim == 1 and vals.size % max(len(pts), 1) == 0:
        vals = vals.reshape(len(pts), -1)
    if vals.ndim != 2 or vals.shape[0] != len(pts):
        raise DimensionMismatch(f"{what} returned {vals.shape[0]} rows for {len(pts)} points")
    _check_finite(vals, pts, what)
    return vals


def _check_finite(vals, pts, what):
    bad = ~np.isfinite(vals)
    if bad.any():
        row = int(np.argwhere(bad.reshape(len(pts), -1).any(axis=1))[0, 0])
        raise NonFiniteValue(what, pts[row])


@lru_cache(maxsize=None)
def corner_offsets(m):
    """All 2^m vertices of the unit cube, lexicographic order."""
    return np.array(list(itertools.product((0, 1), repeat=m)), dtype=np.int64)


def max_norm(v, axis=-1):
    return np.max(np.abs(v), axis=axis)
