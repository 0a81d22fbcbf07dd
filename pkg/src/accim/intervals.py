"""Sorted-disjoint unions of intervals on the line, as paired endpoint arrays.

All set operations assume (and preserve) sorted, pairwise-disjoint
components.  Components shorter than ``eps`` are dropped by the helpers
that create new unions; endpoint comparisons use the same tolerance.
"""

from __future__ import annotations

import numpy as np

#: geometric tolerance for point-in-interval classification (configurable
#: per call; this is the package-wide default)
EPS_GEO = 1e-12


def measure(lo: np.ndarray, hi: np.ndarray) -> float:
    return float(np.sum(hi - lo))


def drop_slivers(lo, hi, eps=EPS_GEO):
    """Remove components of length below eps; returns (lo, hi, dropped_mass)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    keep = (hi - lo) >= eps
    dropped = float(np.sum((hi - lo)[~keep]))
    return lo[keep], hi[keep], dropped


def subtract_open(lo: float, hi: float, holes, eps=EPS_GEO):
    """Closed components of [lo,hi] minus a sorted union of open intervals.

    ``holes`` is a sequence of (a, b) pairs.  Components of length < eps
    are dropped.
    """
    out = []
    cur = lo
    for a, b in holes:
        if b <= cur or a >= hi:
            continue
        if a > cur + eps:
            out.append((cur, min(a, hi)))
        cur = max(cur, b)
        if cur >= hi:
            break
    if cur < hi - eps:
        out.append((cur, hi))
    return [(a, b) for a, b in out if b - a >= eps]


def clip_union(lo: np.ndarray, hi: np.ndarray, a: float, b: float):
    """Intersection of a sorted-disjoint union with the window [a, b]."""
    if len(lo) == 0 or a >= b:
        return lo[:0], hi[:0]
    i = int(np.searchsorted(hi, a, side="right"))
    j = int(np.searchsorted(lo, b, side="left"))
    clo = lo[i:j].copy()
    chi = hi[i:j].copy()
    if len(clo):
        clo[0] = max(clo[0], a)
        chi[-1] = min(chi[-1], b)
    return clo, chi


def intersect_unions(alo, ahi, blo, bhi):
    """Intersection of two sorted-disjoint unions (B expected small)."""
    parts_lo, parts_hi = [], []
    for a, b in zip(blo, bhi):
        clo, chi = clip_union(alo, ahi, a, b)
        parts_lo.append(clo)
        parts_hi.append(chi)
    if not parts_lo:
        return np.empty(0), np.empty(0)
    return np.concatenate(parts_lo), np.concatenate(parts_hi)


def contains_point(lo, hi, x, eps=EPS_GEO) -> bool:
    """Point-in-closed-union test with tolerance eps."""
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    return bool(np.any((x >= lo - eps) & (x <= hi + eps)))


def covers_interval(lo, hi, a, b, eps=EPS_GEO) -> bool:
    """True if one component of the union contains [a, b] up to eps."""
    for clo, chi in zip(lo, hi):
        if a >= clo - eps and b <= chi + eps:
            return True
    return False


def merge_union(lo, hi, eps=EPS_GEO):
    """Sort and merge overlapping or eps-touching components."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if len(lo) == 0:
        return lo, hi
    order = np.argsort(lo)
    lo, hi = lo[order], hi[order]
    out_lo, out_hi = [lo[0]], [hi[0]]
    for a, b in zip(lo[1:], hi[1:]):
        if a <= out_hi[-1] + eps:
            out_hi[-1] = max(out_hi[-1], b)
        else:
            out_lo.append(a)
            out_hi.append(b)
    return np.array(out_lo), np.array(out_hi)


def union_covers(lo, hi, targets, eps=EPS_GEO) -> bool:
    """Whether a merged union covers every (a, b) in targets up to eps."""
    mlo, mhi = merge_union(lo, hi, eps)
    return all(covers_interval(mlo, mhi, a + eps, b - eps, eps) for a, b in targets)
