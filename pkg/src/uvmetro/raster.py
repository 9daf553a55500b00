"""Texel-center triangle rasterization with a top-left fill rule.

Texel ``(i, j)`` has its center at ``(i + 0.5, j + 0.5)`` in texel space
(u * width, v * height). A center strictly inside a triangle is covered;
a center exactly on an edge is covered only if that edge is a top or left
edge. Each edge function is evaluated from a canonical endpoint order, so
the two triangles sharing an edge see exactly opposite values and every
center on the shared edge goes to exactly one of them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RasterResult", "rasterize_triangles"]

# Upper bound on candidate texels evaluated per batch.
_BATCH = 1 << 22


@dataclass
class RasterResult:
    """Per-texel coverage, arrays of shape (height, width).

    ``min_label``/``max_label`` hold the smallest and largest label among
    covering triangles (-1 / -1 where uncovered); they are only filled when
    labels were supplied.
    """

    counts: np.ndarray
    min_label: np.ndarray | None = None
    max_label: np.ndarray | None = None


def _edge_terms(ax, ay, bx, by):
    """Canonically ordered edge P->Q plus the sign relating it to A->B."""
    swap = (bx < ax) | ((bx == ax) & (by < ay))
    px = np.where(swap, bx, ax)
    py = np.where(swap, by, ay)
    qx = np.where(swap, ax, bx)
    qy = np.where(swap, ay, by)
    sign = np.where(swap, -1.0, 1.0)
    dy = by - ay
    dx = bx - ax
    # Counter-clockwise with y up: left edges go down, top edges go left.
    top_left = (dy < 0) | ((dy == 0) & (dx < 0))
    return px, py, qx - px, qy - py, sign, top_left


def rasterize_triangles(tri: np.ndarray, width: int, height: int,
                        labels: np.ndarray | None = None) -> RasterResult:
    """Rasterize triangles given in texel-space coordinates.

    Parameters
    ----------
    tri : (T, 3, 2) float array
        Vertex coordinates already multiplied by (width, height).
    width, height : int
        Grid size; coverage outside the grid is ignored (implicit clipping).
    labels : (T,) int array, optional
        Per-triangle label (e.g. chart id) tracked per texel as min/max.
    """
    if width < 1 or height < 1:
        raise ValueError("invalid texture dimensions")
    counts = np.zeros(width * height, dtype=np.int32)
    lo = hi = None
    if labels is not None:
        lo = np.full(width * height, np.iinfo(np.int64).max, dtype=np.int64)
        hi = np.full(width * height, -1, dtype=np.int64)

    tri = np.asarray(tri, dtype=np.float64)
    if len(tri):
        a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
        cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        keep = np.isfinite(cross) & (cross != 0)
        tri = tri[keep]
        cross = cross[keep]
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)[keep]
        # Make every triangle counter-clockwise.
        cw = cross < 0
        tri[cw] = tri[cw][:, [0, 2, 1]]

        # Candidate texel ranges: centers i + 0.5 within the bounding box.
        mn = tri.min(axis=1)
        mx = tri.max(axis=1)
        i0 = np.clip(np.ceil(mn[:, 0] - 0.5), 0, width).astype(np.int64)
        i1 = np.clip(np.floor(mx[:, 0] - 0.5), -1, width - 1).astype(np.int64)
        j0 = np.clip(np.ceil(mn[:, 1] - 0.5), 0, height).astype(np.int64)
        j1 = np.clip(np.floor(mx[:, 1] - 0.5), -1, height - 1).astype(np.int64)
        nx = np.maximum(i1 - i0 + 1, 0)
        ny = np.maximum(j1 - j0 + 1, 0)
        n = nx * ny
        live = np.flatnonzero(n > 0)

        edges = [_edge_terms(tri[:, k, 0], tri[:, k, 1], tri[:, (k + 1) % 3, 0], tri[:, (k + 1) % 3, 1])
                 for k in range(3)]

        csum = np.cumsum(n[live])
        start = 0
        while start < len(live):
            base = csum[start - 1] if start else 0
            stop = int(np.searchsorted(csum, base + _BATCH, side="right"))
            stop = max(stop, start + 1)
            sel = live[start:stop]
            _accumulate(sel, n, nx, i0, j0, edges, width, counts, labels, lo, hi)
            start = stop

    counts = counts.reshape(height, width)
    if labels is None:
        return RasterResult(counts)
    covered = counts > 0
    lo = lo.reshape(height, width)
    hi = hi.reshape(height, width)
    lo[~covered] = -1
    return RasterResult(counts, lo, hi)


def _accumulate(sel, n, nx, i0, j0, edges, width, counts, labels, lo, hi):
    ns = n[sel]
    total = int(ns.sum())
    owner = np.repeat(sel, ns)
    first = np.repeat(np.cumsum(ns) - ns, ns)
    off = np.arange(total, dtype=np.int64) - first
    w = nx[owner]
    i = i0[owner] + off % w
    j = j0[owner] + off // w
    cx = i + 0.5
    cy = j + 0.5

    inside = np.ones(total, dtype=bool)
    for px, py, ex, ey, sign, top_left in edges:
        f = sign[owner] * (ex[owner] * (cy - py[owner]) - ey[owner] * (cx - px[owner]))
        inside &= (f > 0) | ((f == 0) & top_left[owner])

    idx = (j * width + i)[inside]
    counts += np.bincount(idx, minlength=len(counts)).astype(np.int32)
    if labels is not None:
        lab = labels[owner[inside]]
        np.minimum.at(lo, idx, lab)
        np.maximum.at(hi, idx, lab)
