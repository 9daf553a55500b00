"""Texture-signal discrepancy across seam edges."""
from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .mesh_io import TexturedMesh, TextureImage
from .mesh_model import UV_TOLERANCE, MeshAdjacency

__all__ = [
    "DiscrepancyStats", "SeamPair", "SeamPairs", "bilinear_sample",
    "build_seam_pairs", "edge_discrepancies", "edge_discrepancy",
    "mesh_discrepancy", "sample_count",
]

# Samples evaluated per batch in edge_discrepancies.
_BATCH = 1 << 20


class PixelsUnavailable(ValueError):
    pass


def bilinear_sample(texture: TextureImage, uv: np.ndarray) -> np.ndarray:
    """Bilinearly interpolated RGB at UV points, clamp-to-edge addressing.

    ``uv`` has shape (..., 2); the result has shape (..., 3).
    """
    if texture.pixels is None:
        raise PixelsUnavailable("pixels unavailable")
    uv = np.asarray(uv, dtype=np.float64)
    w, h = texture.width, texture.height
    x = uv[..., 0] * w - 0.5
    y = uv[..., 1] * h - 0.5
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    xa = np.clip(x0, 0, w - 1)
    xb = np.clip(x0 + 1, 0, w - 1)
    ya = np.clip(y0, 0, h - 1)
    yb = np.clip(y0 + 1, 0, h - 1)
    px = texture.pixels
    c00 = px[ya, xa].astype(np.float64)
    c10 = px[ya, xb].astype(np.float64)
    c01 = px[yb, xa].astype(np.float64)
    c11 = px[yb, xb].astype(np.float64)
    # a + t * (b - a) reproduces a constant signal exactly.
    bottom = c00 + fx * (c10 - c00)
    top = c01 + fx * (c11 - c01)
    return bottom + fy * (top - bottom)


@dataclass
class SeamPair:
    """The two UV images of one seam edge.

    ``e1_start`` and ``e2_start`` are images of the same 3D endpoint.
    """

    edge_3d_length: float
    e1_start: np.ndarray
    e1_end: np.ndarray
    e2_start: np.ndarray
    e2_end: np.ndarray
    texture_unit: int = 0
    texture_unit_2: int | None = None

    @property
    def units(self) -> tuple[int, int]:
        u2 = self.texture_unit if self.texture_unit_2 is None else self.texture_unit_2
        return self.texture_unit, u2


@dataclass
class SeamPairs:
    """Column-wise collection of seam pairs.

    ``e1``/``e2`` have shape (n, 2, 2): segment, endpoint (start/end), uv.
    """

    edge_ids: np.ndarray
    lengths: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    units1: np.ndarray
    units2: np.ndarray

    def __len__(self) -> int:
        return len(self.lengths)

    def __getitem__(self, i: int) -> SeamPair:
        return SeamPair(float(self.lengths[i]), self.e1[i, 0], self.e1[i, 1],
                        self.e2[i, 0], self.e2[i, 1], int(self.units1[i]), int(self.units2[i]))

    @classmethod
    def from_pairs(cls, pairs: Sequence[SeamPair]) -> "SeamPairs":
        n = len(pairs)
        e1 = np.array([[p.e1_start, p.e1_end] for p in pairs], dtype=np.float64).reshape(n, 2, 2)
        e2 = np.array([[p.e2_start, p.e2_end] for p in pairs], dtype=np.float64).reshape(n, 2, 2)
        u = np.array([p.units for p in pairs], dtype=np.int64).reshape(n, 2)
        return cls(np.arange(n), np.array([p.edge_3d_length for p in pairs], dtype=np.float64),
                   e1, e2, u[:, 0], u[:, 1])


def build_seam_pairs(mesh: TexturedMesh, adj: MeshAdjacency, seams: np.ndarray,
                     face_units: np.ndarray | None = None) -> SeamPairs:
    """Seam pairs for every seam edge whose two faces are both mapped.

    Seams against unmapped faces have only one UV image and are left out.
    """
    if face_units is None:
        face_units = np.zeros(mesh.n_faces, dtype=np.int64)
    ids, ca, cb = adj.manifold_pairs
    fa, ka = ca // 3, ca % 3
    fb, kb = cb // 3, cb % 3
    mapped = mesh.mapped
    keep = seams[ids] & mapped[fa] & mapped[fb]
    ids, fa, ka, fb, kb = ids[keep], fa[keep], ka[keep], fb[keep], kb[keep]

    tc = mesh.texcoords
    ft = mesh.face_texcoords
    a0 = tc[ft[fa, ka]]
    a1 = tc[ft[fa, (ka + 1) % 3]]
    b0 = tc[ft[fb, kb]]
    b1 = tc[ft[fb, (kb + 1) % 3]]
    same = mesh.faces[fa, ka] == mesh.faces[fb, kb]
    b_start = np.where(same[:, None], b0, b1)
    b_end = np.where(same[:, None], b1, b0)

    p = mesh.positions
    ev = adj.edge_vertices[ids]
    lengths = np.linalg.norm(p[ev[:, 1]] - p[ev[:, 0]], axis=1)
    return SeamPairs(ids, lengths, np.stack([a0, a1], axis=1), np.stack([b_start, b_end], axis=1),
                     face_units[fa], face_units[fb])


def sample_count(len_texels: np.ndarray) -> np.ndarray:
    """Midpoint samples per edge: one per texel crossed, at least two."""
    return np.maximum(2, np.ceil(len_texels)).astype(np.int64)


def _texel_length(seg: np.ndarray, dims: np.ndarray) -> np.ndarray:
    d = (seg[:, 1] - seg[:, 0]) * dims
    return np.linalg.norm(d, axis=1)


def edge_discrepancies(pairs: SeamPairs, textures: Mapping[int, TextureImage]) -> np.ndarray:
    """D(e) for every pair; NaN for degenerate pairs or missing pixels."""
    n = len(pairs)
    out = np.full(n, np.nan)
    if n == 0:
        return out
    dims = np.zeros((max(max(textures, default=0), int(pairs.units1.max()), int(pairs.units2.max())) + 1, 2))
    has_px = np.zeros(len(dims), dtype=bool)
    for u, t in textures.items():
        if u >= 0:
            dims[u] = (t.width, t.height)
            has_px[u] = t.pixels is not None
    u1, u2 = pairs.units1, pairs.units2
    ok = (u1 >= 0) & (u2 >= 0)
    ok &= has_px[np.where(u1 >= 0, u1, 0)] & has_px[np.where(u2 >= 0, u2, 0)]
    l1 = np.linalg.norm(pairs.e1[:, 1] - pairs.e1[:, 0], axis=1)
    l2 = np.linalg.norm(pairs.e2[:, 1] - pairs.e2[:, 0], axis=1)
    ok &= (l1 > UV_TOLERANCE) & (l2 > UV_TOLERANCE)
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        return out

    t1 = _texel_length(pairs.e1[idx], dims[u1[idx]])
    t2 = _texel_length(pairs.e2[idx], dims[u2[idx]])
    counts = sample_count(np.maximum(t1, t2))

    # Group by texture pair so each batch samples from one image per side.
    keys = u1[idx] * len(dims) + u2[idx]
    for key in np.unique(keys):
        grp = idx[keys == key]
        cnt = counts[keys == key]
        tex1 = textures[int(key // len(dims))]
        tex2 = textures[int(key % len(dims))]
        csum = np.cumsum(cnt)
        start = 0
        while start < len(grp):
            base = csum[start - 1] if start else 0
            stop = max(int(np.searchsorted(csum, base + _BATCH, side="right")), start + 1)
            out[grp[start:stop]] = _integrate(pairs.e1[grp[start:stop]], pairs.e2[grp[start:stop]],
                                              cnt[start:stop], tex1, tex2)
            start = stop
    return out


def _integrate(e1, e2, cnt, tex1, tex2) -> np.ndarray:
    total = int(cnt.sum())
    owner = np.repeat(np.arange(len(cnt)), cnt)
    k = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    t = ((k + 0.5) / cnt[owner])[:, None]
    p1 = e1[owner, 0] + t * (e1[owner, 1] - e1[owner, 0])
    p2 = e2[owner, 0] + t * (e2[owner, 1] - e2[owner, 0])
    diff = np.linalg.norm(bilinear_sample(tex1, p1) - bilinear_sample(tex2, p2), axis=1)
    return np.bincount(owner, weights=diff, minlength=len(cnt)) / cnt


def edge_discrepancy(pair: SeamPair, texture: TextureImage | Mapping[int, TextureImage]) -> float | None:
    """Mean RGB distance between the two sides of one seam edge.

    The integral over the edge is estimated with the midpoint rule, using
    one sample per texel spanned by the longer side (at least two).
    Returns None for a degenerate pair.
    """
    if isinstance(texture, TextureImage):
        if texture.pixels is None:
            raise PixelsUnavailable("pixels unavailable")
        textures = {u: texture for u in set(pair.units)}
    else:
        textures = dict(texture)
    d = edge_discrepancies(SeamPairs.from_pairs([pair]), textures)[0]
    return None if np.isnan(d) else float(d)


@dataclass
class DiscrepancyStats:
    per_edge: np.ndarray
    aggregate: float | None
    seam_edge_count: int
    seam_total_length_3d: float
    seam_total_length_uv: float
    evaluated_edges: int = 0
    skipped_edges: int = 0
    cross_texture_edges: int = 0
    flags: list[str] = field(default_factory=list)


def mesh_discrepancy(pairs: SeamPairs | Sequence[SeamPair],
                     textures: Mapping[int, TextureImage] | TextureImage | None,
                     per_edge: np.ndarray | None = None) -> DiscrepancyStats:
    """Length-weighted mean discrepancy over all evaluable seam edges.

    ``per_edge`` may carry precomputed D(e) values (NaN = not evaluable);
    otherwise they are computed from ``textures``.
    """
    if not isinstance(pairs, SeamPairs):
        pairs = SeamPairs.from_pairs(list(pairs))
    if isinstance(textures, TextureImage):
        units = set(pairs.units1.tolist()) | set(pairs.units2.tolist()) | {0}
        textures = {u: textures for u in units}
    n = len(pairs)
    flags: list[str] = []
    uv_len = float(np.linalg.norm(pairs.e1[:, 1] - pairs.e1[:, 0], axis=1).sum()
                   + np.linalg.norm(pairs.e2[:, 1] - pairs.e2[:, 0], axis=1).sum()) if n else 0.0
    len3d = math.fsum(pairs.lengths.tolist())
    cross = int(np.count_nonzero(pairs.units1 != pairs.units2))
    if per_edge is None:
        if textures and any(t.pixels is not None for t in textures.values()):
            per_edge = edge_discrepancies(pairs, textures)
        else:
            per_edge = np.full(n, np.nan)
            if n:
                flags.append("no_pixel_data")
    per_edge = np.asarray(per_edge, dtype=np.float64)
    ok = ~np.isnan(per_edge)
    agg = None
    if n == 0:
        flags.append("no_seam_edges")
    elif ok.any():
        w = pairs.lengths[ok]
        den = math.fsum(w.tolist())
        if den > 0:
            agg = math.fsum((w * per_edge[ok]).tolist()) / den
        else:
            flags.append("zero_seam_length")
    elif "no_pixel_data" not in flags:
        flags.append("no_evaluable_seam_edges")
    return DiscrepancyStats(
        per_edge=per_edge,
        aggregate=agg,
        seam_edge_count=n,
        seam_total_length_3d=len3d,
        seam_total_length_uv=uv_len,
        evaluated_edges=int(ok.sum()),
        skipped_edges=int(n - ok.sum()),
        cross_texture_edges=cross,
        flags=flags,
    )
