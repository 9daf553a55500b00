"""UV-map quality measures: occupancy, overlaps, crumbliness, sampling, conformality."""
from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

import numpy as np

from .mesh_io import TexturedMesh
from .mesh_model import Atlas, Chart
from .raster import rasterize_triangles
from .topology import zero_area_threshold

__all__ = [
    "CoverageGrid", "FaceQuality", "SamplingStats", "DistortionStats",
    "closed_form_singular_values", "crumbliness", "detect_overlaps",
    "occupancy", "qc_distortion", "rasterize_coverage", "sampling_field",
    "weighted_percentile",
]

DEGENERATE_ATLAS_AREA = 1e-16


@dataclass
class CoverageGrid:
    """Coverage counters for one texture unit, arrays shaped (height, width)."""

    width: int
    height: int
    counts: np.ndarray
    first_chart: np.ndarray
    multi_chart: np.ndarray

    @property
    def covered(self) -> int:
        return int(np.count_nonzero(self.counts))

    @property
    def total(self) -> int:
        return self.width * self.height


@dataclass
class FaceQuality:
    """Per-face UV quality arrays (NaN where a face is not valid)."""

    s_f: np.ndarray
    qcd: np.ndarray
    signed_uv_area: np.ndarray
    valid: np.ndarray


def rasterize_coverage(mesh: TexturedMesh, atlas: Atlas,
                       dims: tuple[int, int] | Mapping[int, tuple[int, int]],
                       face_units: np.ndarray | None = None) -> dict[int, CoverageGrid]:
    """Rasterize every mapped face into its texture unit's grid.

    ``dims`` is either one ``(width, height)`` pair used for unit 0, or a
    mapping from unit id to dimensions. ``face_units`` assigns each face
    to a unit (default: all faces in unit 0). Faces whose unit has no
    dimensions are skipped.
    """
    if not isinstance(dims, Mapping):
        dims = {0: tuple(dims)}
    if face_units is None:
        face_units = np.zeros(mesh.n_faces, dtype=np.int64)
    mapped = mesh.mapped
    uv = mesh.corner_uvs()
    grids: dict[int, CoverageGrid] = {}
    for unit in sorted(dims):
        w, h = dims[unit]
        if w < 1 or h < 1:
            raise ValueError("invalid texture dimensions")
        sel = np.flatnonzero(mapped & (face_units == unit))
        tri = uv[sel] * np.array([w, h], dtype=np.float64)
        res = rasterize_triangles(tri, w, h, labels=atlas.face_chart[sel])
        grids[unit] = CoverageGrid(w, h, res.counts, res.min_label,
                                   (res.counts > 0) & (res.min_label != res.max_label))
    return grids


def occupancy(grids: Mapping[int, CoverageGrid] | Iterable[CoverageGrid]) -> float:
    """Covered texels over total texels, summed across all grids."""
    gs = list(grids.values()) if isinstance(grids, Mapping) else list(grids)
    total = sum(g.total for g in gs)
    if total == 0:
        return 0.0
    return sum(g.covered for g in gs) / total


def detect_overlaps(grids, mesh: TexturedMesh, atlas: Atlas) -> tuple[int, int, float]:
    """Return ``(flipped_face_count, cross_chart_overlap_texels, overlap_texel_fraction)``.

    A face is flipped when the sign of its UV area disagrees with the
    majority orientation of its chart (ties resolve to counter-clockwise).
    Zero-area faces have no orientation and are never counted.
    """
    gs = list(grids.values()) if isinstance(grids, Mapping) else list(grids)
    flipped = 0
    mapped_ids = np.flatnonzero(mesh.mapped)
    if len(mapped_ids) and len(atlas):
        sign = np.sign(mesh.face_signed_uv_areas()[mapped_ids])
        chart = atlas.face_chart[mapped_ids]
        pos = np.bincount(chart, weights=(sign > 0), minlength=len(atlas))
        neg = np.bincount(chart, weights=(sign < 0), minlength=len(atlas))
        ref = np.where(neg > pos, -1.0, 1.0)
        flipped = int(np.count_nonzero((sign != 0) & (sign != ref[chart])))

    cross = sum(int(np.count_nonzero(g.multi_chart)) for g in gs)
    covered = sum(g.covered for g in gs)
    multi = sum(int(np.count_nonzero(g.counts >= 2)) for g in gs)
    fraction = multi / covered if covered else 0.0
    return flipped, cross, fraction


def _chart_arrays(charts) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(charts, Atlas):
        return charts.areas, charts.perimeters
    charts = list(charts)
    if charts and isinstance(charts[0], Chart):
        return (np.array([c.uv_area for c in charts], dtype=np.float64),
                np.array([c.uv_perimeter for c in charts], dtype=np.float64))
    arr = np.asarray(charts, dtype=np.float64).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def crumbliness(charts) -> tuple[float | None, float | None]:
    """Atlas crumbliness and its inverse, solidity.

    Crumbliness is the summed chart perimeter over the perimeter of the
    circle whose area equals the summed chart area, so it is at least 1
    and invariant under UV scaling and element subdivision.

    ``charts`` may be an :class:`Atlas`, a sequence of :class:`Chart`, or
    ``(area, perimeter)`` pairs. Returns ``(None, None)`` for an atlas with
    no area.
    """
    areas, perims = _chart_arrays(charts)
    total_area = math.fsum(areas.tolist())
    if total_area <= DEGENERATE_ATLAS_AREA:
        return None, None
    c = math.fsum(perims.tolist()) / math.sqrt(4.0 * math.pi * total_area)
    return c, 1.0 / c


def weighted_percentile(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    """Smallest value whose cumulative weight share reaches ``q`` (0..100)."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    cw = np.cumsum(weights[order])
    target = q / 100.0 * cw[-1]
    k = int(np.searchsorted(cw, target, side="left"))
    return float(v[min(k, len(v) - 1)])


@dataclass
class SamplingStats:
    s_f: np.ndarray
    valid: np.ndarray
    variance: float | None
    p1: float | None
    p50: float | None
    p99: float | None
    mean: float | None


def sampling_field(mesh: TexturedMesh) -> SamplingStats:
    """Per-face relative sampling density and its area-weighted summary.

    Only mapped faces with non-negligible 3D area take part. The aggregates
    weight each face by its 3D area, so the mean is 1 by construction.
    """
    a3d = mesh.face_areas_3d()
    valid = mesh.mapped & (a3d > zero_area_threshold(mesh))
    s = np.full(mesh.n_faces, np.nan)
    auv = np.abs(mesh.face_signed_uv_areas())
    if not valid.any():
        return SamplingStats(s, valid, None, None, None, None, None)
    w = a3d[valid]
    au = auv[valid]
    total_uv = math.fsum(au.tolist())
    total_3d = math.fsum(w.tolist())
    if total_uv <= 0.0:
        return SamplingStats(s, valid, None, None, None, None, None)
    ratio = total_uv / total_3d
    sf = (au / w) / ratio
    s[valid] = sf
    mean = math.fsum((w * sf).tolist()) / total_3d
    var = math.fsum((w * (sf - 1.0) ** 2).tolist()) / total_3d
    return SamplingStats(
        s, valid, var,
        weighted_percentile(sf, w, 1), weighted_percentile(sf, w, 50),
        weighted_percentile(sf, w, 99), mean,
    )


def closed_form_singular_values(j: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Singular values ``(s_max, s_min)`` of a stack of 2x2 matrices."""
    a, b, c, d = j[..., 0, 0], j[..., 0, 1], j[..., 1, 0], j[..., 1, 1]
    # Split into conformal and anti-conformal parts; both norms are free of cancellation.
    q = np.hypot((a + d) / 2.0, (c - b) / 2.0)
    r = np.hypot((a - d) / 2.0, (c + b) / 2.0)
    s_max = q + r
    det = np.abs(a * d - b * c)
    # s_min from the determinant avoids cancellation in |q - r|.
    with np.errstate(divide="ignore", invalid="ignore"):
        s_min = np.where(s_max > 0, det / s_max, 0.0)
    return s_max, s_min


def face_jacobians(mesh: TexturedMesh) -> np.ndarray:
    """2x2 Jacobian of the 3D -> UV map per face, in a local tangent frame.

    The frame's x axis follows the first triangle edge; y completes a
    right-handed basis in the triangle plane. Faces with no 3D area give
    non-finite entries.
    """
    p = mesh.corner_positions()
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    l1 = np.linalg.norm(e1, axis=1)
    n = np.cross(e1, e2)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = e1 / l1[:, None]
        y = np.cross(n, e1)
        y /= np.linalg.norm(y, axis=1)[:, None]
        # Edge vectors in the local frame, as columns.
        E = np.empty((len(p), 2, 2))
        E[:, 0, 0] = l1
        E[:, 1, 0] = 0.0
        E[:, 0, 1] = np.einsum("ij,ij->i", e2, x)
        E[:, 1, 1] = np.einsum("ij,ij->i", e2, y)
        t = mesh.corner_uvs()
        U = np.stack([t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]], axis=2)
        det = E[:, 0, 0] * E[:, 1, 1]
        inv = np.empty_like(E)
        inv[:, 0, 0] = E[:, 1, 1] / det
        inv[:, 0, 1] = -E[:, 0, 1] / det
        inv[:, 1, 0] = 0.0
        inv[:, 1, 1] = E[:, 0, 0] / det
    return U @ inv


@dataclass
class DistortionStats:
    qcd: np.ndarray
    mean: float | None
    excluded_3d_degenerate: int


def qc_distortion(mesh: TexturedMesh) -> DistortionStats:
    """Quasi-conformal distortion per face: smallest over largest singular value.

    1 means conformal; a UV image collapsed to a segment or point gives 0.
    Faces with negligible 3D area are excluded and counted; the mean is
    weighted by 3D area.
    """
    a3d = mesh.face_areas_3d()
    mapped = mesh.mapped
    ok3d = a3d > zero_area_threshold(mesh)
    valid = mapped & ok3d
    q = np.full(mesh.n_faces, np.nan)
    excluded = int(np.count_nonzero(mapped & ~ok3d))
    if not valid.any():
        return DistortionStats(q, None, excluded)
    sub = TexturedMesh(mesh.positions, mesh.texcoords, mesh.faces[valid],
                       mesh.face_texcoords[valid], mesh.face_materials[valid])
    s_max, s_min = closed_form_singular_values(face_jacobians(sub))
    with np.errstate(divide="ignore", invalid="ignore"):
        qv = np.where(s_max > 0, s_min / s_max, 0.0)
    qv = np.clip(qv, 0.0, 1.0)
    q[valid] = qv
    w = a3d[valid]
    mean = math.fsum((w * qv).tolist()) / math.fsum(w.tolist())
    return DistortionStats(q, mean, excluded)


def face_quality(mesh: TexturedMesh) -> FaceQuality:
    s = sampling_field(mesh)
    d = qc_distortion(mesh)
    return FaceQuality(s.s_f, d.qcd, mesh.face_signed_uv_areas(), s.valid)
