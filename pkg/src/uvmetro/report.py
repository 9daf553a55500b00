"""Full-model analysis and the JSON quality report."""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .mesh_io import TexturedMesh, TextureError, TextureImage, load_obj, load_texture
from .mesh_model import build_adjacency, classify_seams, extract_charts
from .seams import build_seam_pairs, mesh_discrepancy
from .topology import defect_scan, topology_stats
from .uv_analysis import (
    crumbliness,
    detect_overlaps,
    occupancy,
    qc_distortion,
    rasterize_coverage,
    sampling_field,
)

__all__ = ["AnalysisError", "AnalysisOptions", "QualityReport", "SCHEMA_VERSION", "analyze",
           "analyze_mesh"]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
# Warnings beyond this many are counted but not listed in the report.
MAX_LISTED_WARNINGS = 200

CONVENTIONS = {
    "texel_coverage": "texel center inside triangle, top-left tie rule",
    "uv_outside_unit_square": "clipped for coverage, counted in uv_out_of_range_faces",
    "seam_uv_tolerance": 1e-7,
    "zero_area_epsilon": "1e-12 * bbox_diagonal^2",
    "sf_aggregates": "3D-area weighted",
    "qcd_mean": "3D-area weighted",
    "seam_color_distance": "Euclidean RGB norm, channels in [0,1]",
    "seam_sampling": "midpoint rule, max(2, ceil(texel length)) samples",
    "texture_addressing": "bilinear, clamp to edge",
}


def _to_builtin(x):
    if isinstance(x, dict):
        return {k: _to_builtin(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_to_builtin(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        x = float(x)
    if isinstance(x, float) and not math.isfinite(x):
        raise ValueError("non-finite metric")
    return x


class AnalysisError(Exception):
    pass


@dataclass
class AnalysisOptions:
    texdims: tuple[int, int] | None = None
    seams: bool = True

    def as_dict(self) -> dict:
        return {"texdims": list(self.texdims) if self.texdims else None, "seams": self.seams}


@dataclass
class QualityReport:
    """Sections of the quality report; ``to_json`` gives the on-disk form."""

    model: str
    mesh: dict
    textures: dict
    atlas: dict | None
    defects: dict
    meta: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model": self.model,
            "mesh": self.mesh,
            "textures": self.textures,
            "atlas": self.atlas,
            "defects": self.defects,
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(_to_builtin(self.to_dict()), indent=2, allow_nan=False,
                          ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "QualityReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {d.get('schema_version')!r}")
        return cls(d["model"], d["mesh"], d["textures"], d["atlas"], d["defects"], d["meta"])

    @classmethod
    def from_json(cls, text: str) -> "QualityReport":
        return cls.from_dict(json.loads(text))

    def write(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


class _Nulls:
    """Collects the reason behind every null metric."""

    def __init__(self):
        self.reasons: dict[str, str] = {}

    def __call__(self, key: str, value, reason: str):
        if value is None or (isinstance(value, float) and not math.isfinite(value)):
            self.reasons.setdefault(key, reason)
            return None
        return value


@dataclass
class _TextureUnit:
    path: str | None
    materials: list[str] = field(default_factory=list)
    texture: TextureImage | None = None
    auxiliary: dict[str, str] = field(default_factory=dict)


def _resolve_units(mesh: TexturedMesh, base_dir: Path | None, texdims, warnings: list[str]):
    """Group materials by diffuse texture file and load each texture once.

    Faces without a textured material share an extra "untextured" unit,
    which only gets dimensions from a command-line override.
    """
    units: list[_TextureUnit] = []
    by_path: dict[str, int] = {}
    mat_unit = np.full(len(mesh.materials) + 1, -1, dtype=np.int64)
    for mi, m in enumerate(mesh.materials):
        if not m.diffuse_texture_path:
            continue
        full = os.path.normpath(os.path.join(base_dir, m.diffuse_texture_path)) if base_dir else m.diffuse_texture_path
        if full not in by_path:
            by_path[full] = len(units)
            units.append(_TextureUnit(m.diffuse_texture_path))
        u = units[by_path[full]]
        u.materials.append(m.name)
        u.auxiliary.update(m.auxiliary_textures)
        mat_unit[mi] = by_path[full]

    mapped = mesh.mapped
    face_units = mat_unit[mesh.face_materials]  # index -1 hits the trailing -1 slot
    if texdims is not None and np.any(mapped & (face_units < 0)):
        face_units = np.where(face_units < 0, len(units), face_units)
        units.append(_TextureUnit(None))

    for u in units:
        if u.path is not None and texdims is None:
            full = os.path.join(base_dir, u.path) if base_dir else u.path
            try:
                u.texture = load_texture(full)
            except (TextureError, OSError) as exc:
                warnings.append(f"texture '{u.path}': {exc}")
        elif texdims is not None:
            u.texture = load_texture(None, texdims)
        for mi, m in enumerate(mesh.materials):
            if mat_unit[mi] >= 0 and units[mat_unit[mi]] is u:
                m.resolved_texture = u.texture
    return units, face_units


def analyze_mesh(mesh: TexturedMesh, options: AnalysisOptions | None = None, *,
                 name: str = "", base_dir: Path | None = None,
                 parse_warnings: list | None = None) -> QualityReport:
    """Run every analysis on an in-memory mesh."""
    options = options or AnalysisOptions()
    if mesh.n_faces == 0:
        raise AnalysisError("model has no faces")
    warnings = [str(w) for w in (parse_warnings or [])]
    flags: list[str] = []
    nulls = _Nulls()

    adj = build_adjacency(mesh)
    seams = classify_seams(mesh, adj)
    atlas = extract_charts(mesh, adj, seams)
    topo = topology_stats(mesh, adj)
    defects = defect_scan(mesh, adj)
    flags.extend(topo.flags)

    units, face_units = _resolve_units(mesh, base_dir, options.texdims, warnings)
    if options.texdims is not None and len(units) > 1:
        flags.append("texdims_override_applied_to_all_textures")
    dims = {i: (u.texture.width, u.texture.height) for i, u in enumerate(units) if u.texture is not None}
    mapped = mesh.mapped
    n_mapped = int(mapped.sum())
    if n_mapped and np.any(mapped & ((face_units < 0) | ~np.isin(face_units, list(dims)))):
        flags.append("mapped_faces_without_texture_dims")

    mesh_section = {
        "vertices": topo.vertex_count,
        "edges": topo.edge_count,
        "faces": topo.face_count,
        "normals": mesh.normal_count,
        "connected_components": topo.connected_components,
        "boundary_loops": topo.boundary_loop_count,
        "boundary_length": topo.boundary_total_length,
        "surface_area": topo.surface_area_3d,
        "euler_characteristic": topo.euler_characteristic,
        "genus": nulls("mesh.genus", topo.genus, topo.flags[0] if topo.flags else "genus_undefined"),
    }

    unit_rows = []
    for i, u in enumerate(units):
        t = u.texture
        unit_rows.append({
            "unit": i,
            "path": u.path,
            "materials": u.materials,
            "width": t.width if t else None,
            "height": t.height if t else None,
            "texels": t.width * t.height if t else None,
            "has_pixels": bool(t is not None and t.pixels is not None),
            "dims_source": None if t is None else ("override" if options.texdims else "image"),
            "auxiliary_maps": dict(sorted(u.auxiliary.items())),
        })
        if t is None:
            nulls.reasons[f"textures.units[{i}]"] = "texture_unreadable"
    textures_section = {
        "count": len(units),
        "units": unit_rows,
        "total_texels": int(sum(w * h for w, h in dims.values())),
    }

    atlas_section = None
    flipped = cross = 0
    overlap_fraction: float | None = 0.0
    if n_mapped == 0:
        nulls.reasons["atlas"] = "no_uv_mapped_faces"
        overlap_fraction = nulls("defects.overlap_texel_fraction", None, "no_uv_mapped_faces")
    else:
        crumb, solid = crumbliness(atlas)
        sf = sampling_field(mesh)
        qcd = qc_distortion(mesh)

        grids = rasterize_coverage(mesh, atlas, dims, face_units) if dims else {}
        occ = occupancy(grids) if grids else None
        flipped, cross, frac = detect_overlaps(grids, mesh, atlas)
        if not grids:
            cross = None
            frac = None
        overlap_fraction = nulls("defects.overlap_texel_fraction", frac, "no_texture_dims")
        cross = nulls("defects.cross_chart_overlap_texels", cross, "no_texture_dims")

        disc = None
        if options.seams:
            pairs = build_seam_pairs(mesh, adj, seams, face_units)
            tex = {i: u.texture for i, u in enumerate(units) if u.texture is not None}
            disc = mesh_discrepancy(pairs, tex)
            if disc.cross_texture_edges:
                flags.append("seams_across_textures")
        if disc is None:
            ds_reason = "seam_analysis_disabled"
        elif disc.flags:
            ds_reason = disc.flags[0]
        else:
            ds_reason = "no_evaluable_seam_edges"

        per_texture_occ = [
            {"unit": i, "occupancy": g.covered / g.total} for i, g in sorted(grids.items())
        ]
        atlas_section = {
            "chart_count": len(atlas),
            "mapped_faces": n_mapped,
            "uv_area": float(math.fsum(atlas.areas.tolist())),
            "uv_perimeter": float(math.fsum(atlas.perimeters.tolist())),
            "occupancy": nulls("atlas.occupancy", occ, "no_texture_dims"),
            "occupancy_per_texture": per_texture_occ,
            "crumbliness": nulls("atlas.crumbliness", crumb, "degenerate_atlas"),
            "solidity": nulls("atlas.solidity", solid, "degenerate_atlas"),
            "sf_variance": nulls("atlas.sf_variance", sf.variance, "no_valid_faces"),
            "sf_p1": nulls("atlas.sf_p1", sf.p1, "no_valid_faces"),
            "sf_p50": nulls("atlas.sf_p50", sf.p50, "no_valid_faces"),
            "sf_p99": nulls("atlas.sf_p99", sf.p99, "no_valid_faces"),
            "qcd_mean": nulls("atlas.qcd_mean", qcd.mean, "no_valid_faces"),
            "qcd_excluded_faces": qcd.excluded_3d_degenerate,
            "seam_edges": int(np.count_nonzero(seams)),
            "seam_pairs": disc.seam_edge_count if disc else None,
            "seam_length_3d": disc.seam_total_length_3d if disc else None,
            "seam_length_uv": disc.seam_total_length_uv if disc else None,
            "seam_discrepancy": nulls("atlas.seam_discrepancy", disc.aggregate if disc else None, ds_reason),
            "seam_edges_evaluated": disc.evaluated_edges if disc else 0,
            "seam_edges_cross_texture": disc.cross_texture_edges if disc else 0,
        }
        for key in ("seam_pairs", "seam_length_3d", "seam_length_uv"):
            if atlas_section[key] is None:
                nulls.reasons[f"atlas.{key}"] = "seam_analysis_disabled"

    defects_section = asdict(defects)
    defects_section.update({
        "flipped_faces": flipped,
        "cross_chart_overlap_texels": cross,
        "overlap_texel_fraction": overlap_fraction,
        "mapped_face_fraction": n_mapped / mesh.n_faces,
    })

    meta = {
        "tool": "uvmetro",
        "version": __version__,
        "options": options.as_dict(),
        "conventions": CONVENTIONS,
        "flags": sorted(set(flags)),
        "null_reasons": dict(sorted(nulls.reasons.items())),
        "warning_count": len(warnings),
        "warnings": warnings[:MAX_LISTED_WARNINGS],
    }
    rep = QualityReport(name, mesh_section, textures_section, atlas_section, defects_section, meta)
    # Round-trip once so the in-memory report holds plain JSON values.
    return QualityReport.from_json(rep.to_json())


def analyze(model_path: str | os.PathLike, options: AnalysisOptions | None = None) -> QualityReport:
    """Load an OBJ model (with its MTL and textures) and analyze it.

    Raises :class:`AnalysisError` when the file cannot be read or contains
    no usable faces; every other problem degrades to null metrics.
    """
    path = Path(model_path)
    try:
        mesh, warns = load_obj(path)
    except OSError as exc:
        raise AnalysisError(f"cannot read '{path}': {exc}") from exc
    if mesh.n_faces == 0:
        raise AnalysisError(f"'{path}' contains no usable faces")
    log.debug("parsed %s: %d vertices, %d faces", path, len(mesh.positions), mesh.n_faces)
    return analyze_mesh(mesh, options, name=path.name, base_dir=path.parent, parse_warnings=warns)
