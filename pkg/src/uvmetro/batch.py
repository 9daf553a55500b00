"""Corpus-level runs: per-model reports, a summary CSV and histogram tables."""
from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .report import AnalysisError, AnalysisOptions, QualityReport, analyze

__all__ = ["BatchSummary", "CSV_COLUMNS", "HISTOGRAM_METRICS", "csv_row", "discover_models",
           "histogram", "run_batch"]

log = logging.getLogger(__name__)

REPORT_NAME = "texmetro.json"

# (column, section, key)
_FIELDS = [
    ("vertices", "mesh", "vertices"),
    ("edges", "mesh", "edges"),
    ("faces", "mesh", "faces"),
    ("components", "mesh", "connected_components"),
    ("boundary_loops", "mesh", "boundary_loops"),
    ("boundary_length", "mesh", "boundary_length"),
    ("surface_area", "mesh", "surface_area"),
    ("genus", "mesh", "genus"),
    ("textures", "textures", "count"),
    ("total_texels", "textures", "total_texels"),
    ("chart_count", "atlas", "chart_count"),
    ("occupancy", "atlas", "occupancy"),
    ("crumbliness", "atlas", "crumbliness"),
    ("solidity", "atlas", "solidity"),
    ("sf_variance", "atlas", "sf_variance"),
    ("sf_p1", "atlas", "sf_p1"),
    ("sf_p50", "atlas", "sf_p50"),
    ("sf_p99", "atlas", "sf_p99"),
    ("qcd_mean", "atlas", "qcd_mean"),
    ("seam_edges", "atlas", "seam_edges"),
    ("seam_length_3d", "atlas", "seam_length_3d"),
    ("seam_discrepancy", "atlas", "seam_discrepancy"),
    ("zero_area_faces", "defects", "zero_area_faces"),
    ("degenerate_faces", "defects", "degenerate_faces"),
    ("duplicate_vertices", "defects", "duplicate_vertices"),
    ("unreferenced_vertices", "defects", "unreferenced_vertices"),
    ("nonmanifold_edges", "defects", "nonmanifold_edges"),
    ("nonmanifold_vertices", "defects", "nonmanifold_vertices"),
    ("unmapped_faces", "defects", "unmapped_faces"),
    ("uv_out_of_range_faces", "defects", "uv_out_of_range_faces"),
    ("flipped_faces", "defects", "flipped_faces"),
    ("cross_chart_overlap_texels", "defects", "cross_chart_overlap_texels"),
    ("overlap_texel_fraction", "defects", "overlap_texel_fraction"),
    ("mapped_face_fraction", "defects", "mapped_face_fraction"),
]

CSV_COLUMNS = ["model"] + [c for c, _, _ in _FIELDS] + ["warning_count"]

# metric -> (csv column, fixed range or None for data range)
HISTOGRAM_METRICS = {
    "occupancy": ("occupancy", (0.0, 1.0)),
    "solidity": ("solidity", (0.0, 1.0)),
    "qcd_mean": ("qcd_mean", (0.0, 1.0)),
    "seam_discrepancy": ("seam_discrepancy", None),
    "vertices": ("vertices", None),
}


def csv_row(model: str, report: QualityReport) -> dict:
    d = report.to_dict()
    row = {"model": model}
    for col, section, key in _FIELDS:
        sec = d.get(section) or {}
        row[col] = sec.get(key)
    row["warning_count"] = d["meta"]["warning_count"]
    return row


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class Histogram:
    metric: str
    edges: np.ndarray
    counts: np.ndarray
    missing: int

    def to_tsv(self) -> str:
        lines = ["bin_left\tbin_right\tcount"]
        for lo, hi, n in zip(self.edges[:-1], self.edges[1:], self.counts):
            lines.append(f"{float(lo)!r}\t{float(hi)!r}\t{int(n)}")
        return "\n".join(lines) + "\n"


def histogram(metric: str, values, bins: int, value_range=None) -> Histogram:
    """Fixed-bin histogram; None values are counted as missing."""
    vals = np.array([v for v in values if v is not None], dtype=np.float64)
    missing = sum(v is None for v in values)
    if value_range is None:
        value_range = (float(vals.min()), float(vals.max())) if len(vals) else (0.0, 1.0)
    counts, edges = np.histogram(vals, bins=bins, range=value_range)
    return Histogram(metric, edges, counts, missing)


@dataclass
class BatchSummary:
    rows: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    histograms: dict[str, Histogram] = field(default_factory=dict)

    @property
    def model_count(self) -> int:
        return len(self.rows) + len(self.failures)

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow([_cell(r[c]) for c in CSV_COLUMNS])


def discover_models(directory: str | os.PathLike) -> list[Path]:
    """OBJ files directly in ``directory`` or one level down, sorted by path."""
    root = Path(directory)
    found = [p for p in root.glob("*.obj") if p.is_file()]
    found += [p for p in root.glob("*/*.obj") if p.is_file()]
    found += [p for p in root.glob("*.OBJ") if p.is_file()]
    found += [p for p in root.glob("*/*.OBJ") if p.is_file()]
    return sorted(set(found))


def report_path(model: Path) -> Path:
    """Where a model's report goes: ``texmetro.json`` in its own folder.

    When several models share a folder each gets ``<stem>.texmetro.json``.
    """
    siblings = [p for p in model.parent.iterdir() if p.suffix.lower() == ".obj"]
    if len(siblings) == 1:
        return model.parent / REPORT_NAME
    return model.parent / f"{model.stem}.{REPORT_NAME}"


def _analyze_one(model: Path, options: AnalysisOptions):
    try:
        rep = analyze(model, options)
    except AnalysisError as exc:
        return None, str(exc)
    except Exception as exc:  # one bad model must not stop the batch
        return None, f"{type(exc).__name__}: {exc}"
    rep.write(report_path(model))
    return rep, None


def run_batch(directory: str | os.PathLike, options: AnalysisOptions | None = None, *,
              bins: int = 20, csv_path: str | os.PathLike | None = None,
              histogram_dir: str | os.PathLike | None = None, jobs: int = 1) -> BatchSummary:
    """Analyze every model under ``directory``.

    Raises ``FileNotFoundError`` when no OBJ model is found. Failed models
    are listed in the summary and the run continues.
    """
    options = options or AnalysisOptions()
    root = Path(directory)
    models = discover_models(root)
    if not models:
        raise FileNotFoundError(f"no OBJ models found under '{root}'")

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_analyze_one, models, [options] * len(models)))
    else:
        results = [_analyze_one(m, options) for m in models]

    summary = BatchSummary()
    for model, (rep, err) in zip(models, results):
        name = model.relative_to(root).as_posix()
        if rep is None:
            log.warning("%s: %s", name, err)
            summary.failures.append({"model": name, "error": err})
        else:
            summary.rows.append(csv_row(name, rep))

    for metric, (col, rng) in HISTOGRAM_METRICS.items():
        summary.histograms[metric] = histogram(metric, [r[col] for r in summary.rows], bins, rng)

    csv_path = Path(csv_path) if csv_path else root / "summary.csv"
    summary.write_csv(csv_path)
    hdir = Path(histogram_dir) if histogram_dir else csv_path.parent / "histograms"
    hdir.mkdir(parents=True, exist_ok=True)
    for metric, h in summary.histograms.items():
        (hdir / f"{metric}.tsv").write_text(h.to_tsv(), encoding="utf-8")
    if summary.failures:
        with open(csv_path.with_name(csv_path.stem + "_failures.csv"), "w", newline="",
                  encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "error"])
            for f in summary.failures:
                w.writerow([f["model"], f["error"]])
    return summary
