"""Command-line entry point."""
from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path

from . import __version__
from .batch import run_batch
from .report import AnalysisError, AnalysisOptions, QualityReport, analyze

log = logging.getLogger("uvmetro")


def _texdims(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if not m or int(m.group(1)) < 1 or int(m.group(2)) < 1:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got '{text}'")
    return int(m.group(1)), int(m.group(2))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="uvmetro",
        description="Measure geometry, UV atlas, texture and defect statistics of textured OBJ models.",
    )
    p.add_argument("model", nargs="?", help="OBJ model to analyze")
    p.add_argument("--batch", metavar="DIR", help="analyze every model folder under DIR")
    p.add_argument("--texdims", type=_texdims, metavar="WxH",
                   help="texture dimensions to use instead of decoding images")
    p.add_argument("--json", metavar="PATH", help="write the full report to PATH")
    p.add_argument("--csv", metavar="PATH", help="batch summary CSV (default DIR/summary.csv)")
    p.add_argument("--bins", type=int, default=20, help="histogram bins in batch mode (default 20)")
    p.add_argument("--jobs", type=int, default=1, help="models analyzed in parallel in batch mode")
    p.add_argument("--no-seams", action="store_true", help="skip seam discrepancy sampling")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _fmt(v, digits=6) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.{digits}g}"
    return str(v)


def summary_lines(rep: QualityReport) -> list[str]:
    m, t, a, d = rep.mesh, rep.textures, rep.atlas or {}, rep.defects
    defect_keys = ("zero_area_faces", "degenerate_faces", "duplicate_vertices", "unreferenced_vertices",
                   "nonmanifold_edges", "nonmanifold_vertices", "flipped_faces")
    lines = [
        f"model        {rep.model}",
        f"mesh         V={m['vertices']} E={m['edges']} F={m['faces']} "
        f"components={m['connected_components']} boundaries={m['boundary_loops']} genus={_fmt(m['genus'])}",
        f"textures     {t['count']} ({t['total_texels']} texels)",
        f"charts       {_fmt(a.get('chart_count'))}",
        f"occupancy    {_fmt(a.get('occupancy'))}",
        f"solidity     {_fmt(a.get('solidity'))}",
        f"qcd mean     {_fmt(a.get('qcd_mean'))}",
        f"seam D(S)    {_fmt(a.get('seam_discrepancy'))}",
        f"defects      {sum(d[k] for k in defect_keys)} "
        f"(unmapped faces {d['unmapped_faces']}, uv out of range {d['uv_out_of_range_faces']})",
    ]
    if rep.meta["warning_count"]:
        lines.append(f"warnings     {rep.meta['warning_count']}")
    return lines


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if bool(args.model) == bool(args.batch):
        parser.print_usage(sys.stderr)
        print("uvmetro: error: give either a model path or --batch DIR", file=sys.stderr)
        return 2
    if args.bins < 1:
        parser.error("--bins must be positive")
    options = AnalysisOptions(texdims=args.texdims, seams=not args.no_seams)

    if args.batch:
        try:
            summary = run_batch(args.batch, options, bins=args.bins, csv_path=args.csv, jobs=args.jobs)
        except FileNotFoundError as exc:
            log.error("%s", exc)
            return 1
        if not args.quiet:
            print(f"analyzed {len(summary.rows)} of {summary.model_count} models")
            for f in summary.failures:
                print(f"failed       {f['model']}: {f['error']}")
        return 0

    try:
        rep = analyze(args.model, options)
    except AnalysisError as exc:
        log.error("%s", exc)
        return 1
    if args.json:
        rep.write(args.json)
    if not args.quiet:
        print("\n".join(summary_lines(rep)))
        if args.json:
            print(f"report       {Path(args.json)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
