"""Wavefront OBJ/MTL parsing and texture loading.

The parser is deliberately lenient: photo-reconstruction exports are often
dirty, so content errors drop the offending record and emit a warning
instead of aborting.
"""
from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO

import numpy as np

__all__ = [
    "MaterialRef",
    "ParseWarning",
    "TextureError",
    "TextureImage",
    "TexturedMesh",
    "load_obj",
    "load_texture",
    "parse_mtl",
    "parse_obj",
    "write_obj",
]

# Statements we understand but do not need.
_IGNORED = frozenset({"o", "g", "s"})

# map_* options and how many arguments each takes (upper bound for -o/-s/-t).
_MAP_OPTIONS = {
    "-blendu": 1, "-blendv": 1, "-cc": 1, "-clamp": 1, "-mm": 2,
    "-o": 3, "-s": 3, "-t": 3, "-texres": 1, "-bm": 1, "-imfchan": 1,
    "-boost": 1, "-type": 1,
}


@dataclass(frozen=True)
class ParseWarning:
    """A recoverable problem met while reading a model.

    ``kind`` is one of ``"dropped"`` (record discarded), ``"demoted"``
    (face kept but stripped of its texture coordinates), ``"unknown"``
    (unsupported statement skipped) or ``"io"`` (auxiliary file trouble).
    """

    line: int
    kind: str
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line > 0 else ""
        return f"{where}{self.message}"


class TextureError(Exception):
    pass


@dataclass
class TextureImage:
    """Texel grid, or a dimensions-only stub when ``pixels`` is None.

    ``pixels`` has shape (height, width, 3), float32 in [0, 1]. Row ``j``
    holds texels whose centers sit at v = (j + 0.5) / height, i.e. row 0 is
    the *bottom* of the image as stored on disk.
    """

    width: int
    height: int
    pixels: np.ndarray | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise TextureError("invalid texture dimensions")
        if self.pixels is not None and self.pixels.shape != (self.height, self.width, 3):
            raise TextureError(
                f"pixel grid {self.pixels.shape} does not match {self.width}x{self.height}"
            )

    @property
    def has_pixels(self) -> bool:
        return self.pixels is not None


@dataclass
class MaterialRef:
    name: str
    diffuse_texture_path: str | None = None
    auxiliary_textures: dict[str, str] = field(default_factory=dict)
    resolved_texture: TextureImage | None = None


@dataclass
class TexturedMesh:
    """Indexed triangle mesh with per-corner UVs and per-face materials.

    Attributes
    ----------
    positions : (V, 3) float64
    texcoords : (T, 2) float64
    faces : (F, 3) int64
        Position indices.
    face_texcoords : (F, 3) int64
        Texcoord indices, the whole row is -1 for unmapped faces.
    face_materials : (F,) int64
        Index into ``materials``, -1 when no material is active.
    """

    positions: np.ndarray
    texcoords: np.ndarray
    faces: np.ndarray
    face_texcoords: np.ndarray
    face_materials: np.ndarray
    materials: list[MaterialRef] = field(default_factory=list)
    normal_count: int = 0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.texcoords = np.asarray(self.texcoords, dtype=np.float64).reshape(-1, 2)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        nf = len(self.faces)
        if self.face_texcoords is None:
            self.face_texcoords = np.full((nf, 3), -1, dtype=np.int64)
        self.face_texcoords = np.asarray(self.face_texcoords, dtype=np.int64).reshape(-1, 3)
        if self.face_materials is None:
            self.face_materials = np.full(nf, -1, dtype=np.int64)
        self.face_materials = np.asarray(self.face_materials, dtype=np.int64).reshape(-1)

    @classmethod
    def from_arrays(cls, positions, faces, texcoords=None, face_texcoords=None,
                    face_materials=None, materials=None) -> "TexturedMesh":
        if texcoords is None:
            texcoords = np.empty((0, 2))
        return cls(positions, texcoords, faces, face_texcoords, face_materials,
                   list(materials or []))

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def mapped(self) -> np.ndarray:
        """Boolean mask of faces carrying texture coordinates."""
        return self.face_texcoords[:, 0] >= 0

    def corner_uvs(self) -> np.ndarray:
        """(F, 3, 2) UV per face corner; NaN for unmapped faces."""
        out = np.full((self.n_faces, 3, 2), np.nan)
        m = self.mapped
        out[m] = self.texcoords[self.face_texcoords[m]]
        return out

    def corner_positions(self) -> np.ndarray:
        return self.positions[self.faces]

    def face_areas_3d(self) -> np.ndarray:
        p = self.corner_positions()
        return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)

    def face_signed_uv_areas(self) -> np.ndarray:
        """Signed UV area per face (NaN for unmapped faces)."""
        t = self.corner_uvs()
        a = t[:, 1] - t[:, 0]
        b = t[:, 2] - t[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    def bbox_diagonal(self) -> float:
        used = np.unique(self.faces) if self.n_faces else np.empty(0, dtype=np.int64)
        if len(used) == 0:
            return 0.0
        p = self.positions[used]
        return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))


def _read_source(source) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, str):
        return source.encode()
    return source.read()


def parse_obj(source: BinaryIO | bytes, base_dir: str | os.PathLike | None = None,
              ) -> tuple[TexturedMesh, list[ParseWarning]]:
    """Parse an OBJ byte stream.

    Polygons are fan-triangulated from their first corner. ``mtllib``
    files are resolved against ``base_dir``; when it is None, material
    libraries are not read and only the ``usemtl`` names are recorded.
    """
    data = _read_source(source)
    text = data.decode("utf-8", errors="replace")

    warnings: list[ParseWarning] = []
    positions: list[tuple[float, float, float]] = []
    texcoords: list[tuple[float, float]] = []
    normal_count = 0
    faces: list[tuple[int, int, int]] = []
    ftex: list[tuple[int, int, int]] = []
    fmat: list[int] = []

    mat_index: dict[str, int] = {}
    mat_names: list[str] = []
    libraries: list[str] = []
    current_mat = -1

    nv = 0
    nt = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts:
            continue
        tag = parts[0]
        if tag[0] == "#":
            continue
        if tag == "v":
            try:
                p = (float(parts[1]), float(parts[2]), float(parts[3]))
                if not all(map(math.isfinite, p)):
                    raise ValueError
                positions.append(p)
                nv += 1
            except (ValueError, IndexError):
                warnings.append(ParseWarning(lineno, "dropped", "malformed vertex record"))
        elif tag == "vt":
            try:
                u = float(parts[1])
                v = float(parts[2]) if len(parts) > 2 else 0.0
                if not (math.isfinite(u) and math.isfinite(v)):
                    raise ValueError
                texcoords.append((u, v))
                nt += 1
            except (ValueError, IndexError):
                warnings.append(ParseWarning(lineno, "dropped", "malformed texcoord record"))
        elif tag == "f":
            corners = parts[1:]
            if len(corners) < 3:
                warnings.append(ParseWarning(lineno, "dropped", "face with fewer than 3 corners"))
                continue
            pi: list[int] = []
            ti: list[int] = []
            n_mapped = 0
            try:
                for c in corners:
                    sub = c.split("/")
                    # OBJ indices are 1-based; negatives count back from the current end.
                    p = int(sub[0])
                    p = p - 1 if p > 0 else (nv + p if p < 0 else -1)
                    if not 0 <= p < nv:
                        raise IndexError
                    pi.append(p)
                    if len(sub) > 1 and sub[1]:
                        t = int(sub[1])
                        t = t - 1 if t > 0 else (nt + t if t < 0 else -1)
                        if not 0 <= t < nt:
                            raise IndexError
                        ti.append(t)
                        n_mapped += 1
                    else:
                        ti.append(-1)
            except ValueError:
                warnings.append(ParseWarning(lineno, "dropped", "malformed face index"))
                continue
            except IndexError:
                warnings.append(ParseWarning(lineno, "dropped", "face index out of range"))
                continue
            if 0 < n_mapped < len(ti):
                warnings.append(ParseWarning(lineno, "demoted", "face mixes mapped and unmapped corners"))
                ti = [-1] * len(ti)
            for k in range(1, len(pi) - 1):
                faces.append((pi[0], pi[k], pi[k + 1]))
                ftex.append((ti[0], ti[k], ti[k + 1]))
                fmat.append(current_mat)
        elif tag == "vn":
            normal_count += 1
        elif tag == "usemtl":
            name = raw.strip()[len("usemtl"):].strip()
            if name not in mat_index:
                mat_index[name] = len(mat_names)
                mat_names.append(name)
            current_mat = mat_index[name]
        elif tag == "mtllib":
            libraries.append(raw.strip()[len("mtllib"):].strip())
        elif tag in _IGNORED:
            continue
        else:
            warnings.append(ParseWarning(lineno, "unknown", f"unsupported statement '{tag}' skipped"))

    materials = _collect_materials(mat_names, libraries, base_dir, warnings)
    # Remap usemtl order onto the final material list.
    lookup = {m.name: i for i, m in enumerate(materials)}
    remap = np.array([lookup[n] for n in mat_names] + [-1], dtype=np.int64)
    face_mat = remap[np.asarray(fmat, dtype=np.int64)] if fmat else np.empty(0, dtype=np.int64)

    mesh = TexturedMesh(
        positions=np.array(positions, dtype=np.float64).reshape(-1, 3),
        texcoords=np.array(texcoords, dtype=np.float64).reshape(-1, 2),
        faces=np.array(faces, dtype=np.int64).reshape(-1, 3),
        face_texcoords=np.array(ftex, dtype=np.int64).reshape(-1, 3),
        face_materials=face_mat,
        materials=materials,
        normal_count=normal_count,
    )
    return mesh, warnings


def _collect_materials(used: list[str], libraries: list[str], base_dir,
                       warnings: list[ParseWarning]) -> list[MaterialRef]:
    materials: list[MaterialRef] = []
    seen: set[str] = set()
    if base_dir is not None:
        for lib in libraries:
            path = Path(base_dir) / lib
            try:
                with open(path, "rb") as fh:
                    refs = parse_mtl(fh)
            except OSError:
                warnings.append(ParseWarning(0, "io", f"material library '{lib}' not found"))
                continue
            for ref in refs:
                if ref.name not in seen:
                    seen.add(ref.name)
                    materials.append(ref)
    for name in used:
        if name not in seen:
            seen.add(name)
            materials.append(MaterialRef(name))
    return materials


def _map_path(args: list[str]) -> str | None:
    i = 0
    while i < len(args) - 1 and args[i] in _MAP_OPTIONS:
        n = _MAP_OPTIONS[args[i]]
        i += 1
        for k in range(n):
            if i >= len(args) - 1:
                break
            if k > 0:
                # -o/-s/-t take one to three numbers
                try:
                    float(args[i])
                except ValueError:
                    break
            i += 1
    rest = args[i:]
    return " ".join(rest) if rest else None


def parse_mtl(source: BinaryIO | bytes) -> list[MaterialRef]:
    """One MaterialRef per ``newmtl`` in file order.

    Only ``map_Kd`` is promoted to the diffuse texture; other ``map_*``
    statements (and ``bump``/``disp``/``norm``) are kept by name in
    ``auxiliary_textures``.
    """
    text = _read_source(source).decode("utf-8", errors="replace")
    refs: list[MaterialRef] = []
    for raw in text.splitlines():
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "newmtl":
            refs.append(MaterialRef(raw.strip()[len("newmtl"):].strip()))
        elif not refs:
            continue
        elif tag == "map_Kd":
            refs[-1].diffuse_texture_path = _map_path(parts[1:])
        elif tag.startswith("map_") or tag in ("bump", "disp", "norm", "decal", "refl"):
            path = _map_path(parts[1:])
            if path:
                refs[-1].auxiliary_textures[tag] = path
    return refs


def load_texture(path: str | os.PathLike | None,
                 dims_override: tuple[int, int] | None = None) -> TextureImage:
    """Load a texture, or build a dimensions-only stub from ``dims_override``.

    With an override the image file is never opened. Integer samples are
    normalized by the maximum of their type, so 8- and 16-bit images land
    on the same [0, 1] scale.
    """
    if dims_override is not None:
        w, h = dims_override
        return TextureImage(int(w), int(h))
    if path is None:
        raise TextureError("no texture path and no dimensions given")
    import cv2

    img = cv2.imread(os.fspath(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise TextureError(f"cannot decode image '{path}'")
    if img.dtype == np.uint8:
        scale = 255.0
    elif img.dtype == np.uint16:
        scale = 65535.0
    elif np.issubdtype(img.dtype, np.floating):
        scale = 1.0
    else:
        raise TextureError(f"unsupported sample type {img.dtype}")
    if img.ndim == 2:
        rgb = np.repeat(img[:, :, None], 3, axis=2)
    elif img.shape[2] == 1:
        rgb = np.repeat(img, 3, axis=2)
    elif img.shape[2] == 2:
        # gray + alpha
        rgb = np.repeat(img[:, :, :1], 3, axis=2)
    else:
        rgb = img[:, :, 2::-1]  # BGR(A) -> RGB
    pixels = (rgb[::-1].astype(np.float32) / np.float32(scale)).clip(0.0, 1.0)
    h, w = pixels.shape[:2]
    return TextureImage(w, h, np.ascontiguousarray(pixels))


def load_obj(path: str | os.PathLike) -> tuple[TexturedMesh, list[ParseWarning]]:
    path = Path(path)
    with open(path, "rb") as fh:
        return parse_obj(fh, base_dir=path.parent)


def write_obj(mesh: TexturedMesh) -> bytes:
    """Serialize positions, texcoords and faces back to OBJ text.

    Materials are written as ``usemtl`` switches; no material library is
    emitted. OBJ cannot switch back to "no material", so a material-less
    face that follows a material face inherits that material.
    """
    out = io.StringIO()
    for p in mesh.positions:
        out.write("v %r %r %r\n" % tuple(float(x) for x in p))
    for t in mesh.texcoords:
        out.write("vt %r %r\n" % tuple(float(x) for x in t))
    current = -1
    for f, t, m in zip(mesh.faces, mesh.face_texcoords, mesh.face_materials):
        if m != current:
            if m >= 0:
                out.write(f"usemtl {mesh.materials[m].name}\n")
            current = m
        if t[0] >= 0:
            out.write("f %d/%d %d/%d %d/%d\n" % (f[0] + 1, t[0] + 1, f[1] + 1, t[1] + 1,
                                                   f[2] + 1, t[2] + 1))
        else:
            out.write("f %d %d %d\n" % (f[0] + 1, f[1] + 1, f[2] + 1))
    return out.getvalue().encode()
