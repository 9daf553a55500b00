"""Edge adjacency, texture seams and UV chart segmentation."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .mesh_io import TexturedMesh

__all__ = [
    "BOUNDARY", "MANIFOLD", "NONMANIFOLD", "UV_TOLERANCE",
    "Atlas", "Chart", "EdgeRecord", "MeshAdjacency",
    "build_adjacency", "classify_seams", "extract_charts",
]

BOUNDARY, MANIFOLD, NONMANIFOLD = 0, 1, 2
_CLASS_NAMES = {BOUNDARY: "boundary", MANIFOLD: "manifold", NONMANIFOLD: "nonmanifold"}

# Two UV images of a shared endpoint closer than this coincide.
UV_TOLERANCE = 1e-7


@dataclass(frozen=True)
class EdgeRecord:
    endpoints: tuple[int, int]
    incident_corners: tuple[tuple[int, int], ...]
    manifold_class: str
    is_seam: bool


@dataclass
class MeshAdjacency:
    """Edge-face incidence of a triangle mesh, stored as flat arrays.

    Face ``f`` owns three *face-edges*; face-edge ``k`` runs from corner
    ``k`` to corner ``(k + 1) % 3``. Every face-edge maps to exactly one
    undirected edge, so the incidence total is always ``3 * F``.

    Attributes
    ----------
    edge_vertices : (E, 2) int64
        Sorted position-index pair per edge; edges are sorted by this pair.
    face_edges : (F, 3) int64
        Edge id of each face-edge.
    edge_offsets, edge_corners : int64 arrays
        CSR layout of incident face-edges: edge ``e`` owns
        ``edge_corners[edge_offsets[e]:edge_offsets[e + 1]]``, each entry
        being ``3 * face + k``.
    manifold_class : (E,) uint8
        ``BOUNDARY`` (1 incidence), ``MANIFOLD`` (2) or ``NONMANIFOLD`` (3+).
    face_neighbors : (F, 3) int64
        Face across each face-edge when that edge is manifold, else -1.
    """

    n_vertices: int
    edge_vertices: np.ndarray
    face_edges: np.ndarray
    edge_offsets: np.ndarray
    edge_corners: np.ndarray
    manifold_class: np.ndarray
    face_neighbors: np.ndarray
    seams: np.ndarray | None = None

    @property
    def n_edges(self) -> int:
        return len(self.edge_vertices)

    @property
    def incidence(self) -> np.ndarray:
        return np.diff(self.edge_offsets)

    @cached_property
    def self_edges(self) -> np.ndarray:
        """Mask of edges whose two endpoints coincide (degenerate faces)."""
        return self.edge_vertices[:, 0] == self.edge_vertices[:, 1]

    @cached_property
    def manifold_pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(edge_ids, corner_a, corner_b)`` for every manifold edge."""
        ids = np.flatnonzero(self.manifold_class == MANIFOLD)
        start = self.edge_offsets[ids]
        return ids, self.edge_corners[start], self.edge_corners[start + 1]

    def vertex_faces(self, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """CSR ``(offsets, face_ids)`` of faces incident to each vertex."""
        flat = faces.reshape(-1)
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_vertices)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return offsets, order // 3

    def edge(self, e: int) -> EdgeRecord:
        lo, hi = self.edge_offsets[e], self.edge_offsets[e + 1]
        corners = tuple((int(c // 3), int(c % 3)) for c in self.edge_corners[lo:hi])
        seam = bool(self.seams[e]) if self.seams is not None else False
        return EdgeRecord(
            (int(self.edge_vertices[e, 0]), int(self.edge_vertices[e, 1])),
            corners,
            _CLASS_NAMES[int(self.manifold_class[e])],
            seam,
        )

    def edges(self):
        for e in range(self.n_edges):
            yield self.edge(e)


def _face_edge_endpoints(faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = faces
    b = np.roll(faces, -1, axis=1)
    return a, b


def build_adjacency(mesh: TexturedMesh) -> MeshAdjacency:
    faces = mesh.faces
    nf = len(faces)
    nv = len(mesh.positions)
    a, b = _face_edge_endpoints(faces)
    lo = np.minimum(a, b).reshape(-1)
    hi = np.maximum(a, b).reshape(-1)
    key = lo * np.int64(max(nv, 1)) + hi
    uniq, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)

    edge_vertices = np.stack([uniq // max(nv, 1), uniq % max(nv, 1)], axis=1)
    order = np.argsort(inverse, kind="stable")
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    cls = np.where(counts == 1, BOUNDARY, np.where(counts == 2, MANIFOLD, NONMANIFOLD)).astype(np.uint8)

    neighbors = np.full(3 * nf, -1, dtype=np.int64)
    man = np.flatnonzero(counts == 2)
    ca = order[offsets[man]]
    cb = order[offsets[man] + 1]
    neighbors[ca] = cb // 3
    neighbors[cb] = ca // 3

    return MeshAdjacency(
        n_vertices=nv,
        edge_vertices=edge_vertices.astype(np.int64),
        face_edges=inverse.reshape(nf, 3).astype(np.int64),
        edge_offsets=offsets,
        edge_corners=order.astype(np.int64),
        manifold_class=cls,
        face_neighbors=neighbors.reshape(nf, 3),
    )


def _corner_endpoint_uvs(mesh: TexturedMesh, corners: np.ndarray):
    """UVs at the start and end of face-edges given as ``3 * face + k``."""
    f = corners // 3
    k = corners % 3
    t0 = mesh.face_texcoords[f, k]
    t1 = mesh.face_texcoords[f, (k + 1) % 3]
    return mesh.texcoords[t0], mesh.texcoords[t1]


def classify_seams(mesh: TexturedMesh, adj: MeshAdjacency) -> np.ndarray:
    """Boolean seam flag per edge, also stored on ``adj.seams``.

    A manifold edge is a seam when the UV images of either shared endpoint
    differ by more than ``UV_TOLERANCE`` between its two faces, or when
    either face is unmapped. Other edge classes are never seams.
    """
    seams = np.zeros(adj.n_edges, dtype=bool)
    ids, ca, cb = adj.manifold_pairs
    mapped = mesh.mapped
    fa, fb = ca // 3, cb // 3
    both = mapped[fa] & mapped[fb]
    seams[ids[~both]] = True

    ids, ca, cb = ids[both], ca[both], cb[both]
    if len(ids):
        ua0, ua1 = _corner_endpoint_uvs(mesh, ca)
        ub0, ub1 = _corner_endpoint_uvs(mesh, cb)
        # Align b's endpoints with a's by position index.
        fa, ka = ca // 3, ca % 3
        fb, kb = cb // 3, cb % 3
        same_dir = mesh.faces[fa, ka] == mesh.faces[fb, kb]
        ub_start = np.where(same_dir[:, None], ub0, ub1)
        ub_end = np.where(same_dir[:, None], ub1, ub0)
        d0 = np.linalg.norm(ua0 - ub_start, axis=1)
        d1 = np.linalg.norm(ua1 - ub_end, axis=1)
        seams[ids] = (d0 > UV_TOLERANCE) | (d1 > UV_TOLERANCE)
    adj.seams = seams
    return seams


@dataclass
class Chart:
    face_ids: np.ndarray
    uv_area: float
    uv_perimeter: float
    texture_unit: int


@dataclass
class Atlas:
    """All charts of a mesh, stored column-wise.

    ``face_chart`` holds the chart id of each face (-1 for unmapped faces);
    chart ids are numbered by their lowest face index.
    """

    face_chart: np.ndarray
    areas: np.ndarray
    perimeters: np.ndarray
    texture_units: np.ndarray

    def __len__(self) -> int:
        return len(self.areas)

    def __getitem__(self, i: int) -> Chart:
        return Chart(np.flatnonzero(self.face_chart == i), float(self.areas[i]),
                     float(self.perimeters[i]), int(self.texture_units[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def charts(self) -> list[Chart]:
        return list(self)


def internal_face_edges(mesh: TexturedMesh, adj: MeshAdjacency, seams: np.ndarray) -> np.ndarray:
    """(F, 3) mask of face-edges that glue two faces into the same chart."""
    nb = adj.face_neighbors
    e = adj.face_edges
    f = np.arange(mesh.n_faces)[:, None]
    mapped = mesh.mapped
    safe_nb = np.where(nb >= 0, nb, 0)
    return (
        (nb >= 0)
        & (nb != f)
        & ~seams[e]
        & mapped[:, None]
        & mapped[safe_nb]
        & (mesh.face_materials[safe_nb] == mesh.face_materials[:, None])
    )


def extract_charts(mesh: TexturedMesh, adj: MeshAdjacency, seams: np.ndarray) -> Atlas:
    nf = mesh.n_faces
    mapped = mesh.mapped
    if not mapped.any():
        empty = np.empty(0)
        return Atlas(np.full(nf, -1, dtype=np.int64), empty, empty, np.empty(0, dtype=np.int64))

    internal = internal_face_edges(mesh, adj, seams)
    rows = np.repeat(np.arange(nf), 3)[internal.reshape(-1)]
    cols = adj.face_neighbors.reshape(-1)[internal.reshape(-1)]
    graph = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(nf, nf))
    _, labels = connected_components(graph, directed=False)

    # Renumber mapped components by first face for deterministic ids.
    mapped_ids = np.flatnonzero(mapped)
    comp = labels[mapped_ids]
    _, first = np.unique(comp, return_index=True)
    order = np.argsort(mapped_ids[first], kind="stable")
    remap = np.full(labels.max() + 1, -1, dtype=np.int64)
    remap[comp[first[order]]] = np.arange(len(order))
    face_chart = np.full(nf, -1, dtype=np.int64)
    face_chart[mapped_ids] = remap[comp]

    n_charts = len(order)
    uv_area = np.abs(mesh.face_signed_uv_areas()[mapped_ids])
    areas = np.bincount(face_chart[mapped_ids], weights=uv_area, minlength=n_charts)

    uv = mesh.corner_uvs()
    seg = np.roll(uv, -1, axis=1) - uv
    lengths = np.linalg.norm(seg, axis=2)  # (F, 3)
    border = ~internal & mapped[:, None]
    fidx = np.broadcast_to(np.arange(nf)[:, None], (nf, 3))[border]
    perimeters = np.bincount(face_chart[fidx], weights=lengths[border], minlength=n_charts)

    units = np.full(n_charts, -1, dtype=np.int64)
    units[face_chart[mapped_ids]] = mesh.face_materials[mapped_ids]
    return Atlas(face_chart, areas, perimeters, units)
