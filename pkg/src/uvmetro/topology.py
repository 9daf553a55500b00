"""General mesh measures (counts, area, boundaries, genus) and defect counts."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .mesh_io import TexturedMesh
from .mesh_model import BOUNDARY, NONMANIFOLD, MeshAdjacency

__all__ = [
    "ZERO_AREA_EPS", "DefectReport", "TopologyStats",
    "boundary_loops", "defect_scan", "nonmanifold_vertices", "topology_stats",
    "zero_area_threshold",
]

ZERO_AREA_EPS = 1e-12


def zero_area_threshold(mesh: TexturedMesh) -> float:
    """Faces with 3D area at or below this value count as zero-area."""
    return ZERO_AREA_EPS * mesh.bbox_diagonal() ** 2


@dataclass
class TopologyStats:
    vertex_count: int
    edge_count: int
    face_count: int
    connected_components: int
    boundary_loop_count: int
    boundary_total_length: float
    surface_area_3d: float
    euler_characteristic: int
    genus: int | None
    flags: list[str] = field(default_factory=list)


@dataclass
class DefectReport:
    zero_area_faces: int = 0
    degenerate_faces: int = 0
    duplicate_vertices: int = 0
    unreferenced_vertices: int = 0
    nonmanifold_edges: int = 0
    nonmanifold_vertices: int = 0
    unmapped_faces: int = 0
    uv_out_of_range_faces: int = 0


def boundary_loops(edge_vertices: np.ndarray) -> list[list[int]]:
    """Split a set of boundary edges into closed vertex loops.

    Edges are walked vertex to vertex; whenever the walk reaches a vertex
    already on the current path the enclosed cycle is cut off as a loop.
    This separates loops that touch at a single vertex. Chains that dead-end
    (possible only on inconsistent input) are reported as one loop each.
    """
    incident: dict[int, list[int]] = defaultdict(list)
    for i, (a, b) in enumerate(edge_vertices.tolist()):
        incident[a].append(i)
        incident[b].append(i)
    used = np.zeros(len(edge_vertices), dtype=bool)
    ev = edge_vertices.tolist()
    loops: list[list[int]] = []

    def next_edge(v: int) -> int:
        lst = incident[v]
        while lst and used[lst[-1]]:
            lst.pop()
        return lst[-1] if lst else -1

    for start in range(len(ev)):
        if used[start]:
            continue
        used[start] = True
        a, b = ev[start]
        path = [a, b]
        pos = {a: 0, b: 1}
        while True:
            v = path[-1]
            e = next_edge(v)
            if e < 0:
                if len(path) > 1:
                    loops.append(path)
                break
            used[e] = True
            x, y = ev[e]
            w = y if x == v else x
            if w in pos:
                i = pos[w]
                loops.append(path[i:])
                for u in path[i + 1:]:
                    del pos[u]
                path = path[: i + 1]
            else:
                pos[w] = len(path)
                path.append(w)
    return loops


def _components(mesh: TexturedMesh) -> int:
    """Connected components of the face set (faces sharing a vertex)."""
    faces = mesh.faces
    if len(faces) == 0:
        return 0
    nv = len(mesh.positions)
    rows = np.concatenate([faces[:, 0], faces[:, 1]])
    cols = np.concatenate([faces[:, 1], faces[:, 2]])
    g = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(nv, nv))
    _, labels = connected_components(g, directed=False)
    return len(np.unique(labels[faces[:, 0]]))


def topology_stats(mesh: TexturedMesh, adj: MeshAdjacency) -> TopologyStats:
    flags: list[str] = []
    nv = len(mesh.positions)
    nf = mesh.n_faces
    referenced = len(np.unique(mesh.faces)) if nf else 0

    bmask = (adj.manifold_class == BOUNDARY) & ~adj.self_edges
    bedges = adj.edge_vertices[bmask]
    p = mesh.positions
    blen = float(np.linalg.norm(p[bedges[:, 1]] - p[bedges[:, 0]], axis=1).sum()) if len(bedges) else 0.0
    b = len(boundary_loops(bedges))
    c = _components(mesh)

    # Unreferenced vertices are isolated points, not part of the surface.
    chi = referenced - adj.n_edges + nf
    genus: int | None = None
    twice_g = 2 * c - chi - b
    if np.any(adj.manifold_class == NONMANIFOLD):
        flags.append("genus_undefined:nonmanifold_edges")
    elif np.any(adj.self_edges):
        flags.append("genus_undefined:degenerate_faces")
    elif twice_g < 0 or twice_g % 2:
        flags.append("genus_undefined:inconsistent_euler_characteristic")
    else:
        genus = twice_g // 2

    return TopologyStats(
        vertex_count=nv,
        edge_count=adj.n_edges,
        face_count=nf,
        connected_components=c,
        boundary_loop_count=b,
        boundary_total_length=blen,
        surface_area_3d=float(mesh.face_areas_3d().sum()),
        euler_characteristic=int(chi),
        genus=genus,
        flags=flags,
    )


def nonmanifold_vertices(mesh: TexturedMesh, adj: MeshAdjacency) -> np.ndarray:
    """Boolean mask of vertices whose face link is not one disk or half-disk.

    Face corners around a vertex are glued whenever their faces share a
    manifold edge through that vertex; a regular vertex ends up with a
    single group. Vertices on nonmanifold edges are always irregular.
    """
    nv = len(mesh.positions)
    faces = mesh.faces
    nf = len(faces)
    bad = np.zeros(nv, dtype=bool)
    if nf == 0:
        return bad

    ids, ca, cb = adj.manifold_pairs
    fa, ka = ca // 3, ca % 3
    fb, kb = cb // 3, cb % 3
    # A manifold face-edge k of face f covers corners k and k+1.
    a_start, a_end = 3 * fa + ka, 3 * fa + (ka + 1) % 3
    b_start, b_end = 3 * fb + kb, 3 * fb + (kb + 1) % 3
    same = faces[fa, ka] == faces[fb, kb]
    rows = [a_start, a_end]
    cols = [np.where(same, b_start, b_end), np.where(same, b_end, b_start)]

    # Corners of one face that share a vertex (degenerate faces) are glued too.
    for i, j in ((0, 1), (1, 2), (0, 2)):
        dup = np.flatnonzero(faces[:, i] == faces[:, j])
        rows.append(3 * dup + i)
        cols.append(3 * dup + j)

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    g = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(3 * nf, 3 * nf))
    _, labels = connected_components(g, directed=False)
    corner_vertex = faces.reshape(-1)
    keys = np.unique(corner_vertex * np.int64(3 * nf) + labels)
    groups = np.bincount(keys // (3 * nf), minlength=nv)
    bad |= groups > 1

    nm = adj.edge_vertices[adj.manifold_class == NONMANIFOLD]
    bad[nm.reshape(-1)] = True
    return bad


def defect_scan(mesh: TexturedMesh, adj: MeshAdjacency) -> DefectReport:
    faces = mesh.faces
    nv = len(mesh.positions)
    rep = DefectReport()
    if len(faces):
        rep.zero_area_faces = int(np.count_nonzero(mesh.face_areas_3d() <= zero_area_threshold(mesh)))
        rep.degenerate_faces = int(np.count_nonzero(
            (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
        ))
    if nv:
        # Bitwise-exact ties: compare the raw float64 bytes.
        raw = np.ascontiguousarray(mesh.positions).view(np.dtype((np.void, 24))).reshape(-1)
        _, inv, counts = np.unique(raw, return_inverse=True, return_counts=True)
        rep.duplicate_vertices = int(np.count_nonzero(counts[inv.reshape(-1)] > 1))
        referenced = np.zeros(nv, dtype=bool)
        referenced[faces.reshape(-1)] = True
        rep.unreferenced_vertices = int(nv - referenced.sum())
    rep.nonmanifold_edges = int(np.count_nonzero(adj.manifold_class == NONMANIFOLD))
    rep.nonmanifold_vertices = int(nonmanifold_vertices(mesh, adj).sum())
    mapped = mesh.mapped
    rep.unmapped_faces = int(np.count_nonzero(~mapped))
    if mapped.any():
        uv = mesh.texcoords[mesh.face_texcoords[mapped]]
        out = ((uv < 0.0) | (uv > 1.0)).any(axis=(1, 2))
        rep.uv_out_of_range_faces = int(np.count_nonzero(out))
    return rep

