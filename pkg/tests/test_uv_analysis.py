import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from meshes import (
    brute_force_coverage,
    cube,
    disjoint_squares,
    grid,
    mesh,
    random_atlas_mesh,
    regular_polygon_chart,
    subdivide,
    triangle_soup,
    unit_square_chart,
)

from uvmetro.mesh_io import TexturedMesh
from uvmetro.mesh_model import build_adjacency, classify_seams, extract_charts
from uvmetro.raster import rasterize_triangles
from uvmetro.uv_analysis import (
    closed_form_singular_values,
    crumbliness,
    detect_overlaps,
    face_jacobians,
    occupancy,
    qc_distortion,
    rasterize_coverage,
    sampling_field,
    weighted_percentile,
)


def atlas_of(m):
    adj = build_adjacency(m)
    return extract_charts(m, adj, classify_seams(m, adj))


def coverage(m, w, h):
    a = atlas_of(m)
    return rasterize_coverage(m, a, (w, h)), a


def random_triangles(rng, n):
    return rng.uniform(-0.1, 1.1, size=(n, 3, 2))


# --- rasterizer -------------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_raster_matches_oracle_off_edges(seed):
    rng = np.random.default_rng(seed)
    tris = random_triangles(rng, 6)
    W, H = 37, 23
    res = rasterize_triangles(tris * [W, H], W, H)
    expect, on_edge = brute_force_coverage(tris, W, H)
    assert np.array_equal(res.counts[~on_edge], expect[~on_edge])


def test_lone_half_square_excludes_right_hypotenuse():
    tri = np.array([[[0, 0], [1, 0], [0, 1]]], float)
    res = rasterize_triangles(tri * 256, 256, 256)
    # Centers on the diagonal belong to the (absent) triangle on its left.
    assert res.counts.sum() == (256 * 256 - 256) // 2


def test_grid_partition_counts_every_center_once():
    m = grid(8)
    grids, _ = coverage(m, 8, 8)
    # Every texel center of an 8x8 grid lies on a diagonal of the 8x8 grid cells.
    assert grids[0].counts.min() == 1 and grids[0].counts.max() == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_shared_edges_never_double_count(k, size, seed):
    rng = np.random.default_rng(seed)
    m = grid(k, z=lambda X, Y: 0 * X)
    m.texcoords[:] += rng.uniform(-0.3, 0.3, m.texcoords.shape) / k * (m.texcoords % 1 != 0)
    grids, _ = coverage(m, size, size)
    assert grids[0].counts.max() <= 1


def test_coverage_is_clipped_to_the_grid():
    tri = np.array([[[-5, -5], [20, -5], [-5, 20]]], float)
    assert rasterize_triangles(tri, 4, 4).counts.sum() == 16


def test_invalid_dims():
    with pytest.raises(ValueError):
        rasterize_triangles(np.zeros((0, 3, 2)), 0, 4)


# --- occupancy --------------------------------------------------------------

def test_occupancy_full_and_half():
    m = unit_square_chart()
    grids, _ = coverage(m, 16, 16)
    assert occupancy(grids) == 1.0
    m.texcoords[:] *= [1.0, 0.5]
    grids, _ = coverage(m, 16, 16)
    assert occupancy(grids) == 0.5


def test_occupancy_empty_atlas_is_zero():
    m = unit_square_chart()
    m.texcoords[:] += 5.0
    grids, _ = coverage(m, 8, 8)
    assert occupancy(grids) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_occupancy_matches_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    tris = rng.uniform(0, 1, size=(8, 3, 2))
    m = triangle_soup(tris)
    grids, _ = coverage(m, 64, 64)
    expect, on_edge = brute_force_coverage(tris, 64, 64)
    cov = grids[0].counts > 0
    assert np.array_equal(cov[~on_edge], (expect > 0)[~on_edge])


# --- overlaps ---------------------------------------------------------------

def test_injective_atlas_has_no_overlap():
    for m in (unit_square_chart(), cube("cross"), cube("faces"), disjoint_squares(3, size=0.3, gap=0.01)):
        grids, a = coverage(m, 64, 64)
        assert detect_overlaps(grids, m, a) == (0, 0, 0.0)


def test_one_flipped_triangle():
    m = grid(4)
    # Drag an interior vertex across one neighbouring edge so one triangle folds over.
    m.texcoords[6] = (0.2, 0.5)
    assert np.count_nonzero(m.face_signed_uv_areas() < 0) == 1
    grids, a = coverage(m, 32, 32)
    flipped, _, frac = detect_overlaps(grids, m, a)
    assert len(a) == 1
    assert flipped == 1
    assert frac > 0


def test_two_charts_on_the_same_rectangle():
    sq = np.array([[[0.1, 0.2], [0.7, 0.2], [0.7, 0.9]], [[0.1, 0.2], [0.7, 0.9], [0.1, 0.9]]])
    other = sq * 0.8 + 0.15
    tris = np.concatenate([sq, other])
    m = triangle_soup(tris)
    # Glue each pair into one chart by sharing texcoords and positions.
    m = mesh(np.vstack([m.positions[:3], m.positions[3:6][[2]], m.positions[6:9], m.positions[9:12][[2]]]),
             [[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]],
             np.vstack([tris[0], tris[1][[2]], tris[2], tris[3][[2]]]),
             [[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]])
    grids, a = coverage(m, 64, 64)
    assert len(a) == 2
    c1, e1 = brute_force_coverage(tris[:2], 64, 64)
    c2, e2 = brute_force_coverage(tris[2:], 64, 64)
    # No texel center lies on any edge, so strict containment is exact here.
    assert not (e1 | e2).any()
    both = (c1 > 0) & (c2 > 0)
    _, cross, _ = detect_overlaps(grids, m, a)
    assert cross == int(both.sum()) > 0


# --- crumbliness --------------------------------------------------------------

def test_unit_square_crumbliness():
    c, s = crumbliness(atlas_of(unit_square_chart()))
    assert abs(c - 2 / math.sqrt(math.pi)) < 1e-10
    assert s == 1 / c


@pytest.mark.parametrize("n", [1, 2, 4, 16])
def test_identical_squares(n):
    c, _ = crumbliness(atlas_of(disjoint_squares(n)))
    assert abs(c - 2 * math.sqrt(n / math.pi)) < 1e-10


def test_polygon_tends_to_a_disk():
    c, _ = crumbliness(atlas_of(regular_polygon_chart(256)))
    assert 1 <= c < 1 + 1e-3


def test_crumbliness_inputs_and_degenerate_atlas():
    assert crumbliness([(1.0, 4.0)])[0] == pytest.approx(2 / math.sqrt(math.pi))
    assert crumbliness([]) == (None, None)
    assert crumbliness([(0.0, 1.0)]) == (None, None)
    assert crumbliness(list(atlas_of(cube("faces")))) == crumbliness(atlas_of(cube("faces")))


@pytest.mark.parametrize("seed", range(5))
def test_crumbliness_invariances(seed):
    m = random_atlas_mesh(np.random.default_rng(seed))
    c, _ = crumbliness(atlas_of(m))
    c_sub, _ = crumbliness(atlas_of(subdivide(m)))
    assert abs(c_sub - c) / c < 1e-9
    for k in (0.1, 3, 1000):
        m2 = mesh(m.positions, m.faces, m.texcoords * k, m.face_texcoords)
        assert abs(crumbliness(atlas_of(m2))[0] - c) / c < 1e-12


# --- sampling ---------------------------------------------------------------

def two_face_hand_case():
    # Equal 3D areas; UV areas 1:3, so s_f = 0.5 and 1.5.
    p = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]]
    t = [[0, 0], [1, 0], [1, 1], [0, 1], [0, 0], [1, 1], [0, 3]]
    return mesh(p, [[0, 1, 2], [0, 2, 3]], t, [[0, 1, 2], [4, 5, 6]])


def test_sampling_two_face_hand_case():
    s = sampling_field(two_face_hand_case())
    np.testing.assert_allclose(s.s_f, [0.5, 1.5], rtol=1e-14)
    assert abs(s.variance - 0.25) < 1e-12
    assert abs(s.mean - 1) < 1e-12
    assert (s.p1, s.p50, s.p99) == (0.5, 0.5, 1.5)


def test_uniform_map_has_zero_variance():
    for m in (grid(5, uv_scale=0.3), unit_square_chart(), cube("cross")):
        s = sampling_field(m)
        assert abs(s.variance) < 1e-12 and abs(s.mean - 1) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_sampling_mean_is_one_and_uv_scale_invariant(seed):
    m = random_atlas_mesh(np.random.default_rng(seed))
    s = sampling_field(m)
    assert abs(s.mean - 1) < 1e-12
    m2 = mesh(m.positions, m.faces, m.texcoords * 7.5, m.face_texcoords)
    np.testing.assert_allclose(sampling_field(m2).s_f, s.s_f, rtol=1e-12)


def test_sampling_ignores_unmapped_and_zero_area_faces():
    m = unit_square_chart()
    m.face_texcoords[1] = -1
    s = sampling_field(m)
    assert s.valid.tolist() == [True, False]
    assert np.isnan(s.s_f[1]) and s.s_f[0] == 1.0
    m = mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    assert sampling_field(m).variance is None


def test_weighted_percentile():
    v = np.array([3.0, 1.0, 2.0])
    w = np.array([1.0, 1.0, 2.0])
    assert weighted_percentile(v, w, 25) == 1.0
    assert weighted_percentile(v, w, 50) == 2.0
    assert weighted_percentile(v, w, 99) == 3.0


# --- quasi-conformal distortion --------------------------------------------

def affine_uv(m, A):
    p2 = m.positions[:, :2]
    return mesh(m.positions, m.faces, p2 @ np.asarray(A, float).T, m.faces)


def test_congruent_map_is_conformal():
    d = qc_distortion(grid(4))
    assert np.all(np.abs(d.qcd - 1) < 1e-12)
    assert abs(d.mean - 1) < 1e-12


def test_axis_stretch():
    d = qc_distortion(affine_uv(grid(3), [[2, 0], [0, 1]]))
    assert np.all(np.abs(d.qcd - 0.5) < 1e-10)


def test_collapsed_uv_gives_zero():
    m = unit_square_chart()
    m.texcoords[:, 1] = 0.0
    assert qc_distortion(m).qcd.tolist() == [0.0, 0.0]


def test_3d_degenerate_faces_are_excluded():
    m = mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], [[0, 1, 2], [0, 1, 3]],
             [[0, 0], [1, 0], [0, 1], [0, 1]], [[0, 1, 2], [0, 1, 3]])
    d = qc_distortion(m)
    assert d.excluded_3d_degenerate == 1
    assert np.isnan(d.qcd[0]) and d.qcd[1] == pytest.approx(1.0)


def test_similarity_invariance():
    rng = np.random.default_rng(7)
    base = random_atlas_mesh(rng)
    ref = qc_distortion(base).qcd
    for _ in range(100):
        th = rng.uniform(0, 2 * np.pi)
        s = 10 ** rng.uniform(-3, 3)
        R = s * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        if rng.random() < 0.5:
            R = R @ np.diag([1, -1])
        m = mesh(base.positions, base.faces, base.texcoords @ R.T + rng.uniform(-5, 5, 2), base.face_texcoords)
        assert np.max(np.abs(qc_distortion(m).qcd - ref)) < 1e-10


def test_qcd_is_invariant_to_3d_rigid_motion():
    m = random_atlas_mesh(np.random.default_rng(11))
    q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(3, 3)))
    m2 = mesh(m.positions @ q.T + 3.0, m.faces, m.texcoords, m.face_texcoords)
    np.testing.assert_allclose(qc_distortion(m2).qcd, qc_distortion(m).qcd, atol=1e-10)


def test_closed_form_singular_values_match_svd():
    rng = np.random.default_rng(0)
    J = rng.normal(size=(1000, 2, 2)) * 10 ** rng.uniform(-3, 3, size=(1000, 1, 1))
    smax, smin = closed_form_singular_values(J)
    sv = np.linalg.svd(J, compute_uv=False)
    np.testing.assert_allclose(smax, sv[:, 0], rtol=1e-10)
    np.testing.assert_allclose(smin / smax, sv[:, 1] / sv[:, 0], atol=1e-10)


def test_jacobian_maps_3d_edges_to_uv_edges():
    m = random_atlas_mesh(np.random.default_rng(3))
    J = face_jacobians(m)
    p = m.corner_positions()
    # Singular values of J equal those of the UV edge matrix times the pseudo-inverse of the 3D one.
    P = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    t = m.corner_uvs()
    U = np.stack([t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]], axis=2)
    ref = np.linalg.svd(U @ np.linalg.pinv(P), compute_uv=False)
    np.testing.assert_allclose(np.linalg.svd(J, compute_uv=False), ref, rtol=1e-9, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100), st.floats(0.01, 100), st.floats(-10, 10))
def test_qcd_in_unit_interval(sx, sy, shear):
    d = qc_distortion(affine_uv(grid(2), [[sx, shear], [0, sy]]))
    assert np.all((d.qcd >= 0) & (d.qcd <= 1))


def test_subset_mesh_helper_is_consistent():
    # Sanity: a TexturedMesh built directly agrees with the fixture builder.
    m = unit_square_chart()
    m2 = TexturedMesh(m.positions, m.texcoords, m.faces, m.face_texcoords, m.face_materials)
    assert qc_distortion(m2).mean == qc_distortion(m).mean
