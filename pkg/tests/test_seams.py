import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from meshes import cube, mesh, random_atlas_mesh, unit_square_chart

from uvmetro.mesh_io import TextureImage
from uvmetro.mesh_model import build_adjacency, classify_seams
from uvmetro.seams import (
    PixelsUnavailable,
    SeamPair,
    SeamPairs,
    bilinear_sample,
    build_seam_pairs,
    edge_discrepancies,
    edge_discrepancy,
    mesh_discrepancy,
    sample_count,
)


def constant(w=8, h=8, rgb=(0.2, 0.5, 0.9)):
    return TextureImage(w, h, np.broadcast_to(np.array(rgb, np.float32), (h, w, 3)).copy())


def gradient(w=16, h=4):
    """Texel i holds i / (w - 1) in every channel."""
    row = (np.arange(w) / (w - 1)).astype(np.float32)
    return TextureImage(w, h, np.repeat(np.broadcast_to(row, (h, w))[..., None], 3, axis=2).copy())


def gradient_value(u, w=16):
    """Closed-form bilinear value of ``gradient`` along u (clamp to edge)."""
    return np.clip(u * w - 0.5, 0, w - 1) / (w - 1)


def random_texture(rng, w=12, h=9):
    return TextureImage(w, h, rng.random((h, w, 3)).astype(np.float32))


def pair(a0, a1, b0, b1, length=1.0):
    return SeamPair(length, np.array(a0, float), np.array(a1, float), np.array(b0, float), np.array(b1, float))


# --- bilinear sampling --------------------------------------------------------

def test_constant_texture_sampling():
    tex = constant()
    uv = np.random.default_rng(0).uniform(-1, 2, size=(100, 2))
    assert np.all(bilinear_sample(tex, uv) == np.array([0.2, 0.5, 0.9], np.float32))


def test_texel_center_returns_texel_value():
    rng = np.random.default_rng(1)
    tex = random_texture(rng)
    i, j = 5, 3
    uv = [(i + 0.5) / tex.width, (j + 0.5) / tex.height]
    np.testing.assert_allclose(bilinear_sample(tex, uv), tex.pixels[j, i], rtol=1e-15)


def test_midpoint_between_black_and_white():
    tex = TextureImage(2, 1, np.array([[[0, 0, 0], [1, 1, 1]]], np.float32))
    np.testing.assert_allclose(bilinear_sample(tex, [0.5, 0.5]), [0.5, 0.5, 0.5])


def test_clamp_to_edge():
    tex = gradient()
    np.testing.assert_allclose(bilinear_sample(tex, [[-3.0, 0.5], [0.0, 7.0]])[:, 0], [0.0, 0.0])
    np.testing.assert_allclose(bilinear_sample(tex, [1.5, -1.0])[0], 1.0)


def test_dims_only_texture_cannot_be_sampled():
    with pytest.raises(PixelsUnavailable, match="pixels unavailable"):
        bilinear_sample(TextureImage(4, 4), [0.5, 0.5])


# --- D(e) -------------------------------------------------------------------

def test_sample_count():
    assert sample_count(np.array([0.0, 1.5, 2.0, 2.0000001, 40.2])).tolist() == [2, 2, 2, 3, 41]


def test_constant_texture_gives_zero():
    rng = np.random.default_rng(2)
    for _ in range(20):
        a0, a1, b0, b1 = rng.uniform(-0.5, 1.5, size=(4, 2))
        assert edge_discrepancy(pair(a0, a1, b0, b1), constant()) == 0.0


def test_coincident_segments_give_zero():
    tex = random_texture(np.random.default_rng(3))
    assert edge_discrepancy(pair([0.1, 0.2], [0.8, 0.6], [0.1, 0.2], [0.8, 0.6]), tex) == 0.0


def dense_oracle(p, n=10_000):
    t = (np.arange(n) + 0.5) / n
    u1 = p.e1_start[0] + t * (p.e1_end[0] - p.e1_start[0])
    u2 = p.e2_start[0] + t * (p.e2_end[0] - p.e2_start[0])
    return math.sqrt(3) * np.mean(np.abs(gradient_value(u1) - gradient_value(u2)))


@pytest.mark.parametrize("p", [
    pair([0.30, 0.1], [0.30, 0.9], [0.42, 0.1], [0.42, 0.9]),
    pair([0.10, 0.2], [0.70, 0.8], [0.20, 0.9], [0.95, 0.1]),
    pair([-0.2, 0.5], [0.60, 0.5], [0.90, 0.3], [0.10, 0.3]),
])
def test_gradient_seam_matches_dense_oracle(p):
    assert abs(edge_discrepancy(p, gradient()) - dense_oracle(p)) < 1e-3


def test_parallel_offset_segments_are_exact():
    du = 0.125
    p = pair([0.3, 0.1], [0.3, 0.9], [0.3 + du, 0.1], [0.3 + du, 0.9])
    assert edge_discrepancy(p, gradient()) == pytest.approx(math.sqrt(3) * du * 16 / 15, rel=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.2, 1.2), min_size=8, max_size=8), st.integers(0, 1000))
def test_symmetry(coords, seed):
    a0, a1, b0, b1 = np.array(coords).reshape(4, 2)
    tex = random_texture(np.random.default_rng(seed))
    d1 = edge_discrepancy(pair(a0, a1, b0, b1), tex)
    d2 = edge_discrepancy(pair(b0, b1, a0, a1), tex)
    assert (d1 is None) == (d2 is None)
    if d1 is not None:
        assert d1 >= 0 and abs(d1 - d2) < 1e-12


def test_degenerate_pair_is_null():
    assert edge_discrepancy(pair([0.2, 0.2], [0.2, 0.2], [0.1, 0.1], [0.5, 0.5]), constant()) is None


def midpoint(p, tex, n):
    t = ((np.arange(n) + 0.5) / n)[:, None]
    f1 = bilinear_sample(tex, p.e1_start + t * (p.e1_end - p.e1_start))
    f2 = bilinear_sample(tex, p.e2_start + t * (p.e2_end - p.e2_start))
    return float(np.mean(np.linalg.norm(f1 - f2, axis=1)))


@pytest.mark.parametrize("seed", range(10))
def test_doubling_sample_count_changes_little(seed):
    rng = np.random.default_rng(seed)
    tex = random_texture(rng)
    p = pair(*rng.uniform(0, 1, size=(4, 2)))
    d = edge_discrepancy(p, tex)
    n = int(sample_count(np.array([max(
        np.linalg.norm((p.e1_end - p.e1_start) * [tex.width, tex.height]),
        np.linalg.norm((p.e2_end - p.e2_start) * [tex.width, tex.height]))]))[0])
    assert d == pytest.approx(midpoint(p, tex, n), abs=1e-12)
    # Largest change between neighbouring texels bounds the per-texel gradient of the RGB norm.
    px = tex.pixels.astype(float)
    grad = max(np.linalg.norm(np.diff(px, axis=0), axis=2).max(), np.linalg.norm(np.diff(px, axis=1), axis=2).max())
    assert abs(midpoint(p, tex, 2 * n) - d) < 2 * grad / n


# --- building pairs on meshes -------------------------------------------------

def brute_force_pairs(m):
    """Seam edges as {(a, b): [(uv_a, uv_b) per face]} with a < b."""
    out = {}
    for f, (vf, tf) in enumerate(zip(m.faces.tolist(), m.face_texcoords.tolist())):
        for k in range(3):
            a, b = vf[k], vf[(k + 1) % 3]
            ta, tb = tf[k], tf[(k + 1) % 3]
            if a > b:
                a, b, ta, tb = b, a, tb, ta
            out.setdefault((a, b), []).append((m.texcoords[ta], m.texcoords[tb]))
    return {e: s for e, s in out.items()
            if len(s) == 2 and max(np.linalg.norm(s[0][0] - s[1][0]), np.linalg.norm(s[0][1] - s[1][1])) > 1e-7}


@pytest.mark.parametrize("unwrap, n_seams", [("cross", 7), ("faces", 12), ("triangles", 18)])
def test_cube_seam_pairs(unwrap, n_seams):
    m = cube(unwrap)
    adj = build_adjacency(m)
    seams = classify_seams(m, adj)
    pairs = build_seam_pairs(m, adj, seams)
    assert len(pairs) == n_seams == len(brute_force_pairs(m))
    oracle = brute_force_pairs(m)
    for i in range(len(pairs)):
        a, b = adj.edge_vertices[pairs.edge_ids[i]]
        sides = oracle[(int(a), int(b))]
        got = {tuple(np.round(np.concatenate([pairs.e1[i, 0], pairs.e2[i, 0]]), 12)),
               tuple(np.round(np.concatenate([pairs.e1[i, 1], pairs.e2[i, 1]]), 12))}
        for first, second in (sides, sides[::-1]):
            want = {tuple(np.round(np.concatenate([first[0], second[0]]), 12)),
                    tuple(np.round(np.concatenate([first[1], second[1]]), 12))}
            if want == got:
                break
        else:
            pytest.fail(f"misaligned seam pair for edge {(a, b)}")
        assert pairs.lengths[i] == pytest.approx(np.linalg.norm(m.positions[a] - m.positions[b]))


def test_seams_against_unmapped_faces_have_no_pair():
    m = unit_square_chart()
    m.face_texcoords[1] = -1
    adj = build_adjacency(m)
    assert len(build_seam_pairs(m, adj, classify_seams(m, adj))) == 0


# --- D(S) ---------------------------------------------------------------------

def hand_pairs(lengths):
    return SeamPairs.from_pairs([pair([0, 0], [1, 0], [0, 1], [1, 1], length=L) for L in lengths])


def test_weighted_mean_hand_case():
    s = mesh_discrepancy(hand_pairs([1.0, 3.0]), None, per_edge=np.array([0.4, 0.0]))
    assert abs(s.aggregate - 0.1) < 1e-12
    assert s.seam_edge_count == 2 and s.seam_total_length_3d == 4.0


def test_equal_values_give_that_value():
    s = mesh_discrepancy(hand_pairs([0.1, 7.0, 2.5]), None, per_edge=np.full(3, 0.37))
    assert s.aggregate == pytest.approx(0.37, rel=1e-15)


def test_no_seams_and_no_pixels_are_null():
    s = mesh_discrepancy(SeamPairs.from_pairs([]), constant())
    assert s.aggregate is None and s.flags == ["no_seam_edges"]
    s = mesh_discrepancy(hand_pairs([1.0]), TextureImage(4, 4))
    assert s.aggregate is None and s.flags == ["no_pixel_data"]


def seamed_mesh_discrepancy(m, tex, scale=1.0):
    m = mesh(m.positions * scale, m.faces, m.texcoords, m.face_texcoords)
    adj = build_adjacency(m)
    return mesh_discrepancy(build_seam_pairs(m, adj, classify_seams(m, adj)), tex)


def test_constant_texture_mesh_is_exactly_zero():
    for unwrap in ("cross", "faces", "triangles"):
        assert seamed_mesh_discrepancy(cube(unwrap), constant()).aggregate == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_scale_invariance_and_bounds(seed):
    rng = np.random.default_rng(seed)
    m = random_atlas_mesh(rng)
    tex = random_texture(rng, 64, 48)
    s = seamed_mesh_discrepancy(m, tex)
    if s.seam_edge_count == 0:
        assert s.aggregate is None
        return
    s2 = seamed_mesh_discrepancy(m, tex, scale=37.0)
    assert abs(s2.aggregate - s.aggregate) <= 1e-12 * s.aggregate
    vals = s.per_edge[~np.isnan(s.per_edge)]
    assert vals.min() - 1e-15 <= s.aggregate <= vals.max() + 1e-15


def test_per_texture_units():
    p = SeamPairs.from_pairs([SeamPair(1.0, np.array([0.1, 0.1]), np.array([0.9, 0.1]),
                                       np.array([0.1, 0.1]), np.array([0.9, 0.1]), 0, 1)])
    d = edge_discrepancies(p, {0: constant(rgb=(0, 0, 0)), 1: constant(rgb=(1, 0, 0))})
    assert d.tolist() == [1.0]
    assert mesh_discrepancy(p, {0: constant(), 1: constant()}).cross_texture_edges == 1
