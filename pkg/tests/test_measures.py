"""Source/target ingestion: normalization, pixel layout, blending, image IO."""

from __future__ import annotations

import numpy as np
import pytest

from causticdesign import (
    TargetScreen,
    blend_with_uniform,
    build_source_density,
    grid_target,
    load_target_image,
)
from causticdesign.domains import RectRegion, icosphere
from causticdesign.errors import AllBlackImage, EmptySupport, HemisphereViolation
from causticdesign.images import read_pgm, write_pgm
from causticdesign.measures import SourceSpec

from conftest import SCREEN_DOWN, synthetic_photo


class TestLoadTargetImage:
    def test_uniform_2x2(self):
        t = load_target_image(np.full((2, 2), 255.0), SCREEN_DOWN)
        assert t.count == 4
        assert np.allclose(t.masses, 0.25)
        # directions are the normalized screen-cell centers
        pts = SCREEN_DOWN.grid_points((2, 2))
        expect = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        assert np.allclose(t.directions, expect)

    def test_zero_pixels_dropped(self):
        t = load_target_image(np.array([[255.0, 0.0]]), SCREEN_DOWN)
        assert t.count == 1
        assert t.masses[0] == 1.0

    def test_atom_count_equals_nonzero_pixels(self):
        img = synthetic_photo(256)
        img[:10, :10] = 0.0
        t = load_target_image(img, SCREEN_DOWN)
        assert t.count == int((img > 0).sum())
        assert t.count <= 256 * 256
        assert abs(t.masses.sum() - 1.0) < 1e-12

    def test_all_black_raises(self):
        with pytest.raises(AllBlackImage):
            load_target_image(np.zeros((4, 4)), SCREEN_DOWN)

    def test_hemisphere_check(self):
        up = load_target_image(np.ones((2, 2)), TargetScreen(axis=(0, 0, 1)))
        with pytest.raises(HemisphereViolation):
            up.check_hemisphere("lower")
        up.check_hemisphere("upper")

    def test_masses_proportional_to_intensity(self):
        img = np.array([[1.0, 3.0]])
        t = load_target_image(img, SCREEN_DOWN)
        assert np.allclose(t.masses, [0.25, 0.75])

    def test_pixel_maps_to_cell_center(self):
        t = load_target_image(np.ones((1, 1)), SCREEN_DOWN)
        assert np.allclose(t.directions[0], [0, 0, -1])


class TestBuildSourceDensity:
    def test_uniform_square_resolution_2(self):
        s = build_source_density(SourceSpec(kind="uniform_rect", resolution=2))
        assert len(s.mesh.faces) == 8
        assert abs(s.total_mass - 1.0) < 1e-12
        assert np.allclose(s.vertex_density, s.vertex_density[0])

    def test_gaussian_center_above_corner(self):
        s = build_source_density(SourceSpec(kind="gaussian_rect", resolution=8))
        center = s.density_at(np.array([[0.0, 0.0, 0.0]]))[0]
        corner = s.density_at(np.array([[0.49, 0.49, 0.0]]))[0]
        assert center > corner
        assert abs(s.total_mass - 1.0) < 1e-12

    def test_cap_mass_matches_monte_carlo(self):
        s = build_source_density(SourceSpec(kind="uniform_cap",
                                            cap_half_angle=np.pi / 6, cap_level=4))
        assert abs(s.total_mass - 1.0) < 1e-12
        # independent oracle: Monte-Carlo re-integration of the affine density
        # over the chordal mesh via uniform per-triangle sampling
        rng = np.random.default_rng(0)
        total = 0.0
        grad, off = s.affine
        for t in range(len(s.mesh.faces)):
            a, b, c = s.mesh.corners[t]
            u = rng.random(400)
            v = rng.random(400)
            flip = u + v > 1
            u[flip] = 1 - u[flip]
            v[flip] = 1 - v[flip]
            pts = a + u[:, None] * (b - a) + v[:, None] * (c - a)
            vals = pts @ grad[t] + off[t]
            total += s.mesh.areas[t] * vals.mean()
        assert abs(total - 1.0) < 1e-3

    def test_empty_support_raises(self):
        with pytest.raises(EmptySupport):
            build_source_density(SourceSpec(kind="image_rect",
                                            image=np.zeros((4, 4)), resolution=4))

    def test_plane_vertices_have_zero_z(self):
        s = build_source_density(SourceSpec(kind="uniform_rect", resolution=3))
        assert np.all(s.mesh.vertices[:, 2] == 0.0)

    def test_sphere_vertices_unit_norm(self):
        s = build_source_density(SourceSpec(kind="uniform_cap", cap_level=3))
        norms = np.linalg.norm(s.mesh.vertices, axis=1)
        assert np.abs(norms - 1.0).max() < 1e-12


class TestBlendWithUniform:
    def test_t0_identity(self, rect_source):
        out = blend_with_uniform(rect_source, 0.0, rect_source.region,
                                 mesh=rect_source.mesh)
        assert np.allclose(out.vertex_density, rect_source.vertex_density, atol=1e-12)

    def test_t1_uniform(self, rect_source):
        region = RectRegion((0.0, 0.0), 2.0, 2.0)
        out = blend_with_uniform(rect_source, 1.0, region)
        assert np.allclose(out.vertex_density, out.vertex_density[0])
        assert abs(out.total_mass - 1.0) < 1e-12

    def test_t_half_pointwise_average(self):
        src = build_source_density(SourceSpec(kind="gaussian_rect", resolution=16))
        region = RectRegion((0.0, 0.0), 1.0, 1.0)
        out = blend_with_uniform(src, 0.5, region, resolution=16)
        rng = np.random.default_rng(3)
        pts = np.column_stack([rng.uniform(-0.45, 0.45, 100),
                               rng.uniform(-0.45, 0.45, 100), np.zeros(100)])
        # direct evaluation oracle: average of the two normalized densities,
        # rescaled by the blend's own normalization constant
        rho = src.density_at(pts)
        uni = np.full(100, 1.0)     # uniform density of mass one on the unit square
        blended = out.density_at(pts)
        expected = 0.5 * rho + 0.5 * uni
        scale = blended.mean() / expected.mean()
        assert np.abs(blended - expected * scale).max() < 5e-2 * expected.max()

def test_centroid_rule_matches_midpoint_rule():
    # both quadratures are exact for affine densities
    src = build_source_density(SourceSpec(kind="gaussian_rect", resolution=6))
    grad, off = src.affine
    corners = src.mesh.corners
    centroid_rule = src.triangle_masses
    mids = 0.5 * (corners + np.roll(corners, 1, axis=1))
    vals = np.einsum("tij,tj->ti", mids, grad) + off[:, None]
    midpoint_rule = src.mesh.areas * vals.mean(axis=1)
    assert np.abs(centroid_rule - midpoint_rule).max() < 1e-14


class TestImageIO:
    def test_pgm_roundtrip(self, tmp_path):
        img = (synthetic_photo(16) * 255).round() / 255.0
        path = tmp_path / "t.pgm"
        write_pgm(path, img)
        back = read_pgm(path)
        assert np.abs(back - img / img.max()).max() < 1e-9

    def test_pgm_ascii(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_text("P2\n# comment\n2 2\n255\n0 128\n255 64\n")
        img = read_pgm(path)
        assert img.shape == (2, 2)
        assert img[1, 0] == 1.0

    def test_grid_target_uniform(self):
        t = grid_target((4, 4), SCREEN_DOWN)
        assert t.count == 16
        assert np.allclose(t.masses, 1 / 16)
