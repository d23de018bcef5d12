"""Snell primitives, facet slopes, weighted points, predicates, transforms."""

from __future__ import annotations

import numpy as np
import pytest

from causticdesign import (
    ProblemSpec,
    WeightVector,
    cell_predicate,
    facet_slope,
    grid_target,
    initial_weights,
    normal_from_snell,
    parameterize,
    reflect,
    refract,
    weighted_point,
)
from causticdesign.errors import (
    DegenerateDirection,
    DenominatorSign,
    NonPositiveWeight,
    TotalInternalReflection,
)
from causticdesign.optics import (
    from_transport_vars,
    refract_many,
    renormalize_transport,
    to_transport_vars,
)

from conftest import ALL_VARIANTS, screen_for, source_for, targets_for

EZ = np.array([0.0, 0.0, 1.0])


def random_units(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class TestReflect:
    def test_retroreflection(self):
        out = reflect(EZ, np.array([0.0, 0.0, -1.0]))
        assert np.allclose(out, [0, 0, -1])

    def test_tilted_plane_sends_to_diagonal(self):
        p = np.array([np.sqrt(2) - 1, 0.0])
        n = np.array([p[0], p[1], -1.0])
        n /= np.linalg.norm(n)
        out = reflect(EZ, n)
        assert np.allclose(out, [1 / np.sqrt(2), 0, -1 / np.sqrt(2)], atol=1e-12)

    def test_law_of_reflection_random(self):
        rng = np.random.default_rng(0)
        d = random_units(rng, 1000)
        n = random_units(rng, 1000)
        out = reflect(d, n)
        assert np.abs(np.linalg.norm(out, axis=1) - 1).max() < 1e-12
        din = np.einsum("ij,ij->i", d, n)
        dout = np.einsum("ij,ij->i", out, n)
        assert np.abs(din + dout).max() < 1e-12


class TestRefract:
    def test_normal_incidence_undeviated(self):
        out = refract(EZ, np.array([0.0, 0.0, -1.0]), 1.5)
        assert np.allclose(out, EZ, atol=1e-12)

    def test_snell_scalar_law_oracle(self):
        theta_in = np.deg2rad(10.0)
        n = -np.array([np.sin(theta_in), 0, np.cos(theta_in)])
        out = refract(EZ, n, 1.5)
        # extract the outgoing angle against the (inward) normal
        cos_out = -out @ n
        sin_out = np.sqrt(1 - cos_out**2)
        assert abs(sin_out - 1.5 * np.sin(theta_in)) < 1e-12

    def test_total_internal_reflection_at_60_degrees(self):
        theta = np.deg2rad(60.0)
        n = -np.array([np.sin(theta), 0, np.cos(theta)])
        with pytest.raises(TotalInternalReflection):
            refract(EZ, n, 1.5)

    def test_threshold_exact(self):
        kappa = 1.5
        sin_c = 1.0 / kappa
        for rel, ok in ((1 - 1e-12, True), (1 + 1e-12, False)):
            s = sin_c * rel
            n = -np.array([s, 0.0, np.sqrt(1 - s * s)])
            _, mask = refract_many(EZ, n, kappa)
            assert bool(mask) is ok

    def test_unit_output_random(self):
        rng = np.random.default_rng(1)
        d = random_units(rng, 500)
        n = random_units(rng, 500)
        flip = np.einsum("ij,ij->i", d, n) > 0
        n[flip] = -n[flip]
        out, ok = refract_many(d, n, 1.5)
        assert np.abs(np.linalg.norm(out[ok], axis=1) - 1).max() < 1e-12


class TestFacetSlope:
    def test_straight_down_mirror_flat(self):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        p = facet_slope(spec, np.array([0.0, 0.0, -1.0]))
        assert np.allclose(p, 0.0)

    def test_diagonal_mirror_slope(self):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        y = np.array([1.0, 0.0, -1.0]) / np.sqrt(2)
        p = facet_slope(spec, y)[0]
        assert abs(p[0] - (np.sqrt(2) - 1)) < 1e-12
        # round trip: reflecting e_z off the facet plane reproduces y
        n = np.array([p[0], p[1], -1.0])
        n /= np.linalg.norm(n)
        assert np.abs(reflect(EZ, n) - y).max() < 1e-12

    def test_axis_lens_flat(self):
        spec = ProblemSpec.from_name("cs-lens-convex")
        p = facet_slope(spec, np.array([0.0, 0.0, 1.0]))
        assert np.allclose(p, 0.0)

    def test_lens_round_trip_random(self):
        spec = ProblemSpec.from_name("cs-lens-convex")
        rng = np.random.default_rng(2)
        ang = rng.uniform(0, np.deg2rad(25), 200)
        az = rng.uniform(0, 2 * np.pi, 200)
        y = np.column_stack([np.sin(ang) * np.cos(az), np.sin(ang) * np.sin(az), np.cos(ang)])
        p = facet_slope(spec, y)
        n = np.column_stack([p, -np.ones(len(p))])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        out, ok = refract_many(np.broadcast_to(EZ, y.shape), n, spec.kappa)
        assert ok.all()
        assert np.abs(out - y).max() < 1e-12

    def test_degenerate_direction(self):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        with pytest.raises(DegenerateDirection):
            facet_slope(spec, np.array([0.0, 0.0, 1.0]))


class TestNormalFromSnell:
    def test_mirror_retro(self):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        n = normal_from_snell(spec, EZ, np.array([0.0, 0.0, -1.0]))
        assert np.allclose(n, [0, 0, -1])

    def test_lens_axis(self):
        spec = ProblemSpec.from_name("cs-lens-convex")
        n = normal_from_snell(spec, EZ, EZ)
        assert np.allclose(n, [0, 0, -1])

    def test_mirror_round_trip(self):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        y = np.array([1.0, 0.0, -1.0]) / np.sqrt(2)
        n = normal_from_snell(spec, EZ, y)
        assert np.abs(reflect(EZ, n) - y).max() < 1e-12

    def test_round_trips_random(self):
        rng = np.random.default_rng(3)
        for name in ALL_VARIANTS:
            spec = ProblemSpec.from_name(name)
            if spec.source_kind == "collimated":
                d = np.broadcast_to(EZ, (200, 3)).copy()
            else:
                d = random_units(rng, 200)
                d[:, 2] = np.abs(d[:, 2]) + 0.5
                d /= np.linalg.norm(d, axis=1, keepdims=True)
            # outgoing directions within a modest cone of the exact ones the
            # variant can realize
            if spec.component == "mirror":
                y = random_units(rng, 200)
                y[:, 2] = -np.abs(y[:, 2]) - 0.5
                y /= np.linalg.norm(y, axis=1, keepdims=True)
                n = normal_from_snell(spec, d, y)
                assert np.abs(reflect(d, n) - y).max() < 1e-10
            else:
                tilt = np.deg2rad(10)
                y = d + tilt * rng.standard_normal((200, 3))
                y /= np.linalg.norm(y, axis=1, keepdims=True)
                n = normal_from_snell(spec, d, y)
                out, ok = refract_many(d, n, spec.snell_ratio)
                assert ok.all()
                assert np.abs(out - y).max() < 1e-10


class TestWeightedPoint:
    def test_collimated_weight_formula(self):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        y = np.array([1.0, 0.0, -1.0]) / np.sqrt(2)
        p, w = weighted_point(spec, y, np.array([0.5]))
        assert abs(w[0] - (2 * 0.5 - (np.sqrt(2) - 1) ** 2)) < 1e-12
        assert abs(p[0, 0] - (np.sqrt(2) - 1)) < 1e-12

    def test_concave_flips_point_sign(self):
        y = np.array([[0.3, 0.1, -0.9]])
        y = y / np.linalg.norm(y)
        p_cvx, _ = weighted_point(ProblemSpec.from_name("cs-mirror-convex"), y, [0.4])
        p_ccv, _ = weighted_point(ProblemSpec.from_name("cs-mirror-concave"), y, [0.4])
        assert np.allclose(p_cvx, -p_ccv)

    def test_point_source_mirror_values(self):
        spec = ProblemSpec.from_name("ps-mirror-intersection")
        y = np.array([[0.0, 0.0, -1.0]])
        psi = np.array([np.exp(-1.0)])
        p, w = weighted_point(spec, y, psi)
        # p = -y / (2 psi), ||p||^2 + w = -1/psi for the radial parameter psi
        assert np.allclose(p[0], [0, 0, np.e / 2])
        assert abs(w[0] - (-np.e - np.e**2 / 4)) < 1e-12

    def test_point_source_lens_values(self):
        spec = ProblemSpec.from_name("ps-lens-intersection")
        y = np.array([[0.0, 0.0, 1.0]])
        psi = np.array([0.5])
        p, w = weighted_point(spec, y, psi)
        assert np.allclose(p[0], [0, 0, 1.5 / (2 * 0.5)])
        assert abs((p[0] @ p[0] + w[0]) - 1 / 0.5) < 1e-12

    def test_positive_weights_required(self):
        spec = ProblemSpec.from_name("ps-mirror-intersection")
        with pytest.raises(NonPositiveWeight):
            weighted_point(spec, np.array([[0.0, 0.0, -1.0]]), np.array([-1.0]))

    @pytest.mark.parametrize("name", ALL_VARIANTS)
    def test_power_diagram_equivalence_oracle(self, name):
        """argmin of the power distance equals the direct-inequality predicate."""
        spec = ProblemSpec.from_name(name)
        rng = np.random.default_rng(hash(name) % 2**32)
        targets = targets_for(spec, (4, 4))
        source = source_for(spec, resolution=8, level=3)
        pts = source.mesh.centroids
        pts = pts[rng.integers(0, len(pts), 2500)]
        for _ in range(4):
            phi = to_transport_vars(spec, initial_weights(spec, targets).values)
            phi = phi + 0.002 * rng.standard_normal(targets.count)
            psi = WeightVector(from_transport_vars(spec, phi), "natural")
            pred = cell_predicate(spec, targets, psi, pts)
            p, w = weighted_point(spec, targets.directions, psi.values)
            power = ((pts[:, None, :] - p[None]) ** 2).sum(-1) + w[None]
            assert (pred == np.argmin(power, axis=1)).mean() == 1.0


class TestCellPredicate:
    def test_single_target(self):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        y = np.array([[0.0, 0.0, -1.0]])
        idx = cell_predicate(spec, y, np.array([0.3]), np.array([[0.2, 0.1, 0.0]]))
        assert idx[0] == 0

    def test_two_target_sides(self):
        # slopes p1=(1,0), p2=(-1,0) at equal weights: larger <x,p>-psi wins
        spec = ProblemSpec.from_name("cs-mirror-convex")
        y1 = np.array([1.0, 0.0, -1.0])
        y1 /= np.linalg.norm(y1)    # slope (sqrt(2)-1, 0), positive x
        y2 = np.array([-1.0, 0.0, -1.0])
        y2 /= np.linalg.norm(y2)
        targets = np.vstack([y1, y2])
        psi = np.array([0.2, 0.2])
        idx = cell_predicate(spec, targets, psi,
                             np.array([[0.5, 0, 0], [-0.5, 0, 0]]))
        assert list(idx) == [0, 1]

    def test_tie_breaks_to_smaller_index(self):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        y = np.array([0.0, 0.0, -1.0])
        targets = np.vstack([y, y])
        idx = cell_predicate(spec, targets, np.array([0.1, 0.1]),
                             np.array([[0.3, 0.2, 0.0]]))
        assert idx[0] == 0

    def test_shift_invariance_collimated(self):
        spec = ProblemSpec.from_name("cs-mirror-concave")
        targets = targets_for(spec, (4, 4))
        rng = np.random.default_rng(5)
        psi = initial_weights(spec, targets).values + 0.01 * rng.standard_normal(16)
        x = np.column_stack([rng.uniform(-0.5, 0.5, 300),
                             rng.uniform(-0.5, 0.5, 300), np.zeros(300)])
        a = cell_predicate(spec, targets, psi, x)
        b = cell_predicate(spec, targets, psi + 7.3, x)
        assert np.array_equal(a, b)

    def test_scale_invariance_point_source(self):
        spec = ProblemSpec.from_name("ps-mirror-intersection")
        targets = targets_for(spec, (4, 4))
        source = source_for(spec, level=3)
        rng = np.random.default_rng(6)
        psi = np.exp(-1 + 0.003 * rng.standard_normal(16))
        x = source.mesh.centroids
        for c in (0.5, 2.0):
            assert np.array_equal(cell_predicate(spec, targets, psi, x),
                                  cell_predicate(spec, targets, c * psi, x))

    def test_lens_guard_raises(self):
        spec = ProblemSpec.from_name("ps-lens-intersection")
        y = np.array([[0.0, 0.0, 1.0]])
        with pytest.raises(DenominatorSign):
            # a query at 60 degrees off-axis violates kappa <x,y> > 1
            x = np.array([[np.sin(1.05), 0.0, np.cos(1.05)]])
            cell_predicate(spec, y, np.array([1.0]), x)


class TestParameterize:
    def test_flat_mirror(self):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        y = np.array([[0.0, 0.0, -1.0]])
        pts = parameterize(spec, y, np.array([0.0]), np.array([[0.2, -0.1, 0.0]]))
        assert np.allclose(pts, [[0.2, -0.1, 0.0]])

    def test_paraboloid_radial_value(self):
        spec = ProblemSpec.from_name("ps-mirror-intersection")
        y = np.array([[0.0, 0.0, -1.0]])
        pts = parameterize(spec, y, np.array([1.0]), EZ[None])
        assert np.allclose(pts, [[0, 0, 0.5]])

    def test_scale_homogeneity(self):
        spec = ProblemSpec.from_name("ps-mirror-intersection")
        targets = targets_for(spec, (3, 3))
        source = source_for(spec, level=3)
        rng = np.random.default_rng(7)
        psi = np.exp(-1 + 0.002 * rng.standard_normal(9))
        x = source.mesh.centroids[:50]
        base = parameterize(spec, targets, psi, x)
        for c in (0.5, 2.0):
            assert np.abs(parameterize(spec, targets, c * psi, x) - c * base).max() < 1e-12

    def test_convex_envelope_is_max_of_facets(self):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        targets = targets_for(spec, (4, 4))
        rng = np.random.default_rng(8)
        psi = initial_weights(spec, targets).values
        x = np.column_stack([rng.uniform(-0.5, 0.5, 200),
                             rng.uniform(-0.5, 0.5, 200), np.zeros(200)])
        z = parameterize(spec, targets, psi, x)[:, 2]
        slopes = facet_slope(spec, targets.directions)
        facets = x[:, :2] @ slopes.T - psi[None, :]
        assert np.abs(z - facets.max(axis=1)).max() < 1e-12
        # midpoint convexity on sampled triples
        a, b = x[:100], x[100:]
        mid = 0.5 * (a + b)
        za = parameterize(spec, targets, psi, a)[:, 2]
        zb = parameterize(spec, targets, psi, b)[:, 2]
        zm = parameterize(spec, targets, psi, mid)[:, 2]
        assert np.all(zm <= 0.5 * (za + zb) + 1e-12)


class TestInitialWeights:
    def test_collimated_voronoi_reduction(self):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        targets = targets_for(spec, (4, 4))
        psi = initial_weights(spec, targets)
        _, w = weighted_point(spec, targets.directions, psi.values)
        assert np.abs(w).max() < 1e-14

    def test_point_mirror_antipodes_own_their_cells(self):
        spec = ProblemSpec.from_name("ps-mirror-intersection")
        targets = targets_for(spec, (4, 4))
        psi = initial_weights(spec, targets)
        idx = cell_predicate(spec, targets, psi, -targets.directions)
        assert np.array_equal(idx, np.arange(16))

    def test_point_lens_targets_own_their_cells(self):
        spec = ProblemSpec.from_name("ps-lens-intersection")
        targets = targets_for(spec, (4, 4))
        psi = initial_weights(spec, targets)
        idx = cell_predicate(spec, targets, psi, targets.directions)
        assert np.array_equal(idx, np.arange(16))


class TestTransportVars:
    def test_identity_for_collimated(self):
        spec = ProblemSpec.from_name("cs-lens-convex")
        psi = np.array([1.0, 2.0, 3.0])
        assert np.array_equal(to_transport_vars(spec, psi), psi)

    def test_log_for_point_source(self):
        spec = ProblemSpec.from_name("ps-mirror-intersection")
        psi = np.array([np.exp(-1.0), np.exp(-2.0)])
        assert np.allclose(to_transport_vars(spec, psi), [-1, -2])

    def test_union_uses_negative_log(self):
        spec = ProblemSpec.from_name("ps-mirror-union")
        psi = np.array([np.exp(-1.0)])
        assert np.allclose(to_transport_vars(spec, psi), [1.0])

    def test_round_trip(self):
        rng = np.random.default_rng(9)
        for name in ALL_VARIANTS:
            spec = ProblemSpec.from_name(name)
            psi = np.exp(rng.uniform(-3, 1, 1000))
            back = from_transport_vars(spec, to_transport_vars(spec, psi))
            assert np.abs(back / psi - 1).max() < 1e-14

    def test_nonpositive_raises(self):
        spec = ProblemSpec.from_name("ps-lens-union")
        with pytest.raises(NonPositiveWeight):
            to_transport_vars(spec, np.array([0.0]))

    def test_renormalization_peaks_at_minus_one(self):
        spec = ProblemSpec.from_name("ps-mirror-intersection")
        phi = renormalize_transport(spec, np.array([0.3, -2.0, 1.7]))
        assert abs(phi.max() + 1.0) < 1e-15


def test_spec_validation():
    with pytest.raises(ValueError):
        ProblemSpec("point", "lens", "convex", kappa=1.0)
    with pytest.raises(ValueError):
        ProblemSpec("collimated", "lens", "convex", kappa=-1.0)
    with pytest.raises(ValueError):
        ProblemSpec.from_name("no-such-problem")
    assert ProblemSpec.from_name("ps-lens-union").snell_ratio == pytest.approx(1 / 1.5)
    assert ProblemSpec.from_name("cs-lens-convex").snell_ratio == 1.5
    assert ProblemSpec.from_name("cs-mirror-convex").snell_ratio is None
