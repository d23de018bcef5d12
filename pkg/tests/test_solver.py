"""Damped Newton solver: directions, guards, convergence, initialization."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from causticdesign import (
    ProblemSpec,
    SolverConfig,
    WeightVector,
    damped_newton,
    entropic_initial_weights,
    evaluate_G,
    grid_target,
    initial_weights,
    newton_direction,
    solve_far_field,
)
from causticdesign.errors import InitialEmptyCell, IterationLimit
from causticdesign.power_diagram import TransportState
from causticdesign.simulate import sample_source_points
from causticdesign.optics import cell_predicate, to_transport_vars

from conftest import SCREEN_DOWN, source_for, targets_for


def _state_from(G, DG):
    return TransportState(G=np.asarray(G, dtype=float),
                          jacobian=sp.csr_matrix(np.asarray(DG, dtype=float)),
                          psi_used=WeightVector(np.zeros(len(G))),
                          diagram=None)


class TestNewtonDirection:
    def test_zero_residual_gives_zero(self):
        st = _state_from([0.5, 0.5], [[-1.0, 1.0], [1.0, -1.0]])
        d, its = newton_direction(st, np.array([0.5, 0.5]))
        assert np.allclose(d, 0.0)
        assert its == 0

    def test_two_cell_closed_form(self):
        # DG = [[-a, a], [a, -a]], residual (r, -r): pseudo-inverse direction
        # is (r/(2a), -r/(2a))
        a, r = 0.8, 0.03
        st = _state_from([0.5 + r, 0.5 - r], [[-a, a], [a, -a]])
        d, _ = newton_direction(st, np.array([0.5, 0.5]))
        assert np.allclose(d, [r / (2 * a), -r / (2 * a)], atol=1e-12)

    def test_matches_dense_pseudo_inverse(self):
        rng = np.random.default_rng(20)
        n = 50
        # synthetic Jacobian: negative graph Laplacian with random weights
        W = np.triu(rng.random((n, n)) * (rng.random((n, n)) < 0.2), 1)
        W = W + W.T
        DG = W - np.diag(W.sum(axis=1))
        G = rng.dirichlet(np.ones(n))
        sigma = rng.dirichlet(np.ones(n))
        st = _state_from(G, DG)
        d, _ = newton_direction(st, sigma, SolverConfig(cg_tolerance=1e-13))
        dense = -np.linalg.pinv(DG) @ (G - sigma)
        assert np.abs(d - dense).max() < 1e-8

    def test_mean_zero(self):
        rng = np.random.default_rng(21)
        n = 20
        W = np.abs(np.triu(rng.random((n, n)), 1))
        W = W + W.T
        DG = W - np.diag(W.sum(axis=1))
        st = _state_from(rng.dirichlet(np.ones(n)), DG)
        d, _ = newton_direction(st, rng.dirichlet(np.ones(n)))
        assert abs(d.mean()) < 1e-12


class TestDampedNewton:
    def test_single_cell_zero_iterations(self, rect_source):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        targets = grid_target((1, 1), SCREEN_DOWN)
        psi, rep = damped_newton(spec, rect_source, targets,
                                 initial_weights(spec, targets))
        assert rep.iterations == 0
        assert rep.converged

    def test_uniform_4x4_converges_and_matches_sampling(self, rect_source):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        targets = targets_for(spec, (4, 4))
        psi, rep = damped_newton(spec, rect_source, targets,
                                 initial_weights(spec, targets, source=rect_source))
        assert rep.converged
        assert rep.residuals[-1] <= 1e-8
        # Monte-Carlo oracle on the solved cells
        rng = np.random.default_rng(22)
        pts = sample_source_points(rect_source, 300_000, rng)
        idx = cell_predicate(spec, targets, psi, pts)
        freq = np.bincount(idx, minlength=16) / len(pts)
        tol = 3 * np.sqrt((1 / 16) / len(pts))
        assert np.abs(freq - 1 / 16).max() <= 3 * tol

    def test_idempotent_from_solution(self, rect_source):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        targets = targets_for(spec, (3, 3))
        psi, _ = damped_newton(spec, rect_source, targets,
                               initial_weights(spec, targets, source=rect_source))
        _, rep2 = damped_newton(spec, rect_source, targets, psi)
        assert rep2.iterations == 0

    def test_guard_and_decrease_invariants(self, rect_source):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        targets = targets_for(spec, (5, 5))
        psi, rep = damped_newton(spec, rect_source, targets,
                                 initial_weights(spec, targets, source=rect_source))
        assert all(m >= rep.eps0 for m in rep.min_masses)
        for k, level in enumerate(rep.backtracks):
            factor = 1 - 2.0 ** -(level + 1)
            assert rep.residuals[k + 1] <= factor * rep.residuals[k] + 1e-15

    def test_mean_preserved_for_collimated(self, rect_source):
        spec = ProblemSpec.from_name("cs-lens-convex")
        targets = targets_for(spec, (4, 4))
        start = initial_weights(spec, targets, source=rect_source)
        psi, rep = damped_newton(spec, rect_source, targets, start)
        assert abs(psi.values.mean() - start.values.mean()) < 1e-10

    def test_initial_empty_cell_raises(self, rect_source):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        targets = targets_for(spec, (4, 4))
        # weights so lopsided that one cell disappears
        bad = initial_weights(spec, targets).values
        bad[0] += 10.0
        with pytest.raises(InitialEmptyCell):
            damped_newton(spec, rect_source, targets, WeightVector(bad))

    def test_iteration_limit(self, rect_source):
        spec = ProblemSpec.from_name("cs-mirror-convex")
        targets = targets_for(spec, (6, 6))
        cfg = SolverConfig(eta=1e-14, max_newton_iters=1)
        with pytest.raises(IterationLimit):
            damped_newton(spec, rect_source, targets,
                          initial_weights(spec, targets, source=rect_source), cfg)

    def test_renormalized_point_source_weights(self, cap_source):
        spec = ProblemSpec.from_name("ps-mirror-intersection")
        targets = targets_for(spec, (4, 4))
        psi, rep = damped_newton(spec, cap_source, targets,
                                 initial_weights(spec, targets))
        phi = to_transport_vars(spec, psi.values)
        assert abs(phi.max() + 1.0) < 1e-12


class TestDrivers:
    def test_entropic_initialization_feasible_for_union_lens(self):
        spec = ProblemSpec.from_name("ps-lens-union")
        source = source_for(spec, level=3)
        targets = targets_for(spec, (4, 4))
        psi0 = entropic_initial_weights(spec, source, targets)
        g = evaluate_G(spec, psi0, source, targets, want_jac=False).G
        assert g.min() > 0

    def test_solve_far_field_all_variants_small(self):
        from conftest import ALL_VARIANTS

        for name in ALL_VARIANTS:
            spec = ProblemSpec.from_name(name)
            source = source_for(spec, resolution=10, level=3)
            targets = targets_for(spec, (4, 4))
            psi, rep = solve_far_field(spec, source, targets)
            assert rep.converged, name
            assert rep.residuals[-1] <= 1e-8

    def test_hemisphere_violation_exits_early(self, rect_source):
        from causticdesign.errors import HemisphereViolation

        spec = ProblemSpec.from_name("cs-mirror-convex")
        up = grid_target((2, 2), SCREEN_DOWN)
        up.points = -up.points  # directions now point upward
        with pytest.raises(HemisphereViolation):
            solve_far_field(spec, rect_source, up)
