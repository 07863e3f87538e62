import math

import numpy as np
import pytest

from privhist.datagen import UniformBall, UniformCube, sample, single
from privhist.errors import InputError
from privhist.geometry import Ball, Box, VoronoiClip, intersection_volume_ratio, uniform_in_region
from privhist.rng import substream
from privhist.roundness import (
    audit_voronoi_splits,
    boundary_distances,
    certify_children,
    certify_roundness,
    check_privacy_condition,
    cover_check,
    well_spread_check,
)
from privhist.sanitizer import build_recursive_cube, build_voronoi


class TestCertifyRoundness:
    def test_square_k_is_sqrt2(self):
        box = Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
        cert = certify_roundness(box, samples=512, seed=0)
        assert cert.k == pytest.approx(math.sqrt(2.0), rel=0.02)
        assert np.allclose(cert.witness, [0.0, 0.0])

    def test_ball_k_near_one(self):
        cert = certify_roundness(Ball(np.zeros(3), 1.0), samples=128, seed=1)
        assert 1.0 <= cert.k <= 1.05

    def test_rectangle_k_is_sqrt5(self):
        # sides (1, 2): circumradius sqrt(1.25), inradius 0.5
        box = Box(np.array([0.0, 0.0]), np.array([1.0, 2.0]))
        cert = certify_roundness(box, samples=512, seed=2)
        assert cert.k == pytest.approx(math.sqrt(5.0), rel=0.02)

    def test_certificate_balls_sandwich_voronoi_cell(self):
        parent = Ball(np.zeros(2), 1.0)
        centers = uniform_in_region(parent, 25, substream(3, "c"))
        cell = VoronoiClip(centers, 7, parent)
        cert = certify_roundness(cell, samples=128, seed=3)
        pts = uniform_in_region(cell, 3_000, substream(4, "p"))
        # outer ball covers the cell
        assert (np.linalg.norm(pts - cert.witness, axis=1) <= cert.radius).all()
        # inner ball lies inside the cell
        inner = uniform_in_region(Ball(cert.witness, cert.inner_radius), 3_000,
                                  substream(5, "q"))
        assert cell.contains_many(inner).all()

    def test_boundary_distances_match_membership(self):
        box = Box(np.array([-1.0, -0.5]), np.array([1.0, 0.5]))
        dirs = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        t = boundary_distances(box, box.center, dirs)
        assert t == pytest.approx([1.0, 0.5, 1.0])


class TestWellSpread:
    def test_spread_passes(self):
        assert well_spread_check(np.array([[0.0], [0.5], [1.0]]), 0.4)

    def test_spread_fails(self):
        assert not well_spread_check(np.array([[0.0], [0.5], [1.0]]), 0.6)

    def test_boundary_is_inclusive(self):
        assert well_spread_check(np.array([[0.0], [0.5]]), 0.5)


class TestCoverCheck:
    def test_single_center_covers_at_full_radius(self):
        covered, worst = cover_check(np.zeros((1, 2)), Ball(np.zeros(2), 1.0),
                                     1.0, probes=5_000, seed=0)
        assert covered and worst <= 1.0

    def test_single_center_fails_at_half_radius(self):
        covered, worst = cover_check(np.zeros((1, 2)), Ball(np.zeros(2), 1.0),
                                     0.5, probes=10_000, seed=1)
        assert not covered and worst > 0.5

    def test_grid_covering_radius(self):
        g = 0.25
        axis = np.arange(-1 + g / 2, 1, g)
        centers = np.array([[a, b] for a in axis for b in axis])
        box = Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0]),
                  closed_high=np.array([True, True]))
        covered, worst = cover_check(centers, box, g * math.sqrt(2) / 2 * 1.001,
                                     probes=20_000, seed=2)
        assert covered


class TestPrivacyCondition:
    def test_single_ball_nested_identity(self):
        # interior q, both balls nested: the measured ratio is c^-d
        ratio, stderr = intersection_volume_ratio(
            np.zeros(4), 0.01, 8.0, Ball(np.zeros(4), 1.0), samples=600_000, seed=5
        )
        assert abs(ratio - 8.0**-4) <= 3 * stderr

    def test_probe_classification_is_exhaustive(self):
        data, _ = sample(single(UniformBall(np.zeros(2), 1.0)), 60, seed=6)
        hist = build_voronoi(data, Ball(np.zeros(2), 1.0), t=20, max_depth=1,
                             method="greedy", probe_samples=5_000, seed=7)
        report = check_privacy_condition(hist.root, c=6.0, q_probes=4,
                                         r_grid_size=5, volume_samples=3_000,
                                         seed=8)
        total = report.containment_count + report.ratio_count + report.degenerate_count
        assert total == report.cells_checked * report.probes_per_cell
        assert 0.0 <= report.epsilon_observed <= 1.0

    def test_epsilon_decreases_with_dimension(self):
        # matched cube histograms at d=4 and d=8 with c tied to the leaf
        # roundness: the worst observed ratio must fall as d grows
        eps = {}
        for d in (4, 8):
            data, _ = sample(single(UniformCube(np.zeros(d), 1.0)), 300, seed=9)
            hist = build_recursive_cube(data, t=3, max_depth=4)
            leaf = hist.root.leaves()[0]
            k = certify_roundness(leaf.region, samples=256, seed=d).k
            report = check_privacy_condition(hist.root, c=4.0 * k * k,
                                             q_probes=4, r_grid_size=6,
                                             volume_samples=6_000, seed=10,
                                             max_cells=12)
            eps[d] = report.epsilon_observed
        assert eps[8] < eps[4]

    def test_requires_c_above_one(self):
        data, _ = sample(single(UniformCube(np.zeros(2), 1.0)), 40, seed=11)
        hist = build_recursive_cube(data, t=2, max_depth=2)
        with pytest.raises(InputError):
            check_privacy_condition(hist.root, c=1.0)

    def test_single_node_tree_is_its_own_parent(self):
        data, _ = sample(single(UniformBall(np.zeros(3), 1.0)), 3, seed=12)
        hist = build_voronoi(data, Ball(np.zeros(3), 1.0), t=5, max_depth=2,
                             method="greedy", probe_samples=2_000, seed=13)
        assert hist.root.is_leaf()
        report = check_privacy_condition(hist.root, c=8.0, q_probes=3,
                                         r_grid_size=4, volume_samples=2_000,
                                         seed=14)
        assert report.cells_checked == 1
        total = report.containment_count + report.ratio_count + report.degenerate_count
        assert total == report.probes_per_cell


class TestSplitAudits:
    def test_greedy_split_satisfies_cover_spread_consequence(self):
        data, _ = sample(single(UniformBall(np.zeros(2), 1.0)), 150, seed=12)
        hist = build_voronoi(data, Ball(np.zeros(2), 1.0), t=8, max_depth=2,
                             method="greedy", probe_samples=15_000, seed=13)
        audits = audit_voronoi_splits(hist.root, probes=15_000, samples=128, seed=14)
        assert audits
        for audit in audits:
            assert audit.children_within_bound(1.1)

    def test_greedy_roundness_recurrence(self):
        # level-l cells certify k_l <= 4^l * k_root * 1.1
        data, _ = sample(single(UniformBall(np.zeros(2), 1.0)), 250, seed=15)
        hist = build_voronoi(data, Ball(np.zeros(2), 1.0), t=6, max_depth=2,
                             method="greedy", probe_samples=15_000, seed=16)
        k_root = certify_roundness(hist.root.region, samples=128, seed=17).k
        audits = audit_voronoi_splits(hist.root, probes=10_000, samples=96, seed=18)
        seen_levels = set()
        for audit in audits:
            child_level = audit.level + 1
            seen_levels.add(child_level)
            assert max(audit.child_ks) <= 4.0**child_level * k_root * 1.1
        assert 1 in seen_levels

    def test_batched_certificates_match_single(self):
        parent = Ball(np.zeros(2), 1.0)
        centers = uniform_in_region(parent, 20, substream(19, "c"))
        batch = certify_children(parent, centers, samples=64, seed=20)
        solo = certify_roundness(VoronoiClip(centers, 4, parent), samples=64, seed=20)
        assert batch[4].k == pytest.approx(solo.k)
        assert batch[4].radius == pytest.approx(solo.radius)
