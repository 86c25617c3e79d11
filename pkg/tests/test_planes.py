import math

import numpy as np
import pytest

from panoreduce.errors import DegenerateSampleError, NoPlaneError
from panoreduce.geometry import unproject
from panoreduce.planes import (HORIZONTAL, OBLIQUE, VERTICAL, Plane, RansacParams, XorShift64Star,
                               classify_plane, extract_top_planes, plane_from_points,
                               point_plane_distance, ransac_fit)
from reference import exhaustive_best_count


def test_rng_reproducible_and_seed_sensitive():
    a, b, c = XorShift64Star(7), XorShift64Star(7), XorShift64Star(8)
    seq_a = [a.next_u64() for _ in range(5)]
    assert seq_a == [b.next_u64() for _ in range(5)]
    assert seq_a != [c.next_u64() for _ in range(5)]
    assert all(0 <= x < 2**64 for x in seq_a)


def test_rng_below_is_roughly_uniform():
    rng = XorShift64Star(1)
    counts = np.bincount([rng.below(6) for _ in range(60000)], minlength=6)
    assert counts.min() > 9500 and counts.max() < 10500


def test_rng_triples_distinct():
    rng = XorShift64Star(2)
    for _ in range(2000):
        t = rng.triple(4)
        assert len(set(t)) == 3 and all(0 <= i < 4 for i in t)


def test_plane_from_points_canonical():
    p = plane_from_points((0, 0, -2), (1, 0, -2), (0, 1, -2))
    np.testing.assert_allclose(p.normal, [0, 0, 1])
    assert p.offset == pytest.approx(2.0)
    # reversed winding gives the same canonical plane
    q = plane_from_points((0, 1, -2), (1, 0, -2), (0, 0, -2))
    np.testing.assert_allclose(q.normal, p.normal)
    assert point_plane_distance(p, (3, 4, 1)) == pytest.approx(3.0)


def test_plane_from_points_degenerate():
    with pytest.raises(DegenerateSampleError):
        plane_from_points((0, 0, 0), (1, 1, 1), (2, 2, 2))
    with pytest.raises(DegenerateSampleError):
        plane_from_points((1, 2, 3), (1, 2, 3), (0, 0, 1))


@pytest.mark.parametrize("normal, expected", [
    ((0, 0, 1), HORIZONTAL),
    ((math.sin(math.radians(20)), 0, math.cos(math.radians(20))), HORIZONTAL),
    ((math.sin(math.radians(45)), 0, math.cos(math.radians(45))), OBLIQUE),
    ((math.sin(math.radians(70)), 0, math.cos(math.radians(70))), VERTICAL),
    ((0, 1, 0), VERTICAL),
])
def test_classify(normal, expected):
    assert classify_plane(Plane(np.array(normal, float), 0.0), RansacParams()) == expected


def test_exhaustive_mode_matches_reference():
    rng = np.random.default_rng(11)
    params = RansacParams(max_iterations=math.comb(12, 3), min_inliers=3)
    for _ in range(20):
        pts = rng.uniform(-3, 3, size=(12, 3))
        assert ransac_fit(pts, params).inlier_count == exhaustive_best_count(pts, 0.5)


def test_sampled_mode_never_beats_reference():
    rng = np.random.default_rng(12)
    params = RansacParams(max_iterations=20, min_inliers=3)
    for seed in range(20):
        pts = rng.uniform(-3, 3, size=(14, 3))
        params.seed = seed
        assert ransac_fit(pts, params).inlier_count <= exhaustive_best_count(pts, 0.5)


def test_all_collinear_raises():
    pts = np.outer(np.arange(10.0), [1.0, 2.0, 3.0])
    with pytest.raises(NoPlaneError):
        ransac_fit(pts, RansacParams(min_inliers=3))
    with pytest.raises(NoPlaneError):
        ransac_fit(pts, RansacParams(min_inliers=3, max_iterations=1000))
    with pytest.raises(NoPlaneError):
        ransac_fit(pts[:2], RansacParams(min_inliers=3))


def _noisy_ground(seed=0, n=400):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-20, 20, size=(n, 2))
    z = -2.5 + rng.normal(0, 0.03, size=n)
    outliers = rng.uniform(-20, 20, size=(n // 10, 3))
    return np.vstack([np.column_stack([xy, z]), outliers])


def test_recovers_plane_among_outliers():
    plane = ransac_fit(_noisy_ground(), RansacParams())
    assert plane.tilt_deg() < 2.0
    # with a 0.5 m band a slightly shifted plane may buy a few extra outliers
    assert plane.offset == pytest.approx(2.5, abs=0.25)
    assert plane.inlier_count >= 400
    assert plane.orientation == HORIZONTAL


def test_deterministic_for_seed():
    pts = _noisy_ground(1)
    a = ransac_fit(pts, RansacParams(seed=5))
    b = ransac_fit(pts, RansacParams(seed=5))
    np.testing.assert_array_equal(a.inliers, b.inliers)
    np.testing.assert_array_equal(a.normal, b.normal)


def test_translation_equivariance():
    pts = _noisy_ground(2)
    shift = np.array([3.0, -1.0, 0.7])
    a = ransac_fit(pts, RansacParams(seed=3))
    b = ransac_fit(pts + shift, RansacParams(seed=3))
    np.testing.assert_array_equal(a.inliers, b.inliers)
    np.testing.assert_allclose(b.normal, a.normal, atol=1e-9)
    assert b.offset == pytest.approx(a.offset - a.normal @ shift, abs=1e-9)


def test_refine_tightens_fit():
    pts = _noisy_ground(3)
    coarse = ransac_fit(pts, RansacParams(seed=0))
    fine = ransac_fit(pts, RansacParams(seed=0, refine=True))
    assert fine.inlier_count >= coarse.inlier_count - 5
    assert abs(fine.offset - 2.5) <= abs(coarse.offset - 2.5) + 0.02
    assert fine.offset == pytest.approx(2.5, abs=0.1)


def test_extract_top_planes_disjoint_and_ordered(fixture_scene):
    scene = fixture_scene("street_canyon")
    cloud = unproject(scene.panorama, 4)
    planes = extract_top_planes(cloud, RansacParams())
    assert 1 <= len(planes) <= 10
    seen = np.zeros(len(cloud), dtype=bool)
    for p in planes:
        assert not seen[p.inliers].any()
        seen[p.inliers] = True
    assert planes[0].orientation == HORIZONTAL
    assert planes[0].offset == pytest.approx(2.5, abs=0.05)
    walls = sorted(p.offset for p in planes if p.orientation == VERTICAL and p.inlier_count > 200)
    assert walls[:2] == pytest.approx([-12.0, -12.0], abs=0.1)


def test_extract_stops_on_exhaustion():
    pts = _noisy_ground(4, n=100)
    planes = extract_top_planes(pts, RansacParams(top_k=10, min_inliers=60))
    assert len(planes) == 1


def test_params_validation():
    with pytest.raises(ValueError):
        RansacParams(min_inliers=2)
    with pytest.raises(ValueError):
        RansacParams(distance_threshold_m=0)
    with pytest.raises(ValueError):
        RansacParams(seed=-1)
