import math

import numpy as np
import pytest

from panoreduce.errors import SchemaError
from panoreduce.geometry import pixel_angles, unproject
from panoreduce.records import ObjectSpec, SceneSpec, WallSpec, parse_scene, read_scene, write_scene
from panoreduce.scene import (GROUND, OBJECT_BASE, SKY, WALL_BASE, ground_plane, render,
                              scene_catalog)


def test_flat_ground_depth_analytic(fixture_scene):
    scene = fixture_scene("flat_empty")
    h, w = 512, 1024
    _, phi = pixel_angles(0, np.arange(h), w, h)
    expected = np.where(phi < 0, 2.5 / np.sin(-np.where(phi < 0, phi, -1)), np.inf)
    np.testing.assert_allclose(scene.panorama.depth[:, 0], expected.astype(np.float32), rtol=1e-6)
    assert (scene.labels[:256] == SKY).all() and (scene.labels[256:] == GROUND).all()


def test_known_ranges():
    # ground range along elevation phi is h / sin(-phi)
    spec = SceneSpec(camera_height=2.5, render_width=8, render_height=4)
    d = render(spec).panorama.depth
    # row 3 of H=4 is at phi = -3*pi/8
    assert d[3, 0] == pytest.approx(2.5 / math.sin(3 * math.pi / 8), rel=1e-6)
    spec = SceneSpec(camera_height=2.5, render_width=16, render_height=8)
    d = render(spec).panorama.depth
    assert d[7, 0] == pytest.approx(2.5 / math.sin(7 * math.pi / 16), rel=1e-6)


def test_points_lie_on_labelled_surfaces(fixture_scene):
    scene = fixture_scene("street_canyon")
    cloud = unproject(scene.panorama)
    labels = scene.labels[cloud.src_uv[:, 1], cloud.src_uv[:, 0]]
    ground = cloud.xyz[labels == GROUND]
    np.testing.assert_allclose(ground[:, 2], -2.5, atol=1e-3 * np.abs(ground).max())
    for i, wall in enumerate(scene.spec.walls):
        pts = cloud.xyz[labels == WALL_BASE + i]
        assert len(pts) > 1000
        rel = np.abs(pts[:, 1] - wall.position) / np.linalg.norm(pts, axis=1)
        assert rel.max() < 1e-5


def test_catalog_contents():
    cat = scene_catalog()
    assert set(cat) == {"flat_empty", "street_canyon", "sloped_street", "rooftop_person"}
    assert len(cat["street_canyon"].objects) == 6 and len(cat["street_canyon"].walls) == 2
    flagged = [o for o in cat["rooftop_person"].objects if o.violates_height_assumption]
    assert len(flagged) == 1
    for spec in cat.values():
        spec.validate()


def test_all_objects_visible_and_boxes_tight(fixture_scene):
    scene = fixture_scene("street_canyon")
    assert len(scene.conforming_objects()) == 6
    for obj in scene.gt_objects:
        rows, cols = np.nonzero(scene.labels == OBJECT_BASE + obj.index)
        u0, v0, u1, v1 = obj.box
        assert v0 == rows.min() and v1 == rows.max() + 1
        assert np.all(((cols - u0) % 1024) < u1 - u0)


def test_sloped_ground_plane(fixture_scene):
    scene = fixture_scene("sloped_street")
    n, d = ground_plane(scene.spec)
    assert math.degrees(math.acos(n[2])) == pytest.approx(8.0)
    cloud = unproject(scene.panorama, 4)
    labels = scene.labels[cloud.src_uv[:, 1], cloud.src_uv[:, 0]]
    dist = cloud.xyz[labels == GROUND] @ n + d
    assert np.abs(dist).max() < 1e-3 * np.abs(cloud.xyz).max()


def test_height_rule():
    ok = SceneSpec(2.5, objects=[ObjectSpec("face", (5, 0, 1.86), 0.22, 0.28)])
    ok.validate()
    bad = SceneSpec(2.5, objects=[ObjectSpec("face", (5, 0, 1.9), 0.22, 0.28)])
    with pytest.raises(SchemaError):
        bad.validate()
    bad.objects[0].violates_height_assumption = True
    bad.validate()
    # on a slope the limit is measured from the local ground
    sloped = SceneSpec(2.5, ground_slope_deg=10,
                       objects=[ObjectSpec("face", (10, 0, 10 * math.tan(math.radians(10)) + 1.8),
                                           0.22, 0.28)])
    sloped.validate()


def test_noise_is_seeded_and_scaled():
    spec = scene_catalog(256, 128)["flat_empty"]
    clean = render(spec).panorama.depth
    a = render(spec, noise_sigma=0.05, noise_seed=1).panorama.depth
    b = render(spec, noise_sigma=0.05, noise_seed=1).panorama.depth
    c = render(spec, noise_sigma=0.05, noise_seed=2).panorama.depth
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    finite = np.isfinite(clean)
    assert np.isinf(a[~finite]).all()
    assert (a[finite] - clean[finite]).std() == pytest.approx(0.05, rel=0.05)


def test_scene_json_roundtrip(tmp_path):
    spec = scene_catalog()["street_canyon"]
    write_scene(spec, tmp_path / "s.json")
    back = read_scene(tmp_path / "s.json")
    assert back.to_json() == spec.to_json()
    doc = spec.to_json()
    doc["ground_z"] = 1.0
    with pytest.raises(SchemaError):
        parse_scene(doc)
    doc = spec.to_json()
    doc["walls"][0]["axis"] = "z"
    with pytest.raises(SchemaError):
        parse_scene(doc)


def test_wall_scene_render_deterministic():
    spec = SceneSpec(2.0, walls=[WallSpec("x", 5.0, (-3, 3), 4.0)], render_width=128, render_height=64)
    a, b = render(spec), render(spec)
    np.testing.assert_array_equal(a.panorama.rgb, b.panorama.rgb)
    np.testing.assert_array_equal(a.panorama.depth, b.panorama.depth)
    assert (a.labels == WALL_BASE).sum() > 0
