"""Analytic ray-cast renderer for synthetic street scenes with exact ground truth.

The camera sits at the origin of its own frame (+x forward, +y left, +z up),
``camera_height`` meters above the world ground level z = 0. Surfaces are a
ground plane (optionally tilted about the y axis so it rises toward +x),
axis-aligned vertical walls and camera-facing billboards standing in for
faces and licence plates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .formats import DepthPanorama
from .geometry import circular_extent, pixel_angles, angles_to_dirs
from .records import ObjectSpec, SceneSpec, WallSpec, dump_json

SKY = -1
GROUND = 0
WALL_BASE = 1
OBJECT_BASE = 1000

SKY_RGB = (135, 190, 235)
GROUND_RGB = ((112, 112, 112), (92, 92, 92))
WALL_RGB = ((172, 112, 82), (150, 96, 70))
OBJECT_RGB = {"face": (236, 188, 160), "plate": (250, 236, 70)}

_ROWS_PER_CHUNK = 128


@dataclass
class GroundTruthObject:
    index: int
    cls: str
    box: tuple[int, int, int, int] | None  # pixel edges; u_max may exceed W across the seam
    center: tuple[float, float, float]
    violates_height_assumption: bool = False

    def to_json(self) -> dict:
        return {"index": self.index, "class": self.cls,
                "box": list(self.box) if self.box is not None else None,
                "center": list(self.center),
                "violates_height_assumption": self.violates_height_assumption}


@dataclass
class RenderedScene:
    spec: SceneSpec
    panorama: DepthPanorama
    labels: np.ndarray
    gt_planes: list[dict] = field(default_factory=list)
    gt_objects: list[GroundTruthObject] = field(default_factory=list)

    def conforming_objects(self) -> list[GroundTruthObject]:
        """Visible objects that respect the height rule."""
        return [o for o in self.gt_objects
                if o.box is not None and not o.violates_height_assumption]

    def truth_json(self) -> dict:
        return {
            "scene": self.spec.to_json(),
            "width": self.panorama.width,
            "height": self.panorama.height,
            "planes": self.gt_planes,
            "objects": [o.to_json() for o in self.gt_objects],
        }

    def write_truth(self, path) -> None:
        dump_json(self.truth_json(), path)


def ground_plane(spec: SceneSpec) -> tuple[np.ndarray, float]:
    """Camera-frame ground plane ``n . p + d = 0`` with canonical normal."""
    s = math.radians(spec.ground_slope_deg)
    h = spec.camera_height - spec.ground_z
    normal = np.array([-math.sin(s), 0.0, math.cos(s)])
    return normal, h * math.cos(s)


def wall_plane(wall: WallSpec) -> tuple[np.ndarray, float]:
    normal = np.array([1.0, 0.0, 0.0]) if wall.axis == "x" else np.array([0.0, 1.0, 0.0])
    return normal, -float(wall.position)


def _camera_center(spec: SceneSpec, obj: ObjectSpec) -> np.ndarray:
    return np.array([obj.center[0], obj.center[1], obj.center[2] - spec.camera_height])


def _checker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ((np.floor(a) + np.floor(b)).astype(np.int64) & 1).astype(bool)


def _render_rows(spec: SceneSpec, v0: int, v1: int, width: int, height: int):
    uu, vv = np.meshgrid(np.arange(width), np.arange(v0, v1))
    dirs = angles_to_dirs(*pixel_angles(uu, vv, width, height))
    shape = dirs.shape[:2]
    depth = np.full(shape, np.inf)
    label = np.full(shape, SKY, dtype=np.int32)
    rgb = np.empty(shape + (3,), dtype=np.uint8)
    rgb[...] = SKY_RGB

    with np.errstate(divide="ignore", invalid="ignore"):
        n_g, d_g = ground_plane(spec)
        denom = dirs @ n_g
        t = np.where(denom < 0, -d_g / denom, np.inf)
        hit = t < depth
        depth[hit] = t[hit]
        label[hit] = GROUND

        for i, wall in enumerate(spec.walls):
            axis = 0 if wall.axis == "x" else 1
            other = 1 - axis
            comp = dirs[..., axis]
            t = np.where(comp != 0, wall.position / comp, np.inf)
            t = np.where(t > 0, t, np.inf)
            along = t * dirs[..., other]
            z_world = t * dirs[..., 2] + spec.camera_height
            ok = (along >= wall.extent[0]) & (along <= wall.extent[1]) & (z_world <= wall.height)
            hit = ok & (t < depth)
            depth[hit] = t[hit]
            label[hit] = WALL_BASE + i

        for i, obj in enumerate(spec.objects):
            c = _camera_center(spec, obj)
            m = -np.array([c[0], c[1], 0.0])
            m /= np.linalg.norm(m)
            right = np.array([-m[1], m[0], 0.0])
            denom = dirs @ m
            t = np.where(denom != 0, (m @ c) / denom, np.inf)
            t = np.where(t > 0, t, np.inf)
            p = dirs * t[..., None]
            local = p - c
            ok = (np.abs(local @ right) <= obj.width / 2) & (np.abs(local[..., 2]) <= obj.height / 2)
            hit = ok & (t < depth)
            depth[hit] = t[hit]
            label[hit] = OBJECT_BASE + i

    pts = dirs * np.where(np.isfinite(depth), depth, 0.0)[..., None]
    world_z = pts[..., 2] + spec.camera_height
    sel = label == GROUND
    rgb[sel] = np.where(_checker(pts[..., 0], pts[..., 1])[sel][:, None],
                        GROUND_RGB[0], GROUND_RGB[1])
    for i, wall in enumerate(spec.walls):
        sel = label == WALL_BASE + i
        along = pts[..., 0 if wall.axis == "y" else 1]
        rgb[sel] = np.where(_checker(along, world_z)[sel][:, None], WALL_RGB[0], WALL_RGB[1])
    for i, obj in enumerate(spec.objects):
        rgb[label == OBJECT_BASE + i] = OBJECT_RGB[obj.cls]
    return rgb, depth.astype(np.float32), label


def render(spec: SceneSpec, noise_sigma: float = 0.0, noise_seed: int = 0) -> RenderedScene:
    """Ray-cast ``spec`` into an equirectangular RGB-D panorama with ground truth.

    ``noise_sigma`` adds zero-mean Gaussian noise (meters) to every finite
    range; noise never changes which surface a pixel belongs to.
    """
    spec.validate()
    width, height = spec.render_width, spec.render_height
    rgb = np.empty((height, width, 3), dtype=np.uint8)
    depth = np.empty((height, width), dtype=np.float32)
    labels = np.empty((height, width), dtype=np.int32)
    for v0 in range(0, height, _ROWS_PER_CHUNK):
        v1 = min(height, v0 + _ROWS_PER_CHUNK)
        rgb[v0:v1], depth[v0:v1], labels[v0:v1] = _render_rows(spec, v0, v1, width, height)

    if noise_sigma > 0:
        rng = np.random.default_rng(noise_seed)
        finite = np.isfinite(depth)
        noisy = depth[finite] + rng.normal(0.0, noise_sigma, size=int(finite.sum()))
        depth[finite] = np.maximum(noisy, 1e-3).astype(np.float32)

    n_g, d_g = ground_plane(spec)
    gt_planes = [{"kind": "ground", "normal": n_g.tolist(), "offset": d_g}]
    for i, wall in enumerate(spec.walls):
        n, d = wall_plane(wall)
        gt_planes.append({"kind": f"wall{i}", "normal": n.tolist(), "offset": d})

    gt_objects = []
    for i, obj in enumerate(spec.objects):
        rows, cols = np.nonzero(labels == OBJECT_BASE + i)
        box = None
        if len(rows):
            occupied = np.zeros(width, dtype=bool)
            occupied[cols] = True
            start, length = circular_extent(occupied)
            box = (start, int(rows.min()), start + length, int(rows.max()) + 1)
        gt_objects.append(GroundTruthObject(index=i, cls=obj.cls, box=box, center=tuple(obj.center),
                                            violates_height_assumption=obj.violates_height_assumption))

    pano = DepthPanorama(rgb, depth)
    return RenderedScene(spec=spec, panorama=pano, labels=labels,
                         gt_planes=gt_planes, gt_objects=gt_objects)


# -- fixtures -----------------------------------------------------------------

def _face(x, y, z):
    return ObjectSpec("face", (x, y, z), 0.22, 0.28)


def _plate(x, y, z):
    return ObjectSpec("plate", (x, y, z), 0.52, 0.12)


def scene_catalog(width: int = 1024, height: int = 512) -> dict[str, SceneSpec]:
    """Standard fixtures rendered at ``width x height``.

    ``flat_empty``: ground only. ``street_canyon``: ground, two facades and
    six objects. ``sloped_street``: ground rising 8 degrees toward +x with
    objects. ``rooftop_person``: a building with a face on its roof, the one
    object flagged as breaking the two-meter rule.
    """
    common = {"camera_height": 2.5, "render_width": width, "render_height": height}
    slope = 8.0
    gz = math.tan(math.radians(slope))
    return {
        "flat_empty": SceneSpec(name="flat_empty", **common),
        "street_canyon": SceneSpec(
            name="street_canyon",
            walls=[WallSpec("y", 12.0, (-20.0, 20.0), 10.0),
                   WallSpec("y", -12.0, (-20.0, 20.0), 10.0)],
            objects=[_face(6.0, 2.0, 1.65), _face(-7.0, -3.0, 1.6), _plate(9.0, -4.0, 0.5),
                     _plate(-10.0, 3.0, 0.45), _face(12.0, 4.0, 1.7), _face(-4.0, 1.5, 1.55)],
            **common),
        "sloped_street": SceneSpec(
            name="sloped_street",
            ground_slope_deg=slope,
            objects=[_face(8.0, 2.0, 8.0 * gz + 1.6), _face(-6.0, -2.5, -6.0 * gz + 1.7),
                     _plate(10.0, -3.0, 10.0 * gz + 0.5), _plate(-9.0, 3.0, -9.0 * gz + 0.45),
                     _face(5.0, -4.0, 5.0 * gz + 1.75)],
            **common),
        "rooftop_person": SceneSpec(
            name="rooftop_person",
            walls=[WallSpec("x", 12.0, (-10.0, 10.0), 8.0)],
            objects=[ObjectSpec("face", (12.5, 0.0, 8.6), 0.22, 0.28,
                                violates_height_assumption=True),
                     _face(6.0, -2.0, 1.6)],
            **common),
    }


def render_fixture(name: str, width: int = 1024, height: int = 512,
                   noise_sigma: float = 0.0, noise_seed: int = 0) -> RenderedScene:
    catalog = scene_catalog(width, height)
    if name not in catalog:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(catalog)}")
    return render(catalog[name], noise_sigma=noise_sigma, noise_seed=noise_seed)
