"""JSON documents: scene specifications, scene truth and detection lists.

Validation is strict. Unknown keys are rejected and every error names the
offending field path (``objects[2].center``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import SchemaError

CLASSES = ("face", "plate")
HEIGHT_LIMIT_M = 2.0


# -- small validation helpers ------------------------------------------------

def check_keys(obj, path: str, required=(), optional=()) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(path or "$", f"expected an object, got {type(obj).__name__}")
    allowed = set(required) | set(optional)
    for key in obj:
        if key not in allowed:
            raise SchemaError(join(path, key), "unknown field")
    for key in required:
        if key not in obj:
            raise SchemaError(join(path, key), "missing required field")


def join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else key


def get_number(obj, key, path, default=None, *, minimum=None, exclusive_min=None,
               maximum=None, integer=False):
    where = join(path, key)
    if key not in obj:
        if default is None:
            raise SchemaError(where, "missing required field")
        return default
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(where, f"expected a number, got {value!r}")
    if integer and (isinstance(value, float) and not value.is_integer()):
        raise SchemaError(where, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise SchemaError(where, "must be finite")
    if minimum is not None and value < minimum:
        raise SchemaError(where, f"must be >= {minimum}, got {value}")
    if exclusive_min is not None and value <= exclusive_min:
        raise SchemaError(where, f"must be > {exclusive_min}, got {value}")
    if maximum is not None and value > maximum:
        raise SchemaError(where, f"must be <= {maximum}, got {value}")
    return int(value) if integer else value


def get_bool(obj, key, path, default):
    if key not in obj:
        return default
    if not isinstance(obj[key], bool):
        raise SchemaError(join(path, key), f"expected true/false, got {obj[key]!r}")
    return obj[key]


def get_str(obj, key, path, default=None, choices=None):
    where = join(path, key)
    if key not in obj:
        if default is None:
            raise SchemaError(where, "missing required field")
        return default
    value = obj[key]
    if not isinstance(value, str):
        raise SchemaError(where, f"expected a string, got {value!r}")
    if choices is not None and value not in choices:
        raise SchemaError(where, f"must be one of {list(choices)}, got {value!r}")
    return value


def get_vector(obj, key, path, length):
    where = join(path, key)
    if key not in obj:
        raise SchemaError(where, "missing required field")
    value = obj[key]
    if not isinstance(value, list) or len(value) != length:
        raise SchemaError(where, f"expected a list of {length} numbers")
    for i, c in enumerate(value):
        if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c):
            raise SchemaError(join(where, i), f"expected a finite number, got {c!r}")
    return value


def get_list(obj, key, path, default=None):
    where = join(path, key)
    if key not in obj:
        if default is None:
            raise SchemaError(where, "missing required field")
        return default
    if not isinstance(obj[key], list):
        raise SchemaError(where, "expected a list")
    return obj[key]


def load_json(path):
    with open(path, encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as exc:
            raise SchemaError("$", f"invalid JSON: {exc}") from None


def dump_json(doc, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, allow_nan=False)
        f.write("\n")


# -- detections ---------------------------------------------------------------

@dataclass(frozen=True)
class Detection:
    """One detection: class, ``(u_min, v_min, u_max, v_max)`` box and score."""

    cls: str
    box: tuple[float, float, float, float]
    score: float

    @property
    def width(self) -> float:
        return self.box[2] - self.box[0]

    @property
    def height(self) -> float:
        return self.box[3] - self.box[1]

    @property
    def area(self) -> float:
        return self.width * self.height

    def to_json(self) -> dict:
        return {"class": self.cls, "box": list(self.box), "score": self.score}


def parse_detection(obj, path="$", width=None, height=None) -> Detection:
    """Validate one detection object, optionally against frame bounds."""
    check_keys(obj, path, required=("class", "box", "score"))
    cls = get_str(obj, "class", path, choices=CLASSES)
    box = get_vector(obj, "box", path, 4)
    score = get_number(obj, "score", path, minimum=0.0, maximum=1.0)
    u0, v0, u1, v1 = box
    if not u0 < u1:
        raise SchemaError(join(path, "box"), f"u_min {u0} must be < u_max {u1}")
    if not v0 < v1:
        raise SchemaError(join(path, "box"), f"v_min {v0} must be < v_max {v1}")
    if width is not None and (u0 < 0 or u1 > width):
        raise SchemaError(join(path, "box"), f"u range [{u0}, {u1}] outside [0, {width}]")
    if height is not None and (v0 < 0 or v1 > height):
        raise SchemaError(join(path, "box"), f"v range [{v0}, {v1}] outside [0, {height}]")
    return Detection(cls=cls, box=tuple(box), score=score)


def write_detections(detections, path) -> None:
    dump_json([d.to_json() for d in detections], path)


def read_detections(path) -> list[Detection]:
    doc = load_json(path)
    if not isinstance(doc, list):
        raise SchemaError("$", "expected a JSON array of detections")
    return [parse_detection(item, f"[{i}]") for i, item in enumerate(doc)]


# -- scene specification ------------------------------------------------------

@dataclass
class WallSpec:
    """Vertical rectangle on the plane ``<axis> = position``.

    ``extent`` bounds the other horizontal coordinate; the wall rises from
    below the ground to ``height`` meters above ground level.
    """

    axis: str
    position: float
    extent: tuple[float, float]
    height: float


@dataclass
class ObjectSpec:
    """Camera-facing billboard. ``center`` is in world meters (ground at z = 0)."""

    cls: str
    center: tuple[float, float, float]
    width: float
    height: float
    violates_height_assumption: bool = False

    @property
    def top_z(self) -> float:
        return self.center[2] + self.height / 2


@dataclass
class SceneSpec:
    camera_height: float
    walls: list[WallSpec] = field(default_factory=list)
    objects: list[ObjectSpec] = field(default_factory=list)
    render_width: int = 1024
    render_height: int = 512
    ground_z: float = 0.0
    ground_slope_deg: float = 0.0
    name: str = "scene"

    def ground_height_at(self, x: float) -> float:
        """World z of the (possibly sloped) ground below forward coordinate ``x``."""
        return self.ground_z + x * math.tan(math.radians(self.ground_slope_deg))

    def validate(self) -> None:
        if not self.camera_height > 0:
            raise SchemaError("camera_height", "must be > 0")
        if self.render_width != 2 * self.render_height:
            raise SchemaError("render", "width must equal 2 * height")
        for i, obj in enumerate(self.objects):
            above = obj.top_z - self.ground_height_at(obj.center[0])
            if above > HEIGHT_LIMIT_M + 1e-9 and not obj.violates_height_assumption:
                raise SchemaError(
                    f"objects[{i}]",
                    f"top edge is {above:.3f} m above ground (limit {HEIGHT_LIMIT_M} m); "
                    "set violates_height_assumption to allow it")

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "camera_height": self.camera_height,
            "ground_z": self.ground_z,
            "ground_slope_deg": self.ground_slope_deg,
            "walls": [{"axis": w.axis, "position": w.position, "extent": list(w.extent),
                       "height": w.height} for w in self.walls],
            "objects": [{"class": o.cls, "center": list(o.center), "width": o.width,
                         "height": o.height,
                         "violates_height_assumption": o.violates_height_assumption}
                        for o in self.objects],
            "render": {"width": self.render_width, "height": self.render_height},
        }


def parse_scene(doc) -> SceneSpec:
    check_keys(doc, "", required=("camera_height",),
               optional=("name", "ground_z", "ground_slope_deg", "walls", "objects", "render"))
    camera_height = get_number(doc, "camera_height", "", exclusive_min=0.0)
    ground_z = get_number(doc, "ground_z", "", default=0.0)
    if ground_z != 0:
        raise SchemaError("ground_z", "the world frame fixes the ground at z = 0")
    slope = get_number(doc, "ground_slope_deg", "", default=0.0, minimum=-45.0, maximum=45.0)

    walls = []
    for i, w in enumerate(get_list(doc, "walls", "", default=[])):
        p = f"walls[{i}]"
        check_keys(w, p, required=("axis", "position", "extent", "height"))
        ext = get_vector(w, "extent", p, 2)
        if not ext[0] < ext[1]:
            raise SchemaError(join(p, "extent"), "extent[0] must be < extent[1]")
        walls.append(WallSpec(axis=get_str(w, "axis", p, choices=("x", "y")),
                              position=get_number(w, "position", p),
                              extent=(ext[0], ext[1]),
                              height=get_number(w, "height", p, exclusive_min=0.0)))

    objects = []
    for i, o in enumerate(get_list(doc, "objects", "", default=[])):
        p = f"objects[{i}]"
        check_keys(o, p, required=("class", "center", "width", "height"),
                   optional=("violates_height_assumption",))
        objects.append(ObjectSpec(
            cls=get_str(o, "class", p, choices=CLASSES),
            center=tuple(get_vector(o, "center", p, 3)),
            width=get_number(o, "width", p, exclusive_min=0.0),
            height=get_number(o, "height", p, exclusive_min=0.0),
            violates_height_assumption=get_bool(o, "violates_height_assumption", p, False)))

    render = doc.get("render", {"width": 1024, "height": 512})
    check_keys(render, "render", required=("width", "height"))
    spec = SceneSpec(
        camera_height=camera_height,
        walls=walls,
        objects=objects,
        render_width=get_number(render, "width", "render", minimum=2, integer=True),
        render_height=get_number(render, "height", "render", minimum=1, integer=True),
        ground_z=ground_z,
        ground_slope_deg=slope,
        name=get_str(doc, "name", "", default="scene"),
    )
    spec.validate()
    return spec


def read_scene(path) -> SceneSpec:
    return parse_scene(load_json(path))


def write_scene(spec: SceneSpec, path) -> None:
    dump_json(spec.to_json(), path)
