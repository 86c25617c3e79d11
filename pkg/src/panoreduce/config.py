"""Pipeline configuration: JSON schema, defaults and validation.

Relative paths inside a config file are resolved against the file's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .detection import BlurParams
from .errors import SchemaError
from .mask import REFERENCE_HEIGHT, MaskParams
from .planes import RansacParams
from .records import (check_keys, get_bool, get_list, get_number, get_str, join, load_json)
from .tiling import TilerParams

FIXTURES = ("flat_empty", "street_canyon", "sloped_street", "rooftop_person")


@dataclass
class InputConfig:
    rgb: str | None = None
    depth: str | None = None
    fixture: str | None = None
    scene: str | None = None
    width: int = 4096
    height: int = 2048
    noise_sigma: float = 0.0
    noise_seed: int = 0


@dataclass
class DetectorConfig:
    type: str = "oracle"
    truth: str | None = None
    command: list[str] = field(default_factory=list)
    max_parallelism: int = 1
    timeout_s: float = 30.0
    latency_s: float = 0.0


@dataclass
class OutputConfig:
    dir: str = "out"
    overlay: bool = True
    patches: bool = False
    blurred: bool = True
    mask: bool = True
    report: bool = True


@dataclass
class PipelineConfig:
    input: InputConfig
    downsample_factor: int = 10
    ransac: RansacParams = field(default_factory=RansacParams)
    mask: MaskParams = field(default_factory=MaskParams)
    tiler: TilerParams = field(default_factory=TilerParams)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    blur: BlurParams = field(default_factory=BlurParams)
    outputs: OutputConfig = field(default_factory=OutputConfig)


def _path(obj, key, path, base_dir):
    value = get_str(obj, key, path)
    return value if os.path.isabs(value) else os.path.normpath(os.path.join(base_dir, value))


def _input(doc, base_dir) -> InputConfig:
    p = "input"
    check_keys(doc, p, optional=("rgb", "depth", "fixture", "scene", "width", "height",
                                 "noise_sigma", "noise_seed"))
    sources = [k for k in ("fixture", "scene") if k in doc]
    if "rgb" in doc or "depth" in doc:
        sources.append("files")
    if len(sources) != 1:
        raise SchemaError(p, "exactly one input source is required: rgb+depth files, "
                             f"a fixture name or a scene file (got {sources or 'none'})")
    cfg = InputConfig()
    if sources == ["files"]:
        if "rgb" not in doc or "depth" not in doc:
            raise SchemaError(p, "file input needs both 'rgb' and 'depth'")
        cfg.rgb = _path(doc, "rgb", p, base_dir)
        cfg.depth = _path(doc, "depth", p, base_dir)
        for key in ("width", "height", "noise_sigma", "noise_seed"):
            if key in doc:
                raise SchemaError(join(p, key), "only valid with a fixture or scene input")
        return cfg
    if "fixture" in doc:
        cfg.fixture = get_str(doc, "fixture", p, choices=FIXTURES)
    else:
        cfg.scene = _path(doc, "scene", p, base_dir)
    cfg.width = get_number(doc, "width", p, default=4096, minimum=2, integer=True)
    cfg.height = get_number(doc, "height", p, default=2048, minimum=1, integer=True)
    if cfg.width != 2 * cfg.height:
        raise SchemaError(join(p, "width"), "width must equal 2 * height")
    cfg.noise_sigma = get_number(doc, "noise_sigma", p, default=0.0, minimum=0.0)
    cfg.noise_seed = get_number(doc, "noise_seed", p, default=0, minimum=0, integer=True)
    return cfg


def _ransac(doc) -> RansacParams:
    p = "ransac"
    check_keys(doc, p, optional=("distance_threshold_m", "max_iterations", "top_k", "min_inliers",
                                 "horizontal_angle_deg", "seed", "refine"))
    return RansacParams(
        distance_threshold_m=get_number(doc, "distance_threshold_m", p, default=0.5,
                                        exclusive_min=0.0),
        max_iterations=get_number(doc, "max_iterations", p, default=500, minimum=1, integer=True),
        top_k=get_number(doc, "top_k", p, default=10, minimum=1, integer=True),
        min_inliers=get_number(doc, "min_inliers", p, default=50, minimum=3, integer=True),
        horizontal_angle_deg=get_number(doc, "horizontal_angle_deg", p, default=20.0,
                                        exclusive_min=0.0, maximum=89.999),
        seed=get_number(doc, "seed", p, default=0, minimum=0, maximum=2**64 - 1, integer=True),
        refine=get_bool(doc, "refine", p, False),
    )


def _mask(doc, base_dir) -> MaskParams:
    p = "mask"
    check_keys(doc, p, optional=("buffer_px", "reference_height", "auto_scale_buffer",
                                 "band_cap_frac", "max_gap_cols", "ego"))
    ego = doc.get("ego", {"elevation_cutoff_deg": -62.0})
    check_keys(ego, "mask.ego", optional=("elevation_cutoff_deg", "mask_path"))
    if len(ego) != 1:
        raise SchemaError("mask.ego", "give exactly one of elevation_cutoff_deg or mask_path")
    params = MaskParams(
        buffer_px=get_number(doc, "buffer_px", p, default=350, minimum=0, integer=True),
        reference_height=get_number(doc, "reference_height", p, default=REFERENCE_HEIGHT,
                                    minimum=1, integer=True),
        auto_scale_buffer=get_bool(doc, "auto_scale_buffer", p, True),
        band_cap_frac=get_number(doc, "band_cap_frac", p, default=1.0 / 3.0,
                                 exclusive_min=0.0, maximum=1.0),
        max_gap_cols=get_number(doc, "max_gap_cols", p, default=50, minimum=0, integer=True),
    )
    if "mask_path" in ego:
        params.ego_mask_path = _path(ego, "mask_path", "mask.ego", base_dir)
    else:
        cutoff = get_number(ego, "elevation_cutoff_deg", "mask.ego", minimum=-90.0)
        if cutoff >= 0:
            raise SchemaError("mask.ego.elevation_cutoff_deg", "must be < 0")
        params.ego_cutoff_deg = cutoff
    return params


def _tiler(doc) -> TilerParams:
    p = "tiler"
    check_keys(doc, p, optional=("patch_w", "patch_h", "overlap_px", "merge_iou"))
    patch_w = get_number(doc, "patch_w", p, default=1200, minimum=1, integer=True)
    patch_h = get_number(doc, "patch_h", p, default=600, minimum=1, integer=True)
    overlap = get_number(doc, "overlap_px", p, default=120, minimum=0, integer=True)
    if overlap >= min(patch_w, patch_h):
        raise SchemaError("tiler.overlap_px", "must be smaller than both patch dimensions")
    return TilerParams(patch_w=patch_w, patch_h=patch_h, overlap_px=overlap,
                       merge_iou=get_number(doc, "merge_iou", p, default=0.5,
                                            exclusive_min=0.0, maximum=1.0))


def _detector(doc, base_dir) -> DetectorConfig:
    p = "detector"
    check_keys(doc, p, required=("type",),
               optional=("truth", "command", "max_parallelism", "timeout_s", "latency_s"))
    kind = get_str(doc, "type", p, choices=("oracle", "external"))
    cfg = DetectorConfig(type=kind)
    cfg.max_parallelism = get_number(doc, "max_parallelism", p, default=1, minimum=1, integer=True)
    if kind == "oracle":
        for key in ("command", "timeout_s"):
            if key in doc:
                raise SchemaError(join(p, key), "not valid for the oracle detector")
        if "truth" in doc:
            cfg.truth = _path(doc, "truth", p, base_dir)
        cfg.latency_s = get_number(doc, "latency_s", p, default=0.0, minimum=0.0)
    else:
        for key in ("truth", "latency_s"):
            if key in doc:
                raise SchemaError(join(p, key), "not valid for the external detector")
        command = get_list(doc, "command", p)
        if not command or not all(isinstance(c, str) for c in command):
            raise SchemaError(join(p, "command"), "expected a non-empty list of strings")
        cfg.command = command
        cfg.timeout_s = get_number(doc, "timeout_s", p, default=30.0, exclusive_min=0.0)
    return cfg


def _blur(doc) -> BlurParams:
    p = "blur"
    check_keys(doc, p, optional=("sigma_frac", "pad_px", "score_threshold"))
    return BlurParams(
        sigma_frac=get_number(doc, "sigma_frac", p, default=0.35, exclusive_min=0.0),
        pad_px=get_number(doc, "pad_px", p, default=4, minimum=0, integer=True),
        score_threshold=get_number(doc, "score_threshold", p, default=0.3, minimum=0.0, maximum=1.0),
    )


def _outputs(doc, base_dir) -> OutputConfig:
    p = "outputs"
    check_keys(doc, p, optional=("dir", "overlay", "patches", "blurred", "mask", "report",
                                 "metrics"))
    if not get_bool(doc, "metrics", p, True):
        raise SchemaError(join(p, "metrics"), "metrics.json is always written and cannot be disabled")
    return OutputConfig(
        dir=_path(doc, "dir", p, base_dir) if "dir" in doc else os.path.join(base_dir, "out"),
        overlay=get_bool(doc, "overlay", p, True),
        patches=get_bool(doc, "patches", p, False),
        blurred=get_bool(doc, "blurred", p, True),
        mask=get_bool(doc, "mask", p, True),
        report=get_bool(doc, "report", p, True),
    )


def parse_config(doc, base_dir: str = ".") -> PipelineConfig:
    check_keys(doc, "", required=("input",),
               optional=("downsample_factor", "ransac", "mask", "tiler", "detector", "blur",
                         "outputs"))
    cfg = PipelineConfig(
        input=_input(doc["input"], base_dir),
        downsample_factor=get_number(doc, "downsample_factor", "", default=10, minimum=1,
                                     integer=True),
        ransac=_ransac(doc.get("ransac", {})),
        mask=_mask(doc.get("mask", {}), base_dir),
        tiler=_tiler(doc.get("tiler", {})),
        detector=_detector(doc.get("detector", {"type": "oracle"}), base_dir),
        blur=_blur(doc.get("blur", {})),
        outputs=_outputs(doc.get("outputs", {}), base_dir),
    )
    if cfg.detector.type == "oracle" and cfg.input.rgb is not None and cfg.detector.truth is None:
        raise SchemaError("detector.truth", "the oracle detector needs a truth file for file input")
    return cfg


def read_config(path) -> PipelineConfig:
    return parse_config(load_json(path), os.path.dirname(os.path.abspath(path)))
