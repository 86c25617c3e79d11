"""End-to-end orchestration: RGB-D panorama in, blurred panorama and metrics out."""

from __future__ import annotations

import logging
import os
import shutil
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np

from . import formats
from .config import PipelineConfig
from .detection import ExternalDetector, OracleDetector, blur_regions, check_local_detections
from .errors import ContractError, DetectorError, StageError
from .geometry import unproject
from .mask import ProcessingMask, build_band, coverage_fraction, overlay, reproject_planes
from .planes import HORIZONTAL, Plane, extract_top_planes
from .records import Detection, dump_json, load_json, write_detections
from .scene import RenderedScene, render, render_fixture
from .records import read_scene
from .tiling import Patch, merge_detections, tile, to_global

log = logging.getLogger(__name__)

STAGES = ("load", "unproject", "ransac", "mask", "tile", "detect", "merge", "blur")
TMPDIR_ENV = "PANO_REDUCE_TMPDIR"


@dataclass
class RunMetrics:
    coverage_fraction: float
    patch_count: int
    detections_pre_merge: int
    detections_post_merge: int
    blurred_count: int
    stage_seconds: dict[str, float]
    planes: list[dict]
    width: int
    height: int
    buffer_px: int
    seed: int
    detector: str
    max_parallelism: int

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["detection_count"] = {"pre_merge": doc.pop("detections_pre_merge"),
                                  "post_merge": doc.pop("detections_post_merge")}
        return doc


@dataclass
class RunResult:
    metrics: RunMetrics
    mask: ProcessingMask
    planes: list[Plane]
    patches: list[Patch]
    detections: list[Detection]
    blurred: np.ndarray
    scene: RenderedScene | None = None
    outputs: dict[str, str] = field(default_factory=dict)


class _Timer:
    def __init__(self):
        self.seconds = {name: 0.0 for name in STAGES}

    @contextmanager
    def stage(self, name):
        start = time.perf_counter()
        try:
            yield
        except (StageError, DetectorError):
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        finally:
            self.seconds[name] += time.perf_counter() - start


def _load(cfg: PipelineConfig):
    src = cfg.input
    if src.rgb is not None:
        return formats.read_panorama(src.rgb, src.depth), None
    if src.fixture is not None:
        scene = render_fixture(src.fixture, src.width, src.height,
                               noise_sigma=src.noise_sigma, noise_seed=src.noise_seed)
    else:
        spec = read_scene(src.scene)
        spec.render_width, spec.render_height = src.width, src.height
        scene = render(spec, noise_sigma=src.noise_sigma, noise_seed=src.noise_seed)
    return scene.panorama, scene


def make_detector(cfg: PipelineConfig, scene: RenderedScene | None, patch_dir: str):
    det = cfg.detector
    if det.type == "external":
        return ExternalDetector(det.command, patch_dir, max_parallelism=det.max_parallelism,
                                timeout_s=det.timeout_s)
    if det.truth is not None:
        return OracleDetector.from_truth(load_json(det.truth), max_parallelism=det.max_parallelism,
                                         latency_s=det.latency_s)
    if scene is None:
        raise ContractError("oracle detector needs scene truth")
    return OracleDetector.from_scene(scene, max_parallelism=det.max_parallelism,
                                     latency_s=det.latency_s)


def detect_patches(detector, patches: list[Patch]) -> list[list[Detection]]:
    """Run the detector over every patch, at most ``max_parallelism`` at a time.

    Results come back in patch order regardless of completion order.
    """
    def one(p: Patch):
        dets = detector.detect(p.pixels, p.origin, index=p.index)
        return check_local_detections(dets, p.width, p.height)

    workers = max(1, int(getattr(detector, "max_parallelism", 1)))
    if workers == 1 or len(patches) <= 1:
        return [one(p) for p in patches]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, patches))


def run(cfg: PipelineConfig, seed: int | None = None, out_dir: str | None = None,
        write: bool = True) -> RunResult:
    """Execute every stage in order and write the enabled outputs.

    Outputs are staged in a hidden directory and moved into place only after
    all stages succeed, so a failed run leaves nothing half-written behind.
    """
    if seed is not None:
        cfg.ransac.seed = int(seed)
    out_dir = out_dir or cfg.outputs.dir
    timer = _Timer()

    with timer.stage("load"):
        pano, scene = _load(cfg)
    width, height = pano.width, pano.height

    with timer.stage("unproject"):
        cloud = unproject(pano, cfg.downsample_factor)
    with timer.stage("ransac"):
        planes = extract_top_planes(cloud, cfg.ransac)
    with timer.stage("mask"):
        horizontal = [p for p in planes if p.orientation == HORIZONTAL]
        region = reproject_planes(horizontal, cloud, cfg.downsample_factor, (width, height))
        mask = build_band(region, cfg.mask, (width, height))
    with timer.stage("tile"):
        patches = tile(mask, pano.rgb, cfg.tiler)

    patch_dir = tempfile.mkdtemp(prefix="panoreduce-", dir=os.environ.get(TMPDIR_ENV) or None)
    try:
        with timer.stage("detect"):
            detector = make_detector(cfg, scene, patch_dir)
            try:
                local = detect_patches(detector, patches)
            finally:
                if hasattr(detector, "close"):
                    detector.close()
    finally:
        shutil.rmtree(patch_dir, ignore_errors=True)

    with timer.stage("merge"):
        merged_in = [Detection(d.cls, box, d.score)
                     for p, dets in zip(patches, local) for d in dets
                     for box in to_global(p, d.box, width)]
        merged = merge_detections(merged_in, cfg.tiler.merge_iou, pano_width=width)
    with timer.stage("blur"):
        blurred = blur_regions(pano.rgb, merged, cfg.blur)

    metrics = RunMetrics(
        coverage_fraction=coverage_fraction(mask),
        patch_count=len(patches),
        detections_pre_merge=len(merged_in),
        detections_post_merge=len(merged),
        blurred_count=sum(d.score >= cfg.blur.score_threshold for d in merged),
        stage_seconds=dict(timer.seconds),
        planes=[p.summary() for p in planes],
        width=width,
        height=height,
        buffer_px=cfg.mask.effective_buffer(height),
        seed=cfg.ransac.seed,
        detector=cfg.detector.type,
        max_parallelism=cfg.detector.max_parallelism,
    )
    result = RunResult(metrics=metrics, mask=mask, planes=planes, patches=patches,
                       detections=merged, blurred=blurred, scene=scene)
    if write:
        result.outputs = _write_outputs(cfg, out_dir, pano, result)
    return result


def _write_outputs(cfg: PipelineConfig, out_dir: str, pano, result: RunResult) -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".staging-", dir=out_dir)
    written = {}
    try:
        def target(name):
            written[name] = os.path.join(out_dir, name)
            return os.path.join(staging, name)

        write_detections(result.detections, target("detections.json"))
        if cfg.outputs.mask:
            formats.write_mask(result.mask.bitmap, target("mask.pgm"))
        if cfg.outputs.overlay:
            formats.write_rgb(overlay(pano.rgb, result.mask), target("overlay.ppm"))
        if cfg.outputs.blurred:
            formats.write_rgb(result.blurred, target("blurred.ppm"))
        if cfg.outputs.patches:
            os.makedirs(os.path.join(staging, "patches"))
            for p in result.patches:
                formats.write_rgb(np.ascontiguousarray(p.pixels), target(f"patches/{p.filename}"))
        if cfg.outputs.report:
            from .report import write_report
            for name in write_report(staging, pano.rgb, result):
                written[name] = os.path.join(out_dir, name)
        dump_json(result.metrics.to_json(), target("metrics.json"))

        for name in written:
            dst = os.path.join(out_dir, name)
            os.makedirs(os.path.dirname(dst), exist_ok=True)
            os.replace(os.path.join(staging, name), dst)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return written


def compare_baseline(mask_a: np.ndarray, mask_b: np.ndarray) -> tuple[dict, np.ndarray]:
    """Compare two processing masks.

    The ratio is ``coverage(b) / coverage(a)``, i.e. ``b`` measured against the
    baseline ``a`` (1.0 when both are empty). The difference image is 255
    wherever exactly one mask is set.
    """
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    if a.shape != b.shape:
        raise ContractError(f"mask dimensions differ: {a.shape[::-1]} vs {b.shape[::-1]}")
    cov_a = coverage_fraction(a)
    cov_b = coverage_fraction(b)
    if cov_a == 0:
        ratio = 1.0 if cov_b == 0 else float("inf")
    else:
        ratio = cov_b / cov_a
    report = {
        "width": int(a.shape[1]),
        "height": int(a.shape[0]),
        "coverage_a": cov_a,
        "coverage_b": cov_b,
        "ratio": ratio,
        "only_a": int(np.count_nonzero(a & ~b)),
        "only_b": int(np.count_nonzero(b & ~a)),
        "both": int(np.count_nonzero(a & b)),
    }
    diff = np.where(a ^ b, 255, 0).astype(np.uint8)
    return report, diff
