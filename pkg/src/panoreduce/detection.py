"""Detectors consumed by the pipeline, and Gaussian blurring of their output.

Every detector exposes ``detect(pixels, origin, index=0)`` returning
:class:`~panoreduce.records.Detection` objects in patch-local pixel
coordinates, plus a ``max_parallelism`` attribute the pipeline honors.
"""

from __future__ import annotations

import json
import math
import os
import queue
import subprocess
import threading
import time
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DetectorError, ProtocolError, SchemaError
from .formats import write_rgb
from .records import Detection, parse_detection

ORACLE_MIN_FRACTION = 0.25


@dataclass
class BlurParams:
    sigma_frac: float = 0.35
    pad_px: int = 4
    score_threshold: float = 0.3

    def __post_init__(self):
        if not self.sigma_frac > 0:
            raise ValueError("sigma_frac must be > 0")
        if self.pad_px < 0:
            raise ValueError("pad_px must be >= 0")
        if not 0 <= self.score_threshold <= 1:
            raise ValueError("score_threshold must lie in [0, 1]")


def check_local_detections(detections, width: int, height: int) -> list[Detection]:
    """Enforce the detector contract on patch-local results."""
    for d in detections:
        x0, y0, x1, y1 = d.box
        if not all(math.isfinite(c) for c in d.box):
            raise ProtocolError(f"non-finite box {d.box}")
        if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
            raise ProtocolError(f"box {d.box} outside the {width}x{height} patch")
        if not (math.isfinite(d.score) and 0 <= d.score <= 1):
            raise ProtocolError(f"score {d.score} outside [0, 1]")
    return list(detections)


class OracleDetector:
    """Returns ground-truth boxes that are at least 25% inside the patch.

    Boxes are given in panorama coordinates and may extend past ``W`` when
    they straddle the seam. Results are clipped to the patch with score 1.0.
    ``latency_s`` simulates per-patch inference time.
    """

    def __init__(self, gt_boxes, pano_width: int, max_parallelism: int = 1,
                 latency_s: float = 0.0, min_fraction: float = ORACLE_MIN_FRACTION):
        self.gt = [(cls, tuple(float(c) for c in box)) for cls, box in gt_boxes]
        self.pano_width = pano_width
        self.max_parallelism = max_parallelism
        self.latency_s = latency_s
        self.min_fraction = min_fraction

    @classmethod
    def from_scene(cls, scene, **kwargs):
        boxes = [(o.cls, o.box) for o in scene.gt_objects if o.box is not None]
        return cls(boxes, scene.panorama.width, **kwargs)

    @classmethod
    def from_truth(cls, truth: dict, **kwargs):
        boxes = [(o["class"], o["box"]) for o in truth["objects"] if o.get("box") is not None]
        return cls(boxes, truth["width"], **kwargs)

    def detect(self, pixels: np.ndarray, origin, index: int = 0) -> list[Detection]:
        if self.latency_s:
            time.sleep(self.latency_s)
        ph, pw = pixels.shape[:2]
        u0, v0 = origin
        out = []
        for cls, (bu0, bv0, bu1, bv1) in self.gt:
            area = (bu1 - bu0) * (bv1 - bv0)
            iy0, iy1 = max(bv0, v0), min(bv1, v0 + ph)
            if iy1 <= iy0:
                continue
            best = None
            for shift in (-self.pano_width, 0, self.pano_width):
                ix0, ix1 = max(bu0 + shift, u0), min(bu1 + shift, u0 + pw)
                if ix1 > ix0 and (best is None or ix1 - ix0 > best[1] - best[0]):
                    best = (ix0, ix1)
            if best is None:
                continue
            if (best[1] - best[0]) * (iy1 - iy0) >= self.min_fraction * area:
                out.append(Detection(cls, (best[0] - u0, iy0 - v0, best[1] - u0, iy1 - v0), 1.0))
        return out


def parse_response(line: str, width: int, height: int) -> list[Detection]:
    """Decode one protocol response line, rejecting anything off-contract."""
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"response is not JSON ({exc.msg})", raw=line) from None
    if not isinstance(doc, dict) or set(doc) != {"detections"} or not isinstance(doc["detections"], list):
        raise ProtocolError('response must be {"detections": [...]}', raw=line)
    try:
        dets = [parse_detection(d, f"detections[{i}]", width, height)
                for i, d in enumerate(doc["detections"])]
    except SchemaError as exc:
        raise ProtocolError(str(exc), raw=line) from None
    return dets


class _Worker:
    def __init__(self, command, env=None):
        self.proc = subprocess.Popen(command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     text=True, bufsize=1, env=env)
        self.lines: queue.Queue = queue.Queue()
        self.reader = threading.Thread(target=self._pump, daemon=True)
        self.reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self.lines.put(line)
        self.lines.put(None)

    def request(self, payload: dict, timeout: float) -> str:
        try:
            self.proc.stdin.write(json.dumps(payload) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise DetectorError(f"detector process exited with code {self.proc.poll()}") from None
        try:
            line = self.lines.get(timeout=timeout)
        except queue.Empty:
            self.kill()
            raise DetectorError(f"detector timed out after {timeout} s") from None
        if line is None:
            code = self.proc.wait()
            raise DetectorError(f"detector process exited with code {code}")
        return line.rstrip("\n")

    def kill(self):
        if self.proc.poll() is None:
            self.proc.kill()
        self.proc.wait()

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.kill()


class ExternalDetector:
    """Runs detection in child processes speaking a JSON-lines protocol.

    For each patch the pixels are written to ``patch_dir`` as PPM and one
    request line ``{"patch_path", "origin", "width", "height"}`` is sent on the
    child's stdin; the child answers with one ``{"detections": [...]}`` line.
    ``max_parallelism`` children are started lazily and each serves one
    request at a time.
    """

    def __init__(self, command, patch_dir, max_parallelism: int = 1, timeout_s: float = 30.0):
        if isinstance(command, str):
            command = [command]
        self.command = list(command)
        self.patch_dir = os.fspath(patch_dir)
        self.max_parallelism = max_parallelism
        self.timeout_s = timeout_s
        self._idle: queue.Queue = queue.Queue()
        self._started = 0
        self._all: list[_Worker] = []
        self._lock = threading.Lock()

    def _acquire(self) -> _Worker:
        with self._lock:
            if self._idle.empty() and self._started < self.max_parallelism:
                self._started += 1
                worker = _Worker(self.command)
                self._all.append(worker)
                return worker
        return self._idle.get()

    def detect(self, pixels: np.ndarray, origin, index: int = 0) -> list[Detection]:
        ph, pw = pixels.shape[:2]
        u0, v0 = (int(c) for c in origin)
        path = os.path.join(self.patch_dir, f"patch_{index}_{u0}_{v0}.ppm")
        write_rgb(np.ascontiguousarray(pixels), path)
        payload = {"patch_path": path, "origin": [u0, v0], "width": pw, "height": ph}
        worker = self._acquire()
        try:
            line = worker.request(payload, self.timeout_s)
            dets = parse_response(line, pw, ph)
        except DetectorError:
            worker.kill()
            with self._lock:
                self._started -= 1
            raise
        self._idle.put(worker)
        return dets

    def close(self):
        for w in self._all:
            w.close()
        self._all.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _blur_box(out: np.ndarray, box, params: BlurParams) -> None:
    height, width = out.shape[:2]
    u_min, v_min, u_max, v_max = box
    sigma = params.sigma_frac * min(u_max - u_min, v_max - v_min)
    radius = int(3.0 * sigma + 0.5)
    bu0 = math.floor(u_min) - params.pad_px
    bu1 = math.ceil(u_max) + params.pad_px
    bv0 = max(0, math.floor(v_min) - params.pad_px)
    bv1 = min(height, math.ceil(v_max) + params.pad_px)
    if bu1 - bu0 >= width:
        bu0, bu1 = 0, width
    rows = np.clip(np.arange(bv0 - radius, bv1 + radius), 0, height - 1)
    cols = np.arange(bu0 - radius, bu1 + radius) % width
    crop = out[rows][:, cols].astype(np.float64)
    smoothed = gaussian_filter(crop, sigma=(sigma, sigma, 0), mode="nearest", truncate=3.0)
    inner = smoothed[radius:radius + (bv1 - bv0), radius:radius + (bu1 - bu0)]
    dst_cols = np.arange(bu0, bu1) % width
    out[bv0:bv1, dst_cols] = np.clip(np.floor(inner + 0.5), 0, 255).astype(np.uint8)


def blur_regions(rgb: np.ndarray, detections, params: BlurParams) -> np.ndarray:
    """Gaussian-blur every detection at or above the score threshold.

    Each box is dilated by ``pad_px`` and smoothed with sigma
    ``sigma_frac * min(box_w, box_h)`` (kernel truncated at 3 sigma, columns
    periodic, rows clamped). Pixels outside the dilated boxes are untouched.
    """
    out = np.array(rgb, dtype=np.uint8, copy=True)
    for det in detections:
        if det.score >= params.score_threshold:
            _blur_box(out, det.box, params)
    return out
