"""Full-resolution processing masks built from reprojected horizontal planes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .formats import read_mask
from .geometry import PointCloud, row_elevations
from .planes import Plane

REFERENCE_HEIGHT = 11180


@dataclass
class MaskParams:
    """Band construction settings.

    ``buffer_px`` is defined at ``reference_height`` rows and rescaled to the
    actual frame height when ``auto_scale_buffer`` is set. The ego-vehicle
    region comes from ``ego_mask_path`` when given, otherwise from
    ``ego_cutoff_deg`` (pixels below that elevation are dropped).
    """

    buffer_px: int = 350
    reference_height: int = REFERENCE_HEIGHT
    auto_scale_buffer: bool = True
    band_cap_frac: float = 1.0 / 3.0
    max_gap_cols: int = 50
    ego_cutoff_deg: float = -62.0
    ego_mask_path: str | None = None

    def __post_init__(self):
        if self.buffer_px < 0:
            raise ValueError("buffer_px must be >= 0")
        if not 0 < self.band_cap_frac <= 1:
            raise ValueError("band_cap_frac must lie in (0, 1]")
        if self.reference_height <= 0:
            raise ValueError("reference_height must be positive")
        if self.max_gap_cols < 0:
            raise ValueError("max_gap_cols must be >= 0")
        if not -90.0 <= self.ego_cutoff_deg < 0.0:
            raise ValueError("ego_cutoff_deg must lie in [-90, 0)")

    def effective_buffer(self, height: int) -> int:
        if not self.auto_scale_buffer:
            return int(self.buffer_px)
        return int(math.floor(self.buffer_px * height / self.reference_height + 0.5))


@dataclass
class ProcessingMask:
    """Processing mask and the three regions it is composed from.

    ``bitmap == (plane_region | buffer_region) & ~ego_region``.
    """

    bitmap: np.ndarray
    plane_region: np.ndarray
    buffer_region: np.ndarray
    ego_region: np.ndarray

    @property
    def height(self) -> int:
        return self.bitmap.shape[0]

    @property
    def width(self) -> int:
        return self.bitmap.shape[1]

    @property
    def coverage(self) -> float:
        return coverage_fraction(self.bitmap)


def coverage_fraction(mask) -> float:
    bitmap = mask.bitmap if isinstance(mask, ProcessingMask) else np.asarray(mask, dtype=bool)
    return float(np.count_nonzero(bitmap)) / bitmap.size


def reproject_planes(planes: list[Plane], cloud: PointCloud, factor: int,
                     full_dims: tuple[int, int]) -> np.ndarray:
    """Paint the ``factor x factor`` block at each inlier's source pixel.

    ``full_dims`` is ``(width, height)``. Blocks are clipped at the image border.
    """
    width, height = full_dims
    region = np.zeros((height, width), dtype=bool)
    if not planes:
        return region
    idx = np.concatenate([p.inliers for p in planes])
    u = cloud.src_uv[idx, 0]
    v = cloud.src_uv[idx, 1]
    for dv in range(factor):
        vv = v + dv
        keep_v = vv < height
        for du in range(factor):
            uu = u + du
            keep = keep_v & (uu < width)
            region[vv[keep], uu[keep]] = True
    return region


def ego_mask(params: MaskParams, dims: tuple[int, int]) -> np.ndarray:
    """Ego-vehicle exclusion for a ``(width, height)`` frame."""
    width, height = dims
    if params.ego_mask_path is not None:
        mask = read_mask(params.ego_mask_path)
        if mask.shape != (height, width):
            raise ContractError(
                f"ego mask is {mask.shape[1]}x{mask.shape[0]}, frame is {width}x{height}")
        return mask
    below = row_elevations(height) < math.radians(params.ego_cutoff_deg)
    return np.broadcast_to(below[:, None], (height, width)).copy()


def _bridge_gaps(top: np.ndarray, bottom: np.ndarray, has: np.ndarray, max_gap: int):
    """Linearly interpolate ``top``/``bottom`` over short circular runs of empty columns."""
    width = len(has)
    filled = has.copy()
    occupied = np.flatnonzero(has)
    if len(occupied) == 0 or len(occupied) == width or max_gap == 0:
        return top, bottom, filled
    top = top.astype(np.float64)
    bottom = bottom.astype(np.float64)
    # consecutive occupied columns, including the pair across the seam
    nxt = np.roll(occupied, -1)
    gaps = (nxt - occupied - 1) % width
    for a, b, gap in zip(occupied, nxt, gaps):
        if gap == 0 or gap > max_gap:
            continue
        for j in range(1, gap + 1):
            col = (a + j) % width
            t = j / (gap + 1)
            top[col] = top[a] + (top[b] - top[a]) * t
            bottom[col] = bottom[a] + (bottom[b] - bottom[a]) * t
            filled[col] = True
    return np.floor(top + 0.5).astype(np.int64), np.floor(bottom + 0.5).astype(np.int64), filled


def column_extents(plane_region: np.ndarray, max_gap_cols: int = 50):
    """Top and bottom plane row per column after gap bridging, plus a validity mask."""
    height = plane_region.shape[0]
    has = plane_region.any(axis=0)
    top = np.where(has, np.argmax(plane_region, axis=0), height)
    bottom = np.where(has, height - 1 - np.argmax(plane_region[::-1], axis=0), -1)
    return _bridge_gaps(top, bottom, has, max_gap_cols)


def build_band(plane_region: np.ndarray, params: MaskParams, dims: tuple[int, int] | None = None,
               ego: np.ndarray | None = None) -> ProcessingMask:
    """Per-column processing band.

    For each column with plane pixels the band runs from the topmost plane row
    down to the bottommost one, capped at ``band_cap_frac * H`` rows; the
    buffer covers the ``buffer`` rows directly above. The ego region is
    removed last.
    """
    plane_region = np.asarray(plane_region, dtype=bool)
    height, width = plane_region.shape
    if dims is not None and tuple(dims) != (width, height):
        raise ContractError(f"plane region is {width}x{height}, expected {dims[0]}x{dims[1]}")
    top, bottom, valid = column_extents(plane_region, params.max_gap_cols)
    cap = int(math.floor(params.band_cap_frac * height))
    end = np.minimum(bottom + 1, top + cap)
    buffer = params.effective_buffer(height)
    start_buf = np.maximum(top - buffer, 0)

    rows = np.arange(height)[:, None]
    plane = valid[None, :] & (rows >= top[None, :]) & (rows < end[None, :])
    buf = valid[None, :] & (rows >= start_buf[None, :]) & (rows < top[None, :])
    if ego is None:
        ego = ego_mask(params, (width, height))
    bitmap = (plane | buf) & ~ego
    return ProcessingMask(bitmap=bitmap, plane_region=plane, buffer_region=buf, ego_region=ego)


def static_band_mask(dims: tuple[int, int], fraction: float = 0.66,
                     bottom_row: int | None = None) -> np.ndarray:
    """Fixed horizontal band covering ``fraction`` of all rows.

    The band ends just above ``bottom_row`` (default: the last row) and is
    shifted down if it would run off the top. This mirrors a hand-tuned
    "skip sky and vehicle" crop that ignores scene geometry.
    """
    width, height = dims
    rows = int(math.floor(fraction * height + 0.5))
    end = height if bottom_row is None else int(bottom_row)
    start = max(0, end - rows)
    end = start + rows
    mask = np.zeros((height, width), dtype=bool)
    mask[start:min(end, height)] = True
    return mask


def overlay(rgb: np.ndarray, mask: ProcessingMask, alpha: float = 0.45) -> np.ndarray:
    """Blend ego (red), plane band (yellow) and buffer (green) over the panorama."""
    out = rgb.astype(np.float32)
    layers = (
        (mask.plane_region & ~mask.ego_region, (255, 215, 0)),
        (mask.buffer_region & ~mask.ego_region, (40, 200, 60)),
        (mask.ego_region, (220, 30, 30)),
    )
    for region, color in layers:
        out[region] = (1 - alpha) * out[region] + alpha * np.array(color, dtype=np.float32)
    return np.clip(out + 0.5, 0, 255).astype(np.uint8)


def static_baseline_mask(dims: tuple[int, int], fraction: float = 0.66,
                         ego_cutoff_deg: float = -62.0) -> np.ndarray:
    """Static band of ``fraction`` of the rows ending where the ego cutoff begins."""
    width, height = dims
    below = row_elevations(height) < math.radians(ego_cutoff_deg)
    bottom = int(below.argmax()) if below.any() else height
    return static_band_mask(dims, fraction, bottom_row=bottom)
