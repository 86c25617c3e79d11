"""Cut the processing mask into fixed-size detector patches and merge their results.

Columns are periodic: a patch that runs past the right edge continues at
column 0 and is flagged ``wraps_seam``. Panorama boxes always satisfy
``0 <= u_min < u_max <= W``; :func:`to_global` splits a box that crosses the
seam into two pieces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .geometry import circular_extent
from .mask import ProcessingMask
from .records import Detection


@dataclass
class TilerParams:
    patch_w: int = 1200
    patch_h: int = 600
    overlap_px: int = 120
    merge_iou: float = 0.5

    def __post_init__(self):
        if self.patch_w < 1 or self.patch_h < 1:
            raise ValueError("patch dimensions must be positive")
        if not 0 <= self.overlap_px < min(self.patch_w, self.patch_h):
            raise ValueError("overlap_px must satisfy 0 <= overlap < min(patch_w, patch_h)")
        if not 0 < self.merge_iou <= 1:
            raise ValueError("merge_iou must lie in (0, 1]")

    @property
    def stride(self) -> tuple[int, int]:
        return self.patch_w - self.overlap_px, self.patch_h - self.overlap_px


@dataclass
class Patch:
    index: int
    u0: int
    v0: int
    width: int
    height: int
    wraps_seam: bool
    pixels: np.ndarray | None = None

    @property
    def origin(self) -> tuple[int, int]:
        return self.u0, self.v0

    def columns(self, pano_width: int) -> np.ndarray:
        return (self.u0 + np.arange(self.width)) % pano_width

    @property
    def filename(self) -> str:
        return f"patch_{self.index}_{self.u0}_{self.v0}.ppm"


def _origins(start: int, span: int, size: int, stride: int) -> list[int]:
    """Offsets that cover ``[start, start + span)`` with windows of ``size``."""
    if span <= size:
        return [start]
    count = 1 + math.ceil((span - size) / stride)
    return [start + k * stride for k in range(count)]


def tile(mask, rgb: np.ndarray | None, params: TilerParams) -> list[Patch]:
    """Grid of ``patch_w x patch_h`` patches covering every mask pixel.

    Rows are tiled over the mask's bounding rows (the last row of patches is
    pulled up to stay inside the image). Columns are tiled over the shortest
    circular arc holding mask pixels, or around the full circle when every
    column has one. Patches without mask pixels are dropped; the rest are
    ordered by ``(v0, u0)``.
    """
    bitmap = mask.bitmap if isinstance(mask, ProcessingMask) else np.asarray(mask, dtype=bool)
    height, width = bitmap.shape
    if rgb is not None and rgb.shape[:2] != bitmap.shape:
        raise ContractError(f"mask is {width}x{height} but panorama is {rgb.shape[1]}x{rgb.shape[0]}")
    if params.patch_w > width or params.patch_h > height:
        raise ContractError(
            f"patch {params.patch_w}x{params.patch_h} is larger than the {width}x{height} panorama")
    rows_hit = np.flatnonzero(bitmap.any(axis=1))
    if len(rows_hit) == 0:
        return []
    stride_u, stride_v = params.stride

    r0, r1 = int(rows_hit[0]), int(rows_hit[-1])
    v_origins = sorted({min(v, height - params.patch_h)
                        for v in _origins(r0, r1 - r0 + 1, params.patch_h, stride_v)})

    col_start, arc = circular_extent(bitmap.any(axis=0))
    if arc == width:
        u_origins = [k * stride_u for k in range(math.ceil(width / stride_u))]
    else:
        u_origins = [u % width for u in _origins(col_start, arc, params.patch_w, stride_u)]

    patches = []
    for v0 in v_origins:
        band = bitmap[v0:v0 + params.patch_h]
        for u0 in sorted(set(u_origins)):
            cols = (u0 + np.arange(params.patch_w)) % width
            if not band[:, cols].any():
                continue
            pixels = None if rgb is None else rgb[v0:v0 + params.patch_h][:, cols]
            patches.append(Patch(index=len(patches), u0=u0, v0=v0, width=params.patch_w,
                                 height=params.patch_h, wraps_seam=u0 + params.patch_w > width,
                                 pixels=pixels))
    return patches


def patch_union(patches: list[Patch], dims: tuple[int, int]) -> np.ndarray:
    """Boolean ``(H, W)`` map of pixels covered by at least one patch."""
    width, height = dims
    covered = np.zeros((height, width), dtype=bool)
    for p in patches:
        covered[p.v0:p.v0 + p.height, p.columns(width)] = True
    return covered


def to_global(patch: Patch, local_box, pano_width: int) -> list[tuple[float, float, float, float]]:
    """Translate a patch-local box to panorama coordinates, splitting at the seam."""
    x0, y0, x1, y1 = local_box
    u0 = patch.u0 + x0
    u1 = patch.u0 + x1
    v0 = patch.v0 + y0
    v1 = patch.v0 + y1
    if u0 >= pano_width:
        u0 -= pano_width
        u1 -= pano_width
    if u1 <= pano_width:
        return [(u0, v0, u1, v1)]
    return [(u0, v0, pano_width, v1), (0, v0, u1 - pano_width, v1)]


def box_iou(a, b, pano_width: int | None = None) -> float:
    """Intersection over union; with ``pano_width`` the u axis is periodic."""
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if ih <= 0:
        return 0.0
    shifts = (0,) if pano_width is None else (-pano_width, 0, pano_width)
    iw = max(min(a[2], b[2] + s) - max(a[0], b[0] + s) for s in shifts)
    if iw <= 0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def _detection_order(d: Detection):
    return (-d.score, d.box[0], d.box[1], d.box[2], d.box[3], d.cls)


def merge_detections(detections: list[Detection], merge_iou: float = 0.5,
                     pano_width: int | None = None) -> list[Detection]:
    """Greedy per-class suppression of duplicates from overlapping patches.

    Boxes are visited by descending score, larger area first among equal
    scores, and a box is dropped when its IoU with an already kept box of the
    same class is at least ``merge_iou``. The result is sorted by descending
    score, then ``(u_min, v_min)``.
    """
    visit = sorted(detections, key=lambda d: (-d.score, -d.area, d.box, d.cls))
    kept: list[Detection] = []
    for det in visit:
        if any(k.cls == det.cls and box_iou(k.box, det.box, pano_width) >= merge_iou for k in kept):
            continue
        kept.append(det)
    return sorted(kept, key=_detection_order)
