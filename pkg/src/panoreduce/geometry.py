"""Equirectangular projection math.

Camera frame: origin at the camera, +x forward, +y left, +z up. Azimuth is
measured from +x toward +y and elevation from the horizon toward +z. Pixel
``(u, v)`` of a ``W x H`` frame has its center at::

    theta = 2*pi*(u + 0.5)/W - pi
    phi   = pi/2 - pi*(v + 0.5)/H

The same formula is applied unchanged to continuous coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .formats import DepthPanorama


def pixel_angles(u, v, width: int, height: int):
    """Azimuth and elevation of pixel coordinates (scalars or arrays)."""
    theta = 2.0 * np.pi * (np.asarray(u, dtype=np.float64) + 0.5) / width - np.pi
    phi = np.pi / 2 - np.pi * (np.asarray(v, dtype=np.float64) + 0.5) / height
    return theta, phi


def angles_to_dirs(theta, phi) -> np.ndarray:
    cos_phi = np.cos(phi)
    return np.stack([cos_phi * np.cos(theta), cos_phi * np.sin(theta), np.sin(phi)], axis=-1)


def pixel_to_ray(u, v, width: int, height: int) -> np.ndarray:
    """Unit direction through pixel ``(u, v)``.

    Accepts scalars or broadcastable arrays; the result has a trailing axis of
    length 3. Coordinates must satisfy ``0 <= u < W`` and ``0 <= v < H``.
    """
    u_arr = np.asarray(u, dtype=np.float64)
    v_arr = np.asarray(v, dtype=np.float64)
    if np.any(u_arr < 0) or np.any(u_arr >= width) or np.any(v_arr < 0) or np.any(v_arr >= height):
        raise ContractError(f"pixel ({u}, {v}) outside a {width}x{height} frame")
    theta, phi = pixel_angles(u_arr, v_arr, width, height)
    return angles_to_dirs(theta, phi)


def ray_to_pixel(direction, width: int, height: int):
    """Continuous pixel coordinates ``(u, v)`` hit by ``direction``.

    ``u`` wraps into ``[0, W)``. ``v`` is clamped to ``[0, H - 1]`` so rays
    at or near the poles land on the first/last row; at an exact pole the
    azimuth is taken as 0.
    """
    d = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(d, axis=-1)
    if np.any(norm == 0) or not np.all(np.isfinite(norm)):
        raise ContractError("direction must be a finite non-zero vector")
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    horiz = np.hypot(x, y)
    theta = np.where(horiz > 0, np.arctan2(y, x), 0.0)
    phi = np.arctan2(z, horiz)
    u = np.mod((theta + np.pi) * width / (2.0 * np.pi) - 0.5, width)
    # mod can return exactly `width` for tiny negative inputs
    u = np.where(u >= width, 0.0, u)
    v = np.clip((np.pi / 2 - phi) * height / np.pi - 0.5, 0.0, height - 1.0)
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


@dataclass
class PointCloud:
    """Camera-frame points with the full-resolution pixel each came from.

    ``xyz`` is ``(N, 3)`` float64 meters, ``src_uv`` is ``(N, 2)`` int64 holding
    ``(src_u, src_v)``. Ordering is row-major over the sampled lattice.
    """

    xyz: np.ndarray
    src_uv: np.ndarray
    full_size: tuple[int, int]

    def __len__(self) -> int:
        return len(self.xyz)

    @property
    def ranges(self) -> np.ndarray:
        return np.linalg.norm(self.xyz, axis=1)


def unproject(pano: DepthPanorama, stride: int = 1) -> PointCloud:
    """Turn every ``stride``-th pixel (both axes) with finite depth into a 3-D point.

    Sampling starts at pixel 0 and rows/columns are taken at ``0, stride,
    2*stride, ...`` so edge pixels are never dropped. Each point is
    ``depth * pixel_to_ray`` evaluated at the full-resolution source pixel.
    """
    if int(stride) != stride or stride < 1:
        raise ContractError(f"stride must be a positive integer, got {stride}")
    stride = int(stride)
    full_w, full_h = pano.full_size
    step = stride * pano.sample_stride
    depth = pano.depth[::stride, ::stride]
    rows = np.arange(depth.shape[0], dtype=np.int64) * step
    cols = np.arange(depth.shape[1], dtype=np.int64) * step
    vv, uu = np.nonzero(np.isfinite(depth))
    src_v = rows[vv]
    src_u = cols[uu]
    rays = pixel_to_ray(src_u, src_v, full_w, full_h)
    xyz = rays * depth[vv, uu].astype(np.float64)[:, None]
    return PointCloud(xyz=xyz, src_uv=np.stack([src_u, src_v], axis=1), full_size=(full_w, full_h))


def downsample(pano: DepthPanorama, factor: int) -> DepthPanorama:
    """Point-sample RGB and depth at the top-left pixel of each ``factor`` block.

    Output dimensions are ``ceil(in / factor)``. Depth is never averaged:
    mixing foreground and background ranges would invent points in empty space.
    """
    if int(factor) != factor or factor < 1:
        raise ContractError(f"downsample factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return pano
    return DepthPanorama(
        rgb=pano.rgb[::factor, ::factor].copy(),
        depth=pano.depth[::factor, ::factor].copy(),
        sample_stride=pano.sample_stride * factor,
        full_size=pano.full_size,
    )


def downsampled_size(width: int, height: int, factor: int) -> tuple[int, int]:
    return math.ceil(width / factor), math.ceil(height / factor)


def row_elevations(height: int) -> np.ndarray:
    """Elevation in radians of the center of every row."""
    return np.pi / 2 - np.pi * (np.arange(height) + 0.5) / height


def circular_extent(occupied: np.ndarray) -> tuple[int, int]:
    """Shortest circular arc ``(start, length)`` covering every True column.

    Returns ``(0, 0)`` when nothing is occupied and ``(0, W)`` when every
    column is.
    """
    occupied = np.asarray(occupied, dtype=bool)
    width = len(occupied)
    cols = np.flatnonzero(occupied)
    if len(cols) == 0:
        return 0, 0
    if len(cols) == width:
        return 0, width
    gaps = (np.roll(cols, -1) - cols - 1) % width
    widest = int(np.argmax(gaps))
    start = int(cols[(widest + 1) % len(cols)])
    return start, width - int(gaps[widest])
