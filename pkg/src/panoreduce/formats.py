"""Readers and writers for the Netpbm family used by the pipeline.

RGB panoramas are binary PPM (``P6``), masks are binary PGM (``P5``) and depth
maps are grayscale little-endian PFM (``Pf``, negative scale). Everything is
held in numpy arrays, row 0 at the top of the image.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, UnsupportedEndiannessError

_WHITESPACE = b" \t\n\r\v\f"


def _parse_netpbm_header(data: bytes, magic: bytes):
    """Parse ``magic width height maxval`` and return them with the payload offset."""
    if data[:2] != magic:
        raise FormatError(f"bad magic {data[:2]!r}, expected {magic!r}", 0)
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise FormatError("truncated header", pos)
        c = data[pos:pos + 1]
        if c in _WHITESPACE:
            pos += 1
        elif c == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise FormatError("unterminated comment in header", pos)
            pos = nl + 1
        elif c.isdigit():
            start = pos
            while pos < len(data) and data[pos:pos + 1].isdigit():
                pos += 1
            fields.append((int(data[start:pos]), start))
            nxt = data[pos:pos + 1]
            if len(fields) < 3 and nxt and nxt not in _WHITESPACE and nxt != b"#":
                raise FormatError("header fields must be separated by whitespace", pos)
        else:
            raise FormatError(f"unexpected byte {c!r} in header", pos)
    if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
        raise FormatError("missing whitespace after maxval", pos)
    (width, w_off), (height, h_off), (maxval, m_off) = fields
    if width <= 0:
        raise FormatError("width must be positive", w_off)
    if height <= 0:
        raise FormatError("height must be positive", h_off)
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}", m_off)
    return width, height, pos + 1


def _decode_u8(data: bytes, magic: bytes, channels: int) -> np.ndarray:
    width, height, offset = _parse_netpbm_header(data, magic)
    expected = width * height * channels
    available = len(data) - offset
    if available < expected:
        raise FormatError(
            f"truncated payload: header declares {width}x{height}, needs {expected} bytes, "
            f"found {available}", len(data))
    if available > expected:
        raise FormatError(f"{available - expected} trailing bytes after payload",
                          offset + expected)
    arr = np.frombuffer(data, dtype=np.uint8, count=expected, offset=offset)
    shape = (height, width, channels) if channels > 1 else (height, width)
    return arr.reshape(shape).copy()


def _read_bytes(path) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def _write_atomic(path, payload: bytes) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(payload)
    os.replace(tmp, path)


def decode_ppm(data: bytes) -> np.ndarray:
    return _decode_u8(data, b"P6", 3)


def encode_ppm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError(f"expected HxWx3 uint8 image, got {image.shape} {image.dtype}")
    h, w = image.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(image).tobytes()


def read_rgb(path) -> np.ndarray:
    """Read a binary PPM into an ``(H, W, 3)`` uint8 array."""
    return decode_ppm(_read_bytes(path))


def write_rgb(image: np.ndarray, path) -> None:
    _write_atomic(path, encode_ppm(image))


def decode_pgm(data: bytes) -> np.ndarray:
    return _decode_u8(data, b"P5", 1)


def encode_pgm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError(f"expected HxW uint8 image, got {image.shape} {image.dtype}")
    h, w = image.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(image).tobytes()


def read_pgm(path) -> np.ndarray:
    return decode_pgm(_read_bytes(path))


def write_pgm(image: np.ndarray, path) -> None:
    _write_atomic(path, encode_pgm(image))


def read_mask(path) -> np.ndarray:
    """Read a P5 mask as a boolean array; only the values 0 and 255 are legal."""
    gray = read_pgm(path)
    bad = (gray != 0) & (gray != 255)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise FormatError(f"mask pixel {idx} has value {gray.flat[idx]}, expected 0 or 255")
    return gray == 255


def write_mask(mask: np.ndarray, path) -> None:
    write_pgm(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), path)


def decode_pfm(data: bytes) -> np.ndarray:
    """Decode a grayscale PFM. Rows come back top-first (PFM stores bottom-up)."""
    lines = []
    pos = 0
    for _ in range(3):
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise FormatError("truncated PFM header", len(data))
        lines.append((data[pos:nl], pos))
        pos = nl + 1
    (magic, _), (dims, dims_off), (scale_line, scale_off) = lines
    if magic == b"PF":
        raise FormatError("color PFM ('PF') is not a depth map; expected 'Pf'", 0)
    if magic != b"Pf":
        raise FormatError(f"bad magic {magic[:8]!r}, expected b'Pf'", 0)
    parts = dims.split()
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise FormatError(f"bad dimensions line {dims!r}", dims_off)
    width, height = int(parts[0]), int(parts[1])
    if width <= 0 or height <= 0:
        raise FormatError("dimensions must be positive", dims_off)
    try:
        scale = float(scale_line)
    except ValueError:
        raise FormatError(f"bad scale line {scale_line!r}", scale_off) from None
    if not np.isfinite(scale) or scale == 0:
        raise FormatError(f"invalid scale {scale}", scale_off)
    if scale > 0:
        raise UnsupportedEndiannessError("big-endian PFM (positive scale) is not supported",
                                         scale_off)
    expected = width * height * 4
    available = len(data) - pos
    if available < expected:
        raise FormatError(
            f"truncated payload: header declares {width}x{height}, needs {expected} bytes, "
            f"found {available}", len(data))
    if available > expected:
        raise FormatError(f"{available - expected} trailing bytes after payload", pos + expected)
    arr = np.frombuffer(data, dtype="<f4", count=width * height, offset=pos)
    return arr.reshape(height, width)[::-1].astype(np.float32)


def encode_pfm(depth: np.ndarray) -> bytes:
    depth = np.asarray(depth)
    if depth.ndim != 2:
        raise ValueError(f"expected HxW depth buffer, got shape {depth.shape}")
    h, w = depth.shape
    body = np.ascontiguousarray(depth[::-1], dtype="<f4").tobytes()
    return b"Pf\n%d %d\n-1.0\n" % (w, h) + body


def read_depth(path) -> np.ndarray:
    """Read a depth map in meters as ``(H, W)`` float32; +inf means no return."""
    return decode_pfm(_read_bytes(path))


def write_depth(depth: np.ndarray, path) -> None:
    _write_atomic(path, encode_pfm(depth))


@dataclass
class DepthPanorama:
    """Equirectangular RGB-D frame.

    ``rgb`` is ``(H, W, 3)`` uint8 and ``depth`` is ``(H, W)`` float32 meters with
    +inf for pixels without a LiDAR return. A panorama produced by
    :func:`panoreduce.geometry.downsample` keeps the lattice it was sampled
    from in ``sample_stride`` and ``full_size`` so points can be traced back to
    full-resolution pixels.
    """

    rgb: np.ndarray
    depth: np.ndarray
    sample_stride: int = 1
    full_size: tuple[int, int] | None = None  # (width, height)

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.uint8)
        self.depth = np.asarray(self.depth, dtype=np.float32)
        if self.full_size is None:
            self.full_size = (self.width, self.height)
        self.validate()

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    def validate(self) -> None:
        if self.depth.ndim != 2:
            raise ValueError(f"depth must be 2-D, got shape {self.depth.shape}")
        if self.rgb.shape != (*self.depth.shape, 3):
            raise ValueError(f"rgb shape {self.rgb.shape} does not match depth {self.depth.shape}")
        full_w, full_h = self.full_size
        if full_w != 2 * full_h:
            raise ValueError(f"equirectangular frames need width == 2*height, got {full_w}x{full_h}")
        finite = np.isfinite(self.depth)
        if np.any(self.depth[finite] <= 0):
            raise ValueError("finite depth values must be > 0")
        if np.isnan(self.depth).any():
            raise ValueError("depth contains NaN; encode missing returns as +inf")


def read_panorama(rgb_path, depth_path) -> DepthPanorama:
    rgb = read_rgb(rgb_path)
    depth = read_depth(depth_path)
    if rgb.shape[:2] != depth.shape:
        raise FormatError(f"rgb is {rgb.shape[1]}x{rgb.shape[0]} but depth is "
                          f"{depth.shape[1]}x{depth.shape[0]}")
    try:
        return DepthPanorama(rgb, depth)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def write_panorama(pano: DepthPanorama, rgb_path, depth_path) -> None:
    write_rgb(pano.rgb, rgb_path)
    write_depth(pano.depth, depth_path)
