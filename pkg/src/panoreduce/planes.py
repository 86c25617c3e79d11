"""RANSAC plane segmentation over camera-frame point clouds.

A plane is stored as ``normal . p + offset = 0`` with a unit normal whose sign
is canonical (``z >= 0``, then ``y >= 0``, then ``x >= 0`` on ties), so two
fits of the same surface compare equal.

Sampling uses :class:`XorShift64Star`, a fully specified generator, so the
sequence of candidate triples for a given seed is reproducible everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import DegenerateSampleError, NoPlaneError
from .geometry import PointCloud

HORIZONTAL = "horizontal"
VERTICAL = "vertical"
OBLIQUE = "oblique"

_MASK64 = (1 << 64) - 1
_EVAL_CHUNK = 32


class XorShift64Star:
    """xorshift64* (Vigna 2016) seeded through one splitmix64 step.

    ``next_u64`` returns the state after ``x ^= x >> 12; x ^= x << 25;
    x ^= x >> 27`` multiplied by 0x2545F4914F6CDD1D modulo 2**64.
    ``below(n)`` draws uniformly from ``[0, n)`` by rejecting raw values at or
    above the largest multiple of ``n`` that fits in 64 bits.
    """

    def __init__(self, seed: int):
        z = (seed + 0x9E3779B97F4A7C15) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z ^= z >> 31
        self.state = z or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK64

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        limit = ((1 << 64) // n) * n
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def triple(self, n: int) -> tuple[int, int, int]:
        """Three distinct indices in ``[0, n)`` in draw order."""
        i = self.below(n)
        j = self.below(n)
        while j == i:
            j = self.below(n)
        k = self.below(n)
        while k == i or k == j:
            k = self.below(n)
        return i, j, k


@dataclass
class RansacParams:
    distance_threshold_m: float = 0.5
    max_iterations: int = 500
    top_k: int = 10
    min_inliers: int = 50
    horizontal_angle_deg: float = 20.0
    seed: int = 0
    refine: bool = False

    def __post_init__(self):
        if not self.distance_threshold_m > 0:
            raise ValueError("distance_threshold_m must be > 0")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.min_inliers < 3:
            raise ValueError("min_inliers must be >= 3")
        if not 0 < self.horizontal_angle_deg < 90:
            raise ValueError("horizontal_angle_deg must lie in (0, 90)")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass
class Plane:
    normal: np.ndarray
    offset: float
    inliers: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    orientation: str | None = None

    @property
    def inlier_count(self) -> int:
        return len(self.inliers)

    def tilt_deg(self) -> float:
        """Angle between the normal and +z."""
        return math.degrees(math.acos(min(1.0, max(-1.0, float(self.normal[2])))))

    def summary(self) -> dict:
        return {
            "normal": [float(c) for c in self.normal],
            "offset": float(self.offset),
            "orientation": self.orientation,
            "inlier_count": self.inlier_count,
        }


def _canonical_sign(normals: np.ndarray) -> np.ndarray:
    x, y, z = normals[:, 0], normals[:, 1], normals[:, 2]
    flip = (z < 0) | ((z == 0) & ((y < 0) | ((y == 0) & (x < 0))))
    return np.where(flip, -1.0, 1.0)


def _planes_from_triples(p1, p2, p3):
    """Vectorized three-point fit. Returns normals, offsets and a validity mask."""
    e1 = p2 - p1
    e2 = p3 - p1
    cross = np.cross(e1, e2)
    length = np.linalg.norm(cross, axis=1)
    scale = np.maximum(np.einsum("ij,ij->i", e1, e1), np.einsum("ij,ij->i", e2, e2))
    valid = length >= 1e-12 * scale
    valid &= scale > 0
    safe = np.where(valid, length, 1.0)
    normals = cross / safe[:, None]
    normals *= _canonical_sign(normals)[:, None]
    offsets = -np.einsum("ij,ij->i", normals, p1)
    return normals, offsets, valid


def plane_from_points(p1, p2, p3) -> Plane:
    """Plane through three points; raises :class:`DegenerateSampleError` if collinear."""
    pts = [np.asarray(p, dtype=np.float64).reshape(1, 3) for p in (p1, p2, p3)]
    normals, offsets, valid = _planes_from_triples(*pts)
    if not valid[0]:
        raise DegenerateSampleError(f"points {p1}, {p2}, {p3} are collinear or coincident")
    return Plane(normal=normals[0], offset=float(offsets[0]))


def point_plane_distance(plane: Plane, points) -> np.ndarray | float:
    """Absolute distance ``|normal . p + offset|`` for one point or an ``(N, 3)`` array."""
    pts = np.asarray(points, dtype=np.float64)
    d = np.abs(pts @ plane.normal + plane.offset)
    return float(d) if d.ndim == 0 else d


def classify_plane(plane: Plane, params: RansacParams) -> str:
    tilt = plane.tilt_deg()
    if tilt <= params.horizontal_angle_deg:
        return HORIZONTAL
    if tilt >= 90.0 - params.horizontal_angle_deg:
        return VERTICAL
    return OBLIQUE


def _candidate_triples(n: int, params: RansacParams, rng: XorShift64Star, pts: np.ndarray):
    """Yield arrays of valid candidate triples, chunk by chunk, in sequence order.

    When the iteration budget covers every distinct triple the triples are
    enumerated exhaustively in lexicographic order instead of sampled.
    """
    if params.max_iterations >= math.comb(n, 3):
        combos = np.fromiter((c for t in combinations(range(n), 3) for c in t),
                             dtype=np.int64).reshape(-1, 3)
        _, _, valid = _planes_from_triples(pts[combos[:, 0]], pts[combos[:, 1]], pts[combos[:, 2]])
        combos = combos[valid]
        for start in range(0, len(combos), _EVAL_CHUNK):
            yield combos[start:start + _EVAL_CHUNK]
        return

    remaining = params.max_iterations
    # bounded so a cloud of collinear points cannot loop forever
    draws_left = 20 * params.max_iterations
    while remaining > 0 and draws_left > 0:
        want = min(_EVAL_CHUNK, remaining)
        batch = np.array([rng.triple(n) for _ in range(min(want, draws_left))], dtype=np.int64)
        draws_left -= len(batch)
        _, _, valid = _planes_from_triples(pts[batch[:, 0]], pts[batch[:, 1]], pts[batch[:, 2]])
        batch = batch[valid]
        if len(batch):
            remaining -= len(batch)
            yield batch


def ransac_fit(cloud: PointCloud | np.ndarray, params: RansacParams,
               rng: XorShift64Star | None = None, subset: np.ndarray | None = None) -> Plane:
    """Best-consensus plane over ``max_iterations`` valid three-point samples.

    Candidates are ranked by inlier count (distance <= threshold), then by
    lower mean inlier distance, then by earlier position in the sample
    sequence. ``subset`` restricts the fit to those indices of ``cloud``; the
    returned inlier indices always refer to the full cloud.

    Raises:
        NoPlaneError: fewer than three points, or the winner has fewer than
            ``min_inliers`` inliers.
    """
    xyz = cloud.xyz if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    index = np.arange(len(xyz)) if subset is None else np.asarray(subset, dtype=np.int64)
    pts = xyz[index]
    n = len(pts)
    if n < 3:
        raise NoPlaneError(f"need at least 3 points, got {n}")
    if rng is None:
        rng = XorShift64Star(params.seed)
    thr = params.distance_threshold_m

    best = None  # (count, mean_distance, normal, offset)
    for batch in _candidate_triples(n, params, rng, pts):
        normals, offsets, _ = _planes_from_triples(pts[batch[:, 0]], pts[batch[:, 1]], pts[batch[:, 2]])
        dist = np.abs(pts @ normals.T + offsets)
        inl = dist <= thr
        counts = inl.sum(axis=0)
        sums = np.where(inl, dist, 0.0).sum(axis=0)
        means = sums / np.maximum(counts, 1)
        for c in range(len(batch)):
            key = (int(counts[c]), float(means[c]))
            if best is None or key[0] > best[0] or (key[0] == best[0] and key[1] < best[1]):
                best = (key[0], key[1], normals[c], float(offsets[c]))

    if best is None:
        raise NoPlaneError("every sampled triple was degenerate")
    normal, offset = best[2], best[3]
    mask = np.abs(pts @ normal + offset) <= thr
    if params.refine and mask.sum() >= 3:
        normal, offset = _least_squares(pts[mask])
        mask = np.abs(pts @ normal + offset) <= thr
    count = int(mask.sum())
    if count < params.min_inliers:
        raise NoPlaneError(f"best plane has {count} inliers, fewer than min_inliers={params.min_inliers}")
    plane = Plane(normal=normal.copy(), offset=offset, inliers=index[mask])
    plane.orientation = classify_plane(plane, params)
    return plane


def _least_squares(pts: np.ndarray):
    centroid = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    normal = vt[-1]
    normal = normal * _canonical_sign(normal[None, :])[0]
    return normal, float(-normal @ centroid)


def extract_top_planes(cloud: PointCloud | np.ndarray, params: RansacParams) -> list[Plane]:
    """Sequentially fit up to ``top_k`` planes, removing each plane's inliers.

    One generator seeded from ``params.seed`` drives every fit in turn.
    Extraction stops at the first fit that fails.
    """
    xyz = cloud.xyz if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    rng = XorShift64Star(params.seed)
    remaining = np.arange(len(xyz), dtype=np.int64)
    planes: list[Plane] = []
    while len(planes) < params.top_k:
        try:
            plane = ransac_fit(xyz, params, rng=rng, subset=remaining)
        except NoPlaneError:
            break
        planes.append(plane)
        remaining = np.setdiff1d(remaining, plane.inliers, assume_unique=True)
    return planes
