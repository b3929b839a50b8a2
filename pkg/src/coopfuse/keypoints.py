"""Keypoint selection: furthest point sampling, in-proposal filtering and
landmark down-sampling for pose correction."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgument
from .geometry import BBox7
from .localization import LandmarkClass, LandmarkPoint

CONTAIN_EPS = 1e-9


@dataclass
class KeypointSet:
    coords: np.ndarray  # (N, 3)
    features: np.ndarray  # (N, n_ch), values in [0, 1]

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float).reshape(-1, 3)
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 2 or len(self.features) != len(self.coords):
            raise InvalidArgument("features must be (N, n_ch) with N == len(coords)")

    @property
    def n_ch(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return len(self.coords)

    @classmethod
    def empty(cls, n_ch: int) -> "KeypointSet":
        return cls(np.zeros((0, 3)), np.zeros((0, n_ch)))


@dataclass(frozen=True)
class SelectConfig:
    n_kpts: int = 2048
    n_ch: int = 32
    k_p: int = 16
    k_fw: int = 32

    def __post_init__(self):
        if self.n_kpts < 1:
            raise InvalidArgument("n_kpts must be >= 1")
        if not 1 <= self.n_ch <= 255:
            raise InvalidArgument("n_ch must lie in [1, 255]")
        if self.k_p < 0 or self.k_fw < 0:
            raise InvalidArgument("k_p and k_fw must be >= 0")


def fps_sample(points, n: int) -> np.ndarray:
    """Greedy furthest point sampling, starting from the point farthest from
    the centroid. Ties resolve to the lowest index."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) == 0:
        raise InvalidArgument("fps_sample needs at least one point")
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    if n >= len(pts):
        return np.arange(len(pts))
    start = int(np.argmax(((pts - pts.mean(axis=0)) ** 2).sum(axis=1)))
    chosen = [start]
    dist = ((pts - pts[start]) ** 2).sum(axis=1)
    for _ in range(n - 1):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, ((pts - pts[nxt]) ** 2).sum(axis=1))
    return np.array(chosen)


def points_in_boxes(points, boxes: Sequence[BBox7]) -> np.ndarray:
    """Indices of points inside at least one box (boundaries inclusive)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    inside = np.zeros(len(pts), dtype=bool)
    for b in boxes:
        dx, dy = pts[:, 0] - b.x, pts[:, 1] - b.y
        c, s = np.cos(b.r), np.sin(b.r)
        u = c * dx + s * dy
        v = -s * dx + c * dy
        inside |= (
            (np.abs(u) <= b.l / 2 + CONTAIN_EPS)
            & (np.abs(v) <= b.w / 2 + CONTAIN_EPS)
            & (np.abs(pts[:, 2] - b.z) <= b.h / 2 + CONTAIN_EPS)
        )
    return np.flatnonzero(inside)


def select_correction_points(
    landmarks: Sequence[LandmarkPoint], k_p: int, k_fw: int
) -> list[LandmarkPoint]:
    """FPS-cap poles to ``k_p`` and walls/fences to ``k_fw``; vehicle centers
    pass through."""
    out = []
    for cls, k in ((LandmarkClass.POLE, k_p), (LandmarkClass.WALL_FENCE, k_fw)):
        group = [p for p in landmarks if p.cls == cls]
        if not group or k == 0:
            continue
        idx = fps_sample([[p.x, p.y] for p in group], k)
        out.extend(group[i] for i in sorted(idx))
    out.extend(p for p in landmarks if p.cls == LandmarkClass.VEHICLE_CENTER)
    return out


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def synthetic_features(coords, n_ch: int) -> np.ndarray:
    """Deterministic placeholder features in [0, 1], hashed from the point
    coordinates at centimeter resolution."""
    pts = np.asarray(coords, dtype=float).reshape(-1, 3)
    q = np.round(pts * 100).astype(np.int64).view(np.uint64)
    with np.errstate(over="ignore"):
        key = _splitmix64(q[:, 0])
        key = _splitmix64(key ^ q[:, 1])
        key = _splitmix64(key ^ q[:, 2])
        ch = np.arange(n_ch, dtype=np.uint64)
        h = _splitmix64(key[:, None] * np.uint64(0x100000001B3) + ch[None, :])
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)
