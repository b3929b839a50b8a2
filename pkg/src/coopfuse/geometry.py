"""Oriented boxes, 2D poses and rotated bird's-eye-view IoU.

Boxes follow the ``(x, y, z, w, l, h, r)`` convention: ``l`` is measured
along the heading ``r`` (local x axis), ``w`` across it, and ``(x, y, z)`` is
the box center. Angles live in ``(-pi, pi]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

TWO_PI = 2.0 * math.pi
CLIP_EPS = 1e-9
AREA_EPS = 1e-12


def normalize_angle(a: float) -> float:
    """Wrap ``a`` into ``(-pi, pi]``."""
    a = float(a)
    if not math.isfinite(a):
        raise InvalidArgument(f"angle must be finite, got {a}")
    r = math.fmod(a, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    elif r > math.pi:
        r -= TWO_PI
    return r


def angle_diff_abs(a: float, b: float) -> float:
    """Absolute angular separation in ``[0, pi]``."""
    return abs(normalize_angle(float(a) - float(b)))


def rot2(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    yaw: float

    def __post_init__(self):
        for name in ("x", "y", "yaw"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidArgument(f"pose field {name} must be finite")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @classmethod
    def origin(cls) -> "Pose2":
        return cls(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class BBox7:
    x: float
    y: float
    z: float
    w: float
    l: float
    h: float
    r: float

    def __post_init__(self):
        for name in ("x", "y", "z", "w", "l", "h", "r"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidArgument(f"box field {name} must be finite, got {v}")
            object.__setattr__(self, name, float(v))
        for name in ("w", "l", "h"):
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"box dimension {name} must be > 0")
        object.__setattr__(self, "r", normalize_angle(self.r))

    def as_tuple(self) -> tuple[float, ...]:
        return (self.x, self.y, self.z, self.w, self.l, self.h, self.r)

    def replace(self, **kw) -> "BBox7":
        d = dict(zip(("x", "y", "z", "w", "l", "h", "r"), self.as_tuple()))
        d.update(kw)
        return BBox7(**d)


def box_corners_bev(b: BBox7) -> np.ndarray:
    """Footprint corners, shape (4, 2), counter-clockwise."""
    hl, hw = b.l / 2.0, b.w / 2.0
    local = np.array([[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]])
    return local @ rot2(b.r).T + np.array([b.x, b.y])


def polygon_area(poly) -> float:
    """Signed shoelace area (positive for CCW)."""
    if len(poly) < 3:
        return 0.0
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def clip_convex(subject, clip) -> list[tuple[float, float]]:
    """Sutherland-Hodgman: clip convex ``subject`` by convex CCW ``clip``."""
    out = [tuple(map(float, p)) for p in subject]
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        norm = math.hypot(ex, ey)
        inp, out = out, []

        def side(p):
            # signed distance to the edge line, positive on the inner side
            return (ex * (p[1] - ay) - ey * (p[0] - ax)) / norm

        prev = inp[-1]
        sp = side(prev)
        for cur in inp:
            sc = side(cur)
            if sc >= -CLIP_EPS:
                if sp < -CLIP_EPS:
                    out.append(_lerp(prev, cur, sp, sc))
                out.append(cur)
            elif sp >= -CLIP_EPS:
                out.append(_lerp(prev, cur, sp, sc))
            prev, sp = cur, sc
    return out


def _lerp(p, q, sp, sq):
    t = sp / (sp - sq) if sp != sq else 0.0
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _bev_intersection(a: BBox7, b: BBox7) -> float:
    reach = 0.5 * (math.hypot(a.l, a.w) + math.hypot(b.l, b.w))
    if (a.x - b.x) ** 2 + (a.y - b.y) ** 2 > reach * reach:
        return 0.0
    poly = clip_convex(box_corners_bev(a), box_corners_bev(b))
    area = abs(polygon_area(poly)) if len(poly) >= 3 else 0.0
    return 0.0 if area < AREA_EPS else area


def bev_iou(a: BBox7, b: BBox7) -> float:
    """Rotated IoU of the two box footprints."""
    inter = _bev_intersection(a, b)
    if inter == 0.0:
        return 0.0
    union = a.w * a.l + b.w * b.l - inter
    return min(1.0, max(0.0, inter / union))


def iou_3d(a: BBox7, b: BBox7) -> float:
    inter = _bev_intersection(a, b)
    if inter == 0.0:
        return 0.0
    lo = max(a.z - a.h / 2, b.z - b.h / 2)
    hi = min(a.z + a.h / 2, b.z + b.h / 2)
    dz = hi - lo
    if dz <= 0:
        return 0.0
    inter_v = inter * dz
    union = a.w * a.l * a.h + b.w * b.l * b.h - inter_v
    return min(1.0, max(0.0, inter_v / union))


def _relative(src: Pose2, dst: Pose2) -> tuple[np.ndarray, np.ndarray, float]:
    """Rotation, translation and yaw delta mapping ``src``-local to ``dst``-local."""
    R_dst_inv = rot2(-dst.yaw)
    R = R_dst_inv @ rot2(src.yaw)
    t = R_dst_inv @ np.array([src.x - dst.x, src.y - dst.y])
    return R, t, src.yaw - dst.yaw


def transform_points(pts, src: Pose2, dst: Pose2) -> np.ndarray:
    """Re-express points given in frame ``src`` in frame ``dst``.

    Accepts (N, 2) or (N, 3) arrays; z passes through unchanged.
    """
    p = np.array(pts, dtype=float, copy=True)
    if p.size == 0:
        return p.reshape(0, p.shape[1] if p.ndim == 2 else 2)
    if p.ndim == 1:
        p = p[None, :]
    R, t, _ = _relative(src, dst)
    p[:, :2] = p[:, :2] @ R.T + t
    return p


def transform_box(b: BBox7, src: Pose2, dst: Pose2) -> BBox7:
    R, t, dyaw = _relative(src, dst)
    cx, cy = R @ np.array([b.x, b.y]) + t
    return BBox7(cx, cy, b.z, b.w, b.l, b.h, b.r + dyaw)


def apply_rigid(pts, dx: float, dy: float, dyaw: float, pivot=(0.0, 0.0)) -> np.ndarray:
    """Rotate (N, 2+) points by ``dyaw`` about ``pivot`` then shift by (dx, dy)."""
    p = np.array(pts, dtype=float, copy=True)
    if p.size == 0:
        return p
    c = np.asarray(pivot, dtype=float)
    p[:, :2] = (p[:, :2] - c) @ rot2(dyaw).T + c + np.array([dx, dy])
    return p


def apply_rigid_box(b: BBox7, dx: float, dy: float, dyaw: float, pivot=(0.0, 0.0)) -> BBox7:
    (cx, cy), = apply_rigid([[b.x, b.y]], dx, dy, dyaw, pivot)
    return BBox7(cx, cy, b.z, b.w, b.l, b.h, b.r + dyaw)
