"""Relative pose correction between the ego and one cooperative vehicle.

A coarse exhaustive grid search maximizes the number of same-class landmark
correspondences; the surviving pole and vehicle-center pairs are then used for
a closed-form least-squares rigid fit. Corrections are expressed in the ego
frame as a rotation ``dyaw`` about ``pivot`` followed by a shift ``(dx, dy)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

import numpy as np

from .errors import InvalidArgument
from .geometry import apply_rigid, normalize_angle


class LandmarkClass(IntEnum):
    POLE = 0
    WALL_FENCE = 1
    VEHICLE_CENTER = 2


@dataclass(frozen=True)
class LandmarkPoint:
    x: float
    y: float
    cls: LandmarkClass

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidArgument("landmark coordinates must be finite")
        object.__setattr__(self, "cls", LandmarkClass(self.cls))


@dataclass(frozen=True)
class ConsensusConfig:
    search_x: float = 1.0
    search_y: float = 1.0
    search_yaw: float = 6.0  # degrees
    res_xy: float = 1.0
    res_yaw: float = 1.0  # degrees
    # None: half the diagonal of a translation grid cell
    inlier_dist: float | None = None
    min_consensus: int = 3

    def __post_init__(self):
        if self.inlier_dist is None:
            object.__setattr__(self, "inlier_dist", self.res_xy / math.sqrt(2.0))
        for name in ("search_x", "search_y", "search_yaw", "res_xy", "res_yaw", "inlier_dist"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be > 0")
        if self.min_consensus < 0:
            raise InvalidArgument("min_consensus must be >= 0")


@dataclass
class PoseCorrection:
    dx: float = 0.0
    dy: float = 0.0
    dyaw: float = 0.0
    consensus: int = 0
    inliers: list[tuple[int, int]] = field(default_factory=list)
    confident: bool = False
    refined: bool = False

    def apply_points(self, pts, pivot=(0.0, 0.0)) -> np.ndarray:
        return apply_rigid(pts, self.dx, self.dy, self.dyaw, pivot)


def _axis(half_range: float, res: float) -> np.ndarray:
    n = int(math.floor(2 * half_range / res + 1e-9)) + 1
    return -half_range + res * np.arange(n)


def candidate_grid(cfg: ConsensusConfig) -> np.ndarray:
    """All (dx, dy, dyaw[rad]) candidates in lexicographic grid order."""
    xs = _axis(cfg.search_x, cfg.res_xy)
    ys = _axis(cfg.search_y, cfg.res_xy)
    yaws = np.deg2rad(_axis(cfg.search_yaw, cfg.res_yaw))
    g = np.stack(np.meshgrid(xs, ys, yaws, indexing="ij"), axis=-1)
    return g.reshape(-1, 3)


def _as_arrays(pts: Sequence[LandmarkPoint]):
    xy = np.array([[p.x, p.y] for p in pts], dtype=float).reshape(-1, 2)
    cls = np.array([int(p.cls) for p in pts], dtype=int)
    return xy, cls


def _greedy_inliers(ego_xy, ego_cls, coop_xy, coop_cls, inlier_dist):
    """One-to-one greedy association in coop index order."""
    d2 = ((coop_xy[:, None, :] - ego_xy[None, :, :]) ** 2).sum(-1)
    d2[coop_cls[:, None] != ego_cls[None, :]] = np.inf
    d2[d2 > inlier_dist * inlier_dist] = np.inf
    pairs = []
    used = np.zeros(len(ego_xy), dtype=bool)
    for j in np.flatnonzero(np.isfinite(d2).any(axis=1)):
        row = np.where(used, np.inf, d2[j])
        i = int(np.argmin(row))
        if np.isfinite(row[i]):
            used[i] = True
            pairs.append((i, int(j)))
    return pairs


def max_consensus_search(
    ego: Sequence[LandmarkPoint],
    coop: Sequence[LandmarkPoint],
    cfg: ConsensusConfig = ConsensusConfig(),
    pivot=(0.0, 0.0),
) -> PoseCorrection:
    if not ego or not coop:
        return PoseCorrection()
    ego_xy, ego_cls = _as_arrays(ego)
    coop_xy, coop_cls = _as_arrays(coop)
    best = None
    for k, (dx, dy, dyaw) in enumerate(candidate_grid(cfg)):
        moved = apply_rigid(coop_xy, dx, dy, dyaw, pivot)
        pairs = _greedy_inliers(ego_xy, ego_cls, moved, coop_cls, cfg.inlier_dist)
        key = (-len(pairs), abs(dx) + abs(dy) + abs(dyaw), k)
        if best is None or key < best[0]:
            best = (key, (float(dx), float(dy), float(dyaw)), pairs)
    _, (dx, dy, dyaw), pairs = best
    return PoseCorrection(
        dx, dy, dyaw, len(pairs), pairs, confident=len(pairs) >= cfg.min_consensus
    )


def refine_alignment(pairs, pivot=(0.0, 0.0)) -> tuple[float, float, float] | None:
    """Least-squares rigid fit of ``(ego_xy, coop_xy)`` point pairs.

    Returns ``(dx, dy, dyaw)`` such that rotating coop points by ``dyaw`` about
    ``pivot`` and shifting by ``(dx, dy)`` best matches the ego points, or
    ``None`` with fewer than two pairs.
    """
    if len(pairs) < 2:
        return None
    ego = np.array([p[0] for p in pairs], dtype=float)
    coop = np.array([p[1] for p in pairs], dtype=float)
    c = np.asarray(pivot, dtype=float)
    ego_c, coop_c = ego.mean(axis=0), coop.mean(axis=0)
    e, q = ego - ego_c, coop - coop_c
    dot = float(np.sum(q[:, 0] * e[:, 0] + q[:, 1] * e[:, 1]))
    cross = float(np.sum(q[:, 0] * e[:, 1] - q[:, 1] * e[:, 0]))
    if math.hypot(dot, cross) < 1e-12:
        dyaw = 0.0
    else:
        dyaw = math.atan2(cross, dot)
    cs, sn = math.cos(dyaw), math.sin(dyaw)
    vx, vy = coop_c - c
    t = ego_c - c - np.array([cs * vx - sn * vy, sn * vx + cs * vy])
    return float(t[0]), float(t[1]), normalize_angle(dyaw)


def correct_cpm(
    ego_landmarks: Sequence[LandmarkPoint],
    cpm_landmarks: Sequence[LandmarkPoint],
    cfg: ConsensusConfig = ConsensusConfig(),
    pivot=(0.0, 0.0),
) -> PoseCorrection:
    """Coarse consensus search followed by refinement on pole/vehicle inliers.

    ``cpm_landmarks`` must already be expressed in the ego frame using the
    shared poses. Unconfident searches yield the identity correction.
    """
    coarse = max_consensus_search(ego_landmarks, cpm_landmarks, cfg, pivot)
    if not coarse.confident:
        return PoseCorrection(consensus=coarse.consensus, inliers=coarse.inliers)
    pairs = [
        ((ego_landmarks[i].x, ego_landmarks[i].y), (cpm_landmarks[j].x, cpm_landmarks[j].y))
        for i, j in coarse.inliers
        if cpm_landmarks[j].cls != LandmarkClass.WALL_FENCE
    ]
    fine = refine_alignment(pairs, pivot)
    if fine is None:
        return coarse
    dx, dy, dyaw = fine
    return PoseCorrection(
        dx, dy, dyaw, coarse.consensus, coarse.inliers, confident=True, refined=True
    )
