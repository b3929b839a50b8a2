"""Seeded multi-vehicle scene generator standing in for a neural detector.

World layout: a square map crossed by a grid of two-lane roads. Vehicles sit
on lanes with lane-aligned headings; poles line the road edges and walls or
fences run as point strips further out. Each connected vehicle (CAV) senses
the ground-truth boxes within detection range through a distance-dependent
noise model.

Every random draw comes from a generator seeded by
``SeedSequence([seed, purpose, ...])``, so frames are reproducible and
independent of each other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, GenerationError
from .geometry import BBox7, Pose2, _bev_intersection, normalize_angle, transform_box, transform_points
from .keypoints import KeypointSet, SelectConfig, fps_sample, points_in_boxes, select_correction_points, synthetic_features
from .localization import LandmarkClass, LandmarkPoint
from .matching import Detection

_GEN, _SENSE, _LOC, _KPTS = 1, 2, 3, 4


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in key]))


@dataclass(frozen=True)
class NoiseModel:
    pos_sigma_base: float = 0.1
    pos_sigma_per_meter: float = 0.004
    yaw_sigma: float = math.radians(2.0)
    dim_sigma: float = 0.05
    miss_rate_base: float = 0.05
    miss_rate_per_meter: float = 0.003
    false_pos_rate: float = 0.5
    fp_score_max: float = 0.5
    score_decay: float = 0.01
    score_sigma: float = 0.05
    landmark_sigma: float = 0.05

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"noise.{k}", f"must be finite and >= 0, got {v}")

    @classmethod
    def zero(cls) -> "NoiseModel":
        return cls(pos_sigma_base=0, pos_sigma_per_meter=0, yaw_sigma=0, dim_sigma=0, miss_rate_base=0,
                   miss_rate_per_meter=0, false_pos_rate=0, fp_score_max=0, score_sigma=0,
                   landmark_sigma=0)


@dataclass(frozen=True)
class SimConfig:
    comm_range: float = 40.0
    det_range: float = 57.6
    max_coop: int = 4
    n_vehicles: int = 40
    n_cavs: int = 8
    map_extent: float = 160.0
    vehicle_dims_mean: tuple[float, float, float] = (4.41, 1.98, 1.64)  # l, w, h
    dim_jitter: float = 0.05
    det_noise: NoiseModel = field(default_factory=NoiseModel)
    loc_noise_xy_sigma: float = 0.4
    loc_noise_yaw_sigma: float = 4.0  # degrees
    block_size: float = 40.0
    lane_width: float = 3.5
    cav_spawn_radius: float = 44.0
    poles_per_100m: float = 6.0
    walls_per_100m: float = 2.0
    wall_point_spacing: float = 0.5
    surface_density: float = 2000.0
    clutter_points: int = 300
    max_retries: int = 500

    def __post_init__(self):
        for name in ("comm_range", "det_range", "map_extent", "block_size", "lane_width", "cav_spawn_radius"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(name, f"must be > 0, got {v}")
        for name in ("loc_noise_xy_sigma", "loc_noise_yaw_sigma", "dim_jitter", "poles_per_100m",
                     "walls_per_100m", "surface_density"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(name, f"must be >= 0, got {v}")
        if self.wall_point_spacing <= 0:
            raise ConfigError("wall_point_spacing", "must be > 0")
        if self.max_coop < 0:
            raise ConfigError("max_coop", "must be >= 0")
        if self.n_cavs < 1:
            raise ConfigError("n_cavs", "must be >= 1")
        if self.n_cavs > self.n_vehicles:
            raise ConfigError("n_cavs", "must not exceed n_vehicles")
        if len(self.vehicle_dims_mean) != 3 or min(self.vehicle_dims_mean) <= 0:
            raise ConfigError("vehicle_dims_mean", "needs three positive values (l, w, h)")


@dataclass
class Frame:
    cfg: SimConfig
    seed: int
    gt_boxes: list[BBox7]  # world frame; CAVs are gt_boxes[cav_ids[k]]
    cav_ids: list[int]
    coop: list[int]  # CAV indices (into cav_ids) cooperating with the ego, ego = 0
    cav_true_poses: list[Pose2]
    cav_noisy_poses: list[Pose2]
    world_landmarks: list[LandmarkPoint]
    detections: list[list[Detection]] = field(default_factory=list)  # sender-local
    landmarks: list[list[LandmarkPoint]] = field(default_factory=list)  # sender-local

    ego: int = 0


def _lanes(cfg: SimConfig):
    """(axis, offset, heading) per lane; axis 0 runs along x, 1 along y."""
    half = cfg.map_extent / 2
    k = int(half // cfg.block_size)
    roads = [i * cfg.block_size for i in range(-k, k + 1)]
    hw = cfg.lane_width / 2
    lanes = []
    for c in roads:
        lanes += [(0, c - hw, 0.0), (0, c + hw, math.pi)]
        lanes += [(1, c + hw, math.pi / 2), (1, c - hw, -math.pi / 2)]
    return roads, lanes


def _vehicle_box(rng, cfg: SimConfig, lane, s: float) -> BBox7:
    axis, off, yaw = lane
    l0, w0, h0 = cfg.vehicle_dims_mean
    j = cfg.dim_jitter
    l, w, h = (d * (1 + rng.uniform(-j, j)) for d in (l0, w0, h0))
    x, y = (s, off) if axis == 0 else (off, s)
    return BBox7(x, y, h / 2, w, l, h, yaw)


def _place(rng, cfg, lanes, boxes, center, radius) -> BBox7:
    half = cfg.map_extent / 2
    for _ in range(cfg.max_retries):
        lane = lanes[rng.integers(len(lanes))]
        axis, off, _ = lane
        if abs(off - (center[1] if axis == 0 else center[0])) > radius:
            continue
        along = center[0] if axis == 0 else center[1]
        lo, hi = max(-half, along - radius), min(half, along + radius)
        if lo >= hi:
            continue
        b = _vehicle_box(rng, cfg, lane, rng.uniform(lo, hi))
        if math.hypot(b.x - center[0], b.y - center[1]) > radius:
            continue
        grown = b.replace(l=b.l + 1.0, w=b.w + 0.4)
        if all(_bev_intersection(grown, o) == 0.0 for o in boxes):
            return b
    raise GenerationError(f"could not place vehicle {len(boxes)} after {cfg.max_retries} tries")


def _landmarks(rng, cfg: SimConfig, roads) -> list[LandmarkPoint]:
    half = cfg.map_extent / 2
    hw = cfg.lane_width
    pole_off, wall_off = hw + 2.5, hw + 5.5
    clear = wall_off + 1.0  # keep landmarks out of intersections

    def free(s):
        return all(abs(s - c) > clear for c in roads)

    out = []
    length = cfg.map_extent
    for c in roads:
        for axis in (0, 1):
            for side in (-1, 1):
                n = rng.poisson(cfg.poles_per_100m * length / 100)
                for s in rng.uniform(-half, half, n):
                    if free(s):
                        xy = (s, c + side * pole_off) if axis == 0 else (c + side * pole_off, s)
                        out.append(LandmarkPoint(*xy, LandmarkClass.POLE))
                n = rng.poisson(cfg.walls_per_100m * length / 100)
                for s0, seg in zip(rng.uniform(-half, half, n), rng.uniform(4.0, 12.0, n)):
                    for s in np.arange(s0, min(half, s0 + seg), cfg.wall_point_spacing):
                        if free(s):
                            xy = (s, c + side * wall_off) if axis == 0 else (c + side * wall_off, s)
                            out.append(LandmarkPoint(*xy, LandmarkClass.WALL_FENCE))
    return out


def _pose_of(b: BBox7) -> Pose2:
    return Pose2(b.x, b.y, b.r)


def generate_frame(cfg: SimConfig, seed: int) -> Frame:
    """Ground truth, CAV selection and per-CAV sensing for one timestep.

    Localization noise is not applied here; see :func:`inject_loc_noise`.
    """
    rng = _rng(seed, _GEN)
    roads, lanes = _lanes(cfg)
    boxes: list[BBox7] = []
    boxes.append(_place(rng, cfg, lanes, boxes, (0.0, 0.0), 15.0))
    ego_xy = (boxes[0].x, boxes[0].y)
    for _ in range(1, cfg.n_cavs):
        boxes.append(_place(rng, cfg, lanes, boxes, ego_xy, cfg.cav_spawn_radius))
    for _ in range(cfg.n_cavs, cfg.n_vehicles):
        boxes.append(_place(rng, cfg, lanes, boxes, (0.0, 0.0), cfg.map_extent))

    cav_ids = list(range(cfg.n_cavs))
    poses = [_pose_of(boxes[i]) for i in cav_ids]
    in_range = [k for k in range(1, len(cav_ids))
                if math.hypot(poses[k].x - poses[0].x, poses[k].y - poses[0].y) <= cfg.comm_range]
    if len(in_range) > cfg.max_coop:
        in_range = sorted(rng.choice(in_range, cfg.max_coop, replace=False).tolist())

    frame = Frame(cfg, seed, boxes, cav_ids, in_range, poses, list(poses), _landmarks(rng, cfg, roads))
    for k in range(len(cav_ids)):
        dets, lms = sense(frame, k, cfg.det_noise, seed)
        frame.detections.append(dets)
        frame.landmarks.append(lms)
    return frame


def sense(frame: Frame, cav_index: int, noise: NoiseModel, seed: int):
    """Noisy detections and landmark observations of one CAV, in its frame."""
    cfg = frame.cfg
    rng = _rng(seed, _SENSE, cav_index)
    pose = frame.cav_true_poses[cav_index]
    world = Pose2.origin()
    self_id = frame.cav_ids[cav_index]
    dets = []
    for j, gt in enumerate(frame.gt_boxes):
        if j == self_id:
            continue
        local = transform_box(gt, world, pose)
        d = math.hypot(local.x, local.y)
        if d > cfg.det_range:
            continue
        u = rng.random()
        z = rng.standard_normal(7)
        if u < min(1.0, noise.miss_rate_base + noise.miss_rate_per_meter * d):
            continue
        sig = noise.pos_sigma_base + noise.pos_sigma_per_meter * d
        dims = [max(0.1, v + noise.dim_sigma * e) for v, e in zip((local.w, local.l, local.h), z[3:6])]
        box = BBox7(local.x + sig * z[0], local.y + sig * z[1], local.z, *dims, local.r + noise.yaw_sigma * z[2])
        if math.hypot(box.x, box.y) > cfg.det_range:
            continue
        score = min(1.0, max(0.0, math.exp(-noise.score_decay * d) + noise.score_sigma * z[6]))
        dets.append(Detection(box, score))

    l0, w0, h0 = cfg.vehicle_dims_mean
    for _ in range(rng.poisson(noise.false_pos_rate)):
        rad = cfg.det_range * math.sqrt(rng.random())
        ang, yaw = rng.uniform(-math.pi, math.pi, 2)
        box = BBox7(rad * math.cos(ang), rad * math.sin(ang), h0 / 2, w0, l0, h0, yaw)
        dets.append(Detection(box, float(rng.uniform(0.0, noise.fp_score_max))))

    lms = []
    if frame.world_landmarks:
        xy = np.array([[p.x, p.y] for p in frame.world_landmarks])
        local = transform_points(xy, world, pose)
        jitter = noise.landmark_sigma * rng.standard_normal(local.shape)
        for p, lp, e in zip(frame.world_landmarks, local, jitter):
            if math.hypot(lp[0], lp[1]) <= cfg.det_range:
                lms.append(LandmarkPoint(lp[0] + e[0], lp[1] + e[1], p.cls))
    return dets, lms


def inject_loc_noise(frame: Frame, cfg: SimConfig | None = None, seed: int | None = None) -> Frame:
    """Copy of ``frame`` whose shared poses carry independent Gaussian errors
    (ego included)."""
    cfg = cfg or frame.cfg
    seed = frame.seed if seed is None else seed
    rng = _rng(seed, _LOC)
    sxy, syaw = cfg.loc_noise_xy_sigma, math.radians(cfg.loc_noise_yaw_sigma)
    noisy = []
    for p in frame.cav_true_poses:
        e = rng.standard_normal(3)
        noisy.append(Pose2(p.x + sxy * e[0], p.y + sxy * e[1], p.yaw + syaw * e[2]))
    return replace(frame, cav_noisy_poses=noisy)


def _surface_points(rng, frame: Frame, cav_index: int) -> np.ndarray:
    """Synthetic LiDAR-like returns on vehicle side faces plus ground clutter,
    in the CAV frame."""
    cfg = frame.cfg
    pose = frame.cav_true_poses[cav_index]
    self_id = frame.cav_ids[cav_index]
    chunks = []
    for j, gt in enumerate(frame.gt_boxes):
        if j == self_id:
            continue
        b = transform_box(gt, Pose2.origin(), pose)
        d = math.hypot(b.x, b.y)
        if d > cfg.det_range:
            continue
        n = int(np.clip(round(cfg.surface_density / max(d, 1.0)), 4, 300))
        per = 2 * (b.l + b.w)
        s = rng.uniform(0, per, n)
        u = np.where(s < b.l, s - b.l / 2,
             np.where(s < b.l + b.w, b.l / 2,
             np.where(s < 2 * b.l + b.w, b.l / 2 - (s - b.l - b.w), -b.l / 2)))
        v = np.where(s < b.l, -b.w / 2,
             np.where(s < b.l + b.w, s - b.l - b.w / 2,
             np.where(s < 2 * b.l + b.w, b.w / 2, b.w / 2 - (s - 2 * b.l - b.w))))
        c, sn = math.cos(b.r), math.sin(b.r)
        pts = np.stack([b.x + c * u - sn * v, b.y + sn * u + c * v,
                        rng.uniform(b.z - b.h / 2, b.z + b.h / 2, n)], axis=1)
        chunks.append(pts)
    if cfg.clutter_points:
        rad = cfg.det_range * np.sqrt(rng.random(cfg.clutter_points))
        ang = rng.uniform(-math.pi, math.pi, cfg.clutter_points)
        chunks.append(np.stack([rad * np.cos(ang), rad * np.sin(ang),
                                rng.uniform(0.0, 2.0, cfg.clutter_points)], axis=1))
    return np.concatenate(chunks) if chunks else np.zeros((0, 3))


def build_cpm(frame: Frame, cav_index: int, select_cfg: SelectConfig = SelectConfig()):
    """Assemble the message a CAV would share, in its own frame."""
    from .cpm import Cpm

    rng = _rng(frame.seed, _KPTS, cav_index)
    dets = frame.detections[cav_index]
    pts = _surface_points(rng, frame, cav_index)
    idx = points_in_boxes(pts, [d.box for d in dets]) if len(pts) else np.zeros(0, int)
    if len(idx):
        idx = idx[np.sort(fps_sample(pts[idx], select_cfg.n_kpts))]
        coords = pts[idx]
        kps = KeypointSet(coords, synthetic_features(coords, select_cfg.n_ch))
    else:
        kps = KeypointSet.empty(select_cfg.n_ch)
    centers = [LandmarkPoint(d.box.x, d.box.y, LandmarkClass.VEHICLE_CENTER) for d in dets]
    corr = select_correction_points(frame.landmarks[cav_index] + centers, select_cfg.k_p, select_cfg.k_fw)
    return Cpm(frame.cav_ids[cav_index], frame.cav_noisy_poses[cav_index], list(dets), kps, corr)


def cav_box(frame: Frame, cav_index: int) -> BBox7:
    return frame.gt_boxes[frame.cav_ids[cav_index]]


def frame_seed(base_seed: int, index: int) -> int:
    """Per-frame seed derived from a base seed; stable across platforms."""
    return int(np.random.SeedSequence([base_seed & 0xFFFFFFFFFFFFFFFF, index]).generate_state(1, np.uint64)[0])
