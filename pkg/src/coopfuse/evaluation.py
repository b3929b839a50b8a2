"""Average precision evaluation and the end-to-end fusion pipelines.

A :class:`Scene` is everything the ego vehicle holds for one frame: its own
message, the received cooperative messages and the ground truth in its frame.
Scenes come either from simulated frames (messages are passed through the
wire codec) or from frame containers on disk.
"""
from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .cpm import Cpm, decode_cpm, encode_cpm
from .errors import InvalidArgument
from .geometry import BBox7, Pose2, apply_rigid_box, bev_iou, transform_box, transform_points
from .keypoints import SelectConfig
from .localization import ConsensusConfig, LandmarkPoint, correct_cpm
from .matching import Detection, MatchConfig, fuse_proposals, nms_fuse
from .simulator import Frame, build_cpm, cav_box

PIPELINES = ("no_fusion", "nms", "alg1", "alg1_with_correction")
DEFAULT_IOUS = (0.3, 0.5, 0.7)


@dataclass(frozen=True)
class PrPoint:
    recall: float
    precision: float
    score_threshold: float


@dataclass
class ApResult:
    iou_thr: float
    ap: float
    n_gt: int
    curve: list[PrPoint] = field(default_factory=list)
    n_pred: int = 0
    pipeline: str = ""
    n_v: int = 0
    n_frames: int = 0


def match_to_gt(preds: Sequence[Detection], gt: Sequence[BBox7], iou_thr: float) -> list[bool]:
    """Greedy score-ordered one-to-one matching; flags in input order."""
    order = sorted(range(len(preds)), key=lambda i: -preds[i].score)
    free = [True] * len(gt)
    flags = [False] * len(preds)
    for i in order:
        best, best_iou = -1, -1.0
        for j, g in enumerate(gt):
            if free[j]:
                iou = bev_iou(preds[i].box, g)
                if iou > best_iou:
                    best, best_iou = j, iou
        if best >= 0 and best_iou >= iou_thr:
            free[best] = False
            flags[i] = True
    return flags


def ap_from_flags(scores: Sequence[float], flags: Sequence[bool], n_gt: int, iou_thr: float = 0.0) -> ApResult:
    """All-point interpolated AP of a pooled list of scored TP/FP flags."""
    n = len(scores)
    if n_gt == 0:
        return ApResult(iou_thr, 1.0 if n == 0 else 0.0, 0, [], n)
    if n == 0:
        return ApResult(iou_thr, 0.0, n_gt, [], 0)
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    hits = np.asarray(flags, dtype=bool)[order]
    tp = np.cumsum(hits)
    rank = np.arange(1, n + 1)
    curve = [PrPoint(float(t / n_gt), float(t / r), float(scores[k]))
             for t, r, k in zip(tp, rank, order)]

    # exact rational area: each TP raises recall by 1/n_gt at the best
    # precision reachable from that rank onwards
    area, best = Fraction(0), Fraction(0)
    for k in range(n - 1, -1, -1):
        best = max(best, Fraction(int(tp[k]), k + 1))
        if hits[k]:
            area += best
    ap = float(area / n_gt)
    return ApResult(iou_thr, ap, n_gt, curve, n)


def average_precision(preds: Sequence[Detection], gt: Sequence[BBox7], iou_thr: float) -> ApResult:
    flags = match_to_gt(preds, gt, iou_thr)
    return ap_from_flags([p.score for p in preds], flags, len(gt), iou_thr)


@dataclass
class Scene:
    seed: int
    det_range: float
    ego: Cpm
    coops: list[Cpm]
    gt: list[BBox7]  # ego (true) frame
    self_dims: dict[int, tuple[float, float, float]]  # sender_id -> (w, l, h)
    cfg: object = None


def _roundtrip(m: Cpm) -> Cpm:
    return decode_cpm(encode_cpm(m))


def scene_from_frame(frame: Frame, select_cfg: SelectConfig = SelectConfig()) -> Scene:
    ids = [frame.ego] + list(frame.coop)
    msgs = [_roundtrip(build_cpm(frame, k, select_cfg)) for k in ids]
    ego_pose = frame.cav_true_poses[frame.ego]
    gt = [transform_box(b, Pose2.origin(), ego_pose) for b in frame.gt_boxes]
    dims = {frame.cav_ids[k]: (cav_box(frame, k).w, cav_box(frame, k).l, cav_box(frame, k).h) for k in ids}
    return Scene(frame.seed, frame.cfg.det_range, msgs[0], msgs[1:], gt, dims, frame.cfg)


def _self_box(dims) -> BBox7:
    w, l, h = dims
    return BBox7(0.0, 0.0, h / 2, w, l, h, 0.0)


def select_coops(scene: Scene, n_v: int) -> list[Cpm] | None:
    """Random ``n_v`` of the received messages, or None if too few."""
    if len(scene.coops) < n_v:
        return None
    if n_v == len(scene.coops):
        return list(scene.coops)
    rng = np.random.default_rng(np.random.SeedSequence([scene.seed, 7, n_v]))
    pick = sorted(rng.choice(len(scene.coops), n_v, replace=False).tolist())
    return [scene.coops[i] for i in pick]


@dataclass(frozen=True)
class PipelineConfig:
    match: MatchConfig = MatchConfig()
    consensus: ConsensusConfig = ConsensusConfig()
    nms_iou: float = 0.01
    # predictions overlapping a shared vehicle's own box above this are dropped
    self_box_iou: float = 0.01


def run_pipeline(scene: Scene, pipeline: str, coops: Sequence[Cpm],
                 pcfg: PipelineConfig = PipelineConfig()) -> list[Detection]:
    """Fused predictions in the ego frame, restricted to the detection range."""
    if pipeline not in PIPELINES:
        raise InvalidArgument(f"unknown pipeline {pipeline!r}")
    ego_pose = scene.ego.pose
    per_cav = [(scene.ego.sender_id, list(scene.ego.proposals))]
    self_boxes = [_self_box(scene.self_dims[scene.ego.sender_id])]

    for m in coops if pipeline != "no_fusion" else []:
        boxes = [transform_box(d.box, m.pose, ego_pose) for d in m.proposals]
        own = transform_box(_self_box(scene.self_dims[m.sender_id]), m.pose, ego_pose)
        if pipeline == "alg1_with_correction":
            pivot = transform_points([[0.0, 0.0]], m.pose, ego_pose)[0]
            xy = transform_points([[p.x, p.y] for p in m.correction_points], m.pose, ego_pose)
            lms = [LandmarkPoint(q[0], q[1], p.cls) for q, p in zip(xy, m.correction_points)]
            corr = correct_cpm(scene.ego.correction_points, lms, pcfg.consensus, pivot)
            if corr.confident:
                boxes = [apply_rigid_box(b, corr.dx, corr.dy, corr.dyaw, pivot) for b in boxes]
                own = apply_rigid_box(own, corr.dx, corr.dy, corr.dyaw, pivot)
        per_cav.append((m.sender_id, [Detection(b, d.score) for b, d in zip(boxes, m.proposals)]))
        self_boxes.append(own)

    if len(per_cav) == 1:
        fused = per_cav[0][1]
    elif pipeline == "nms":
        fused = nms_fuse([d for _, ds in per_cav for d in ds], pcfg.nms_iou)
    else:
        fused = fuse_proposals(per_cav, pcfg.match)

    out = [Detection(b, 1.0) for b in self_boxes]
    out += [d for d in fused if all(bev_iou(d.box, s) <= pcfg.self_box_iou for s in self_boxes)]
    return [d for d in out if math.hypot(d.box.x, d.box.y) <= scene.det_range]


def eval_gt(scene: Scene) -> list[BBox7]:
    return [b for b in scene.gt if math.hypot(b.x, b.y) <= scene.det_range]


def frame_predictions(scene: Scene, pipelines: Sequence[str], n_v: int,
                      pcfg: PipelineConfig = PipelineConfig()) -> dict[str, list[Detection]] | None:
    coops = select_coops(scene, n_v)
    if coops is None:
        return None
    return {p: run_pipeline(scene, p, coops, pcfg) for p in pipelines}


def evaluate_predictions(per_frame: Iterable[tuple[list[Detection], list[BBox7]]],
                         iou_thr: float) -> ApResult:
    """Pool matches over frames and rank globally by score."""
    scores, flags, n_gt = [], [], 0
    for preds, gt in per_frame:
        flags += match_to_gt(preds, gt, iou_thr)
        scores += [p.score for p in preds]
        n_gt += len(gt)
    return ap_from_flags(scores, flags, n_gt, iou_thr)


def evaluate_run(frames: Sequence[Frame | Scene], pipelines: Sequence[str] = PIPELINES,
                 iou_list: Sequence[float] = DEFAULT_IOUS, n_v: int = 4,
                 pcfg: PipelineConfig = PipelineConfig(),
                 select_cfg: SelectConfig = SelectConfig()) -> list[ApResult]:
    """One AP row per pipeline and IoU threshold over the frames having at
    least ``n_v`` cooperative messages."""
    cfgs = {id(f.cfg): f.cfg for f in frames if f.cfg is not None}
    if len({repr(c) for c in cfgs.values()}) > 1:
        raise InvalidArgument("frames were generated with different configurations")
    scenes = [f if isinstance(f, Scene) else scene_from_frame(f, select_cfg) for f in frames]
    preds = []
    for s in scenes:
        p = frame_predictions(s, pipelines, n_v, pcfg)
        if p is not None:
            preds.append((p, eval_gt(s)))
    return tabulate(preds, pipelines, iou_list, n_v)


def tabulate(preds, pipelines, iou_list, n_v) -> list[ApResult]:
    rows = []
    for p in pipelines:
        for thr in iou_list:
            r = evaluate_predictions(((fp[p], gt) for fp, gt in preds), thr)
            r.pipeline, r.n_v = p, n_v
            rows.append(r)
    return rows
