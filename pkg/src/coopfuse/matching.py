"""Cooperative box matching: cluster proposals from several vehicles, align
their headings and merge each cluster into one confidence-weighted box.

``nms_fuse`` is the greedy suppression baseline used for comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

from .errors import InvalidArgument
from .geometry import BBox7, angle_diff_abs, bev_iou, normalize_angle


@dataclass(frozen=True)
class Detection:
    box: BBox7
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise InvalidArgument(f"score must lie in [0, 1], got {self.score}")


@dataclass
class Cluster:
    members: list[Detection]
    source_ids: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.members:
            raise InvalidArgument("cluster must be non-empty")
        if not self.source_ids:
            self.source_ids = [0] * len(self.members)


@dataclass(frozen=True)
class MatchConfig:
    iou_thr: float = 0.3
    # flip the higher-scoring direction set, as the pseudo-code literally reads
    literal_flip: bool = False
    seed_order: Literal["descending_score", "input_order"] = "descending_score"

    def __post_init__(self):
        if not (0.0 < self.iou_thr < 1.0):
            raise InvalidArgument("iou_thr must lie in (0, 1)")
        if self.seed_order not in ("descending_score", "input_order"):
            raise InvalidArgument(f"unknown seed_order {self.seed_order!r}")


def cluster_proposals(
    dets: Sequence[Detection],
    cfg: MatchConfig = MatchConfig(),
    source_ids: Sequence[int] | None = None,
) -> list[Cluster]:
    """Partition detections into clusters around successive seed boxes.

    A cluster holds every remaining detection whose IoU with the seed exceeds
    ``cfg.iou_thr``; chains are not followed transitively.
    """
    n = len(dets)
    if source_ids is None:
        source_ids = [0] * n
    order = list(range(n))
    if cfg.seed_order == "descending_score":
        order.sort(key=lambda i: -dets[i].score)  # stable: ties keep input order
    remaining = order
    clusters = []
    while remaining:
        seed = remaining[0]
        taken, rest = [seed], []
        for i in remaining[1:]:
            if bev_iou(dets[i].box, dets[seed].box) > cfg.iou_thr:
                taken.append(i)
            else:
                rest.append(i)
        clusters.append(Cluster([dets[i] for i in taken], [source_ids[i] for i in taken]))
        remaining = rest
    return clusters


def align_cluster_directions(c: Cluster, cfg: MatchConfig = MatchConfig()) -> Cluster:
    scores = [d.score for d in c.members]
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    r_max = c.members[best].box.r
    near = [angle_diff_abs(d.box.r, r_max) <= math.pi / 2 for d in c.members]
    s_near = sum(s for s, k in zip(scores, near) if k)
    s_far = sum(s for s, k in zip(scores, near) if not k)
    near_wins = s_near >= s_far
    # default: flip the losing set onto the dominant direction
    flip_near = near_wins if cfg.literal_flip else not near_wins
    members = []
    for d, k in zip(c.members, near):
        if k == flip_near:
            d = Detection(d.box.replace(r=d.box.r + math.pi), d.score)
        members.append(d)
    return Cluster(members, list(c.source_ids))


def merge_cluster(c: Cluster) -> Detection:
    """Score-weighted mean of box parameters; circular mean for heading."""
    scores = [d.score for d in c.members]
    total = sum(scores)
    if total > 0:
        weights = [s / total for s in scores]
    else:
        weights = [1.0 / len(scores)] * len(scores)
    boxes = [d.box for d in c.members]

    def wmean(attr):
        return math.fsum(getattr(b, attr) * w for b, w in zip(boxes, weights))

    if all(b.r == boxes[0].r for b in boxes):
        m_r = boxes[0].r  # atan2(sin r, cos r) can drift by an ulp
    else:
        m_r = math.atan2(
            math.fsum(w * math.sin(b.r) for b, w in zip(boxes, weights)),
            math.fsum(w * math.cos(b.r) for b, w in zip(boxes, weights)),
        )
    box = BBox7(
        wmean("x"), wmean("y"), wmean("z"), wmean("w"), wmean("l"), wmean("h"),
        normalize_angle(m_r),
    )
    return Detection(box, max(scores))


def fuse_proposals(
    per_cav: Sequence[tuple[int, Sequence[Detection]]],
    cfg: MatchConfig = MatchConfig(),
) -> list[Detection]:
    """Cluster, align and merge the union of all vehicles' proposals.

    Every proposal must already be expressed in the ego frame.
    """
    dets, ids = [], []
    for cav_id, cav_dets in per_cav:
        dets.extend(cav_dets)
        ids.extend([cav_id] * len(cav_dets))
    clusters = cluster_proposals(dets, cfg, ids)
    return [merge_cluster(align_cluster_directions(c, cfg)) for c in clusters]


def nms_fuse(dets: Sequence[Detection], nms_iou: float) -> list[Detection]:
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    kept: list[Detection] = []
    for i in order:
        d = dets[i]
        if all(bev_iou(d.box, k.box) <= nms_iou for k in kept):
            kept.append(d)
    return kept
