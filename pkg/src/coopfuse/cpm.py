"""Collective perception message: data model, binary codec and size model.

Wire layout (little-endian)::

    header (36 B)   "CPM1" | u8 version | u32 sender_id | f32 x, y, yaw |
                    u16 n_prop | u16 n_kpts | u16 n_corr | u8 n_ch |
                    f32 feat_offset | f32 feat_scale
    proposal (15 B) i16 x, y, z, w, l, h (0.01 m) | i16 r (1e-4 rad) | u8 score
    keypoint        i16 x, y, z (0.01 m) | n_ch x u8 feature
    correction (5B) u8 class | i16 x, y (0.01 m)

All rounding is half away from zero. Features share one affine u8 quantizer
per message: ``value = feat_offset + q * feat_scale``.

A frame container is a concatenation of ``u32 length`` + CPM records.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DecodeError, EncodeError
from .geometry import BBox7, Pose2
from .keypoints import KeypointSet
from .localization import LandmarkClass, LandmarkPoint
from .matching import Detection

MAGIC = b"CPM1"
VERSION = 1
HEADER = struct.Struct("<4sBI3fHHHBff")
HEADER_SIZE = HEADER.size  # 36
PROPOSAL_SIZE = 15
CORRECTION_SIZE = 5
GRID_HEADER_SIZE = 16

POS_Q = 0.01
YAW_Q = 1e-4
I16_MIN, I16_MAX = -32768, 32767
U16_MAX = 65535
# 31416 * 1e-4 exceeds pi; both +/-31416 decode to the same wrapped heading
YAW_WRAP_Q = 31416

_PROP = np.dtype([("x", "<i2"), ("y", "<i2"), ("z", "<i2"), ("w", "<i2"),
                  ("l", "<i2"), ("h", "<i2"), ("r", "<i2"), ("s", "u1")])
_CORR = np.dtype([("c", "u1"), ("x", "<i2"), ("y", "<i2")])

assert HEADER_SIZE == 36 and _PROP.itemsize == PROPOSAL_SIZE and _CORR.itemsize == 5


@dataclass
class Cpm:
    sender_id: int
    pose: Pose2
    proposals: list[Detection] = field(default_factory=list)
    keypoints: KeypointSet = field(default_factory=lambda: KeypointSet.empty(32))
    correction_points: list[LandmarkPoint] = field(default_factory=list)

    @property
    def n_ch(self) -> int:
        return self.keypoints.n_ch


@dataclass(frozen=True)
class GridMapPayload:
    width_cells: int
    height_cells: int
    n_ch: int
    values: np.ndarray | None = None  # (H, W, n_ch); only needed for the sparse model


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _fixed(values, quantum: float, what: str) -> np.ndarray:
    q = round_half_away(np.asarray(values, dtype=float) / quantum)
    if q.size and (q.min() < I16_MIN or q.max() > I16_MAX):
        raise EncodeError(f"{what} out of i16 range at {quantum} quantum")
    return q.astype(np.int16)


def _f32_bits(bits: int) -> float:
    return float(np.array(bits, dtype=np.uint32).view(np.float32))


def _min_scale(off: float, hi: float) -> np.float32:
    """Smallest f32 scale whose decoded top code ``off + 255 * scale`` (f64,
    as the decoder computes it) reaches ``hi``."""
    # positive f32 values are ordered like their bit patterns
    lo_b, hi_b = 0, 0x7F800000
    while lo_b < hi_b:
        mid = (lo_b + hi_b) // 2
        if off + 255.0 * _f32_bits(mid) >= hi:
            hi_b = mid
        else:
            lo_b = mid + 1
    return np.float32(_f32_bits(lo_b))


def _feature_quantizer(features: np.ndarray) -> tuple[float, float]:
    """f32 offset/scale such that every value lands in [0, 255], the
    reconstruction error stays within scale / 2 and re-quantizing the decoded
    values reproduces the same pair."""
    if features.size == 0:
        return 0.0, 0.0
    lo, hi = float(features.min()), float(features.max())
    off = np.float32(lo)
    if float(off) > lo:
        off = np.nextafter(off, np.float32(-np.inf))
    if hi == float(off):
        return float(off), 0.0
    scale = _min_scale(float(off), hi)
    ulp = float(np.nextafter(off, np.float32(np.inf))) - float(off)
    if hi - float(off) >= ulp:
        # keep the minimum on code 0 so the decoded minimum floors back to off
        scale = max(scale, np.float32(2 * ulp))
    elif float(off) + 255.0 * float(scale) >= float(off) + ulp:
        # the top code would round up into the next offset; stay just below it
        # and take the smallest scale decoding to the same top value
        top = float(off) + ulp
        below = float(np.nextafter(_min_scale(float(off), top), np.float32(0)))
        scale = _min_scale(float(off), float(off) + 255.0 * below)
    return float(off), float(scale)


def _f32_yaw(yaw: float) -> float:
    # keep the f32 heading inside (-pi, pi] so decode/encode is a fixed point
    y = np.float32(yaw)
    if not -math.pi < float(y) <= math.pi:
        y = np.nextafter(y, np.float32(0))
    return float(y)


def cpm_size(m: Cpm) -> int:
    _check_counts(m)
    return (HEADER_SIZE + PROPOSAL_SIZE * len(m.proposals)
            + (6 + m.n_ch) * len(m.keypoints) + CORRECTION_SIZE * len(m.correction_points))


def size_from_counts(n_prop: int, n_kpts: int, n_ch: int, n_corr: int) -> int:
    return HEADER_SIZE + PROPOSAL_SIZE * n_prop + (6 + n_ch) * n_kpts + CORRECTION_SIZE * n_corr


def _check_counts(m: Cpm):
    for name, n in (("proposals", len(m.proposals)), ("keypoints", len(m.keypoints)),
                    ("correction_points", len(m.correction_points))):
        if n > U16_MAX:
            raise EncodeError(f"{name} count {n} exceeds u16")
    if not 1 <= m.n_ch <= 255:
        raise EncodeError(f"n_ch {m.n_ch} does not fit u8")
    if not 0 <= m.sender_id <= 0xFFFFFFFF:
        raise EncodeError("sender_id does not fit u32")


def encode_cpm(m: Cpm) -> bytes:
    _check_counts(m)
    feats = m.keypoints.features
    off, scale = _feature_quantizer(feats)
    header = HEADER.pack(
        MAGIC, VERSION, m.sender_id, m.pose.x, m.pose.y, _f32_yaw(m.pose.yaw),
        len(m.proposals), len(m.keypoints), len(m.correction_points), m.n_ch, off, scale,
    )

    props = np.zeros(len(m.proposals), dtype=_PROP)
    if m.proposals:
        arr = np.array([d.box.as_tuple() for d in m.proposals])
        for k, name in enumerate("xyzwlh"):
            props[name] = _fixed(arr[:, k], POS_Q, f"proposal.{name}")
        for name in "wlh":
            if (props[name] <= 0).any():
                raise EncodeError(f"proposal.{name} quantizes to a non-positive size")
        rq = round_half_away(arr[:, 6] / YAW_Q)
        rq[rq == -YAW_WRAP_Q] = YAW_WRAP_Q
        props["r"] = rq.astype(np.int16)
        props["s"] = round_half_away(np.array([d.score for d in m.proposals]) * 255).astype(np.uint8)

    n_k = len(m.keypoints)
    kp = np.zeros((n_k, 6 + m.n_ch), dtype=np.uint8)
    if n_k:
        xyz = _fixed(m.keypoints.coords, POS_Q, "keypoint position")
        kp[:, :6] = xyz.astype("<i2").view(np.uint8).reshape(n_k, 6)
        if scale > 0:
            q = round_half_away((feats - off) / scale)
        else:
            q = np.zeros_like(feats)
        kp[:, 6:] = np.clip(q, 0, 255).astype(np.uint8)

    corr = np.zeros(len(m.correction_points), dtype=_CORR)
    if m.correction_points:
        corr["c"] = [int(p.cls) for p in m.correction_points]
        xy = np.array([[p.x, p.y] for p in m.correction_points])
        corr["x"] = _fixed(xy[:, 0], POS_Q, "correction_point.x")
        corr["y"] = _fixed(xy[:, 1], POS_Q, "correction_point.y")

    return header + props.tobytes() + kp.tobytes() + corr.tobytes()


def decode_cpm(data: bytes, base_offset: int = 0) -> Cpm:
    """Inverse of :func:`encode_cpm` up to quantization.

    ``base_offset`` shifts reported error offsets when decoding from a
    container.
    """
    data = bytes(data)
    if len(data) < HEADER_SIZE:
        raise DecodeError(f"truncated header: {len(data)} of {HEADER_SIZE} bytes", base_offset + len(data))
    (magic, version, sender, px, py, pyaw, n_prop, n_k, n_corr, n_ch, off, scale) = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DecodeError(f"bad magic {magic!r}", base_offset)
    if version != VERSION:
        raise DecodeError(f"unsupported version {version}", base_offset + 4)
    if n_ch == 0:
        raise DecodeError("n_ch must be >= 1", base_offset + 29)
    expected = size_from_counts(n_prop, n_k, n_ch, n_corr)
    if len(data) < expected:
        raise DecodeError(f"truncated body: {len(data)} of {expected} bytes", base_offset + len(data))
    if len(data) > expected:
        raise DecodeError(f"{len(data) - expected} trailing bytes", base_offset + expected)

    pos = HEADER_SIZE
    props = np.frombuffer(data, dtype=_PROP, count=n_prop, offset=pos)
    pos += PROPOSAL_SIZE * n_prop
    proposals = []
    for k, p in enumerate(props):
        try:
            box = BBox7(*(float(p[c]) * POS_Q for c in "xyzwlh"), float(p["r"]) * YAW_Q)
        except ValueError as e:
            raise DecodeError(f"invalid proposal: {e}", base_offset + HEADER_SIZE + k * PROPOSAL_SIZE) from None
        proposals.append(Detection(box, int(p["s"]) / 255.0))

    raw = np.frombuffer(data, dtype=np.uint8, count=n_k * (6 + n_ch), offset=pos).reshape(n_k, 6 + n_ch)
    pos += n_k * (6 + n_ch)
    coords = raw[:, :6].copy().view("<i2").astype(float).reshape(n_k, 3) * POS_Q
    features = off + raw[:, 6:].astype(float) * scale

    corr = np.frombuffer(data, dtype=_CORR, count=n_corr, offset=pos)
    points = []
    for k, c in enumerate(corr):
        try:
            cls = LandmarkClass(int(c["c"]))
        except ValueError:
            raise DecodeError(f"unknown landmark class {int(c['c'])}", base_offset + pos + 5 * k) from None
        points.append(LandmarkPoint(float(c["x"]) * POS_Q, float(c["y"]) * POS_Q, cls))

    return Cpm(sender, Pose2(px, py, pyaw), proposals, KeypointSet(coords, features), points)


def gridmap_size(g: GridMapPayload, sparse: bool = False) -> int:
    """Modeled byte size of sharing a BEV feature map instead of keypoints."""
    if not sparse:
        return GRID_HEADER_SIZE + g.width_cells * g.height_cells * g.n_ch
    if g.values is None:
        raise ValueError("sparse size needs cell values")
    v = np.asarray(g.values).reshape(g.height_cells, g.width_cells, g.n_ch)
    nonzero = int(np.count_nonzero(np.any(v != 0, axis=-1)))
    return GRID_HEADER_SIZE + nonzero * (4 + g.n_ch)


def sparse_gridmap_size(n_nonzero: int, n_ch: int) -> int:
    return GRID_HEADER_SIZE + n_nonzero * (4 + n_ch)


def dense_grid_for_range(det_range: float, cell: float, n_ch: int) -> GridMapPayload:
    """Square BEV map covering ``[-det_range, det_range]`` at ``cell`` meters."""
    n = int(math.ceil(2 * det_range / cell - 1e-9))
    return GridMapPayload(n, n, n_ch)


def write_container(path, messages: Sequence[bytes]) -> None:
    with open(path, "wb") as f:
        for m in messages:
            f.write(struct.pack("<I", len(m)))
            f.write(m)


def read_container(path) -> list[Cpm]:
    return [decode_cpm(b, off) for off, b in iter_container(Path(path).read_bytes())]


def iter_container(data: bytes):
    """Yield ``(offset, record_bytes)``; raises DecodeError on truncation."""
    pos = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise DecodeError("truncated record length", pos)
        (n,) = struct.unpack_from("<I", data, pos)
        if pos + 4 + n > len(data):
            raise DecodeError(f"record needs {n} bytes, {len(data) - pos - 4} remain", pos)
        yield pos + 4, data[pos + 4 : pos + 4 + n]
        pos += 4 + n
