"""On-disk frames: a CPM container (ego message first) plus a text sidecar.

Sidecar format, one ground-truth box per line in the ego frame::

    # coopfuse-frame 1
    # seed <int>
    # det_range <meters>
    # cav <sender_id> <w> <l> <h>      (one line per sender in the container)
    x y z w l h r
"""
from __future__ import annotations

from pathlib import Path

from .cpm import encode_cpm, read_container, write_container
from .errors import DecodeError
from .evaluation import Scene
from .geometry import BBox7

CONTAINER_SUFFIX = ".cpms"
SIDECAR_SUFFIX = ".gt.txt"


def frame_paths(out_dir, index: int) -> tuple[Path, Path]:
    stem = Path(out_dir) / f"frame_{index:06d}"
    return stem.with_suffix(CONTAINER_SUFFIX), Path(f"{stem}{SIDECAR_SUFFIX}")


def write_scene(scene: Scene, out_dir, index: int) -> tuple[Path, Path]:
    container, sidecar = frame_paths(out_dir, index)
    msgs = [scene.ego] + list(scene.coops)
    write_container(container, [encode_cpm(m) for m in msgs])
    lines = ["# coopfuse-frame 1", f"# seed {scene.seed}", f"# det_range {scene.det_range!r}"]
    for m in msgs:
        w, l, h = scene.self_dims[m.sender_id]
        lines.append(f"# cav {m.sender_id} {w:.6f} {l:.6f} {h:.6f}")
    lines += [" ".join(f"{v:.6f}" for v in b.as_tuple()) for b in scene.gt]
    sidecar.write_text("\n".join(lines) + "\n")
    return container, sidecar


def read_scene(container, sidecar=None) -> Scene:
    container = Path(container)
    if sidecar is None:
        sidecar = Path(str(container)[: -len(CONTAINER_SUFFIX)] + SIDECAR_SUFFIX)
    msgs = read_container(container)
    if not msgs:
        raise DecodeError("container holds no messages", 0)
    seed, det_range, dims, gt = 0, None, {}, []
    for n, line in enumerate(Path(sidecar).read_text().splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        try:
            if parts[0] == "#":
                if parts[1:2] == ["seed"]:
                    seed = int(parts[2])
                elif parts[1:2] == ["det_range"]:
                    det_range = float(parts[2])
                elif parts[1:2] == ["cav"]:
                    dims[int(parts[2])] = tuple(float(v) for v in parts[3:6])
                continue
            gt.append(BBox7(*(float(v) for v in parts)))
        except (ValueError, TypeError, IndexError) as e:
            raise ValueError(f"{sidecar}:{n}: {e}") from None
    if det_range is None:
        raise ValueError(f"{sidecar}: missing det_range header")
    missing = [m.sender_id for m in msgs if m.sender_id not in dims]
    if missing:
        raise ValueError(f"{sidecar}: no cav line for senders {missing}")
    return Scene(seed, det_range, msgs[0], msgs[1:], gt, dims, None)


def list_frames(frames_dir) -> list[Path]:
    return sorted(Path(frames_dir).glob(f"frame_*{CONTAINER_SUFFIX}"))
