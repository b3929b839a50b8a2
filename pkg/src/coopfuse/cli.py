"""Command-line front end.

    coopfuse simulate   --out DIR [--config C] [--frames N] [--seed S] [--noise]
    coopfuse fuse-eval  --out DIR [--frames-dir DIR | --config C --frames N]
    coopfuse cpm-stats  CONTAINER
    coopfuse sweep      --out DIR [--n-kpts 2048 1024] [--n-ch 128 64 32]

Exit codes: 0 success, 1 runtime failure, 2 invalid arguments or config.
``COOPFUSE_SEED`` overrides the configured base seed; ``--seed`` overrides both.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ExperimentConfig, config_to_dict, load_config
from .cpm import Cpm, cpm_size, decode_cpm, dense_grid_for_range, gridmap_size, iter_container, sparse_gridmap_size
from .errors import ConfigError, DecodeError, GenerationError, InvalidArgument
from .evaluation import PIPELINES, Scene, eval_gt, frame_predictions, scene_from_frame, tabulate
from .framestore import list_frames, read_scene, write_scene
from .simulator import frame_seed, generate_frame, inject_loc_noise

log = logging.getLogger("coopfuse")

GRID_CELL = 0.8  # meters; 8x down-sampled 0.1 m voxels


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(args) -> dict:
    ov = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(item, "expected section.field=value")
        ov[key] = _parse_value(value)
    env = os.environ.get("COOPFUSE_SEED")
    if env is not None:
        try:
            ov["run.seed"] = int(env, 0)
        except ValueError:
            raise ConfigError("COOPFUSE_SEED", f"not an integer: {env!r}") from None
    for flag, key in (("seed", "run.seed"), ("frames", "run.frames"), ("n_v", "run.n_v"),
                      ("iou", "run.iou"), ("pipelines", "run.pipelines"),
                      ("n_kpts_one", "select.n_kpts"), ("n_ch_one", "select.n_ch")):
        v = getattr(args, flag, None)
        if v is not None:
            ov[key] = v
    if getattr(args, "noise", None) is not None:
        ov["run.loc_noise"] = args.noise
    return ov


def _config(args) -> ExperimentConfig:
    return load_config(getattr(args, "config", None), _overrides(args))


def _make_scene(job):
    cfg, index = job
    frame = generate_frame(cfg.sim, frame_seed(cfg.run.seed, index))
    if cfg.run.loc_noise:
        frame = inject_loc_noise(frame)
    return scene_from_frame(frame, cfg.select)


def _scene_predictions(job):
    scene, pipelines, n_vs, pcfg = job
    gt = eval_gt(scene)
    return {n: (frame_predictions(scene, pipelines, n, pcfg), gt) for n in n_vs}


def _pool_map(fn, jobs, n_jobs: int):
    if n_jobs <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(fn, jobs, chunksize=4))


def generate_scenes(cfg: ExperimentConfig, n_jobs: int = 1) -> list[Scene]:
    return _pool_map(_make_scene, [(cfg, i) for i in range(cfg.run.frames)], n_jobs)


def evaluate_scenes(scenes, cfg: ExperimentConfig, n_jobs: int = 1):
    """Rows for every (N_v, pipeline, IoU); frames reduce in index order."""
    pipelines, n_vs = cfg.run.pipelines, cfg.run.n_v
    per_scene = _pool_map(_scene_predictions,
                          [(s, pipelines, n_vs, cfg.pipeline_cfg) for s in scenes], n_jobs)
    rows = []
    for n in n_vs:
        preds = [r[n] for r in per_scene if r[n][0] is not None]
        for row in tabulate(preds, pipelines, cfg.run.iou, n):
            row.n_frames = len(preds)
            rows.append(row)
    return rows


def size_summary(msgs: list[Cpm], det_range: float) -> dict:
    sizes = [cpm_size(m) for m in msgs]
    n_ch = msgs[0].n_ch if msgs else 32
    dense = gridmap_size(dense_grid_for_range(det_range, GRID_CELL, n_ch))
    median = statistics.median(sizes) if sizes else 0
    return {
        "n_cpm": len(sizes),
        "mean_bytes": statistics.fmean(sizes) if sizes else 0.0,
        "median_bytes": median,
        "min_bytes": min(sizes, default=0),
        "max_bytes": max(sizes, default=0),
        "n_ch": n_ch,
        "dense_grid_bytes": dense,
        "ratio_median": dense / median if median else 0.0,
    }


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue())
    return buf.getvalue()


RESULT_HEADER = ["pipeline", "n_v", "iou", "ap", "n_gt", "n_pred", "n_frames"]


def _result_rows(rows):
    return [[r.pipeline, r.n_v, r.iou_thr, r.ap, r.n_gt, r.n_pred, r.n_frames] for r in rows]


def _write_curves(out: Path, rows, prefix=""):
    cdir = out / "curves"
    cdir.mkdir(parents=True, exist_ok=True)
    for r in rows:
        name = f"{prefix}pr_{r.pipeline}_nv{r.n_v}_iou{r.iou_thr:g}.csv"
        _write_csv(cdir / name, ["recall", "precision", "score_threshold"],
                   [[p.recall, p.precision, p.score_threshold] for p in r.curve])


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenes = generate_scenes(cfg, args.jobs)
    manifest = []
    for i, s in enumerate(scenes):
        c, g = write_scene(s, out, i)
        manifest.append([i, s.seed, c.name, g.name, 1 + len(s.coops)])
    text = _write_csv(out / "manifest.csv", ["index", "seed", "container", "sidecar", "n_cpm"], manifest)
    (out / "config.json").write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
    sys.stdout.write(text)
    return 0


def _load_or_generate(args, cfg) -> list[Scene]:
    if args.frames_dir:
        paths = list_frames(args.frames_dir)
        if not paths:
            raise FileNotFoundError(f"no frame containers in {args.frames_dir}")
        return [read_scene(p) for p in paths]
    return generate_scenes(cfg, args.jobs)


def cmd_fuse_eval(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenes = _load_or_generate(args, cfg)
    rows = evaluate_scenes(scenes, cfg, args.jobs)
    table = _write_csv(out / "results.csv", RESULT_HEADER, _result_rows(rows))
    _write_curves(out, rows)
    msgs = [m for s in scenes for m in [s.ego, *s.coops]]
    sizes = size_summary(msgs, scenes[0].det_range)
    size_text = _write_csv(out / "cpm_sizes.csv", list(sizes), [list(sizes.values())])
    sys.stdout.write(table + "\n" + size_text)
    return 0


def cmd_cpm_stats(args) -> int:
    data = Path(args.container).read_bytes()
    header = ["index", "sender_id", "n_prop", "n_kpts", "n_ch", "n_corr", "bytes",
              "dense_grid_bytes", "sparse_grid_bytes", "ratio"]
    rows = []
    for k, (off, rec) in enumerate(iter_container(data)):
        m = decode_cpm(rec, off)
        size = cpm_size(m)
        if size != len(rec):
            raise DecodeError(f"size formula {size} disagrees with record length {len(rec)}", off)
        dense = gridmap_size(dense_grid_for_range(args.det_range, GRID_CELL, m.n_ch))
        cells = {(int(x // GRID_CELL), int(y // GRID_CELL)) for x, y, _ in m.keypoints.coords}
        sparse = sparse_gridmap_size(len(cells), m.n_ch)
        rows.append([k, m.sender_id, len(m.proposals), len(m.keypoints), m.n_ch,
                     len(m.correction_points), size, dense, sparse, dense / size])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_sweep(args) -> int:
    base = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["n_kpts", "n_ch"] + RESULT_HEADER + ["cpm_median_bytes", "cpm_mean_bytes", "dense_ratio"]
    table = []
    for n_kpts in args.n_kpts:
        for n_ch in args.n_ch:
            try:
                select = dataclasses.replace(base.select, n_kpts=n_kpts, n_ch=n_ch)
            except InvalidArgument as e:
                raise ConfigError("select", str(e)) from None
            cfg = dataclasses.replace(base, select=select)
            scenes = generate_scenes(cfg, args.jobs)
            rows = evaluate_scenes(scenes, cfg, args.jobs)
            sizes = size_summary([m for s in scenes for m in [s.ego, *s.coops]], scenes[0].det_range)
            _write_curves(out, rows, prefix=f"k{n_kpts}_c{n_ch}_")
            for r in _result_rows(rows):
                table.append([n_kpts, n_ch, *r, sizes["median_bytes"], sizes["mean_bytes"], sizes["ratio_median"]])
    sys.stdout.write(_write_csv(out / "sweep.csv", header, table))
    return 0


def _add_common(p, frames=True):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--set", action="append", metavar="SECTION.FIELD=VALUE",
                   help="override one config field (repeatable)")
    p.add_argument("--seed", type=int, help="base seed")
    if frames:
        p.add_argument("--frames", type=int, help="number of frames")
    p.add_argument("--noise", dest="noise", action="store_true", default=None,
                   help="inject localization noise")
    p.add_argument("--no-noise", dest="noise", action="store_false")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coopfuse", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="generate frame containers and GT sidecars")
    _add_common(p)
    p.add_argument("--n-kpts", dest="n_kpts_one", type=int)
    p.add_argument("--n-ch", dest="n_ch_one", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fuse-eval", help="run fusion pipelines and compute AP")
    _add_common(p)
    p.add_argument("--frames-dir", help="evaluate stored frames instead of simulating")
    p.add_argument("--pipelines", nargs="+", choices=PIPELINES)
    p.add_argument("--n-v", dest="n_v", nargs="+", type=int)
    p.add_argument("--iou", nargs="+", type=float)
    p.add_argument("--n-kpts", dest="n_kpts_one", type=int)
    p.add_argument("--n-ch", dest="n_ch_one", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse_eval)

    p = sub.add_parser("cpm-stats", help="per-message size breakdown of a container")
    p.add_argument("container")
    p.add_argument("--det-range", type=float, default=57.6)
    p.set_defaults(func=cmd_cpm_stats)

    p = sub.add_parser("sweep", help="cartesian sweep over N_v x N_kpts x N_ch")
    _add_common(p)
    p.add_argument("--pipelines", nargs="+", choices=PIPELINES)
    p.add_argument("--n-v", dest="n_v", nargs="+", type=int)
    p.add_argument("--iou", nargs="+", type=float)
    p.add_argument("--n-kpts", nargs="+", type=int, default=[2048, 1024])
    p.add_argument("--n-ch", nargs="+", type=int, default=[128, 64, 32])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except (ConfigError, InvalidArgument) as e:
        print(f"coopfuse: invalid configuration: {e}", file=sys.stderr)
        return 2
    except DecodeError as e:
        print(f"coopfuse: malformed container: {e}", file=sys.stderr)
        return 1
    except (OSError, GenerationError, ValueError) as e:
        print(f"coopfuse: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
