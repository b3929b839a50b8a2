"""AP of each fusion pipeline as the number of cooperating vehicles grows.

    python3 scripts/fusion_table.py --frames 200 --seed 0 [--noise]
"""
import argparse
import time

from coopfuse.evaluation import PIPELINES, evaluate_run
from coopfuse.simulator import SimConfig, frame_seed, generate_frame, inject_loc_noise


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise", action="store_true", help="inject localization noise")
    ap.add_argument("--n-v", type=int, nargs="+", default=[0, 2, 4])
    args = ap.parse_args()

    cfg = SimConfig()
    t0 = time.perf_counter()
    frames = [generate_frame(cfg, frame_seed(args.seed, i)) for i in range(args.frames)]
    if args.noise:
        frames = [inject_loc_noise(f) for f in frames]

    ious = (0.3, 0.5, 0.7)
    print(f"{'pipeline':<22}{'N_v':>4}" + "".join(f"{'AP@' + str(t):>10}" for t in ious))
    for n_v in args.n_v:
        rows = evaluate_run(frames, PIPELINES, ious, n_v=n_v)
        for p in PIPELINES:
            aps = [r.ap for r in rows if r.pipeline == p]
            print(f"{p:<22}{n_v:>4}" + "".join(f"{100 * a:>10.2f}" for a in aps))
    print(f"# {args.frames} frames, {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
