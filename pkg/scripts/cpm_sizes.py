"""Keypoint message sizes against dense and sparse BEV grid payloads.

    python3 scripts/cpm_sizes.py --frames 200 --n-kpts 2048 1024 --n-ch 128 64 32
"""
import argparse
import statistics

from coopfuse.cpm import cpm_size, dense_grid_for_range, gridmap_size, sparse_gridmap_size
from coopfuse.keypoints import SelectConfig
from coopfuse.simulator import SimConfig, build_cpm, frame_seed, generate_frame

CELL = 0.8


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-kpts", type=int, nargs="+", default=[2048, 1024])
    ap.add_argument("--n-ch", type=int, nargs="+", default=[128, 64, 32])
    args = ap.parse_args()

    cfg = SimConfig()
    frames = [generate_frame(cfg, frame_seed(args.seed, i)) for i in range(args.frames)]
    print("n_kpts,n_ch,mean_bytes,median_bytes,dense_bytes,sparse_median_bytes,dense_over_median")
    for n_kpts in args.n_kpts:
        for n_ch in args.n_ch:
            sel = SelectConfig(n_kpts=n_kpts, n_ch=n_ch)
            sizes, sparse = [], []
            for f in frames:
                m = build_cpm(f, 0, sel)
                sizes.append(cpm_size(m))
                cells = {(int(x // CELL), int(y // CELL)) for x, y, _ in m.keypoints.coords}
                sparse.append(sparse_gridmap_size(len(cells), n_ch))
            dense = gridmap_size(dense_grid_for_range(cfg.det_range, CELL, n_ch))
            med = statistics.median(sizes)
            print(f"{n_kpts},{n_ch},{statistics.fmean(sizes):.1f},{med:.1f},{dense},"
                  f"{statistics.median(sparse):.1f},{dense / med:.2f}")


if __name__ == "__main__":
    main()
