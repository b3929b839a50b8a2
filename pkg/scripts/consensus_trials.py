"""Recovery rate of the pose correction under random relative pose errors."""
import argparse
import math

import numpy as np

from coopfuse.geometry import apply_rigid
from coopfuse.localization import (
    ConsensusConfig, LandmarkClass, LandmarkPoint, correct_cpm, max_consensus_search,
)


def truncated_error(rng, sigma_xy=0.4, sigma_yaw=4.0, lim_xy=1.0, lim_yaw=6.0):
    while True:
        dx, dy = rng.normal(0, sigma_xy, 2)
        dyaw = rng.normal(0, sigma_yaw)
        if abs(dx) <= lim_xy and abs(dy) <= lim_xy and abs(dyaw) <= lim_yaw:
            return float(dx), float(dy), float(dyaw)


def landmark_pair(rng, truth, n_poles, n_vehicles, radius=40.0, jitter=0.05):
    n = n_poles + n_vehicles
    r = radius * np.sqrt(rng.random(n))
    a = rng.uniform(-math.pi, math.pi, n)
    ego = np.stack([r * np.cos(a), r * np.sin(a)], axis=1)
    # coop view: inverse of the true correction
    dx, dy, dyaw = truth
    coop = apply_rigid(ego - [dx, dy], 0.0, 0.0, -math.radians(dyaw))
    ego = ego + rng.normal(0, jitter, ego.shape)
    coop = coop + rng.normal(0, jitter, coop.shape)
    cls = [LandmarkClass.POLE] * n_poles + [LandmarkClass.VEHICLE_CENTER] * n_vehicles
    return ([LandmarkPoint(*p, c) for p, c in zip(ego, cls)],
            [LandmarkPoint(*q, c) for q, c in zip(coop, cls)])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--poles", type=int, default=8)
    ap.add_argument("--vehicles", type=int, default=4)
    ap.add_argument("--jitter", type=float, default=0.05)
    ap.add_argument("--inlier-dist", type=float, default=None)
    args = ap.parse_args()

    cfg = ConsensusConfig(inlier_dist=args.inlier_dist)
    coarse_ok = fine_ok = 0
    errs = []
    for trial in range(args.trials):
        rng = np.random.default_rng([4, trial])
        truth = truncated_error(rng)
        ego, coop = landmark_pair(rng, truth, args.poles, args.vehicles, jitter=args.jitter)
        c = max_consensus_search(ego, coop, cfg)
        f = correct_cpm(ego, coop, cfg)
        coarse_ok += (abs(c.dx - truth[0]) <= cfg.res_xy and abs(c.dy - truth[1]) <= cfg.res_xy
                      and abs(math.degrees(c.dyaw) - truth[2]) <= cfg.res_yaw)
        err = (abs(f.dx - truth[0]), abs(f.dy - truth[1]), abs(math.degrees(f.dyaw) - truth[2]))
        fine_ok += err[0] <= 0.15 and err[1] <= 0.15 and err[2] <= 1.0
        errs.append(err)
    e = np.array(errs)
    print(f"inlier_dist {cfg.inlier_dist:.3f} m: coarse {coarse_ok}/{args.trials}, fine {fine_ok}/{args.trials}")
    print(f"median |dx| {np.median(e[:, 0]):.3f} m, |dy| {np.median(e[:, 1]):.3f} m, |dyaw| {np.median(e[:, 2]):.3f} deg")


if __name__ == "__main__":
    main()
