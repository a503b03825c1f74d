"""Monte-Carlo check of the risk guarantee with sample-quantile bounds.

Each trial draws fresh calibration and test sets, calibrates, and records the
test risk. The guarantee says at most a delta fraction of trials exceed alpha.
"""

import argparse
import json

import numpy as np

from boundcal import RiskConfig
from boundcal.calibration import apply_calibration, calibrate, image_risks
from boundcal.sample_bounds import bounds_from_samples
from boundcal.synth import dataset_variations, gen_hetero_gauss


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--n", type=int, default=200, help="images per split")
    ap.add_argument("--size", type=int, default=16)
    ap.add_argument("--variations", type=int, default=50)
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--delta", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=10_000)
    ap.add_argument("--out", help="optional JSON with per-trial results")
    args = ap.parse_args()

    cfg = RiskConfig(alpha=args.alpha, delta=args.delta)
    rows = []
    for t in range(args.trials):
        cal = gen_hetero_gauss(args.n, args.size, args.size, args.seed + 2 * t)
        test = gen_hetero_gauss(args.n, args.size, args.size, args.seed + 2 * t + 1)
        b_cal = bounds_from_samples(dataset_variations(cal, args.variations), cfg)
        b_test = bounds_from_samples(dataset_variations(test, args.variations), cfg)
        res = calibrate(b_cal, cal.y, cfg=cfg)
        calibrated = apply_calibration(b_test, res)
        risk = float(image_risks(calibrated, test.y).mean())
        size = float(np.mean(calibrated.upper - calibrated.lower))
        rows.append({"trial": t, "lambda_hat": res.lambda_hat, "test_risk": risk, "mean_size": size})
        print(f"trial {t:4d}  lambda_hat={res.lambda_hat:.2f}  risk={risk:.4f}  size={size:.4f}")

    risks = np.array([r["test_risk"] for r in rows])
    print(f"\nviolations: {int((risks > args.alpha).sum())}/{args.trials} "
          f"(allowed fraction {args.delta}); mean risk {risks.mean():.4f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
