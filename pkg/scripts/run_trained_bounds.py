"""Train the patch regressor, calibrate it, and compare against the analytic optimum.

Optionally trains a second model on sampled bounds (approx mode) and reports
both calibrated sizes on the same splits.
"""

import argparse

from boundcal import RiskConfig
from boundcal.errors import CannotControlRisk
from boundcal.calibration import apply_calibration, calibrate
from boundcal.metrics import evaluate
from boundcal.qr_trainer import TrainConfig, init_model, predict_bounds, train
from boundcal.sample_bounds import bounds_from_samples
from boundcal.synth import Z95, dataset_variations, gen_hetero_gauss


def run_mode(mode, tr, cal, te, targets, args, cfg):
    tcfg = TrainConfig(mode=mode, lr=args.lr, epochs=args.epochs, batch=args.batch, seed=args.init_seed, risk=cfg)
    model, hist = train(init_model(args.k, args.hidden, 1, seed=args.init_seed), tr.x, targets, tcfg)
    try:
        res = calibrate(predict_bounds(model, cal.x), cal.y, cfg=cfg)
    except CannotControlRisk as exc:
        print(f"[{mode}] calibration failed: {exc}")
        return None
    rep = evaluate(apply_calibration(predict_bounds(model, te.x), res), te.y)
    print(f"[{mode}] loss {hist['total'][0]:.5f} -> {hist['total'][-1]:.5f}; lambda_hat={res.lambda_hat:.2f}; "
          f"test risk {rep.empirical_risk_imagewise:.4f}; mean size {rep.mean_interval_size:.4f}")
    return rep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=42, help="train seed; cal/test use seed+1, seed+2")
    ap.add_argument("--n-train", type=int, default=100)
    ap.add_argument("--n-cal", type=int, default=200)
    ap.add_argument("--n-test", type=int, default=200)
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--lr", type=float, default=0.05)
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--init-seed", type=int, default=0)
    ap.add_argument("--approx", action="store_true", help="also train on J=200 sampled bounds")
    args = ap.parse_args()

    cfg = RiskConfig()
    tr = gen_hetero_gauss(args.n_train, args.size, args.size, args.seed)
    cal = gen_hetero_gauss(args.n_cal, args.size, args.size, args.seed + 1)
    te = gen_hetero_gauss(args.n_test, args.size, args.size, args.seed + 2)
    optimum = 2 * Z95 * float(te.sigma.mean())

    qr = run_mode("qr", tr, cal, te, tr.y, args, cfg)
    if qr is None:
        return
    res = calibrate(cal.bounds, cal.y, cfg=cfg)
    oracle = evaluate(apply_calibration(te.bounds, res), te.y)
    print(f"[analytic bounds] lambda_hat={res.lambda_hat:.2f}; mean size {oracle.mean_interval_size:.4f}")
    print(f"optimum 2*z95*mean(sigma) = {optimum:.4f}; qr ratio {qr.mean_interval_size / optimum:.3f}; "
          f"analytic ratio {oracle.mean_interval_size / optimum:.3f}")
    if args.approx:
        sb = bounds_from_samples(dataset_variations(tr, 200), cfg)
        ap_rep = run_mode("approx", tr, cal, te, (sb.lower, sb.upper), args, cfg)
        if ap_rep is not None:
            print(f"approx / qr size = {ap_rep.mean_interval_size / qr.mean_interval_size:.3f}")
    for i, s in enumerate(qr.stratified):
        print(f"  qr stratum {i}: count={s.count} mean_size={s.mean_size:.4f} risk={s.risk:.4f}")


if __name__ == "__main__":
    main()
