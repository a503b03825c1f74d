import json

import numpy as np
import pytest

from boundcal.cli import main
from boundcal.qr_trainer import QrModel, init_model
from boundcal.tensor_io import read_npy, write_model, write_npy


def run(*argv):
    return main([str(a) for a in argv])


def test_synth_default(tmp_path):
    assert run("synth", "--out", tmp_path / "d") == 0
    x = read_npy(tmp_path / "d" / "x.npy")
    assert x.shape == (100, 1, 32, 32)
    for f in ("y", "analytic_lo", "analytic_hi", "sigma"):
        assert (tmp_path / "d" / f"{f}.npy").exists()
    manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert manifest["subcommand"] == "synth" and manifest["seed"] == 42
    assert manifest["parameters"]["task"] == "hetero-gauss"


def test_synth_bogus_task(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        run("synth", "--task", "bogus", "--out", tmp_path)
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_synth_deterministic(tmp_path):
    for d in ("a", "b"):
        assert run("synth", "--task", "bimodal", "--n", 3, "--height", 8, "--width", 8,
                   "--variations", 4, "--out", tmp_path / d) == 0
    for f in ("x", "y", "mask", "samples"):
        assert (tmp_path / "a" / f"{f}.npy").read_bytes() == (tmp_path / "b" / f"{f}.npy").read_bytes()


def test_bounds_single_sample(tmp_path, rng):
    s = rng.random((2, 1, 1, 3, 3))
    write_npy(tmp_path / "s.npy", s)
    assert run("bounds", "--samples", tmp_path / "s.npy", "--out-lo", tmp_path / "lo.npy",
               "--out-hi", tmp_path / "hi.npy") == 0
    np.testing.assert_array_equal(read_npy(tmp_path / "lo.npy"), s[:, 0])
    np.testing.assert_array_equal(read_npy(tmp_path / "hi.npy"), s[:, 0])


def test_bounds_five_sample_example(tmp_path):
    s = np.array([0.1, 0.4, 0.2, 0.9, 0.5]).reshape(5, 1, 1, 1)
    write_npy(tmp_path / "s.npy", s)
    assert run("bounds", "--samples", tmp_path / "s.npy", "--out-lo", tmp_path / "lo.npy",
               "--out-hi", tmp_path / "hi.npy") == 0
    assert read_npy(tmp_path / "lo.npy").item() == pytest.approx(0.12)
    assert read_npy(tmp_path / "hi.npy").item() == pytest.approx(0.82)
    assert (tmp_path / "lo.npy.manifest.json").exists()


def test_bounds_bad_args(tmp_path):
    write_npy(tmp_path / "s.npy", np.zeros((2, 1, 1)))
    common = ["--out-lo", tmp_path / "lo.npy", "--out-hi", tmp_path / "hi.npy"]
    assert run("bounds", "--samples", tmp_path / "s.npy", *common) == 2
    write_npy(tmp_path / "s.npy", np.zeros((2, 1, 1, 1)))
    assert run("bounds", "--samples", tmp_path / "s.npy", "--q-lo", 0.9, "--q-hi", 0.1, *common) == 2
    assert run("bounds", "--samples", tmp_path / "missing.npy", *common) == 1


def _write_bounds(tmp_path, lo, hi, y):
    write_npy(tmp_path / "lo.npy", lo)
    write_npy(tmp_path / "hi.npy", hi)
    write_npy(tmp_path / "y.npy", y)


def test_calibrate_all_covered(tmp_path):
    v = np.full((200, 1, 1, 1), 0.5)
    _write_bounds(tmp_path, v, v, v)
    out = tmp_path / "calib.json"
    assert run("calibrate", "--lo", tmp_path / "lo.npy", "--hi", tmp_path / "hi.npy",
               "--target", tmp_path / "y.npy", "--out", out) == 0
    doc = json.loads(out.read_text())
    assert doc["lambda_hat"] == 0.0 and doc["alpha"] == 0.1 and doc["delta"] == 0.1


def test_calibrate_too_small(tmp_path, capsys):
    v = np.full((3, 1, 1, 1), 0.5)
    _write_bounds(tmp_path, v, v, v)
    assert run("calibrate", "--lo", tmp_path / "lo.npy", "--hi", tmp_path / "hi.npy",
               "--target", tmp_path / "y.npy", "--out", tmp_path / "c.json") == 3
    assert "116" in capsys.readouterr().err


def test_calibrate_literal_recorded(tmp_path):
    lo = np.zeros((200, 1, 2, 2))
    _write_bounds(tmp_path, lo, lo + 0.25, lo + 0.5)
    assert run("calibrate", "--lo", tmp_path / "lo.npy", "--hi", tmp_path / "hi.npy",
               "--target", tmp_path / "y.npy", "--scaling", "literal", "--out", tmp_path / "c.json") == 0
    man = json.loads((tmp_path / "c.json.manifest.json").read_text())
    assert man["parameters"]["scaling"] == "literal"
    assert json.loads((tmp_path / "c.json").read_text())["scaling"] == "literal"


def _calib(tmp_path, lam, **extra):
    doc = {"alpha": 0.1, "delta": 0.1, "lambda_hat": lam, "scaling": "midpoint",
           "grid": {"min": 0, "max": 10, "step": 0.01}, "n_calibration": 200, "ucb_trace": []}
    doc.update(extra)
    path = tmp_path / f"calib_{lam}.json"
    path.write_text(json.dumps(doc))
    return path


@pytest.mark.parametrize("lam", [1.0, 2.0, 0.0])
def test_apply(tmp_path, rng, lam):
    a, b = rng.random((2, 4, 1, 3, 3))
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    lo[0, 0, 0, 0], hi[0, 0, 0, 0] = 0.2, 0.6
    write_npy(tmp_path / "lo.npy", lo)
    write_npy(tmp_path / "hi.npy", hi)
    assert run("apply", "--lo", tmp_path / "lo.npy", "--hi", tmp_path / "hi.npy",
               "--calib", _calib(tmp_path, lam), "--out-lo", tmp_path / "olo.npy",
               "--out-hi", tmp_path / "ohi.npy") == 0
    out_lo, out_hi = read_npy(tmp_path / "olo.npy"), read_npy(tmp_path / "ohi.npy")
    if lam == 1.0:
        assert (tmp_path / "olo.npy").read_bytes() == (tmp_path / "lo.npy").read_bytes()
        assert (tmp_path / "ohi.npy").read_bytes() == (tmp_path / "hi.npy").read_bytes()
    elif lam == 2.0:
        assert out_lo[0, 0, 0, 0] == pytest.approx(0.0, abs=1e-15)
        assert out_hi[0, 0, 0, 0] == pytest.approx(0.8)
    else:
        np.testing.assert_array_equal(out_lo, out_hi)
        np.testing.assert_allclose(out_lo, (lo + hi) / 2)


def test_apply_missing_field(tmp_path):
    write_npy(tmp_path / "lo.npy", np.zeros((1, 1, 1)))
    write_npy(tmp_path / "hi.npy", np.ones((1, 1, 1)))
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"alpha": 0.1}))
    assert run("apply", "--lo", tmp_path / "lo.npy", "--hi", tmp_path / "hi.npy", "--calib", bad,
               "--out-lo", tmp_path / "a.npy", "--out-hi", tmp_path / "b.npy") == 2


def test_evaluate_trivial_with_heatmaps(tmp_path, rng):
    _write_bounds(tmp_path, np.zeros((2, 1, 4, 4)), np.ones((2, 1, 4, 4)), rng.random((2, 1, 4, 4)))
    assert run("evaluate", "--lo", tmp_path / "lo.npy", "--hi", tmp_path / "hi.npy",
               "--target", tmp_path / "y.npy", "--out-json", tmp_path / "m.json",
               "--out-strat", tmp_path / "s.csv", "--heatmap-dir", tmp_path / "hm") == 0
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["empirical_risk_imagewise"] == 0 and doc["mean_interval_size"] == 1
    err = (tmp_path / "hm" / "error_0001.pgm").read_bytes()
    assert err.startswith(b"P5\n4 4\n255\n") and set(err[-16:]) == {0}
    assert (tmp_path / "hm" / "size_0000.pgm").exists()


def test_evaluate_stratified_csv(tmp_path):
    sizes = np.arange(1, 9) / 10
    lo = np.full((1, 1, 1, 8), 0.05)
    y = np.full((1, 1, 1, 8), 0.06)
    y[..., :2] = 0.0
    _write_bounds(tmp_path, lo, lo + sizes.reshape(1, 1, 1, 8), y)
    assert run("evaluate", "--lo", tmp_path / "lo.npy", "--hi", tmp_path / "hi.npy",
               "--target", tmp_path / "y.npy", "--out-json", tmp_path / "m.json",
               "--out-strat", tmp_path / "s.csv") == 0
    rows = [r.split(",") for r in (tmp_path / "s.csv").read_text().splitlines()[1:]]
    assert [r[1] for r in rows] == ["2"] * 4
    assert [float(r[3]) for r in rows] == [1.0, 0.0, 0.0, 0.0]


def test_evaluate_shape_mismatch(tmp_path):
    _write_bounds(tmp_path, np.zeros((2, 1, 4, 4)), np.ones((2, 1, 4, 4)), np.zeros((2, 1, 4, 5)))
    assert run("evaluate", "--lo", tmp_path / "lo.npy", "--hi", tmp_path / "hi.npy",
               "--target", tmp_path / "y.npy", "--out-json", tmp_path / "m.json") == 2


def test_train_qr_and_determinism(tmp_path):
    assert run("synth", "--n", 10, "--height", 16, "--width", 16, "--out", tmp_path / "d") == 0
    for name in ("a", "b"):
        assert run("train", "--x", tmp_path / "d" / "x.npy", "--y", tmp_path / "d" / "y.npy",
                   "--epochs", 8, "--out", tmp_path / f"{name}.bin",
                   "--history", tmp_path / f"{name}.csv") == 0
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "epoch,total,qr,mse" and len(lines) == 9
    qr = [float(r.split(",")[2]) for r in lines[1:]]
    assert qr[-1] < qr[0]


def test_train_approx_needs_targets(tmp_path):
    write_npy(tmp_path / "x.npy", np.full((1, 1, 4, 4), 0.5))
    assert run("train", "--mode", "approx", "--x", tmp_path / "x.npy", "--out", tmp_path / "m.bin") == 2


def test_train_approx_from_target_files(tmp_path):
    x = np.random.default_rng(1).uniform(0.25, 0.75, (2, 1, 8, 8))
    write_npy(tmp_path / "x.npy", x)
    write_npy(tmp_path / "tlo.npy", x - 0.05)
    write_npy(tmp_path / "thi.npy", x + 0.05)
    assert run("train", "--mode", "approx", "--x", tmp_path / "x.npy", "--target-lo", tmp_path / "tlo.npy",
               "--target-hi", tmp_path / "thi.npy", "--epochs", 4, "--out", tmp_path / "m.bin") == 0
    lines = (tmp_path / "history.csv").read_text().splitlines()
    assert lines[0] == "epoch,total" and len(lines) == 5
    hist = [float(r.split(",")[1]) for r in lines[1:]]
    assert hist[-1] < hist[0]


def test_predict_zero_and_hand_model(tmp_path):
    write_npy(tmp_path / "x.npy", np.full((1, 1, 3, 3), 0.25))
    zero = QrModel(1, 1, np.zeros((1, 1)), np.zeros(1), np.zeros((3, 1)), np.zeros(3))
    write_model(tmp_path / "z.bin", zero)
    assert run("predict", "--model", tmp_path / "z.bin", "--x", tmp_path / "x.npy",
               "--out-lo", tmp_path / "lo.npy", "--out-hi", tmp_path / "hi.npy") == 0
    assert not read_npy(tmp_path / "lo.npy").any() and not read_npy(tmp_path / "hi.npy").any()
    hand = QrModel(1, 1, np.array([[1.0]]), np.zeros(1), np.array([[2.0], [0.0], [4.0]]),
                   np.array([0.1, 0.0, 0.0]))
    write_model(tmp_path / "h.bin", hand)
    assert run("predict", "--model", tmp_path / "h.bin", "--x", tmp_path / "x.npy",
               "--out-lo", tmp_path / "lo.npy", "--out-hi", tmp_path / "hi.npy") == 0
    lo, hi = read_npy(tmp_path / "lo.npy"), read_npy(tmp_path / "hi.npy")
    assert lo[0, 0, 1, 1] == pytest.approx(0.6)
    assert (lo <= hi).all()


def test_predict_channel_mismatch(tmp_path):
    write_npy(tmp_path / "x.npy", np.zeros((1, 3, 4, 4)))
    write_model(tmp_path / "m.bin", init_model(3, 4, 1))
    assert run("predict", "--model", tmp_path / "m.bin", "--x", tmp_path / "x.npy",
               "--out-lo", tmp_path / "lo.npy", "--out-hi", tmp_path / "hi.npy") == 2


def _pipeline(root):
    cal, test = root / "cal", root / "test"
    for d, seed in ((cal, 1), (test, 2)):
        assert run("synth", "--n", 120, "--height", 8, "--width", 8, "--seed", seed,
                   "--variations", 20, "--out", d) == 0
        assert run("bounds", "--samples", d / "samples.npy", "--out-lo", d / "lo.npy",
                   "--out-hi", d / "hi.npy") == 0
    assert run("calibrate", "--lo", cal / "lo.npy", "--hi", cal / "hi.npy", "--target", cal / "y.npy",
               "--out", root / "calib.json") == 0
    assert run("apply", "--lo", test / "lo.npy", "--hi", test / "hi.npy", "--calib", root / "calib.json",
               "--out-lo", root / "clo.npy", "--out-hi", root / "chi.npy") == 0
    assert run("evaluate", "--lo", root / "clo.npy", "--hi", root / "chi.npy", "--target",
               test / "y.npy", "--out-json", root / "metrics.json", "--out-strat", root / "strat.csv") == 0
    return [root / "calib.json", root / "clo.npy", root / "chi.npy", root / "metrics.json", root / "strat.csv"]


def test_full_pipeline_reproducible(tmp_path):
    a = _pipeline(tmp_path / "a")
    b = _pipeline(tmp_path / "b")
    for fa, fb in zip(a, b):
        assert fa.read_bytes() == fb.read_bytes(), fa.name
    assert json.loads(a[3].read_text())["empirical_risk_imagewise"] <= 0.1
