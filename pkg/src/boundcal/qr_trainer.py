"""Patch-based three-head regressor trained for interval bounds.

The model maps the ``k x k x C`` patch around a pixel through one rectified
hidden layer to three outputs: lower bound, point estimate, upper bound.  One
prediction is made per spatial location and shared by every channel there.

Two training modes:

``qr``
    pinball loss on the bound heads plus weighted squared error on the point head.
``approx``
    squared error of the bound heads against precomputed target bounds
    (e.g. sampled-variation quantiles); the point head is not trained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import BoundPair, RiskConfig, enforce_bound_order
from .errors import BadDimension, DivergedLoss, EmptyDataset, IndexOutOfRange, ShapeMismatch

LO, POINT, HI = 0, 1, 2
MODES = ("qr", "approx")


@dataclass
class QrModel:
    k: int
    channels: int
    w1: np.ndarray  # (hidden, k*k*channels)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (3, hidden); rows are lower / point / upper heads
    b2: np.ndarray  # (3,)

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise BadDimension(f"patch size must be odd and >= 1, got {self.k}")
        d = self.k * self.k * self.channels
        hid = np.shape(self.w1)[0]
        expected = {"w1": (hid, d), "b1": (hid,), "w2": (3, hid), "b2": (3,)}
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ShapeMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.isfinite(arr).all():
                raise DivergedLoss(f"{name} contains non-finite weights")
            setattr(self, name, arr)

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "QrModel":
        return QrModel(self.k, self.channels, *(p.copy() for p in self.params().values()))


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "qr"
    lr: float = 0.05
    epochs: int = 30
    batch: int = 256
    seed: int = 0
    mse_weight: float = 1.0
    risk: RiskConfig = field(default_factory=RiskConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch must be >= 1")


def init_model(k: int = 5, hidden: int = 32, channels: int = 1, seed: int = 0) -> QrModel:
    """Uniform weights in ``[-s, s]`` with ``s = sqrt(6 / (k*k*C + hidden))``; zero biases."""
    if k < 1 or k % 2 == 0:
        raise BadDimension(f"patch size must be odd and >= 1, got {k}")
    if hidden < 1 or channels < 1:
        raise BadDimension("hidden width and channel count must be >= 1")
    d = k * k * channels
    s = math.sqrt(6.0 / (d + hidden))
    rng = np.random.default_rng(seed)
    w1 = rng.uniform(-s, s, size=(hidden, d))
    w2 = rng.uniform(-s, s, size=(3, hidden))
    return QrModel(k, channels, w1, np.zeros(hidden), w2, np.zeros(3))


def _as_stack(images) -> np.ndarray:
    a = np.asarray(images, dtype=np.float64)
    if a.ndim == 3:
        a = a[None]
    if a.ndim != 4:
        raise ShapeMismatch(f"expected (C,H,W) or (n,C,H,W) images, got shape {a.shape}")
    return a


def extract_patches(images, k: int) -> np.ndarray:
    """Edge-replicated ``k x k`` patches for every pixel.

    Returns ``(n*H*W, C*k*k)`` rows in (image, row, col) order; features are
    ordered (channel, dy, dx).
    """
    x = _as_stack(images)
    r = k // 2
    padded = np.pad(x, ((0, 0), (0, 0), (r, r), (r, r)), mode="edge")
    win = sliding_window_view(padded, (k, k), axis=(2, 3))  # (n, C, H, W, k, k)
    n, c, h, w = x.shape
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * w, c * k * k)


def forward_patches(model: QrModel, patches: np.ndarray):
    """Returns ``(pre_activation, hidden, outputs)``; outputs are ``(B, 3)`` raw head values."""
    z = patches @ model.w1.T + model.b1
    h = np.maximum(z, 0.0)
    return z, h, h @ model.w2.T + model.b2


def forward(model: QrModel, x, pixel) -> tuple[float, float, float]:
    """Raw (lower, point, upper) head outputs at ``pixel = (row, col)`` of image ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != model.channels:
        raise ShapeMismatch(f"model expects ({model.channels}, H, W) input, got {x.shape}")
    row, col = pixel
    _, h, w = x.shape
    if not (0 <= row < h and 0 <= col < w):
        raise IndexOutOfRange(f"pixel {pixel} outside {h}x{w} image")
    r = model.k // 2
    rows = np.clip(np.arange(row - r, row + r + 1), 0, h - 1)
    cols = np.clip(np.arange(col - r, col + r + 1), 0, w - 1)
    patch = x[:, rows][:, :, cols].reshape(1, -1)
    out = forward_patches(model, patch)[2][0]
    return float(out[LO]), float(out[POINT]), float(out[HI])


def _pinball_rows(q, y, a):
    # q: (B,), y: (B, C) -> per-row mean loss and d/dq
    diff = y - q[:, None]
    loss = np.where(diff > 0, diff * a, -diff * (1.0 - a)).mean(axis=1)
    grad = np.where(diff > 0, -a, np.where(diff < 0, 1.0 - a, 0.0)).mean(axis=1)
    return loss, grad


def loss_and_grads(model: QrModel, patches, targets, mode: str = "qr",
                   risk: RiskConfig = RiskConfig(), mse_weight: float = 1.0):
    """Batch-mean loss, its components, and gradients for every weight.

    ``targets`` is ``y`` of shape ``(B, C)`` in qr mode and a pair
    ``(target_lo, target_hi)`` of ``(B, C)`` arrays in approx mode.
    Returns ``(total, components, grads)``.
    """
    patches = np.asarray(patches, dtype=np.float64)
    z, h, out = forward_patches(model, patches)
    b = patches.shape[0]
    dout = np.zeros_like(out)
    if mode == "qr":
        y = np.asarray(targets, dtype=np.float64)
        l_lo, g_lo = _pinball_rows(out[:, LO], y, risk.q_lo)
        l_hi, g_hi = _pinball_rows(out[:, HI], y, risk.q_hi)
        resid = out[:, POINT][:, None] - y
        l_mse = (resid ** 2).mean(axis=1)
        dout[:, LO] = g_lo
        dout[:, HI] = g_hi
        dout[:, POINT] = mse_weight * 2.0 * resid.mean(axis=1)
        comps = {"qr": float((l_lo + l_hi).mean()), "mse": float(l_mse.mean())}
        total = comps["qr"] + mse_weight * comps["mse"]
    elif mode == "approx":
        t_lo, t_hi = (np.asarray(t, dtype=np.float64) for t in targets)
        r_lo = out[:, LO][:, None] - t_lo
        r_hi = out[:, HI][:, None] - t_hi
        dout[:, LO] = 2.0 * r_lo.mean(axis=1)
        dout[:, HI] = 2.0 * r_hi.mean(axis=1)
        total = float(((r_lo ** 2).mean(axis=1) + (r_hi ** 2).mean(axis=1)).mean())
        comps = {"approx": total}
    else:
        raise ValueError(f"unknown mode {mode!r}")
    dout /= b
    dh = dout @ model.w2
    dz = dh * (z > 0)
    grads = {
        "w1": dz.T @ patches,
        "b1": dz.sum(axis=0),
        "w2": dout.T @ h,
        "b2": dout.sum(axis=0),
    }
    return total, comps, grads


def _pixel_targets(arr: np.ndarray) -> np.ndarray:
    # (n, C, H, W) -> (n*H*W, C), same row order as extract_patches
    n, c, h, w = arr.shape
    return np.ascontiguousarray(arr.transpose(0, 2, 3, 1)).reshape(n * h * w, c)


def train(model: QrModel, inputs, targets, cfg: TrainConfig = TrainConfig()):
    """Minibatch gradient descent; returns ``(trained_model, history)``.

    ``inputs`` is a stack (or list) of images.  ``targets`` is the matching
    stack of ground-truth images in qr mode.  In approx mode it is a BoundPair
    (stacked, or a list of single-image pairs) or a ``(lower, upper)`` tuple of
    unvalidated arrays.  ``history`` maps each loss name to
    its per-epoch mean over minibatches; ``history["total"]`` is always present.
    """
    if len(inputs) == 0:
        raise EmptyDataset("training set is empty")
    x = _as_stack(inputs)
    if x.shape[1] != model.channels:
        raise ShapeMismatch(f"model has {model.channels} channels, inputs have {x.shape[1]}")
    if cfg.mode == "qr":
        y = _as_stack(targets)
        if y.shape != x.shape:
            raise ShapeMismatch(f"targets {y.shape} do not match inputs {x.shape}")
        tgt = _pixel_targets(y)
        pick = lambda idx: tgt[idx]  # noqa: E731
    else:
        if isinstance(targets, BoundPair):
            lo, hi = targets.lower, targets.upper
        elif isinstance(targets, tuple) and len(targets) == 2:
            lo, hi = targets
        else:
            pair = BoundPair.stack(targets)
            lo, hi = pair.lower, pair.upper
        lo, hi = _as_stack(lo), _as_stack(hi)
        if lo.shape != x.shape:
            raise ShapeMismatch(f"target bounds {lo.shape} do not match inputs {x.shape}")
        t_lo, t_hi = _pixel_targets(lo), _pixel_targets(hi)
        pick = lambda idx: (t_lo[idx], t_hi[idx])  # noqa: E731

    patches = extract_patches(x, model.k)
    n_pix = patches.shape[0]
    steps = math.ceil(n_pix / cfg.batch)
    rng = np.random.default_rng(cfg.seed)
    model = model.copy()
    params = model.params()
    history: dict[str, list[float]] = {}
    for _ in range(cfg.epochs):
        sums: dict[str, float] = {}
        for _ in range(steps):
            idx = rng.integers(0, n_pix, size=cfg.batch)
            total, comps, grads = loss_and_grads(
                model, patches[idx], pick(idx), cfg.mode, cfg.risk, cfg.mse_weight
            )
            if not math.isfinite(total):
                raise DivergedLoss(f"training loss became {total}")
            for name, g in grads.items():
                params[name] -= cfg.lr * g
            sums["total"] = sums.get("total", 0.0) + total
            for name, v in comps.items():
                sums[name] = sums.get(name, 0.0) + v
        for name, v in sums.items():
            history.setdefault(name, []).append(v / steps)
    if cfg.mode == "approx":
        history.pop("approx", None)
    return model, history


def predict_raw(model: QrModel, images) -> np.ndarray:
    """Raw head outputs ``(n, 3, H, W)`` for a stack of images."""
    x = _as_stack(images)
    if x.shape[1] != model.channels:
        raise ShapeMismatch(f"model has {model.channels} channels, input has {x.shape[1]}")
    n, _, h, w = x.shape
    out = forward_patches(model, extract_patches(x, model.k))[2]
    return out.reshape(n, h, w, 3).transpose(0, 3, 1, 2)


def predict_bounds(model: QrModel, x) -> BoundPair:
    """Bounds for one image ``(C,H,W)`` or a stack, clamped to [0, 1] and ordered."""
    single = np.ndim(x) == 3
    raw = predict_raw(model, x)
    c = np.shape(x)[-3]
    lo = np.repeat(np.clip(raw[:, LO:LO + 1], 0.0, 1.0), c, axis=1)
    hi = np.repeat(np.clip(raw[:, HI:HI + 1], 0.0, 1.0), c, axis=1)
    if single:
        lo, hi = lo[0], hi[0]
    pair, _ = enforce_bound_order(lo, hi)
    return pair
