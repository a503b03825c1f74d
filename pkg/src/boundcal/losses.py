"""Pinball, quantile-regression and bound-approximation losses.

All functions broadcast over numpy arrays; scalar inputs give scalar outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RiskConfig
from .errors import NonFiniteValue, QuantileOutOfRange


def _finite(*arrays):
    out = []
    for a in arrays:
        a = np.asarray(a, dtype=np.float64)
        if not np.isfinite(a).all():
            raise NonFiniteValue("loss inputs must be finite")
        out.append(a)
    return out


def _level(a):
    if not 0.0 < a < 1.0:
        raise QuantileOutOfRange(f"quantile level must lie in (0, 1), got {a}")


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def pinball(q_hat, y, a):
    """``(y - q_hat) * a`` above the estimate, ``(q_hat - y) * (1 - a)`` at or below it."""
    _level(a)
    q_hat, y = _finite(q_hat, y)
    return _scalar(np.where(y > q_hat, (y - q_hat) * a, (q_hat - y) * (1.0 - a)))


def pinball_subgrad(q_hat, y, a):
    """d pinball / d q_hat, taking 0 at the kink ``y == q_hat``."""
    _level(a)
    q_hat, y = _finite(q_hat, y)
    g = np.where(y > q_hat, -a, np.where(y < q_hat, 1.0 - a, 0.0))
    return _scalar(g)


def qr_loss(lo, hi, y, cfg: RiskConfig = RiskConfig()):
    return _scalar(np.asarray(pinball(lo, y, cfg.q_lo)) + np.asarray(pinball(hi, y, cfg.q_hi)))


@dataclass(frozen=True)
class LossBreakdown:
    pinball_lo: float
    pinball_hi: float
    mse_point: float
    total: float


def im2imuq_loss(lo, point, hi, y, cfg: RiskConfig = RiskConfig(), mse_weight: float = 1.0):
    """Quantile loss on the two bound heads plus squared error on the point head.

    Inputs that are arrays are averaged, so the breakdown is always scalar.
    """
    point, y_ = _finite(point, y)
    p_lo = float(np.mean(pinball(lo, y, cfg.q_lo)))
    p_hi = float(np.mean(pinball(hi, y, cfg.q_hi)))
    mse = float(np.mean((point - y_) ** 2))
    return LossBreakdown(p_lo, p_hi, mse, p_lo + p_hi + mse_weight * mse)


def approx_bounds_loss(pred_lo, pred_hi, target_lo, target_hi):
    """Squared error of predicted bounds against sampled target bounds."""
    pred_lo, pred_hi, target_lo, target_hi = _finite(pred_lo, pred_hi, target_lo, target_hi)
    return _scalar((pred_lo - target_lo) ** 2 + (pred_hi - target_hi) ** 2)
