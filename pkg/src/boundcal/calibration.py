"""Risk-controlling calibration of heuristic interval bounds.

Intervals are dilated by a scalar ``lam``.  We scan a grid of ``lam``
downwards from its maximum and keep the smallest value whose Hoeffding upper
confidence bound on the mean per-image miscoverage stays at or below ``alpha``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BoundPair, RiskConfig, validate_mask
from .errors import (
    CannotControlRisk,
    DeltaOutOfRange,
    EmptyMask,
    EmptyRiskList,
    NegativeLambda,
    ShapeMismatch,
)

SCALINGS = ("midpoint", "literal")


@dataclass(frozen=True)
class LambdaGrid:
    lambda_min: float = 0.0
    lambda_max: float = 10.0
    step: float = 0.01

    def __post_init__(self):
        if self.lambda_min < 0 or not self.lambda_min < self.lambda_max or not self.step > 0:
            raise ValueError(f"invalid lambda grid {self}")

    def values(self) -> np.ndarray:
        """Ascending grid ``lambda_min + i * step`` (no accumulated rounding)."""
        n = int(math.floor((self.lambda_max - self.lambda_min) / self.step + 1e-9))
        return self.lambda_min + self.step * np.arange(n + 1)


@dataclass
class CalibrationResult:
    lambda_hat: float
    alpha: float
    delta: float
    n_calibration: int
    scaling: str = "midpoint"
    grid: LambdaGrid = field(default_factory=LambdaGrid)
    ucb_trace: list = field(default_factory=list)  # [(lam, ucb), ...] in scan order

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "delta": self.delta,
            "lambda_hat": self.lambda_hat,
            "scaling": self.scaling,
            "grid": {"min": self.grid.lambda_min, "max": self.grid.lambda_max,
                     "step": self.grid.step},
            "n_calibration": self.n_calibration,
            "ucb_trace": [[float(a), float(b)] for a, b in self.ucb_trace],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CalibrationResult":
        """Raises ``KeyError``/``ValueError`` on missing or malformed fields."""
        scaling = doc["scaling"]
        if scaling not in SCALINGS:
            raise ValueError(f"unknown scaling {scaling!r}")
        g = doc.get("grid") or {}
        grid = LambdaGrid(g.get("min", 0.0), g.get("max", 10.0), g.get("step", 0.01))
        return cls(
            lambda_hat=float(doc["lambda_hat"]),
            alpha=float(doc["alpha"]),
            delta=float(doc["delta"]),
            n_calibration=int(doc.get("n_calibration", 0)),
            scaling=scaling,
            grid=grid,
            ucb_trace=[tuple(p) for p in doc.get("ucb_trace", [])],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "CalibrationResult":
        return cls.from_json(json.loads(Path(path).read_text()))


# ----------------------------------------------------------------- helpers

def _stack_bounds(bound_set) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(bound_set, BoundPair):
        lo, hi = bound_set.lower, bound_set.upper
        if lo.ndim == 3:
            lo, hi = lo[None], hi[None]
        return lo, hi
    pairs = list(bound_set)
    if not pairs:
        raise ShapeMismatch("empty bound set")
    stacked = BoundPair.stack(pairs)
    return stacked.lower, stacked.upper


def _stack_images(images, like: np.ndarray) -> np.ndarray:
    if isinstance(images, (list, tuple)):
        y = np.stack([np.asarray(t, dtype=np.float64) for t in images]) if images else np.empty(0)
    else:
        y = np.asarray(images, dtype=np.float64)
    if y.ndim == 3:
        y = y[None]
    if y.shape != like.shape:
        raise ShapeMismatch(f"targets {y.shape} do not match bounds {like.shape}")
    return y


def _stack_masks(masks, shape) -> np.ndarray | None:
    """Masks broadcast to ``(n, 1, H, W)`` booleans, or None for 'all pixels'."""
    if masks is None:
        return None
    if isinstance(masks, list):
        masks = np.stack([np.asarray(m) for m in masks])
    m = validate_mask(masks, hw=shape[-2:])
    if m.ndim == 2:
        m = np.broadcast_to(m, (shape[0],) + m.shape)
    if m.shape[0] != shape[0]:
        raise ShapeMismatch(f"{m.shape[0]} masks for {shape[0]} images")
    if not m.reshape(m.shape[0], -1).any(axis=1).all():
        raise EmptyMask("every image needs at least one active mask pixel")
    return m[:, None]


def _miss_fraction(lo, hi, y, mask) -> np.ndarray:
    miss = (y < lo) | (y > hi)
    if mask is None:
        return miss.reshape(miss.shape[0], -1).mean(axis=1)
    m = np.broadcast_to(mask, miss.shape)
    n_miss = (miss & m).reshape(miss.shape[0], -1).sum(axis=1)
    return n_miss / m.reshape(m.shape[0], -1).sum(axis=1)


# --------------------------------------------------------------- operations

def image_risks(bound_set, targets, masks=None) -> np.ndarray:
    """Per-image miscoverage fraction for a stack or list of bounds."""
    lo, hi = _stack_bounds(bound_set)
    y = _stack_images(targets, lo)
    return _miss_fraction(lo, hi, y, _stack_masks(masks, lo.shape))


def interval_risk(bounds: BoundPair, target, mask=None) -> float:
    """Fraction of evaluated entries of one image not inside the closed interval."""
    if bounds.lower.ndim != 3:
        raise ShapeMismatch("interval_risk takes a single-image BoundPair")
    m = None if mask is None else np.asarray(mask)[None]
    return float(image_risks(bounds, np.asarray(target)[None], m)[0])


def _scale_arrays(lo, hi, lam, mode):
    if mode == "midpoint":
        if lam == 1.0:
            return np.array(lo, copy=True), np.array(hi, copy=True)
        mid = (lo + hi) / 2.0
        new_lo = mid - lam * (mid - lo)
        new_hi = mid + lam * (hi - mid)
        # pin to the input bounds on the correct side so rounding never breaks nesting at lam = 1
        if lam < 1.0:
            new_lo, new_hi = np.maximum(new_lo, lo), np.minimum(new_hi, hi)
        else:
            new_lo, new_hi = np.minimum(new_lo, lo), np.maximum(new_hi, hi)
    elif mode == "literal":
        a, b = lam * lo, lam * hi
        new_lo, new_hi = np.minimum(a, b), np.maximum(a, b)
    else:
        raise ValueError(f"scaling must be one of {SCALINGS}, got {mode!r}")
    return np.clip(new_lo, 0.0, 1.0), np.clip(new_hi, 0.0, 1.0)


def scale_interval(bounds: BoundPair, lam: float, mode: str = "midpoint") -> BoundPair:
    """Dilate every interval by ``lam`` about its midpoint (or multiply, in literal mode)."""
    if lam < 0:
        raise NegativeLambda(f"lambda must be >= 0, got {lam}")
    lo, hi = _scale_arrays(bounds.lower, bounds.upper, lam, mode)
    return BoundPair(lo, hi)


def hoeffding_ucb(risks, delta: float) -> float:
    """``mean(risks) + sqrt(log(1/delta) / (2 n))``."""
    r = np.asarray(risks, dtype=np.float64).reshape(-1)
    if r.size == 0:
        raise EmptyRiskList("need at least one risk value")
    if not 0.0 < delta <= 1.0:
        raise DeltaOutOfRange(f"delta must lie in (0, 1], got {delta}")
    return float(r.mean()) + math.sqrt(math.log(1.0 / delta) / (2.0 * r.size))


def min_calibration_size(alpha: float, delta: float) -> int:
    """Smallest n for which zero empirical risk can pass the Hoeffding test."""
    return math.ceil(math.log(1.0 / delta) / (2.0 * alpha * alpha))


def calibrate(bound_set, targets, masks=None, cfg: RiskConfig = RiskConfig(),
              grid: LambdaGrid = LambdaGrid(), mode: str = "midpoint") -> CalibrationResult:
    """Select the calibration constant on a held-out set.

    ``bound_set``/``targets`` are aligned lists of single-image bounds and
    images, or stacked ``(n, C, H, W)`` equivalents.
    """
    if mode not in SCALINGS:
        raise ValueError(f"scaling must be one of {SCALINGS}, got {mode!r}")
    lo, hi = _stack_bounds(bound_set)
    y = _stack_images(targets, lo)
    m = _stack_masks(masks, lo.shape)
    n = lo.shape[0]
    lams = grid.values()
    trace = []
    lam_hat = None
    for lam in lams[::-1]:
        s_lo, s_hi = _scale_arrays(lo, hi, lam, mode)
        ucb = hoeffding_ucb(_miss_fraction(s_lo, s_hi, y, m), cfg.delta)
        trace.append((float(lam), ucb))
        if ucb > cfg.alpha:
            break
        lam_hat = float(lam)
    if lam_hat is None:
        raise CannotControlRisk(
            f"UCB at lambda_max={lams[-1]} is {trace[0][1]:.4f} > alpha={cfg.alpha}; "
            f"with n={n} calibration images. Hoeffding needs n >= "
            f"{min_calibration_size(cfg.alpha, cfg.delta)} even at zero empirical risk, "
            f"otherwise raise lambda_max or improve the bounds"
        )
    return CalibrationResult(lam_hat, cfg.alpha, cfg.delta, n, mode, grid, trace)


def apply_calibration(bounds: BoundPair, result: CalibrationResult) -> BoundPair:
    return scale_interval(bounds, result.lambda_hat, result.scaling)
