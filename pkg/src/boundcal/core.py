"""Shared tensor, bound, mask and configuration types.

Images are plain ``float64`` numpy arrays of shape ``(C, H, W)`` with values in
``[0, 1]``; stacks of images add a leading axis.  Validated arrays are returned
read-only so they can be shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, ValueOutOfRange

__all__ = [
    "BoundPair",
    "RiskConfig",
    "enforce_bound_order",
    "validate_image",
    "validate_mask",
    "validate_samples",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


def _check_unit_range(a: np.ndarray, what: str) -> None:
    flat = a.reshape(-1)
    bad = ~(np.isfinite(flat) & (flat >= 0.0) & (flat <= 1.0))
    if bad.any():
        i = int(np.argmax(bad))
        raise ValueOutOfRange(
            f"{what}: value {flat[i]!r} at flat index {i} is not a finite number in [0, 1]",
            index=i,
        )


def validate_image(shape, values) -> np.ndarray:
    """Validate a claimed ``(C, H, W)`` shape and a flat row-major buffer.

    Never clamps: out-of-range or non-finite values raise
    :class:`ValueOutOfRange` carrying the first offending flat index.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3 or any(s < 1 for s in shape):
        raise ShapeMismatch(f"image shape must be (C, H, W) with every dim >= 1, got {shape}")
    buf = np.asarray(values, dtype=np.float64).reshape(-1)
    expected = shape[0] * shape[1] * shape[2]
    if buf.size != expected:
        raise ShapeMismatch(f"buffer holds {buf.size} values, shape {shape} needs {expected}")
    _check_unit_range(buf, "image")
    return _frozen(buf.reshape(shape))


def validate_samples(samples) -> np.ndarray:
    """Validate a ``(J, C, H, W)`` stack of sampled variations (J >= 1)."""
    a = np.asarray(samples, dtype=np.float64)
    if a.ndim != 4 or a.shape[0] < 1 or min(a.shape) < 1:
        raise ShapeMismatch(f"sample set must have shape (J, C, H, W) with J >= 1, got {a.shape}")
    _check_unit_range(a, "sample set")
    return _frozen(a)


def validate_mask(mask, hw=None) -> np.ndarray:
    """Validate a binary ``(H, W)`` evaluation mask (1 = evaluate, 0 = context).

    A leading image axis ``(n, H, W)`` is also accepted.  Returns a boolean array.
    """
    a = np.asarray(mask)
    if a.ndim not in (2, 3):
        raise ShapeMismatch(f"mask must have shape (H, W) or (n, H, W), got {a.shape}")
    if hw is not None and tuple(a.shape[-2:]) != tuple(hw):
        raise ShapeMismatch(f"mask spatial shape {a.shape[-2:]} does not match {tuple(hw)}")
    flat = a.reshape(-1)
    bad = ~((flat == 0) | (flat == 1))
    if bad.any():
        i = int(np.argmax(bad))
        raise ValueOutOfRange(f"mask value {flat[i]!r} at flat index {i} is not 0 or 1", index=i)
    out = a.astype(bool)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class BoundPair:
    """Per-pixel closed intervals ``[lower, upper]``.

    Holds either one image ``(C, H, W)`` or a stack ``(n, C, H, W)``.  Use
    :func:`enforce_bound_order` to build one from possibly crossed estimates.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.shape != hi.shape:
            raise ShapeMismatch(f"lower {lo.shape} and upper {hi.shape} differ in shape")
        if lo.ndim not in (3, 4):
            raise ShapeMismatch(f"bounds must be rank 3 or 4, got shape {lo.shape}")
        _check_unit_range(lo, "lower bound")
        _check_unit_range(hi, "upper bound")
        crossed = lo > hi
        if crossed.any():
            i = int(np.argmax(crossed.reshape(-1)))
            raise ValueOutOfRange(f"lower > upper at flat index {i}", index=i)
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(hi))

    @property
    def shape(self) -> tuple:
        return self.lower.shape

    @property
    def size(self) -> np.ndarray:
        """Interval widths ``upper - lower``."""
        return self.upper - self.lower

    def __len__(self) -> int:
        if self.lower.ndim != 4:
            raise TypeError("single-image BoundPair has no length")
        return self.lower.shape[0]

    def __getitem__(self, i) -> "BoundPair":
        if self.lower.ndim != 4:
            raise TypeError("single-image BoundPair is not indexable")
        return BoundPair(self.lower[i], self.upper[i])

    @classmethod
    def stack(cls, pairs) -> "BoundPair":
        pairs = list(pairs)
        shapes = {p.shape for p in pairs}
        if len(shapes) != 1 or pairs[0].lower.ndim != 3:
            raise ShapeMismatch(f"can only stack single-image bounds of one shape, got {shapes}")
        return cls(np.stack([p.lower for p in pairs]), np.stack([p.upper for p in pairs]))


def enforce_bound_order(lower, upper) -> tuple[BoundPair, int]:
    """Return ``(BoundPair(min, max), n_swapped)`` from two same-shape estimates."""
    lo = np.asarray(lower, dtype=np.float64)
    hi = np.asarray(upper, dtype=np.float64)
    if lo.shape != hi.shape:
        raise ShapeMismatch(f"lower {lo.shape} and upper {hi.shape} differ in shape")
    swapped = int(np.count_nonzero(lo > hi))
    return BoundPair(np.minimum(lo, hi), np.maximum(lo, hi)), swapped


@dataclass(frozen=True)
class RiskConfig:
    """Risk level ``alpha``, error level ``delta`` and the two target quantiles.

    ``q_lo``/``q_hi`` default to ``alpha/2`` and ``1 - alpha/2``.
    """

    alpha: float = 0.1
    delta: float = 0.1
    q_lo: float | None = None
    q_hi: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.q_lo is None:
            object.__setattr__(self, "q_lo", self.alpha / 2)
        if self.q_hi is None:
            object.__setattr__(self, "q_hi", 1.0 - self.alpha / 2)
        if not (0.0 < self.q_lo < self.q_hi < 1.0):
            raise ValueError(f"need 0 < q_lo < q_hi < 1, got q_lo={self.q_lo}, q_hi={self.q_hi}")
