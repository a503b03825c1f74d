"""Per-pixel bounds from a stack of sampled variations.

Quantiles use linear interpolation between order statistics at position
``q * (J - 1)`` (NumPy's default, "type 7").
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .core import BoundPair, RiskConfig, enforce_bound_order
from .errors import EmptySample, NonFiniteValue, QuantileOutOfRange, ShapeMismatch

THREADS_ENV = "BOUNDCAL_THREADS"


def worker_count() -> int:
    """Worker cap from ``BOUNDCAL_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    n = int(raw)
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be >= 1, got {raw!r}")
    return n


def _check_q(q: float) -> None:
    if not 0.0 < q < 1.0:
        raise QuantileOutOfRange(f"quantile level must lie in (0, 1), got {q}")


def empirical_quantile(values, q: float) -> float:
    """Type-7 empirical quantile of a 1-D sample."""
    _check_q(q)
    v = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
    if v.size == 0:
        raise EmptySample("cannot take a quantile of an empty sample")
    if not np.isfinite(v).all():
        raise NonFiniteValue("sample contains non-finite values")
    return float(_interp_sorted(v[:, None], q)[0])


def _interp_sorted(sorted_vals: np.ndarray, q: float) -> np.ndarray:
    """Quantile of each column of an axis-0-sorted ``(J, N)`` array."""
    j = sorted_vals.shape[0]
    h = q * (j - 1)
    f = math.floor(h)
    if f >= j - 1:
        return sorted_vals[j - 1].copy()
    lo = sorted_vals[f]
    return lo + (h - f) * (sorted_vals[f + 1] - lo)


def pixel_quantiles(samples, qs) -> list[np.ndarray]:
    """Quantiles over axis 0 of a ``(J, ...)`` stack, one array per level in ``qs``."""
    for q in qs:
        _check_q(q)
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim < 1 or s.shape[0] == 0:
        raise EmptySample("sample set has no samples")
    if not np.isfinite(s).all():
        raise NonFiniteValue("sample set contains non-finite values")
    tail = s.shape[1:]
    flat = s.reshape(s.shape[0], -1)
    n = flat.shape[1]
    out = [np.empty(n) for _ in qs]

    def run(lo, hi):
        block = np.sort(flat[:, lo:hi], axis=0)
        for dst, q in zip(out, qs):
            dst[lo:hi] = _interp_sorted(block, q)

    workers = min(worker_count(), max(n, 1))
    edges = np.linspace(0, n, workers + 1).astype(int)
    if workers == 1:
        run(0, n)
    else:
        # output slices are disjoint, so the result does not depend on worker count
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, edges[:-1], edges[1:]))
    return [o.reshape(tail) for o in out]


def bounds_from_samples(samples, cfg: RiskConfig = RiskConfig()) -> BoundPair:
    """DM_SB bounds: the ``q_lo``/``q_hi`` quantile of every pixel over the samples.

    ``samples`` is ``(J, C, H, W)`` for one image or ``(n, J, C, H, W)`` for a
    batch; the result is a single-image or stacked BoundPair accordingly.
    """
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim == 4:
        lo, hi = pixel_quantiles(s, (cfg.q_lo, cfg.q_hi))
    elif s.ndim == 5:
        lo, hi = pixel_quantiles(np.moveaxis(s, 1, 0), (cfg.q_lo, cfg.q_hi))
    else:
        raise ShapeMismatch(f"samples must be (J,C,H,W) or (n,J,C,H,W), got {s.shape}")
    pair, _ = enforce_bound_order(lo, hi)
    return pair
