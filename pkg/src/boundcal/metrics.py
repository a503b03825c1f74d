"""Evaluation of calibrated intervals: risk, interval size, size-stratified risk, heatmaps."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .calibration import _stack_bounds, _stack_images, _stack_masks
from .core import BoundPair, validate_mask
from .errors import EmptyInput, ShapeMismatch, TooFewPixels


@dataclass(frozen=True)
class StratumStats:
    count: int
    misses: int
    mean_size: float
    risk: float


@dataclass
class MetricsReport:
    empirical_risk_imagewise: float
    empirical_risk_pooled: float
    mean_interval_size: float
    n_images: int
    n_pixels: int
    stratified: list[StratumStats] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


def _pooled(bounds, targets, masks):
    """Evaluated entries as flat arrays (sizes, misses, image_index) in image-major order."""
    lo, hi = _stack_bounds(bounds)
    if lo.shape[0] == 0:
        raise EmptyInput("no images to evaluate")
    y = _stack_images(targets, lo)
    m = _stack_masks(masks, lo.shape)
    size = hi - lo
    miss = (y < lo) | (y > hi)
    img = np.broadcast_to(np.arange(lo.shape[0]).reshape(-1, 1, 1, 1), lo.shape)
    if m is None:
        return size.reshape(-1), miss.reshape(-1), img.reshape(-1)
    keep = np.broadcast_to(m, lo.shape).reshape(-1)
    return size.reshape(-1)[keep], miss.reshape(-1)[keep], img.reshape(-1)[keep]


def _strata(size, miss, bins):
    n = size.size
    if n < bins:
        raise TooFewPixels(f"{n} evaluated pixels cannot fill {bins} bins")
    # stable sort: ties keep (image, pixel) order
    order = np.argsort(size, kind="stable")
    base, extra = divmod(n, bins)
    out, start = [], 0
    for b in range(bins):
        cnt = base + (1 if b < extra else 0)
        sel = order[start:start + cnt]
        k = int(miss[sel].sum())
        out.append(StratumStats(cnt, k, float(size[sel].mean()), k / cnt))
        start += cnt
    return out


def size_stratified_risk(bounds, targets, masks=None, bins: int = 4) -> list[StratumStats]:
    """Pool evaluated pixels, sort by interval size, and report risk per contiguous bin.

    Bin sizes differ by at most one, larger bins first.
    """
    size, miss, _ = _pooled(bounds, targets, masks)
    return _strata(size, miss, bins)


def evaluate(bounds, targets, masks=None, bins: int = 4) -> MetricsReport:
    size, miss, img = _pooled(bounds, targets, masks)
    n_images = int(img.max()) + 1 if img.size else 0
    per_image_miss = np.bincount(img, weights=miss, minlength=n_images)
    per_image_count = np.bincount(img, minlength=n_images)
    if (per_image_count == 0).any():
        raise EmptyInput("an image has no evaluated pixels")
    stratified = _strata(size, miss, bins) if size.size >= bins else []
    return MetricsReport(
        empirical_risk_imagewise=float(np.mean(per_image_miss / per_image_count)),
        empirical_risk_pooled=float(miss.sum() / miss.size),
        mean_interval_size=float(size.mean()),
        n_images=n_images,
        n_pixels=int(size.size),
        stratified=stratified,
    )


def _single(bounds: BoundPair, mask):
    if bounds.lower.ndim != 3:
        raise ShapeMismatch("heatmaps take a single-image BoundPair")
    _, h, w = bounds.shape
    active = np.ones((h, w), dtype=bool) if mask is None else validate_mask(mask, hw=(h, w))
    if active.ndim != 2:
        raise ShapeMismatch("heatmap mask must be (H, W)")
    return active


def error_heatmap(bounds: BoundPair, target, mask=None) -> np.ndarray:
    """1 where any channel misses its interval, 0 elsewhere and on context pixels."""
    active = _single(bounds, mask)
    y = np.asarray(target, dtype=np.float64)
    if y.shape != bounds.shape:
        raise ShapeMismatch(f"target {y.shape} does not match bounds {bounds.shape}")
    miss = ((y < bounds.lower) | (y > bounds.upper)).any(axis=0)
    return (miss & active).astype(np.float64)


def size_heatmap(bounds: BoundPair, mask=None) -> np.ndarray:
    """Channel-mean interval size normalised by its maximum over evaluated pixels."""
    active = _single(bounds, mask)
    s = np.where(active, bounds.size.mean(axis=0), 0.0)
    top = s.max()
    return s / top if top > 0 else np.zeros_like(s)


def write_strata_csv(path, strata) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin", "count", "mean_size", "risk"])
        for i, s in enumerate(strata):
            writer.writerow([i, s.count, repr(s.mean_size), repr(s.risk)])
