"""Synthetic restoration tasks with closed-form conditional quantiles.

Both tasks share a sinusoidal base field ``b`` in [0.25, 0.75] that is also
the observation ``x``:

* hetero-gauss: ``y = clamp(b + sigma * eps)`` with ``sigma = 0.01 + 0.05 * b``;
* bimodal: inside a centred ``H/2 x W/2`` square ``y = b + 0.2`` or ``b - 0.2``
  (one fair coin per image), outside it ``y = b``.

Randomness comes from NumPy's PCG64 generator; image ``i`` of a dataset with
seed ``s`` draws from the independent stream ``SeedSequence(s, spawn_key=(i,))``.
Normal deviates use the Box-Muller transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadDimension

Z95 = 1.6448536
BIMODAL_OFFSET = 0.2
DEFAULT_VARIATIONS = 200


def image_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def box_muller(rng: np.random.Generator, shape) -> np.ndarray:
    u1 = 1.0 - rng.random(shape)  # (0, 1], keeps log finite
    u2 = rng.random(shape)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def base_field(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    f_h, f_w = rng.integers(1, 4, size=2)
    phi = rng.random()
    rows = np.arange(h)[:, None] / h
    cols = np.arange(w)[None, :] / w
    return 0.5 + 0.25 * np.sin(2.0 * np.pi * (f_h * rows + f_w * cols + phi))


def noise_scale(b):
    return 0.01 + 0.05 * np.asarray(b)


def centre_square(h: int, w: int) -> np.ndarray:
    m = np.zeros((h, w), dtype=bool)
    m[h // 4:h // 4 + h // 2, w // 4:w // 4 + w // 2] = True
    return m


@dataclass
class SynthDataset:
    """Stacked ``(n, 1, H, W)`` arrays; ``sigma`` is None for the bimodal task."""

    task: str
    seed: int
    x: np.ndarray
    y: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sigma: np.ndarray | None = None
    mask: np.ndarray | None = None  # (H, W)

    def __len__(self):
        return self.x.shape[0]

    def __getitem__(self, i):
        from .core import BoundPair

        bounds = BoundPair(self.lower[i], self.upper[i])
        last = self.sigma[i] if self.sigma is not None else self.mask
        return self.x[i], self.y[i], bounds, last

    @property
    def bounds(self):
        from .core import BoundPair

        return BoundPair(self.lower, self.upper)

    def arrays(self) -> dict[str, np.ndarray]:
        """The on-disk file set (name without ``.npy`` -> array)."""
        out = {"x": self.x, "y": self.y, "analytic_lo": self.lower, "analytic_hi": self.upper}
        if self.sigma is not None:
            out["sigma"] = self.sigma
        if self.mask is not None:
            out["mask"] = self.mask.astype(np.float64)
        return out


def gen_hetero_gauss(n_images: int, h: int, w: int, seed: int) -> SynthDataset:
    if n_images < 1 or h < 4 or w < 4:
        raise BadDimension(f"need n >= 1 and H, W >= 4, got n={n_images}, H={h}, W={w}")
    b = np.empty((n_images, 1, h, w))
    y = np.empty_like(b)
    for i in range(n_images):
        rng = image_rng(seed, i)
        b[i, 0] = base_field(rng, h, w)
        y[i, 0] = np.clip(b[i, 0] + noise_scale(b[i, 0]) * box_muller(rng, (h, w)), 0.0, 1.0)
    sigma = noise_scale(b)
    lower = np.clip(b - Z95 * sigma, 0.0, 1.0)
    upper = np.clip(b + Z95 * sigma, 0.0, 1.0)
    return SynthDataset("hetero-gauss", seed, b, y, lower, upper, sigma=sigma)


def gen_bimodal(n_images: int, h: int, w: int, seed: int) -> SynthDataset:
    """Bimodal task; the analytic bounds are the two-mode support ``b -/+ 0.2`` in the square."""
    if n_images < 1 or h < 8 or w < 8 or h % 2 or w % 2:
        raise BadDimension(f"need n >= 1 and even H, W >= 8, got n={n_images}, H={h}, W={w}")
    mask = centre_square(h, w)
    b = np.empty((n_images, 1, h, w))
    y = np.empty_like(b)
    for i in range(n_images):
        rng = image_rng(seed, i)
        b[i, 0] = base_field(rng, h, w)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        y[i, 0] = np.where(mask, np.clip(b[i, 0] + sign * BIMODAL_OFFSET, 0.0, 1.0), b[i, 0])
    lower = np.where(mask, np.clip(b - BIMODAL_OFFSET, 0.0, 1.0), b)
    upper = np.where(mask, np.clip(b + BIMODAL_OFFSET, 0.0, 1.0), b)
    return SynthDataset("bimodal", seed, b, y, lower, upper, mask=mask)


def sample_variations(b, sigma, j: int = DEFAULT_VARIATIONS, seed=0) -> np.ndarray:
    """``J`` simulated sampler draws ``clamp(b + sigma * eps)`` of one image; ``(J, C, H, W)``."""
    b = np.asarray(b, dtype=np.float64)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), b.shape)
    if j < 1:
        raise BadDimension(f"need J >= 1, got {j}")
    rng = np.random.default_rng(seed)
    return np.clip(b + sigma * box_muller(rng, (j,) + b.shape), 0.0, 1.0)


def sample_bimodal_variations(b, mask, j: int = DEFAULT_VARIATIONS, seed=0) -> np.ndarray:
    """``J`` draws of the bimodal law: each sample flips the masked block up or down."""
    b = np.asarray(b, dtype=np.float64)
    if j < 1:
        raise BadDimension(f"need J >= 1, got {j}")
    rng = np.random.default_rng(seed)
    signs = np.where(rng.random(j) < 0.5, 1.0, -1.0).reshape((j,) + (1,) * b.ndim)
    shifted = np.clip(b + signs * BIMODAL_OFFSET, 0.0, 1.0)
    return np.where(np.asarray(mask, dtype=bool), shifted, np.broadcast_to(b, shifted.shape))


def dataset_variations(ds: SynthDataset, j: int = DEFAULT_VARIATIONS, seed: int | None = None):
    """Sampled variations for every image of ``ds``: ``(n, J, C, H, W)``.

    Image ``i`` uses the stream ``SeedSequence(seed, spawn_key=(i, 1))`` so the
    draws are independent of the targets (which use ``spawn_key=(i,)``).
    """
    seed = ds.seed if seed is None else seed
    out = np.empty((len(ds), j) + ds.x.shape[1:])
    for i in range(len(ds)):
        ss = np.random.SeedSequence(seed, spawn_key=(i, 1))
        if ds.task == "bimodal":
            out[i] = sample_bimodal_variations(ds.x[i], ds.mask, j, ss)
        else:
            out[i] = sample_variations(ds.x[i], ds.sigma[i], j, ss)
    return out
