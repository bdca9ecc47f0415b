"""Synthetic data generators for experiments and tests: textured gray images
with known mean brightness, flat-gray seed catalogs, and closed-form
synthesizers whose memorability gaps are exactly computable."""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from .images import ImageTensor, SeedCatalog, StyleSeed, image_from_array, resize_bilinear

SynthFn = Callable[[ImageTensor, StyleSeed], ImageTensor]

# Interleaved so every prefix spans both darker- and brighter-than-mid levels
# while the extreme levels only join at larger seed-set sizes.
DEFAULT_SEED_LEVELS = (0.42, 0.58, 0.34, 0.66, 0.47, 0.53, 0.18, 0.82)


def synthetic_images(
    count: int,
    size: tuple[int, int] = (32, 32),
    rng_seed: int = 0,
    level_range: tuple[float, float] = (0.3, 0.7),
    noise_std: float = 0.06,
) -> list[ImageTensor]:
    """Noisy gray images whose mean brightness varies across the dataset.

    Brightness is the only ground-truth factor; the noise forces a learned
    model to actually average over pixels rather than memorize.
    """
    lo, hi = level_range
    if not (0.0 <= lo <= hi <= 1.0):
        raise ValueError(f"level_range must be ordered within [0, 1], got {level_range}")
    rng = np.random.default_rng(rng_seed)
    out = []
    for _ in range(count):
        level = rng.uniform(lo, hi)
        arr = level + rng.normal(0.0, noise_std, (*size, 3))
        out.append(image_from_array(np.clip(arr, 0.0, 1.0)))
    return out


def synthetic_image_store(
    count: int,
    size: tuple[int, int] = (32, 32),
    rng_seed: int = 0,
    level_range: tuple[float, float] = (0.3, 0.7),
) -> dict[str, ImageTensor]:
    """synthetic_images keyed by stable ids."""
    imgs = synthetic_images(count, size, rng_seed, level_range)
    return {f"img{i:05d}": img for i, img in enumerate(imgs)}


def flat_image(level: float, size: tuple[int, int] = (16, 16)) -> ImageTensor:
    arr = np.full((*size, 3), float(level))
    return image_from_array(arr)


def mid_gray_images(
    count: int,
    size: tuple[int, int] = (32, 32),
    rng_seed: int = 0,
    jitter: float = 0.02,
) -> list[ImageTensor]:
    """Images clustered tightly around mid-gray, for shift-based tasks where
    a +/-0.2 brightness shift must never clip."""
    rng = np.random.default_rng(rng_seed)
    out = []
    for _ in range(count):
        arr = 0.5 + rng.uniform(-jitter, jitter, (*size, 3))
        out.append(image_from_array(arr))
    return out


def brightness_seed_catalog(
    levels: Sequence[float] = DEFAULT_SEED_LEVELS,
    size: tuple[int, int] = (16, 16),
) -> SeedCatalog:
    """Flat-gray seeds; each seed's memorability under the brightness oracle
    equals its gray level exactly."""
    seeds = []
    for level in levels:
        level = float(level)
        if not (0.0 <= level <= 1.0):
            raise ValueError(f"seed level {level} outside [0, 1]")
        seeds.append(
            StyleSeed(
                seed_id=f"gray-{level:.2f}",
                image=flat_image(level, size),
                memorability=level,
            )
        )
    return SeedCatalog(tuple(seeds))


def shift_seed_catalog(
    shifts: Sequence[float] = (0.2, 0.1, -0.1, -0.2),
    size: tuple[int, int] = (16, 16),
) -> tuple[SeedCatalog, dict[str, float]]:
    """Seeds standing for additive brightness shifts; returns the catalog and
    the seed_id -> shift map the shift synthesizer consumes."""
    seeds = []
    table = {}
    for shift in shifts:
        shift = float(shift)
        sid = f"shift{shift:+.2f}"
        seeds.append(
            StyleSeed(seed_id=sid, image=flat_image(0.5 + shift, size), memorability=0.5 + shift)
        )
        table[sid] = shift
    return SeedCatalog(tuple(seeds)), table


def blend_synth(beta: float = 0.4) -> SynthFn:
    """Convex blend toward the (resized) seed image.

    For the brightness oracle the induced gap is exactly
    beta * (seed_level - image_luma): its sign flips per image, so an
    image-aware selector has real signal an image-independent baseline
    cannot capture.
    """
    beta = float(beta)
    if not (0.0 < beta <= 1.0):
        raise ValueError(f"beta must be in (0, 1], got {beta}")

    def synth(image: ImageTensor, seed: StyleSeed) -> ImageTensor:
        style = resize_bilinear(seed.image, image.size)
        out = (1.0 - beta) * image.pixels.astype(np.float64) + beta * style.pixels
        return image_from_array(out, clip=True)

    return synth


def shift_synth(shifts: Mapping[str, float]) -> SynthFn:
    """Additive per-seed brightness shift, clipped to [0, 1].

    On mid-gray images no pixel clips, so the brightness-oracle gap equals
    the shift exactly regardless of the image.
    """

    def synth(image: ImageTensor, seed: StyleSeed) -> ImageTensor:
        if seed.seed_id not in shifts:
            raise KeyError(f"no shift registered for seed {seed.seed_id!r}")
        out = image.pixels.astype(np.float64) + shifts[seed.seed_id]
        return image_from_array(np.clip(out, 0.0, 1.0))

    return synth


def checker_image(
    size: tuple[int, int] = (64, 64),
    period: int = 8,
    lo: float = 0.15,
    hi: float = 0.85,
) -> ImageTensor:
    """High-frequency checkerboard; a strong texture target for style tests."""
    h, w = size
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    cells = ((yy // period) + (xx // period)) % 2
    arr = np.where(cells[..., None] == 1, hi, lo) * np.ones((h, w, 3))
    return image_from_array(arr)


def gradient_image(
    size: tuple[int, int] = (64, 64), axis: int = 1
) -> ImageTensor:
    """Smooth linear ramp; a low-frequency content image."""
    h, w = size
    n = w if axis == 1 else h
    ramp = np.linspace(0.1, 0.9, n)
    if axis == 1:
        arr = np.tile(ramp[None, :, None], (h, 1, 3))
    else:
        arr = np.tile(ramp[:, None, None], (1, w, 3))
    return image_from_array(arr)


def noise_image(size: tuple[int, int] = (64, 64), rng_seed: int = 0) -> ImageTensor:
    rng = np.random.default_rng(rng_seed)
    return image_from_array(rng.random((*size, 3)))
