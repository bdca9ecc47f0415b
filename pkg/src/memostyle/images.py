"""Image representation, IO, resizing and the style seed catalog."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from PIL import Image

CANONICAL_SYNTH_SIZE = (256, 256)
CANONICAL_SCORE_SIZE = (224, 224)

CATALOG_MANIFEST = "manifest.jsonl"


@dataclass(frozen=True)
class ImageTensor:
    """Fixed-resolution RGB raster with float32 pixels in [0, 1].

    Immutable after construction; the pixel buffer is marked read-only so
    instances can be shared freely across threads.
    """

    pixels: np.ndarray  # (H, W, 3)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) raster, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"empty raster: shape {px.shape}")
        px = np.ascontiguousarray(px, dtype=np.float32)
        if not np.all(np.isfinite(px)):
            raise ValueError("raster contains non-finite values")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError(
                f"pixel values outside [0, 1]: min={px.min()}, max={px.max()}"
            )
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def size(self) -> tuple[int, int]:
        """(height, width) in pixels."""
        return (self.height, self.width)


def image_from_array(arr: np.ndarray, clip: bool = False) -> ImageTensor:
    """Build an ImageTensor from an array, optionally clipping into [0, 1]."""
    arr = np.asarray(arr, dtype=np.float64)
    if clip:
        arr = np.clip(arr, 0.0, 1.0)
    return ImageTensor(arr)


def resize_bilinear(img: ImageTensor, target_size: tuple[int, int]) -> ImageTensor:
    """Resize with plain bilinear interpolation (half-pixel centers, no antialias)."""
    th, tw = int(target_size[0]), int(target_size[1])
    if th < 1 or tw < 1:
        raise ValueError(f"target size must be positive, got {(th, tw)}")
    if (th, tw) == img.size:
        return img
    px = img.pixels.astype(np.float64)
    r0, r1, fr = _axis_samples(img.height, th)
    c0, c1, fc = _axis_samples(img.width, tw)
    top = px[r0][:, c0] * (1.0 - fc)[None, :, None] + px[r0][:, c1] * fc[None, :, None]
    bot = px[r1][:, c0] * (1.0 - fc)[None, :, None] + px[r1][:, c1] * fc[None, :, None]
    out = top * (1.0 - fr)[:, None, None] + bot * fr[:, None, None]
    return ImageTensor(np.clip(out, 0.0, 1.0))


def _axis_samples(n_src: int, n_dst: int):
    # source coordinate of each destination pixel center
    x = (np.arange(n_dst, dtype=np.float64) + 0.5) * (n_src / n_dst) - 0.5
    x0 = np.floor(x)
    frac = x - x0
    i0 = np.clip(x0, 0, n_src - 1).astype(np.intp)
    i1 = np.clip(x0 + 1, 0, n_src - 1).astype(np.intp)
    return i0, i1, frac


def load_image(path: str | Path, target_size: tuple[int, int] | None = None) -> ImageTensor:
    """Load a PNG or JPEG file, normalize to [0, 1] and optionally resize.

    target_size is (height, width). Raises ValueError for an undecodable
    file or a zero-dimension target.
    """
    if target_size is not None and (int(target_size[0]) < 1 or int(target_size[1]) < 1):
        raise ValueError(f"target size must be positive, got {target_size}")
    path = Path(path)
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float32) / 255.0
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"cannot decode image file {path}: {exc}") from exc
    img = ImageTensor(arr)
    if target_size is not None:
        img = resize_bilinear(img, (int(target_size[0]), int(target_size[1])))
    return img


def decode_image(data: bytes, target_size: tuple[int, int] | None = None) -> ImageTensor:
    """Decode PNG/JPEG bytes; same contract as load_image."""
    import io

    try:
        with Image.open(io.BytesIO(data)) as im:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float32) / 255.0
    except Exception as exc:
        raise ValueError(f"cannot decode image bytes: {exc}") from exc
    img = ImageTensor(arr)
    if target_size is not None:
        img = resize_bilinear(img, (int(target_size[0]), int(target_size[1])))
    return img


def save_image(img: ImageTensor, path: str | Path) -> None:
    """Write as 8-bit PNG (values rounded to the nearest quantization step)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def encode_png(img: ImageTensor) -> bytes:
    import io

    arr = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def psnr(a: ImageTensor, b: ImageTensor) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] rasters; inf on exact match."""
    if a.size != b.size:
        raise ValueError(f"size mismatch: {a.size} vs {b.size}")
    mse = float(np.mean((a.pixels.astype(np.float64) - b.pixels.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


@dataclass(frozen=True)
class StyleSeed:
    """A style image with its identity, memorability score under the internal
    scorer, and an optional reference to a trained per-seed synthesis model."""

    seed_id: str
    image: ImageTensor
    memorability: float
    model_ref: str | None = None

    def __post_init__(self):
        if not self.seed_id:
            raise ValueError("seed_id must be non-empty")
        if not (0.0 <= self.memorability <= 1.0):
            raise ValueError(f"memorability must be in [0, 1], got {self.memorability}")


@dataclass(frozen=True)
class SeedCatalog:
    """Ordered, stable list of style seeds.

    The ordering defines the column index used by gap matrices and by the
    selector's output components.
    """

    seeds: tuple[StyleSeed, ...]

    def __post_init__(self):
        seeds = tuple(self.seeds)
        ids = [s.seed_id for s in seeds]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate seed ids in catalog: {dupes}")
        object.__setattr__(self, "seeds", seeds)

    def __len__(self) -> int:
        return len(self.seeds)

    def __iter__(self) -> Iterator[StyleSeed]:
        return iter(self.seeds)

    def __getitem__(self, idx: int) -> StyleSeed:
        return self.seeds[idx]

    @property
    def size(self) -> int:
        return len(self.seeds)

    @property
    def seed_ids(self) -> tuple[str, ...]:
        return tuple(s.seed_id for s in self.seeds)

    def by_id(self, seed_id: str) -> StyleSeed:
        for s in self.seeds:
            if s.seed_id == seed_id:
                return s
        raise KeyError(f"unknown seed id: {seed_id}")

    def index_of(self, seed_id: str) -> int:
        for i, s in enumerate(self.seeds):
            if s.seed_id == seed_id:
                return i
        raise KeyError(f"unknown seed id: {seed_id}")

    def with_model_ref(self, seed_id: str, model_ref: str) -> "SeedCatalog":
        seeds = tuple(
            replace(s, model_ref=model_ref) if s.seed_id == seed_id else s
            for s in self.seeds
        )
        return SeedCatalog(seeds)

    def subset(self, seed_ids: Sequence[str]) -> "SeedCatalog":
        return SeedCatalog(tuple(self.by_id(sid) for sid in seed_ids))


def select_seed_pool(
    candidates: Sequence[ImageTensor],
    scorer,
    k: int,
    ids: Sequence[str] | None = None,
) -> SeedCatalog:
    """Pick the k most and k least memorable candidates as the seed pool.

    Candidates are sorted by (score, original index) ascending; the pool is
    the last k (most memorable, listed by descending score) followed by the
    first k (least memorable, listed by ascending score). The index
    tie-break makes the selection deterministic when scores collide.
    """
    from .scoring import predict_score

    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(candidates) < 2 * k:
        raise ValueError(
            f"need at least {2 * k} candidates for k={k}, got {len(candidates)}"
        )
    if ids is None:
        ids = [f"seed{i:04d}" for i in range(len(candidates))]
    elif len(ids) != len(candidates):
        raise ValueError("ids and candidates must have equal length")

    scored = [
        (predict_score(scorer, img), i) for i, img in enumerate(candidates)
    ]
    order = sorted(range(len(candidates)), key=lambda i: (scored[i][0], i))
    top = list(reversed(order[-k:]))
    bottom = order[:k]
    seeds = tuple(
        StyleSeed(seed_id=ids[i], image=candidates[i], memorability=float(scored[i][0]))
        for i in top + bottom
    )
    return SeedCatalog(seeds)


def save_catalog(catalog: SeedCatalog, directory: str | Path) -> None:
    """Persist a catalog as a directory of PNG images plus a manifest file."""
    directory = Path(directory)
    (directory / "images").mkdir(parents=True, exist_ok=True)
    with open(directory / CATALOG_MANIFEST, "w") as fh:
        for seed in catalog:
            rel = f"images/{seed.seed_id}.png"
            save_image(seed.image, directory / rel)
            record = {
                "seed_id": seed.seed_id,
                "path": rel,
                "memorability": seed.memorability,
                "model_ref": seed.model_ref,
            }
            fh.write(json.dumps(record) + "\n")


def load_catalog(directory: str | Path) -> SeedCatalog:
    directory = Path(directory)
    manifest = directory / CATALOG_MANIFEST
    if not manifest.exists():
        raise FileNotFoundError(f"no catalog manifest at {manifest}")
    seeds = []
    with open(manifest) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            img = load_image(directory / rec["path"])
            seeds.append(
                StyleSeed(
                    seed_id=rec["seed_id"],
                    image=img,
                    memorability=float(rec["memorability"]),
                    model_ref=rec.get("model_ref"),
                )
            )
    return SeedCatalog(tuple(seeds))
