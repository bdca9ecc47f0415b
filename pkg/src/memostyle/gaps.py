"""Gap dataset construction: synthesize image-seed pairs, score memorability
gaps, and sample the observation mask that makes training affordable."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Callable, Mapping, Sequence, TypeVar

import numpy as np

from .images import ImageTensor, SeedCatalog, StyleSeed
from .scoring import ScorerModel, predict_score

log = logging.getLogger(__name__)

T = TypeVar("T")

SynthFn = Callable[[ImageTensor, StyleSeed], ImageTensor]


@dataclass(frozen=True)
class GapHeader:
    """Provenance metadata stored in the first record of a gap file."""

    omega_target: float | None = None
    rng_seed: int | None = None
    scorer_tag: str | None = None
    alpha: float | None = None


@dataclass(frozen=True)
class GapMatrix:
    """G x S memorability gaps with a parallel binary observation mask.

    Unobserved entries are stored as NaN and must never be read; the mask
    is the single source of truth for observedness.
    """

    image_ids: tuple[str, ...]
    seed_ids: tuple[str, ...]
    gaps: np.ndarray  # (G, S) float64, NaN where unobserved
    mask: np.ndarray  # (G, S) uint8

    def __post_init__(self):
        image_ids = tuple(self.image_ids)
        seed_ids = tuple(self.seed_ids)
        gaps = np.array(self.gaps, dtype=np.float64, copy=True)
        mask = np.array(self.mask, dtype=np.uint8, copy=True)
        shape = (len(image_ids), len(seed_ids))
        if gaps.shape != shape or mask.shape != shape:
            raise ValueError(
                f"shape mismatch: gaps {gaps.shape}, mask {mask.shape}, ids {shape}"
            )
        if not np.all((mask == 0) | (mask == 1)):
            raise ValueError("mask must be binary")
        obs = mask == 1
        observed = gaps[obs]
        if not np.all(np.isfinite(observed)):
            raise ValueError("observed gaps must be finite")
        if observed.size and (observed.min() < -1.0 or observed.max() > 1.0):
            raise ValueError("observed gaps must lie in [-1, 1]")
        gaps[~obs] = np.nan
        gaps.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "image_ids", image_ids)
        object.__setattr__(self, "seed_ids", seed_ids)
        object.__setattr__(self, "gaps", gaps)
        object.__setattr__(self, "mask", mask)

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.image_ids), len(self.seed_ids))

    @property
    def omega_bar(self) -> float:
        """Realized mask density: observed entries over G*S."""
        return float(self.mask.sum()) / float(self.mask.size)

    @property
    def observed_count(self) -> int:
        return int(self.mask.sum())

    def with_mask(self, extra_mask: np.ndarray) -> "GapMatrix":
        """Intersect the observation mask with an extra binary mask."""
        extra = np.asarray(extra_mask)
        if extra.shape != self.mask.shape:
            raise ValueError(f"mask shape {extra.shape} != {self.mask.shape}")
        new_mask = (self.mask.astype(bool) & extra.astype(bool)).astype(np.uint8)
        gaps = np.where(new_mask == 1, self.gaps, np.nan)
        return GapMatrix(self.image_ids, self.seed_ids, gaps, new_mask)

    def subset_columns(self, seed_ids: Sequence[str]) -> "GapMatrix":
        idx = [self.seed_ids.index(sid) for sid in seed_ids]
        return GapMatrix(
            self.image_ids, tuple(seed_ids), self.gaps[:, idx], self.mask[:, idx]
        )

    def subset_rows(self, image_ids: Sequence[str]) -> "GapMatrix":
        idx = [self.image_ids.index(gid) for gid in image_ids]
        return GapMatrix(
            tuple(image_ids), self.seed_ids, self.gaps[idx, :], self.mask[idx, :]
        )


def compute_gap(
    original: ImageTensor, synthesized: ImageTensor, scorer: ScorerModel
) -> float:
    """Memorability score of the synthesized image minus the original's."""
    return predict_score(scorer, synthesized) - predict_score(scorer, original)


def sample_mask(G: int, S: int, omega_target: float, rng_seed: int) -> np.ndarray:
    """I.i.d. Bernoulli(omega_target) observation mask; deterministic per seed.

    Rows carry no minimum-observation guarantee: at very low densities whole
    rows may be unobserved, and downstream code must tolerate that regime.
    """
    if not (0.0 < omega_target <= 1.0):
        raise ValueError(f"omega_target must be in (0, 1], got {omega_target}")
    if G < 1 or S < 1:
        raise ValueError(f"mask dims must be positive, got {(G, S)}")
    rng = np.random.default_rng(rng_seed)
    return (rng.random((G, S)) < omega_target).astype(np.uint8)


def _read_gap_file(path: Path) -> tuple[dict, dict[tuple[str, str], float]]:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"empty gap file: {path}")
    header = json.loads(lines[0])
    if "image_ids" not in header or "seed_ids" not in header:
        raise ValueError(f"gap file {path} lacks a header record")
    records = {}
    for ln in lines[1:]:
        rec = json.loads(ln)
        records[(rec["image_id"], rec["seed_id"])] = float(rec["gap"])
    return header, records


def save_gap_matrix(
    gm: GapMatrix, path: str | Path, header: GapHeader | None = None
) -> None:
    """Write as line-delimited records; unobserved entries are simply absent."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = {"image_ids": list(gm.image_ids), "seed_ids": list(gm.seed_ids)}
    head.update(asdict(header or GapHeader()))
    with open(path, "w") as fh:
        fh.write(json.dumps(head) + "\n")
        for g, gid in enumerate(gm.image_ids):
            for s, sid in enumerate(gm.seed_ids):
                if gm.mask[g, s]:
                    rec = {"image_id": gid, "seed_id": sid, "gap": float(gm.gaps[g, s])}
                    fh.write(json.dumps(rec) + "\n")


def load_gap_matrix(path: str | Path) -> tuple[GapMatrix, GapHeader]:
    path = Path(path)
    header, records = _read_gap_file(path)
    image_ids = tuple(header["image_ids"])
    seed_ids = tuple(header["seed_ids"])
    G, S = len(image_ids), len(seed_ids)
    gaps = np.full((G, S), np.nan)
    mask = np.zeros((G, S), dtype=np.uint8)
    col = {sid: s for s, sid in enumerate(seed_ids)}
    row = {gid: g for g, gid in enumerate(image_ids)}
    for (gid, sid), gap in records.items():
        if gid not in row or sid not in col:
            raise ValueError(f"record ({gid}, {sid}) not in header ids of {path}")
        gaps[row[gid], col[sid]] = gap
        mask[row[gid], col[sid]] = 1
    gh = GapHeader(
        omega_target=header.get("omega_target"),
        rng_seed=header.get("rng_seed"),
        scorer_tag=header.get("scorer_tag"),
        alpha=header.get("alpha"),
    )
    return GapMatrix(image_ids, seed_ids, gaps, mask), gh


def build_gap_dataset(
    images: Sequence[ImageTensor],
    catalog: SeedCatalog,
    scorer: ScorerModel,
    synth: SynthFn,
    mask: np.ndarray,
    *,
    image_ids: Sequence[str] | None = None,
    out_path: str | Path | None = None,
    header: GapHeader | None = None,
    resume: bool = True,
    workers: int = 1,
) -> GapMatrix:
    """Synthesize and score every masked image-seed pair.

    Unobserved pairs are never synthesized. When out_path is given, results
    are appended after every completed row so an interrupted run can resume
    without redoing finished pairs. A synthesis failure downgrades the pair
    to unobserved with a logged warning instead of aborting the build.
    """
    mask = np.asarray(mask)
    G, S = len(images), catalog.size
    if mask.shape != (G, S):
        raise ValueError(f"mask shape {mask.shape} != {(G, S)}")
    if image_ids is None:
        image_ids = [f"img{i:05d}" for i in range(G)]
    elif len(image_ids) != G:
        raise ValueError("image_ids and images must have equal length")
    image_ids = list(image_ids)
    seed_ids = list(catalog.seed_ids)

    done: dict[tuple[str, str], float] = {}
    out_fh = None
    if out_path is not None:
        out_path = Path(out_path)
        if resume and out_path.exists():
            existing_header, done = _read_gap_file(out_path)
            if (
                existing_header.get("image_ids") != image_ids
                or existing_header.get("seed_ids") != seed_ids
            ):
                raise ValueError(
                    f"existing gap file {out_path} was built for different ids"
                )
            out_fh = open(out_path, "a")
        else:
            out_path.parent.mkdir(parents=True, exist_ok=True)
            out_fh = open(out_path, "w")
            head = {"image_ids": image_ids, "seed_ids": seed_ids}
            head.update(asdict(header or GapHeader()))
            out_fh.write(json.dumps(head) + "\n")
            out_fh.flush()

    gaps = np.full((G, S), np.nan)
    eff_mask = np.array(mask, dtype=np.uint8, copy=True)

    def compute_pair(g: int, s: int):
        original = images[g]
        seed = catalog[s]
        try:
            stylized = synth(original, seed)
        except Exception as exc:  # noqa: BLE001 - a bad pair must not sink the build
            log.warning(
                "synthesis failed for pair (%s, %s): %s",
                image_ids[g],
                seed.seed_id,
                exc,
            )
            return g, s, None
        return g, s, compute_gap(original, stylized, scorer)

    try:
        for g in range(G):
            jobs = []
            fresh = []
            for s in range(S):
                if not eff_mask[g, s]:
                    continue
                key = (image_ids[g], seed_ids[s])
                if key in done:
                    gaps[g, s] = done[key]
                else:
                    jobs.append((g, s))
            if jobs:
                if workers > 1:
                    with ThreadPoolExecutor(max_workers=workers) as pool:
                        results = list(pool.map(lambda p: compute_pair(*p), jobs))
                else:
                    results = [compute_pair(*p) for p in jobs]
                for gi, si, gap in results:
                    if gap is None:
                        eff_mask[gi, si] = 0
                    else:
                        gaps[gi, si] = gap
                        fresh.append((gi, si, gap))
            if out_fh is not None and fresh:
                for gi, si, gap in fresh:
                    rec = {
                        "image_id": image_ids[gi],
                        "seed_id": seed_ids[si],
                        "gap": float(gap),
                    }
                    out_fh.write(json.dumps(rec) + "\n")
                out_fh.flush()
    finally:
        if out_fh is not None:
            out_fh.close()

    return GapMatrix(tuple(image_ids), tuple(seed_ids), gaps, eff_mask)


def split_dataset(
    items: Sequence[T],
    ratios: tuple[int, int, int] = (8, 1, 1),
    rng_seed: int = 0,
) -> tuple[list[T], list[T], list[T]]:
    """Seeded shuffle, then contiguous slicing into train/val/test.

    Sizes follow the ratios with every part getting at least one item;
    the three parts are disjoint and exhaustive.
    """
    n = len(items)
    total = sum(ratios)
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if n < total:
        raise ValueError(f"need at least {total} items for ratios {ratios}, got {n}")
    n_val = max(1, (n * ratios[1]) // total)
    n_test = max(1, (n * ratios[2]) // total)
    n_train = n - n_val - n_test
    perm = np.random.default_rng(rng_seed).permutation(n)
    train = [items[i] for i in perm[:n_train]]
    val = [items[i] for i in perm[n_train : n_train + n_val]]
    test = [items[i] for i in perm[n_train + n_val :]]
    return train, val, test
