"""Evaluation: gap MSE and sign-agreement accuracy, top-N true-gap curves,
and the sweep runner that trains selector + baseline across observation
density, style weight, seed-set size, and backbone."""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .gaps import GapMatrix, build_gap_dataset, sample_mask, split_dataset
from .images import ImageTensor, SeedCatalog, StyleSeed
from .scoring import ScorerModel, TrainConfig, predict_score
from .selection import (
    SeedRanking,
    baseline_predict,
    baseline_vector,
    predict_gaps_batch,
    train_selector,
)

log = logging.getLogger(__name__)

SynthFn = Callable[[ImageTensor, StyleSeed], ImageTensor]


class ConfigurationError(ValueError):
    """A sweep references data or settings that do not exist; raised before
    any training starts."""


def heaviside(x: float) -> int:
    """Step function with H(0) = 0: a zero gap does not count as an increase."""
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"heaviside requires a finite input, got {x}")
    return 1 if x > 0.0 else 0


def _as_grid(name: str, a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D (V, S), got shape {arr.shape}")
    return arr


def mse_metric(true_gaps, predicted) -> float:
    """Mean squared gap error over all V*S image-seed pairs."""
    t = _as_grid("true_gaps", true_gaps)
    p = _as_grid("predicted", predicted)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch: true {t.shape}, predicted {p.shape}")
    if t.size == 0:
        raise ValueError("need at least one image-seed pair")
    return float(np.mean((t - p) ** 2))


def accuracy_metric(true_gaps, predicted) -> float:
    """Fraction of pairs where predicted and true gap signs agree (H(0) = 0)."""
    t = _as_grid("true_gaps", true_gaps)
    p = _as_grid("predicted", predicted)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch: true {t.shape}, predicted {p.shape}")
    if t.size == 0:
        raise ValueError("need at least one image-seed pair")
    ht = (t > 0.0).astype(np.float64)
    hp = (p > 0.0).astype(np.float64)
    return float(np.mean(1.0 - np.abs(ht - hp)))


@dataclass(frozen=True)
class TopNCurve:
    """Mean true gap of each image's top-N predicted seeds, per N."""

    n_values: tuple[int, ...]
    mean_gaps: tuple[float, ...]
    S: int

    def __post_init__(self):
        if len(self.n_values) != len(self.mean_gaps):
            raise ValueError("n_values and mean_gaps must have equal length")


def topn_curve(
    rankings: Sequence[SeedRanking],
    true_gaps,
    n_values: Sequence[int],
    seed_ids: Sequence[str],
) -> TopNCurve:
    """For each N: mean over images of the mean TRUE gap of the image's
    top-N predicted seeds. true_gaps columns follow seed_ids order."""
    t = _as_grid("true_gaps", true_gaps)
    V, S = t.shape
    if len(rankings) != V:
        raise ValueError(f"{len(rankings)} rankings for {V} images")
    if len(seed_ids) != S:
        raise ValueError(f"{len(seed_ids)} seed ids for {S} gap columns")
    col = {sid: s for s, sid in enumerate(seed_ids)}
    means = []
    for n in n_values:
        n = int(n)
        if n < 1 or n > S:
            raise ValueError(f"N must be in [1, {S}], got {n}")
        per_image = []
        for v, ranking in enumerate(rankings):
            if len(ranking.entries) != S:
                raise ValueError(
                    f"ranking {v} covers {len(ranking.entries)} of {S} seeds"
                )
            top = [col[sid] for sid, _ in ranking.entries[:n]]
            per_image.append(float(t[v, top].mean()))
        means.append(float(np.mean(per_image)))
    return TopNCurve(n_values=tuple(int(n) for n in n_values), mean_gaps=tuple(means), S=S)


@dataclass(frozen=True)
class EvalReport:
    """One Table-1-style cell: a (method, scorer) pair at one sweep point."""

    accuracy: float
    mse: float
    scorer_tag: str  # "M" internal, "E" external
    method_tag: str  # "scube" or "baseline"
    alpha: float
    omega_target: float
    omega_bar: float  # realized training-mask density
    seed_count: int
    backbone: str = "small"

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0):
            raise ValueError(f"accuracy must be in [0, 1], got {self.accuracy}")
        if self.mse < 0.0:
            raise ValueError(f"mse must be >= 0, got {self.mse}")
        if self.scorer_tag not in ("M", "E"):
            raise ValueError(f"scorer_tag must be 'M' or 'E', got {self.scorer_tag!r}")
        if self.method_tag not in ("scube", "baseline"):
            raise ValueError(f"method_tag must be 'scube' or 'baseline'")

    def to_record(self) -> dict:
        return {
            "method": self.method_tag,
            "scorer": self.scorer_tag,
            "alpha": self.alpha,
            "omega_target": self.omega_target,
            "omega_bar": self.omega_bar,
            "seed_count": self.seed_count,
            "backbone": self.backbone,
            "accuracy": self.accuracy,
            "mse": self.mse,
        }


@dataclass(frozen=True)
class AlphaData:
    """Everything the sweep needs at one style weight: full-mask train/val
    gap matrices (internal scorer) and the test-grid true gaps per scorer."""

    train_gaps: GapMatrix
    val_gaps: GapMatrix
    test_true: dict[str, np.ndarray]  # scorer tag -> (V, S)


@dataclass(frozen=True)
class ExperimentData:
    catalog: SeedCatalog
    images: Mapping[str, ImageTensor]
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    per_alpha: dict[float, AlphaData]

    @property
    def scorer_tags(self) -> tuple[str, ...]:
        any_alpha = next(iter(self.per_alpha.values()))
        return tuple(any_alpha.test_true.keys())


def prepare_experiment_data(
    images: Mapping[str, ImageTensor],
    catalog: SeedCatalog,
    scorer_m: ScorerModel,
    synth_for_alpha: Callable[[float], SynthFn],
    alphas: Sequence[float],
    *,
    scorer_e: ScorerModel | None = None,
    rng_seed: int = 0,
) -> ExperimentData:
    """Build the expensive, alpha-dependent artifacts exactly once.

    The test-pair grid is synthesized once per alpha and scored with every
    available scorer, so evaluating against the external scorer costs no
    extra synthesis.
    """
    ids = sorted(images.keys())
    train_ids, val_ids, test_ids = split_dataset(ids, (8, 1, 1), rng_seed)
    per_alpha: dict[float, AlphaData] = {}
    for alpha in alphas:
        alpha = float(alpha)
        synth = synth_for_alpha(alpha)
        train_gm = build_gap_dataset(
            [images[g] for g in train_ids],
            catalog,
            scorer_m,
            synth,
            np.ones((len(train_ids), catalog.size), dtype=np.uint8),
            image_ids=train_ids,
        )
        val_gm = build_gap_dataset(
            [images[g] for g in val_ids],
            catalog,
            scorer_m,
            synth,
            np.ones((len(val_ids), catalog.size), dtype=np.uint8),
            image_ids=val_ids,
        )
        scorers = {"M": scorer_m}
        if scorer_e is not None:
            scorers["E"] = scorer_e
        true = {tag: np.zeros((len(test_ids), catalog.size)) for tag in scorers}
        for v, gid in enumerate(test_ids):
            original = images[gid]
            base = {tag: predict_score(sc, original) for tag, sc in scorers.items()}
            for s in range(catalog.size):
                stylized = synth(original, catalog[s])
                for tag, sc in scorers.items():
                    true[tag][v, s] = predict_score(sc, stylized) - base[tag]
        per_alpha[alpha] = AlphaData(
            train_gaps=train_gm, val_gaps=val_gm, test_true=true
        )
    return ExperimentData(
        catalog=catalog,
        images=images,
        train_ids=tuple(train_ids),
        val_ids=tuple(val_ids),
        test_ids=tuple(test_ids),
        per_alpha=per_alpha,
    )


@dataclass(frozen=True)
class SweepSpec:
    """Combination grid for the experiment runner."""

    alphas: tuple[float, ...] = (2.0,)
    omegas: tuple[float, ...] = (1.0,)
    seed_counts: tuple[int, ...] = ()  # empty means the full catalog
    backbones: tuple[str, ...] = ("small",)
    train_config: TrainConfig = field(default_factory=TrainConfig)
    rng_seed: int = 0
    results_path: str | None = None


def _lenient_baseline(train_gm: GapMatrix) -> np.ndarray:
    """Column means with unobserved columns falling back to 0.0.

    Strict baseline_vector refuses fully-unobserved columns; at very low
    mask density the sweep tolerates them as a neutral prediction instead
    of aborting the whole run.
    """
    try:
        return baseline_predict(baseline_vector(train_gm))
    except ValueError:
        means = np.zeros(len(train_gm.seed_ids))
        for s, sid in enumerate(train_gm.seed_ids):
            obs = train_gm.mask[:, s] == 1
            if obs.any():
                means[s] = train_gm.gaps[obs, s].mean()
            else:
                log.warning(
                    "seed %s has no observed training gaps; baseline uses 0.0", sid
                )
        return means


def run_experiment(data: ExperimentData, spec: SweepSpec) -> list[EvalReport]:
    """Train and evaluate selector and baseline at every sweep point.

    Every dataset/setting reference is validated up front so a bad spec
    fails before any training has burned time. Reports come in blocks of
    (method x available scorer tags) per combination, and are appended to
    spec.results_path as line-delimited records when that is set.
    """
    seed_counts = spec.seed_counts or (data.catalog.size,)
    problems = []
    for alpha in spec.alphas:
        if float(alpha) not in data.per_alpha:
            problems.append(f"no prepared dataset for alpha={alpha}")
    for omega in spec.omegas:
        if not (0.0 < omega <= 1.0):
            problems.append(f"omega_target {omega} outside (0, 1]")
    for S in seed_counts:
        if not (1 <= S <= data.catalog.size):
            problems.append(
                f"seed_count {S} outside [1, {data.catalog.size}]"
            )
    from .scoring import BACKBONE_WIDTHS

    for backbone in spec.backbones:
        if backbone not in BACKBONE_WIDTHS:
            problems.append(f"unknown backbone {backbone!r}")
    if problems:
        raise ConfigurationError("; ".join(problems))

    out_fh = None
    if spec.results_path:
        path = Path(spec.results_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        out_fh = open(path, "w")

    reports: list[EvalReport] = []
    combos = list(
        itertools.product(spec.alphas, spec.omegas, seed_counts, spec.backbones)
    )
    try:
        for idx, (alpha, omega, S, backbone) in enumerate(combos):
            alpha = float(alpha)
            ad = data.per_alpha[alpha]
            sub_ids = list(data.catalog.seed_ids[:S])
            train_full = ad.train_gaps.subset_columns(sub_ids)
            val_gm = ad.val_gaps.subset_columns(sub_ids)
            mask = sample_mask(
                len(train_full.image_ids), S, float(omega), spec.rng_seed + idx
            )
            train_gm = train_full.with_mask(mask)
            if train_gm.observed_count == 0:
                log.warning(
                    "combination %d (omega=%s) sampled an empty mask; skipped", idx, omega
                )
                continue
            cfg_kwargs = {
                k: getattr(spec.train_config, k)
                for k in (
                    "iterations",
                    "learning_rate",
                    "momentum",
                    "batch_size",
                    "rng_seed",
                    "input_size",
                    "val_check_every",
                    "early_stop_patience",
                )
            }
            cfg = TrainConfig(backbone=backbone, **cfg_kwargs)
            model = train_selector(
                train_gm, data.images, cfg, val_gaps=val_gm, val_images=data.images
            )
            test_images = [data.images[g] for g in data.test_ids]
            pred = predict_gaps_batch(model, test_images)
            base_row = _lenient_baseline(train_gm)
            base_pred = np.tile(base_row, (len(data.test_ids), 1))
            for tag in ad.test_true:
                true = ad.test_true[tag][:, [data.catalog.seed_ids.index(s) for s in sub_ids]]
                for method, p in (("scube", pred), ("baseline", base_pred)):
                    report = EvalReport(
                        accuracy=accuracy_metric(true, p),
                        mse=mse_metric(true, p),
                        scorer_tag=tag,
                        method_tag=method,
                        alpha=alpha,
                        omega_target=float(omega),
                        omega_bar=train_gm.omega_bar,
                        seed_count=S,
                        backbone=backbone,
                    )
                    reports.append(report)
                    if out_fh is not None:
                        out_fh.write(json.dumps(report.to_record()) + "\n")
            if out_fh is not None:
                out_fh.flush()
    finally:
        if out_fh is not None:
            out_fh.close()
    return reports
