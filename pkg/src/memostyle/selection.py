"""Seed selection: masked-regression training of the gap predictor, seed
ranking with the keep-original fallback, and the image-independent mean-gap
baseline it must beat."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from torch import nn

from .gaps import GapMatrix
from .images import ImageTensor
from .scoring import (
    BACKBONE_WIDTHS,
    TrainConfig,
    _BatchStream,
    _load_params_,
    _read_checkpoint,
    _write_checkpoint,
    build_trunk,
    image_batch_tensor,
    seed_module_params_,
)


def masked_loss(
    predicted: np.ndarray, target_gaps: np.ndarray, mask: np.ndarray
) -> float:
    """Sum of squared errors over observed components only.

    Unobserved components contribute exactly zero to the value and to the
    gradient; they are multiplied out, not merely down-weighted.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    target_gaps = np.asarray(target_gaps, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if predicted.shape != target_gaps.shape or predicted.shape != mask.shape:
        raise ValueError(
            f"length mismatch: predicted {predicted.shape}, "
            f"target {target_gaps.shape}, mask {mask.shape}"
        )
    diff = predicted - target_gaps
    return float(np.sum(mask * diff * diff))


def masked_loss_grad(
    predicted: np.ndarray, target_gaps: np.ndarray, mask: np.ndarray
) -> np.ndarray:
    """Analytic gradient of masked_loss w.r.t. predicted: 2*mask*(pred - target)."""
    predicted = np.asarray(predicted, dtype=np.float64)
    target_gaps = np.asarray(target_gaps, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if predicted.shape != target_gaps.shape or predicted.shape != mask.shape:
        raise ValueError("length mismatch")
    return 2.0 * mask * (predicted - target_gaps)


class GapRegressor(nn.Module):
    """Small conv trunk with an S-dimensional linear head.

    The head is deliberately unbounded: gaps live in [-1, 1] but typical
    targets are small, and a squashing nonlinearity would distort them.
    """

    def __init__(self, backbone: str, output_dim: int):
        super().__init__()
        trunk, feat = build_trunk(backbone)
        self.trunk = trunk
        self.head = nn.Sequential(nn.Linear(feat, 64), nn.ReLU(), nn.Linear(64, output_dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.trunk(x))


class SelectorModel:
    """Trained image -> predicted-gap-vector regressor, bound to a seed order.

    The output component order is the catalog order that produced the
    training GapMatrix; a selector without its seed binding is meaningless.
    """

    def __init__(
        self,
        net: nn.Module,
        seed_ids: Sequence[str],
        input_size: tuple[int, int],
        backbone: str,
        rng_seed: int,
    ):
        self.net = net
        self.seed_ids = tuple(seed_ids)
        self.input_size = (int(input_size[0]), int(input_size[1]))
        self.backbone = backbone
        self.rng_seed = rng_seed
        self.net.eval()

    @property
    def output_dim(self) -> int:
        return len(self.seed_ids)


def train_selector(
    gaps: GapMatrix,
    images: Mapping[str, ImageTensor],
    config: TrainConfig,
    *,
    val_gaps: GapMatrix | None = None,
    val_images: Mapping[str, ImageTensor] | None = None,
    backbone: str | None = None,
) -> SelectorModel:
    """Minimize summed masked loss by minibatch SGD with momentum.

    When a validation GapMatrix is supplied, validation masked loss is
    checked every config.val_check_every iterations and the best-so-far
    parameters are restored at the end (early stopping). Deterministic
    given config.rng_seed.
    """
    if gaps.observed_count == 0:
        raise ValueError("GapMatrix has no observed entries to train on")
    backbone = backbone or config.backbone
    if backbone not in BACKBONE_WIDTHS:
        raise ValueError(f"unknown backbone {backbone!r}")
    missing = [gid for gid in gaps.image_ids if gid not in images]
    if missing:
        raise ValueError(f"image store lacks ids: {missing[:5]}")

    x = image_batch_tensor([images[gid] for gid in gaps.image_ids], config.input_size)
    y = torch.from_numpy(np.nan_to_num(gaps.gaps, nan=0.0).astype(np.float32))
    w = torch.from_numpy(gaps.mask.astype(np.float32))

    net = GapRegressor(backbone, len(gaps.seed_ids))
    seed_module_params_(net, config.rng_seed)
    opt = torch.optim.SGD(
        net.parameters(), lr=config.learning_rate, momentum=config.momentum
    )
    stream = _BatchStream(
        len(gaps.image_ids), config.batch_size, np.random.default_rng(config.rng_seed)
    )

    if val_gaps is not None:
        val_store = val_images if val_images is not None else images
        vx = image_batch_tensor(
            [val_store[gid] for gid in val_gaps.image_ids], config.input_size
        )
        vy = torch.from_numpy(np.nan_to_num(val_gaps.gaps, nan=0.0).astype(np.float32))
        vw = torch.from_numpy(val_gaps.mask.astype(np.float32))

        def val_loss() -> float:
            net.eval()
            with torch.no_grad():
                diff = net(vx) - vy
                out = float((vw * diff * diff).sum())
            net.train()
            return out

        best_val = val_loss()
        best_state = {k: v.clone() for k, v in net.state_dict().items()}
        stale_checks = 0

    net.train()
    for it in range(config.iterations):
        idx = torch.from_numpy(stream.next().copy())
        opt.zero_grad()
        diff = net(x[idx]) - y[idx]
        # batch-mean of per-image masked sums; rescales but preserves the minimizer
        loss = (w[idx] * diff * diff).sum() / len(idx)
        loss.backward()
        opt.step()
        if val_gaps is not None and (it + 1) % config.val_check_every == 0:
            v = val_loss()
            if v < best_val:
                best_val = v
                best_state = {k: t.clone() for k, t in net.state_dict().items()}
                stale_checks = 0
            else:
                stale_checks += 1
                if stale_checks >= config.early_stop_patience:
                    break
    if val_gaps is not None:
        net.load_state_dict(best_state)
    net.eval()
    return SelectorModel(
        net=net,
        seed_ids=gaps.seed_ids,
        input_size=config.input_size,
        backbone=backbone,
        rng_seed=config.rng_seed,
    )


def predict_gaps(model: SelectorModel, image: ImageTensor) -> np.ndarray:
    """Predicted gap per catalog seed; pure function of (model, image)."""
    with torch.no_grad():
        x = image_batch_tensor([image], model.input_size)
        out = model.net(x).numpy().reshape(-1)
    return out.astype(np.float64)


def predict_gaps_batch(
    model: SelectorModel, images: Sequence[ImageTensor]
) -> np.ndarray:
    """(V, S) predicted gaps for a list of images."""
    with torch.no_grad():
        x = image_batch_tensor(images, model.input_size)
        out = model.net(x).numpy()
    return out.astype(np.float64)


@dataclass(frozen=True)
class SeedRanking:
    """Seeds sorted best-first by predicted gap, with the no-op fallback flag."""

    entries: tuple[tuple[str, float], ...]
    keep_original: bool


def rank_seeds(predicted: Sequence[float], seed_ids: Sequence[str]) -> SeedRanking:
    """Descending by predicted gap; ties broken by catalog index ascending.

    keep_original is true exactly when no seed has a strictly positive
    predicted gap: a zero gain is not worth modifying the image for.
    """
    predicted = [float(v) for v in predicted]
    if len(predicted) != len(seed_ids):
        raise ValueError(
            f"length mismatch: {len(predicted)} predictions, {len(seed_ids)} seeds"
        )
    order = sorted(range(len(predicted)), key=lambda s: (-predicted[s], s))
    entries = tuple((seed_ids[s], predicted[s]) for s in order)
    keep = all(v <= 0.0 for v in predicted)
    return SeedRanking(entries=entries, keep_original=keep)


@dataclass(frozen=True)
class BaselineVector:
    """Image-independent mean observed gap per seed."""

    mean_gaps: tuple[float, ...]
    seed_ids: tuple[str, ...]

    def __post_init__(self):
        if len(self.mean_gaps) != len(self.seed_ids):
            raise ValueError("mean_gaps and seed_ids must have equal length")


def baseline_vector(gaps: GapMatrix) -> BaselineVector:
    """Mask-aware column means; at full mask this is the plain column average."""
    means = []
    for s, sid in enumerate(gaps.seed_ids):
        obs = gaps.mask[:, s] == 1
        if not obs.any():
            raise ValueError(f"seed {sid!r} has no observed gaps; baseline undefined")
        means.append(float(gaps.gaps[obs, s].mean()))
    return BaselineVector(mean_gaps=tuple(means), seed_ids=gaps.seed_ids)


def baseline_predict(baseline: BaselineVector) -> np.ndarray:
    """The same mean-gap vector for every query image, by construction."""
    return np.array(baseline.mean_gaps, dtype=np.float64)


def save_selector(model: SelectorModel, base: str | Path) -> None:
    meta = {
        "kind": "selector",
        "architecture": f"conv_regressor/{model.backbone}",
        "input_size": list(model.input_size),
        "seed_ids": list(model.seed_ids),
        "rng_seed": model.rng_seed,
    }
    _write_checkpoint(Path(base), meta, list(model.net.named_parameters()))


def load_selector(base: str | Path) -> SelectorModel:
    manifest, params = _read_checkpoint(Path(base))
    if manifest.get("kind") != "selector":
        raise ValueError(f"checkpoint {base} is not a selector (kind={manifest.get('kind')!r})")
    if "seed_ids" not in manifest:
        raise ValueError(f"selector checkpoint {base} lacks its seed binding")
    backbone = manifest["architecture"].split("/", 1)[1]
    seed_ids = list(manifest["seed_ids"])
    net = GapRegressor(backbone, len(seed_ids))
    _load_params_(net, params)
    return SelectorModel(
        net=net,
        seed_ids=seed_ids,
        input_size=tuple(manifest["input_size"]),
        backbone=backbone,
        rng_seed=int(manifest.get("rng_seed", 0)),
    )
