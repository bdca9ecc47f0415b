"""Memorability scoring: small convolutional regressors, analytic oracle
scorers, disjoint-split training protocol and rank-correlation evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import torch
import torch.nn as nn
from scipy import stats

from .images import CANONICAL_SCORE_SIZE, ImageTensor, resize_bilinear

TAG_INTERNAL = "M"
TAG_EXTERNAL = "E"

# Per-pixel channel std of a maximally colorful pixel, e.g. (0, 0, 1).
_COLORFULNESS_SCALE = np.sqrt(2.0) / 3.0

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass
class TrainConfig:
    """Hyperparameters for scorer and selector training runs."""

    iterations: int = 400
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 64
    rng_seed: int = 0
    input_size: tuple[int, int] = CANONICAL_SCORE_SIZE
    backbone: str = "small"
    val_check_every: int = 25
    early_stop_patience: int = 8  # in validation checks; 0 disables early stopping


@dataclass(frozen=True)
class ScoredDataset:
    """Images annotated with memorability labels in [0, 1]."""

    items: tuple[tuple[ImageTensor, float], ...]

    def __post_init__(self):
        items = tuple((img, float(lbl)) for img, lbl in self.items)
        for _, lbl in items:
            if not (0.0 <= lbl <= 1.0):
                raise ValueError(f"label outside [0, 1]: {lbl}")
        object.__setattr__(self, "items", items)

    def __len__(self) -> int:
        return len(self.items)

    @property
    def images(self) -> tuple[ImageTensor, ...]:
        return tuple(img for img, _ in self.items)

    @property
    def labels(self) -> np.ndarray:
        return np.array([lbl for _, lbl in self.items], dtype=np.float64)


BACKBONE_WIDTHS = {
    "small": (16, 32, 64),
    "wide": (32, 64, 128),
}


def build_trunk(backbone: str) -> tuple[nn.Module, int]:
    """Stride-2 conv stack with global average pooling; returns (trunk, feat_dim)."""
    if backbone not in BACKBONE_WIDTHS:
        raise ValueError(
            f"unknown backbone {backbone!r}; available: {sorted(BACKBONE_WIDTHS)}"
        )
    w1, w2, w3 = BACKBONE_WIDTHS[backbone]
    trunk = nn.Sequential(
        nn.Conv2d(3, w1, 3, stride=2, padding=1),
        nn.ReLU(),
        nn.Conv2d(w1, w2, 3, stride=2, padding=1),
        nn.ReLU(),
        nn.Conv2d(w2, w3, 3, stride=2, padding=1),
        nn.ReLU(),
        nn.AdaptiveAvgPool2d(1),
        nn.Flatten(),
    )
    return trunk, w3


class ConvRegressor(nn.Module):
    """Conv trunk plus a hidden dense layer and a bounded scalar output."""

    def __init__(self, backbone: str = "small", hidden: int = 64):
        super().__init__()
        trunk, feat = build_trunk(backbone)
        self.trunk = trunk
        self.head = nn.Sequential(
            nn.Linear(feat, hidden), nn.ReLU(), nn.Linear(hidden, 1), nn.Sigmoid()
        )

    def forward(self, x):
        return self.head(self.trunk(x))


def seed_module_params_(module: nn.Module, rng_seed: int) -> None:
    """Overwrite all parameters deterministically from the given seed.

    Weights get fan-in scaled normal init, biases zero. Module construction
    order fixes the parameter order, so the result is reproducible.
    """
    g = torch.Generator().manual_seed(int(rng_seed))
    for name, p in module.named_parameters():
        with torch.no_grad():
            if p.ndim > 1:
                fan_in = int(np.prod(p.shape[1:]))
                std = (2.0 / max(fan_in, 1)) ** 0.5
                p.copy_(torch.randn(p.shape, generator=g, dtype=torch.float32) * std)
            else:
                p.zero_()


class ScorerModel:
    """Memorability scorer: either a trained ConvRegressor or an analytic oracle.

    Prediction output is always in [0, 1]. Instances are immutable once
    trained and safe to share across threads for prediction.
    """

    def __init__(
        self,
        tag: str,
        input_size: tuple[int, int],
        net: ConvRegressor | None = None,
        oracle: str | None = None,
        backbone: str | None = None,
        rng_seed: int | None = None,
        train_config: dict | None = None,
    ):
        if (net is None) == (oracle is None):
            raise ValueError("exactly one of net or oracle must be given")
        if oracle is not None and oracle not in ORACLES:
            raise ValueError(f"unknown oracle {oracle!r}; available: {sorted(ORACLES)}")
        self.tag = tag
        self.input_size = (int(input_size[0]), int(input_size[1]))
        self.net = net
        self.oracle = oracle
        self.backbone = backbone
        self.rng_seed = rng_seed
        self.train_config = train_config
        if net is not None:
            net.eval()

    @property
    def is_oracle(self) -> bool:
        return self.oracle is not None


def _brightness(px: np.ndarray) -> float:
    """Mean luma (Rec. 601 weights)."""
    return float(np.mean(px.astype(np.float64) @ _LUMA))


def _brightness_rgb(px: np.ndarray) -> float:
    """Mean pixel value over all channels."""
    return float(np.mean(px.astype(np.float64)))


def _colorfulness(px: np.ndarray) -> float:
    """Mean per-pixel channel standard deviation, scaled into [0, 1]."""
    std = np.std(px.astype(np.float64), axis=2)
    return float(np.clip(np.mean(std) / _COLORFULNESS_SCALE, 0.0, 1.0))


ORACLES: dict[str, Callable[[np.ndarray], float]] = {
    "brightness": _brightness,
    "brightness_rgb": _brightness_rgb,
    "colorfulness": _colorfulness,
}


def oracle_scorer(name: str, input_size: tuple[int, int] = CANONICAL_SCORE_SIZE) -> ScorerModel:
    return ScorerModel(tag=name, input_size=input_size, oracle=name)


def image_batch_tensor(
    images: Sequence[ImageTensor], size: tuple[int, int]
) -> torch.Tensor:
    """Stack images as a float32 NCHW tensor, resizing to the given size."""
    arrs = [resize_bilinear(img, size).pixels for img in images]
    batch = np.stack(arrs).transpose(0, 3, 1, 2)
    return torch.from_numpy(np.ascontiguousarray(batch, dtype=np.float32))


def predict_score(model: ScorerModel, image: ImageTensor) -> float:
    """Memorability of one image; pure function of (model, image)."""
    resized = resize_bilinear(image, model.input_size)
    if model.is_oracle:
        return ORACLES[model.oracle](resized.pixels)
    with torch.no_grad():
        x = image_batch_tensor([resized], model.input_size)
        out = model.net(x)
    return float(np.clip(out.item(), 0.0, 1.0))


def predict_scores(model: ScorerModel, images: Sequence[ImageTensor]) -> np.ndarray:
    """Vectorized predict_score over a list of images."""
    if model.is_oracle:
        fn = ORACLES[model.oracle]
        return np.array(
            [fn(resize_bilinear(img, model.input_size).pixels) for img in images],
            dtype=np.float64,
        )
    with torch.no_grad():
        x = image_batch_tensor(images, model.input_size)
        out = model.net(x).numpy().reshape(-1)
    return np.clip(out.astype(np.float64), 0.0, 1.0)


class _BatchStream:
    """Deterministic mini-batch index stream: reshuffled epochs, contiguous chunks."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self._perm = rng.permutation(n)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos + self.batch_size > self.n:
            self._perm = self.rng.permutation(self.n)
            self._pos = 0
        out = self._perm[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return out


def train_scorer(data: ScoredDataset, config: TrainConfig) -> ScorerModel:
    """Fit a convolutional memorability regressor with SGD + momentum.

    Deterministic given config.rng_seed; the trained model's mean squared
    training error never exceeds its value at initialization.
    """
    if len(data) == 0:
        raise ValueError("cannot train a scorer on an empty dataset")
    x = image_batch_tensor(data.images, config.input_size)
    y = torch.tensor(data.labels, dtype=torch.float32).reshape(-1, 1)

    net = ConvRegressor(backbone=config.backbone)
    seed_module_params_(net, config.rng_seed)
    opt = torch.optim.SGD(
        net.parameters(), lr=config.learning_rate, momentum=config.momentum
    )
    rng = np.random.default_rng(config.rng_seed)
    stream = _BatchStream(len(data), config.batch_size, rng)

    def full_mse() -> float:
        with torch.no_grad():
            return float(((net(x) - y) ** 2).mean())

    initial_mse = full_mse()
    init_state = {k: v.clone() for k, v in net.state_dict().items()}
    init_mse = initial_mse
    net.train()
    for _ in range(config.iterations):
        idx = torch.from_numpy(stream.next().copy())
        opt.zero_grad()
        loss = ((net(x[idx]) - y[idx]) ** 2).mean()
        loss.backward()
        opt.step()
    net.eval()
    # keep the better of {initial, final} so training can never worsen the fit
    if full_mse() > init_mse:
        net.load_state_dict(init_state)
    return ScorerModel(
        tag=TAG_INTERNAL,
        input_size=config.input_size,
        net=net,
        backbone=config.backbone,
        rng_seed=config.rng_seed,
        train_config=asdict(config),
    )


def split_scored_dataset(
    data: ScoredDataset, rng_seed: int
) -> tuple[ScoredDataset, ScoredDataset]:
    """Partition into two disjoint halves by a seeded index shuffle.

    Mirrors the protocol of training an internal and an external scorer on
    disjoint data so the second can serve as an independent judge.
    """
    n = len(data)
    if n < 2:
        raise ValueError("need at least 2 items to split")
    perm = np.random.default_rng(rng_seed).permutation(n)
    half = (n + 1) // 2
    first = tuple(data.items[i] for i in perm[:half])
    second = tuple(data.items[i] for i in perm[half:])
    return ScoredDataset(first), ScoredDataset(second)


def rank_correlation(predicted: Sequence[float], actual: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties."""
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if predicted.shape != actual.shape or predicted.ndim != 1:
        raise ValueError(
            f"length mismatch: {predicted.shape} vs {actual.shape}"
        )
    if predicted.size < 2:
        raise ValueError("need at least 2 values")
    rho = stats.spearmanr(predicted, actual).statistic
    if not np.isfinite(rho):
        raise ValueError("rank correlation undefined (constant input)")
    return float(rho)


# --- checkpoint persistence: raw float32 blob + JSON sidecar manifest ---


def _write_checkpoint(base: Path, meta: dict, named_params: Iterable[tuple[str, torch.Tensor]]) -> None:
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    # append, don't with_suffix: base names may legitimately contain dots
    blobs = []
    params_meta = []
    for name, p in named_params:
        arr = p.detach().numpy().astype("<f4")
        params_meta.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    manifest = dict(meta)
    manifest["parameters"] = params_meta
    with open(base.parent / (base.name + ".bin"), "wb") as fh:
        fh.write(b"".join(blobs))
    with open(base.parent / (base.name + ".json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def _read_checkpoint(base: Path) -> tuple[dict, dict[str, np.ndarray]]:
    base = Path(base)
    manifest_path = base.parent / (base.name + ".json")
    blob_path = base.parent / (base.name + ".bin")
    if not manifest_path.exists() or not blob_path.exists():
        raise FileNotFoundError(f"no checkpoint at {base}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    raw = blob_path.read_bytes()
    params = {}
    offset = 0
    for pm in manifest.get("parameters", []):
        count = int(np.prod(pm["shape"])) if pm["shape"] else 1
        nbytes = count * 4
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        params[pm["name"]] = arr.reshape(pm["shape"]).copy()
        offset += nbytes
    if offset != len(raw):
        raise ValueError(f"checkpoint blob size mismatch at {base}")
    return manifest, params


def _load_params_(net: nn.Module, params: dict[str, np.ndarray]) -> None:
    state = net.state_dict()
    if set(state) != set(params):
        raise ValueError("checkpoint parameters do not match architecture")
    for name in state:
        state[name] = torch.from_numpy(params[name].astype(np.float32))
    net.load_state_dict(state)


def save_scorer(model: ScorerModel, base: str | Path) -> None:
    meta = {
        "kind": "scorer",
        "tag": model.tag,
        "input_size": list(model.input_size),
        "architecture": "oracle:" + model.oracle if model.is_oracle else f"conv_regressor/{model.backbone}",
        "rng_seed": model.rng_seed,
        "train_config": model.train_config,
    }
    named = [] if model.is_oracle else list(model.net.named_parameters())
    _write_checkpoint(Path(base), meta, named)


def load_scorer(base: str | Path) -> ScorerModel:
    manifest, params = _read_checkpoint(Path(base))
    if manifest.get("kind") != "scorer":
        raise ValueError(f"not a scorer checkpoint: {base}")
    input_size = tuple(manifest["input_size"])
    arch = manifest["architecture"]
    if arch.startswith("oracle:"):
        return ScorerModel(tag=manifest["tag"], input_size=input_size, oracle=arch.split(":", 1)[1])
    backbone = arch.split("/", 1)[1]
    net = ConvRegressor(backbone=backbone)
    _load_params_(net, params)
    return ScorerModel(
        tag=manifest["tag"],
        input_size=input_size,
        net=net,
        backbone=backbone,
        rng_seed=manifest.get("rng_seed"),
        train_config=manifest.get("train_config"),
    )


def resolve_scorer(spec: str | Path) -> ScorerModel:
    """Resolve "oracle:<name>" or a checkpoint base path to a ScorerModel."""
    spec = str(spec)
    if spec.startswith("oracle:"):
        return oracle_scorer(spec.split(":", 1)[1])
    return load_scorer(spec)
