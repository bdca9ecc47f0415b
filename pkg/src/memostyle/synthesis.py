"""Style transfer: Gram-matrix style loss, feature content loss, per-pair
pixel optimization, and optional per-seed feed-forward networks.

All numerics run in float64 so analytic gradients agree tightly with
finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .images import ImageTensor, StyleSeed
from .scoring import _read_checkpoint, _write_checkpoint, seed_module_params_

DEFAULT_CHANNELS = (16, 24, 32, 32)
DEFAULT_STRIDES = (1, 2, 2, 1)


class SynthesisNumericalError(RuntimeError):
    """Raised when the synthesis objective or gradient turns non-finite."""

    def __init__(self, iteration: int, detail: str = ""):
        self.iteration = iteration
        msg = f"non-finite synthesis objective at iteration {iteration}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


@dataclass(frozen=True)
class SynthesisConfig:
    """Knobs for the per-pair optimization.

    alpha weighs the style term against content preservation; step_size is
    the initial gradient step (adapted by backtracking) or the learning
    rate when training a per-seed network.
    """

    alpha: float = 2.0
    iterations: int = 120
    step_size: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")


class FeatureExtractor:
    """Fixed random-weight convolutional stack used as the feature space for
    content and style losses.

    Weights are frozen for the lifetime of the extractor and fully
    determined by rng_seed, so two extractors built from the same seed are
    identical. A pretrained descriptor network could be dropped in behind
    the same interface.
    """

    def __init__(
        self,
        rng_seed: int = 0,
        channels: Sequence[int] = DEFAULT_CHANNELS,
        strides: Sequence[int] = DEFAULT_STRIDES,
        content_layer: int = 2,
        style_layers: Sequence[int] = (1, 2, 3, 4),
    ):
        if len(channels) != len(strides):
            raise ValueError("channels and strides must have equal length")
        n = len(channels)
        if not (1 <= content_layer <= n):
            raise ValueError(f"content_layer must be in 1..{n}")
        if not style_layers or any(not (1 <= l <= n) for l in style_layers):
            raise ValueError(f"style_layers must be within 1..{n}")
        self.rng_seed = int(rng_seed)
        self.channels = tuple(int(c) for c in channels)
        self.strides = tuple(int(s) for s in strides)
        self.content_layer = int(content_layer)
        self.style_layers = tuple(int(l) for l in style_layers)

        rng = np.random.default_rng(self.rng_seed)
        in_ch = 3
        weights = []
        for out_ch in self.channels:
            fan_in = in_ch * 9
            w = rng.standard_normal((out_ch, in_ch, 3, 3)) * np.sqrt(2.0 / fan_in)
            weights.append(torch.from_numpy(w.astype(np.float64)))
            in_ch = out_ch
        for w in weights:
            w.requires_grad_(False)
        self.weights = weights

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Activations of every layer for a (1, 3, H, W) float64 tensor."""
        feats = []
        h = x
        for w, s in zip(self.weights, self.strides):
            h = F.relu(F.conv2d(h, w, stride=s, padding=1))
            feats.append(h)
        return feats


def _to_unit_tensor(img: ImageTensor) -> torch.Tensor:
    arr = img.pixels.astype(np.float64).transpose(2, 0, 1)[None]
    return torch.from_numpy(np.ascontiguousarray(arr))


def _to_image(x: torch.Tensor) -> ImageTensor:
    arr = x.detach().numpy()[0].transpose(1, 2, 0)
    return ImageTensor(np.clip(arr, 0.0, 1.0))


def gram_matrix(features):
    """Channel inner-product matrix of a (C, H, W) feature map, normalized by
    C*H*W. Returns the same array type as the input (numpy or torch)."""
    is_numpy = isinstance(features, np.ndarray)
    t = torch.as_tensor(features, dtype=torch.float64) if is_numpy else features
    if t.ndim != 3 or t.numel() == 0:
        raise ValueError(f"expected a non-empty (C, H, W) feature map, got shape {tuple(t.shape)}")
    c, h, w = t.shape
    flat = t.reshape(c, h * w)
    g = flat @ flat.T / float(c * h * w)
    return g.numpy() if is_numpy else g


@dataclass(frozen=True)
class StyleTarget:
    """Per-layer Gram matrices of a style image; symmetric and PSD."""

    grams: tuple[torch.Tensor, ...]
    style_layers: tuple[int, ...]


def style_targets(image: ImageTensor, fx: FeatureExtractor) -> StyleTarget:
    with torch.no_grad():
        feats = fx.features(_to_unit_tensor(image))
    grams = tuple(gram_matrix(feats[l - 1][0]) for l in fx.style_layers)
    return StyleTarget(grams=grams, style_layers=fx.style_layers)


def _style_loss_t(feats: list[torch.Tensor], target: StyleTarget) -> torch.Tensor:
    loss = torch.zeros((), dtype=torch.float64)
    for l, g_target in zip(target.style_layers, target.grams):
        g = gram_matrix(feats[l - 1][0])
        loss = loss + ((g - g_target) ** 2).mean()
    return loss


def style_loss(candidate: ImageTensor, target: StyleTarget, fx: FeatureExtractor) -> float:
    """Sum over style layers of the mean squared Gram difference."""
    if target.style_layers != fx.style_layers:
        raise ValueError(
            f"style layer mismatch: target {target.style_layers} vs extractor {fx.style_layers}"
        )
    with torch.no_grad():
        feats = fx.features(_to_unit_tensor(candidate))
        for l, g in zip(target.style_layers, target.grams):
            if g.shape[0] != feats[l - 1].shape[1]:
                raise ValueError(
                    f"gram size mismatch at layer {l}: target {g.shape[0]} channels, "
                    f"extractor {feats[l - 1].shape[1]}"
                )
        return float(_style_loss_t(feats, target))


def content_loss(candidate: ImageTensor, content: ImageTensor, fx: FeatureExtractor) -> float:
    """Mean squared difference of content-layer features."""
    if candidate.size != content.size:
        raise ValueError(f"resolution mismatch: {candidate.size} vs {content.size}")
    with torch.no_grad():
        fc = fx.features(_to_unit_tensor(candidate))[fx.content_layer - 1]
        ft = fx.features(_to_unit_tensor(content))[fx.content_layer - 1]
        return float(((fc - ft) ** 2).mean())


def _objective_t(
    x: torch.Tensor,
    content_feat: torch.Tensor,
    target: StyleTarget,
    fx: FeatureExtractor,
    alpha: float,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(total, content term, style term) of the synthesis objective."""
    feats = fx.features(x)
    c = ((feats[fx.content_layer - 1] - content_feat) ** 2).mean()
    s = _style_loss_t(feats, target)
    return c + alpha * s, c, s


def objective_and_grad(
    pixels: np.ndarray,
    content: ImageTensor,
    target: StyleTarget,
    fx: FeatureExtractor,
    alpha: float,
) -> tuple[float, np.ndarray]:
    """Total objective and its analytic gradient w.r.t. candidate pixels.

    pixels is an (H, W, 3) array; the gradient has the same shape.
    """
    x = torch.from_numpy(
        np.ascontiguousarray(pixels, dtype=np.float64).transpose(2, 0, 1)[None]
    ).requires_grad_(True)
    with torch.no_grad():
        content_feat = fx.features(_to_unit_tensor(content))[fx.content_layer - 1]
    total, _, _ = _objective_t(x, content_feat, target, fx, alpha)
    total.backward()
    grad = x.grad.detach().numpy()[0].transpose(1, 2, 0)
    return float(total.detach()), grad


@dataclass(frozen=True)
class SynthesisReport:
    initial_total: float
    final_total: float
    final_content: float
    final_style: float
    accepted_steps: int
    iterations_run: int


def synthesize_with_report(
    content: ImageTensor,
    seed: StyleSeed,
    fx: FeatureExtractor,
    config: SynthesisConfig,
) -> tuple[ImageTensor, SynthesisReport]:
    """Minimize content_loss + alpha*style_loss by projected gradient descent.

    Starts from the content image (the exact optimum at alpha=0). Steps are
    accepted only if they strictly decrease the objective; the step size
    backtracks by halving and re-grows after accepted steps, so the
    objective is monotonically non-increasing over accepted steps. Output
    pixels stay clamped to [0, 1]. Deterministic given config.rng_seed.
    """
    target = style_targets(seed.image, fx)
    x = _to_unit_tensor(content)
    with torch.no_grad():
        content_feat = fx.features(x)[fx.content_layer - 1]

    def eval_terms(v: torch.Tensor) -> tuple[float, float, float]:
        with torch.no_grad():
            total, c, s = _objective_t(v, content_feat, target, fx, config.alpha)
        return float(total), float(c), float(s)

    f_x, c_x, s_x = eval_terms(x)
    if not np.isfinite(f_x):
        raise SynthesisNumericalError(0, "initial objective")
    initial_total = f_x
    step = config.step_size
    min_step = config.step_size * 2.0**-24
    accepted = 0
    iterations_run = 0
    for it in range(config.iterations):
        iterations_run = it + 1
        xg = x.clone().requires_grad_(True)
        total, _, _ = _objective_t(xg, content_feat, target, fx, config.alpha)
        if not torch.isfinite(total):
            raise SynthesisNumericalError(it)
        total.backward()
        grad = xg.grad.detach()
        if not torch.all(torch.isfinite(grad)):
            raise SynthesisNumericalError(it, "gradient")
        t = step
        moved = False
        while t >= min_step:
            cand = torch.clamp(x - t * grad, 0.0, 1.0)
            f_cand, c_cand, s_cand = eval_terms(cand)
            if not np.isfinite(f_cand):
                raise SynthesisNumericalError(it, "trial objective")
            if f_cand < f_x:
                x, f_x, c_x, s_x = cand, f_cand, c_cand, s_cand
                moved = True
                break
            t *= 0.5
        if not moved:
            break
        accepted += 1
        step = min(t * 2.0, config.step_size * 4.0)
    report = SynthesisReport(
        initial_total=initial_total,
        final_total=f_x,
        final_content=c_x,
        final_style=s_x,
        accepted_steps=accepted,
        iterations_run=iterations_run,
    )
    return _to_image(x), report


def synthesize(
    content: ImageTensor,
    seed: StyleSeed,
    fx: FeatureExtractor,
    config: SynthesisConfig,
) -> ImageTensor:
    out, _ = synthesize_with_report(content, seed, fx, config)
    return out


# --- optional fast path: one small feed-forward network per seed ---


class SeedStylerNet(torch.nn.Module):
    """Residual image-to-image network; near-identity at initialization."""

    def __init__(self, width: int = 16, residual_scale: float = 0.5):
        super().__init__()
        self.residual_scale = residual_scale
        self.body = torch.nn.Sequential(
            torch.nn.Conv2d(3, width, 3, padding=1),
            torch.nn.ReLU(),
            torch.nn.Conv2d(width, width, 3, padding=1),
            torch.nn.ReLU(),
            torch.nn.Conv2d(width, 3, 3, padding=1),
        )

    def forward(self, x):
        return torch.clamp(x + self.residual_scale * torch.tanh(self.body(x)), 0.0, 1.0)


def train_seed_network(
    seed: StyleSeed,
    training_images: Sequence[ImageTensor],
    fx: FeatureExtractor,
    config: SynthesisConfig,
    out_base: str | Path,
    batch_size: int = 4,
) -> str:
    """Train a per-seed feed-forward styler minimizing the synthesis
    objective in expectation over the training images.

    Writes a checkpoint at out_base(.bin/.json) and returns its base path
    as the model reference. Deterministic given config.rng_seed.
    """
    if len(training_images) == 0:
        raise ValueError("training images must be non-empty")
    target = style_targets(seed.image, fx)
    net = SeedStylerNet().double()
    seed_module_params_(net, config.rng_seed)
    # shrink the last conv so the net starts near the identity mapping
    with torch.no_grad():
        last = net.body[-1]
        last.weight.mul_(0.05)
    opt = torch.optim.Adam(net.parameters(), lr=config.step_size)
    stack = torch.stack([_to_unit_tensor(img)[0] for img in training_images])
    rng = np.random.default_rng(config.rng_seed)

    n = len(training_images)
    bs = min(batch_size, n)
    perm = rng.permutation(n)
    pos = 0
    for _ in range(config.iterations):
        if pos + bs > n:
            perm = rng.permutation(n)
            pos = 0
        idx = torch.from_numpy(perm[pos : pos + bs].copy())
        pos += bs
        xb = stack[idx]
        out = net(xb)
        loss = torch.zeros((), dtype=torch.float64)
        for i in range(xb.shape[0]):
            total, _, _ = _objective_t(
                out[i : i + 1],
                fx.features(xb[i : i + 1])[fx.content_layer - 1],
                target,
                fx,
                config.alpha,
            )
            loss = loss + total
        loss = loss / xb.shape[0]
        opt.zero_grad()
        loss.backward()
        opt.step()

    out_base = Path(out_base)
    meta = {
        "kind": "seed_styler",
        "seed_id": seed.seed_id,
        "alpha": config.alpha,
        "rng_seed": config.rng_seed,
        "iterations": config.iterations,
        "step_size": config.step_size,
        "fx_seed": fx.rng_seed,
    }
    _write_checkpoint(out_base, meta, list(net.named_parameters()))
    return str(out_base)


def apply_seed_network(model_ref: str | Path, image: ImageTensor) -> ImageTensor:
    """Single deterministic forward pass of a trained per-seed styler."""
    manifest, params = _read_checkpoint(Path(model_ref))
    if manifest.get("kind") != "seed_styler":
        raise ValueError(f"not a seed styler checkpoint: {model_ref}")
    net = SeedStylerNet().double()
    state = net.state_dict()
    if set(state) != set(params):
        raise ValueError("checkpoint parameters do not match styler architecture")
    for name in state:
        state[name] = torch.from_numpy(params[name].astype(np.float64))
    net.load_state_dict(state)
    net.eval()
    with torch.no_grad():
        out = net(_to_unit_tensor(image))
    return _to_image(out)
