"""Pipeline configuration: one JSON file, a handful of environment overrides
for deploy-time knobs (port, model paths), defaults for everything else."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace, fields
from pathlib import Path


@dataclass(frozen=True)
class PipelineConfig:
    workspace: str = "workspace"
    scorer_path: str = "workspace/models/scorer"
    selector_path: str = "workspace/models/selector"
    catalog_dir: str = "workspace/catalog"
    store_dir: str = "workspace/store"
    host: str = "127.0.0.1"
    port: int = 8008
    max_upload_bytes: int = 8 * 1024 * 1024
    synth_size: tuple[int, int] = (256, 256)
    synth_iterations: int = 120
    synth_step_size: float = 0.05
    default_alpha: float = 2.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.port < 1 or self.port > 65535:
            raise ValueError(f"port out of range: {self.port}")
        if self.max_upload_bytes < 1:
            raise ValueError("max_upload_bytes must be positive")
        if self.default_alpha < 0:
            raise ValueError("default_alpha must be >= 0")
        object.__setattr__(self, "synth_size", tuple(int(v) for v in self.synth_size))


_ENV_OVERRIDES = {
    "MEMOSTYLE_PORT": ("port", int),
    "MEMOSTYLE_HOST": ("host", str),
    "MEMOSTYLE_SCORER": ("scorer_path", str),
    "MEMOSTYLE_SELECTOR": ("selector_path", str),
    "MEMOSTYLE_CATALOG": ("catalog_dir", str),
    "MEMOSTYLE_STORE": ("store_dir", str),
}


def load_config(path: str | Path | None = None, env: dict | None = None) -> PipelineConfig:
    """Defaults <- JSON file (if given) <- environment overrides."""
    values: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text())
        known = {f.name for f in fields(PipelineConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys in {path}: {sorted(unknown)}")
        values.update(raw)
    cfg = PipelineConfig(**values)
    env = os.environ if env is None else env
    overrides = {}
    for var, (field_name, cast) in _ENV_OVERRIDES.items():
        if var in env and env[var] != "":
            try:
                overrides[field_name] = cast(env[var])
            except ValueError as exc:
                raise ValueError(f"bad value for {var}: {env[var]!r}") from exc
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg
