#!/usr/bin/env python3
"""Build a self-contained demo workspace: synthetic images, a brightness
seed catalog, a full-observation gap file, a trained selector, and a config
file the HTTP server can start from directly.

The whole pipeline runs on the analytic brightness oracle so the workspace
builds in well under a minute on a laptop CPU.

    python3 scripts/build_demo_workspace.py --out workspace
    python3 -m memostyle.cli serve --config workspace/config.json
"""

import json
from pathlib import Path

import click
import numpy as np

from memostyle.gaps import GapHeader, build_gap_dataset
from memostyle.images import save_catalog, save_image
from memostyle.scoring import TrainConfig, oracle_scorer
from memostyle.selection import save_selector, train_selector
from memostyle.synthetic import (
    DEFAULT_SEED_LEVELS,
    blend_synth,
    brightness_seed_catalog,
    synthetic_image_store,
)


@click.command()
@click.option("--out", default="workspace", show_default=True, help="workspace directory")
@click.option("--images", "image_count", default=80, show_default=True)
@click.option("--size", default="64x64", show_default=True, help="demo image resolution HxW")
@click.option("--beta", default=0.4, show_default=True, help="blend strength for gap generation")
@click.option("--iterations", default=400, show_default=True, help="selector training steps")
@click.option("--rng-seed", default=0, show_default=True)
def main(out, image_count, size, beta, iterations, rng_seed):
    root = Path(out)
    h, w = (int(v) for v in size.lower().split("x"))
    oracle = oracle_scorer("brightness")

    click.echo(f"generating {image_count} demo images ...")
    store = synthetic_image_store(image_count, (h, w), rng_seed=rng_seed)
    images_dir = root / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    for image_id, image in store.items():
        save_image(image, images_dir / f"{image_id}.png")

    catalog = brightness_seed_catalog(DEFAULT_SEED_LEVELS, size=(h, w))
    save_catalog(catalog, root / "catalog")
    click.echo(f"catalog: {catalog.size} seeds")

    ids = sorted(store)
    gaps_path = root / "gaps.jsonl"
    gm = build_gap_dataset(
        [store[g] for g in ids],
        catalog,
        oracle,
        blend_synth(beta),
        np.ones((len(ids), catalog.size), dtype=np.uint8),
        image_ids=ids,
        out_path=gaps_path,
        header=GapHeader(omega_target=1.0, rng_seed=rng_seed,
                         scorer_tag=oracle.tag, alpha=2.0),
    )
    click.echo(f"gaps: {gm.observed_count} observed pairs -> {gaps_path}")

    click.echo("training selector ...")
    cfg = TrainConfig(
        iterations=iterations,
        learning_rate=3e-3,
        batch_size=64,
        input_size=(h, w),
        rng_seed=rng_seed,
    )
    model = train_selector(gm, store, cfg)
    selector_base = root / "models" / "selector"
    selector_base.parent.mkdir(parents=True, exist_ok=True)
    save_selector(model, selector_base)

    config = {
        "workspace": str(root),
        "scorer_path": "oracle:brightness",
        "selector_path": str(selector_base),
        "catalog_dir": str(root / "catalog"),
        "store_dir": str(root / "store"),
        "synth_size": [h, w],
        "rng_seed": rng_seed,
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=2) + "\n")
    click.echo(f"config: {config_path}")
    click.echo(f"serve with: python3 -m memostyle.cli serve --config {config_path}")


if __name__ == "__main__":
    main()
