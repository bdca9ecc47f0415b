"""Command-line driver for the pipeline: scorer training, seed-pool
construction, gap generation, selector training, evaluation sweeps, and
one-shot recommendation/stylization."""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from .config import load_config
from .evaluation import (
    SweepSpec,
    prepare_experiment_data,
    run_experiment,
    topn_curve,
)
from .gaps import (
    GapHeader,
    build_gap_dataset,
    load_gap_matrix,
    sample_mask,
)
from .images import (
    ImageTensor,
    load_catalog,
    load_image,
    save_catalog,
    save_image,
    select_seed_pool,
    resize_bilinear,
)
from .scoring import (
    ScoredDataset,
    TrainConfig,
    predict_score,
    predict_scores,
    resolve_scorer,
    save_scorer,
    split_scored_dataset,
    train_scorer,
)
from .selection import (
    load_selector,
    predict_gaps,
    rank_seeds,
    save_selector,
    train_selector,
)
from .synthesis import (
    FeatureExtractor,
    SynthesisConfig,
    apply_seed_network,
    synthesize,
    train_seed_network,
)
from .synthetic import blend_synth

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def _progress(msg: str) -> None:
    """Stdout stays parseable; progress goes to stderr."""
    click.echo(msg, err=True)


def _runtime_errors(fn):
    """Map runtime failures to exit code 1 with a clean one-line message.

    click reserves exit 2 for usage errors; anything that goes wrong after
    argument parsing is a runtime error.
    """

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (OSError, ValueError, KeyError, RuntimeError) as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return (int(h), int(w))
    except Exception:
        raise click.BadParameter(f"expected HxW, got {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}")


def _load_image_store(source: str) -> dict[str, ImageTensor]:
    """Directory of images (ids = file stems) or a jsonl manifest with
    {"id", "path"} records."""
    path = Path(source)
    if path.is_dir():
        files = sorted(
            p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not files:
            raise ValueError(f"no images found in {path}")
        return {p.stem: load_image(p) for p in files}
    store = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            img_path = Path(rec["path"])
            if not img_path.is_absolute():
                img_path = path.parent / img_path
            store[rec.get("id", img_path.stem)] = load_image(img_path)
    if not store:
        raise ValueError(f"manifest {path} holds no records")
    return store


def _load_scored(manifest: str) -> tuple[ScoredDataset, list[str]]:
    """Jsonl manifest with {"path", "score"} records -> labeled dataset."""
    path = Path(manifest)
    items, labels, ids = [], [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            img_path = Path(rec["path"])
            if not img_path.is_absolute():
                img_path = path.parent / img_path
            items.append(load_image(img_path))
            labels.append(float(rec["score"]))
            ids.append(rec.get("id", img_path.stem))
    if not items:
        raise ValueError(f"manifest {path} holds no records")
    return ScoredDataset(tuple(zip(items, labels))), ids


def _make_synth(
    mode: str,
    alpha: float,
    beta: float,
    iterations: int,
    step_size: float,
    rng_seed: int,
):
    if mode == "blend":
        return blend_synth(beta)
    if mode == "network":

        def net_synth(image, seed):
            if not seed.model_ref:
                raise ValueError(f"seed {seed.seed_id} has no trained network")
            return apply_seed_network(seed.model_ref, image)

        return net_synth
    if mode == "style":
        fx = FeatureExtractor(rng_seed=rng_seed)
        cfg = SynthesisConfig(
            alpha=alpha, iterations=iterations, step_size=step_size, rng_seed=rng_seed
        )

        def style_synth(image, seed):
            return synthesize(image, seed, fx, cfg)

        return style_synth
    raise click.BadParameter(f"unknown synth mode {mode!r}")


@click.group()
def cli():
    """Memorability-aware style seed selection pipeline."""


@cli.command("train-scorer")
@click.option("--data", required=True, help="jsonl manifest with {path, score} records")
@click.option("--out", required=True, help="checkpoint base path (writes .bin/.json)")
@click.option("--iterations", default=400, show_default=True)
@click.option("--learning-rate", default=1e-3, show_default=True)
@click.option("--momentum", default=0.9, show_default=True)
@click.option("--batch-size", default=64, show_default=True)
@click.option("--rng-seed", default=0, show_default=True)
@click.option("--input-size", default="224x224", show_default=True)
@click.option("--backbone", default="small", show_default=True)
@click.option("--tag", default="M", type=click.Choice(["M", "E"]), show_default=True)
@click.option("--json", "as_json", is_flag=True)
@_runtime_errors
def cmd_train_scorer(
    data, out, iterations, learning_rate, momentum, batch_size, rng_seed,
    input_size, backbone, tag, as_json,
):
    """Train a memorability scorer on labeled images."""
    dataset, _ = _load_scored(data)
    cfg = TrainConfig(
        iterations=iterations,
        learning_rate=learning_rate,
        momentum=momentum,
        batch_size=batch_size,
        rng_seed=rng_seed,
        input_size=_parse_size(input_size),
        backbone=backbone,
    )
    _progress(f"training scorer on {len(dataset.items)} images ...")
    model = train_scorer(dataset, cfg)
    model.tag = tag
    save_scorer(model, out)
    preds = predict_scores(model, dataset.images)
    mse = float(np.mean((preds - np.array(dataset.labels)) ** 2))
    if as_json:
        click.echo(json.dumps({"checkpoint": out, "train_mse": mse}))
    else:
        click.echo(f"{out} train_mse={mse:.6f}")


@cli.command("split-scorer-data")
@click.option("--data", required=True, help="jsonl manifest with {path, score} records")
@click.option("--out-a", required=True, help="manifest for the internal scorer half")
@click.option("--out-b", required=True, help="manifest for the external scorer half")
@click.option("--rng-seed", default=0, show_default=True)
@_runtime_errors
def cmd_split_scorer_data(data, out_a, out_b, rng_seed):
    """Split labeled data into two disjoint halves (internal/external protocol)."""
    path = Path(data)
    records = [
        json.loads(line)
        for line in path.read_text().splitlines()
        if line.strip()
    ]
    rng = np.random.default_rng(rng_seed)
    perm = rng.permutation(len(records))
    half = (len(records) + 1) // 2
    for out, idx in ((out_a, perm[:half]), (out_b, perm[half:])):
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w") as fh:
            for i in idx:
                rec = dict(records[i])
                rec_path = Path(rec["path"])
                if not rec_path.is_absolute():
                    rec["path"] = str((path.parent / rec_path).resolve())
                fh.write(json.dumps(rec) + "\n")
    click.echo(f"{out_a} ({half} records) {out_b} ({len(records) - half} records)")


@cli.command("build-seeds")
@click.option("--candidates", required=True, help="directory or manifest of candidate style images")
@click.option("--scorer", "scorer_spec", required=True, help="oracle:NAME or checkpoint base path")
@click.option("--k", default=4, show_default=True, help="seeds taken from each extreme")
@click.option("--out", required=True, help="catalog directory")
@_runtime_errors
def cmd_build_seeds(candidates, scorer_spec, k, out):
    """Score candidates and keep the k most and k least memorable as seeds."""
    store = _load_image_store(candidates)
    scorer = resolve_scorer(scorer_spec)
    ids = sorted(store.keys())
    catalog = select_seed_pool([store[i] for i in ids], scorer, k, ids=ids)
    save_catalog(catalog, out)
    click.echo(f"{out} ({catalog.size} seeds)")


@cli.command("train-synth")
@click.option("--catalog", "catalog_dir", required=True)
@click.option("--images", "images_src", required=True, help="training content images")
@click.option("--seed-id", "seed_ids", multiple=True, help="default: every seed")
@click.option("--alpha", default=2.0, show_default=True)
@click.option("--iterations", default=60, show_default=True)
@click.option("--step-size", default=1e-3, show_default=True)
@click.option("--rng-seed", default=0, show_default=True)
@_runtime_errors
def cmd_train_synth(catalog_dir, images_src, seed_ids, alpha, iterations, step_size, rng_seed):
    """Train one feed-forward stylization network per seed and bind it."""
    catalog = load_catalog(catalog_dir)
    store = _load_image_store(images_src)
    images = [store[k] for k in sorted(store)]
    fx = FeatureExtractor(rng_seed=rng_seed)
    cfg = SynthesisConfig(
        alpha=alpha, iterations=iterations, step_size=step_size, rng_seed=rng_seed
    )
    targets = list(seed_ids) if seed_ids else list(catalog.seed_ids)
    net_dir = Path(catalog_dir) / "networks"
    for sid in targets:
        seed = catalog.by_id(sid)
        _progress(f"training network for seed {sid} ...")
        ref = train_seed_network(seed, images, fx, cfg, net_dir / sid)
        catalog = catalog.with_model_ref(sid, ref)
    save_catalog(catalog, catalog_dir)
    click.echo(f"{catalog_dir} ({len(targets)} networks)")


@cli.command("gen-gaps")
@click.option("--images", "images_src", required=True)
@click.option("--catalog", "catalog_dir", required=True)
@click.option("--scorer", "scorer_spec", required=True)
@click.option("--omega", default=1.0, show_default=True)
@click.option("--alpha", default=2.0, show_default=True)
@click.option("--rng-seed", default=0, show_default=True)
@click.option("--out", required=True, help="gap record file (jsonl)")
@click.option("--synth", "synth_mode", default="style", show_default=True,
              type=click.Choice(["style", "blend", "network"]))
@click.option("--beta", default=0.4, show_default=True, help="blend strength for --synth blend")
@click.option("--synth-iterations", default=120, show_default=True)
@click.option("--synth-step-size", default=0.05, show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--resume/--no-resume", default=True, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@_runtime_errors
def cmd_gen_gaps(
    images_src, catalog_dir, scorer_spec, omega, alpha, rng_seed, out,
    synth_mode, beta, synth_iterations, synth_step_size, workers, resume, as_json,
):
    """Synthesize masked image-seed pairs and record memorability gaps."""
    store = _load_image_store(images_src)
    catalog = load_catalog(catalog_dir)
    scorer = resolve_scorer(scorer_spec)
    ids = sorted(store.keys())
    mask = sample_mask(len(ids), catalog.size, omega, rng_seed)
    synth = _make_synth(synth_mode, alpha, beta, synth_iterations, synth_step_size, rng_seed)
    _progress(
        f"building gaps for {len(ids)} images x {catalog.size} seeds "
        f"(omega={omega}, {int(mask.sum())} pairs) ..."
    )
    gm = build_gap_dataset(
        [store[i] for i in ids],
        catalog,
        scorer,
        synth,
        mask,
        image_ids=ids,
        out_path=out,
        header=GapHeader(
            omega_target=omega, rng_seed=rng_seed, scorer_tag=scorer.tag, alpha=alpha
        ),
        resume=resume,
        workers=workers,
    )
    if as_json:
        click.echo(json.dumps({"out": out, "observed": gm.observed_count,
                               "omega_bar": gm.omega_bar}))
    else:
        click.echo(f"{out} observed={gm.observed_count} omega_bar={gm.omega_bar:.4f}")


@cli.command("train-selector")
@click.option("--gaps", "gaps_path", required=True, help="gap record file")
@click.option("--images", "images_src", required=True)
@click.option("--val-gaps", "val_gaps_path", default=None)
@click.option("--out", required=True, help="checkpoint base path")
@click.option("--backbone", default="small", show_default=True)
@click.option("--iterations", default=400, show_default=True)
@click.option("--learning-rate", default=1e-3, show_default=True)
@click.option("--momentum", default=0.9, show_default=True)
@click.option("--batch-size", default=64, show_default=True)
@click.option("--rng-seed", default=0, show_default=True)
@click.option("--input-size", default="32x32", show_default=True)
@_runtime_errors
def cmd_train_selector(
    gaps_path, images_src, val_gaps_path, out, backbone, iterations,
    learning_rate, momentum, batch_size, rng_seed, input_size,
):
    """Train the per-seed gap predictor on observed gaps."""
    gm, _ = load_gap_matrix(gaps_path)
    store = _load_image_store(images_src)
    val_gm = None
    if val_gaps_path:
        val_gm, _ = load_gap_matrix(val_gaps_path)
    cfg = TrainConfig(
        iterations=iterations,
        learning_rate=learning_rate,
        momentum=momentum,
        batch_size=batch_size,
        rng_seed=rng_seed,
        input_size=_parse_size(input_size),
        backbone=backbone,
    )
    _progress(f"training selector on {gm.observed_count} observed gaps ...")
    model = train_selector(gm, store, cfg, val_gaps=val_gm, val_images=store)
    save_selector(model, out)
    click.echo(out)


@cli.command("evaluate")
@click.option("--images", "images_src", required=True)
@click.option("--catalog", "catalog_dir", required=True)
@click.option("--scorer", "scorer_spec", required=True, help="internal scorer")
@click.option("--scorer-e", "scorer_e_spec", default=None, help="external eval scorer")
@click.option("--alphas", default="2.0", show_default=True)
@click.option("--omegas", default="1.0", show_default=True)
@click.option("--seed-counts", default="", help="comma-separated; default full catalog")
@click.option("--backbones", default="small", show_default=True)
@click.option("--synth", "synth_mode", default="blend", show_default=True,
              type=click.Choice(["style", "blend", "network"]))
@click.option("--beta", default=0.4, show_default=True)
@click.option("--synth-iterations", default=40, show_default=True)
@click.option("--synth-step-size", default=0.05, show_default=True)
@click.option("--iterations", default=400, show_default=True)
@click.option("--input-size", default="32x32", show_default=True)
@click.option("--rng-seed", default=0, show_default=True)
@click.option("--out", default=None, help="results record file")
@click.option("--json", "as_json", is_flag=True)
@_runtime_errors
def cmd_evaluate(
    images_src, catalog_dir, scorer_spec, scorer_e_spec, alphas, omegas,
    seed_counts, backbones, synth_mode, beta, synth_iterations, synth_step_size,
    iterations, input_size, rng_seed, out, as_json,
):
    """Run the sweep: train selector + baseline per combination, report
    accuracy and MSE under each available scorer."""
    store = _load_image_store(images_src)
    catalog = load_catalog(catalog_dir)
    scorer_m = resolve_scorer(scorer_spec)
    scorer_e = resolve_scorer(scorer_e_spec) if scorer_e_spec else None
    alpha_values = _parse_floats(alphas)

    def synth_for_alpha(alpha: float):
        return _make_synth(synth_mode, alpha, beta, synth_iterations, synth_step_size, rng_seed)

    _progress("preparing experiment data ...")
    data = prepare_experiment_data(
        store, catalog, scorer_m, synth_for_alpha, alpha_values,
        scorer_e=scorer_e, rng_seed=rng_seed,
    )
    counts = tuple(int(v) for v in _parse_floats(seed_counts)) if seed_counts else ()
    spec = SweepSpec(
        alphas=alpha_values,
        omegas=_parse_floats(omegas),
        seed_counts=counts,
        backbones=tuple(b.strip() for b in backbones.split(",") if b.strip()),
        train_config=TrainConfig(
            iterations=iterations, rng_seed=rng_seed, input_size=_parse_size(input_size)
        ),
        rng_seed=rng_seed,
        results_path=out,
    )
    _progress("running sweep ...")
    reports = run_experiment(data, spec)
    for r in reports:
        if as_json:
            click.echo(json.dumps(r.to_record()))
        else:
            click.echo(
                f"{r.method_tag:8s} {r.scorer_tag} alpha={r.alpha:g} "
                f"omega={r.omega_target:g} S={r.seed_count} {r.backbone} "
                f"acc={r.accuracy:.4f} mse={r.mse:.6f}"
            )


@cli.command("topn")
@click.option("--selector", "selector_path", required=True)
@click.option("--images", "images_src", required=True)
@click.option("--gaps", "gaps_path", required=True, help="true gaps for the same images")
@click.option("--n", "n_text", default="1,3,10,all", show_default=True)
@click.option("--json", "as_json", is_flag=True)
@_runtime_errors
def cmd_topn(selector_path, images_src, gaps_path, n_text, as_json):
    """Mean true gap over each image's top-N predicted seeds."""
    model = load_selector(selector_path)
    store = _load_image_store(images_src)
    gm, _ = load_gap_matrix(gaps_path)
    if list(gm.seed_ids) != list(model.seed_ids):
        raise ValueError("gap file seed order does not match the selector binding")
    if not np.all(gm.mask == 1):
        raise ValueError("topn needs fully observed true gaps")
    missing = [g for g in gm.image_ids if g not in store]
    if missing:
        raise ValueError(f"image store lacks ids: {missing[:5]}")
    S = len(model.seed_ids)
    n_values = []
    for token in n_text.split(","):
        token = token.strip()
        if not token:
            continue
        n_values.append(S if token == "all" else int(token))
    rankings = [
        rank_seeds(predict_gaps(model, store[g]), model.seed_ids)
        for g in gm.image_ids
    ]
    curve = topn_curve(rankings, gm.gaps, n_values, gm.seed_ids)
    if as_json:
        click.echo(json.dumps({"n_values": list(curve.n_values),
                               "mean_gaps": list(curve.mean_gaps), "S": curve.S}))
    else:
        for n, gap in zip(curve.n_values, curve.mean_gaps):
            click.echo(f"{n} {gap!r}")


@cli.command("recommend")
@click.option("--image", "image_path", required=True)
@click.option("--selector", "selector_path", required=True)
@click.option("--top-q", default=3, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@_runtime_errors
def cmd_recommend(image_path, selector_path, top_q, as_json):
    """Print the top-Q seeds for an image, best first."""
    model = load_selector(selector_path)
    if not (1 <= top_q <= len(model.seed_ids)):
        raise ValueError(f"top-q must be in [1, {len(model.seed_ids)}], got {top_q}")
    image = load_image(image_path)
    ranking = rank_seeds(predict_gaps(model, image), model.seed_ids)
    if as_json:
        click.echo(json.dumps({
            "keep_original": ranking.keep_original,
            "recommendations": [
                {"seed_id": sid, "predicted_gap": gap}
                for sid, gap in ranking.entries[:top_q]
            ],
        }))
    else:
        if ranking.keep_original:
            _progress("no seed is predicted to increase memorability")
        for sid, gap in ranking.entries[:top_q]:
            click.echo(f"{sid} {gap!r}")


@cli.command("stylize")
@click.option("--image", "image_path", required=True)
@click.option("--seed", "seed_id", required=True)
@click.option("--catalog", "catalog_dir", required=True)
@click.option("--alpha", default=2.0, show_default=True)
@click.option("--iterations", default=120, show_default=True)
@click.option("--step-size", default=0.05, show_default=True)
@click.option("--rng-seed", default=0, show_default=True)
@click.option("--size", default=None, help="synthesis resolution HxW; default: keep input size")
@click.option("--scorer", "scorer_spec", default=None, help="also report the measured score")
@click.option("--out", required=True)
@click.option("--json", "as_json", is_flag=True)
@_runtime_errors
def cmd_stylize(
    image_path, seed_id, catalog_dir, alpha, iterations, step_size, rng_seed,
    size, scorer_spec, out, as_json,
):
    """Apply one seed to one image and save the result."""
    catalog = load_catalog(catalog_dir)
    seed = catalog.by_id(seed_id)
    image = load_image(image_path)
    if size:
        image = resize_bilinear(image, _parse_size(size))
    if seed.model_ref:
        result = apply_seed_network(seed.model_ref, image)
    else:
        fx = FeatureExtractor(rng_seed=rng_seed)
        cfg = SynthesisConfig(
            alpha=alpha, iterations=iterations, step_size=step_size, rng_seed=rng_seed
        )
        result = synthesize(image, seed, fx, cfg)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    save_image(result, out)
    payload = {"out": out}
    if scorer_spec:
        scorer = resolve_scorer(scorer_spec)
        payload["original"] = predict_score(scorer, image)
        payload["stylized"] = predict_score(scorer, result)
    click.echo(json.dumps(payload) if as_json else " ".join(
        f"{k}={v}" for k, v in payload.items()
    ))


@cli.command("serve")
@click.option("--config", "config_path", default=None, help="pipeline config JSON")
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
@_runtime_errors
def cmd_serve(config_path, host, port):
    """Serve the trained pipeline over HTTP."""
    import uvicorn

    from .service import ServiceRuntime, SessionStore, create_app

    cfg = load_config(config_path)
    scorer = resolve_scorer(cfg.scorer_path)
    selector = load_selector(cfg.selector_path)
    catalog = load_catalog(cfg.catalog_dir)
    ui_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    runtime = ServiceRuntime(
        scorer=scorer,
        selector=selector,
        catalog=catalog,
        store=SessionStore(cfg.store_dir),
        config=cfg,
        ui_dir=ui_dir if ui_dir.is_dir() else None,
    )
    app = create_app(runtime)
    uvicorn.run(app, host=host or cfg.host, port=port or cfg.port)


def main():
    cli(prog_name="memostyle")


if __name__ == "__main__":
    sys.exit(main())
