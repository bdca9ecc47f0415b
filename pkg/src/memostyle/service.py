"""HTTP service: upload an image, get its memorability, browse ranked seed
recommendations, and synthesize stylized variants with full provenance."""

from __future__ import annotations

import json
import secrets
import threading

import anyio
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request, UploadFile
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from . import __version__
from .config import PipelineConfig
from .images import (
    ImageTensor,
    SeedCatalog,
    decode_image,
    encode_png,
    load_image,
    resize_bilinear,
    save_image,
)
from .scoring import ScorerModel, predict_score
from .selection import SelectorModel, predict_gaps, rank_seeds
from .synthesis import (
    FeatureExtractor,
    SynthesisConfig,
    SynthesisNumericalError,
    apply_seed_network,
    synthesize,
)

THUMBNAIL_SIZE = (128, 128)


class SessionStore:
    """Disk-backed store for uploaded images and synthesized results.

    Every artifact is a PNG plus a JSON sidecar, so sessions survive a
    restart. Ids are fresh random 128-bit tokens; identical uploads get
    distinct ids by design.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "images").mkdir(parents=True, exist_ok=True)
        (self.root / "results").mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    @staticmethod
    def _new_id() -> str:
        return secrets.token_hex(16)

    def _paths(self, kind: str, item_id: str) -> tuple[Path, Path]:
        safe = "".join(c for c in item_id if c in "0123456789abcdef")
        if safe != item_id or not item_id:
            raise KeyError(item_id)
        base = self.root / kind / item_id
        return base.with_suffix(".png"), base.with_suffix(".json")

    def put_image(self, image: ImageTensor, meta: dict) -> str:
        item_id = self._new_id()
        png, sidecar = self._paths("images", item_id)
        with self._lock:
            save_image(image, png)
            sidecar.write_text(json.dumps({"image_id": item_id, **meta}))
        return item_id

    def put_result(self, image: ImageTensor, meta: dict) -> str:
        item_id = self._new_id()
        png, sidecar = self._paths("results", item_id)
        with self._lock:
            save_image(image, png)
            sidecar.write_text(json.dumps({"result_id": item_id, **meta}))
        return item_id

    def has_image(self, image_id: str) -> bool:
        try:
            png, _ = self._paths("images", image_id)
        except KeyError:
            return False
        return png.exists()

    def get_image(self, image_id: str) -> ImageTensor:
        png, _ = self._paths("images", image_id)
        if not png.exists():
            raise KeyError(image_id)
        return load_image(png)

    def get_image_bytes(self, image_id: str) -> bytes:
        png, _ = self._paths("images", image_id)
        if not png.exists():
            raise KeyError(image_id)
        return png.read_bytes()

    def get_image_meta(self, image_id: str) -> dict:
        _, sidecar = self._paths("images", image_id)
        if not sidecar.exists():
            raise KeyError(image_id)
        return json.loads(sidecar.read_text())

    def get_result_bytes(self, result_id: str) -> bytes:
        png, _ = self._paths("results", result_id)
        if not png.exists():
            raise KeyError(result_id)
        return png.read_bytes()

    def get_result_meta(self, result_id: str) -> dict:
        _, sidecar = self._paths("results", result_id)
        if not sidecar.exists():
            raise KeyError(result_id)
        return json.loads(sidecar.read_text())


@dataclass
class ServiceRuntime:
    """Models and settings shared read-only across requests."""

    scorer: ScorerModel
    selector: SelectorModel
    catalog: SeedCatalog
    store: SessionStore
    config: PipelineConfig = field(default_factory=PipelineConfig)
    fx: FeatureExtractor | None = None
    ui_dir: str | Path | None = None

    def __post_init__(self):
        if list(self.selector.seed_ids) != list(self.catalog.seed_ids):
            raise ValueError("selector seed binding does not match the catalog")
        if self.fx is None:
            self.fx = FeatureExtractor(rng_seed=self.config.rng_seed)


def _error(status: int, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": detail})


def create_app(runtime: ServiceRuntime) -> FastAPI:
    app = FastAPI(title="memostyle", version=__version__)
    cfg = runtime.config
    # rendered once: the catalog is read-only for the server's lifetime
    thumbnails = {
        seed.seed_id: encode_png(resize_bilinear(seed.image, THUMBNAIL_SIZE))
        for seed in runtime.catalog
    }

    @app.get("/health")
    def health():
        return {"status": "ok", "seeds": runtime.catalog.size, "version": __version__}

    @app.post("/images")
    def upload_image(file: UploadFile):
        data = file.file.read(cfg.max_upload_bytes + 1)
        if len(data) > cfg.max_upload_bytes:
            return _error(413, f"upload exceeds {cfg.max_upload_bytes} bytes")
        try:
            image = decode_image(data)
        except ValueError as exc:
            return _error(400, f"could not decode image: {exc}")
        memorability = predict_score(runtime.scorer, image)
        image_id = runtime.store.put_image(
            image, {"memorability": memorability, "filename": file.filename}
        )
        return {"image_id": image_id, "memorability": memorability}

    @app.get("/images/{image_id}/file")
    def image_file(image_id: str):
        try:
            data = runtime.store.get_image_bytes(image_id)
        except KeyError:
            return _error(404, f"unknown image {image_id}")
        return Response(content=data, media_type="image/png")

    @app.get("/images/{image_id}/recommendations")
    def recommendations(image_id: str, q: int | None = None):
        S = runtime.catalog.size
        if not runtime.store.has_image(image_id):
            return _error(404, f"unknown image {image_id}")
        q = S if q is None else q
        if not (1 <= q <= S):
            return _error(400, f"q must be in [1, {S}], got {q}")
        image = runtime.store.get_image(image_id)
        predicted = predict_gaps(runtime.selector, image)
        ranking = rank_seeds(predicted, runtime.selector.seed_ids)
        return {
            "image_id": image_id,
            "keep_original": ranking.keep_original,
            "recommendations": [
                {
                    "seed_id": sid,
                    "predicted_gap": gap,
                    "thumbnail_url": f"/seeds/{sid}/thumbnail",
                }
                for sid, gap in ranking.entries[:q]
            ],
        }

    @app.post("/images/{image_id}/synthesize")
    async def synthesize_result(image_id: str, request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "body must be JSON")
        if not isinstance(body, dict) or "seed_id" not in body:
            return _error(400, "body must carry a seed_id")
        seed_id = body["seed_id"]
        alpha = body.get("alpha", cfg.default_alpha)
        try:
            alpha = float(alpha)
        except (TypeError, ValueError):
            return _error(400, f"alpha must be a number, got {alpha!r}")
        if not (alpha > 0.0):
            return _error(400, f"alpha must be > 0, got {alpha}")
        if not runtime.store.has_image(image_id):
            return _error(404, f"unknown image {image_id}")
        try:
            seed = runtime.catalog.by_id(seed_id)
        except KeyError:
            return _error(404, f"unknown seed {seed_id}")

        original = runtime.store.get_image(image_id)
        content = resize_bilinear(original, cfg.synth_size)

        def run() -> ImageTensor:
            if seed.model_ref:
                return apply_seed_network(seed.model_ref, content)
            synth_cfg = SynthesisConfig(
                alpha=alpha,
                iterations=cfg.synth_iterations,
                step_size=cfg.synth_step_size,
                rng_seed=cfg.rng_seed,
            )
            return synthesize(content, seed, runtime.fx, synth_cfg)

        try:
            # long optimization must not stall the event loop serving other calls
            result = await anyio.to_thread.run_sync(run)
        except SynthesisNumericalError as exc:
            return _error(500, f"synthesis diverged: {exc}")

        measured = predict_score(runtime.scorer, result)
        predicted = predict_gaps(runtime.selector, original)
        idx = runtime.catalog.index_of(seed_id)
        meta = runtime.store.get_image_meta(image_id)
        record = {
            "source_image_id": image_id,
            "seed_id": seed_id,
            "alpha": alpha,
            "original_memorability": meta.get("memorability"),
            "measured_memorability": measured,
            "predicted_gap": float(predicted[idx]),
        }
        result_id = runtime.store.put_result(result, record)
        return {
            "result_id": result_id,
            "measured_memorability": measured,
            "predicted_gap": float(predicted[idx]),
            "result_url": f"/results/{result_id}",
        }

    @app.get("/seeds")
    def seeds():
        return {
            "seeds": [
                {
                    "seed_id": seed.seed_id,
                    "memorability": seed.memorability,
                    "thumbnail_url": f"/seeds/{seed.seed_id}/thumbnail",
                }
                for seed in runtime.catalog
            ]
        }

    @app.get("/seeds/{seed_id}/thumbnail")
    def seed_thumbnail(seed_id: str):
        if seed_id not in thumbnails:
            return _error(404, f"unknown seed {seed_id}")
        return Response(content=thumbnails[seed_id], media_type="image/png")

    @app.get("/results/{result_id}")
    def result_file(result_id: str):
        try:
            data = runtime.store.get_result_bytes(result_id)
        except KeyError:
            return _error(404, f"unknown result {result_id}")
        return Response(content=data, media_type="image/png")

    @app.get("/results/{result_id}/record")
    def result_record(result_id: str):
        try:
            return runtime.store.get_result_meta(result_id)
        except KeyError:
            return _error(404, f"unknown result {result_id}")

    if runtime.ui_dir and Path(runtime.ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(runtime.ui_dir), html=True), name="ui")

    return app
