// Entry point: wires the store, the API client, and the DOM together.

import { ApiClient, ApiError } from "./api.js";
import { SessionStore } from "./state.js";
import {
  renderComparePanel,
  renderError,
  renderGallery,
  renderSeedGrid,
  renderUploadStatus,
} from "./views.js";

declare global {
  interface Window {
    /** override to point the UI at a service on another origin */
    MEMOSTYLE_API_BASE?: string;
  }
}

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing #${id} in the document shell`);
  }
  return node as T;
}

export function bootstrap(): void {
  const api = new ApiClient(window.MEMOSTYLE_API_BASE ?? "");
  const store = new SessionStore();
  const absolute = (u: string) => api.absoluteUrl(u);

  const fileInput = byId<HTMLInputElement>("file-input");
  const qInput = byId<HTMLInputElement>("q-input");
  const qValue = byId<HTMLElement>("q-value");
  const uploadPane = byId<HTMLElement>("upload-pane");
  const gridPane = byId<HTMLElement>("grid-pane");
  const comparePane = byId<HTMLElement>("compare-pane");
  const galleryPane = byId<HTMLElement>("gallery-pane");
  const errorPane = byId<HTMLElement>("error-pane");

  async function refreshRecommendations(): Promise<void> {
    const { image, q } = store.getState();
    if (!image) {
      return;
    }
    const seq = store.nextRecommendationRequest();
    try {
      const resp = await api.recommendations(image.imageId, q);
      store.applyRecommendations(seq, resp.recommendations, resp.keep_original);
    } catch (err) {
      store.setError(err instanceof ApiError ? err.detail : String(err));
    }
  }

  async function synthesize(seedId: string, alpha: number): Promise<void> {
    const { image } = store.getState();
    if (!image || !store.beginSynthesis()) {
      return;
    }
    try {
      const resp = await api.synthesize(image.imageId, seedId, alpha);
      store.completeSynthesis({
        resultId: resp.result_id,
        seedId,
        alpha,
        originalMemorability: image.memorability,
        measuredMemorability: resp.measured_memorability,
        predictedGap: resp.predicted_gap,
        resultUrl: resp.result_url,
      });
    } catch (err) {
      store.failSynthesis(err instanceof ApiError ? err.detail : String(err));
    }
  }

  fileInput.addEventListener("change", async () => {
    const file = fileInput.files?.[0];
    if (!file) {
      return;
    }
    try {
      const resp = await api.uploadImage(file, file.name);
      store.setImage({
        imageId: resp.image_id,
        memorability: resp.memorability,
        filename: file.name,
        previewUrl: api.imageFileUrl(resp.image_id),
      });
      await refreshRecommendations();
    } catch (err) {
      store.setError(err instanceof ApiError ? err.detail : String(err));
    } finally {
      fileInput.value = ""; // same file can be re-picked
    }
  });

  qInput.addEventListener("change", () => {
    store.setQ(Number(qInput.value));
    void refreshRecommendations();
  });
  qInput.addEventListener("input", () => {
    qValue.textContent = qInput.value;
  });

  store.subscribe((state) => {
    renderUploadStatus(uploadPane, state.image);
    renderSeedGrid(gridPane, state.recommendations, state.keepOriginal, absolute, {
      onPick(seedId) {
        store.selectSeed(seedId);
        void synthesize(seedId, Number(window.document.body.dataset.defaultAlpha ?? 2));
      },
    });
    const latest = state.gallery.length
      ? (state.gallery[state.gallery.length - 1] ?? null)
      : null;
    renderComparePanel(
      comparePane,
      state.image,
      latest,
      state.selectedSeed,
      state.synthesizing,
      absolute,
      { onSynthesize: (seedId, alpha) => void synthesize(seedId, alpha) },
    );
    renderGallery(galleryPane, state.gallery, absolute);
    renderError(errorPane, state.error);
    gridPane.classList.toggle("disabled", state.image === null);
    qInput.disabled = state.image === null;
  });

  qValue.textContent = qInput.value;
  void api
    .health()
    .then((h) => {
      byId<HTMLElement>("health-line").textContent =
        `service ok, ${h.seeds} seeds, v${h.version}`;
    })
    .catch(() => {
      byId<HTMLElement>("health-line").textContent = "service unreachable";
    });
}

if (typeof document !== "undefined" && document.getElementById("file-input")) {
  bootstrap();
}
