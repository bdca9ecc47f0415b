// DOM rendering. Every number shown here comes verbatim from a service
// response; the only transformation applied is display formatting.

import type { Recommendation } from "./api.js";
import type { GalleryEntry, SessionImage } from "./state.js";

export const KEEP_ORIGINAL_TEXT = "no seed is predicted to increase memorability";
export const ALPHA_PRESETS = [0.5, 2, 10] as const;

/** Two-decimal display form of a score or gap. */
export function formatScore(value: number): string {
  return value.toFixed(2);
}

/** Sign class for a gap badge; a zero gap is not an increase. */
export function gapClass(gap: number): string {
  if (gap > 0) {
    return "gap-positive";
  }
  if (gap < 0) {
    return "gap-negative";
  }
  return "gap-zero";
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function renderUploadStatus(
  container: HTMLElement,
  image: SessionImage | null,
): void {
  container.replaceChildren();
  if (!image) {
    container.appendChild(el("p", "hint", "Upload an image to see seed recommendations."));
    return;
  }
  const figure = el("figure", "current-image");
  const img = el("img");
  img.src = image.previewUrl;
  img.alt = image.filename;
  figure.appendChild(img);
  const caption = el("figcaption");
  caption.appendChild(el("span", "filename", image.filename));
  const badge = el("span", "score-badge", formatScore(image.memorability));
  badge.title = "memorability of the uploaded image";
  caption.appendChild(badge);
  figure.appendChild(caption);
  container.appendChild(figure);
}

export interface SeedGridHandlers {
  onPick(seedId: string): void;
}

/** Ranked seed grid, rendered strictly in response order. The keep-original
 *  banner sits above the grid when set; seeds stay clickable regardless. */
export function renderSeedGrid(
  container: HTMLElement,
  recommendations: readonly Recommendation[],
  keepOriginal: boolean,
  absoluteUrl: (serverRelative: string) => string,
  handlers: SeedGridHandlers,
): void {
  container.replaceChildren();
  if (keepOriginal) {
    container.appendChild(el("div", "keep-original-banner", KEEP_ORIGINAL_TEXT));
  }
  const grid = el("div", "seed-grid");
  for (const rec of recommendations) {
    const card = el("button", "seed-card");
    card.type = "button";
    card.dataset.seedId = rec.seed_id;
    const thumb = el("img", "seed-thumb");
    thumb.src = absoluteUrl(rec.thumbnail_url);
    thumb.alt = rec.seed_id;
    card.appendChild(thumb);
    card.appendChild(el("span", "seed-name", rec.seed_id));
    card.appendChild(
      el("span", `gap-badge ${gapClass(rec.predicted_gap)}`, formatScore(rec.predicted_gap)),
    );
    card.addEventListener("click", () => handlers.onPick(rec.seed_id));
    grid.appendChild(card);
  }
  container.appendChild(grid);
}

export interface ComparePanelHandlers {
  onSynthesize(seedId: string, alpha: number): void;
}

/** Side-by-side compare for the newest gallery entry plus the style-weight
 *  controls ("try another alpha" re-synthesizes the same seed). */
export function renderComparePanel(
  container: HTMLElement,
  image: SessionImage | null,
  latest: GalleryEntry | null,
  selectedSeed: string | null,
  synthesizing: boolean,
  absoluteUrl: (serverRelative: string) => string,
  handlers: ComparePanelHandlers,
): void {
  container.replaceChildren();
  const seedId = latest?.seedId ?? selectedSeed;
  if (!image || !seedId) {
    container.appendChild(el("p", "hint", "Pick a seed to synthesize a variant."));
    return;
  }

  if (latest) {
    const pair = el("div", "compare-pair");
    const before = el("figure", "compare-cell");
    const beforeImg = el("img");
    beforeImg.src = image.previewUrl;
    beforeImg.alt = "original";
    before.appendChild(beforeImg);
    before.appendChild(
      el("figcaption", "", `original ${formatScore(latest.originalMemorability)}`),
    );
    const after = el("figure", "compare-cell");
    const afterImg = el("img");
    afterImg.src = absoluteUrl(latest.resultUrl);
    afterImg.alt = `stylized with ${latest.seedId}`;
    after.appendChild(afterImg);
    after.appendChild(
      el("figcaption", "", `stylized ${formatScore(latest.measuredMemorability)}`),
    );
    pair.appendChild(before);
    pair.appendChild(after);
    container.appendChild(pair);
  }

  const controls = el("div", "alpha-controls");
  controls.appendChild(el("span", "alpha-label", `seed ${seedId}, style weight`));
  for (const alpha of ALPHA_PRESETS) {
    const btn = el("button", "alpha-preset", String(alpha));
    btn.type = "button";
    btn.dataset.alpha = String(alpha);
    btn.disabled = synthesizing;
    btn.addEventListener("click", () => handlers.onSynthesize(seedId, alpha));
    controls.appendChild(btn);
  }
  if (synthesizing) {
    controls.appendChild(el("span", "busy", "synthesizing ..."));
  }
  container.appendChild(controls);
}

/** Append-only history of synthesized results with before/after scores and
 *  a download link that passes the server PNG through untouched. */
export function renderGallery(
  container: HTMLElement,
  entries: readonly GalleryEntry[],
  absoluteUrl: (serverRelative: string) => string,
): void {
  container.replaceChildren();
  if (entries.length === 0) {
    return;
  }
  container.appendChild(el("h2", "", "Gallery"));
  const list = el("div", "gallery-grid");
  for (const entry of entries) {
    const card = el("div", "gallery-card");
    const img = el("img", "gallery-thumb");
    img.src = absoluteUrl(entry.resultUrl);
    img.alt = `${entry.seedId} at alpha ${entry.alpha}`;
    card.appendChild(img);
    card.appendChild(el("div", "gallery-seed", `${entry.seedId} (alpha ${entry.alpha})`));
    const scores = el("div", "gallery-scores");
    scores.appendChild(
      el("span", "score-badge", formatScore(entry.originalMemorability)),
    );
    scores.appendChild(el("span", "arrow", "to"));
    scores.appendChild(
      el("span", "score-badge", formatScore(entry.measuredMemorability)),
    );
    card.appendChild(scores);
    const download = el("a", "download-link", "download PNG");
    download.href = absoluteUrl(entry.resultUrl);
    download.setAttribute("download", `${entry.resultId}.png`);
    card.appendChild(download);
    list.appendChild(card);
  }
  container.appendChild(list);
}

export function renderError(container: HTMLElement, message: string | null): void {
  container.replaceChildren();
  if (message) {
    container.appendChild(el("div", "error-banner", message));
  }
}
