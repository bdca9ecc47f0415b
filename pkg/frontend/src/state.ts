// Session state: one current image, its ranked seeds, and an append-only
// gallery of synthesized results. Held in memory only; a refresh starts a
// fresh session.

import type { Recommendation } from "./api.js";

export interface SessionImage {
  imageId: string;
  memorability: number;
  filename: string;
  /** object URL or server file URL used for the preview pane */
  previewUrl: string;
}

export interface GalleryEntry {
  resultId: string;
  seedId: string;
  alpha: number;
  /** score of the uploaded original, as reported by the upload response */
  originalMemorability: number;
  /** score of the synthesized image, as reported by the synthesize response */
  measuredMemorability: number;
  predictedGap: number;
  /** server-relative PNG URL, passed through untouched for download */
  resultUrl: string;
}

export interface SessionState {
  image: SessionImage | null;
  q: number;
  keepOriginal: boolean;
  recommendations: readonly Recommendation[];
  selectedSeed: string | null;
  gallery: readonly GalleryEntry[];
  synthesizing: boolean;
  error: string | null;
}

export type Listener = (state: SessionState) => void;

export const DEFAULT_Q = 6;

export class SessionStore {
  private state: SessionState = {
    image: null,
    q: DEFAULT_Q,
    keepOriginal: false,
    recommendations: [],
    selectedSeed: null,
    gallery: [],
    synthesizing: false,
    error: null,
  };
  private listeners: Listener[] = [];
  // recommendation responses may overlap; only the newest request may land
  private recommendationSeq = 0;
  private appliedRecommendationSeq = 0;

  getState(): SessionState {
    return this.state;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private update(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) {
      fn(this.state);
    }
  }

  /** A new upload replaces the session image and clears everything derived
   *  from the previous one: recommendations, gallery, errors. */
  setImage(image: SessionImage): void {
    this.recommendationSeq += 1; // invalidates responses still in flight
    this.appliedRecommendationSeq = this.recommendationSeq;
    this.update({
      image,
      keepOriginal: false,
      recommendations: [],
      selectedSeed: null,
      gallery: [],
      synthesizing: false,
      error: null,
    });
  }

  setQ(q: number): void {
    this.update({ q });
  }

  selectSeed(seedId: string): void {
    this.update({ selectedSeed: seedId });
  }

  /** Ticket for a recommendations request; pass it back on arrival. */
  nextRecommendationRequest(): number {
    this.recommendationSeq += 1;
    return this.recommendationSeq;
  }

  /** Last write wins: a response older than the newest applied one is
   *  dropped, so overlapping requests cannot regress the grid. */
  applyRecommendations(
    seq: number,
    recommendations: readonly Recommendation[],
    keepOriginal: boolean,
  ): boolean {
    if (seq < this.appliedRecommendationSeq) {
      return false;
    }
    this.appliedRecommendationSeq = seq;
    this.update({ recommendations, keepOriginal, error: null });
    return true;
  }

  /** At most one synthesis in flight; returns false when one already is. */
  beginSynthesis(): boolean {
    if (this.state.synthesizing) {
      return false;
    }
    this.update({ synthesizing: true, error: null });
    return true;
  }

  /** Appends to the gallery; existing history is never replaced. */
  completeSynthesis(entry: GalleryEntry): void {
    this.update({
      synthesizing: false,
      gallery: [...this.state.gallery, entry],
    });
  }

  failSynthesis(message: string): void {
    this.update({ synthesizing: false, error: message });
  }

  setError(message: string | null): void {
    this.update({ error: message });
  }
}
