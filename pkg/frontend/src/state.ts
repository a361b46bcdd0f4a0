/**
 * Revision-tagged application state.
 *
 * Every mutation from the network or the user funnels through this store on
 * the single rendering thread.  The displayed revision only moves forward:
 * stale overlay fetches that resolve late are dropped, so painting can
 * continue while updates are in flight without the view ever going
 * backwards.
 */

import type { UpdateOptionsDto } from "./types.js";
import { DEFAULT_OPTIONS } from "./types.js";

export type OverlayMode =
  | { kind: "segmentation" }
  | { kind: "probability"; layer: number };

export interface AppState {
  sessionId: string | null;
  width: number;
  height: number;
  nClasses: number;
  ready: boolean;
  buildError: string | null;
  /** Latest revision acknowledged by the server for our mutations. */
  submittedRevision: number;
  /** Revision of the overlay currently on screen; never decreases. */
  displayedRevision: number;
  options: UpdateOptionsDto;
  activeClass: number;
  brushRadius: number;
  eraser: boolean;
  overlayMode: OverlayMode;
  overlayOpacity: number;
  lastLatencyMs: number | null;
  lastUpdateMs: number | null;
  statusText: string;
}

export function initialState(): AppState {
  return {
    sessionId: null,
    width: 0,
    height: 0,
    nClasses: 2,
    ready: false,
    buildError: null,
    submittedRevision: 0,
    displayedRevision: -1,
    options: { ...DEFAULT_OPTIONS },
    activeClass: 1,
    brushRadius: 3,
    eraser: false,
    overlayMode: { kind: "segmentation" },
    overlayOpacity: 0.5,
    lastLatencyMs: null,
    lastUpdateMs: null,
    statusText: "no session",
  };
}

type Listener = (state: AppState) => void;

export class Store {
  private state: AppState = initialState();
  private listeners = new Set<Listener>();
  private submitTimes = new Map<number, number>();
  private now: () => number;

  constructor(now: () => number = () => performance.now()) {
    this.now = now;
  }

  get(): AppState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  patch(partial: Partial<AppState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.state);
  }

  reset(): void {
    this.submitTimes.clear();
    this.state = initialState();
    for (const listener of this.listeners) listener(this.state);
  }

  /** Record a server-acknowledged mutation (stroke batch, options, undo). */
  noteSubmitted(revision: number): void {
    this.submitTimes.set(revision, this.now());
    if (revision > this.state.submittedRevision) {
      this.patch({ submittedRevision: revision });
    }
  }

  /**
   * Try to advance the displayed overlay.  Returns false for stale arrivals
   * (the monotonic-display invariant) so callers skip the repaint.
   */
  noteDisplayed(revision: number): boolean {
    if (revision < this.state.displayedRevision) return false;
    let latency = this.state.lastLatencyMs;
    for (const [rev, t0] of this.submitTimes) {
      if (rev <= revision) {
        if (rev === revision) latency = this.now() - t0;
        this.submitTimes.delete(rev);
      }
    }
    this.patch({ displayedRevision: revision, lastLatencyMs: latency });
    return true;
  }

  get updatePending(): boolean {
    return this.state.submittedRevision > this.state.displayedRevision;
  }
}
