/** App wiring: session lifecycle, painting loop, overlay refresh, batch panel. */

import { Client, subscribeEvents } from "./api.js";
import { FLUSH_INTERVAL_MS, StrokeRecorder, toImageCoords } from "./brush.js";
import { LayerStack } from "./overlay.js";
import { classCss } from "./palette.js";
import { Store } from "./state.js";
import type { OverlayMode } from "./state.js";
import type { BuildConfigDto, StrokeDto, UpdateOptionsDto } from "./types.js";
import { DEFAULT_CONFIG } from "./types.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const client = new Client(
  (window as unknown as { PATCHSEG_SERVER?: string }).PATCHSEG_SERVER ?? "");
const store = new Store();
const layers = new LayerStack($("canvas-stack"));

let unsubscribeEvents: (() => void) | null = null;
let lastOverlayBlob: Blob | null = null;

/** Latest-wins overlay refresh: at most one fetch+decode in flight. */
class OverlayRefresher {
  private running = false;
  private wantedRev = -1;

  request(rev: number): void {
    this.wantedRev = Math.max(this.wantedRev, rev);
    if (!this.running) void this.run();
  }

  private async run(): Promise<void> {
    this.running = true;
    try {
      while (this.wantedRev > store.get().displayedRevision) {
        const rev = this.wantedRev;
        const state = store.get();
        if (!state.sessionId) break;
        const mode = state.overlayMode;
        const { blob, revision } = await client.getResult(
          state.sessionId,
          mode.kind === "segmentation" ? "segmentation" : "probability",
          rev,
          mode.kind === "probability" ? mode.layer : 1);
        if (store.noteDisplayed(revision)) {
          lastOverlayBlob = blob;
          await layers.drawOverlay(blob, mode, store.get().overlayOpacity);
        }
      }
    } catch (err) {
      setStatus(`overlay refresh failed: ${(err as Error).message}`);
    } finally {
      this.running = false;
      if (this.wantedRev > store.get().displayedRevision) void this.run();
    }
  }
}

const refresher = new OverlayRefresher();

function setStatus(text: string): void {
  store.patch({ statusText: text });
}

// ---- session lifecycle ----------------------------------------------------

async function createSession(): Promise<void> {
  const files = $<HTMLInputElement>("image-file").files;
  if (!files || files.length === 0) {
    setStatus("choose an image first");
    return;
  }
  const config: Partial<BuildConfigDto> = {
    patch_side: Number($<HTMLInputElement>("cfg-patch").value),
    branching: Number($<HTMLInputElement>("cfg-branching").value),
    layers: Number($<HTMLInputElement>("cfg-layers").value),
    n_classes: Number($<HTMLInputElement>("cfg-classes").value),
    iterations: DEFAULT_CONFIG.iterations,
    seed: Number($<HTMLInputElement>("cfg-seed").value),
    subsample: DEFAULT_CONFIG.subsample,
  };
  unsubscribeEvents?.();
  store.reset();
  store.patch({ nClasses: config.n_classes ?? 2 });
  setStatus("uploading…");
  try {
    const created = await client.createSession(files[0], files[0].name, config);
    store.patch({
      sessionId: created.session_id,
      width: created.width,
      height: created.height,
      nClasses: created.n_classes,
    });
    setStatus("building dictionary…");
    const imageResp = await fetch(client.imageUrl(created.session_id));
    await layers.drawImage(await imageResp.blob());
    rebuildClassButtons(created.n_classes);
    unsubscribeEvents = subscribeEvents(client, created.session_id, (event) => {
      if (event.type === "ready") {
        store.patch({ ready: true });
        setStatus(`ready (nnz ${event.nnz})`);
        refresher.request(0);
      } else if (event.type === "update") {
        store.patch({ lastUpdateMs: event.timing_ms });
        refresher.request(event.revision);
      } else {
        store.patch({ buildError: event.message });
        setStatus(`error: ${event.message}`);
      }
    }, () => setStatus("event stream interrupted"));
  } catch (err) {
    setStatus(`session failed: ${(err as Error).message}`);
  }
}

// ---- painting ---------------------------------------------------------------

let recorder: StrokeRecorder | null = null;
let flushTimer: number | null = null;

function currentBrushClass(): number {
  const state = store.get();
  return state.eraser ? 0 : state.activeClass;
}

async function sendStrokes(strokes: StrokeDto[],
                           options?: UpdateOptionsDto): Promise<void> {
  const state = store.get();
  if (!state.sessionId || (!strokes.length && !options)) return;
  try {
    const revision = await client.submitStrokes(state.sessionId, strokes, options);
    store.noteSubmitted(revision);
  } catch (err) {
    setStatus(`strokes rejected: ${(err as Error).message}`);
  }
}

function flushRecorder(final: boolean): void {
  if (!recorder) return;
  const stroke = final ? recorder.end() : recorder.flush();
  if (stroke) void sendStrokes([stroke]);
  if (final) {
    recorder = null;
    if (flushTimer !== null) {
      window.clearInterval(flushTimer);
      flushTimer = null;
    }
  }
}

function attachPainting(): void {
  const surface = layers.strokes;
  surface.style.touchAction = "none";

  surface.addEventListener("pointerdown", (ev) => {
    const state = store.get();
    if (!state.ready) return;
    surface.setPointerCapture(ev.pointerId);
    const [x, y] = eventCoords(ev);
    recorder = new StrokeRecorder(state.brushRadius, currentBrushClass());
    recorder.begin(x, y);
    layers.drawStrokeSegment([[x, y]], state.brushRadius, state.activeClass,
                             state.eraser);
    flushTimer = window.setInterval(() => flushRecorder(false),
                                    FLUSH_INTERVAL_MS);
  });

  surface.addEventListener("pointermove", (ev) => {
    if (!recorder?.isDrawing) return;
    const state = store.get();
    const [x, y] = eventCoords(ev);
    const prev = lastPoint ?? [x, y];
    layers.drawStrokeSegment([prev, [x, y]], state.brushRadius,
                             state.activeClass, state.eraser);
    recorder.move(x, y);
    lastPoint = [x, y];
  });

  const finish = () => {
    lastPoint = null;
    flushRecorder(true);
  };
  surface.addEventListener("pointerup", finish);
  surface.addEventListener("pointercancel", finish);
}

let lastPoint: [number, number] | null = null;

function eventCoords(ev: PointerEvent): [number, number] {
  const rect = layers.strokes.getBoundingClientRect();
  return toImageCoords(ev.clientX - rect.left, ev.clientY - rect.top,
                       rect.width, rect.height, layers.width, layers.height);
}

// ---- controls ---------------------------------------------------------------

function rebuildClassButtons(nClasses: number): void {
  const bar = $("class-buttons");
  bar.innerHTML = "";
  for (let cls = 1; cls <= nClasses; cls++) {
    const button = document.createElement("button");
    button.textContent = String(cls);
    button.title = `class ${cls}`;
    button.style.background = classCss(cls);
    button.dataset.cls = String(cls);
    button.addEventListener("click", () => {
      store.patch({ activeClass: cls, eraser: false });
    });
    bar.appendChild(button);
  }
  const select = $<HTMLSelectElement>("overlay-mode");
  select.innerHTML = "";
  const seg = document.createElement("option");
  seg.value = "segmentation";
  seg.textContent = "segmentation";
  select.appendChild(seg);
  for (let cls = 1; cls <= nClasses; cls++) {
    const option = document.createElement("option");
    option.value = String(cls);
    option.textContent = `probability: class ${cls}`;
    select.appendChild(option);
  }
}

function currentOptions(): UpdateOptionsDto {
  return {
    steps: $<HTMLInputElement>("opt-two-step").checked ? 2 : 1,
    binarise: $<HTMLInputElement>("opt-binarise").checked,
    overwrite: $<HTMLInputElement>("opt-overwrite").checked,
    epsilon: Number($<HTMLInputElement>("opt-epsilon").value) || 1e-6,
  };
}

function attachControls(): void {
  $("create-session").addEventListener("click", () => void createSession());

  for (const id of ["opt-two-step", "opt-binarise", "opt-overwrite", "opt-epsilon"]) {
    $(id).addEventListener("change", () => {
      const options = currentOptions();
      store.patch({ options });
      void sendStrokes([], options);
    });
  }

  $<HTMLInputElement>("brush-radius").addEventListener("input", (ev) => {
    store.patch({ brushRadius: Number((ev.target as HTMLInputElement).value) });
  });

  $("eraser").addEventListener("click", () => {
    store.patch({ eraser: !store.get().eraser });
  });

  $<HTMLInputElement>("overlay-opacity").addEventListener("input", async (ev) => {
    const overlayOpacity = Number((ev.target as HTMLInputElement).value) / 100;
    store.patch({ overlayOpacity });
    if (lastOverlayBlob) {
      await layers.drawOverlay(lastOverlayBlob, store.get().overlayMode,
                               overlayOpacity);
    }
  });

  $<HTMLSelectElement>("overlay-mode").addEventListener("change", (ev) => {
    const value = (ev.target as HTMLSelectElement).value;
    const mode: OverlayMode = value === "segmentation"
      ? { kind: "segmentation" }
      : { kind: "probability", layer: Number(value) };
    store.patch({ overlayMode: mode, displayedRevision: -1 });
    refresher.request(Math.max(0, store.get().submittedRevision));
  });

  $("undo").addEventListener("click", () => void historyStep("undo"));
  $("redo").addEventListener("click", () => void historyStep("redo"));

  $("export-marks").addEventListener("click", () => void exportMarks());
  $<HTMLInputElement>("import-marks").addEventListener("change",
    (ev) => void importMarks(ev));
  $("export-model").addEventListener("click", () => void exportModel());

  $("batch-start").addEventListener("click", () => void startBatch());

  window.addEventListener("keydown", (ev) => {
    if (ev.target instanceof HTMLInputElement) return;
    const cls = Number(ev.key);
    if (cls >= 1 && cls <= store.get().nClasses) {
      store.patch({ activeClass: cls, eraser: false });
    } else if (ev.key === "e") {
      store.patch({ eraser: !store.get().eraser });
    } else if (ev.key === "z" && (ev.ctrlKey || ev.metaKey)) {
      ev.preventDefault();
      void historyStep(ev.shiftKey ? "redo" : "undo");
    }
  });
}

async function historyStep(op: "undo" | "redo"): Promise<void> {
  const state = store.get();
  if (!state.sessionId) return;
  const revision = op === "undo" ? await client.undo(state.sessionId)
    : await client.redo(state.sessionId);
  store.noteSubmitted(revision);
  await redrawMarksFromServer();
}

async function redrawMarksFromServer(): Promise<void> {
  const state = store.get();
  if (!state.sessionId) return;
  const { blob } = await client.getResult(state.sessionId, "marks");
  await layers.drawMarks(blob);
}

function download(blob: Blob, filename: string): void {
  const url = URL.createObjectURL(blob);
  const link = document.createElement("a");
  link.href = url;
  link.download = filename;
  link.click();
  URL.revokeObjectURL(url);
}

async function exportMarks(): Promise<void> {
  const state = store.get();
  if (!state.sessionId) return;
  const { blob } = await client.getResult(state.sessionId, "marks");
  download(blob, `${state.sessionId}-marks.png`);
}

async function importMarks(ev: Event): Promise<void> {
  const state = store.get();
  const files = (ev.target as HTMLInputElement).files;
  if (!state.sessionId || !files || files.length === 0) return;
  const revision = await client.importMarks(state.sessionId, files[0]);
  store.noteSubmitted(revision);
  await redrawMarksFromServer();
}

async function exportModel(): Promise<void> {
  const state = store.get();
  if (!state.sessionId) return;
  setStatus("exporting model…");
  const blob = await client.exportModel(state.sessionId);
  download(blob, `${state.sessionId}.psegmodel`);
  setStatus("model exported");
}

// ---- batch panel --------------------------------------------------------------

async function startBatch(): Promise<void> {
  const modelFiles = $<HTMLInputElement>("batch-model").files;
  const stackFiles = $<HTMLInputElement>("batch-stack").files;
  const state = store.get();
  let model: Blob | null = modelFiles?.[0] ?? null;
  if (!model && state.sessionId) {
    setStatus("exporting current session model for the batch…");
    model = await client.exportModel(state.sessionId);
  }
  if (!model || !stackFiles || stackFiles.length === 0) {
    setStatus("batch needs a model and a stack");
    return;
  }
  const progress = $("batch-progress");
  progress.textContent = "starting…";
  const jobId = await client.startBatch(model, stackFiles[0], {
    min_component: Number($<HTMLInputElement>("batch-min-component").value) || 0,
    centres_class: Number($<HTMLInputElement>("batch-centres").value) || 0,
    workers: 2,
  });
  const poll = window.setInterval(async () => {
    const status = await client.batchStatus(jobId);
    progress.textContent = `${status.state} ${status.done}/${status.total}`;
    if (status.state !== "running") {
      window.clearInterval(poll);
      if (status.state === "done") {
        const link = $<HTMLAnchorElement>("batch-download");
        link.href = client.batchDownloadUrl(jobId);
        link.style.display = "inline";
      } else {
        progress.textContent = `failed: ${status.error}`;
      }
    }
  }, 500);
}

// ---- status bar ------------------------------------------------------------

function renderStatus(): void {
  store.subscribe((state) => {
    $("status-text").textContent = state.statusText;
    const latency = state.lastLatencyMs === null ? "–"
      : `${Math.round(state.lastLatencyMs)} ms`;
    const compute = state.lastUpdateMs === null ? "–"
      : `${Math.round(state.lastUpdateMs)} ms`;
    $("latency-text").textContent =
      `rev ${state.displayedRevision}${state.submittedRevision >
        state.displayedRevision ? "*" : ""} · round-trip ${latency} · compute ${compute}`;
    $("eraser").classList.toggle("active", state.eraser);
    for (const button of $("class-buttons").querySelectorAll("button")) {
      button.classList.toggle("active",
        Number(button.dataset.cls) === state.activeClass && !state.eraser);
    }
  });
}

export function start(): void {
  attachControls();
  attachPainting();
  renderStatus();
  setStatus("upload an image to begin");
}

start();
