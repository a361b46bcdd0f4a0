/**
 * Layered canvas stack at image resolution: raw image at the bottom, the
 * propagated overlay in the middle, optimistic local strokes on top.
 * All canvases share CSS size, so painting stays crisp under zoom.
 */

import { applyOverlayAlpha, classCss } from "./palette.js";
import type { OverlayMode } from "./state.js";

export class LayerStack {
  readonly image: HTMLCanvasElement;
  readonly overlay: HTMLCanvasElement;
  readonly strokes: HTMLCanvasElement;
  width = 0;
  height = 0;

  constructor(private container: HTMLElement) {
    this.image = this.makeLayer(1);
    this.overlay = this.makeLayer(2);
    this.strokes = this.makeLayer(3);
  }

  private makeLayer(z: number): HTMLCanvasElement {
    const canvas = document.createElement("canvas");
    canvas.style.position = "absolute";
    canvas.style.left = "0";
    canvas.style.top = "0";
    canvas.style.width = "100%";
    canvas.style.height = "100%";
    canvas.style.zIndex = String(z);
    canvas.style.imageRendering = "pixelated";
    this.container.appendChild(canvas);
    return canvas;
  }

  resize(width: number, height: number): void {
    this.width = width;
    this.height = height;
    for (const canvas of [this.image, this.overlay, this.strokes]) {
      canvas.width = width;
      canvas.height = height;
    }
    this.container.style.aspectRatio = `${width} / ${height}`;
  }

  async drawImage(blob: Blob): Promise<void> {
    const bitmap = await createImageBitmap(blob);
    this.resize(bitmap.width, bitmap.height);
    const ctx = this.image.getContext("2d")!;
    ctx.drawImage(bitmap, 0, 0);
  }

  /** Replace the overlay with a decoded result PNG. */
  async drawOverlay(blob: Blob, mode: OverlayMode, opacity: number): Promise<void> {
    const bitmap = await createImageBitmap(blob);
    const ctx = this.overlay.getContext("2d")!;
    ctx.clearRect(0, 0, this.width, this.height);
    if (mode.kind === "segmentation") {
      const scratch = document.createElement("canvas");
      scratch.width = bitmap.width;
      scratch.height = bitmap.height;
      const sctx = scratch.getContext("2d")!;
      sctx.drawImage(bitmap, 0, 0);
      const data = sctx.getImageData(0, 0, bitmap.width, bitmap.height);
      applyOverlayAlpha(data.data, opacity);
      sctx.putImageData(data, 0, 0);
      ctx.drawImage(scratch, 0, 0);
    } else {
      ctx.globalAlpha = opacity;
      ctx.drawImage(bitmap, 0, 0);
      ctx.globalAlpha = 1.0;
    }
  }

  clearOverlay(): void {
    this.overlay.getContext("2d")!.clearRect(0, 0, this.width, this.height);
  }

  /** Optimistic stroke feedback; the server remains the source of truth. */
  drawStrokeSegment(points: [number, number][], radius: number,
                    cls: number, eraser: boolean): void {
    if (points.length === 0) return;
    const ctx = this.strokes.getContext("2d")!;
    ctx.save();
    ctx.globalCompositeOperation = eraser ? "destination-out" : "source-over";
    ctx.strokeStyle = eraser ? "rgba(0,0,0,1)" : classCss(cls);
    ctx.fillStyle = ctx.strokeStyle;
    ctx.lineWidth = Math.max(2 * radius, 1);
    ctx.lineCap = "round";
    ctx.lineJoin = "round";
    if (points.length === 1) {
      ctx.beginPath();
      ctx.arc(points[0][0], points[0][1], Math.max(radius, 0.5), 0, 2 * Math.PI);
      ctx.fill();
    } else {
      ctx.beginPath();
      ctx.moveTo(points[0][0], points[0][1]);
      for (let i = 1; i < points.length; i++) ctx.lineTo(points[i][0], points[i][1]);
      ctx.stroke();
    }
    ctx.restore();
  }

  /** Redraw the strokes layer from the server's marks PNG (exact state). */
  async drawMarks(blob: Blob): Promise<void> {
    const bitmap = await createImageBitmap(blob);
    const ctx = this.strokes.getContext("2d")!;
    ctx.clearRect(0, 0, this.width, this.height);
    const scratch = document.createElement("canvas");
    scratch.width = bitmap.width;
    scratch.height = bitmap.height;
    const sctx = scratch.getContext("2d")!;
    sctx.drawImage(bitmap, 0, 0);
    const data = sctx.getImageData(0, 0, bitmap.width, bitmap.height);
    applyOverlayAlpha(data.data, 1.0);
    sctx.putImageData(data, 0, 0);
    ctx.drawImage(scratch, 0, 0);
  }
}
