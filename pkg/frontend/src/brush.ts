/**
 * Pointer-stroke capture with periodic flushing.
 *
 * While the pointer is down, points accumulate into the current polyline;
 * every flush interval (150 ms) the collected segment is emitted so the
 * server can start propagating before the stroke ends.  Consecutive flushes
 * overlap by one point to keep the rasterized line connected.
 */

import type { StrokeDto } from "./types.js";

export const FLUSH_INTERVAL_MS = 150;

export class StrokeRecorder {
  private points: [number, number][] = [];
  private lastFlushed: [number, number] | null = null;
  private drawing = false;

  constructor(public radius: number, public cls: number) {}

  get isDrawing(): boolean {
    return this.drawing;
  }

  begin(x: number, y: number): void {
    this.drawing = true;
    this.points = [[x, y]];
    this.lastFlushed = null;
  }

  move(x: number, y: number): void {
    if (!this.drawing) return;
    const last = this.points[this.points.length - 1];
    if (last && last[0] === x && last[1] === y) return;
    this.points.push([x, y]);
  }

  /** Emit the pending polyline (or null when nothing new happened). */
  flush(): StrokeDto | null {
    if (!this.drawing && this.points.length === 0) return null;
    if (this.points.length === 0) return null;
    let points = this.points;
    if (this.lastFlushed) points = [this.lastFlushed, ...points];
    this.lastFlushed = this.points[this.points.length - 1];
    this.points = [];
    if (points.length === 0) return null;
    return { points, radius: this.radius, cls: this.cls };
  }

  /** Stop drawing and emit whatever remains. */
  end(): StrokeDto | null {
    const stroke = this.flush();
    this.drawing = false;
    this.lastFlushed = null;
    this.points = [];
    return stroke;
  }
}

/**
 * Canvas-space conversion: a pointer event position in CSS pixels mapped to
 * image pixel coordinates given the canvas's on-screen size.
 */
export function toImageCoords(
  offsetX: number, offsetY: number,
  cssWidth: number, cssHeight: number,
  imageWidth: number, imageHeight: number,
): [number, number] {
  const x = (offsetX / cssWidth) * imageWidth;
  const y = (offsetY / cssHeight) * imageHeight;
  return [
    Math.max(0, Math.min(imageWidth - 1, x)),
    Math.max(0, Math.min(imageHeight - 1, y)),
  ];
}
