/**
 * Live-loop acceptance against a running server.  Skipped unless
 * PATCHSEG_SERVER is set (e.g. http://127.0.0.1:8731).  PATCHSEG_IMAGE
 * should point at a phantom image PNG (default: the verify recipe's
 * 512x512 disks phantom); PATCHSEG_CENTRES at its centres.csv.
 *
 * Checks the two UI-level criteria: stroke submission to visible overlay
 * refresh at or under 500 ms median, and byte-identical marks
 * export/import round trip.
 */

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { Client } from "../src/api.js";

const SERVER = process.env.PATCHSEG_SERVER ?? "";
const IMAGE = process.env.PATCHSEG_IMAGE ?? "/tmp/e2e/ph/image.png";
const CENTRES = process.env.PATCHSEG_CENTRES ?? "/tmp/e2e/ph/centres.csv";

describe.skipIf(!SERVER)("live UI loop", () => {
  it("stroke -> overlay refresh median <= 500 ms; marks round trip byte-equal",
     { timeout: 300_000 }, async () => {
    const client = new Client(SERVER);
    const png = new Blob([readFileSync(IMAGE)], { type: "image/png" });
    const created = await client.createSession(png, "phantom.png", {
      patch_side: 9, branching: 5, layers: 4, iterations: 10,
      seed: 1, n_classes: 2, subsample: 15000,
    });
    const sid = created.session_id;

    // wait for the dictionary build
    for (let i = 0; i < 600; i++) {
      const status = await client.status(sid);
      if (status.error) throw new Error(status.error);
      if (status.ready) break;
      await new Promise((resolve) => setTimeout(resolve, 100));
    }
    expect((await client.status(sid)).ready).toBe(true);

    // centre dots from the phantom's ground truth + a background line,
    // exactly what the brush sends
    const rows = readFileSync(CENTRES, "utf-8").trim().split("\n").slice(1);
    const centres = rows.map((row) => row.split(",").map(Number));
    const latencies: number[] = [];
    for (let round = 0; round < 7; round++) {
      const strokes = [];
      for (const [x, y] of centres.slice(round * 8, round * 8 + 8)) {
        strokes.push({ points: [[x, y]] as [number, number][], radius: 1.2, cls: 2 });
      }
      strokes.push({
        points: [[10, 10 + 14 * round], [170, 12 + 14 * round]] as [number, number][],
        radius: 1.5, cls: 1,
      });
      const t0 = performance.now();
      const revision = await client.submitStrokes(sid, strokes, {
        steps: 2, binarise: true, overwrite: true, epsilon: 1e-6,
      });
      const { revision: got } = await client.getResult(sid, "segmentation", revision);
      latencies.push(performance.now() - t0);
      expect(got).toBeGreaterThanOrEqual(revision);
    }
    const median = latencies.sort((a, b) => a - b)[Math.floor(latencies.length / 2)];
    console.log(`stroke->overlay latencies ms: ${latencies.map((x) => x.toFixed(0)).join(", ")} (median ${median.toFixed(0)})`);
    expect(median).toBeLessThanOrEqual(500);

    // marks export -> import -> export must be byte-identical
    const first = await client.getResult(sid, "marks");
    const firstBytes = new Uint8Array(await first.blob.arrayBuffer());
    await client.submitStrokes(sid, [
      { points: [[30, 30]], radius: 4, cls: 1 },
    ]);
    await client.importMarks(sid, first.blob);
    const second = await client.getResult(sid, "marks");
    const secondBytes = new Uint8Array(await second.blob.arrayBuffer());
    expect(secondBytes).toEqual(firstBytes);
  });
});
