import { describe, expect, it } from "vitest";

import { Store, initialState } from "../src/state.js";

function makeClock(start = 1000) {
  let t = start;
  return {
    now: () => t,
    advance: (ms: number) => { t += ms; },
  };
}

describe("Store revisions", () => {
  it("starts with nothing displayed and the initial result pending", () => {
    const store = new Store(() => 0);
    expect(store.get().displayedRevision).toBe(-1);
    expect(store.updatePending).toBe(true); // revision 0 not yet on screen
    store.noteDisplayed(0);
    expect(store.updatePending).toBe(false);
  });

  it("tracks submitted revisions monotonically", () => {
    const store = new Store(() => 0);
    store.noteSubmitted(3);
    store.noteSubmitted(2); // out-of-order ack never lowers the watermark
    expect(store.get().submittedRevision).toBe(3);
    expect(store.updatePending).toBe(true);
  });

  it("display revision never decreases", () => {
    const store = new Store(() => 0);
    expect(store.noteDisplayed(5)).toBe(true);
    expect(store.noteDisplayed(3)).toBe(false);
    expect(store.get().displayedRevision).toBe(5);
    expect(store.noteDisplayed(5)).toBe(true); // idempotent re-display allowed
    expect(store.noteDisplayed(9)).toBe(true);
    expect(store.get().displayedRevision).toBe(9);
  });

  it("measures round-trip latency for the matching revision", () => {
    const clock = makeClock();
    const store = new Store(clock.now);
    store.noteSubmitted(1);
    clock.advance(120);
    store.noteDisplayed(1);
    expect(store.get().lastLatencyMs).toBe(120);
  });

  it("a newer display clears older pending submissions", () => {
    const clock = makeClock();
    const store = new Store(clock.now);
    store.noteSubmitted(1);
    clock.advance(50);
    store.noteSubmitted(2);
    clock.advance(70);
    store.noteDisplayed(2); // coalesced: revision 1 never displayed alone
    expect(store.get().lastLatencyMs).toBe(70);
    expect(store.updatePending).toBe(false);
    clock.advance(500);
    store.noteDisplayed(3); // no submit record: latency untouched
    expect(store.get().lastLatencyMs).toBe(70);
  });

  it("notifies subscribers on patch", () => {
    const store = new Store(() => 0);
    const seen: number[] = [];
    const unsubscribe = store.subscribe((s) => seen.push(s.submittedRevision));
    store.noteSubmitted(1);
    unsubscribe();
    store.noteSubmitted(2);
    expect(seen).toEqual([1]);
  });

  it("reset returns to the initial state", () => {
    const store = new Store(() => 0);
    store.noteSubmitted(4);
    store.patch({ ready: true });
    store.reset();
    expect(store.get()).toEqual(initialState());
  });
});
