import { describe, expect, it } from "vitest";

import {
  BlockSelection,
  liveToasts,
  loadWindowPos,
  makeToast,
  saveWindowPos,
} from "../src/uistate.js";

describe("toasts", () => {
  it("renders strictly inside [sent_at, sent_at + 5000)", () => {
    const toast = makeToast("cc.thank_you", "u1", 1000);
    expect(liveToasts([toast], 1000)).toHaveLength(1);
    expect(liveToasts([toast], 5999)).toHaveLength(1);
    expect(liveToasts([toast], 6000)).toHaveLength(0);
    expect(liveToasts([toast], 6001)).toHaveLength(0);
  });

  it("drops only expired toasts", () => {
    const early = makeToast("cc.great", "u1", 0);
    const late = makeToast("cc.funny", "u2", 3000);
    expect(liveToasts([early, late], 5500)).toEqual([late]);
  });
});

describe("block selection", () => {
  it("allows at most one selected block", () => {
    const sel = new BlockSelection();
    expect(sel.toggle("1.1")).toBe("1.1");
    expect(sel.toggle("2.1")).toBe("2.1");
    expect(sel.current).toBe("2.1");
  });

  it("toggles off on reselect and clears when the block vanishes", () => {
    const sel = new BlockSelection();
    sel.toggle("1.1");
    expect(sel.toggle("1.1")).toBeNull();
    sel.toggle("3.1");
    sel.clearIfMissing(new Set(["4.1"]));
    expect(sel.current).toBeNull();
  });
});

describe("window positions", () => {
  it("persists per user and falls back cleanly", () => {
    const store = new Map<string, string>();
    const like = {
      getItem: (k: string) => store.get(k) ?? null,
      setItem: (k: string, v: string) => void store.set(k, v),
    };
    const fallback = { x: 10, y: 20, open: false };
    expect(loadWindowPos(like, "u1", "nt", fallback)).toEqual(fallback);
    saveWindowPos(like, "u1", "nt", { x: 99, y: 5, open: true });
    expect(loadWindowPos(like, "u1", "nt", fallback))
      .toEqual({ x: 99, y: 5, open: true });
    expect(loadWindowPos(like, "u2", "nt", fallback)).toEqual(fallback);
  });
});
