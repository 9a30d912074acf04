import { describe, expect, it } from "vitest";

import { exportTxt } from "../src/export.js";
import type { DocView } from "../src/replica.js";

function doc(title: string, blocks: Array<[string, string]>): DocView {
  return {
    title,
    blocks: blocks.map(([kind, text], i) => ({
      id: `${i + 1}.1`, kind: kind as DocView["blocks"][0]["kind"],
      text, marks: [], highlighted: false,
    })),
    annotations: [],
  };
}

describe("txt export", () => {
  it("emits title plus one line per block", () => {
    expect(exportTxt(doc("L1", []))).toBe("L1\n");
    expect(exportTxt(doc("Class", [["p", "a"], ["bullet", "b"]])))
      .toBe("Class\na\n- b\n");
  });

  it("numbers runs and restarts after a break", () => {
    const out = exportTxt(doc("T", [
      ["numbered", "one"], ["numbered", "two"], ["p", "gap"],
      ["numbered", "again"],
    ]));
    expect(out).toBe("T\n1. one\n2. two\ngap\n1. again\n");
  });

  it("matches the walkthrough golden bytes", () => {
    const out = exportTxt(doc("Lecture 5: Memory", [
      ["h1", "Working memory has limited capacity"],
      ["p", "Chunking improves recall - e.g. phone numbers grouped 3-3-4"],
    ]));
    expect(out).toBe("Lecture 5: Memory\n"
      + "Working memory has limited capacity\n"
      + "Chunking improves recall - e.g. phone numbers grouped 3-3-4\n");
  });
});
