// The replica must reproduce the states the server engine computes:
// vectors.json holds op streams plus the engine's materialized document
// (regenerate with `python3 test/make_vectors.py` from the repo root).

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import type { Op } from "../src/protocol.js";
import { Replica, decodeBase64 } from "../src/replica.js";

interface Vector {
  name: string;
  ops: Op[];
  snapshot_b64?: string;
  expected: {
    title: string;
    blocks: Array<{ id: string; kind: string; text: string;
                    marks: Array<[number, number, string]>;
                    highlighted: boolean }>;
    annotations: Array<{ id: string; emoji: string; block: string;
                         resolved: boolean; orphaned: boolean }>;
  };
}

const vectors: Vector[] = JSON.parse(readFileSync(
  join(dirname(fileURLToPath(import.meta.url)), "vectors.json"), "utf-8"));

function materializedOf(rep: Replica) {
  const doc = rep.materialize();
  return {
    title: doc.title,
    blocks: doc.blocks.map((b) => ({
      id: b.id, kind: b.kind, text: b.text, marks: b.marks,
      highlighted: b.highlighted,
    })),
    annotations: doc.annotations.map((a) => ({
      id: a.id, emoji: a.emoji, block: a.block,
      resolved: a.resolved, orphaned: a.orphaned,
    })),
  };
}

describe("engine cross-language vectors", () => {
  for (const vector of vectors) {
    it(vector.name, () => {
      const rep = vector.snapshot_b64
        ? Replica.fromSnapshot(decodeBase64(vector.snapshot_b64))
        : new Replica("doc", "T", 99);
      for (const op of vector.ops) rep.integrate(op);
      expect(rep.pendingCount()).toBe(0);
      expect(materializedOf(rep)).toEqual(vector.expected);
    });

    it(`${vector.name} (reversed delivery)`, () => {
      const rep = vector.snapshot_b64
        ? Replica.fromSnapshot(decodeBase64(vector.snapshot_b64))
        : new Replica("doc", "T", 99);
      for (const op of [...vector.ops].reverse()) rep.integrate(op);
      for (const op of vector.ops) rep.integrate(op); // duplicates
      expect(rep.pendingCount()).toBe(0);
      expect(materializedOf(rep)).toEqual(vector.expected);
    });
  }
});

describe("local editing", () => {
  it("generates ops that round-trip through a second replica", () => {
    const a = new Replica("doc", "T", 1);
    const b = new Replica("doc", "T", 2);
    const ops: Op[] = [];
    ops.push(...a.insertBlock(null));
    const bid = (ops[0] as { b: string }).b;
    ops.push(...a.insertText(bid, 0, "hello"));
    ops.push(...a.setKind(bid, "h1"));
    ops.push(...a.setMark(bid, 0, 5, "bold"));
    ops.push(...a.annotate(bid, "nt.important", "me", 123));
    for (const op of ops) b.integrate(op);
    expect(b.blockText(bid)).toBe("hello");
    expect(materializedOf(b)).toEqual(materializedOf(a));
  });

  it("concurrent edits from both sides converge", () => {
    const a = new Replica("doc", "T", 1);
    const b = new Replica("doc", "T", 2);
    const blk = a.insertBlock(null);
    const bid = (blk[0] as { b: string }).b;
    for (const op of blk) b.integrate(op);
    const fromA = a.insertText(bid, 0, "abc");
    const fromB = b.insertText(bid, 0, "xyz");
    for (const op of fromB) a.integrate(op);
    for (const op of fromA) b.integrate(op);
    expect(a.blockText(bid)).toBe(b.blockText(bid));
    expect(a.blockText(bid)).toHaveLength(6);
  });

  it("annotation gate rejects chit-chat emojis", () => {
    const a = new Replica("doc", "T", 1);
    const blk = a.insertBlock(null);
    const bid = (blk[0] as { b: string }).b;
    expect(() => a.annotate(bid, "cc.great", "me", 0)).toThrow();
  });
});
