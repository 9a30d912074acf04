// Client-side replica of a block document.
//
// Same model as the server engine: every character/block/annotation is an
// element with id "counter.replica"; characters and blocks form trees in
// which an element hangs off its anchor and siblings sort by descending
// id, document order being the pre-order walk. Deletes tombstone; title,
// block kind, and marks are last-writer-wins registers on Lamport stamps.
// `integrate` accepts ops in any order any number of times, buffering
// whatever is not causally ready yet (version-vector gap or unknown ref).

import type { BlockKind, MarkType, Op, Stamp } from "./protocol.js";

export type IntegrateResult = "applied" | "buffered" | "duplicate";

interface El {
  id: string;
  anchor: string | null;
  ch: string;
  deleted: boolean;
  block: string;
}

interface BlockState {
  id: string;
  anchor: string | null;
  deleted: boolean;
  kind: BlockKind;
  kindTs: Stamp;
  // key "mark|from|to" -> register
  marks: Map<string, { on: boolean; ts: Stamp }>;
}

export interface AnnView {
  id: string;
  emoji: string;
  block: string;
  author: string;
  at: number;
  resolved: boolean;
  orphaned: boolean;
}

export interface BlockView {
  id: string;
  kind: BlockKind;
  text: string;
  marks: Array<[number, number, MarkType]>;
  highlighted: boolean;
}

export interface DocView {
  title: string;
  blocks: BlockView[];
  annotations: AnnView[];
}

function idParts(id: string): [number, number] {
  const dot = id.indexOf(".");
  return [Number(id.slice(0, dot)), Number(id.slice(dot + 1))];
}

function idLess(a: string, b: string): boolean {
  const [ac, ar] = idParts(a);
  const [bc, br] = idParts(b);
  return ac !== bc ? ac < bc : ar < br;
}

function stampLess(a: Stamp, b: Stamp): boolean {
  return a[0] !== b[0] ? a[0] < b[0] : a[1] < b[1];
}

function insertSorted(list: string[], id: string): void {
  let lo = 0;
  let hi = list.length;
  while (lo < hi) {
    const mid = (lo + hi) >> 1;
    if (idLess(list[mid], id)) lo = mid + 1;
    else hi = mid;
  }
  list.splice(lo, 0, id);
}

const ROOT = "@root";

export class Replica {
  docId: string;
  title: string;
  titleTs: Stamp = [0, 0];
  replicaId: number;
  lamport = 0;
  counterHigh = 0;
  vv = new Map<number, number>();
  pending = new Map<string, Op>();

  private blocks = new Map<string, BlockState>();
  private blockChildren = new Map<string, string[]>();
  private els = new Map<string, El>();
  private elChildren = new Map<string, string[]>();
  private anns = new Map<string, AnnView>();

  constructor(docId: string, title: string, replicaId: number) {
    this.docId = docId;
    this.title = title;
    this.replicaId = replicaId;
  }

  rebind(replicaId: number): void {
    this.replicaId = replicaId;
  }

  pendingCount(): number {
    return this.pending.size;
  }

  private freshId(): string {
    this.counterHigh += 1;
    return `${this.counterHigh}.${this.replicaId}`;
  }

  private observeCounter(id: string): void {
    const [c] = idParts(id);
    if (c > this.counterHigh) this.counterHigh = c;
  }

  private nextSeq(): number {
    return (this.vv.get(this.replicaId) ?? 0) + 1;
  }

  private bumpLamport(): Stamp {
    this.lamport += 1;
    return [this.lamport, this.replicaId];
  }

  private finishLocal(ops: Op[]): Op[] {
    for (const op of ops) {
      this.apply(op);
      this.vv.set(op.o, op.s);
    }
    return ops;
  }

  // -- traversal --------------------------------------------------------

  private walk(children: Map<string, string[]>, rootKey: string): string[] {
    const out: string[] = [];
    const stack = [...(children.get(rootKey) ?? [])];
    while (stack.length) {
      const id = stack.pop()!;
      out.push(id);
      const kids = children.get(id);
      if (kids) stack.push(...kids);
    }
    return out;
  }

  blockOrder(): string[] {
    return this.walk(this.blockChildren, ROOT);
  }

  liveBlocks(): string[] {
    return this.blockOrder().filter((b) => !this.blocks.get(b)!.deleted);
  }

  private elementOrder(blockId: string): string[] {
    return this.walk(this.elChildren, "start:" + blockId);
  }

  private visible(blockId: string): string[] {
    return this.elementOrder(blockId).filter((e) => !this.els.get(e)!.deleted);
  }

  blockText(blockId: string): string {
    return this.visible(blockId).map((e) => this.els.get(e)!.ch).join("");
  }

  // -- local operations --------------------------------------------------

  insertBlock(afterBlockId: string | null): Op[] {
    if (afterBlockId !== null && !this.blocks.has(afterBlockId)) {
      throw new Error(`no block ${afterBlockId}`);
    }
    const op: Op = { k: "ins_b", o: this.replicaId, s: this.nextSeq(),
                     b: this.freshId(), a: afterBlockId };
    return this.finishLocal([op]);
  }

  deleteBlock(blockId: string): Op[] {
    const op: Op = { k: "del_b", o: this.replicaId, s: this.nextSeq(),
                     b: blockId };
    return this.finishLocal([op]);
  }

  insertText(blockId: string, pos: number, text: string): Op[] {
    const vis = this.visible(blockId);
    if (pos < 0 || pos > vis.length) throw new Error("position out of range");
    let anchor: string | null = pos > 0 ? vis[pos - 1] : null;
    const ops: Op[] = [];
    for (const ch of Array.from(text)) {
      const id = this.freshId();
      ops.push({ k: "ins_t", o: this.replicaId, s: this.nextSeq() + ops.length,
                 id, b: blockId, a: anchor, ch });
      anchor = id;
    }
    return this.finishLocal(ops);
  }

  deleteRange(blockId: string, pos: number, len: number): Op[] {
    const vis = this.visible(blockId);
    if (pos < 0 || len < 0 || pos + len > vis.length) {
      throw new Error("range out of range");
    }
    if (len === 0) return [];
    const targets = vis.slice(pos, pos + len).sort((a, b) =>
      idLess(a, b) ? -1 : 1);
    const op: Op = { k: "del_t", o: this.replicaId, s: this.nextSeq(),
                     tg: targets };
    return this.finishLocal([op]);
  }

  setKind(blockId: string, kind: BlockKind): Op[] {
    const op: Op = { k: "kind", o: this.replicaId, s: this.nextSeq(),
                     b: blockId, kind, ts: this.bumpLamport() };
    return this.finishLocal([op]);
  }

  setTitle(text: string): Op[] {
    const op: Op = { k: "title", o: this.replicaId, s: this.nextSeq(),
                     text, ts: this.bumpLamport() };
    return this.finishLocal([op]);
  }

  setMark(blockId: string, start: number, end: number, mark: MarkType,
          on = true): Op[] {
    const vis = this.visible(blockId);
    if (!(start >= 0 && start < end && end <= vis.length)) {
      throw new Error("bad mark range");
    }
    const op: Op = { k: "mark", o: this.replicaId, s: this.nextSeq(),
                     b: blockId, from: vis[start], to: vis[end - 1], mark, on,
                     ts: this.bumpLamport() };
    return this.finishLocal([op]);
  }

  annotate(blockId: string, emojiCode: string, author: string,
           nowMs: number): Op[] {
    if (!emojiCode.startsWith("nt.")) {
      throw new Error("only note-taking emojis annotate blocks");
    }
    const op: Op = { k: "ann", o: this.replicaId, s: this.nextSeq(),
                     id: this.freshId(), emoji: emojiCode, b: blockId,
                     author, at: nowMs };
    return this.finishLocal([op]);
  }

  resolve(annId: string): Op[] {
    if (!this.anns.has(annId)) throw new Error(`no annotation ${annId}`);
    const op: Op = { k: "res", o: this.replicaId, s: this.nextSeq(),
                     id: annId };
    return this.finishLocal([op]);
  }

  // -- integration --------------------------------------------------------

  integrate(op: Op): IntegrateResult {
    const high = this.vv.get(op.o) ?? 0;
    if (op.s <= high) return "duplicate";
    if (op.s > high + 1 || !this.refsKnown(op)) {
      this.pending.set(`${op.o}:${op.s}`, op);
      return "buffered";
    }
    this.apply(op);
    this.vv.set(op.o, op.s);
    this.drainPending();
    return "applied";
  }

  private drainPending(): void {
    let progressed = true;
    while (progressed && this.pending.size) {
      progressed = false;
      const keys = [...this.pending.keys()].sort();
      for (const key of keys) {
        const op = this.pending.get(key);
        if (!op) continue;
        const high = this.vv.get(op.o) ?? 0;
        if (op.s <= high) {
          this.pending.delete(key);
          progressed = true;
        } else if (op.s === high + 1 && this.refsKnown(op)) {
          this.pending.delete(key);
          this.apply(op);
          this.vv.set(op.o, op.s);
          progressed = true;
        }
      }
    }
  }

  private refsKnown(op: Op): boolean {
    switch (op.k) {
      case "ins_t":
        return this.blocks.has(op.b) && (op.a === null || this.els.has(op.a));
      case "del_t":
        return op.tg.every((t) => this.els.has(t));
      case "ins_b":
        return op.a === null || this.blocks.has(op.a);
      case "del_b":
      case "kind":
      case "ann":
        return this.blocks.has(op.b);
      case "mark":
        return this.blocks.has(op.b) && this.els.has(op.from)
          && this.els.has(op.to);
      case "res":
        return this.anns.has(op.id);
      default:
        return true;
    }
  }

  private apply(op: Op): void {
    switch (op.k) {
      case "ins_t": {
        if (this.els.has(op.id)) return;
        this.els.set(op.id, { id: op.id, anchor: op.a, ch: op.ch,
                              deleted: false, block: op.b });
        const key = op.a === null ? "start:" + op.b : op.a;
        let kids = this.elChildren.get(key);
        if (!kids) this.elChildren.set(key, (kids = []));
        insertSorted(kids, op.id);
        this.observeCounter(op.id);
        break;
      }
      case "del_t":
        for (const t of op.tg) this.els.get(t)!.deleted = true;
        break;
      case "ins_b": {
        if (this.blocks.has(op.b)) return;
        this.blocks.set(op.b, { id: op.b, anchor: op.a, deleted: false,
                                kind: "p", kindTs: [0, 0], marks: new Map() });
        const key = op.a === null ? ROOT : op.a;
        let kids = this.blockChildren.get(key);
        if (!kids) this.blockChildren.set(key, (kids = []));
        insertSorted(kids, op.b);
        this.observeCounter(op.b);
        break;
      }
      case "del_b": {
        const blk = this.blocks.get(op.b)!;
        if (!blk.deleted) {
          blk.deleted = true;
          for (const ann of this.anns.values()) {
            if (ann.block === op.b) ann.orphaned = true;
          }
        }
        break;
      }
      case "kind": {
        this.lamport = Math.max(this.lamport, op.ts[0]);
        const blk = this.blocks.get(op.b)!;
        if (stampLess(blk.kindTs, op.ts)) {
          blk.kind = op.kind;
          blk.kindTs = op.ts;
        }
        break;
      }
      case "mark": {
        this.lamport = Math.max(this.lamport, op.ts[0]);
        const blk = this.blocks.get(op.b)!;
        const key = `${op.mark}|${op.from}|${op.to}`;
        const cur = blk.marks.get(key);
        if (!cur || stampLess(cur.ts, op.ts)) {
          blk.marks.set(key, { on: op.on, ts: op.ts });
        }
        break;
      }
      case "title":
        this.lamport = Math.max(this.lamport, op.ts[0]);
        if (stampLess(this.titleTs, op.ts)) {
          this.title = op.text;
          this.titleTs = op.ts;
        }
        break;
      case "ann": {
        if (this.anns.has(op.id)) return;
        this.anns.set(op.id, {
          id: op.id, emoji: op.emoji, block: op.b, author: op.author,
          at: op.at, resolved: false,
          orphaned: this.blocks.get(op.b)!.deleted,
        });
        this.observeCounter(op.id);
        break;
      }
      case "res": {
        const ann = this.anns.get(op.id)!;
        ann.resolved = true;
        break;
      }
    }
  }

  // -- materialization -----------------------------------------------------

  materialize(): DocView {
    const highlighted = new Set<string>();
    const annotations: AnnView[] = [...this.anns.values()]
      .sort((a, b) => (idLess(a.id, b.id) ? -1 : 1))
      .map((a) => ({ ...a }));
    for (const a of annotations) {
      if (!a.resolved && !a.orphaned) highlighted.add(a.block);
    }
    const blocks: BlockView[] = [];
    for (const bid of this.liveBlocks()) {
      const blk = this.blocks.get(bid)!;
      const order = this.elementOrder(bid);
      const posOf = new Map<string, number>();
      let pos = 0;
      for (const e of order) {
        posOf.set(e, pos);
        if (!this.els.get(e)!.deleted) pos += 1;
      }
      const marks: Array<[number, number, MarkType]> = [];
      for (const [key, reg] of blk.marks) {
        if (!reg.on) continue;
        const [mark, from, to] = key.split("|");
        const start = posOf.get(from)!;
        const end = posOf.get(to)! + (this.els.get(to)!.deleted ? 0 : 1);
        if (end > start) marks.push([start, end, mark as MarkType]);
      }
      marks.sort((a, b) =>
        a[0] - b[0] || a[1] - b[1] || a[2].localeCompare(b[2]));
      blocks.push({ id: bid, kind: blk.kind, text: this.blockText(bid),
                    marks, highlighted: highlighted.has(bid) });
    }
    return { title: this.title, blocks, annotations };
  }

  // -- snapshots -------------------------------------------------------------

  static fromSnapshot(data: Uint8Array): Replica {
    if (!data.length || data[0] !== 1) {
      throw new Error("unsupported snapshot version");
    }
    const body = JSON.parse(new TextDecoder().decode(data.subarray(1)));
    const rep = new Replica(body.doc, body.title[0], body.replica);
    rep.titleTs = body.title[1];
    rep.lamport = body.lamport;
    rep.counterHigh = body.counter_high;
    for (const [k, v] of Object.entries(body.vv)) {
      rep.vv.set(Number(k), v as number);
    }
    for (const b of body.blocks) {
      const blk: BlockState = {
        id: b.id, anchor: b.anchor, deleted: b.del,
        kind: b.kind[0], kindTs: b.kind[1], marks: new Map(),
      };
      for (const [mark, from, to, on, ts] of b.marks) {
        blk.marks.set(`${mark}|${from}|${to}`, { on, ts });
      }
      rep.blocks.set(b.id, blk);
      const bkey = b.anchor === null ? ROOT : b.anchor;
      let bkids = rep.blockChildren.get(bkey);
      if (!bkids) rep.blockChildren.set(bkey, (bkids = []));
      insertSorted(bkids, b.id);
      for (const [id, anchor, ch, deleted] of b.els) {
        rep.els.set(id, { id, anchor, ch, deleted, block: b.id });
        const key = anchor === null ? "start:" + b.id : anchor;
        let kids = rep.elChildren.get(key);
        if (!kids) rep.elChildren.set(key, (kids = []));
        insertSorted(kids, id);
      }
    }
    for (const [id, emoji, block, author, at, resolved, orphaned] of body.anns) {
      rep.anns.set(id, { id, emoji, block, author, at, resolved, orphaned });
    }
    for (const op of body.pending) {
      rep.pending.set(`${op.o}:${op.s}`, op);
    }
    return rep;
  }
}

export function decodeBase64(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  // node (tests run without a DOM)
  const buf = (globalThis as Record<string, any>).Buffer;
  return new Uint8Array(buf.from(b64, "base64"));
}
