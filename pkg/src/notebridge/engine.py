"""Operation-based convergent replication of block documents.

## Model

Every character and every block is an element with a globally unique id
``(counter, replica)``, inserted *after* an anchor element (or the start
sentinel of its container). Elements form a tree: an element's parent is
its anchor, and siblings under one anchor are ordered by descending id.
The document reading order is the pre-order walk of that tree, so a newer
insert lands directly after its anchor, ahead of older same-anchor
inserts and their descendants. Because the parent is fixed at creation
and the sibling order is a total order on ids, the tree — and therefore
the materialized document — is a pure function of the set of applied
operations, independent of delivery order.

Deletions tombstone elements instead of removing them, so concurrent
operations that anchor on (or target) a deleted element remain
applicable, and deleted text can never resurrect.

Title, block kind, and style marks are last-writer-wins registers on a
Lamport stamp ``(time, replica)``.

## Delivery

``integrate`` accepts operations in any order, any number of times. An
op is applied exactly once: duplicates are detected with a version
vector (per-origin contiguous high-water marks, enabled by the gapless
per-origin ``seq``), and ops whose origin seq is non-contiguous or whose
referenced ids are not yet known are parked in a pending buffer and
drained once their dependencies arrive.
"""

from __future__ import annotations

import hashlib
import json
import time as _time
from bisect import insort
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Union

from .docmodel import (
    Annotation,
    Block,
    BlockKind,
    EmojiCategory,
    EmojiCode,
    Mark,
    MarkRange,
    NoteDocument,
    parse_emoji_code,
)
from .errors import (
    CorruptSnapshot,
    MalformedOp,
    NoSuchAnnotation,
    NoSuchBlock,
    PositionOutOfRange,
    WrongEmojiCategory,
)

# An element id: (counter, replica). Totally ordered by tuple comparison.
ElementId = tuple[int, int]
# A Lamport stamp: (time, replica).
Stamp = tuple[int, int]

SERVER_REPLICA = 0


def eid_str(eid: ElementId) -> str:
    return f"{eid[0]}.{eid[1]}"


def parse_eid(s: str) -> ElementId:
    try:
        counter, replica = s.split(".")
        return (int(counter), int(replica))
    except (ValueError, AttributeError):
        raise MalformedOp(f"bad element id {s!r}") from None


@dataclass(frozen=True)
class InsertText:
    origin: int
    seq: int
    new_id: ElementId
    block_id: ElementId
    anchor: Optional[ElementId]  # None = start of block
    char: str


@dataclass(frozen=True)
class DeleteText:
    origin: int
    seq: int
    targets: tuple[ElementId, ...]


@dataclass(frozen=True)
class InsertBlock:
    origin: int
    seq: int
    block_id: ElementId
    anchor: Optional[ElementId]  # None = start of document


@dataclass(frozen=True)
class DeleteBlock:
    origin: int
    seq: int
    block_id: ElementId


@dataclass(frozen=True)
class SetBlockKind:
    origin: int
    seq: int
    block_id: ElementId
    kind: BlockKind
    ts: Stamp


@dataclass(frozen=True)
class SetMark:
    origin: int
    seq: int
    block_id: ElementId
    start_el: ElementId  # first marked element
    end_el: ElementId  # last marked element (inclusive)
    mark: Mark
    enabled: bool
    ts: Stamp


@dataclass(frozen=True)
class SetTitle:
    origin: int
    seq: int
    text: str
    ts: Stamp


@dataclass(frozen=True)
class AddAnnotation:
    origin: int
    seq: int
    ann_id: ElementId
    emoji_code: str
    block_id: ElementId
    author: str
    created_at: int


@dataclass(frozen=True)
class ResolveAnnotation:
    origin: int
    seq: int
    ann_id: ElementId


Op = Union[
    InsertText,
    DeleteText,
    InsertBlock,
    DeleteBlock,
    SetBlockKind,
    SetMark,
    SetTitle,
    AddAnnotation,
    ResolveAnnotation,
]


class IntegrateResult(Enum):
    APPLIED = "applied"
    BUFFERED = "buffered"
    DUPLICATE = "duplicate"


# --- wire encoding -------------------------------------------------------
#
# Ops travel as JSON objects: {"k": kind, "o": origin, "s": seq, ...}.
# Element ids are "counter.replica" strings, stamps are [time, replica]
# pairs, and a null anchor means the start of the block / document.

def _eid_or_none(v) -> Optional[ElementId]:
    return None if v is None else parse_eid(v)


def op_to_dict(op: Op) -> dict:
    if isinstance(op, InsertText):
        return {
            "k": "ins_t", "o": op.origin, "s": op.seq,
            "id": eid_str(op.new_id), "b": eid_str(op.block_id),
            "a": None if op.anchor is None else eid_str(op.anchor),
            "ch": op.char,
        }
    if isinstance(op, DeleteText):
        return {
            "k": "del_t", "o": op.origin, "s": op.seq,
            "tg": [eid_str(t) for t in op.targets],
        }
    if isinstance(op, InsertBlock):
        return {
            "k": "ins_b", "o": op.origin, "s": op.seq,
            "b": eid_str(op.block_id),
            "a": None if op.anchor is None else eid_str(op.anchor),
        }
    if isinstance(op, DeleteBlock):
        return {"k": "del_b", "o": op.origin, "s": op.seq, "b": eid_str(op.block_id)}
    if isinstance(op, SetBlockKind):
        return {
            "k": "kind", "o": op.origin, "s": op.seq,
            "b": eid_str(op.block_id), "kind": op.kind.value, "ts": list(op.ts),
        }
    if isinstance(op, SetMark):
        return {
            "k": "mark", "o": op.origin, "s": op.seq,
            "b": eid_str(op.block_id), "from": eid_str(op.start_el),
            "to": eid_str(op.end_el), "mark": op.mark.value,
            "on": op.enabled, "ts": list(op.ts),
        }
    if isinstance(op, SetTitle):
        return {"k": "title", "o": op.origin, "s": op.seq, "text": op.text, "ts": list(op.ts)}
    if isinstance(op, AddAnnotation):
        return {
            "k": "ann", "o": op.origin, "s": op.seq,
            "id": eid_str(op.ann_id), "emoji": op.emoji_code,
            "b": eid_str(op.block_id), "author": op.author, "at": op.created_at,
        }
    if isinstance(op, ResolveAnnotation):
        return {"k": "res", "o": op.origin, "s": op.seq, "id": eid_str(op.ann_id)}
    raise MalformedOp(f"unknown op type {type(op).__name__}")


def op_from_dict(d: dict) -> Op:
    try:
        kind = d["k"]
        origin = d["o"]
        seq = d["s"]
        if not isinstance(origin, int) or not isinstance(seq, int) or seq < 1 or origin < 0:
            raise MalformedOp("bad origin/seq")
        if kind == "ins_t":
            ch = d["ch"]
            if not isinstance(ch, str) or len(ch) != 1:
                raise MalformedOp("ins_t char must be a single scalar")
            return InsertText(origin, seq, parse_eid(d["id"]), parse_eid(d["b"]),
                              _eid_or_none(d["a"]), ch)
        if kind == "del_t":
            targets = tuple(sorted(parse_eid(t) for t in d["tg"]))
            if not targets:
                raise MalformedOp("del_t with no targets")
            return DeleteText(origin, seq, targets)
        if kind == "ins_b":
            return InsertBlock(origin, seq, parse_eid(d["b"]), _eid_or_none(d["a"]))
        if kind == "del_b":
            return DeleteBlock(origin, seq, parse_eid(d["b"]))
        if kind == "kind":
            return SetBlockKind(origin, seq, parse_eid(d["b"]),
                                BlockKind(d["kind"]), _stamp(d["ts"]))
        if kind == "mark":
            return SetMark(origin, seq, parse_eid(d["b"]), parse_eid(d["from"]),
                           parse_eid(d["to"]), Mark(d["mark"]), bool(d["on"]),
                           _stamp(d["ts"]))
        if kind == "title":
            if not isinstance(d["text"], str):
                raise MalformedOp("title must be a string")
            return SetTitle(origin, seq, d["text"], _stamp(d["ts"]))
        if kind == "ann":
            code = d["emoji"]
            if parse_emoji_code(code).category is not EmojiCategory.NOTE_TAKING:
                raise MalformedOp("annotation emoji must be note-taking")
            return AddAnnotation(origin, seq, parse_eid(d["id"]), code,
                                 parse_eid(d["b"]), str(d["author"]), int(d["at"]))
        if kind == "res":
            return ResolveAnnotation(origin, seq, parse_eid(d["id"]))
        raise MalformedOp(f"unknown op kind {kind!r}")
    except MalformedOp:
        raise
    except Exception as exc:
        raise MalformedOp(f"bad op encoding: {exc}") from None


def _stamp(v) -> Stamp:
    t, r = v
    return (int(t), int(r))


# --- internal state ------------------------------------------------------


class _Element:
    __slots__ = ("eid", "anchor", "char", "deleted", "block")

    def __init__(self, eid: ElementId, anchor: Optional[ElementId], char: str,
                 block: ElementId):
        self.eid = eid
        self.anchor = anchor
        self.char = char
        self.deleted = False
        self.block = block


class _BlockState:
    __slots__ = ("eid", "anchor", "deleted", "kind", "kind_ts", "marks")

    def __init__(self, eid: ElementId, anchor: Optional[ElementId]):
        self.eid = eid
        self.anchor = anchor
        self.deleted = False
        self.kind = BlockKind.PARAGRAPH
        self.kind_ts: Stamp = (0, 0)
        # (mark, start_el, end_el) -> (enabled, stamp)
        self.marks: dict[tuple[Mark, ElementId, ElementId], tuple[bool, Stamp]] = {}


class _Ann:
    __slots__ = ("ann_id", "emoji_code", "block", "author", "created_at",
                 "resolved", "orphaned")

    def __init__(self, ann_id: ElementId, emoji_code: str, block: ElementId,
                 author: str, created_at: int):
        self.ann_id = ann_id
        self.emoji_code = emoji_code
        self.block = block
        self.author = author
        self.created_at = created_at
        self.resolved = False
        self.orphaned = False


_BLOCK_START = "start"  # key prefix for the per-block start sentinel


class Replica:
    """One participant's live copy of a document.

    All mutation goes through ``local_*`` methods (producing op batches
    that are already applied locally) or ``integrate`` (applying remote
    ops). A Replica is single-owner: callers serialize access.
    """

    def __init__(self, doc_id: str, title: str, replica_id: int):
        self.doc_id = doc_id
        self.replica_id = replica_id
        self.title = title
        self.title_ts: Stamp = (0, 0)
        self.lamport = 0
        self.vv: dict[int, int] = {}
        self.pending: dict[tuple[int, int], Op] = {}

        self._blocks: dict[ElementId, _BlockState] = {}
        # block tree: anchor key -> ascending child ids (traversed in reverse)
        self._block_children: dict[object, list[ElementId]] = {}
        self._elements: dict[ElementId, _Element] = {}
        self._el_children: dict[object, list[ElementId]] = {}
        self._anns: dict[ElementId, _Ann] = {}

        # Highest element counter observed anywhere. Fresh ids must exceed
        # it so that an insert sorts ahead of every sibling its author had
        # already seen at the anchor (the insert-after placement rule).
        self._counter_high = 0

        self._block_order_cache: Optional[list[ElementId]] = None
        self._vis_cache: dict[ElementId, list[ElementId]] = {}
        self._effects: list[tuple] = []

    # -- identity ---------------------------------------------------------

    def rebind(self, replica_id: int) -> None:
        """Adopt a new replica identity (used when a session is assigned
        its id by the server after loading a foreign snapshot)."""
        self.replica_id = replica_id

    def _fresh_eid(self) -> ElementId:
        self._counter_high += 1
        return (self._counter_high, self.replica_id)

    def _next_seq(self) -> int:
        return self.vv.get(self.replica_id, 0) + 1

    def _bump_lamport(self) -> Stamp:
        self.lamport += 1
        return (self.lamport, self.replica_id)

    def _finish_local(self, ops: list[Op]) -> list[Op]:
        for op in ops:
            self._apply(op)
            self.vv[op.origin] = op.seq
        return ops

    # -- lookups ----------------------------------------------------------

    def _live_block(self, block_id: str) -> _BlockState:
        try:
            blk = self._blocks[parse_eid(block_id)]
        except (MalformedOp, KeyError):
            raise NoSuchBlock(f"no block {block_id!r}") from None
        if blk.deleted:
            raise NoSuchBlock(f"block {block_id!r} is deleted")
        return blk

    def _visible(self, block_eid: ElementId) -> list[ElementId]:
        vis = self._vis_cache.get(block_eid)
        if vis is None:
            vis = [e for e in self._element_order(block_eid)
                   if not self._elements[e].deleted]
            self._vis_cache[block_eid] = vis
        return vis

    def _element_order(self, block_eid: ElementId) -> list[ElementId]:
        out: list[ElementId] = []
        stack = list(self._el_children.get((_BLOCK_START, block_eid), ()))
        children = self._el_children
        while stack:
            eid = stack.pop()
            out.append(eid)
            kids = children.get(eid)
            if kids:
                stack.extend(kids)
        return out

    def block_order(self) -> list[ElementId]:
        if self._block_order_cache is None:
            out: list[ElementId] = []
            stack = list(self._block_children.get(None, ()))
            while stack:
                bid = stack.pop()
                out.append(bid)
                kids = self._block_children.get(bid)
                if kids:
                    stack.extend(kids)
            self._block_order_cache = out
        return self._block_order_cache

    def live_blocks(self) -> list[ElementId]:
        return [b for b in self.block_order() if not self._blocks[b].deleted]

    def block_text(self, block_id: str) -> str:
        blk = self._live_block(block_id)
        els = self._elements
        return "".join(els[e].char for e in self._visible(blk.eid))

    def pending_count(self) -> int:
        return len(self.pending)

    def take_effects(self) -> list[tuple]:
        """Domain effects (annotation added/resolved transitions) observed
        since the last call. Consumed by the server's usage logging."""
        out = self._effects
        self._effects = []
        return out

    # -- local operations ---------------------------------------------------

    def local_insert_text(self, block_id: str, position: int, text: str) -> list[Op]:
        blk = self._live_block(block_id)
        vis = self._visible(blk.eid)
        if not 0 <= position <= len(vis):
            raise PositionOutOfRange(
                f"insert at {position} outside [0, {len(vis)}]")
        anchor = vis[position - 1] if position > 0 else None
        ops: list[Op] = []
        for ch in text:
            new_id = self._fresh_eid()
            ops.append(InsertText(self.replica_id, self._next_seq() + len(ops),
                                  new_id, blk.eid, anchor, ch))
            anchor = new_id
        return self._finish_local(ops)

    def local_delete_range(self, block_id: str, position: int, length: int) -> list[Op]:
        blk = self._live_block(block_id)
        vis = self._visible(blk.eid)
        if length < 0 or position < 0 or position + length > len(vis):
            raise PositionOutOfRange(
                f"range ({position}, {length}) outside visible length {len(vis)}")
        if length == 0:
            return []
        targets = tuple(sorted(vis[position:position + length]))
        op = DeleteText(self.replica_id, self._next_seq(), targets)
        return self._finish_local([op])

    def local_insert_block(self, after_block_id: Optional[str] = None) -> list[Op]:
        anchor: Optional[ElementId] = None
        if after_block_id is not None:
            anchor = self._live_block(after_block_id).eid
        op = InsertBlock(self.replica_id, self._next_seq(), self._fresh_eid(), anchor)
        return self._finish_local([op])

    def local_delete_block(self, block_id: str) -> list[Op]:
        blk = self._live_block(block_id)
        op = DeleteBlock(self.replica_id, self._next_seq(), blk.eid)
        return self._finish_local([op])

    def local_set_block_kind(self, block_id: str, kind: BlockKind) -> list[Op]:
        blk = self._live_block(block_id)
        op = SetBlockKind(self.replica_id, self._next_seq(), blk.eid, kind,
                          self._bump_lamport())
        return self._finish_local([op])

    def local_set_title(self, text: str) -> list[Op]:
        op = SetTitle(self.replica_id, self._next_seq(), text, self._bump_lamport())
        return self._finish_local([op])

    def local_set_mark(self, block_id: str, start: int, end: int, mark: Mark,
                       enabled: bool = True) -> list[Op]:
        blk = self._live_block(block_id)
        vis = self._visible(blk.eid)
        if not (0 <= start < end <= len(vis)):
            raise PositionOutOfRange(f"mark range ({start}, {end}) invalid")
        op = SetMark(self.replica_id, self._next_seq(), blk.eid, vis[start],
                     vis[end - 1], mark, enabled, self._bump_lamport())
        return self._finish_local([op])

    def local_annotate(self, block_id: str, emoji: Union[EmojiCode, str],
                       author: str, now_ms: Optional[int] = None) -> list[Op]:
        if isinstance(emoji, str):
            emoji = parse_emoji_code(emoji)
        if emoji.category is not EmojiCategory.NOTE_TAKING:
            raise WrongEmojiCategory(
                f"{emoji.code} is chit-chat; only note-taking emojis annotate blocks")
        blk = self._live_block(block_id)
        if now_ms is None:
            now_ms = int(_time.time() * 1000)
        op = AddAnnotation(self.replica_id, self._next_seq(), self._fresh_eid(),
                           emoji.code, blk.eid, author, now_ms)
        return self._finish_local([op])

    def local_resolve(self, ann_id: str) -> list[Op]:
        try:
            ann = self._anns[parse_eid(ann_id)]
        except (MalformedOp, KeyError):
            raise NoSuchAnnotation(f"no annotation {ann_id!r}") from None
        op = ResolveAnnotation(self.replica_id, self._next_seq(), ann.ann_id)
        return self._finish_local([op])

    # -- integration --------------------------------------------------------

    def integrate(self, op: Op) -> IntegrateResult:
        applied = self.vv.get(op.origin, 0)
        if op.seq <= applied:
            return IntegrateResult.DUPLICATE
        if op.seq > applied + 1 or not self._refs_known(op):
            self.pending[(op.origin, op.seq)] = op
            return IntegrateResult.BUFFERED
        self._apply(op)
        self.vv[op.origin] = op.seq
        self._drain_pending()
        return IntegrateResult.APPLIED

    def _drain_pending(self) -> None:
        progressed = True
        while progressed and self.pending:
            progressed = False
            for key in sorted(self.pending):
                op = self.pending[key]
                applied = self.vv.get(op.origin, 0)
                if op.seq <= applied:
                    del self.pending[key]
                    progressed = True
                elif op.seq == applied + 1 and self._refs_known(op):
                    del self.pending[key]
                    self._apply(op)
                    self.vv[op.origin] = op.seq
                    progressed = True

    def _refs_known(self, op: Op) -> bool:
        if isinstance(op, InsertText):
            return op.block_id in self._blocks and (
                op.anchor is None or op.anchor in self._elements)
        if isinstance(op, DeleteText):
            return all(t in self._elements for t in op.targets)
        if isinstance(op, InsertBlock):
            return op.anchor is None or op.anchor in self._blocks
        if isinstance(op, (DeleteBlock, SetBlockKind)):
            return op.block_id in self._blocks
        if isinstance(op, SetMark):
            return (op.block_id in self._blocks
                    and op.start_el in self._elements
                    and op.end_el in self._elements)
        if isinstance(op, AddAnnotation):
            return op.block_id in self._blocks
        if isinstance(op, ResolveAnnotation):
            return op.ann_id in self._anns
        return True  # SetTitle

    def _observe_counter(self, eid: ElementId) -> None:
        if eid[0] > self._counter_high:
            self._counter_high = eid[0]

    def _apply(self, op: Op) -> None:
        if isinstance(op, InsertText):
            if op.new_id in self._elements:
                return
            el = _Element(op.new_id, op.anchor, op.char, op.block_id)
            self._elements[op.new_id] = el
            key = (_BLOCK_START, op.block_id) if op.anchor is None else op.anchor
            insort(self._el_children.setdefault(key, []), op.new_id)
            self._observe_counter(op.new_id)
            self._vis_cache.pop(op.block_id, None)
        elif isinstance(op, DeleteText):
            touched = set()
            for t in op.targets:
                el = self._elements[t]
                if not el.deleted:
                    el.deleted = True
                    touched.add(el.block)
            for b in touched:
                self._vis_cache.pop(b, None)
        elif isinstance(op, InsertBlock):
            if op.block_id in self._blocks:
                return
            self._blocks[op.block_id] = _BlockState(op.block_id, op.anchor)
            insort(self._block_children.setdefault(op.anchor, []), op.block_id)
            self._observe_counter(op.block_id)
            self._block_order_cache = None
        elif isinstance(op, DeleteBlock):
            blk = self._blocks[op.block_id]
            if not blk.deleted:
                blk.deleted = True
                for ann in self._anns.values():
                    if ann.block == op.block_id:
                        ann.orphaned = True
        elif isinstance(op, SetBlockKind):
            self.lamport = max(self.lamport, op.ts[0])
            blk = self._blocks[op.block_id]
            if op.ts > blk.kind_ts:
                blk.kind = op.kind
                blk.kind_ts = op.ts
        elif isinstance(op, SetMark):
            self.lamport = max(self.lamport, op.ts[0])
            blk = self._blocks[op.block_id]
            key = (op.mark, op.start_el, op.end_el)
            cur = blk.marks.get(key)
            if cur is None or op.ts > cur[1]:
                blk.marks[key] = (op.enabled, op.ts)
        elif isinstance(op, SetTitle):
            self.lamport = max(self.lamport, op.ts[0])
            if op.ts > self.title_ts:
                self.title = op.text
                self.title_ts = op.ts
        elif isinstance(op, AddAnnotation):
            if op.ann_id in self._anns:
                return
            ann = _Ann(op.ann_id, op.emoji_code, op.block_id, op.author,
                       op.created_at)
            ann.orphaned = self._blocks[op.block_id].deleted
            self._anns[op.ann_id] = ann
            self._observe_counter(op.ann_id)
            self._effects.append(("ann_added", eid_str(op.ann_id), op.emoji_code,
                                  op.author))
        elif isinstance(op, ResolveAnnotation):
            ann = self._anns[op.ann_id]
            if not ann.resolved:
                ann.resolved = True
                self._effects.append(("ann_resolved", eid_str(op.ann_id),
                                      ann.emoji_code, ann.author))
        else:
            raise MalformedOp(f"unknown op type {type(op).__name__}")

    # -- materialization ----------------------------------------------------

    def _mark_ranges(self, blk: _BlockState) -> list[MarkRange]:
        vis = self._visible(blk.eid)
        index = {e: i for i, e in enumerate(vis)}
        order = self._element_order(blk.eid)
        ranges = []
        for (mark, start_el, end_el), (enabled, _ts) in blk.marks.items():
            if not enabled:
                continue
            start = self._clamped_pos(start_el, index, order, vis)
            end = self._clamped_pos(end_el, index, order, vis)
            if end_el in index:
                end += 1
            if end > start:
                ranges.append(MarkRange(start, end, mark))
        ranges.sort(key=lambda r: (r.start, r.end, r.mark.value))
        return ranges

    def _clamped_pos(self, el: ElementId, index: dict, order: list,
                     vis: list) -> int:
        if el in index:
            return index[el]
        # tombstoned endpoint: count visible elements before it
        els = self._elements
        pos = 0
        for e in order:
            if e == el:
                break
            if not els[e].deleted:
                pos += 1
        return pos

    def document(self) -> NoteDocument:
        """Materialize the replica as a plain NoteDocument value."""
        els = self._elements
        blocks = []
        for bid in self.live_blocks():
            blk = self._blocks[bid]
            text = "".join(els[e].char for e in self._visible(bid))
            blocks.append(Block(eid_str(bid), blk.kind, text,
                                self._mark_ranges(blk)))
        anns = [
            Annotation(eid_str(a.ann_id), parse_emoji_code(a.emoji_code),
                       eid_str(a.block), a.author, a.created_at, a.resolved,
                       a.orphaned)
            for a in sorted(self._anns.values(), key=lambda a: a.ann_id)
        ]
        return NoteDocument(self.doc_id, self.title, blocks, anns)

    def state_hash(self) -> bytes:
        """32-byte digest of the observable document state. Equal digests
        mean equal observable documents; tombstones and register stamps
        do not participate."""
        els = self._elements
        blocks = []
        for bid in self.live_blocks():
            blk = self._blocks[bid]
            text = "".join(els[e].char for e in self._visible(bid))
            marks = [[r.start, r.end, r.mark.value] for r in self._mark_ranges(blk)]
            blocks.append([eid_str(bid), blk.kind.value, text, marks])
        anns = [
            [eid_str(a.ann_id), a.emoji_code, eid_str(a.block), a.author,
             a.created_at, a.resolved, a.orphaned]
            for a in sorted(self._anns.values(), key=lambda a: a.ann_id)
        ]
        canon = json.dumps(
            {"d": self.doc_id, "t": self.title, "b": blocks, "a": anns},
            separators=(",", ":"), ensure_ascii=False, sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).digest()

    # -- snapshots ------------------------------------------------------------

    SNAPSHOT_VERSION = 1

    def encode_snapshot(self) -> bytes:
        """Deterministic full-state snapshot: one version byte, then a
        canonical JSON body (documented in docs/formats.md)."""
        blocks = []
        for bid in sorted(self._blocks):
            blk = self._blocks[bid]
            els = [
                [eid_str(e.eid),
                 None if e.anchor is None else eid_str(e.anchor),
                 e.char, e.deleted]
                for e in sorted(
                    (el for el in self._elements.values() if el.block == bid),
                    key=lambda el: el.eid)
            ]
            marks = sorted(
                [[m.value, eid_str(s), eid_str(t), on, list(ts)]
                 for (m, s, t), (on, ts) in blk.marks.items()]
            )
            blocks.append({
                "id": eid_str(bid),
                "anchor": None if blk.anchor is None else eid_str(blk.anchor),
                "del": blk.deleted,
                "kind": [blk.kind.value, list(blk.kind_ts)],
                "els": els,
                "marks": marks,
            })
        anns = [
            [eid_str(a.ann_id), a.emoji_code, eid_str(a.block), a.author,
             a.created_at, a.resolved, a.orphaned]
            for a in sorted(self._anns.values(), key=lambda a: a.ann_id)
        ]
        body = {
            "doc": self.doc_id,
            "replica": self.replica_id,
            "lamport": self.lamport,
            "title": [self.title, list(self.title_ts)],
            "vv": {str(k): v for k, v in sorted(self.vv.items())},
            "blocks": blocks,
            "anns": anns,
            "pending": [op_to_dict(self.pending[k]) for k in sorted(self.pending)],
            "counter_high": self._counter_high,
        }
        payload = json.dumps(body, separators=(",", ":"), ensure_ascii=False,
                             sort_keys=True).encode("utf-8")
        return bytes([self.SNAPSHOT_VERSION]) + payload

    @classmethod
    def decode_snapshot(cls, data: bytes) -> "Replica":
        if not data or data[0] != cls.SNAPSHOT_VERSION:
            raise CorruptSnapshot("missing or unsupported snapshot version")
        try:
            body = json.loads(data[1:].decode("utf-8"))
            rep = cls(body["doc"], body["title"][0], body["replica"])
            rep.title_ts = _stamp(body["title"][1])
            rep.lamport = body["lamport"]
            rep.vv = {int(k): v for k, v in body["vv"].items()}
            for b in body["blocks"]:
                bid = parse_eid(b["id"])
                blk = _BlockState(bid, _eid_or_none(b["anchor"]))
                blk.deleted = b["del"]
                blk.kind = BlockKind(b["kind"][0])
                blk.kind_ts = _stamp(b["kind"][1])
                for m, s, t, on, ts in b["marks"]:
                    blk.marks[(Mark(m), parse_eid(s), parse_eid(t))] = (
                        bool(on), _stamp(ts))
                rep._blocks[bid] = blk
                insort(rep._block_children.setdefault(blk.anchor, []), bid)
                for eid_s, anchor_s, char, deleted in b["els"]:
                    eid = parse_eid(eid_s)
                    anchor = _eid_or_none(anchor_s)
                    el = _Element(eid, anchor, char, bid)
                    el.deleted = deleted
                    rep._elements[eid] = el
                    key = (_BLOCK_START, bid) if anchor is None else anchor
                    insort(rep._el_children.setdefault(key, []), eid)
            for aid, code, bid, author, at, resolved, orphaned in body["anns"]:
                ann = _Ann(parse_eid(aid), code, parse_eid(bid), author, at)
                ann.resolved = resolved
                ann.orphaned = orphaned
                rep._anns[ann.ann_id] = ann
            for opd in body["pending"]:
                op = op_from_dict(opd)
                rep.pending[(op.origin, op.seq)] = op
            rep._counter_high = body["counter_high"]
            rep._effects = []
            return rep
        except CorruptSnapshot:
            raise
        except Exception as exc:
            raise CorruptSnapshot(f"undecodable snapshot: {exc}") from None


def replay(doc_id: str, title: str, ops: Iterable[Op],
           replica_id: int = SERVER_REPLICA) -> Replica:
    """Rebuild a replica by integrating ops from an empty state (the
    crash-recovery audit path)."""
    rep = Replica(doc_id, title, replica_id)
    for op in ops:
        rep.integrate(op)
    return rep
