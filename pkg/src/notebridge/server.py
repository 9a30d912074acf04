"""Sync server core: rooms, sessions, frame handling.

The hub is transport-independent. A transport (the websocket layer, or
the simulation harness) registers connections by id, feeds inbound
frames, and ships the returned outbound frames. All frames are plain
dicts in the documented wire shape; the transport owns (de)serialization
and delivery.

Ordering contract, per room: ops are durably appended to the log before
any fan-out mentions them, fan-out order equals log order, and
``server_seq`` counts appended ops gaplessly. The hub itself is not
thread-safe: callers serialize frame handling (the asyncio loop or the
single-threaded simulator does this naturally).
"""

from __future__ import annotations

import json
from base64 import b64encode
from dataclasses import dataclass, field

from . import engine
from .engine import IntegrateResult, Replica
from .errors import (
    MalformedOp,
    NoSuchDocument,
    NoteBridgeError,
    NotEnrolled,
    OriginMismatch,
)
from .presence import RoomPresence
from .storage import Store, UsageEvent, UsageKind

DEFAULT_SNAPSHOT_EVERY = 100
HEARTBEAT_S = 15
IDLE_TIMEOUT_S = 45


def error_frame(code: str, msg: str) -> dict:
    return {"t": "error", "code": code, "msg": msg}


@dataclass
class Session:
    cid: str
    user: str
    replica: int
    doc_id: str


@dataclass
class Effects:
    """What the transport must do after a hub call: deliver frames, then
    close the listed connections."""

    sends: list[tuple[str, dict]] = field(default_factory=list)
    closes: list[str] = field(default_factory=list)

    def send(self, cid: str, frame: dict) -> None:
        self.sends.append((cid, frame))


class Room:
    def __init__(self, store: Store, doc_id: str):
        self.store = store
        self.doc_id = doc_id
        self.presence = RoomPresence()
        self.sessions: dict[str, Session] = {}
        meta = store.get_document(doc_id)
        self.authority = self._recover(store, doc_id, meta.title)
        self.server_seq = store.op_count(doc_id)

    @staticmethod
    def _recover(store: Store, doc_id: str, title: str) -> Replica:
        snap = store.read_latest_snapshot(doc_id)
        if snap is None:
            state = Replica(doc_id, title, engine.SERVER_REPLICA)
            basis = 0
        else:
            basis, data = snap
            state = Replica.decode_snapshot(data)
        for _seq, op_dict in store.read_ops(doc_id, basis):
            state.integrate(engine.op_from_dict(op_dict))
        state.take_effects()
        return state

    def participants(self) -> list[str]:
        return sorted({s.user for s in self.sessions.values()})

    def presence_fanout_frame(self) -> dict:
        snap = self.presence.snapshot()
        by_user = {c.user: c for c in snap.cursors}
        cursors = []
        for user in self.participants():
            cur = by_user.get(user)
            if cur is None:
                cursors.append({"user": user, "block": None, "offset": None})
            else:
                cursors.append({"user": user, "block": cur.block_id,
                                "offset": cur.offset})
        return {"t": "presence_fanout", "cursors": cursors}


class Hub:
    """One hub per server process; one room per open document."""

    def __init__(self, store: Store, snapshot_every: int = DEFAULT_SNAPSHOT_EVERY):
        self.store = store
        self.snapshot_every = snapshot_every
        self.rooms: dict[str, Room] = {}
        self.by_cid: dict[str, Session] = {}

    def room(self, doc_id: str) -> Room:
        room = self.rooms.get(doc_id)
        if room is None:
            room = Room(self.store, doc_id)
            self.rooms[doc_id] = room
        return room

    # -- connection lifecycle --

    def handle_frame(self, cid: str, frame: dict, now_ms: int) -> Effects:
        try:
            t = frame.get("t")
        except AttributeError:
            t = None
        if t == "hello":
            return self._hello(cid, frame, now_ms)
        session = self.by_cid.get(cid)
        if session is None:
            fx = Effects()
            fx.send(cid, error_frame("auth_failed", "no open session"))
            fx.closes.append(cid)
            return fx
        if t == "ops":
            return self._client_ops(session, frame, now_ms)
        if t == "presence":
            return self._presence(session, frame, now_ms)
        if t == "chitchat":
            return self._chitchat(session, frame, now_ms)
        fx = Effects()
        fx.send(cid, error_frame("malformed_frame", f"unknown frame type {t!r}"))
        return fx

    def disconnect(self, cid: str, now_ms: int) -> Effects:
        fx = Effects()
        session = self.by_cid.pop(cid, None)
        if session is None:
            return fx
        room = self.rooms.get(session.doc_id)
        if room is None:
            return fx
        room.sessions.pop(cid, None)
        if not any(s.user == session.user for s in room.sessions.values()):
            room.presence.drop_user(session.user)
        fanout = room.presence_fanout_frame()
        for other in room.sessions:
            fx.send(other, fanout)
        return fx

    # -- frame handlers --

    def _hello(self, cid: str, frame: dict, now_ms: int) -> Effects:
        fx = Effects()
        if cid in self.by_cid:
            fx.send(cid, error_frame("malformed_frame", "session already open"))
            return fx
        try:
            token = frame["token"]
            doc_id = frame["doc"]
            have_seq = int(frame.get("have_seq", 0))
            user = self.store.authenticate(token)
            meta = self.store.get_document(doc_id)
            if meta.deleted:
                raise NoSuchDocument(f"document {doc_id!r} is deleted")
            if not self.store.user_enrolled(user.user_id, meta.class_id):
                raise NotEnrolled(
                    f"{user.user_id} is not enrolled in {meta.class_id}")
        except (KeyError, TypeError, ValueError):
            fx.send(cid, error_frame("malformed_frame", "bad hello"))
            fx.closes.append(cid)
            return fx
        except NoteBridgeError as exc:
            fx.send(cid, error_frame(exc.code, str(exc)))
            fx.closes.append(cid)
            return fx

        room = self.room(doc_id)
        replica = self.store.assign_replica(doc_id, user.user_id)
        session = Session(cid, user.user_id, replica, doc_id)
        self.by_cid[cid] = session
        room.sessions[cid] = session

        if 0 < have_seq <= room.server_seq:
            snapshot_b64 = None
            basis = have_seq
        else:
            snap = self.store.read_latest_snapshot(doc_id)
            if snap is None:
                basis = 0
                data = Replica(doc_id, meta.title,
                               engine.SERVER_REPLICA).encode_snapshot()
            else:
                basis, data = snap
            snapshot_b64 = b64encode(data).decode("ascii")
        trailing = self.store.read_ops(doc_id, basis)

        fx.send(cid, {
            "t": "welcome",
            "snapshot": snapshot_b64,
            "seq": basis,
            "replica": replica,
            "participants": room.participants(),
        })
        if trailing:
            fx.send(cid, {"t": "ops", "ops": [op for _s, op in trailing],
                          "seq": room.server_seq})

        room.presence.add_participant(user.user_id)
        fanout = room.presence_fanout_frame()
        for other in room.sessions:
            fx.send(other, fanout)
        return fx

    def _client_ops(self, session: Session, frame: dict, now_ms: int) -> Effects:
        fx = Effects()
        room = self.rooms[session.doc_id]
        try:
            raw = frame["ops"]
            if not isinstance(raw, list):
                raise MalformedOp("ops must be a list")
            ops = [engine.op_from_dict(d) for d in raw]
            for op in ops:
                self._check_origin(room, session, op)
        except MalformedOp as exc:
            fx.send(session.cid, error_frame(exc.code, str(exc)))
            return fx
        except OriginMismatch as exc:
            fx.send(session.cid, error_frame(exc.code, str(exc)))
            fx.closes.append(session.cid)
            self.by_cid.pop(session.cid, None)
            room.sessions.pop(session.cid, None)
            return fx

        applied = []
        for op in ops:
            high = room.authority.vv.get(op.origin, 0)
            if op.seq <= high:
                continue  # at-least-once re-send of a logged op
            if op.seq != high + 1 or not room.authority._refs_known(op):
                fx.send(session.cid, error_frame(
                    "malformed_op",
                    f"op ({op.origin},{op.seq}) is not causally ready"))
                break
            op_bytes = json.dumps(engine.op_to_dict(op), separators=(",", ":"),
                                  ensure_ascii=False).encode("utf-8")
            room.server_seq = self.store.append_op(room.doc_id, op_bytes)
            result = room.authority.integrate(op)
            assert result is IntegrateResult.APPLIED
            applied.append(op)
            if room.server_seq % self.snapshot_every == 0:
                self.store.write_snapshot(room.doc_id, room.server_seq,
                                          room.authority.encode_snapshot())

        self._log_annotation_usage(room, session, now_ms)
        if applied:
            frame_out = {"t": "ops",
                         "ops": [engine.op_to_dict(op) for op in applied],
                         "seq": room.server_seq}
            for other in room.sessions:
                fx.send(other, frame_out)
        return fx

    def _check_origin(self, room: Room, session: Session, op) -> None:
        if op.origin == session.replica:
            return
        owner = self.store.replica_owner(room.doc_id, op.origin)
        if owner != session.user:
            raise OriginMismatch(
                f"op origin {op.origin} does not belong to {session.user}")
        for other in room.sessions.values():
            if other.cid != session.cid and other.replica == op.origin:
                raise OriginMismatch(
                    f"replica {op.origin} is bound to a live session")

    def _log_annotation_usage(self, room: Room, session: Session,
                              now_ms: int) -> None:
        meta = self.store.get_document(room.doc_id)
        for effect in room.authority.take_effects():
            kind = effect[0]
            if kind == "ann_added":
                self.store.append_usage(UsageEvent(
                    now_ms, meta.class_id, room.doc_id, effect[3],
                    UsageKind.NT_EMOJI_INSERTED, effect[2]))
            elif kind == "ann_resolved":
                self.store.append_usage(UsageEvent(
                    now_ms, meta.class_id, room.doc_id, session.user,
                    UsageKind.NT_EMOJI_RESOLVED, effect[2]))

    def _presence(self, session: Session, frame: dict, now_ms: int) -> Effects:
        fx = Effects()
        room = self.rooms[session.doc_id]
        cursor = frame.get("cursor")
        try:
            if cursor is None:
                room.presence.update_cursor(session.user, None, None, now_ms)
            else:
                room.presence.update_cursor(session.user, cursor["block"],
                                            int(cursor["offset"]), now_ms)
        except (KeyError, TypeError, ValueError):
            fx.send(session.cid, error_frame("malformed_frame", "bad cursor"))
            return fx
        fanout = room.presence_fanout_frame()
        for other in room.sessions:
            fx.send(other, fanout)
        return fx

    def _chitchat(self, session: Session, frame: dict, now_ms: int) -> Effects:
        fx = Effects()
        room = self.rooms[session.doc_id]
        try:
            event = room.presence.emit_chitchat(session.user,
                                                frame.get("emoji", ""), now_ms)
        except NoteBridgeError as exc:
            fx.send(session.cid, error_frame(exc.code, str(exc)))
            return fx
        meta = self.store.get_document(room.doc_id)
        self.store.append_usage(UsageEvent(
            now_ms, meta.class_id, room.doc_id, session.user,
            UsageKind.CC_EMOJI_SENT, event.emoji.code))
        fanout = {"t": "chitchat_fanout", "emoji": event.emoji.code,
                  "sender": event.sender, "sent_at": event.sent_at}
        for other in room.sessions:
            fx.send(other, fanout)
        return fx
