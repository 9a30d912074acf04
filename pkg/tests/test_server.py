from __future__ import annotations

from base64 import b64decode

import pytest

from notebridge import engine
from notebridge.engine import Replica
from notebridge.server import Hub
from notebridge.storage import Role, Store, UsageKind


@pytest.fixture
def env(tmp_path):
    store = Store(tmp_path / "data", fsync=False)
    cls = store.create_class("HCI")
    pnt, pnt_token = store.create_user("pnt", Role.PNT)
    swd, swd_token = store.create_user("swd", Role.SWD)
    store.enroll(cls.class_id, pnt.user_id)
    store.enroll(cls.class_id, swd.user_id)
    meta = store.create_document(cls.class_id, "Notes", pnt.user_id, now_ms=0)
    hub = Hub(store, snapshot_every=100)
    return hub, store, meta, {"pnt": pnt_token, "swd": swd_token}


def hello(hub, cid, token, doc_id, have_seq=0, now=0):
    return hub.handle_frame(cid, {"t": "hello", "token": token, "doc": doc_id,
                                  "have_seq": have_seq}, now)


def frames_to(fx, cid, kind=None):
    return [f for c, f in fx.sends if c == cid and (kind is None or f["t"] == kind)]


class ClientSide:
    """Minimal protocol client for hub tests: replica + op encoding."""

    def __init__(self, hub, cid, token, doc_id):
        fx = hello(hub, cid, token, doc_id)
        welcome = frames_to(fx, cid, "welcome")[0]
        self.replica = Replica.decode_snapshot(b64decode(welcome["snapshot"]))
        self.replica.rebind(welcome["replica"])
        for frame in frames_to(fx, cid, "ops"):
            for d in frame["ops"]:
                self.replica.integrate(engine.op_from_dict(d))
        self.cid = cid
        self.welcome = welcome

    def ops_frame(self, batch):
        return {"t": "ops", "ops": [engine.op_to_dict(op) for op in batch]}


class TestOpenSession:
    def test_cold_join(self, env):
        hub, store, meta, tokens = env
        fx = hello(hub, "k1", tokens["pnt"], meta.doc_id)
        welcome = frames_to(fx, "k1", "welcome")[0]
        assert welcome["snapshot"] is not None
        assert welcome["seq"] == 0  # fresh doc: snapshot basis == log length
        assert welcome["replica"] == 1
        assert welcome["participants"] == ["u0001"]

    def test_bad_token_closes(self, env):
        hub, store, meta, tokens = env
        fx = hello(hub, "k1", "bogus", meta.doc_id)
        errors = frames_to(fx, "k1", "error")
        assert errors and errors[0]["code"] == "auth_failed"
        assert "k1" in fx.closes

    def test_unknown_document(self, env):
        hub, store, meta, tokens = env
        fx = hello(hub, "k1", tokens["pnt"], "d9999")
        assert frames_to(fx, "k1", "error")[0]["code"] == "no_such_document"

    def test_not_enrolled(self, env):
        hub, store, meta, tokens = env
        _outsider, outsider_token = store.create_user("x", Role.PNT)
        fx = hello(hub, "k1", outsider_token, meta.doc_id)
        assert frames_to(fx, "k1", "error")[0]["code"] == "not_enrolled"

    def test_joiner_appears_in_presence_fanout(self, env):
        hub, store, meta, tokens = env
        ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        fx = hello(hub, "k2", tokens["swd"], meta.doc_id)
        fanouts = frames_to(fx, "k1", "presence_fanout")
        assert fanouts
        assert {c["user"] for c in fanouts[0]["cursors"]} == {"u0001", "u0002"}

    def test_reconnect_replays_exact_gap(self, env):
        hub, store, meta, tokens = env
        client = ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        batch = client.replica.local_insert_block(None)
        bid = engine.eid_str(batch[0].block_id)
        hub.handle_frame("k1", client.ops_frame(batch), 0)
        text = client.replica.local_insert_text(bid, 0, "hello")
        hub.handle_frame("k1", client.ops_frame(text), 0)
        assert hub.room(meta.doc_id).server_seq == 6

        hub.disconnect("k1", 0)
        fx = hello(hub, "k2", tokens["pnt"], meta.doc_id, have_seq=1)
        welcome = frames_to(fx, "k2", "welcome")[0]
        assert welcome["snapshot"] is None
        assert welcome["seq"] == 1
        replay = frames_to(fx, "k2", "ops")[0]
        assert len(replay["ops"]) == 5
        assert replay["seq"] == 6


class TestClientOps:
    def test_fanout_to_both_sessions(self, env):
        hub, store, meta, tokens = env
        a = ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        ClientSide(hub, "k2", tokens["swd"], meta.doc_id)
        batch = a.replica.local_insert_block(None)
        fx = hub.handle_frame("k1", a.ops_frame(batch), 0)
        for cid in ("k1", "k2"):
            frames = frames_to(fx, cid, "ops")
            assert len(frames) == 1
            assert frames[0]["seq"] == 1

    def test_origin_spoof_closes_session(self, env):
        hub, store, meta, tokens = env
        a = ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        b = ClientSide(hub, "k2", tokens["swd"], meta.doc_id)
        batch = b.replica.local_insert_block(None)  # origin = b's replica
        fx = hub.handle_frame("k1", a.ops_frame(batch), 0)
        assert frames_to(fx, "k1", "error")[0]["code"] == "origin_mismatch"
        assert "k1" in fx.closes

    def test_resend_after_reconnect_is_accepted(self, env):
        hub, store, meta, tokens = env
        a = ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        batch = a.replica.local_insert_block(None)
        hub.handle_frame("k1", a.ops_frame(batch), 0)
        hub.disconnect("k1", 0)
        # new session, new replica id; unacked op re-sent with old origin
        fx = hello(hub, "k2", tokens["pnt"], meta.doc_id, have_seq=0)
        assert frames_to(fx, "k2", "welcome")
        fx = hub.handle_frame("k2", a.ops_frame(batch), 0)
        assert not frames_to(fx, "k2", "error")
        assert hub.room(meta.doc_id).server_seq == 1  # duplicate suppressed

    def test_durable_before_fanout(self, env):
        hub, store, meta, tokens = env
        a = ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        batch = a.replica.local_insert_block(None)
        fx = hub.handle_frame("k1", a.ops_frame(batch), 0)
        assert frames_to(fx, "k1", "ops")
        # the op was written before the fan-out frames existed
        assert store.op_count(meta.doc_id) == 1
        logged = store.read_ops(meta.doc_id, 0)
        assert logged[0][1] == engine.op_to_dict(batch[0])

    def test_malformed_op_keeps_session(self, env):
        hub, store, meta, tokens = env
        ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        fx = hub.handle_frame("k1", {"t": "ops", "ops": [{"k": "nope"}]}, 0)
        assert frames_to(fx, "k1", "error")[0]["code"] == "malformed_op"
        assert "k1" not in fx.closes
        batch_ok = {"t": "ops", "ops": []}
        assert hub.handle_frame("k1", batch_ok, 0).sends == []


class TestAuthorityInvariants:
    def test_convergence_and_replay_audit(self, env):
        hub, store, meta, tokens = env
        a = ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        b = ClientSide(hub, "k2", tokens["swd"], meta.doc_id)
        batch = a.replica.local_insert_block(None)
        bid = engine.eid_str(batch[0].block_id)
        for frame_batch in (batch, a.replica.local_insert_text(bid, 0, "hi")):
            fx = hub.handle_frame("k1", a.ops_frame(frame_batch), 0)
            for cid, frame in fx.sends:
                if cid == "k2" and frame["t"] == "ops":
                    for d in frame["ops"]:
                        b.replica.integrate(engine.op_from_dict(d))
        room = hub.room(meta.doc_id)
        assert a.replica.state_hash() == room.authority.state_hash()
        assert b.replica.state_hash() == room.authority.state_hash()
        rebuilt = engine.replay(
            meta.doc_id, meta.title,
            [engine.op_from_dict(d) for _s, d in store.read_ops(meta.doc_id)])
        assert rebuilt.state_hash() == room.authority.state_hash()

    def test_snapshot_policy_counts(self, env):
        hub, store, meta, tokens = env
        hub.snapshot_every = 100
        a = ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        batch = a.replica.local_insert_block(None)
        bid = engine.eid_str(batch[0].block_id)
        hub.handle_frame("k1", a.ops_frame(batch), 0)
        sent = 1
        while sent < 250:
            chunk = a.replica.local_insert_text(bid, 0, "x" * min(50, 250 - sent))
            hub.handle_frame("k1", a.ops_frame(chunk), 0)
            sent += len(chunk)
        assert store.snapshot_seqs(meta.doc_id) == [100, 200]

    def test_join_after_snapshot_replays_tail(self, env):
        hub, store, meta, tokens = env
        a = ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        batch = a.replica.local_insert_block(None)
        bid = engine.eid_str(batch[0].block_id)
        hub.handle_frame("k1", a.ops_frame(batch), 0)
        hub.handle_frame(
            "k1", a.ops_frame(a.replica.local_insert_text(bid, 0, "x" * 149)), 0)
        assert store.snapshot_seqs(meta.doc_id) == [100]

        late = ClientSide(hub, "k2", tokens["swd"], meta.doc_id)
        assert late.welcome["seq"] == 100
        room = hub.room(meta.doc_id)
        assert late.replica.state_hash() == room.authority.state_hash()

    def test_ninety_nine_ops_no_snapshot(self, env):
        hub, store, meta, tokens = env
        a = ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        batch = a.replica.local_insert_block(None)
        bid = engine.eid_str(batch[0].block_id)
        hub.handle_frame("k1", a.ops_frame(batch), 0)
        hub.handle_frame(
            "k1", a.ops_frame(a.replica.local_insert_text(bid, 0, "x" * 98)), 0)
        assert store.snapshot_seqs(meta.doc_id) == []
        fx = hello(hub, "k2", tokens["swd"], meta.doc_id)
        replayed = frames_to(fx, "k2", "ops")[0]
        assert len(replayed["ops"]) == 99

    def test_crash_between_append_and_fanout(self, env, tmp_path):
        hub, store, meta, tokens = env
        a = ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        batch = a.replica.local_insert_block(None)
        hub.handle_frame("k1", a.ops_frame(batch), 0)
        # crash: drop hub + store; the appended op must survive reopen
        store.close()
        store2 = Store(store.root, fsync=False)
        hub2 = Hub(store2)
        fx = hello(hub2, "k9", tokens["swd"], meta.doc_id)
        replay = frames_to(fx, "k9", "ops")
        assert replay and len(replay[0]["ops"]) == 1
        room2 = hub2.room(meta.doc_id)
        assert room2.server_seq == 1
        # presence is volatile: the restarted room starts empty (only the
        # new joiner is present)
        assert room2.presence.snapshot().participants == ["u0002"]


class TestPresenceAndChitchat:
    def test_cursor_fanout(self, env):
        hub, store, meta, tokens = env
        a = ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        ClientSide(hub, "k2", tokens["swd"], meta.doc_id)
        batch = a.replica.local_insert_block(None)
        bid = engine.eid_str(batch[0].block_id)
        hub.handle_frame("k1", a.ops_frame(batch), 0)
        fx = hub.handle_frame(
            "k1", {"t": "presence", "cursor": {"block": bid, "offset": 3}}, 7)
        fanout = frames_to(fx, "k2", "presence_fanout")[0]
        cursor = next(c for c in fanout["cursors"] if c["user"] == "u0001")
        assert cursor == {"user": "u0001", "block": bid, "offset": 3}

    def test_presence_not_logged(self, env):
        hub, store, meta, tokens = env
        ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        before = store.op_count(meta.doc_id)
        hub.handle_frame("k1", {"t": "presence", "cursor": None}, 0)
        assert store.op_count(meta.doc_id) == before

    def test_chitchat_fanout_and_usage(self, env):
        hub, store, meta, tokens = env
        ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        ClientSide(hub, "k2", tokens["swd"], meta.doc_id)
        fx = hub.handle_frame("k2", {"t": "chitchat", "emoji": "cc.great"}, 40)
        for cid in ("k1", "k2"):
            fanout = frames_to(fx, cid, "chitchat_fanout")[0]
            assert fanout == {"t": "chitchat_fanout", "emoji": "cc.great",
                              "sender": "u0002", "sent_at": 40}
        events = store.read_usage(doc_id=meta.doc_id)
        assert [e.kind for e in events if e.kind is UsageKind.CC_EMOJI_SENT] \
            == [UsageKind.CC_EMOJI_SENT]

    def test_chitchat_category_gate(self, env):
        hub, store, meta, tokens = env
        ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        fx = hub.handle_frame("k1", {"t": "chitchat", "emoji": "nt.important"}, 0)
        assert frames_to(fx, "k1", "error")[0]["code"] == "wrong_emoji_category"
        assert not frames_to(fx, "k1", "chitchat_fanout")
        assert "k1" not in fx.closes

    def test_annotation_usage_events(self, env):
        hub, store, meta, tokens = env
        a = ClientSide(hub, "k1", tokens["pnt"], meta.doc_id)
        batch = a.replica.local_insert_block(None)
        bid = engine.eid_str(batch[0].block_id)
        hub.handle_frame("k1", a.ops_frame(batch), 0)
        ann = a.replica.local_annotate(bid, "nt.detail_plz", "u0001", now_ms=1)
        hub.handle_frame("k1", a.ops_frame(ann), 1)
        res = a.replica.local_resolve(engine.eid_str(ann[0].ann_id))
        hub.handle_frame("k1", a.ops_frame(res), 2)
        kinds = [e.kind for e in store.read_usage(doc_id=meta.doc_id)]
        assert kinds.count(UsageKind.NT_EMOJI_INSERTED) == 1
        assert kinds.count(UsageKind.NT_EMOJI_RESOLVED) == 1
        # re-delivery of the same resolve op must not double-log
        hub.handle_frame("k1", a.ops_frame(res), 3)
        kinds = [e.kind for e in store.read_usage(doc_id=meta.doc_id)]
        assert kinds.count(UsageKind.NT_EMOJI_RESOLVED) == 1
