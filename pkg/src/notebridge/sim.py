"""Deterministic simulated-network harness.

Runs real clients (engine replicas speaking the wire protocol) against
the real hub over a virtual clock: no wall time, no sockets, every run a
pure function of its seed. The network model injects latency, drops
(fan-out frames only -- the durable append always happened first),
duplicates, bounded reordering, and timed partitions that cut selected
clients off from the server.

Recovery follows the client contract: on reconnect a client offers its
contiguous coverage (``have_seq``), the server replays what is missing,
and the client re-sends its not-yet-acknowledged ops (at-least-once;
the server's duplicate suppression makes this safe). After the scripted
or fuzzed traffic quiesces, clients resync until coverage is complete,
then the report compares every client's state hash with the authority's.
"""

from __future__ import annotations

import heapq
import json
import random
import tempfile
from base64 import b64decode
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import engine
from .docmodel import BlockKind, EmojiCategory, Mark, emoji_catalog
from .engine import Replica
from .errors import InvalidScenario, NoteBridgeError
from .server import Hub
from .storage import Role, Store

_MAX_DEFERRALS = 200


@dataclass
class NetConfig:
    seed: int = 0
    latency_ms: tuple[int, int] = (5, 50)
    drop_prob: float = 0.0
    duplicate_prob: float = 0.0
    reorder_window: int = 0
    partitions: list[tuple[int, int, frozenset]] = field(default_factory=list)

    def __post_init__(self):
        for p in (self.drop_prob, self.duplicate_prob):
            if not 0.0 <= p <= 1.0:
                raise InvalidScenario(f"probability {p} outside [0, 1]")
        if self.reorder_window < 0:
            raise InvalidScenario("reorder_window must be >= 0")
        if self.latency_ms[0] > self.latency_ms[1] or self.latency_ms[0] < 0:
            raise InvalidScenario(f"bad latency range {self.latency_ms}")


@dataclass
class ScenarioReport:
    converged: bool
    final_hashes: dict[str, str]
    authority_hash: str
    ops_total: int
    latency_stats: Optional[dict]
    buffered_max: int
    usage_counts: dict[str, int]
    doc_id: str

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=1)

    def summary(self) -> str:
        lines = [
            f"converged      {'yes' if self.converged else 'NO'}",
            f"ops_total      {self.ops_total}",
            f"authority      {self.authority_hash[:16]}…",
            f"buffered_max   {self.buffered_max}",
        ]
        for name in sorted(self.final_hashes):
            mark = "=" if self.final_hashes[name] == self.authority_hash else "≠"
            lines.append(f"  {name:<12} {mark} {self.final_hashes[name][:16]}…")
        if self.latency_stats:
            ls = self.latency_stats
            lines.append(
                f"latency ms     min {ls['min']}  median {ls['median']}  p95 {ls['p95']}")
        for kind in sorted(self.usage_counts):
            lines.append(f"usage          {kind} × {self.usage_counts[kind]}")
        return "\n".join(lines)


class _World:
    """Virtual-time event loop plus the network model."""

    def __init__(self, hub: Hub, net: NetConfig):
        self.hub = hub
        self.net = net
        self.rng = random.Random(net.seed)
        self.now = 0
        self._heap: list = []
        self._tick = 0
        self._next_cid = 0
        self.clients: dict[str, "_SimClient"] = {}
        self.cid_owner: dict[str, "_SimClient"] = {}
        # per-connection FIFO high-water marks (a connection is a stream:
        # only fan-out frames are subject to reorder/drop/duplication)
        self._fifo_up: dict[str, int] = {}
        self._fifo_down: dict[str, int] = {}

    def at(self, t: int, fn: Callable[[], None]) -> None:
        self._tick += 1
        heapq.heappush(self._heap, (max(t, self.now), self._tick, fn))

    def run(self) -> None:
        while self._heap:
            t, _tick, fn = heapq.heappop(self._heap)
            self.now = t
            fn()

    def new_cid(self) -> str:
        self._next_cid += 1
        return f"k{self._next_cid}"

    def latency(self) -> int:
        lo, hi = self.net.latency_ms
        return self.rng.randint(lo, hi)

    def partitioned(self, client: "_SimClient", t: int) -> bool:
        return any(s <= t < e and client.name in side
                   for s, e, side in self.net.partitions)

    # -- traffic --

    def _fifo_arrival(self, marks: dict[str, int], cid: str, t: int) -> int:
        t = max(t, marks.get(cid, 0))
        marks[cid] = t
        return t

    def client_to_server(self, client: "_SimClient", frame: dict) -> None:
        """Client frames are never dropped or reordered by the lossy
        knobs; only a partition can eat them."""
        if self.partitioned(client, self.now):
            return
        cid = client.cid
        payload = json.dumps(frame, ensure_ascii=False)
        arrive = self._fifo_arrival(self._fifo_up, cid,
                                    self.now + self.latency())

        def deliver():
            if client.cid != cid:  # connection was replaced meanwhile
                return
            if self.partitioned(client, self.now):
                return
            fx = self.hub.handle_frame(cid, json.loads(payload), self.now)
            self.dispatch(fx, cid, frame.get("t") == "hello")

        self.at(arrive, deliver)

    def server_disconnect(self, client: "_SimClient", cid: str) -> None:
        def deliver():
            fx = self.hub.disconnect(cid, self.now)
            self.dispatch(fx, cid, False)

        self.at(self.now + self.latency(), deliver)

    def dispatch(self, fx, inbound_cid: str, was_hello: bool) -> None:
        for target_cid, frame in fx.sends:
            direct = was_hello and target_cid == inbound_cid
            direct = direct or frame.get("t") == "error"
            self.server_to_client(target_cid, frame, direct)
        for target_cid in fx.closes:
            client = self.cid_owner.get(target_cid)
            if client is not None and client.cid == target_cid:
                client.on_closed()

    def server_to_client(self, cid: str, frame: dict, direct: bool) -> None:
        copies = 1
        if not direct:
            if self.rng.random() < self.net.drop_prob:
                return
            if self.rng.random() < self.net.duplicate_prob:
                copies = 2
        payload = json.dumps(frame, ensure_ascii=False)
        for _ in range(copies):
            arrive = self.now + self.latency()
            if direct:
                arrive = self._fifo_arrival(self._fifo_down, cid, arrive)
            elif self.net.reorder_window:
                arrive += self.rng.randint(0, self.net.reorder_window) \
                    * self.net.latency_ms[1]

            def deliver(arrive=arrive):
                client = self.cid_owner.get(cid)
                if client is None or client.cid != cid:
                    return
                if self.partitioned(client, self.now):
                    return
                client.on_frame(json.loads(payload))

            self.at(arrive, deliver)


class _SimClient:
    """A simulated participant: a real engine replica plus the client
    half of the wire protocol (coverage tracking, acks, re-send)."""

    def __init__(self, world: _World, name: str, token: str, doc_id: str):
        self.world = world
        self.name = name
        self.token = token
        self.doc_id = doc_id
        self.replica: Optional[Replica] = None
        self.cid: Optional[str] = None
        self.connected = False
        self.have_seq = 0
        self._chunks: dict[int, int] = {}  # start_seq -> end_seq of ops frames
        self.sent_ops: list[tuple[tuple[int, int], dict]] = []  # (key, op dict)
        self.sent_keys: set[tuple[int, int]] = set()
        self.acked: set[tuple[int, int]] = set()
        # metrics
        self.buffered_peak = 0
        self.apply_times: dict[tuple[int, int], int] = {}
        world.clients[name] = self

    # -- connection management --

    def connect(self) -> None:
        """Open a fresh connection: close the previous one (the hub learns
        of both in that order, atomically) and say hello with our coverage."""
        old_cid = self.cid
        new_cid = self.world.new_cid()
        self.cid = new_cid
        self.world.cid_owner[new_cid] = self
        self.connected = False
        world = self.world
        if world.partitioned(self, world.now):
            return  # hello lost; the partition-heal resync will retry
        hello = json.dumps({"t": "hello", "token": self.token,
                            "doc": self.doc_id, "have_seq": self.have_seq})

        def deliver():
            if self.cid != new_cid:
                return
            if world.partitioned(self, world.now):
                return
            if old_cid is not None:
                world.dispatch(world.hub.disconnect(old_cid, world.now),
                               old_cid, False)
            world.dispatch(world.hub.handle_frame(new_cid, json.loads(hello),
                                                  world.now), new_cid, True)

        world.at(world.now + world.latency(), deliver)

    def on_closed(self) -> None:
        self.connected = False
        self.cid = None

    def resync(self) -> None:
        self.connect()

    # -- inbound frames --

    def on_frame(self, frame: dict) -> None:
        t = frame.get("t")
        if t == "welcome":
            self._on_welcome(frame)
        elif t == "ops":
            self._on_ops(frame)
        elif t == "error":
            self.connected = False
        # presence/chitchat fan-outs don't touch document state

    def _on_welcome(self, frame: dict) -> None:
        self.connected = True
        if frame["snapshot"] is not None:
            old_vv = dict(self.replica.vv) if self.replica else {}
            self.replica = Replica.decode_snapshot(b64decode(frame["snapshot"]))
            self._record_applies(old_vv)
            self.have_seq = frame["seq"]
            self._chunks.clear()
        self.replica.rebind(frame["replica"])
        self._resend_unacked()

    def _on_ops(self, frame: dict) -> None:
        if self.replica is None:
            return
        ops = [engine.op_from_dict(d) for d in frame["ops"]]
        old_vv = dict(self.replica.vv)
        for op in ops:
            self.replica.integrate(op)
            key = (op.origin, op.seq)
            if key in self.sent_keys:
                self.acked.add(key)
        self._record_applies(old_vv)
        self.buffered_peak = max(self.buffered_peak, self.replica.pending_count())
        end = frame["seq"]
        start = end - len(ops)
        cur = self._chunks.get(start)
        if cur is None or cur < end:
            self._chunks[start] = end
        self._advance_coverage()

    def _advance_coverage(self) -> None:
        moved = True
        while moved:
            moved = False
            for start, end in list(self._chunks.items()):
                if start <= self.have_seq:
                    del self._chunks[start]
                    if end > self.have_seq:
                        self.have_seq = end
                    moved = True

    def _record_applies(self, old_vv: dict[int, int]) -> None:
        now = self.world.now
        for origin, new_high in self.replica.vv.items():
            for seq in range(old_vv.get(origin, 0) + 1, new_high + 1):
                self.apply_times[(origin, seq)] = now

    def _resend_unacked(self) -> None:
        pendings = [d for key, d in self.sent_ops if key not in self.acked]
        if pendings and self.connected:
            self.world.client_to_server(self, {"t": "ops", "ops": pendings})

    # -- local actions --

    def send_batch(self, batch: list) -> None:
        """Record locally-applied ops and transmit them. While offline the
        ops simply stay unacknowledged and go out with the next resync."""
        now = self.world.now
        dicts = []
        for op in batch:
            key = (op.origin, op.seq)
            d = engine.op_to_dict(op)
            self.sent_ops.append((key, d))
            self.sent_keys.add(key)
            self.apply_times[key] = now  # local echo
            dicts.append(d)
        if dicts and self.connected:
            self.world.client_to_server(self, {"t": "ops", "ops": dicts})

    def send_cursor(self, block_id: Optional[str], offset: int) -> None:
        cursor = None if block_id is None else {"block": block_id,
                                                "offset": offset}
        if self.connected:
            self.world.client_to_server(self, {"t": "presence", "cursor": cursor})

    def send_chitchat(self, emoji_code: str) -> None:
        if self.connected:
            self.world.client_to_server(self, {"t": "chitchat",
                                               "emoji": emoji_code})


# -- shared run plumbing ----------------------------------------------------


@dataclass
class _Fixture:
    store: Store
    hub: Hub
    doc_id: str
    class_id: str
    tokens: dict[str, str]  # client name -> token
    usage_before: int


def _build_fixture(names_roles: list[tuple[str, Role]], title: str,
                   data_dir: Optional[Path], snapshot_every: int) -> _Fixture:
    if data_dir is None:
        data_dir = Path(tempfile.mkdtemp(prefix="notebridge-sim-"))
    store = Store(data_dir, fsync=False)
    cls = store.create_class("sim")
    tokens = {}
    first_user = None
    for name, role in names_roles:
        account, token = store.create_user(name, role)
        store.enroll(cls.class_id, account.user_id)
        tokens[name] = token
        first_user = first_user or account.user_id
    meta = store.create_document(cls.class_id, title, first_user, now_ms=0)
    usage_before = store.usage_count()
    hub = Hub(store, snapshot_every=snapshot_every)
    return _Fixture(store, hub, meta.doc_id, cls.class_id, tokens, usage_before)


def _finalize(world: _World, fx: _Fixture, created: dict) -> ScenarioReport:
    # quiescence: resync until every client covers the full log and has
    # no unacknowledged ops left
    room = fx.hub.room(fx.doc_id)
    for _round in range(6):
        lagging = [
            c for c in world.clients.values()
            if c.have_seq < room.server_seq
            or any(k not in c.acked for k, _ in c.sent_ops)
            or (c.replica is not None and c.replica.pending_count())
        ]
        if not lagging:
            break
        for c in lagging:
            world.at(world.now + 1, c.resync)
        world.run()

    authority_hash = room.authority.state_hash().hex()
    final_hashes = {
        name: (c.replica.state_hash().hex() if c.replica else "")
        for name, c in world.clients.items()
    }
    converged = all(h == authority_hash for h in final_hashes.values())

    latencies = sorted(
        max(times) - created[key]
        for key, times in _gather_apply_times(world).items()
        if key in created
    )
    if latencies:
        stats = {
            "min": latencies[0],
            "median": latencies[len(latencies) // 2],
            "p95": latencies[min(len(latencies) - 1,
                                 int(0.95 * (len(latencies) - 1)))],
        }
    else:
        stats = None

    usage_counts: dict[str, int] = {}
    for ev in fx.store.read_usage()[fx.usage_before:]:
        usage_counts[ev.kind.value] = usage_counts.get(ev.kind.value, 0) + 1

    return ScenarioReport(
        converged=converged,
        final_hashes=dict(sorted(final_hashes.items())),
        authority_hash=authority_hash,
        ops_total=room.server_seq,
        latency_stats=stats,
        buffered_max=max((c.buffered_peak for c in world.clients.values()),
                         default=0),
        usage_counts=usage_counts,
        doc_id=fx.doc_id,
    )


def _gather_apply_times(world: _World) -> dict:
    merged: dict[tuple[int, int], list[int]] = {}
    for c in world.clients.values():
        for key, t in c.apply_times.items():
            merged.setdefault(key, []).append(t)
    return merged


# -- scripted scenarios -------------------------------------------------------

_ACTIONS = {"insert_block", "delete_block", "type", "delete", "set_title",
            "set_kind", "mark", "annotate", "resolve", "chitchat", "cursor",
            "disconnect", "reconnect"}


def load_scenario(path) -> dict:
    try:
        scenario = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidScenario(f"cannot read scenario: {exc}") from exc
    validate_scenario(scenario)
    return scenario


def validate_scenario(scenario: dict) -> None:
    if not isinstance(scenario.get("clients"), list) or not scenario["clients"]:
        raise InvalidScenario("scenario needs a non-empty clients list")
    names = set()
    for c in scenario["clients"]:
        if "name" not in c or c.get("role") not in ("swd", "pnt"):
            raise InvalidScenario(f"bad client entry {c!r}")
        names.add(c["name"])
    for a in scenario.get("actions", []):
        if a.get("client") not in names:
            raise InvalidScenario(f"action references unknown client: {a!r}")
        if a.get("do") not in _ACTIONS:
            raise InvalidScenario(f"unknown action {a.get('do')!r}")
        if not isinstance(a.get("at"), int) or a["at"] < 0:
            raise InvalidScenario(f"action needs a non-negative time: {a!r}")


def run_scripted(scenario: dict, net: NetConfig,
                 data_dir: Optional[Path] = None,
                 snapshot_every: int = 100) -> ScenarioReport:
    """Execute a scripted scenario under the simulated network."""
    validate_scenario(scenario)
    roles = [(c["name"], Role(c["role"])) for c in scenario["clients"]]
    fx = _build_fixture(roles, scenario.get("title", "Untitled"),
                        data_dir, snapshot_every)
    world = _World(fx.hub, net)
    clients = {
        c["name"]: _SimClient(world, c["name"], fx.tokens[c["name"]], fx.doc_id)
        for c in scenario["clients"]
    }
    created: dict[tuple[int, int], int] = {}

    for c in scenario["clients"]:
        client = clients[c["name"]]
        world.at(int(c.get("connect_at", 0)), client.connect)

    for action in scenario.get("actions", []):
        client = clients[action["client"]]
        world.at(action["at"], _Action(world, client, action, created))

    for start, end, side in net.partitions:
        for name in side:
            if name in clients:
                world.at(end, clients[name].resync)

    world.run()
    return _finalize(world, fx, created)


class _Action:
    """One timed scripted action; re-queues itself while a cross-client
    reference (a block or annotation index) has not propagated yet."""

    def __init__(self, world: _World, client: _SimClient, spec: dict,
                 created: dict):
        self.world = world
        self.client = client
        self.spec = spec
        self.created = created
        self.deferrals = 0

    def __call__(self) -> None:
        spec = self.spec
        client = self.client
        do = spec["do"]
        if client.replica is None and do not in ("disconnect", "reconnect"):
            return self._defer("client not ready")
        try:
            if do == "disconnect":
                if client.cid is not None:
                    old = client.cid
                    client.cid = None
                    client.connected = False
                    self.world.cid_owner.pop(old, None)
                    self.world.server_disconnect(client, old)
                return
            if do == "reconnect":
                client.connect()
                return
            if do == "chitchat":
                client.send_chitchat(spec["emoji"])
                return
            if do == "cursor":
                block = self._block(spec.get("block"))
                client.send_cursor(block, int(spec.get("offset", 0)))
                return
            batch = self._edit_batch(do, spec)
            for op in batch:
                self.created[(op.origin, op.seq)] = self.world.now
            client.send_batch(batch)
        except _NotYet as exc:
            self._defer(str(exc))
        except NoteBridgeError as exc:
            raise InvalidScenario(f"action {spec!r} failed: {exc}") from exc

    def _edit_batch(self, do: str, spec: dict) -> list:
        rep = self.client.replica
        if do == "insert_block":
            after = spec.get("after")
            if after is None:
                live = rep.live_blocks()
                anchor = engine.eid_str(live[-1]) if live else None
            else:
                anchor = self._block(after)
            return rep.local_insert_block(anchor)
        if do == "delete_block":
            return rep.local_delete_block(self._block(spec["block"]))
        if do == "type":
            return rep.local_insert_text(self._block(spec["block"]),
                                         int(spec["pos"]), spec["text"])
        if do == "delete":
            return rep.local_delete_range(self._block(spec["block"]),
                                          int(spec["pos"]), int(spec["len"]))
        if do == "set_title":
            return rep.local_set_title(spec["text"])
        if do == "set_kind":
            return rep.local_set_block_kind(self._block(spec["block"]),
                                            BlockKind(spec["kind"]))
        if do == "mark":
            return rep.local_set_mark(self._block(spec["block"]),
                                      int(spec["start"]), int(spec["end"]),
                                      Mark(spec["mark"]),
                                      bool(spec.get("on", True)))
        if do == "annotate":
            return rep.local_annotate(self._block(spec["block"]),
                                      spec["emoji"], self.client.name,
                                      now_ms=self.world.now)
        if do == "resolve":
            anns = sorted(self.client.replica.document().annotations,
                          key=lambda a: (a.created_at, a.ann_id))
            idx = int(self.spec["ann"])
            if idx >= len(anns):
                raise _NotYet(f"annotation {idx} not seen yet")
            return rep.local_resolve(anns[idx].ann_id)
        raise InvalidScenario(f"unknown action {do!r}")

    def _block(self, index) -> str:
        live = self.client.replica.live_blocks()
        if index is None or int(index) >= len(live):
            raise _NotYet(f"block {index} not seen yet")
        return engine.eid_str(live[int(index)])

    def _defer(self, why: str) -> None:
        self.deferrals += 1
        if self.deferrals > _MAX_DEFERRALS:
            raise InvalidScenario(
                f"action {self.spec!r} never became runnable ({why})")
        self.world.at(self.world.now + 25, self)


class _NotYet(Exception):
    pass


# -- fuzzing ------------------------------------------------------------------

_NT_CODES = [e.code for e in emoji_catalog()
             if e.category is EmojiCategory.NOTE_TAKING]
_CC_CODES = [e.code for e in emoji_catalog()
             if e.category is EmojiCategory.CHIT_CHAT]
_WORDS = "abcdefghijklmnopqrstuvwxyz"


def _random_edit(rng: random.Random, rep: Replica, author: str, now: int,
                 single_op: bool = False) -> Optional[list]:
    """One random well-formed local edit against the replica's current
    state. Returns the op batch (possibly several ops for a text run)."""
    live = rep.live_blocks()
    if not live:
        return rep.local_insert_block(None)
    roll = rng.random()
    block = engine.eid_str(rng.choice(live))
    vis_len = len(rep.block_text(block))
    if roll < 0.45:
        text = rng.choice(_WORDS) if single_op else "".join(
            rng.choice(_WORDS) for _ in range(rng.randint(1, 3)))
        return rep.local_insert_text(block, rng.randint(0, vis_len), text)
    if roll < 0.60:
        if vis_len == 0:
            return rep.local_insert_text(block, 0, rng.choice(_WORDS))
        pos = rng.randrange(vis_len)
        length = 1 if single_op else min(vis_len - pos, rng.randint(1, 3))
        return rep.local_delete_range(block, pos, length)
    if roll < 0.70:
        return rep.local_insert_block(block if rng.random() < 0.8 else None)
    if roll < 0.74:
        if len(live) > 1:
            return rep.local_delete_block(block)
        return rep.local_insert_block(block)
    if roll < 0.80:
        return rep.local_set_block_kind(block, rng.choice(list(BlockKind)))
    if roll < 0.84:
        if vis_len == 0:
            return rep.local_insert_text(block, 0, rng.choice(_WORDS))
        start = rng.randrange(vis_len)
        end = rng.randint(start + 1, vis_len)
        return rep.local_set_mark(block, start, end, rng.choice(list(Mark)),
                                  rng.random() < 0.8)
    if roll < 0.87:
        return rep.local_set_title(f"title-{rng.randint(0, 999)}")
    if roll < 0.95:
        return rep.local_annotate(block, rng.choice(_NT_CODES), author,
                                  now_ms=now)
    anns = [a for a in rep.document().annotations if not a.resolved]
    if anns:
        return rep.local_resolve(rng.choice(anns).ann_id)
    return rep.local_annotate(block, rng.choice(_NT_CODES), author, now_ms=now)


def run_fuzz(n_clients: int, ops_per_client: int, net: NetConfig,
             data_dir: Optional[Path] = None,
             snapshot_every: int = 100) -> ScenarioReport:
    """Random well-formed concurrent traffic; the convergence property is
    the oracle. Reproducible from the NetConfig seed."""
    if n_clients < 1:
        raise InvalidScenario("need at least one client")
    roles = [(f"c{i}", Role.PNT if i % 2 else Role.SWD)
             for i in range(n_clients)]
    fx = _build_fixture(roles, "fuzz", data_dir, snapshot_every)
    world = _World(fx.hub, net)
    action_rng = random.Random(net.seed ^ 0x5EED)
    clients = [
        _SimClient(world, name, fx.tokens[name], fx.doc_id)
        for name, _role in roles
    ]
    created: dict[tuple[int, int], int] = {}

    horizon = max(1000, ops_per_client * 30)
    for i, client in enumerate(clients):
        world.at(i, client.connect)
        times = sorted(action_rng.randint(100, horizon)
                       for _ in range(ops_per_client))
        for t in times:
            world.at(t, _FuzzAction(world, client, action_rng, created))

    for start, end, side in net.partitions:
        for name in side:
            if name in world.clients:
                world.at(end, world.clients[name].resync)

    world.run()
    return _finalize(world, fx, created)


class _FuzzAction:
    def __init__(self, world: _World, client: _SimClient, rng: random.Random,
                 created: dict):
        self.world = world
        self.client = client
        self.rng = rng
        self.created = created
        self.deferrals = 0

    def __call__(self) -> None:
        if self.client.replica is None:
            self.deferrals += 1
            if self.deferrals <= _MAX_DEFERRALS:
                self.world.at(self.world.now + 25, self)
            return
        batch = _random_edit(self.rng, self.client.replica, self.client.name,
                             self.world.now)
        if batch:
            for op in batch:
                self.created[(op.origin, op.seq)] = self.world.now
            self.client.send_batch(batch)
        if self.rng.random() < 0.1:
            live = self.client.replica.live_blocks()
            if live:
                self.client.send_cursor(engine.eid_str(live[0]),
                                        self.rng.randint(0, 3))


# -- crash-injection durability harness --------------------------------------


@dataclass
class OpStreamRecording:
    """A deterministic op workload: the global append order of a fault-free
    run, plus per-client streams for at-least-once replay."""

    log_order: list[tuple[str, dict]]  # (client name, op dict) in append order
    per_client: dict[str, list[dict]]
    final_hash: str
    total: int


def record_op_stream(n_clients: int, total_ops: int, seed: int) -> OpStreamRecording:
    """Generate a workload by running clients directly against a hub with
    a perfect network (no latency, no faults), recording every appended
    op in log order."""
    roles = [(f"c{i}", Role.PNT if i % 2 else Role.SWD) for i in range(n_clients)]
    fx = _build_fixture(roles, "durability", None, snapshot_every=100)
    rng = random.Random(seed)
    tokens = fx.tokens

    reps: dict[str, Replica] = {}
    cids: dict[str, str] = {}
    name_by_cid: dict[str, str] = {}
    for i, (name, _role) in enumerate(roles):
        cid = f"d{i}"
        fx_out = fx.hub.handle_frame(
            cid, {"t": "hello", "token": tokens[name], "doc": fx.doc_id,
                  "have_seq": 0}, 0)
        welcome = next(f for _c, f in fx_out.sends if f["t"] == "welcome")
        rep = Replica.decode_snapshot(b64decode(welcome["snapshot"]))
        rep.rebind(welcome["replica"])
        reps[name] = rep
        cids[name] = cid
        name_by_cid[cid] = name

    log_order: list[tuple[str, dict]] = []
    per_client: dict[str, list[dict]] = {name: [] for name, _ in roles}
    t = 0
    while len(log_order) < total_ops:
        t += 10
        name = roles[rng.randrange(n_clients)][0]
        batch = _random_edit(rng, reps[name], name, t, single_op=True)
        if not batch:
            continue
        for op in batch[: total_ops - len(log_order)]:
            d = engine.op_to_dict(op)
            per_client[name].append(d)
            log_order.append((name, d))
            fx_out = fx.hub.handle_frame(cids[name],
                                         {"t": "ops", "ops": [d]}, t)
            # perfect network: apply fan-out everywhere immediately
            for target_cid, frame in fx_out.sends:
                target = name_by_cid.get(target_cid)
                if frame["t"] == "ops" and target and target != name:
                    for od in frame["ops"]:
                        reps[target].integrate(engine.op_from_dict(od))

    final_hash = fx.hub.room(fx.doc_id).authority.state_hash().hex()
    return OpStreamRecording(log_order, per_client, final_hash,
                             len(log_order))


def run_with_crash(recording: OpStreamRecording, crash_after: int,
                   snapshot_every: int = 100,
                   data_dir: Optional[Path] = None) -> str:
    """Replay the recorded workload, crash the server right after the
    ``crash_after``-th durable append (fan-out of that op never happens),
    restart on the same data directory, then have clients re-send their
    streams (at-least-once, original relative order — what the resync
    rounds converge to). Returns the recovered authority's final hash."""
    names = sorted(recording.per_client)
    roles = [(name, Role.PNT) for name in names]
    if data_dir is None:
        data_dir = Path(tempfile.mkdtemp(prefix="notebridge-crash-"))
    fx = _build_fixture(roles, "durability", data_dir, snapshot_every)

    def open_sessions(hub: Hub, suffix: str) -> dict[str, str]:
        out = {}
        for i, name in enumerate(names):
            cid = f"x{suffix}{i}"
            hub.handle_frame(cid, {"t": "hello", "token": fx.tokens[name],
                                   "doc": fx.doc_id, "have_seq": 0}, 0)
            out[name] = cid
        return out

    cids = open_sessions(fx.hub, "a")
    appended = 0
    for name, op_dict in recording.log_order:
        if appended >= crash_after:
            break
        fx.hub.handle_frame(cids[name], {"t": "ops", "ops": [op_dict]}, appended)
        appended = fx.store.op_count(fx.doc_id)

    # crash: the hub and every session vanish; only the data directory
    # survives into the restarted server
    fx.store.close()
    store2 = Store(data_dir, fsync=False)
    hub2 = Hub(store2, snapshot_every=snapshot_every)
    cids2 = {}
    for i, name in enumerate(names):
        cid = f"xb{i}"
        hub2.handle_frame(cid, {"t": "hello", "token": fx.tokens[name],
                                "doc": fx.doc_id, "have_seq": 0}, 1)
        cids2[name] = cid
    for name, op_dict in recording.log_order:
        hub2.handle_frame(cids2[name], {"t": "ops", "ops": [op_dict]}, 2)

    return hub2.room(fx.doc_id).authority.state_hash().hex()
