"""Durable system of record.

On-disk layout under one data directory:

    users.json, classes.json, docs.json   -- catalog (atomic rewrite)
    usage.jsonl                           -- append-only usage events
    docs/<doc_id>/ops.jsonl               -- append-only op log, seq-prefixed lines
    docs/<doc_id>/snap-<seq>.bin          -- engine snapshots
    docs/<doc_id>/replicas.json           -- replica id assignments

Everything is UTF-8 JSON; ``.jsonl`` files are LF-terminated, one record
per line. Appends are flushed (and fsynced unless disabled) before the
call returns, which is what lets the server promise durability before
fan-out.
"""

from __future__ import annotations

import hashlib
import json
import os
import secrets
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from .errors import (
    EmptyTitle,
    IoFailure,
    MalformedEvent,
    NoSuchClass,
    NoSuchDocument,
    NoSuchUser,
    NotEnrolled,
)
from .docmodel import EmojiCategory, parse_emoji_code
from .errors import AuthFailed


class Role(Enum):
    SWD = "swd"
    PNT = "pnt"


@dataclass
class UserAccount:
    user_id: str
    display_name: str
    role: Role
    token_salt: str
    token_hash: str

    def verify(self, token: str) -> bool:
        return _hash_token(self.token_salt, token) == self.token_hash


@dataclass
class ClassFolder:
    class_id: str
    name: str
    members: set[str] = field(default_factory=set)


@dataclass
class DocumentMeta:
    doc_id: str
    class_id: str
    title: str
    created_at: int
    created_by: str
    deleted: bool = False


class UsageKind(Enum):
    NOTE_CREATED = "note_created"
    NT_EMOJI_INSERTED = "nt_emoji_inserted"
    NT_EMOJI_RESOLVED = "nt_emoji_resolved"
    CC_EMOJI_SENT = "cc_emoji_sent"


_EMOJI_KINDS = {UsageKind.NT_EMOJI_INSERTED, UsageKind.NT_EMOJI_RESOLVED,
                UsageKind.CC_EMOJI_SENT}


@dataclass(frozen=True)
class UsageEvent:
    ts: int
    class_id: str
    doc_id: str
    user_id: str
    kind: UsageKind
    emoji_code: Optional[str] = None

    def validate(self) -> None:
        if self.kind in _EMOJI_KINDS:
            if not self.emoji_code:
                raise MalformedEvent(f"{self.kind.value} requires an emoji code")
            category = parse_emoji_code(self.emoji_code).category
            if self.kind is UsageKind.CC_EMOJI_SENT:
                if category is not EmojiCategory.CHIT_CHAT:
                    raise MalformedEvent(
                        f"{self.emoji_code} is not a chit-chat emoji")
            elif category is not EmojiCategory.NOTE_TAKING:
                raise MalformedEvent(
                    f"{self.emoji_code} is not a note-taking emoji")
        elif self.emoji_code:
            raise MalformedEvent(f"{self.kind.value} must not carry an emoji code")

    def to_dict(self) -> dict:
        d = {"ts": self.ts, "class": self.class_id, "doc": self.doc_id,
             "user": self.user_id, "kind": self.kind.value}
        if self.emoji_code:
            d["emoji"] = self.emoji_code
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "UsageEvent":
        return cls(d["ts"], d["class"], d["doc"], d["user"],
                   UsageKind(d["kind"]), d.get("emoji"))


def _hash_token(salt: str, token: str) -> str:
    return hashlib.sha256((salt + token).encode("utf-8")).hexdigest()


def _now_ms() -> int:
    return int(time.time() * 1000)


class Store:
    """File-backed store. Catalog mutation is serialized store-wide;
    per-document logs expect a single writer (the owning room)."""

    def __init__(self, root: Path | str, fsync: bool = True):
        self.root = Path(root)
        self.fsync = fsync
        self._lock = threading.Lock()
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "docs").mkdir(exist_ok=True)
        self._users = self._load_catalog("users.json")
        self._classes = self._load_catalog("classes.json")
        self._docs = self._load_catalog("docs.json")
        self._op_counts: dict[str, int] = {}
        self._op_files: dict[str, object] = {}

    def close(self) -> None:
        for f in self._op_files.values():
            f.close()
        self._op_files.clear()

    # -- catalog plumbing --

    def _load_catalog(self, name: str) -> dict:
        path = self.root / name
        if path.exists():
            return json.loads(path.read_text("utf-8"))
        return {"next": 1, "items": {}}

    def _save_catalog(self, name: str, data: dict) -> None:
        path = self.root / name
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(data, indent=1, sort_keys=True), "utf-8")
        if self.fsync:
            fd = os.open(tmp, os.O_RDONLY)
            try:
                os.fsync(fd)
            finally:
                os.close(fd)
        os.replace(tmp, path)

    # -- users / classes / documents --

    def create_user(self, name: str, role: Role) -> tuple[UserAccount, str]:
        """Create an account; the plaintext bearer token is returned
        exactly once and only its salted hash is stored."""
        with self._lock:
            user_id = f"u{self._users['next']:04d}"
            self._users["next"] += 1
            token = secrets.token_hex(16)
            salt = secrets.token_hex(8)
            self._users["items"][user_id] = {
                "name": name, "role": role.value, "salt": salt,
                "hash": _hash_token(salt, token),
            }
            self._save_catalog("users.json", self._users)
        return self.get_user(user_id), token

    def get_user(self, user_id: str) -> UserAccount:
        rec = self._users["items"].get(user_id)
        if rec is None:
            raise NoSuchUser(f"no user {user_id!r}")
        return UserAccount(user_id, rec["name"], Role(rec["role"]),
                           rec["salt"], rec["hash"])

    def authenticate(self, token: str) -> UserAccount:
        for user_id in self._users["items"]:
            account = self.get_user(user_id)
            if account.verify(token):
                return account
        raise AuthFailed("token does not match any account")

    def create_class(self, name: str) -> ClassFolder:
        with self._lock:
            class_id = f"c{self._classes['next']:04d}"
            self._classes["next"] += 1
            self._classes["items"][class_id] = {"name": name, "members": []}
            self._save_catalog("classes.json", self._classes)
        return self.get_class(class_id)

    def get_class(self, class_id: str) -> ClassFolder:
        rec = self._classes["items"].get(class_id)
        if rec is None:
            raise NoSuchClass(f"no class {class_id!r}")
        return ClassFolder(class_id, rec["name"], set(rec["members"]))

    def enroll(self, class_id: str, user_id: str) -> ClassFolder:
        with self._lock:
            rec = self._classes["items"].get(class_id)
            if rec is None:
                raise NoSuchClass(f"no class {class_id!r}")
            if user_id not in self._users["items"]:
                raise NoSuchUser(f"no user {user_id!r}")
            if user_id not in rec["members"]:
                rec["members"].append(user_id)
                rec["members"].sort()
                self._save_catalog("classes.json", self._classes)
        return self.get_class(class_id)

    def user_enrolled(self, user_id: str, class_id: str) -> bool:
        return user_id in self.get_class(class_id).members

    def create_document(self, class_id: str, title: str, user_id: str,
                        now_ms: Optional[int] = None) -> DocumentMeta:
        title = title.strip()
        if not title:
            raise EmptyTitle("document title is empty")
        if not self.user_enrolled(user_id, class_id):
            raise NotEnrolled(f"{user_id} is not enrolled in {class_id}")
        ts = _now_ms() if now_ms is None else now_ms
        with self._lock:
            doc_id = f"d{self._docs['next']:04d}"
            self._docs["next"] += 1
            self._docs["items"][doc_id] = {
                "class": class_id, "title": title, "created_at": ts,
                "created_by": user_id, "deleted": False,
            }
            self._save_catalog("docs.json", self._docs)
            self._doc_dir(doc_id).mkdir(parents=True, exist_ok=True)
            (self._doc_dir(doc_id) / "ops.jsonl").touch()
        self.append_usage(UsageEvent(ts, class_id, doc_id, user_id,
                                     UsageKind.NOTE_CREATED))
        return self.get_document(doc_id)

    def get_document(self, doc_id: str) -> DocumentMeta:
        rec = self._docs["items"].get(doc_id)
        if rec is None:
            raise NoSuchDocument(f"no document {doc_id!r}")
        return DocumentMeta(doc_id, rec["class"], rec["title"],
                            rec["created_at"], rec["created_by"], rec["deleted"])

    def delete_document(self, doc_id: str, user_id: str) -> DocumentMeta:
        """Soft delete: the meta is flagged and the op log is retained
        for audit replay."""
        meta = self.get_document(doc_id)
        if meta.deleted:
            raise NoSuchDocument(f"document {doc_id!r} already deleted")
        if not self.user_enrolled(user_id, meta.class_id):
            raise NotEnrolled(f"{user_id} is not enrolled in {meta.class_id}")
        with self._lock:
            self._docs["items"][doc_id]["deleted"] = True
            self._save_catalog("docs.json", self._docs)
        return self.get_document(doc_id)

    def list_classes(self, user_id: str) -> list[ClassFolder]:
        if user_id not in self._users["items"]:
            raise NoSuchUser(f"no user {user_id!r}")
        return [self.get_class(cid) for cid in sorted(self._classes["items"])
                if user_id in self._classes["items"][cid]["members"]]

    def list_documents(self, class_id: str) -> list[DocumentMeta]:
        if class_id not in self._classes["items"]:
            raise NoSuchClass(f"no class {class_id!r}")
        docs = [self.get_document(did) for did, rec in self._docs["items"].items()
                if rec["class"] == class_id and not rec["deleted"]]
        docs.sort(key=lambda m: (m.created_at, m.doc_id), reverse=True)
        return docs

    # -- per-document op log and snapshots --

    def _doc_dir(self, doc_id: str) -> Path:
        return self.root / "docs" / doc_id

    def _require_doc(self, doc_id: str) -> Path:
        if doc_id not in self._docs["items"]:
            raise NoSuchDocument(f"no document {doc_id!r}")
        return self._doc_dir(doc_id)

    def op_count(self, doc_id: str) -> int:
        if doc_id not in self._op_counts:
            path = self._require_doc(doc_id) / "ops.jsonl"
            count = 0
            if path.exists():
                with path.open("rb") as f:
                    for _ in f:
                        count += 1
            self._op_counts[doc_id] = count
        return self._op_counts[doc_id]

    def append_op(self, doc_id: str, op_bytes: bytes) -> int:
        """Durably append one encoded op; returns its server sequence
        number (1-based log position)."""
        seq = self.op_count(doc_id) + 1
        f = self._op_files.get(doc_id)
        if f is None:
            path = self._require_doc(doc_id) / "ops.jsonl"
            f = path.open("ab")
            self._op_files[doc_id] = f
        try:
            f.write(b'{"seq":%d,"op":' % seq + op_bytes + b"}\n")
            f.flush()
            if self.fsync:
                os.fsync(f.fileno())
        except OSError as exc:
            raise IoFailure(f"op append failed: {exc}") from exc
        self._op_counts[doc_id] = seq
        return seq

    def read_ops(self, doc_id: str, from_seq: int = 0) -> list[tuple[int, dict]]:
        """Ops with seq > from_seq, in log order, as (seq, op dict)."""
        path = self._require_doc(doc_id) / "ops.jsonl"
        out = []
        if path.exists():
            with path.open("r", encoding="utf-8") as f:
                for line in f:
                    rec = json.loads(line)
                    if rec["seq"] > from_seq:
                        out.append((rec["seq"], rec["op"]))
        return out

    def write_snapshot(self, doc_id: str, seq: int, data: bytes) -> None:
        path = self._require_doc(doc_id) / f"snap-{seq}.bin"
        tmp = path.with_suffix(".tmp")
        try:
            tmp.write_bytes(data)
            if self.fsync:
                fd = os.open(tmp, os.O_RDONLY)
                try:
                    os.fsync(fd)
                finally:
                    os.close(fd)
            os.replace(tmp, path)
        except OSError as exc:
            raise IoFailure(f"snapshot write failed: {exc}") from exc

    def read_latest_snapshot(self, doc_id: str) -> Optional[tuple[int, bytes]]:
        doc_dir = self._require_doc(doc_id)
        best = None
        for path in doc_dir.glob("snap-*.bin"):
            try:
                seq = int(path.stem.split("-", 1)[1])
            except ValueError:
                continue
            if best is None or seq > best:
                best = seq
        if best is None:
            return None
        return best, (doc_dir / f"snap-{best}.bin").read_bytes()

    def snapshot_seqs(self, doc_id: str) -> list[int]:
        doc_dir = self._require_doc(doc_id)
        seqs = []
        for path in doc_dir.glob("snap-*.bin"):
            try:
                seqs.append(int(path.stem.split("-", 1)[1]))
            except ValueError:
                continue
        return sorted(seqs)

    # -- replica assignment --

    def assign_replica(self, doc_id: str, user_id: str) -> int:
        doc_dir = self._require_doc(doc_id)
        path = doc_dir / "replicas.json"
        with self._lock:
            if path.exists():
                data = json.loads(path.read_text("utf-8"))
            else:
                data = {"next": 1, "owners": {}}
            replica = data["next"]
            data["next"] += 1
            data["owners"][str(replica)] = user_id
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(data, sort_keys=True), "utf-8")
            os.replace(tmp, path)
        return replica

    def replica_owner(self, doc_id: str, replica: int) -> Optional[str]:
        path = self._require_doc(doc_id) / "replicas.json"
        if not path.exists():
            return None
        data = json.loads(path.read_text("utf-8"))
        return data["owners"].get(str(replica))

    # -- usage log --

    def append_usage(self, event: UsageEvent) -> None:
        event.validate()
        line = json.dumps(event.to_dict(), separators=(",", ":"),
                          ensure_ascii=False) + "\n"
        path = self.root / "usage.jsonl"
        try:
            with path.open("a", encoding="utf-8") as f:
                f.write(line)
                f.flush()
                if self.fsync:
                    os.fsync(f.fileno())
        except OSError as exc:
            raise IoFailure(f"usage append failed: {exc}") from exc

    def read_usage(self, class_id: Optional[str] = None,
                   doc_id: Optional[str] = None,
                   user_id: Optional[str] = None,
                   since: Optional[int] = None,
                   until: Optional[int] = None) -> list[UsageEvent]:
        path = self.root / "usage.jsonl"
        events = []
        if path.exists():
            with path.open("r", encoding="utf-8") as f:
                for line in f:
                    ev = UsageEvent.from_dict(json.loads(line))
                    if class_id is not None and ev.class_id != class_id:
                        continue
                    if doc_id is not None and ev.doc_id != doc_id:
                        continue
                    if user_id is not None and ev.user_id != user_id:
                        continue
                    if since is not None and ev.ts < since:
                        continue
                    if until is not None and ev.ts >= until:
                        continue
                    events.append(ev)
        events.sort(key=lambda e: e.ts)
        return events

    def usage_count(self) -> int:
        path = self.root / "usage.jsonl"
        if not path.exists():
            return 0
        with path.open("rb") as f:
            return sum(1 for _ in f)
