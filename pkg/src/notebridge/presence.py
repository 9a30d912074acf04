"""Ephemeral per-room state: cursors and chit-chat emoji events.

Nothing here touches document state or survives a restart. Chit-chat
events are visible for the half-open window [sent_at, sent_at + 5000 ms)
and expire on their own timestamps, never on delivery time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .docmodel import EmojiCategory, EmojiCode, parse_emoji_code
from .errors import NotAParticipant, WrongEmojiCategory

CHITCHAT_TTL_MS = 5000


@dataclass
class CursorState:
    user: str
    block_id: Optional[str]
    offset: Optional[int]
    updated_at: int


@dataclass(frozen=True)
class ChitChatEvent:
    event_id: str
    emoji: EmojiCode
    sender: str
    sent_at: int

    @property
    def ttl_ms(self) -> int:
        return CHITCHAT_TTL_MS

    def visible_at(self, now: int) -> bool:
        return self.sent_at <= now < self.sent_at + CHITCHAT_TTL_MS


@dataclass
class PresenceSnapshot:
    participants: list[str]
    cursors: list[CursorState] = field(default_factory=list)


class RoomPresence:
    """Volatile presence for one open document room."""

    def __init__(self):
        self._participants: set[str] = set()
        self._cursors: dict[str, CursorState] = {}
        self._events: list[ChitChatEvent] = []
        self._next_event = 0

    def add_participant(self, user: str) -> PresenceSnapshot:
        self._participants.add(user)
        return self.snapshot()

    def snapshot(self) -> PresenceSnapshot:
        cursors = sorted(self._cursors.values(), key=lambda c: c.user)
        return PresenceSnapshot(sorted(self._participants), cursors)

    def update_cursor(self, user: str, block_id: Optional[str],
                      offset: Optional[int], now: int) -> PresenceSnapshot:
        """Replace the user's cursor (latest wins; at most one per user)."""
        if user not in self._participants:
            raise NotAParticipant(f"{user!r} is not in this room")
        if block_id is None:
            self._cursors.pop(user, None)
        else:
            self._cursors[user] = CursorState(user, block_id, offset, now)
        return self.snapshot()

    def emit_chitchat(self, user: str, emoji: Union[EmojiCode, str],
                      now: int) -> ChitChatEvent:
        if isinstance(emoji, str):
            emoji = parse_emoji_code(emoji)
        if emoji.category is not EmojiCategory.CHIT_CHAT:
            raise WrongEmojiCategory(
                f"{emoji.code} is a note-taking emoji, not chit-chat")
        if user not in self._participants:
            raise NotAParticipant(f"{user!r} is not in this room")
        event = ChitChatEvent(f"{user}:{self._next_event}", emoji, user, now)
        self._next_event += 1
        self._events.append(event)
        return event

    def active_events(self, now: int) -> list[ChitChatEvent]:
        """Events still inside their 5-second window, oldest first.
        Expired events are purged as a side effect."""
        self._events = [e for e in self._events
                        if now < e.sent_at + CHITCHAT_TTL_MS]
        live = [e for e in self._events if e.visible_at(now)]
        live.sort(key=lambda e: (e.sent_at, e.event_id))
        return live

    def drop_user(self, user: str) -> PresenceSnapshot:
        """Remove a participant and their cursor. Their chit-chat events
        keep expiring on their own clock."""
        self._participants.discard(user)
        self._cursors.pop(user, None)
        return self.snapshot()
