"""Block-document data model: blocks of styled text, emoji annotations,
the fixed emoji catalog, and plain-text export.

Everything here is a plain value type with no knowledge of replication;
the engine materializes these from its internal element state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import UnknownEmoji


class EmojiCategory(Enum):
    NOTE_TAKING = "nt"
    CHIT_CHAT = "cc"


@dataclass(frozen=True)
class EmojiCode:
    code: str
    label: str
    category: EmojiCategory


def _nt(code: str, label: str) -> EmojiCode:
    return EmojiCode("nt." + code, label, EmojiCategory.NOTE_TAKING)


def _cc(code: str, label: str) -> EmojiCode:
    return EmojiCode("cc." + code, label, EmojiCategory.CHIT_CHAT)


# Catalog order matters and is part of the contract: the nine note-taking
# entries first, then the nine chit-chat entries. Codes are stable wire
# identifiers; labels are display text and may be localized downstream.
_CATALOG: tuple[EmojiCode, ...] = (
    _nt("important", "Important"),
    _nt("detail_plz", "Detail PLZ"),
    _nt("is_sufficient", "Is Sufficient"),
    _nt("plz_as_the_slide", "PLZ As the Slide"),
    _nt("plz_add_the_photo", "PLZ Add the Photo"),
    _nt("plz_fix_it", "PLZ Fix It"),
    _nt("too_difficult", "Too Difficult"),
    _nt("did_i_write_correctly", "Did I Write Correctly?"),
    _nt("brb", "BRB"),
    _cc("thank_you", "Thank You"),
    _cc("great", "Great"),
    _cc("you_got_this", "You Got This"),
    _cc("funny", "Funny"),
    _cc("focus_here_plz", "Focus Here PLZ"),
    _cc("what_about_short_break", "What about Short Break"),
    _cc("dont_doze_off", "Don't Doze Off"),
    _cc("plz_help", "PLZ Help"),
    _cc("wanna_go_to_the_bathroom", "Wanna Go To the Bathroom"),
)

_BY_CODE = {e.code: e for e in _CATALOG}


def emoji_catalog() -> list[EmojiCode]:
    """All 18 emoji codes, note-taking entries first, in catalog order."""
    return list(_CATALOG)


def parse_emoji_code(code: str) -> EmojiCode:
    """Look up a catalog entry by its stable code string.

    Raises UnknownEmoji for anything not in the catalog.
    """
    try:
        return _BY_CODE[code]
    except KeyError:
        raise UnknownEmoji(f"unknown emoji code {code!r}") from None


class BlockKind(Enum):
    PARAGRAPH = "p"
    HEADING1 = "h1"
    HEADING2 = "h2"
    HEADING3 = "h3"
    BULLET_ITEM = "bullet"
    NUMBERED_ITEM = "numbered"


class Mark(Enum):
    BOLD = "bold"
    ITALIC = "italic"
    UNDERLINE = "underline"


@dataclass
class MarkRange:
    """A styled span over visible character positions, end exclusive."""

    start: int
    end: int
    mark: Mark


@dataclass
class Block:
    block_id: str
    kind: BlockKind
    text: str
    marks: list[MarkRange] = field(default_factory=list)


@dataclass
class Annotation:
    ann_id: str
    emoji: EmojiCode
    block_id: str
    author: str
    created_at: int
    resolved: bool = False
    orphaned: bool = False


@dataclass
class NoteDocument:
    """Materialized view of a document: live blocks in order plus all
    annotations (resolved and orphaned ones are retained)."""

    doc_id: str
    title: str
    blocks: list[Block] = field(default_factory=list)
    annotations: list[Annotation] = field(default_factory=list)

    def highlighted_block_ids(self) -> set[str]:
        """Blocks carrying at least one unresolved, non-orphaned annotation
        (the ones a client renders with the gray background)."""
        return {
            a.block_id
            for a in self.annotations
            if not a.resolved and not a.orphaned
        }


def export_txt(doc: NoteDocument) -> bytes:
    """Render a document as plain UTF-8 text.

    First line is the title, then one line per live block in document
    order. Bullet items are prefixed "- "; numbered items are prefixed
    "<n>. " with numbering restarting for each consecutive run. Marks,
    annotations, and emojis do not survive into plain text.
    """
    lines = [doc.title]
    run = 0
    for block in doc.blocks:
        if block.kind is BlockKind.NUMBERED_ITEM:
            run += 1
            lines.append(f"{run}. {block.text}")
        else:
            run = 0
            if block.kind is BlockKind.BULLET_ITEM:
                lines.append("- " + block.text)
            else:
                lines.append(block.text)
    return ("\n".join(lines) + "\n").encode("utf-8")
