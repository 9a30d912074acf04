"""Exception hierarchy shared across the package.

Every error carries a stable machine-readable ``code`` so callers (CLI,
wire layer) can emit one greppable token before the human message.
"""

from __future__ import annotations


class NoteBridgeError(Exception):
    code = "error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


# document model
class UnknownEmoji(NoteBridgeError):
    code = "unknown_emoji"


class WrongEmojiCategory(NoteBridgeError):
    code = "wrong_emoji_category"


# replication engine
class NoSuchBlock(NoteBridgeError):
    code = "no_such_block"


class PositionOutOfRange(NoteBridgeError):
    code = "position_out_of_range"


class NoSuchAnnotation(NoteBridgeError):
    code = "no_such_annotation"


class CorruptSnapshot(NoteBridgeError):
    code = "corrupt_snapshot"


# presence
class NotAParticipant(NoteBridgeError):
    code = "not_a_participant"


# sync server
class AuthFailed(NoteBridgeError):
    code = "auth_failed"


class MalformedOp(NoteBridgeError):
    code = "malformed_op"


class OriginMismatch(NoteBridgeError):
    code = "origin_mismatch"


class MalformedFrame(NoteBridgeError):
    code = "malformed_frame"


# storage
class NoSuchDocument(NoteBridgeError):
    code = "no_such_document"


class NoSuchClass(NoteBridgeError):
    code = "no_such_class"


class NoSuchUser(NoteBridgeError):
    code = "no_such_user"


class NotEnrolled(NoteBridgeError):
    code = "not_enrolled"


class EmptyTitle(NoteBridgeError):
    code = "empty_title"


class MalformedEvent(NoteBridgeError):
    code = "malformed_event"


class IoFailure(NoteBridgeError):
    code = "io_failure"


# analytics
class UnmappedUser(NoteBridgeError):
    code = "unmapped_user"


class EmptySample(NoteBridgeError):
    code = "empty_sample"


class NoNonzeroDifferences(NoteBridgeError):
    code = "no_nonzero_differences"


# simulation harness
class InvalidScenario(NoteBridgeError):
    code = "invalid_scenario"
