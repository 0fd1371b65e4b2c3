"""Exception hierarchy shared by every module.

Domain and validation failures derive from :class:`GaitMatchError`; the CLI
maps any of them to exit code 1.
"""
from __future__ import annotations


class GaitMatchError(Exception):
    """Base class for all library errors."""


class StructuralError(GaitMatchError, ValueError):
    """Shapes, counts or names do not line up."""


class EmptyInputError(GaitMatchError, ValueError):
    """An operation received an empty collection it cannot reduce."""


class DomainError(GaitMatchError, ValueError):
    """A value lies outside the domain of the operation."""


class TopologyError(StructuralError):
    """The parent relation is not a single rooted tree."""

    def __init__(self, message: str, joint: str | None = None):
        super().__init__(message)
        self.joint = joint


class DegenerateBoneError(DomainError):
    """A bone has coincident endpoints."""

    def __init__(self, message: str, bone: str | None = None, frame: int | None = None):
        super().__init__(message)
        self.bone = bone
        self.frame = frame


class CollinearityError(DomainError):
    """A bone's reference joint lies on the bone axis."""

    def __init__(self, message: str, bone: str | None = None, frame: int | None = None):
        super().__init__(message)
        self.bone = bone
        self.frame = frame


class DegenerateInputError(DomainError):
    """Input is well formed but carries no usable signal (e.g. empty mask)."""


class ProtocolError(GaitMatchError, ValueError):
    """The evaluation protocol cannot be applied to the given embeddings."""


class FormatError(GaitMatchError, ValueError):
    """A file could not be parsed.

    Attributes:
        path: file being read, if known.
        line: 1-based line number (text formats).
        field: name of the offending field.
        offset: 0-based byte offset (binary formats).
    """

    def __init__(self, message: str, path=None, line: int | None = None, field: str | None = None,
                 offset: int | None = None):
        self.reason = message
        self.path = None if path is None else str(path)
        self.line = line
        self.field = field
        self.offset = offset
        loc = []
        if self.path is not None:
            loc.append(self.path)
        if line is not None:
            loc.append(f"line {line}")
        if offset is not None:
            loc.append(f"byte {offset}")
        if field is not None:
            loc.append(f"field {field!r}")
        super().__init__(f"{', '.join(loc)}: {message}" if loc else message)

    @property
    def location(self) -> dict:
        return {"path": self.path, "line": self.line, "offset": self.offset, "field": self.field}


class VersionError(FormatError):
    """Magic line names an unknown format or version."""


class NonFiniteError(FormatError):
    """A numeric field is NaN or infinite."""


class TreeViolationError(FormatError):
    """Serialized topology is not a tree."""

    def __init__(self, message: str, path=None, line=None, field=None, joint: str | None = None):
        super().__init__(message, path, line, field)
        self.joint = joint


class UnsupportedFormatError(FormatError):
    """A recognised but unsupported variant, e.g. ASCII PGM."""


class TruncatedError(FormatError):
    """Payload ends before the header says it should."""
