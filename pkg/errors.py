"""Exception hierarchy shared by every module of the tool."""


class ThreatLoopError(Exception):
    """Base class for all errors raised by this package."""


class InputSyntaxError(ThreatLoopError):
    """
    Raised when an input stream is not well-formed JSON/CSV/UTF-8.

    Exactly one of `offset` (byte offset, for whole-document formats) or
    `line` (1-based, for record-per-line formats) is normally set.
    """
    def __init__(self, message: str, offset: int | None = None, line: int | None = None):
        self.offset = offset
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class SchemaError(ThreatLoopError):
    """Raised when a well-formed document does not match the expected schema."""
    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if path:
            where.append(path)
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class InvalidModel(ThreatLoopError):
    """Raised when an operation needs a model without validation errors."""
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        summary = "; ".join(f"{d.rule} {d.subject_id}" for d in self.diagnostics[:5])
        more = "" if len(self.diagnostics) <= 5 else f" (+{len(self.diagnostics) - 5} more)"
        super().__init__(f"threat model has {len(self.diagnostics)} validation error(s): {summary}{more}")


class CatalogError(ThreatLoopError):
    def __init__(self, message: str, offending_id: str = ""):
        self.offending_id = offending_id
        super().__init__(f"{offending_id}: {message}" if offending_id else message)


class UnknownTag(ThreatLoopError):
    """Raised when a tag resolves in neither the SWC nor the SCSVS catalog."""
    def __init__(self, tag: str, nearest: list[str]):
        self.tag = tag
        self.nearest = list(nearest)
        hint = f"; nearest: {', '.join(self.nearest)}" if self.nearest else ""
        super().__init__(f"unknown taxonomy tag {tag!r}{hint}")


class EmptyInput(ThreatLoopError):
    """Raised when an operation that needs at least one finding gets none."""


class InvalidTransition(ThreatLoopError):
    """Raised on a threat status change other than Predicted→Confirmed/Retired."""


class ConfigError(ThreatLoopError):
    """Raised for bad parameters: simulator config, settings, anchors, weights, options."""
