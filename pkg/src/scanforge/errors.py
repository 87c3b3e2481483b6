"""Exception hierarchy shared by every scanforge module."""

from __future__ import annotations


class ScanforgeError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class LexicalError(ScanforgeError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ParseError(ScanforgeError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"offset {offset}: {message}")
        self.offset = offset


class ResolutionError(ScanforgeError):
    pass


class RegistryConflict(ScanforgeError):
    pass


class VendorConflict(ScanforgeError):
    pass


class SchemaError(ScanforgeError):
    pass


class ValidationError(SchemaError):
    pass


class ConfigurationError(ScanforgeError):
    pass
