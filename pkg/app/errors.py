"""
Exception hierarchy for the archive library.

Every error carries a short machine-readable ``code`` so the CLI can print a
single parseable line and pick an exit status.
"""


class HpfError(Exception):
    code = "hpf-error"


class InvalidDepthError(HpfError, ValueError):
    code = "invalid-depth"


class InvalidConfigError(HpfError, ValueError):
    code = "invalid-config"


class NotSortedError(HpfError, ValueError):
    code = "not-sorted"


class DuplicateKeyError(HpfError, ValueError):
    code = "duplicate-key"


class DuplicateNameError(DuplicateKeyError):
    code = "duplicate-name"


class InvalidSplitError(HpfError):
    code = "invalid-split"


class FormatError(HpfError):
    """Corrupt or truncated on-disk bytes."""

    code = "format-error"

    def __init__(self, message, offset=None, obj=None):
        self.offset = offset
        self.obj = obj
        where = []
        if obj is not None:
            where.append(obj)
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class NotFoundError(HpfError, KeyError):
    code = "not-found"

    def __str__(self):
        # KeyError quotes its argument; keep the message readable.
        return str(self.args[0]) if self.args else ""


class RangeError(HpfError, IndexError):
    code = "range-error"


class ConflictError(HpfError):
    code = "conflict"


class InjectedFailure(HpfError, OSError):
    code = "injected-failure"


class NotAnArchiveError(HpfError):
    code = "not-an-archive"


class ArchiveExistsError(HpfError):
    code = "archive-exists"


class ArchiveDirtyError(HpfError):
    code = "archive-dirty"


class IntegrityError(HpfError):
    code = "integrity-error"

    def __init__(self, message, obj=None, offset=None):
        self.obj = obj
        self.offset = offset
        super().__init__(message)


class ContentSourceError(HpfError):
    code = "content-source-error"
