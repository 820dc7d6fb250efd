"""Exception hierarchy.

Two families map onto CLI exit codes: :class:`InputFormatError` (exit 2) for
files that cannot be parsed, and :class:`ConstraintError` (exit 3) for
well-formed inputs that violate a precondition.
"""


class PairsError(Exception):
    exit_code = 1


class InputFormatError(PairsError):
    exit_code = 2


class ConstraintError(PairsError):
    exit_code = 3


class MissingFile(InputFormatError):
    pass


class MalformedLine(InputFormatError):
    def __init__(self, path, lineno, reason=""):
        self.path = str(path)
        self.lineno = lineno
        msg = f"{self.path}:{lineno}: malformed line"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class InconsistentCounts(InputFormatError):
    pass


class BadMagic(InputFormatError):
    pass


class InvalidSchema(InputFormatError):
    pass


class MismatchedIds(InputFormatError):
    pass


class DegeneratePair(ConstraintError):
    pass


class BadAspect(ConstraintError):
    pass


class EmptyTensor(ConstraintError):
    pass


class DimensionMismatch(ConstraintError):
    pass


class EmptySubset(ConstraintError):
    pass


class TooLarge(ConstraintError):
    pass


class DegenerateSplit(ConstraintError):
    pass
