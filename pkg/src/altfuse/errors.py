"""Exception taxonomy shared by all modules.

The CLI maps these onto stable exit codes: contract/schema problems are
usage errors (2), unreadable or malformed files are I/O errors (3), and
non-finite numerics abort with 4.
"""


class ContractViolation(ValueError):
    """An operation was called outside its documented precondition."""


class FormatError(ValueError):
    """A file on disk could not be parsed (bad bytes, truncation, bad JSON)."""


class SchemaError(ValueError):
    """A file parsed but its contents violate the declared schema."""


class NumericError(RuntimeError):
    """A non-finite value appeared where the numeric contract forbids it."""
