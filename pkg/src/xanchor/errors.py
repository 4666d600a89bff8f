"""Exception types shared across the toolkit."""

from __future__ import annotations


class XanchorError(Exception):
    """Base class for all toolkit errors."""


class FormatError(XanchorError):
    """A file does not conform to its declared layout (bad magic, arity, header)."""


class TruncationError(XanchorError):
    """A binary stream ends inside a record.

    Attributes:
        record_ordinal: 1-based ordinal of the incomplete record.
        n_records: declared record count.
        byte_offset: file offset where the stream ended.
    """

    def __init__(self, record_ordinal: int, n_records: int, byte_offset: int):
        self.record_ordinal = record_ordinal
        self.n_records = n_records
        self.byte_offset = byte_offset
        super().__init__(
            f"stream truncated in record {record_ordinal} of {n_records} "
            f"(ends at byte {byte_offset})"
        )


class DataError(XanchorError):
    """Well-formed container holding unusable values (NaN, duplicate keys, bad ids)."""


class IneligibleError(XanchorError):
    """An input fails a hard eligibility gate (e.g. too few tokens to cluster)."""


class AmbiguityError(XanchorError):
    """A fit problem is degenerate and has no preferred solution."""


class TrainingDivergedError(XanchorError):
    """Adversarial training produced non-finite values."""

    def __init__(self, epoch: int, detail: str = ""):
        self.epoch = epoch
        msg = f"training diverged at epoch {epoch}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class RefinementError(XanchorError):
    """Iterative refinement could not induce any training pairs."""


class EvalError(XanchorError):
    """Evaluation was asked to run on an empty or unusable query set."""


class SpecError(XanchorError):
    """A synthetic benchmark parameter set is infeasible."""


class ConfigError(XanchorError):
    """A pipeline or CLI configuration is invalid before any computation starts."""
