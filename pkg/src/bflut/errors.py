"""Exception types shared by every layer of the package."""

from __future__ import annotations


class BflutError(Exception):
    """Base class for all package errors."""


class InvalidCredential(BflutError):
    """Username or password is empty."""


class InvalidPrefix(BflutError):
    """Key or prefix contains characters outside the configured alphabet,
    is empty, or exceeds the configured key length."""


class InvalidSegmentation(BflutError):
    """Segment width does not divide the hash length."""


class InvalidParams(BflutError):
    """Closed-form parameters outside their domain (e.g. more bits per key
    than the system holds)."""


class ConfigError(BflutError):
    """Experiment or store configuration is malformed."""


class StoreError(BflutError):
    """Base class for partition-store failures."""


class Erased(StoreError):
    """The routed partition was permanently erased."""

    def __init__(self, file_id: int):
        super().__init__(f"partition {file_id} is erased")
        self.file_id = file_id


class Unavailable(StoreError):
    """The routed partition is temporarily unreachable."""

    def __init__(self, file_id: int):
        super().__init__(f"partition {file_id} is unavailable")
        self.file_id = file_id


class PartitionUnavailable(StoreError):
    """An insert could not reach its target partition and was aborted.

    Bits written for earlier prefixes stay set; activation is monotone, so
    a partial insert is harmless and can be retried.
    """


class RateLimited(StoreError):
    """The actor exhausted its write quota for the current window."""


class MergeMismatch(StoreError):
    """Attempted to merge replicas of two different partitions."""


class StaleRegistry(StoreError):
    """A direct-routing snapshot no longer matches the live registry for
    the routed target."""


class DegenerateWildcard(BflutError):
    """Every bit check of a retrieval would be satisfied by wildcarding
    (e.g. all partitions erased); the full key space is the answer, so the
    search refuses to enumerate it."""


class OracleInfeasible(BflutError):
    """The key space is too large for exhaustive enumeration."""


class FalseNegativeError(BflutError):
    """A key known to be inserted was missing from its retrieval result.

    This is a hard invariant violation: with all partitions intact the
    search can only over-approximate, never drop, stored keys.
    """
