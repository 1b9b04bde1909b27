"""Prefix-activated key encoding over a partitioned bit store.

A key is never written anywhere. Instead, for every prefix of the key a
256-bit address is derived from hash(username, password, prefix); the
address both routes to the nearest partition and, cut into fixed-width
hex segments, names the bit positions to activate there. Retrieval walks
the key alphabet character by character, keeping exactly the extensions
whose bits are all lit, until full-length survivors remain.

The three fields entering the hash are length-framed (8-byte big-endian
length before each field's UTF-8 bytes) so that distinct credential/prefix
splits can never produce the same digest input.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from .config import HASH_HEX_LEN, SystemConfig, alphabet_for
from .errors import (
    DegenerateWildcard,
    Erased,
    InvalidCredential,
    InvalidPrefix,
    InvalidSegmentation,
    PartitionUnavailable,
    Unavailable,
)
from .store import PartitionStore

# A retrieval in which no real bitmap was ever consulted expands by the full
# alphabet at every depth; refuse instead of materialising that tree.
_WILDCARD_FRONTIER_GUARD = 1 << 16


@dataclass(frozen=True)
class Credential:
    """The (username, password) pair a key is filed under.

    Only hash digests derived from it ever reach the store; the pair itself
    is never persisted.
    """

    username: str
    password: str

    def __post_init__(self) -> None:
        if not self.username:
            raise InvalidCredential("username must not be empty")
        if not self.password:
            raise InvalidCredential("password must not be empty")


@dataclass(frozen=True)
class BitPositionSet:
    """Routing address plus the bit positions one prefix activates."""

    file_address: str
    positions: tuple[int, ...]


@dataclass(frozen=True)
class InsertReceipt:
    new_bits: int
    files_touched: int
    prefixes_written: int


@dataclass(frozen=True)
class RetrievalResult:
    candidates: frozenset[str]
    files_touched: int
    lookups: int


@dataclass(frozen=True)
class TraceEntry:
    """One bit check of a retrieval: which prefix hit which file, and how
    it went (``hit``, ``miss``, ``wildcard`` or ``blocked``)."""

    prefix: str
    file_id: int
    positions: tuple[int, ...]
    outcome: str


def _frame(*fields: str) -> bytes:
    out = bytearray()
    for f in fields:
        data = f.encode("utf-8")
        out += struct.pack(">Q", len(data)) + data
    return bytes(out)


def validate_key(key: str, cfg: SystemConfig) -> None:
    if len(key) != cfg.key_len:
        raise InvalidPrefix(
            f"key length {len(key)} does not match configured length {cfg.key_len}"
        )
    _validate_prefix(key, cfg.radix)


def _validate_prefix(prefix: str, radix: int) -> None:
    if not prefix:
        raise InvalidPrefix("prefix must not be empty")
    alphabet = alphabet_for(radix)
    for ch in prefix:
        if ch not in alphabet:
            raise InvalidPrefix(f"character {ch!r} is not a radix-{radix} digit")


def derive_prefix_address(cred: Credential, prefix: str, radix: int = 16) -> str:
    """SHA-256 of the length-framed (username, password, prefix) triple,
    as 64 lowercase hex characters. Pure and deterministic."""
    _validate_prefix(prefix, radix)
    return hashlib.sha256(_frame(cred.username, cred.password, prefix)).hexdigest()


def address_int(address: str) -> int:
    """Unsigned big-endian integer view of a 64-hex-character address."""
    return int(address, 16)


def segment_positions(
    address: str, bits_per_file: int, segment_width: int
) -> BitPositionSet:
    """Cut the 64 hash characters into consecutive ``segment_width``-wide
    segments; each segment, read as a big-endian hex integer modulo
    ``bits_per_file``, is one bit position. Duplicates are kept; callers
    apply set semantics on write."""
    if segment_width < 1 or HASH_HEX_LEN % segment_width != 0:
        raise InvalidSegmentation(
            f"segment_width must divide {HASH_HEX_LEN}, got {segment_width}"
        )
    if len(address) != HASH_HEX_LEN:
        raise InvalidPrefix(f"address must be {HASH_HEX_LEN} hex characters")
    positions = tuple(
        int(address[i : i + segment_width], 16) % bits_per_file
        for i in range(0, HASH_HEX_LEN, segment_width)
    )
    return BitPositionSet(address, positions)


def insert_key(
    cred: Credential,
    key: str,
    store: PartitionStore,
    cfg: SystemConfig,
    actor: str = "local",
) -> InsertReceipt:
    """Activate the bit positions of every prefix of ``key`` in the file
    nearest to that prefix's address.

    Idempotent: re-inserting the same (credential, key) flips nothing and
    reports zero new bits. If a target partition is faulted the insert
    aborts with ``PartitionUnavailable``; bits already written stay set,
    which is harmless because activation is monotone.
    """
    validate_key(key, cfg)
    new_bits = 0
    touched: set[int] = set()
    for depth in range(1, cfg.key_len + 1):
        address = derive_prefix_address(cred, key[:depth], cfg.radix)
        mapped = segment_positions(address, store.bits_per_file, cfg.segment_width)
        try:
            handle = store.nearest_file(address)
            _version, newly_set = store.write_bits(
                handle, set(mapped.positions), actor=actor
            )
        except (Erased, Unavailable) as exc:
            raise PartitionUnavailable(
                f"insert aborted at prefix depth {depth}: {exc}"
            ) from exc
        new_bits += newly_set
        touched.add(handle.file_id)
    return InsertReceipt(new_bits, len(touched), cfg.key_len)


def _check_extension(
    cred: Credential,
    prefix: str,
    store: PartitionStore,
    cfg: SystemConfig,
    wildcard_on_missing: bool,
    touched: set[int],
    trace: list[TraceEntry] | None,
) -> tuple[bool, bool]:
    """Check one candidate prefix. Returns (survives, was_real_check)."""
    address = derive_prefix_address(cred, prefix, cfg.radix)
    mapped = segment_positions(address, store.bits_per_file, cfg.segment_width)
    try:
        handle = store.nearest_file(address)
    except (Erased, Unavailable) as exc:
        touched.add(exc.file_id)
        if wildcard_on_missing:
            if trace is not None:
                trace.append(TraceEntry(prefix, exc.file_id, mapped.positions, "wildcard"))
            return True, False
        if trace is not None:
            trace.append(TraceEntry(prefix, exc.file_id, mapped.positions, "blocked"))
        return False, False
    touched.add(handle.file_id)
    hit = store.check_bits(handle, mapped.positions)
    if trace is not None:
        trace.append(
            TraceEntry(prefix, handle.file_id, mapped.positions, "hit" if hit else "miss")
        )
    return hit, True


def _search(
    cred: Credential,
    store: PartitionStore,
    cfg: SystemConfig,
    wildcard_on_missing: bool,
    trace: list[TraceEntry] | None,
) -> RetrievalResult:
    if wildcard_on_missing and store.reachable_count() == 0:
        raise DegenerateWildcard(
            "no reachable partitions: every check would wildcard, making all "
            f"{cfg.radix}^{cfg.key_len} keys candidates"
        )
    touched: set[int] = set()
    lookups = 0
    real_checks = 0
    frontier = [""]
    for _depth in range(cfg.key_len):
        if real_checks == 0 and len(frontier) * cfg.radix > _WILDCARD_FRONTIER_GUARD:
            raise DegenerateWildcard(
                "every check so far wildcarded; refusing to expand the full key space"
            )
        survivors: list[str] = []
        for prefix in frontier:
            for ch in cfg.alphabet:
                survives, real = _check_extension(
                    cred, prefix + ch, store, cfg, wildcard_on_missing, touched, trace
                )
                lookups += 1
                real_checks += real
                if survives:
                    survivors.append(prefix + ch)
        frontier = survivors
        if not frontier:
            break
    return RetrievalResult(frozenset(frontier), len(touched), lookups)


def retrieve_key(
    cred: Credential,
    store: PartitionStore,
    cfg: SystemConfig,
    wildcard_on_missing: bool = False,
) -> RetrievalResult:
    """Reconstruct every key of the configured length stored under ``cred``.

    Breadth-first over prefix depth: each surviving prefix is extended by
    every alphabet character, and an extension survives iff all of its bit
    positions are lit in the nearest file. Keys actually inserted (with
    their files intact) always survive; extra candidates are the false
    positives inherent to the encoding.

    With ``wildcard_on_missing`` set, a check that routes to an erased or
    unavailable partition survives unconditionally, trading extra
    candidates for guaranteed recall under partial data loss.
    """
    return _search(cred, store, cfg, wildcard_on_missing, trace=None)


def lookup_trace(
    cred: Credential,
    store: PartitionStore,
    cfg: SystemConfig,
    wildcard_on_missing: bool = False,
) -> tuple[RetrievalResult, list[TraceEntry]]:
    """Run a retrieval and return its full ordered access log alongside the
    result; unique file ids in the log equal ``result.files_touched``."""
    trace: list[TraceEntry] = []
    result = _search(cred, store, cfg, wildcard_on_missing, trace=trace)
    return result, trace


def check_key(
    cred: Credential,
    key: str,
    store: PartitionStore,
    cfg: SystemConfig,
    wildcard_on_missing: bool = False,
) -> bool:
    """Membership probe for one specific key: walk only that key's prefix
    path and report whether every check passes.

    Equivalent to ``key in retrieve_key(...).candidates`` but linear in the
    key length, so it stays cheap when wildcarding would make the full
    search tree explode.
    """
    validate_key(key, cfg)
    touched: set[int] = set()
    for depth in range(1, cfg.key_len + 1):
        survives, _real = _check_extension(
            cred, key[:depth], store, cfg, wildcard_on_missing, touched, trace=None
        )
        if not survives:
            return False
    return True
