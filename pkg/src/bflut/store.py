"""Partitioned bit store with content versioning and mutable names.

The store is an in-process stand-in for a distributed deployment: N files
of M bits each, owned by independent nodes. Three layers mirror the real
thing:

* a registry maps 256-bit hash addresses to mutable names and answers
  nearest-key queries (smallest absolute difference on the integer line,
  ties toward the smaller address);
* a mutable-name table resolves each name to the latest published
  (file id, version) pair, so readers always see the newest snapshot of a
  file whose content identifier changes on every write;
* the bit files themselves, each carrying a monotone version counter that
  increments exactly when a write flips at least one bit.

Fault injection marks files erased (permanent) or unavailable (transient).
Erased and unavailable files stay visible to nearest-key routing so that a
read which would have landed on them surfaces ``Erased``/``Unavailable``
instead of silently landing on a neighbour; callers decide whether to
wildcard or fail the branch. Registry snapshots handed to direct routing
exclude erased entries, which is what makes a pre-erasure snapshot stale.
"""

from __future__ import annotations

import hashlib
import os
import random
import struct
import threading
import time
from bisect import bisect_left, insort
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import (
    ConfigError,
    Erased,
    MergeMismatch,
    RateLimited,
    StaleRegistry,
    StoreError,
    Unavailable,
)

ADDRESS_BITS = 256
ADDRESS_SPACE = 1 << ADDRESS_BITS

# On-disk partition layout: 16-byte header, packed bitmap, 8-byte version.
# Header fields: magic, format version, file id, bits per file.
_PART_HEADER = struct.Struct("<2sHIQ")
_PART_MAGIC = b"BF"
_PART_FORMAT = 1
_PART_VERSION = struct.Struct("<Q")

_REGISTRY_HEADER = "bflut-registry 1"


def _popcount(buf: bytes) -> int:
    return int.from_bytes(buf, "little").bit_count()


@dataclass
class BitFile:
    """One partition: bitmap, monotone version, stable mutable name."""

    file_id: int
    name: str
    bitmap: bytearray
    version: int = 1

    @property
    def bit_len(self) -> int:
        return len(self.bitmap) * 8

    def get_bit(self, position: int) -> bool:
        return bool(self.bitmap[position >> 3] & (1 << (position & 7)))

    def popcount(self) -> int:
        return _popcount(self.bitmap)

    def content_digest(self) -> str:
        """Audit digest of the current content (content-identifier analog)."""
        return hashlib.sha256(bytes(self.bitmap)).hexdigest()

    def clone(self) -> "BitFile":
        return BitFile(self.file_id, self.name, bytearray(self.bitmap), self.version)


def merge_replicas(a: BitFile, b: BitFile) -> BitFile:
    """State-based replica reconciliation: bitwise OR of the bitmaps.

    The bitmap component forms a join-semilattice (commutative, associative,
    idempotent), so replicas converge under any delivery order. The merged
    version is max(a, b), bumped by one when the inputs actually differed.
    """
    if a.file_id != b.file_id:
        raise MergeMismatch(f"cannot merge partition {a.file_id} with {b.file_id}")
    if len(a.bitmap) != len(b.bitmap):
        raise MergeMismatch(f"replicas of partition {a.file_id} differ in size")
    merged = bytearray(x | y for x, y in zip(a.bitmap, b.bitmap))
    version = max(a.version, b.version)
    if a.bitmap != b.bitmap:
        version += 1
    return BitFile(a.file_id, a.name, merged, version)


@dataclass(frozen=True)
class WritePolicy:
    """Per-actor write quota over a fixed rolling window."""

    max_writes_per_actor_per_window: int
    window_seconds: float = 1.0

    def __post_init__(self) -> None:
        if self.max_writes_per_actor_per_window < 1:
            raise ConfigError("write quota must be >= 1")
        if self.window_seconds <= 0:
            raise ConfigError("window must be positive")


class _RateLimiter:
    """Fixed-window counter per actor; decisions are serialized by a lock."""

    def __init__(self, policy: WritePolicy, clock: Callable[[], float]):
        self._policy = policy
        self._clock = clock
        self._lock = threading.Lock()
        self._windows: dict[str, tuple[float, int]] = {}

    def admit(self, actor: str) -> None:
        now = self._clock()
        window = self._policy.window_seconds
        quota = self._policy.max_writes_per_actor_per_window
        with self._lock:
            start, count = self._windows.get(actor, (now, 0))
            if now - start >= window:
                elapsed = int((now - start) // window)
                start += elapsed * window
                count = 0
            if count >= quota:
                raise RateLimited(
                    f"actor {actor!r} exceeded {quota} writes per {window}s window"
                )
            self._windows[actor] = (start, count + 1)


@dataclass(frozen=True)
class FaultPlan:
    """Which partitions are erased (permanent) or unavailable (transient)."""

    erased: frozenset[int] = frozenset()
    unavailable: frozenset[int] = frozenset()

    @classmethod
    def from_ids(
        cls, erased: Iterable[int] = (), unavailable: Iterable[int] = ()
    ) -> "FaultPlan":
        return cls(frozenset(erased), frozenset(unavailable))

    def is_empty(self) -> bool:
        return not self.erased and not self.unavailable


class MutableNameTable:
    """Maps each mutable name to the latest published (file id, version)."""

    def __init__(self) -> None:
        self._latest: dict[str, tuple[int, int]] = {}

    def publish(self, name: str, file_id: int, version: int) -> None:
        current = self._latest.get(name)
        if current is not None and version < current[1]:
            raise StoreError(f"refusing to publish stale version {version} for {name}")
        self._latest[name] = (file_id, version)

    def resolve(self, name: str) -> tuple[int, int]:
        try:
            return self._latest[name]
        except KeyError:
            raise StoreError(f"unknown mutable name {name!r}") from None

    def names(self) -> list[str]:
        return sorted(self._latest)


class FileRegistry:
    """Sorted map from hash address (as integer) to mutable name."""

    def __init__(self, entries: Iterable[tuple[int, str]] = ()):
        pairs = sorted(entries)
        self._addresses = [a for a, _ in pairs]
        self._names = [n for _, n in pairs]
        if len(set(self._addresses)) != len(self._addresses):
            raise ConfigError("registry addresses must be unique")

    def __len__(self) -> int:
        return len(self._addresses)

    def entries(self) -> tuple[tuple[int, str], ...]:
        return tuple(zip(self._addresses, self._names))

    def add(self, address: int, name: str) -> None:
        i = bisect_left(self._addresses, address)
        if i < len(self._addresses) and self._addresses[i] == address:
            raise ConfigError(f"duplicate registry address {address:#x}")
        insort(self._addresses, address)
        self._names.insert(i, name)

    def nearest(self, address: int) -> tuple[int, str]:
        """Entry with the smallest |entry - address|; ties go to the
        smaller entry address."""
        if not self._addresses:
            raise StoreError("registry is empty")
        i = bisect_left(self._addresses, address)
        if i == 0:
            return self._addresses[0], self._names[0]
        if i == len(self._addresses):
            return self._addresses[-1], self._names[-1]
        lo, hi = self._addresses[i - 1], self._addresses[i]
        if address - lo <= hi - address:
            return lo, self._names[i - 1]
        return hi, self._names[i]


def nearest_entry(
    entries: Sequence[tuple[int, str]], address: int
) -> tuple[int, str]:
    """Nearest-key rule applied to a plain entry list (snapshot routing)."""
    if not entries:
        raise StoreError("empty registry snapshot")
    best = None
    for entry in entries:
        dist = abs(entry[0] - address)
        if best is None or dist < best[0] or (dist == best[0] and entry[0] < best[1][0]):
            best = (dist, entry)
    return best[1]


@dataclass(frozen=True)
class RegistrySnapshot:
    """Caller-side copy of the live registry for direct routing."""

    entries: tuple[tuple[int, str], ...]
    generation: int


class PartitionStore:
    """N bit files behind registry routing, name resolution and fault state.

    Writes to one file serialize on that file's lock; reads never block.
    Bit activation is monotone, so concurrent readers observe a consistent
    (possibly slightly stale) view and merges are conflict-free.
    """

    def __init__(
        self,
        files: dict[int, BitFile],
        registry: FileRegistry,
        names: MutableNameTable,
        bits_per_file: int,
        write_policy: WritePolicy | None = None,
        clock: Callable[[], float] = time.monotonic,
    ):
        self._files = files
        self._registry = registry
        self._names = names
        self.bits_per_file = bits_per_file
        self._limiter = _RateLimiter(write_policy, clock) if write_policy else None
        self._locks = {fid: threading.Lock() for fid in files}
        self._registry_lock = threading.Lock()
        self._erased: frozenset[int] = frozenset()
        self._unavailable: frozenset[int] = frozenset()
        self._generation = 0
        self._dirty: set[int] = set(files)

    # -- construction ----------------------------------------------------

    @classmethod
    def create(
        cls,
        file_count: int,
        bits_per_file: int,
        seed: int,
        write_policy: WritePolicy | None = None,
        clock: Callable[[], float] = time.monotonic,
    ) -> "PartitionStore":
        """Allocate ``file_count`` zeroed files and draw one random 256-bit
        registry address per file (deterministic for a given seed)."""
        if file_count < 1:
            raise ConfigError(f"file_count must be >= 1, got {file_count}")
        if bits_per_file < 1:
            raise ConfigError(f"bits_per_file must be >= 1, got {bits_per_file}")
        rng = random.Random(seed)
        addresses: set[int] = set()
        while len(addresses) < file_count:
            addresses.add(rng.getrandbits(ADDRESS_BITS))
        files: dict[int, BitFile] = {}
        names = MutableNameTable()
        entries = []
        for file_id, address in enumerate(sorted(addresses)):
            name = f"mn-{file_id:08d}"
            files[file_id] = BitFile(file_id, name, bytearray((bits_per_file + 7) // 8))
            names.publish(name, file_id, 1)
            entries.append((address, name))
        return cls(files, FileRegistry(entries), names, bits_per_file, write_policy, clock)

    # -- routing ---------------------------------------------------------

    @property
    def file_count(self) -> int:
        return len(self._files)

    def file_ids(self) -> list[int]:
        return sorted(self._files)

    def file(self, file_id: int) -> BitFile:
        return self._files[file_id]

    def resolve_name(self, name: str) -> tuple[int, int]:
        """Latest published (file id, version) for a mutable name."""
        return self._names.resolve(name)

    def _resolve(self, name: str) -> BitFile:
        file_id, _version = self._names.resolve(name)
        if file_id in self._erased:
            raise Erased(file_id)
        if file_id in self._unavailable:
            raise Unavailable(file_id)
        return self._files[file_id]

    def nearest_file(self, address: int | str) -> BitFile:
        """File registered nearest to ``address``, resolved to its latest
        version. Raises ``Erased``/``Unavailable`` when the nearest entry
        is faulted, so callers see exactly which reads are compromised."""
        if isinstance(address, str):
            address = int(address, 16)
        _addr, name = self._registry.nearest(address)
        return self._resolve(name)

    def nearest_live_file(self, address: int | str) -> BitFile:
        """Nearest-key routing restricted to intact, reachable files."""
        if isinstance(address, str):
            address = int(address, 16)
        dead = self._erased | self._unavailable
        live = [
            (a, n)
            for a, n in self._registry.entries()
            if self._names.resolve(n)[0] not in dead
        ]
        _addr, name = nearest_entry(live, address)
        return self._resolve(name)

    def registry_snapshot(self) -> RegistrySnapshot:
        """Live registry copy for direct routing; erased entries excluded."""
        with self._registry_lock:
            entries = tuple(
                (a, n)
                for a, n in self._registry.entries()
                if self._names.resolve(n)[0] not in self._erased
            )
            return RegistrySnapshot(entries, self._generation)

    def route_direct(self, address: int | str, snapshot: RegistrySnapshot) -> BitFile:
        """Route from a caller-held snapshot without consulting the central
        registry. Equal snapshots give byte-identical routing; a snapshot
        predating an erasure raises ``StaleRegistry`` on the erased target."""
        if isinstance(address, str):
            address = int(address, 16)
        _addr, name = nearest_entry(snapshot.entries, address)
        file_id, _version = self._names.resolve(name)
        if file_id in self._erased:
            raise StaleRegistry(f"snapshot routes to erased partition {file_id}")
        if file_id in self._unavailable:
            raise Unavailable(file_id)
        return self._files[file_id]

    # -- reads and writes -------------------------------------------------

    def write_bits(
        self, handle: BitFile, positions: Iterable[int], actor: str = "local"
    ) -> tuple[int, int]:
        """Turn on the given bits; returns (published version, bits newly set).

        The version increments (and the mutable name republishes) only when
        at least one bit flipped 0 to 1; re-setting live bits is a no-op.
        """
        file_id = handle.file_id
        if file_id in self._erased:
            raise Erased(file_id)
        if file_id in self._unavailable:
            raise Unavailable(file_id)
        if self._limiter is not None:
            self._limiter.admit(actor)
        target = self._files[file_id]
        with self._locks[file_id]:
            newly_set = 0
            for position in positions:
                if not 0 <= position < self.bits_per_file:
                    raise StoreError(
                        f"bit {position} outside partition of {self.bits_per_file} bits"
                    )
                byte, mask = position >> 3, 1 << (position & 7)
                if not target.bitmap[byte] & mask:
                    target.bitmap[byte] |= mask
                    newly_set += 1
            if newly_set:
                target.version += 1
                self._names.publish(target.name, file_id, target.version)
                self._dirty.add(file_id)
            return target.version, newly_set

    def set_bits(
        self, handle: BitFile, positions: Iterable[int], actor: str = "local"
    ) -> int:
        """Turn on the given bits and return the published version."""
        version, _newly_set = self.write_bits(handle, positions, actor)
        return version

    def check_bits(self, handle: BitFile, positions: Iterable[int]) -> bool:
        """True iff every listed bit is set in the latest resolved version."""
        file_id = handle.file_id
        if file_id in self._erased:
            raise Erased(file_id)
        if file_id in self._unavailable:
            raise Unavailable(file_id)
        target = self._files[file_id]
        for position in positions:
            if not 0 <= position < self.bits_per_file:
                raise StoreError(
                    f"bit {position} outside partition of {self.bits_per_file} bits"
                )
            if not target.get_bit(position):
                return False
        return True

    def adopt_replica(self, replica: BitFile) -> None:
        """Replace local state with a merged replica (test/repair hook)."""
        local = self._files[replica.file_id]
        merged = merge_replicas(local, replica)
        with self._locks[replica.file_id]:
            local.bitmap[:] = merged.bitmap
            if merged.version > local.version:
                local.version = merged.version
                self._names.publish(local.name, local.file_id, local.version)
            self._dirty.add(local.file_id)

    # -- faults ------------------------------------------------------------

    def apply_faults(self, plan: FaultPlan) -> None:
        unknown = (plan.erased | plan.unavailable) - set(self._files)
        if unknown:
            raise ConfigError(f"fault plan names unknown partitions {sorted(unknown)}")
        with self._registry_lock:
            self._erased = frozenset(plan.erased)
            self._unavailable = frozenset(plan.unavailable) - self._erased
            self._generation += 1

    def clear_faults(self) -> None:
        with self._registry_lock:
            self._erased = frozenset()
            self._unavailable = frozenset()
            self._generation += 1

    @property
    def fault_plan(self) -> FaultPlan:
        return FaultPlan(self._erased, self._unavailable)

    def erased_ids(self) -> frozenset[int]:
        return self._erased

    def unavailable_ids(self) -> frozenset[int]:
        return self._unavailable

    def reachable_count(self) -> int:
        """Files that are neither erased nor unavailable."""
        return len(self._files) - len(self._erased | self._unavailable)

    # -- census -------------------------------------------------------------

    def popcount(self) -> int:
        return sum(f.popcount() for f in self._files.values())

    @property
    def total_bits(self) -> int:
        return self.file_count * self.bits_per_file

    def activated_ratio(self) -> float:
        return self.popcount() / self.total_bits

    def snapshot_bitmaps(self) -> "StoreSnapshot":
        """Frozen copy of addresses, fault flags and raw bitmaps, for
        independent (oracle) verification outside the store's code paths."""
        parts = []
        for address, name in self._registry.entries():
            file_id, _ = self._names.resolve(name)
            f = self._files[file_id]
            parts.append(
                PartitionSnapshot(
                    address=address,
                    file_id=file_id,
                    name=name,
                    bitmap=bytes(f.bitmap),
                    erased=file_id in self._erased,
                    unavailable=file_id in self._unavailable,
                )
            )
        return StoreSnapshot(tuple(parts), self.bits_per_file)

    # -- persistence ---------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        """Write the registry, every dirty partition and any active fault
        plan under ``directory`` (created if missing)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        _write_registry(directory / "registry.txt", self._registry.entries())
        for file_id in sorted(self._files):
            path = directory / f"part-{file_id:08d}.bin"
            if file_id in self._dirty or not path.exists():
                _write_partition(path, self._files[file_id], self.bits_per_file)
        self._dirty.clear()
        faults = directory / "faults.txt"
        if self._erased or self._unavailable:
            save_fault_plan(faults, self.fault_plan)
        elif faults.exists():
            faults.unlink()

    @classmethod
    def load(
        cls,
        directory: str | Path,
        write_policy: WritePolicy | None = None,
        clock: Callable[[], float] = time.monotonic,
    ) -> "PartitionStore":
        directory = Path(directory)
        registry_path = directory / "registry.txt"
        if not registry_path.exists():
            raise StoreError(f"no registry at {registry_path}")
        entries = _read_registry(registry_path)
        files: dict[int, BitFile] = {}
        names = MutableNameTable()
        bits_per_file = None
        for _address, name in entries:
            file_id = _file_id_from_name(name)
            part_path = directory / f"part-{file_id:08d}.bin"
            bitfile, bits = _read_partition(part_path, file_id, name)
            if bits_per_file is None:
                bits_per_file = bits
            elif bits_per_file != bits:
                raise StoreError("partitions disagree on bits_per_file")
            files[file_id] = bitfile
            names.publish(name, file_id, bitfile.version)
        if bits_per_file is None:
            raise StoreError("registry lists no partitions")
        store = cls(files, FileRegistry(entries), names, bits_per_file, write_policy, clock)
        store._dirty.clear()
        faults = directory / "faults.txt"
        if faults.exists():
            store.apply_faults(load_fault_plan(faults))
        return store


@dataclass(frozen=True)
class PartitionSnapshot:
    address: int
    file_id: int
    name: str
    bitmap: bytes
    erased: bool
    unavailable: bool

    def get_bit(self, position: int) -> bool:
        return bool(self.bitmap[position >> 3] & (1 << (position & 7)))


@dataclass(frozen=True)
class StoreSnapshot:
    partitions: tuple[PartitionSnapshot, ...]
    bits_per_file: int


# -- on-disk formats ----------------------------------------------------------


def _write_partition(path: Path, f: BitFile, bits_per_file: int) -> None:
    payload = (
        _PART_HEADER.pack(_PART_MAGIC, _PART_FORMAT, f.file_id, bits_per_file)
        + bytes(f.bitmap)
        + _PART_VERSION.pack(f.version)
    )
    path.write_bytes(payload)


def _read_partition(path: Path, file_id: int, name: str) -> tuple[BitFile, int]:
    if not path.exists():
        raise StoreError(f"missing partition file {path}")
    raw = path.read_bytes()
    if len(raw) < _PART_HEADER.size + _PART_VERSION.size:
        raise StoreError(f"truncated partition file {path}")
    magic, fmt, stored_id, bits = _PART_HEADER.unpack_from(raw)
    if magic != _PART_MAGIC or fmt != _PART_FORMAT:
        raise StoreError(f"{path} is not a version-{_PART_FORMAT} partition file")
    if stored_id != file_id:
        raise StoreError(f"{path} claims file id {stored_id}, registry says {file_id}")
    body = raw[_PART_HEADER.size : -_PART_VERSION.size]
    if len(body) != (bits + 7) // 8:
        raise StoreError(f"{path} bitmap length does not match header")
    (version,) = _PART_VERSION.unpack(raw[-_PART_VERSION.size :])
    return BitFile(file_id, name, bytearray(body), version), bits


def _file_id_from_name(name: str) -> int:
    try:
        prefix, digits = name.split("-", 1)
        if prefix != "mn":
            raise ValueError
        return int(digits)
    except ValueError:
        raise StoreError(f"unparseable mutable name {name!r}") from None


def _write_registry(path: Path, entries: Iterable[tuple[int, str]]) -> None:
    lines = [_REGISTRY_HEADER]
    for address, name in sorted(entries):
        lines.append(f"{address:064x} {name}")
    body = "\n".join(lines) + "\n"
    digest = hashlib.sha256(body.encode("ascii")).hexdigest()
    path.write_text(body + f"checksum sha256 {digest}\n", encoding="ascii")


def _read_registry(path: Path) -> list[tuple[int, str]]:
    text = path.read_text(encoding="ascii")
    lines = text.splitlines()
    if not lines or lines[0] != _REGISTRY_HEADER:
        raise StoreError(f"{path} is not a registry file")
    if not lines[-1].startswith("checksum sha256 "):
        raise StoreError(f"{path} has no checksum line")
    body = "\n".join(lines[:-1]) + "\n"
    expected = lines[-1].split()[-1]
    actual = hashlib.sha256(body.encode("ascii")).hexdigest()
    if actual != expected:
        raise StoreError(f"{path} failed checksum verification")
    entries = []
    for line in lines[1:-1]:
        address_hex, name = line.split()
        entries.append((int(address_hex, 16), name))
    return entries


def save_fault_plan(path: str | Path, plan: FaultPlan) -> None:
    lines = []
    if plan.erased:
        lines.append("erased = " + ",".join(str(i) for i in sorted(plan.erased)))
    if plan.unavailable:
        lines.append("unavailable = " + ",".join(str(i) for i in sorted(plan.unavailable)))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="ascii")


def load_fault_plan(path: str | Path) -> FaultPlan:
    """Parse a plain-text fault plan: ``erased = 1,2`` / ``unavailable = 3``."""
    erased: set[int] = set()
    unavailable: set[int] = set()
    for raw in Path(path).read_text(encoding="ascii").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"bad fault plan line {raw!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        ids = {int(tok) for tok in value.split(",") if tok.strip()} if value else set()
        if key == "erased":
            erased |= ids
        elif key == "unavailable":
            unavailable |= ids
        else:
            raise ConfigError(f"unknown fault plan key {key!r}")
    return FaultPlan(frozenset(erased), frozenset(unavailable))


# -- store directory locking ---------------------------------------------------


class StoreLock:
    """Advisory exclusive lock for CLI mutations of an on-disk store."""

    def __init__(self, directory: str | Path):
        self._path = Path(directory) / "lock"
        self._fd: int | None = None

    def __enter__(self) -> "StoreLock":
        self._path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self._fd = os.open(self._path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StoreError(
                f"store at {self._path.parent} is locked by another process"
            ) from None
        os.write(self._fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
        try:
            self._path.unlink()
        except FileNotFoundError:
            pass
