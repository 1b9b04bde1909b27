import random
import threading

import pytest
from hypothesis import given, settings, strategies as st

from bflut import (
    ConfigError,
    Erased,
    FaultPlan,
    FileRegistry,
    MergeMismatch,
    PartitionStore,
    RateLimited,
    StaleRegistry,
    Unavailable,
    WritePolicy,
    merge_replicas,
    nearest_entry,
)
from bflut.store import BitFile


class TestInit:
    def test_degenerate_single_file(self):
        store = PartitionStore.create(1, 8, seed=1)
        for probe in (0, 1, 1 << 128, (1 << 256) - 1):
            assert store.nearest_file(probe).file_id == 0

    def test_equal_seeds_equal_registries(self):
        a = PartitionStore.create(20, 64, seed=42)
        b = PartitionStore.create(20, 64, seed=42)
        assert a.registry_snapshot().entries == b.registry_snapshot().entries

    def test_distinct_addresses(self):
        store = PartitionStore.create(150, 8, seed=5)
        addresses = [a for a, _ in store.registry_snapshot().entries]
        assert len(set(addresses)) == 150

    def test_capacity_accounting(self):
        store = PartitionStore.create(150, 2**21 * 8, seed=5)
        assert store.total_bits == 2**21 * 150 * 8

    def test_rejects_bad_sizes(self):
        with pytest.raises(ConfigError):
            PartitionStore.create(0, 8, seed=1)
        with pytest.raises(ConfigError):
            PartitionStore.create(1, 0, seed=1)


class TestNearest:
    def registry(self, pairs):
        return FileRegistry([(addr, f"mn-{i:08d}") for i, addr in enumerate(pairs)])

    def test_exact_match(self):
        reg = self.registry([100, 200])
        assert reg.nearest(200)[0] == 200

    def test_distance_and_tie_rule(self):
        reg = self.registry([100, 200])
        assert reg.nearest(149)[0] == 100
        assert reg.nearest(150)[0] == 100  # equidistant: lower address wins
        assert reg.nearest(151)[0] == 200
        assert reg.nearest(0)[0] == 100
        assert reg.nearest(10**9)[0] == 200

    def test_reference_proximity_example(self):
        # Non-hex pseudo-addresses from the worked routing example, read in
        # base 36 so the registry's integer rule applies.
        keys = ["1234abcd", "5678efgh", "9101ijkl"]
        reg = self.registry([int(k, 36) for k in keys])
        target = int("5678abcd", 36)
        assert reg.nearest(target)[0] == int("5678efgh", 36)

    @given(
        addresses=st.sets(st.integers(min_value=0, max_value=1 << 32), min_size=1, max_size=12),
        probe=st.integers(min_value=0, max_value=1 << 32),
    )
    @settings(max_examples=200)
    def test_minimizes_distance_with_low_ties(self, addresses, probe):
        reg = self.registry(sorted(addresses))
        found, _name = reg.nearest(probe)
        best = min(abs(a - probe) for a in addresses)
        assert abs(found - probe) == best
        assert found == min(a for a in addresses if abs(a - probe) == best)

    def test_snapshot_helper_agrees(self):
        rng = random.Random(7)
        addresses = sorted(rng.sample(range(1 << 40), 9))
        reg = self.registry(addresses)
        entries = reg.entries()
        for _ in range(500):
            probe = rng.randrange(1 << 40)
            assert nearest_entry(entries, probe) == reg.nearest(probe)


class TestWrites:
    def test_version_bumps_only_on_change(self):
        store = PartitionStore.create(1, 64, seed=2)
        handle = store.nearest_file(0)
        v1 = store.set_bits(handle, {3, 9})
        v2 = store.set_bits(handle, {3, 9})
        assert v1 == 2
        assert v2 == v1
        v3 = store.set_bits(handle, {3, 10})
        assert v3 == v1 + 1

    def test_read_your_writes(self):
        store = PartitionStore.create(1, 64, seed=2)
        handle = store.nearest_file(0)
        assert not store.check_bits(handle, {5})
        store.set_bits(handle, {5})
        assert store.check_bits(handle, {5})
        assert not store.check_bits(handle, {5, 6})

    def test_name_table_tracks_latest_version(self):
        store = PartitionStore.create(3, 64, seed=2)
        handle = store.nearest_file(1 << 200)
        version = store.set_bits(handle, {1})
        assert store.resolve_name(handle.name) == (handle.file_id, version)

    def test_position_bounds_checked(self):
        store = PartitionStore.create(1, 64, seed=2)
        handle = store.nearest_file(0)
        with pytest.raises(Exception):
            store.set_bits(handle, {64})

    def test_versions_strictly_increase(self):
        store = PartitionStore.create(1, 256, seed=3)
        handle = store.nearest_file(0)
        seen = [handle.version]
        for bit in range(0, 256, 8):
            seen.append(store.set_bits(handle, {bit}))
        assert seen == sorted(seen)
        assert len(set(seen)) == len(seen)

    def test_interleaving_order_is_irrelevant(self):
        def run(order):
            store = PartitionStore.create(1, 64, seed=4)
            handle = store.nearest_file(0)
            for positions in order:
                store.set_bits(handle, positions)
            return bytes(handle.bitmap)

        a, b = {1, 5, 9}, {2, 5, 40}
        assert run([a, b]) == run([b, a])

    def test_concurrent_writers_union(self):
        store = PartitionStore.create(1, 4096, seed=4)
        handle = store.nearest_file(0)
        chunks = [set(range(i, 4096, 8)) for i in range(8)]

        threads = [
            threading.Thread(target=store.set_bits, args=(handle, chunk))
            for chunk in chunks
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert handle.popcount() == 4096


class TestMerge:
    def bitfile(self, payload, version=1):
        return BitFile(7, "mn-00000007", bytearray(payload), version)

    def test_idempotent(self):
        x = self.bitfile(b"\x0f\xf0")
        merged = merge_replicas(x, x)
        assert merged.bitmap == x.bitmap
        assert merged.version == x.version

    def test_disjoint_popcounts_add(self):
        a = self.bitfile(b"\x0f\x00")
        b = self.bitfile(b"\xf0\x00")
        merged = merge_replicas(a, b)
        assert merged.popcount() == a.popcount() + b.popcount()

    def test_mismatched_ids_rejected(self):
        a = self.bitfile(b"\x01")
        b = BitFile(8, "mn-00000008", bytearray(b"\x01"))
        with pytest.raises(MergeMismatch):
            merge_replicas(a, b)

    @given(
        a=st.binary(min_size=4, max_size=4),
        b=st.binary(min_size=4, max_size=4),
        c=st.binary(min_size=4, max_size=4),
    )
    @settings(max_examples=200)
    def test_semilattice(self, a, b, c):
        fa, fb, fc = self.bitfile(a), self.bitfile(b), self.bitfile(c)
        assert merge_replicas(fa, fb).bitmap == merge_replicas(fb, fa).bitmap
        left = merge_replicas(merge_replicas(fa, fb), fc).bitmap
        right = merge_replicas(fa, merge_replicas(fb, fc)).bitmap
        assert left == right
        assert merge_replicas(fa, fa).bitmap == fa.bitmap

    def test_version_dominates_inputs(self):
        a = self.bitfile(b"\x01", version=5)
        b = self.bitfile(b"\x02", version=9)
        assert merge_replicas(a, b).version == 10
        same = self.bitfile(b"\x01", version=9)
        assert merge_replicas(a, same).version == 9


class TestRateLimiter:
    def make(self, quota, window=10.0):
        clock = {"now": 0.0}
        store = PartitionStore.create(
            1,
            64,
            seed=6,
            write_policy=WritePolicy(quota, window),
            clock=lambda: clock["now"],
        )
        return store, clock

    def test_quota_boundary(self):
        store, _clock = self.make(3)
        handle = store.nearest_file(0)
        for bit in range(3):
            store.set_bits(handle, {bit}, actor="writer")
        with pytest.raises(RateLimited):
            store.set_bits(handle, {50}, actor="writer")

    def test_window_rollover(self):
        store, clock = self.make(2, window=5.0)
        handle = store.nearest_file(0)
        store.set_bits(handle, {0}, actor="w")
        store.set_bits(handle, {1}, actor="w")
        with pytest.raises(RateLimited):
            store.set_bits(handle, {2}, actor="w")
        clock["now"] = 5.0
        store.set_bits(handle, {2}, actor="w")

    def test_actors_isolated(self):
        store, _clock = self.make(1)
        handle = store.nearest_file(0)
        store.set_bits(handle, {0}, actor="a")
        store.set_bits(handle, {1}, actor="b")
        with pytest.raises(RateLimited):
            store.set_bits(handle, {2}, actor="a")


class TestFaults:
    def test_erased_target_raises(self):
        store = PartitionStore.create(5, 64, seed=8)
        victim = store.nearest_file(123456789)
        store.apply_faults(FaultPlan.from_ids(erased=[victim.file_id]))
        with pytest.raises(Erased):
            store.nearest_file(123456789)
        with pytest.raises(Erased):
            store.check_bits(victim, {0})

    def test_unavailable_distinct_from_erased(self):
        store = PartitionStore.create(5, 64, seed=8)
        victim = store.nearest_file(9)
        store.apply_faults(FaultPlan.from_ids(unavailable=[victim.file_id]))
        with pytest.raises(Unavailable):
            store.nearest_file(9)
        store.clear_faults()
        assert store.nearest_file(9).file_id == victim.file_id

    def test_reachable_count(self):
        store = PartitionStore.create(5, 64, seed=8)
        store.apply_faults(FaultPlan.from_ids(erased=[0], unavailable=[1, 2]))
        assert store.reachable_count() == 2

    def test_live_routing_skips_dead_files(self):
        store = PartitionStore.create(5, 64, seed=8)
        victim = store.nearest_file(777)
        store.apply_faults(FaultPlan.from_ids(erased=[victim.file_id]))
        rerouted = store.nearest_live_file(777)
        assert rerouted.file_id != victim.file_id

    def test_unknown_ids_rejected(self):
        store = PartitionStore.create(2, 64, seed=8)
        with pytest.raises(ConfigError):
            store.apply_faults(FaultPlan.from_ids(erased=[99]))


class TestDirectRouting:
    def test_equivalent_on_equal_snapshots(self):
        store = PartitionStore.create(25, 64, seed=9)
        snapshot = store.registry_snapshot()
        rng = random.Random(10)
        for _ in range(10_000):
            probe = rng.getrandbits(256)
            assert (
                store.route_direct(probe, snapshot).file_id
                == store.nearest_file(probe).file_id
            )

    def test_stale_after_erasure(self):
        store = PartitionStore.create(4, 64, seed=9)
        snapshot = store.registry_snapshot()
        victim = store.nearest_file(42)
        store.apply_faults(FaultPlan.from_ids(erased=[victim.file_id]))
        with pytest.raises(StaleRegistry):
            store.route_direct(42, snapshot)

    def test_snapshot_excludes_erased_entries(self):
        store = PartitionStore.create(4, 64, seed=9)
        victim = store.nearest_file(42)
        store.apply_faults(FaultPlan.from_ids(erased=[victim.file_id]))
        fresh = store.registry_snapshot()
        assert len(fresh.entries) == 3
        assert store.route_direct(42, fresh).file_id != victim.file_id

    def test_unavailable_target_propagates(self):
        store = PartitionStore.create(4, 64, seed=9)
        snapshot = store.registry_snapshot()
        victim = store.nearest_file(42)
        store.apply_faults(FaultPlan.from_ids(unavailable=[victim.file_id]))
        with pytest.raises(Unavailable):
            store.route_direct(42, snapshot)
