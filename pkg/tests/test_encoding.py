import pytest
from hypothesis import given, settings, strategies as st

from bflut import (
    Credential,
    DegenerateWildcard,
    FaultPlan,
    InvalidCredential,
    InvalidPrefix,
    InvalidSegmentation,
    PartitionUnavailable,
    PartitionStore,
    SystemConfig,
    check_key,
    derive_prefix_address,
    insert_key,
    lookup_trace,
    retrieve_key,
    segment_positions,
)

# Digests computed with sha256sum over the length-framed field bytes
# (8-byte big-endian length before each of username, password, prefix).
FROZEN_DIGESTS = {
    ("user123", "password123", "ab12"): "0e42095258d63817ed5e0645b812bab7d81fbc6259eee7387f29ca75b0744192",
    ("u", "p", "0"): "ea9ddf40523d1a3be8549bc7537c867ac20c0b168a5bb67fb3304345819f2703",
}

# Positions produced by a shell splitter (4-char cuts, $((16#seg)) % B)
# over the first frozen digest.
FROZEN_POSITIONS_MOD_2POW24 = [
    3650, 2386, 22742, 14359, 60766, 1605, 47122, 47799,
    55327, 48226, 23022, 59192, 32553, 51829, 45172, 16786,
]
FROZEN_POSITIONS_MOD_1024 = [
    578, 338, 214, 23, 350, 581, 18, 695,
    31, 98, 494, 824, 809, 629, 116, 402,
]


def small_config(**overrides):
    params = dict(file_count=4, bits_per_file=1024, key_len=8, segment_width=16, radix=2)
    params.update(overrides)
    return SystemConfig(**params)


def small_store(cfg, seed=11):
    return PartitionStore.create(cfg.file_count, cfg.bits_per_file, seed=seed)


class TestCredential:
    def test_empty_password_rejected(self):
        with pytest.raises(InvalidCredential):
            Credential("JohnSmith", "")

    def test_empty_username_rejected(self):
        with pytest.raises(InvalidCredential):
            Credential("", "secret")


class TestDeriveAddress:
    def test_deterministic(self):
        cred = Credential("u", "p")
        assert derive_prefix_address(cred, "0", radix=2) == derive_prefix_address(
            cred, "0", radix=2
        )

    @pytest.mark.parametrize("fields,expected", sorted(FROZEN_DIGESTS.items()))
    def test_frozen_reference_digests(self, fields, expected):
        user, password, prefix = fields
        assert derive_prefix_address(Credential(user, password), prefix) == expected

    def test_field_framing_blocks_boundary_shifts(self):
        # "ab"+"c" and "a"+"bc" concatenate identically; framing must not.
        assert derive_prefix_address(
            Credential("ab", "c"), "12"
        ) != derive_prefix_address(Credential("a", "bc"), "12")
        assert derive_prefix_address(
            Credential("a", "b1"), "2"
        ) != derive_prefix_address(Credential("a", "b"), "12")

    def test_invalid_prefix_character(self):
        with pytest.raises(InvalidPrefix):
            derive_prefix_address(Credential("u", "p"), "xyz!", radix=16)
        with pytest.raises(InvalidPrefix):
            derive_prefix_address(Credential("u", "p"), "2", radix=2)

    def test_empty_prefix(self):
        with pytest.raises(InvalidPrefix):
            derive_prefix_address(Credential("u", "p"), "")

    @given(
        user=st.text(min_size=1, max_size=8),
        password=st.text(min_size=1, max_size=8),
        prefix=st.text(alphabet="0123456789abcdef", min_size=1, max_size=12),
    )
    @settings(max_examples=60)
    def test_pure_function(self, user, password, prefix):
        cred = Credential(user, password)
        first = derive_prefix_address(cred, prefix)
        assert first == derive_prefix_address(cred, prefix)
        assert len(first) == 64
        assert set(first) <= set("0123456789abcdef")


class TestSegmentPositions:
    def test_all_zero_address(self):
        mapped = segment_positions("0" * 64, 1024, 4)
        assert mapped.positions == (0,) * 16

    def test_place_value_ordering(self):
        address = "0001" + "0000" * 15
        mapped = segment_positions(address, 1024, 4)
        assert mapped.positions == (1,) + (0,) * 15

    def test_frozen_splitter_oracle(self):
        digest = FROZEN_DIGESTS[("user123", "password123", "ab12")]
        assert list(segment_positions(digest, 2**21 * 8, 4).positions) == (
            FROZEN_POSITIONS_MOD_2POW24
        )
        assert list(segment_positions(digest, 1024, 4).positions) == (
            FROZEN_POSITIONS_MOD_1024
        )

    def test_width_must_divide_hash(self):
        with pytest.raises(InvalidSegmentation):
            segment_positions("0" * 64, 1024, 5)

    def test_duplicates_preserved(self):
        mapped = segment_positions("0abc" * 16, 1024, 4)
        assert len(mapped.positions) == 16
        assert len(set(mapped.positions)) == 1

    @given(
        address=st.text(alphabet="0123456789abcdef", min_size=64, max_size=64),
        width=st.sampled_from([1, 2, 4, 8, 16, 32, 64]),
        bits=st.integers(min_value=1, max_value=1 << 24),
    )
    @settings(max_examples=80)
    def test_matches_manual_slicing(self, address, width, bits):
        mapped = segment_positions(address, bits, width)
        manual = [
            int(address[i : i + width], 16) % bits for i in range(0, 64, width)
        ]
        assert list(mapped.positions) == manual
        assert all(0 <= p < bits for p in mapped.positions)


class TestInsertRetrieve:
    def test_round_trip(self):
        cfg = small_config()
        store = small_store(cfg)
        cred = Credential("alice", "pw")
        insert_key(cred, "01100110", store, cfg)
        assert "01100110" in retrieve_key(cred, store, cfg).candidates

    def test_idempotent(self):
        cfg = small_config()
        store = small_store(cfg)
        cred = Credential("alice", "pw")
        first = insert_key(cred, "01100110", store, cfg)
        before = [bytes(store.file(i).bitmap) for i in store.file_ids()]
        second = insert_key(cred, "01100110", store, cfg)
        after = [bytes(store.file(i).bitmap) for i in store.file_ids()]
        assert first.new_bits > 0
        assert second.new_bits == 0
        assert before == after

    def test_bit_budget(self):
        # One insert activates at most key_len * (64 / width) distinct bits.
        cfg = SystemConfig(
            file_count=1, bits_per_file=1 << 22, key_len=64, segment_width=4, radix=16
        )
        store = small_store(cfg)
        receipt = insert_key(Credential("bob", "pw"), "0123456789abcdef" * 4, store, cfg)
        assert receipt.new_bits <= 64 * 16 == 1024
        assert receipt.new_bits == store.popcount()

    def test_worked_binary_example(self):
        cfg = SystemConfig(
            file_count=1, bits_per_file=4096, key_len=4, segment_width=4, radix=2
        )
        store = small_store(cfg)
        cred = Credential("John Smith", "password")
        insert_key(cred, "0110", store, cfg)
        assert retrieve_key(cred, store, cfg).candidates == {"0110"}

    def test_empty_store_returns_nothing(self):
        cfg = small_config()
        store = small_store(cfg)
        result = retrieve_key(Credential("nobody", "pw"), store, cfg)
        assert result.candidates == frozenset()

    def test_multiple_keys_per_credential(self):
        cfg = small_config(file_count=1, bits_per_file=1 << 16)
        store = small_store(cfg)
        cred = Credential("carol", "pw")
        insert_key(cred, "00000000", store, cfg)
        insert_key(cred, "11111111", store, cfg)
        found = retrieve_key(cred, store, cfg).candidates
        assert {"00000000", "11111111"} <= found

    def test_wrong_length_key_rejected(self):
        cfg = small_config()
        with pytest.raises(InvalidPrefix):
            insert_key(Credential("d", "p"), "0101", small_store(cfg), cfg)

    def test_monotone_under_other_inserts(self):
        cfg = small_config(bits_per_file=256)
        store = small_store(cfg)
        cred = Credential("base", "pw")
        insert_key(cred, "01010101", store, cfg)
        baseline = retrieve_key(cred, store, cfg).candidates
        for i in range(10):
            insert_key(Credential(f"other{i}", "pw"), "00110011", store, cfg)
        assert baseline <= retrieve_key(cred, store, cfg).candidates

    def test_insert_aborts_on_unreachable_partition(self):
        cfg = small_config(file_count=2)
        store = small_store(cfg)
        store.apply_faults(FaultPlan.from_ids(unavailable=store.file_ids()))
        with pytest.raises(PartitionUnavailable):
            insert_key(Credential("e", "p"), "01100110", store, cfg)


class TestTrace:
    def test_empty_store_trace_is_one_round_of_misses(self):
        cfg = small_config()
        store = small_store(cfg)
        result, trace = lookup_trace(Credential("f", "p"), store, cfg)
        assert len(trace) == cfg.radix
        assert all(entry.outcome == "miss" for entry in trace)
        assert result.lookups == cfg.radix

    def test_successful_trace_spans_every_depth(self):
        cfg = small_config()
        store = small_store(cfg)
        cred = Credential("g", "p")
        insert_key(cred, "10011001", store, cfg)
        result, trace = lookup_trace(cred, store, cfg)
        assert len(trace) >= cfg.key_len
        hits_by_depth = {len(e.prefix) for e in trace if e.outcome == "hit"}
        assert hits_by_depth == set(range(1, cfg.key_len + 1))
        assert len({e.file_id for e in trace}) == result.files_touched


class TestWildcard:
    def build(self, seed=3):
        cfg = small_config(file_count=10, bits_per_file=512)
        store = small_store(cfg, seed=seed)
        cred = Credential("holder", "pw")
        insert_key(cred, "01111000", store, cfg)
        return cfg, store, cred

    def test_erasure_never_loses_the_key(self):
        import random

        rng = random.Random(99)
        for trial in range(25):
            cfg, store, cred = self.build(seed=trial)
            erase = rng.sample(store.file_ids(), rng.randint(1, 9))
            store.apply_faults(FaultPlan.from_ids(erased=erase))
            assert check_key(cred, "01111000", store, cfg, wildcard_on_missing=True)
            found = retrieve_key(cred, store, cfg, wildcard_on_missing=True)
            assert "01111000" in found.candidates

    def test_flag_off_kills_blocked_branches(self):
        cfg, store, cred = self.build()
        store.apply_faults(FaultPlan.from_ids(unavailable=store.file_ids()))
        found = retrieve_key(cred, store, cfg, wildcard_on_missing=False)
        assert found.candidates == frozenset()
        store.clear_faults()
        assert "01111000" in retrieve_key(cred, store, cfg).candidates

    def test_total_erasure_is_degenerate(self):
        cfg, store, cred = self.build()
        store.apply_faults(FaultPlan.from_ids(erased=store.file_ids()))
        with pytest.raises(DegenerateWildcard):
            retrieve_key(cred, store, cfg, wildcard_on_missing=True)
