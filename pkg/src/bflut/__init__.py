"""Prefix-activated Bloom filter key storage over a partitioned bit store.

Keys are never written anywhere: each prefix of a key activates hash-derived
bit positions in the partition nearest to the prefix's hash address, and
retrieval reconstructs keys by extending prefixes whose bits are all lit.
The package bundles the encoder, the partitioned store it runs against,
closed-form false-positive and file-access analyses, a deterministic
simulation harness and a CLI.
"""

from .analysis import (
    AnalysisParams,
    FalsePositiveResult,
    MinStorageResult,
    SegmentWidthSolution,
    StepProbabilities,
    activated_ratio,
    bits_per_key,
    bits_per_prefix,
    expected_unique_files,
    fp_log10_fast,
    fp_probability,
    fp_probability_from_bits,
    min_storage,
    solve_segment_width,
    step_probabilities,
)
from .config import ALPHABETS, HASH_HEX_LEN, SystemConfig, alphabet_for
from .encoding import (
    BitPositionSet,
    Credential,
    InsertReceipt,
    RetrievalResult,
    TraceEntry,
    address_int,
    check_key,
    derive_prefix_address,
    insert_key,
    lookup_trace,
    retrieve_key,
    segment_positions,
    validate_key,
)
from .errors import (
    BflutError,
    ConfigError,
    DegenerateWildcard,
    Erased,
    FalseNegativeError,
    InvalidCredential,
    InvalidParams,
    InvalidPrefix,
    InvalidSegmentation,
    MergeMismatch,
    OracleInfeasible,
    PartitionUnavailable,
    RateLimited,
    StaleRegistry,
    StoreError,
    Unavailable,
)
from .simulate import (
    ErasurePoint,
    ExperimentConfig,
    REFERENCE_USERS,
    SimReport,
    UserRunResult,
    brute_force_oracle,
    parse_experiment_config,
    routing_histogram,
    run_erasure_sweep,
    run_population,
    segment_width_for,
)
from .store import (
    BitFile,
    FaultPlan,
    FileRegistry,
    MutableNameTable,
    PartitionStore,
    RegistrySnapshot,
    StoreLock,
    WritePolicy,
    load_fault_plan,
    merge_replicas,
    nearest_entry,
    save_fault_plan,
)

__version__ = "0.1.0"
