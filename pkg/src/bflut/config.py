"""System-wide tunable parameters.

One frozen dataclass carries everything the encoder and the store need to
agree on: how many partitions exist, how many bits each holds, how long
stored keys are, how the 64-character hash is cut into bit positions, and
which alphabet keys are written in.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, InvalidSegmentation

# SHA-256 rendered as lowercase hex: every derived address is this long.
HASH_HEX_LEN = 64

ALPHABETS = {2: "01", 16: "0123456789abcdef"}


def alphabet_for(radix: int) -> str:
    try:
        return ALPHABETS[radix]
    except KeyError:
        raise ConfigError(f"radix must be one of {sorted(ALPHABETS)}, got {radix}") from None


@dataclass(frozen=True)
class SystemConfig:
    """Tunable parameters of one key-store deployment.

    Attributes:
        file_count: number of bit partitions.
        bits_per_file: bits held by each partition.
        key_len: characters per stored key.
        segment_width: hash characters per segment; each prefix activates
            ``HASH_HEX_LEN // segment_width`` bit positions.
        radix: key alphabet size, 2 or 16.
    """

    file_count: int
    bits_per_file: int
    key_len: int
    segment_width: int = 4
    radix: int = 16

    def __post_init__(self) -> None:
        if self.file_count < 1:
            raise ConfigError(f"file_count must be >= 1, got {self.file_count}")
        if self.bits_per_file < 1:
            raise ConfigError(f"bits_per_file must be >= 1, got {self.bits_per_file}")
        if self.key_len < 1:
            raise ConfigError(f"key_len must be >= 1, got {self.key_len}")
        if self.radix not in ALPHABETS:
            raise ConfigError(f"radix must be one of {sorted(ALPHABETS)}, got {self.radix}")
        if self.segment_width < 1 or HASH_HEX_LEN % self.segment_width != 0:
            raise InvalidSegmentation(
                f"segment_width must divide {HASH_HEX_LEN}, got {self.segment_width}"
            )

    @property
    def alphabet(self) -> str:
        return ALPHABETS[self.radix]

    @property
    def positions_per_prefix(self) -> int:
        """Bit positions activated by one prefix of one key."""
        return HASH_HEX_LEN // self.segment_width

    @property
    def bits_per_key(self) -> int:
        """Upper bound on distinct bits activated by one full key insert."""
        return self.key_len * self.positions_per_prefix

    @property
    def total_bits(self) -> int:
        return self.file_count * self.bits_per_file
