"""Seed derivation and bit streams.

All randomness in the package comes from PCG64 bit generators whose seeds are
derived with SplitMix64 from one master seed. Bits are unpacked from the raw
64-bit output words (least significant bit first), which keeps every stream
independent of numpy's ``Generator`` sampling routines.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

# xor salts that separate the per-row streams
LABEL_SALT = 0xA5A5_5A5A_C3C3_3C3C
EVAL_SALT = 0x0F1E_2D3C_4B5A_6978
ATTEMPT_SALT = 0xD1B5_4A32_D192_ED03

GENERATOR_NAME = "numpy.PCG64/raw-uint64-lsb-first"


def splitmix64(x: int) -> int:
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def row_seed(master_seed: int, row: int, attempt: int = 0) -> int:
    """Seed for dataset row ``row``; ``attempt > 0`` gives a replacement draw."""
    seed = splitmix64(splitmix64(master_seed & MASK64) ^ (row & MASK64))
    if attempt:
        seed = splitmix64(seed ^ ((attempt * ATTEMPT_SALT) & MASK64))
    return seed


def derive(seed: int, salt: int) -> int:
    return splitmix64((seed ^ salt) & MASK64)


def random_bits(seed: int, n: int) -> np.ndarray:
    """First ``n`` bits of the stream seeded by ``seed`` as a uint8 array.

    Streams are prefix-consistent: ``random_bits(s, n)`` is a prefix of
    ``random_bits(s, m)`` for ``n <= m``.
    """
    if n <= 0:
        return np.zeros(0, dtype=np.uint8)
    words = np.random.PCG64(seed & MASK64).random_raw((n + 63) // 64)
    bits = np.unpackbits(words.astype("<u8").view(np.uint8), bitorder="little")
    return bits[:n]
