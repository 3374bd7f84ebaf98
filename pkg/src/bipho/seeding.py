"""Per-realization seed derivation.

Realizations are drawn in blocks of ``PHASE_BLOCK``: realization j is row
``j % PHASE_BLOCK`` of the standard-normal block produced by
``numpy.random.default_rng(derive_seed(master, j // PHASE_BLOCK))``. The numbers
of realization j depend only on (master, j), never on which worker runs it or
how the index range is chunked, so serial and threaded runs draw the same
numbers.
"""
from __future__ import annotations

PHASE_BLOCK = 256

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, j: int) -> int:
    """
    SplitMix64 finalizer over master + (j+1)·golden (mod 2^64).

    The finalizer is a bijection on 64-bit words, so distinct j under the same
    master (j < 2^64) always give distinct seeds.
    """
    x = (int(master) + (int(j) + 1) * _GOLDEN) & _MASK64
    return _splitmix64(x)
