"""Seedable 64-bit PRNG used by every stochastic component.

The generator is splitmix64: a single 64-bit counter advanced by a fixed
odd constant, with a mixing finalizer.  It is implemented twice, here in
pure Python and again (identically) inside the compiled engine kernels,
so a run can be replayed bit-for-bit on either path.  Metadata written
next to every output records the generator id and the seed-derivation
formula below.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

PRNG_ID = "splitmix64"
SEED_DERIVATION = "run_seed = mix64((master + GOLDEN*(index+1)) mod 2^64)"


def mix64(x: int) -> int:
    """splitmix64 finalizer: avalanching bijection on 64-bit ints."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """Per-run seed for run `index` of an ensemble with the given master seed.

    Distinct indices give (with overwhelming probability) uncorrelated
    splitmix64 streams; the formula is fixed so ensembles replay exactly.
    """
    if index < 0:
        raise ValueError("run index must be nonnegative")
    return mix64((master_seed + GOLDEN * (index + 1)) & MASK64)


class SplitMix64:
    """Stateful splitmix64 stream.  Period 2^64; full 64-bit output."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        return z ^ (z >> 31)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) via mask rejection (no modulo bias).

        The engine kernels consume the stream with the same rejection
        pattern, which keeps Python and compiled replays identical.
        """
        if n <= 0:
            raise ValueError("n must be positive")
        mask = (1 << (n - 1).bit_length()) - 1
        while True:
            r = self.next_u64() & mask
            if r < n:
                return r

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53
