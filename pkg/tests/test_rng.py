import numpy as np
import pytest

from achlioptas_lab import _kernels as _k
from achlioptas_lab.rng import MASK64, SplitMix64, derive_seed, mix64


def test_mix64_is_stable():
    # frozen reference values of the splitmix64 finalizer chain
    rng = SplitMix64(0)
    first = [rng.next_u64() for _ in range(3)]
    assert first == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_streams_match_compiled_kernel():
    st = np.array([12345], dtype=np.uint64)
    py = SplitMix64(12345)
    ks = [int(_k._next_u64(st)) for _ in range(100)]
    assert ks == [py.next_u64() for _ in range(100)]


def test_randint_matches_compiled_kernel():
    for n in (1, 2, 3, 7, 1000, 12345):
        st = np.array([99], dtype=np.uint64)
        py = SplitMix64(99)
        mask = _k._mask_for(n)
        got = [int(_k._randint(st, np.uint64(n), mask)) for _ in range(200)]
        want = [py.randint(n) for _ in range(200)]
        assert got == want
        assert all(0 <= x < n for x in got)


def test_randint_covers_range_without_bias_artifacts():
    rng = SplitMix64(7)
    draws = [rng.randint(6) for _ in range(60_000)]
    counts = np.bincount(draws, minlength=6)
    assert counts.min() > 9_000  # ~10k each, > 10 sigma guard


def test_derive_seed_distinct_and_replayable():
    seeds = [derive_seed(42, i) for i in range(1000)]
    assert len(set(seeds)) == 1000
    assert seeds == [derive_seed(42, i) for i in range(1000)]
    assert all(0 <= s <= MASK64 for s in seeds)
    with pytest.raises(ValueError):
        derive_seed(0, -1)


def test_random_unit_interval():
    rng = SplitMix64(3)
    xs = [rng.random() for _ in range(1000)]
    assert all(0.0 <= x < 1.0 for x in xs)
    assert abs(sum(xs) / len(xs) - 0.5) < 0.05


def test_mix64_avalanche():
    a = mix64(1)
    b = mix64(2)
    assert bin(a ^ b).count("1") > 16
