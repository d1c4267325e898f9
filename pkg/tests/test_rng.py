"""Generator tests: reference vectors, stream independence, distribution
sanity, and the shuffle/below primitives."""

import numpy as np
import pytest

from almondnet.rng import Rng, splitmix64

# Published outputs of splitmix64 stepped from state 0.
SPLITMIX_FROM_ZERO = (
    0xE220A8397B1DCDAF,
    0x6E789E6AA1B965F4,
    0x06C45D188009454F,
    0xF88BB8A8724C81EC,
    0x1B39896A51A8749B,
)

# First draws for fixed seeds, frozen when the generator was written.
FIRST_DRAWS = {
    0: (0x99EC5F36CB75F2B4, 0xBF6E1F784956452A, 0x1A5F849D4933E6E0, 0x6AA594F1262D2D2C),
    42: (0x15780B2E0C2EC716, 0x6104D9866D113A7E, 0xAE17533239E499A1, 0xECB8AD4703B360A1),
    12345: (0xBE6A36374160D49B, 0x214AAA0637A688C6, 0xF69D16DE9954D388, 0x0C60048C4E96E033),
}


def test_splitmix64_reference_vectors():
    state = 0
    for expected in SPLITMIX_FROM_ZERO:
        state, out = splitmix64(state)
        assert out == expected


def test_first_draws_frozen():
    for seed, expected in FIRST_DRAWS.items():
        g = Rng(seed)
        assert tuple(g.next_u64() for _ in range(4)) == expected


def test_matches_independent_reimplementation():
    # Same algorithm, written again from its published recurrence.
    mask = (1 << 64) - 1

    def rotl(x, k):
        return ((x << k) | (x >> (64 - k))) & mask

    g = Rng(2024)
    state = list(Rng(2024)._s)
    for _ in range(500):
        result = (rotl((state[1] * 5) & mask, 7) * 9) & mask
        t = (state[1] << 17) & mask
        state[2] ^= state[0]
        state[3] ^= state[1]
        state[1] ^= state[2]
        state[0] ^= state[3]
        state[2] ^= t
        state[3] = rotl(state[3], 45)
        assert g.next_u64() == result


def test_same_seed_same_stream():
    a = [Rng(7).next_u64() for _ in range(50)]
    b = [Rng(7).next_u64() for _ in range(50)]
    assert a == b


def test_derive_is_deterministic_and_independent():
    parent = Rng(99)
    child1 = parent.derive(1)
    child2 = parent.derive(2)
    again = Rng(99).derive(1)
    s1 = [child1.next_u64() for _ in range(20)]
    s2 = [child2.next_u64() for _ in range(20)]
    assert s1 == [again.next_u64() for _ in range(20)]
    assert s1 != s2
    # Deriving does not advance or disturb the parent stream.
    assert parent.next_u64() == Rng(99).next_u64()


def test_derive_multiple_words_order_sensitive():
    assert Rng(5).derive(1, 2).next_u64() != Rng(5).derive(2, 1).next_u64()


def test_random_unit_interval():
    g = Rng(11)
    draws = [g.random() for _ in range(10000)]
    assert all(0.0 <= d < 1.0 for d in draws)
    assert abs(np.mean(draws) - 0.5) < 0.02
    assert abs(np.var(draws) - 1.0 / 12.0) < 0.005


def test_uniform_bounds():
    g = Rng(13)
    draws = g.uniform_array(5000, -3.0, 7.0)
    assert min(draws) >= -3.0 and max(draws) < 7.0
    assert abs(np.mean(draws) - 2.0) < 0.15


def test_below_covers_range_and_rejects_bad_bound():
    g = Rng(17)
    seen = {g.below(6) for _ in range(2000)}
    assert seen == {0, 1, 2, 3, 4, 5}
    with pytest.raises(ValueError):
        g.below(0)


def test_below_one_is_always_zero():
    g = Rng(23)
    assert all(g.below(1) == 0 for _ in range(100))


def test_randrange():
    g = Rng(29)
    draws = [g.randrange(10, 15) for _ in range(1000)]
    assert set(draws) == {10, 11, 12, 13, 14}


def test_normal_moments():
    g = Rng(31)
    draws = g.normal_array(40000)
    assert abs(np.mean(draws)) < 0.02
    assert abs(np.std(draws) - 1.0) < 0.02
    # Box-Muller pair caching must not break determinism.
    assert Rng(31).normal_array(5) == Rng(31).normal_array(5)


def test_shuffle_is_permutation_and_seed_dependent():
    items = list(range(100))
    a = items.copy()
    Rng(3).shuffle(a)
    b = items.copy()
    Rng(3).shuffle(b)
    c = items.copy()
    Rng(4).shuffle(c)
    assert a == b
    assert a != c
    assert sorted(a) == items and sorted(c) == items


def test_shuffle_handles_tiny_lists():
    empty: list[int] = []
    Rng(1).shuffle(empty)
    assert empty == []
    single = [42]
    Rng(1).shuffle(single)
    assert single == [42]
