"""Determinism and distribution checks for the seeded generator."""

import math
from itertools import permutations

from sparseslide.rng import Rng, derive_seed, hash_bytes, splitmix64


def test_splitmix64_reference_vector():
    # first output for state 0, as published for the reference implementation
    state, out = splitmix64(0)
    assert out == 0xE220A8397B1DCDAF
    assert state == 0x9E3779B97F4A7C15


def test_stream_frozen():
    """First outputs are pinned so reseeding stays stable across releases."""
    assert [Rng(0).next_u64() for _ in range(1)] == [0x99EC5F36CB75F2B4]
    r = Rng(1)
    assert [r.next_u64() for _ in range(4)] == [
        0xB3F2AF6D0FC710C5,
        0x853B559647364CEA,
        0x92F89756082A4514,
        0x642E1C7BC266A3A7,
    ]


def test_same_seed_same_stream():
    a, b = Rng(12345), Rng(12345)
    assert [a.next_u64() for _ in range(100)] == [b.next_u64() for _ in range(100)]


def test_different_seeds_differ():
    a = [Rng(1).next_u64() for _ in range(8)]
    b = [Rng(2).next_u64() for _ in range(8)]
    assert a != b


def test_spawn_is_seed_xor_index():
    a = Rng(5).spawn(3)
    b = Rng(5 ^ 3)
    assert [a.next_u64() for _ in range(10)] == [b.next_u64() for _ in range(10)]


def test_random_unit_interval():
    r = Rng(9)
    values = [r.random() for _ in range(10_000)]
    assert all(0.0 <= v < 1.0 for v in values)
    # mean of U[0,1) over 10k draws: SE = 1/sqrt(12*10000) ~ 0.0029
    mean = sum(values) / len(values)
    assert abs(mean - 0.5) < 4 * (1 / math.sqrt(12 * len(values)))


def test_uniform_bounds():
    r = Rng(11)
    for _ in range(1000):
        v = r.uniform(-2.5, 7.5)
        assert -2.5 <= v < 7.5


def test_randbelow_range_and_balance():
    r = Rng(2)
    n = 3
    counts = [0] * n
    draws = 30_000
    for _ in range(draws):
        counts[r.randbelow(n)] += 1
    expected = draws / n
    se = math.sqrt(draws * (1 / n) * (1 - 1 / n))
    for c in counts:
        assert abs(c - expected) < 4 * se


def test_randint_inclusive():
    r = Rng(3)
    seen = {r.randint(4, 6) for _ in range(200)}
    assert seen == {4, 5, 6}


def test_shuffle_is_permutation():
    r = Rng(4)
    items = list(range(50))
    shuffled = items[:]
    r.shuffle(shuffled)
    assert sorted(shuffled) == items
    assert shuffled != items  # astronomically unlikely to be identity


def test_shuffle_uniformity_n3():
    """All 6 permutations of 3 items appear at the expected rate."""
    r = Rng(6)
    counts = {p: 0 for p in permutations(range(3))}
    draws = 60_000
    for _ in range(draws):
        items = [0, 1, 2]
        r.shuffle(items)
        counts[tuple(items)] += 1
    expected = draws / 6
    se = math.sqrt(draws * (1 / 6) * (5 / 6))
    for c in counts.values():
        assert abs(c - expected) < 4 * se


def test_choice():
    r = Rng(8)
    items = ["a", "b", "c"]
    assert {r.choice(items) for _ in range(100)} == set(items)


def test_hash_bytes_frozen():
    assert hash_bytes(b"") == 0xC3817C016BA4FF30
    assert hash_bytes(b"abc") == 0x29E32C04EC3F9C30


def test_derive_seed_frozen():
    """Derived seeds feed every scorer and trace; pin them."""
    assert derive_seed(1, "scorer") == 0x51EE81AC1E9964F7
    assert derive_seed(7, "slide_003", 12) == 0x4140A1FFE020A5A6


def test_derive_seed_sensitivity():
    assert derive_seed(1, "a") != derive_seed(1, "b")
    assert derive_seed(1, "a", 0) != derive_seed(1, 0, "a")
    assert derive_seed(1, "ab") != derive_seed(2, "ab")
    assert derive_seed(3, "x", 1) == derive_seed(3, "x", 1)
