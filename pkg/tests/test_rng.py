"""Test rng.py"""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rng import MASK64, SplitMix64, Xoshiro256pp, derive_seed, splitmix64


def test_splitmix64_matches_reference_sequence():
    gen = SplitMix64(0)
    assert gen.next_u64() == 0xE220A8397B1DCDAF
    assert gen.next_u64() == 0x6E789E6AA1B965F4
    assert gen.next_u64() == 0x06C45D188009454F


def test_xoshiro_matches_reference_first_output():
    rng = Xoshiro256pp.from_state([1, 2, 3, 4])
    assert rng.next_u64() == 41943041


def test_derive_seed_xors_index_into_master():
    assert derive_seed(7, 3) == splitmix64(7 ^ 3)
    assert derive_seed(7, 0) != derive_seed(7, 1)


def test_from_state_rejects_all_zero_state():
    with pytest.raises(ValueError):
        Xoshiro256pp.from_state([0, 0, 0, 0])


def test_same_seed_gives_identical_streams():
    a, b = Xoshiro256pp(42), Xoshiro256pp(42)
    assert [a.next_u64() for _ in range(20)] == [b.next_u64() for _ in range(20)]


def test_jumped_stream_is_new_and_leaves_source_untouched():
    rng = Xoshiro256pp(9)
    state = list(rng.s)
    jumped = rng.jumped()
    assert rng.s == state
    assert jumped.seed == rng.seed
    assert [jumped.next_u64() for _ in range(4)] != [Xoshiro256pp(9).next_u64() for _ in range(4)]
    assert Xoshiro256pp(9).jumped().next_u64() == Xoshiro256pp(9).jumped().next_u64()


@given(st.integers(min_value=0, max_value=MASK64))
def test_uniform_stays_in_half_open_unit_interval(seed):
    rng = Xoshiro256pp(seed)
    for _ in range(20):
        u = rng.uniform()
        assert 0.0 <= u < 1.0


def test_normals_have_unit_moments():
    draws = Xoshiro256pp(2024).normals(100_000)
    assert abs(draws.mean()) < 0.02
    assert abs(draws.var() - 1.0) < 0.02
    assert np.all(np.isfinite(draws))


def test_normal_pairs_share_one_radius():
    rng = Xoshiro256pp(3)
    a, b = rng.normal(), rng.normal()
    check = Xoshiro256pp(3)
    u1 = 1.0 - check.uniform()
    check.uniform()
    assert math.isclose(a * a + b * b, -2.0 * math.log(u1), rel_tol=1e-12)


def test_below_covers_range():
    rng = Xoshiro256pp(11)
    seen = {rng.below(8) for _ in range(500)}
    assert seen == set(range(8))
    with pytest.raises(ValueError):
        rng.below(0)
