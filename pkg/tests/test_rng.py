"""Counter-based random streams.

The reference generator below is an independent pure-Python rewrite of
the splitmix64 counter scheme; the tests check the vectorized stream
against it word for word, then the distribution helpers for range,
shape, and determinism.
"""

import numpy as np
import pytest

from fadel.rng import RngStream

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def ref_mix64(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def ref_fnv1a(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & MASK
    return h


def ref_token(token) -> int:
    if isinstance(token, str):
        return ref_fnv1a(token)
    return ref_mix64((int(token) & MASK) + GOLDEN)


def ref_key(seed: int, path=()) -> int:
    key = ref_mix64(seed & MASK)
    for token in path:
        key = ref_mix64(((key + GOLDEN) & MASK) ^ ref_token(token))
    return key


def ref_outputs(key: int, n: int):
    return [ref_mix64((key + GOLDEN * i) & MASK) for i in range(1, n + 1)]


class TestRawStream:
    def test_matches_reference_generator(self):
        stream = RngStream(1234)
        got = stream.raw(16)
        expected = ref_outputs(ref_key(1234), 16)
        np.testing.assert_array_equal(got, np.array(expected, dtype=np.uint64))

    def test_counter_continues_across_calls(self):
        stream = RngStream(99)
        first = stream.raw(5)
        second = stream.raw(5)
        joined = np.concatenate([first, second])
        np.testing.assert_array_equal(
            joined, np.array(ref_outputs(ref_key(99), 10), dtype=np.uint64)
        )

    def test_scalar_raw(self):
        stream = RngStream(7)
        assert stream.raw() == ref_outputs(ref_key(7), 1)[0]

    def test_derive_matches_reference(self):
        stream = RngStream(42).derive("train", 3)
        expected_key = ref_key(42, ("train", 3))
        np.testing.assert_array_equal(
            stream.raw(8), np.array(ref_outputs(expected_key, 8), dtype=np.uint64)
        )

    def test_seed_must_be_integer(self):
        with pytest.raises(TypeError):
            RngStream(1.5)
        with pytest.raises(TypeError):
            RngStream("seed")


class TestDerivation:
    def test_same_path_same_stream(self):
        a = RngStream(5).derive("x", 1).raw(4)
        b = RngStream(5).derive("x", 1).raw(4)
        np.testing.assert_array_equal(a, b)

    def test_token_order_matters(self):
        a = RngStream(5).derive("a", 1).raw(4)
        b = RngStream(5).derive(1, "a").raw(4)
        assert not np.array_equal(a, b)

    def test_child_does_not_advance_parent(self):
        parent = RngStream(8)
        before = RngStream(8).raw(4)
        parent.derive("child").raw(100)
        np.testing.assert_array_equal(parent.raw(4), before)

    def test_nested_equals_flat(self):
        a = RngStream(9).derive("a").derive("b").raw(4)
        b = RngStream(9).derive("a", "b").raw(4)
        np.testing.assert_array_equal(a, b)

    def test_empty_derive_rejected(self):
        with pytest.raises(ValueError):
            RngStream(1).derive()

    def test_bad_token_type(self):
        with pytest.raises(TypeError):
            RngStream(1).derive(2.5)


class TestDistributions:
    def test_uniform_range_and_shape(self):
        stream = RngStream(17).derive("u")
        draws = stream.uniform(-2.0, 3.0, size=10_000)
        assert draws.shape == (10_000,)
        assert draws.min() >= -2.0
        assert draws.max() < 3.0
        assert abs(draws.mean() - 0.5) < 0.05

    def test_uniform_scalar(self):
        value = RngStream(17).derive("u").uniform()
        assert isinstance(value, float)
        assert 0.0 <= value < 1.0

    def test_open_unit_excludes_endpoints(self):
        draws = RngStream(18).derive("o").open_unit(100_000)
        assert draws.min() > 0.0
        assert draws.max() < 1.0

    def test_normal_moments(self):
        draws = RngStream(19).derive("n").normal(size=200_000)
        assert abs(draws.mean()) < 0.01
        assert abs(draws.std() - 1.0) < 0.01

    def test_normal_shape(self):
        draws = RngStream(19).normal(size=(3, 5))
        assert draws.shape == (3, 5)

    def test_integers_bounds(self):
        draws = RngStream(20).derive("i").integers(7, size=20_000)
        assert draws.min() >= 0
        assert draws.max() <= 6
        assert set(np.unique(draws)) == set(range(7))

    def test_integers_scalar_and_validation(self):
        val = RngStream(20).integers(1)
        assert val == 0
        with pytest.raises(ValueError):
            RngStream(20).integers(0)

    def test_permutation_is_valid(self):
        perm = RngStream(21).derive("p").permutation(128)
        np.testing.assert_array_equal(np.sort(perm), np.arange(128))

    def test_permutation_zero(self):
        assert RngStream(21).permutation(0).size == 0

    def test_permutation_deterministic(self):
        a = RngStream(22).derive("p", 4).permutation(50)
        b = RngStream(22).derive("p", 4).permutation(50)
        np.testing.assert_array_equal(a, b)

    def test_choice(self):
        options = ["a", "b", "c"]
        picks = {RngStream(i).choice(options) for i in range(50)}
        assert picks == set(options)
        with pytest.raises(ValueError):
            RngStream(1).choice([])
