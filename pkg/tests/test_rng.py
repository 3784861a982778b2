import numpy as np
import pytest

from mdensity.rng import ChainNoise, mix64, stream


def test_streams_are_reproducible_and_distinct():
    assert np.array_equal(stream(1, 2).standard_normal(5), stream(1, 2).standard_normal(5))
    assert not np.array_equal(stream(1, 2).standard_normal(5), stream(1, 3).standard_normal(5))
    assert not np.array_equal(stream(1, 2).standard_normal(5), stream(2, 2).standard_normal(5))
    assert mix64(0, 1) != mix64(1, 0)


def test_chain_draws_do_not_depend_on_batch():
    wide = ChainNoise(9, np.arange(6), block=4)
    narrow = ChainNoise(9, [3], block=4)
    for _ in range(10):
        a = wide.standard_normal((6, 2, 3))
        b = narrow.standard_normal((1, 2, 3))
        assert np.array_equal(a[3], b[0])


def test_subset_keeps_survivor_streams():
    full = ChainNoise(4, np.arange(5), block=3)
    ref = ChainNoise(4, np.arange(5), block=3)
    for _ in range(2):
        full.standard_normal((5, 2))
        ref.standard_normal((5, 2))
    keep = np.array([True, False, True, False, True])
    sub = full.subset(keep)
    for _ in range(5):
        np.testing.assert_array_equal(sub.standard_normal((3, 2)), ref.standard_normal((5, 2))[keep])


def test_uniform_counting_and_range():
    noise = ChainNoise(0, np.arange(4), block=2)
    draws = np.stack([noise.random(4) for _ in range(5)])
    assert noise.n_uniform_calls == 5
    assert draws.min() >= 0 and draws.max() < 1
    with pytest.raises(ValueError):
        noise.random((4, 2))


def test_leading_dimension_checked():
    noise = ChainNoise(0, np.arange(3))
    with pytest.raises(ValueError):
        noise.standard_normal((2, 5))


def test_draws_are_standard_normal():
    noise = ChainNoise(11, np.arange(50))
    z = np.concatenate([noise.standard_normal((50, 4)).ravel() for _ in range(500)])
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01
