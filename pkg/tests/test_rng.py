import numpy as np

from defocuskit.rng import Rng


def test_same_seed_same_stream():
    a = Rng(42).random(16)
    b = Rng(42).random(16)
    assert np.array_equal(a, b)


def test_different_seeds_differ():
    assert not np.array_equal(Rng(1).random(16), Rng(2).random(16))


def test_child_streams_are_deterministic_and_named():
    a = Rng(7).child("datagen").random(8)
    b = Rng(7).child("datagen").random(8)
    c = Rng(7).child("training").random(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_child_streams_independent_of_draw_order():
    # drawing from one child does not shift a sibling's stream
    root = Rng(7)
    first = root.child("a").random(4)
    root.child("b").random(100)
    again = Rng(7).child("a").random(4)
    assert np.array_equal(first, again)


def test_passthrough_methods():
    rng = Rng(5)
    assert rng.integers(0, 10, 4).shape == (4,)
    assert rng.permutation(6).shape == (6,)
    assert rng.normal(size=3).shape == (3,)
    assert 0.0 <= rng.uniform() <= 1.0
    assert rng.choice([1, 2, 3]) in (1, 2, 3)
