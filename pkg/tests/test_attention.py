import math

import numpy as np
import pytest

from acanmt.attention import attend
from acanmt.autodiff import ShapeError, Tensor


def test_single_position_gets_all_weight():
    rng = np.random.default_rng(0)
    h = rng.normal(size=(1, 4))
    alpha, c = attend(Tensor(rng.normal(size=2)), Tensor(h), [True], Tensor(rng.normal(size=(2, 4))))
    np.testing.assert_array_equal(alpha.value, [1.0])
    np.testing.assert_allclose(c.value, h[0])


def test_zero_weights_give_uniform_attention():
    H = np.arange(12.0).reshape(3, 4)
    alpha, c = attend(Tensor(np.ones(2)), Tensor(H), [True] * 3, Tensor(np.zeros((2, 4))))
    np.testing.assert_allclose(alpha.value, [1 / 3] * 3)
    np.testing.assert_allclose(c.value, H.mean(axis=0))


def test_scores_zero_and_ln2():
    # s = 1, W_a = 1, keys 0 and ln 2
    H = np.array([[0.0], [math.log(2.0)]])
    alpha, _ = attend(Tensor([1.0]), Tensor(H), [True, True], Tensor([[1.0]]))
    np.testing.assert_allclose(alpha.value, [1 / 3, 2 / 3], rtol=1e-12)


def test_errors():
    with pytest.raises(ShapeError):
        attend(Tensor(np.ones(3)), Tensor(np.ones((2, 4))), [True, True], Tensor(np.ones((2, 4))))
    with pytest.raises(ValueError):
        attend(Tensor(np.ones(2)), Tensor(np.ones((2, 4))), [False, False], Tensor(np.ones((2, 4))))


def test_random_draw_invariants():
    rng = np.random.default_rng(7)
    for _ in range(200):
        B, n, H = 3, int(rng.integers(1, 9)), 3
        mask = rng.random((B, n)) < 0.7
        mask[:, 0] = True
        keys = rng.normal(size=(B, n, 2 * H))
        alpha, c = attend(Tensor(rng.normal(size=(B, H))), Tensor(keys), mask, Tensor(rng.normal(size=(H, 2 * H))))
        a = alpha.value
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)
        assert (a[~mask] < 1e-9).all()
        for b in range(B):
            real = keys[b][mask[b]]
            assert (c.value[b] >= real.min(axis=0) - 1e-12).all()
            assert (c.value[b] <= real.max(axis=0) + 1e-12).all()
