import numpy as np
import pytest

from stpn import tensor_ops as T


def test_mode_product_identity_time():
    x = np.arange(6, dtype=float).reshape(2, 3, 1)
    out = T.mode_product(x, np.eye(3), "time")
    np.testing.assert_array_equal(out, x)


def test_mode_product_time_summation():
    # columns of ones sum the time axis
    x = np.zeros((2, 2, 1))
    x[0, :, 0] = (1, 2)
    x[1, :, 0] = (3, 4)
    out = T.mode_product(x, np.ones((2, 1)), "time")
    assert out.shape == (2, 1, 1)
    np.testing.assert_allclose(out[:, 0, 0], [3, 7])


def test_mode_product_shape_error_names_extents():
    x = np.zeros((2, 3, 1))
    with pytest.raises(ValueError, match="3.*4|4.*3"):
        T.mode_product(x, np.zeros((4, 2)), "time")


def test_mode_product_matches_kron_oracle():
    rng = np.random.default_rng(0)
    a_s = rng.normal(size=(3, 3))
    a_t = rng.normal(size=(2, 2))
    x = rng.normal(size=(3, 2, 1))
    left = T.vec(T.mode_product(T.mode_product(x, a_s, "space"), a_t, "time"))
    right = T.kronecker(a_s, a_t).T @ T.vec(x)
    np.testing.assert_allclose(left, right, atol=1e-10)


def test_mode_products_commute_across_modes():
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = rng.normal(size=(4, 3, 2))
        a = rng.normal(size=(4, 5))
        b = rng.normal(size=(3, 2))
        one = T.mode_product(T.mode_product(x, a, "space"), b, "time")
        two = T.mode_product(T.mode_product(x, b, "time"), a, "space")
        np.testing.assert_allclose(one, two, atol=1e-12)


def test_mode_product_identity_exact_all_modes():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 3, 2))
    for mode, n in (("space", 4), ("time", 3), ("feature", 2)):
        np.testing.assert_array_equal(T.mode_product(x, np.eye(n), mode), x)


def test_kronecker_identity():
    np.testing.assert_array_equal(T.kronecker(np.eye(2), np.eye(2)), np.eye(4))


def test_kronecker_blockwise_hand_example():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[0.0, 1.0], [1.0, 0.0]])
    expected = np.array(
        [
            [0, 1, 0, 2],
            [1, 0, 2, 0],
            [0, 3, 0, 4],
            [3, 0, 4, 0],
        ],
        dtype=float,
    )
    np.testing.assert_array_equal(T.kronecker(a, b), expected)


def test_kronecker_scalar_scaling():
    b = np.arange(6, dtype=float).reshape(2, 3)
    np.testing.assert_array_equal(T.kronecker(np.array([[2.5]]), b), 2.5 * b)


def test_kronecker_mixed_product_on_vectors():
    # (A (x) B) vec(X) == vec of applying B then A via reshaping
    rng = np.random.default_rng(11)
    for _ in range(10):
        a = rng.normal(size=(3, 3))
        b = rng.normal(size=(2, 2))
        x = rng.normal(size=(3, 2))
        left = T.kronecker(a, b) @ x.reshape(-1)
        right = (a @ x @ b.T).reshape(-1)
        np.testing.assert_allclose(left, right, atol=1e-12)


def test_unfold_trivial_and_roundtrip():
    one = np.array([[[3.25]]])
    assert T.unfold(one).shape == (1, 1)
    assert T.unfold(one)[0, 0] == 3.25

    rng = np.random.default_rng(5)
    x = rng.normal(size=(4, 3, 2))
    back = T.refold(T.unfold(x), (4, 3, 2))
    np.testing.assert_array_equal(back, x)


def test_unfold_consistent_with_kron_oracle_multi_channel():
    rng = np.random.default_rng(9)
    for _ in range(20):
        n, t, c = rng.integers(1, 6, size=3)
        x = rng.normal(size=(n, t, c))
        a_s = rng.normal(size=(n, n))
        a_t = rng.normal(size=(t, t))
        left = T.unfold(T.mode_product(T.mode_product(x, a_s, "space"), a_t, "time"))
        right = T.kronecker(a_s, a_t).T @ T.unfold(x)
        np.testing.assert_allclose(left, right, atol=1e-10)


def test_nonfinite_rejected():
    x = np.zeros((2, 2, 1))
    x[0, 0, 0] = np.inf
    with pytest.raises(FloatingPointError):
        T.mode_product(x, np.ones((2, 2)), "space")
