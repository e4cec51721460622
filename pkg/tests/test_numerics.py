import math

import numpy as np
import pytest

from fedmrl.numerics import (
    NonFiniteError,
    ShapeError,
    as_matrix,
    batch_cross_entropy,
    cross_entropy,
    derive_rng,
    finite_diff_gradient,
    make_rng,
    matmul,
    relative_error,
    sgd_step,
    softmax,
)


def naive_matmul(a, b):
    """Independent oracle: triple loop, no numpy linear algebra."""
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def test_as_matrix_coerces_nested_lists():
    m = as_matrix([[1, 2], [3, 4]])
    assert m.dtype == np.float64
    assert m.flags["C_CONTIGUOUS"]
    assert m.shape == (2, 2)


def test_as_matrix_rejects_1d():
    with pytest.raises(ShapeError):
        as_matrix([1.0, 2.0, 3.0])


def test_as_matrix_shape_checks():
    with pytest.raises(ShapeError):
        as_matrix([[1.0, 2.0]], rows=2)
    with pytest.raises(ShapeError):
        as_matrix([[1.0, 2.0]], cols=3)


def test_matmul_matches_triple_loop_oracle():
    rng = make_rng(7)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    got = matmul(a, b)
    want = naive_matmul(a, b)
    assert np.allclose(got, want, rtol=0, atol=1e-12)


def test_matmul_oracle_across_random_shapes():
    rng = make_rng(21)
    for _ in range(20):
        n, k, m = rng.integers(1, 7, size=3)
        a = rng.normal(size=(n, k))
        b = rng.normal(size=(k, m))
        assert np.allclose(matmul(a, b), naive_matmul(a, b), atol=1e-12)


def test_matmul_dimension_mismatch_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\) @ \(2, 2\)"):
        matmul(np.ones((2, 3)), np.ones((2, 2)))


def test_matmul_rejects_overflow_to_inf():
    big = np.full((1, 1), 1e308)
    with pytest.raises(NonFiniteError), np.errstate(over="ignore"):
        matmul(big, np.full((1, 1), 1e308))


def test_matmul_associativity_within_tolerance():
    rng = make_rng(3)
    for _ in range(10):
        a = rng.normal(size=(4, 5))
        b = rng.normal(size=(5, 6))
        c = rng.normal(size=(6, 3))
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        assert np.max(np.abs(left - right)) <= 1e-9


def test_softmax_rows_sum_to_one_and_survive_huge_logits():
    probs = softmax(np.array([[1000.0, 1000.0, -1000.0]]))
    assert math.isclose(probs.sum(), 1.0, rel_tol=1e-12)
    assert np.all(np.isfinite(probs))


def test_cross_entropy_uniform_two_class_is_ln2():
    loss, grad = cross_entropy(np.array([[0.0, 0.0]]), 0)
    assert math.isclose(loss, math.log(2.0), rel_tol=1e-12)
    assert np.allclose(grad, [[-0.5, 0.5]], atol=1e-12)


def test_cross_entropy_saturated_case_stays_positive_and_tiny():
    loss, _ = cross_entropy(np.array([[10.0, -10.0]]), 0)
    assert 0.0 < loss < 1e-8


def test_cross_entropy_label_out_of_range():
    with pytest.raises(ValueError):
        cross_entropy(np.array([[0.0, 0.0]]), 2)
    with pytest.raises(ValueError):
        cross_entropy(np.array([[0.0, 0.0]]), -1)


def test_cross_entropy_gradient_matches_finite_differences():
    rng = make_rng(11)
    for _ in range(5):
        logits = rng.normal(size=(1, 6))
        label = int(rng.integers(0, 6))
        _, grad = cross_entropy(logits, label)
        num = finite_diff_gradient(
            lambda v: cross_entropy(v.reshape(1, 6), label)[0], logits.ravel(), h=1e-6
        )
        assert relative_error(grad.ravel(), num).max() <= 1e-6


def test_cross_entropy_gradient_rows_sum_to_zero():
    rng = make_rng(13)
    for _ in range(20):
        n_classes = int(rng.integers(2, 9))
        logits = rng.normal(scale=3.0, size=(1, n_classes))
        label = int(rng.integers(0, n_classes))
        _, grad = cross_entropy(logits, label)
        assert abs(grad.sum()) <= 1e-10


def test_batch_cross_entropy_agrees_with_single_sample():
    rng = make_rng(17)
    logits = rng.normal(size=(4, 5))
    labels = rng.integers(0, 5, size=4)
    losses, grads = batch_cross_entropy(logits, labels)
    for i in range(4):
        loss_i, grad_i = cross_entropy(logits[i : i + 1], int(labels[i]))
        assert math.isclose(losses[i], loss_i, rel_tol=1e-12)
        assert np.allclose(grads[i], grad_i[0], atol=1e-12)


def test_batch_cross_entropy_validates_labels():
    with pytest.raises(ShapeError):
        batch_cross_entropy(np.zeros((2, 3)), np.array([0]))
    with pytest.raises(ValueError):
        batch_cross_entropy(np.zeros((2, 3)), np.array([0, 3]))


def test_sgd_step_is_by_value():
    params = np.ones((2, 2))
    grads = np.full((2, 2), 0.5)
    out = sgd_step(params, grads, 0.1)
    assert np.allclose(out, 0.95)
    assert np.allclose(params, 1.0)


def test_sgd_step_zero_lr_identity_and_negative_rejected():
    params = np.array([[1.0, -2.0]])
    grads = np.array([[3.0, 4.0]])
    assert np.array_equal(sgd_step(params, grads, 0.0), params)
    with pytest.raises(ValueError):
        sgd_step(params, grads, -0.1)
    with pytest.raises(ShapeError):
        sgd_step(params, np.ones((1, 3)), 0.1)


def test_finite_diff_gradient_on_quadratic():
    # f(x) = sum(x^2) has gradient 2x exactly up to O(h^2).
    x = np.array([1.0, -2.0, 0.5])
    num = finite_diff_gradient(lambda v: float((v**2).sum()), x)
    assert relative_error(num, 2.0 * x).max() <= 1e-8


def test_finite_diff_gradient_rejects_non_finite_objective():
    with pytest.raises(NonFiniteError):
        finite_diff_gradient(lambda v: float("nan"), np.array([1.0]))


def test_relative_error_uses_unit_floor():
    a = np.array([1e-9, 2.0])
    b = np.array([0.0, 1.0])
    err = relative_error(a, b)
    assert math.isclose(err[0], 1e-9, rel_tol=1e-9)
    assert math.isclose(err[1], 0.5, rel_tol=1e-12)


def test_seeded_rng_replays_bit_identical_streams():
    a = make_rng(123).normal(size=100)
    b = make_rng(123).normal(size=100)
    assert np.array_equal(a, b)


def test_derived_streams_are_distinct_but_reproducible():
    s1 = derive_rng(5, 1).normal(size=10)
    s1_again = derive_rng(5, 1).normal(size=10)
    s2 = derive_rng(5, 2).normal(size=10)
    assert np.array_equal(s1, s1_again)
    assert not np.array_equal(s1, s2)
