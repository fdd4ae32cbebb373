"""Tensor-train algebra against dense oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttflow.tt import TensorTrain, random_tt, round_with_error, zero_tt


def dense_eval(tt, feats):
    """Oracle: contract the fully materialized tensor with the feature
    vectors one mode at a time."""
    dense = tt.dense()
    out = dense
    for f in reversed(feats):
        out = out @ f
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def test_evaluate_matches_dense(rng):
    tt = random_tt((4, 3, 5), (2, 3), output_dim=3, rng=rng)
    feats = [rng.standard_normal(m) for m in (4, 3, 5)]
    got = tt.evaluate(feats)
    np.testing.assert_allclose(got, dense_eval(tt, feats), atol=1e-12)


def test_add_matches_dense(rng):
    a = random_tt((3, 4), (2,), output_dim=2, rng=rng)
    b = random_tt((3, 4), (3,), output_dim=2, rng=rng)
    np.testing.assert_allclose((a.add(b)).dense(), a.dense() + b.dense(),
                               atol=1e-12)


def test_scale_matches_dense(rng):
    a = random_tt((3, 4, 2), (2, 2), output_dim=1, rng=rng)
    np.testing.assert_allclose(a.scale(-2.5).dense(), -2.5 * a.dense(),
                               atol=1e-12)


def test_add_single_mode(rng):
    a = random_tt((5,), (), output_dim=3, rng=rng)
    b = random_tt((5,), (), output_dim=3, rng=rng)
    np.testing.assert_allclose(a.add(b).dense(), a.dense() + b.dense(),
                               atol=1e-14)


def test_orthogonalize_preserves_tensor(rng):
    tt = random_tt((4, 4, 4), (3, 3), output_dim=2, rng=rng)
    for direction in ("left", "right"):
        ortho = tt.orthogonalize(direction)
        np.testing.assert_allclose(ortho.dense(), tt.dense(), atol=1e-10)


def test_fro_norm(rng):
    tt = random_tt((3, 5, 2), (2, 4), output_dim=2, rng=rng)
    assert tt.fro_norm() == pytest.approx(np.linalg.norm(tt.dense()),
                                          rel=1e-12)


def test_round_exact_on_redundant_rank(rng):
    # pad an exact rank-2 tensor with zero rank channels, then round
    tt = random_tt((4, 4), (2,), output_dim=1, rng=rng)
    padded_core0 = np.concatenate(
        [tt.cores[0], np.zeros((1, 4, 3))], axis=2)
    padded_core1 = np.concatenate(
        [tt.cores[1], np.zeros((3, 4, 1))], axis=0)
    padded = TensorTrain([padded_core0, padded_core1])
    rounded = padded.round(1e-12, max_rank=10)
    assert rounded.ranks == (2,)
    np.testing.assert_allclose(rounded.dense(), tt.dense(), atol=1e-10)


def test_round_error_equals_discarded_singular_values(rng):
    tt = random_tt((6, 6, 6), (5, 5), output_dim=1, rng=rng)
    rounded, reported = round_with_error(tt, 0.2, max_rank=10)
    actual = np.linalg.norm(rounded.dense() - tt.dense())
    assert reported == pytest.approx(actual, abs=1e-10)


def test_round_respects_max_rank(rng):
    tt = random_tt((6, 6), (5,), output_dim=1, rng=rng)
    rounded = tt.round(0.0, max_rank=2)
    assert rounded.ranks == (2,)


def test_zero_tt():
    tt = zero_tt((3, 4, 5), output_dim=2)
    feats = [np.ones(3), np.ones(4), np.ones(5)]
    np.testing.assert_array_equal(tt.evaluate(feats), np.zeros(2))


def test_validation_rejects_mismatched_ranks(rng):
    cores = [rng.standard_normal((1, 3, 2)),
             rng.standard_normal((3, 3, 1))]  # 2 != 3 on the shared edge
    with pytest.raises(ValueError):
        TensorTrain(cores)


def test_validation_rejects_nonfinite(rng):
    core = rng.standard_normal((1, 3, 1))
    core[0, 1, 0] = np.inf
    with pytest.raises(ValueError):
        TensorTrain([core])


@given(st.integers(min_value=1, max_value=4),
       st.integers(min_value=1, max_value=4),
       st.integers(min_value=0, max_value=10_000))
@settings(max_examples=25, deadline=None)
def test_round_error_bound_property(order, rank, seed):
    """Rounding with relative tolerance eps keeps the dense error below
    eps times the norm (up to fp slack)."""
    rng = np.random.default_rng(seed)
    tt = random_tt((3,) * order, (rank,) * (order - 1), output_dim=2,
                   rng=rng)
    eps = 0.1
    rounded = tt.round(eps, max_rank=16)
    err = np.linalg.norm(rounded.dense() - tt.dense())
    assert err <= eps * tt.fro_norm() + 1e-12
