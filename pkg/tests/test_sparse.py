import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homf.sparse import (
    ConstructionError,
    from_arrays,
    from_dense,
    from_triplets,
    identity,
    row_normalize,
    spectral_norm,
    spmv,
    spmv_transpose,
    transpose,
)

from conftest import random_stochastic


class TestFromTriplets:
    def test_layout(self):
        A = from_triplets([(0, 1, 2.0), (1, 0, 3.0)], 2, 2)
        np.testing.assert_array_equal(A.to_dense(), [[0, 2], [3, 0]])
        A.check()

    def test_duplicates_summed(self):
        A = from_triplets([(0, 0, 1.0), (0, 0, 2.0)], 1, 1)
        np.testing.assert_array_equal(A.to_dense(), [[3.0]])
        assert A.nnz == 1

    def test_column_out_of_range(self):
        with pytest.raises(ConstructionError, match="column index 2 ≥ 2"):
            from_triplets([(0, 2, 1.0)], 1, 2)

    def test_row_out_of_range(self):
        with pytest.raises(ConstructionError, match="row index 5"):
            from_triplets([(5, 0, 1.0)], 2, 2)

    def test_nonfinite_rejected(self):
        with pytest.raises(ConstructionError):
            from_triplets([(0, 0, float("nan"))], 1, 1)

    def test_sorted_canonical(self):
        A = from_triplets([(1, 2, 1.0), (0, 3, 1.0), (1, 0, 1.0), (0, 1, 1.0)], 2, 4)
        np.testing.assert_array_equal(A.row_offsets, [0, 2, 4])
        np.testing.assert_array_equal(A.col_indices, [1, 3, 0, 2])

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(
            st.tuples(st.integers(0, 5), st.integers(0, 6), st.integers(1, 9).map(float)),
            max_size=40,
        )
    )
    def test_round_trip(self, entries):
        A = from_triplets(entries, 6, 7)
        A.check()
        expected = {}
        for r, c, v in entries:
            expected[(r, c)] = expected.get((r, c), 0.0) + v
        got = {(r, c): v for r, c, v in A.iter_triplets()}
        assert got == expected


class TestSpmv:
    def test_permutation(self):
        A = from_dense([[0, 1], [1, 0]])
        np.testing.assert_array_equal(spmv(A, [3, 5]), [5, 3])

    def test_identity(self):
        np.testing.assert_array_equal(spmv(identity(3), [1, 2, 3]), [1, 2, 3])

    def test_hand_product(self):
        A = from_dense([[0.5, 0.5], [0, 1]])
        np.testing.assert_array_equal(spmv(A, [2, 4]), [3, 4])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            spmv(identity(3), [1, 2])

    def test_empty_rows(self):
        A = from_triplets([(2, 0, 1.0)], 4, 2)
        np.testing.assert_array_equal(spmv(A, [7, 1]), [0, 0, 7, 0])


class TestSpmvTranspose:
    def test_single_entry(self):
        A = from_dense([[0, 1], [0, 0]])
        np.testing.assert_array_equal(spmv_transpose(A, [1, 1]), [0, 1])

    def test_symmetric(self, rng):
        D = rng.random((6, 6))
        A = from_dense(D + D.T)
        x = rng.random(6)
        np.testing.assert_allclose(spmv_transpose(A, x), spmv(A, x), rtol=0, atol=1e-14)

    def test_dense_oracle(self, rng):
        D = rng.random((5, 4)) * (rng.random((5, 4)) < 0.5)
        x = rng.random(5)
        np.testing.assert_allclose(spmv_transpose(from_dense(D), x), D.T @ x, rtol=0, atol=1e-12)

    def test_matches_materialized_transpose_bitwise(self, rng):
        for _ in range(20):
            A = random_stochastic(rng, int(rng.integers(5, 60)), 0.2)
            x = rng.random(A.n_rows)
            np.testing.assert_array_equal(spmv_transpose(A, x), spmv(transpose(A), x))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            spmv_transpose(from_triplets([], 2, 3), [1, 2, 3])


class TestRowNormalize:
    def test_division(self):
        np.testing.assert_array_equal(row_normalize(from_dense([[2, 2], [0, 4]])).to_dense(), [[0.5, 0.5], [0, 1]])

    def test_zero_row_self_loop(self):
        np.testing.assert_array_equal(row_normalize(from_dense([[0, 0], [1, 1]])).to_dense(), [[1, 0], [0.5, 0.5]])

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            row_normalize(from_dense([[1, -1], [1, 1]]))

    def test_stored_zero_row_gets_self_loop(self):
        G = from_triplets([(0, 1, 0.0), (1, 0, 2.0)], 2, 2)
        np.testing.assert_array_equal(row_normalize(G).to_dense(), [[1, 0], [1, 0]])

    def test_rows_sum_to_one(self, rng):
        for _ in range(20):
            A = random_stochastic(rng, int(rng.integers(2, 80)), float(rng.uniform(0.01, 0.3)))
            np.testing.assert_allclose(A.row_sums(), 1.0, rtol=0, atol=1e-12)
            A.check()


class TestTranspose:
    def test_dense(self, rng):
        D = rng.random((7, 3)) * (rng.random((7, 3)) < 0.4)
        At = transpose(from_dense(D))
        At.check()
        np.testing.assert_array_equal(At.to_dense(), D.T)

    def test_cached(self):
        A = identity(3)
        assert A.T is A.T


def test_spectral_norm_of_stochastic_at_least_one(rng):
    for _ in range(10):
        A = random_stochastic(rng, 40, 0.1)
        sigma = spectral_norm(A)
        assert sigma >= 1 - 1e-9
        assert sigma == pytest.approx(np.linalg.norm(A.to_dense(), 2), rel=1e-8)


def test_from_arrays_length_mismatch():
    with pytest.raises(ConstructionError):
        from_arrays([0, 1], [0], [1.0], 2, 2)
