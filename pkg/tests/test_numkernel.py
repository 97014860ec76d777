"""
Tests for the dense linear algebra kernel
"""
import numpy as np
import pytest

from app.core.errors import InvalidInput, NotHermitian, NotPositiveDefinite
from app.services.numkernel import (
    SubspaceBasis,
    as_matrix,
    cholesky,
    decays_to_zero,
    decode_matrix,
    encode_matrix,
    gap_delta,
    gap_hat,
    hermitian_eig,
    intersect,
    min_eigenvalue,
    orth_complement,
    orthonormalize,
    projector,
    svd_rank,
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _span(*cols, tol=1e-10):
    return orthonormalize(np.column_stack(cols).astype(complex), tol)


def _complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestSvdRank:
    """Rank decisions and range/null splits"""

    def test_rank_of_known_matrix(self):
        """Rank-2 product of thin factors is detected"""
        A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]) @ np.array([[1.0, 2.0, 3.0], [0.0, 1.0, 1.0]])
        res = svd_rank(A, 1e-10)
        assert res.rank == 2
        assert res.range.dim == 2
        assert res.nullspace.dim == 1
        assert np.allclose(A @ res.nullspace.basis, 0.0, atol=1e-12)

    def test_relative_threshold_for_large_matrices(self):
        """Singular values below tol·σ_max are dropped even when σ_max is huge"""
        A = np.diag([1e12, 1.0])
        assert svd_rank(A, 1e-10).rank == 1
        assert svd_rank(A, 1e-14).rank == 2

    def test_absolute_threshold_below_unit_scale(self):
        """Below unit scale the threshold is tol itself"""
        assert svd_rank(np.diag([1e-3, 1e-11]), 1e-10).rank == 1

    def test_rank_of_all_ones(self):
        assert svd_rank([[1.0, 1.0], [1.0, 1.0]]).rank == 1
        assert svd_rank([[1.0, 1.0], [1.0, 1.0]], 1e-10).rank == 1

    def test_empty_matrix(self):
        """Empty input has rank 0 and full null space"""
        res = svd_rank(np.zeros((0, 3)), 1e-10)
        assert res.rank == 0
        assert res.nullspace.dim == 3

    def test_negative_tol_rejected(self):
        with pytest.raises(InvalidInput):
            svd_rank(np.eye(2), -1.0)

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInput):
            as_matrix([[np.nan, 1.0]])


class TestSubspaces:
    """Intersections, complements and gaps"""

    def test_intersection_of_planes(self):
        """Two planes in ℂ³ meet in a line"""
        U = _span([1, 0, 0], [0, 1, 0])
        W = _span([0, 1, 0], [0, 0, 1])
        common = intersect(U, W)
        assert common.dim == 1
        assert abs(abs(common.basis[1, 0]) - 1.0) < 1e-12

    def test_nearly_parallel_lines_do_not_intersect(self):
        """An angle far above the tolerance keeps lines apart"""
        eps = 1e-7
        U = _span([1, 0])
        W = _span([1, eps])
        assert intersect(U, W).dim == 0

    def test_complement_dimensions(self, rng):
        U = orthonormalize(rng.standard_normal((6, 2)) + 1j * rng.standard_normal((6, 2)), 1e-10)
        C = orth_complement(U)
        assert C.dim == 4
        assert np.allclose(U.basis.conj().T @ C.basis, 0.0, atol=1e-12)

    def test_complement_of_zero_and_full(self):
        assert orth_complement(SubspaceBasis.zero(3)).dim == 3
        assert orth_complement(SubspaceBasis.full(3)).dim == 0

    def test_gap_is_sine_of_angle(self):
        """For lines δ = |sin θ|"""
        theta = 0.3
        U = _span([1, 0])
        W = _span([np.cos(theta), np.sin(theta)])
        assert gap_delta(U, W) == pytest.approx(np.sin(theta), abs=1e-12)
        assert gap_hat(U, W) == pytest.approx(np.sin(theta), abs=1e-12)

    def test_gap_one_sided_for_nested_spaces(self):
        """δ(line, plane) = 0 while δ(plane, line) = 1"""
        line = _span([1, 0, 0])
        plane = _span([1, 0, 0], [0, 1, 0])
        assert gap_delta(line, plane) == pytest.approx(0.0, abs=1e-14)
        assert gap_delta(plane, line) == pytest.approx(1.0, abs=1e-12)

    def test_projector_is_idempotent(self, rng):
        U = orthonormalize(rng.standard_normal((5, 3)), 1e-10)
        P = projector(U)
        assert np.allclose(P @ P, P, atol=1e-12)

    @pytest.mark.parametrize("n", [2, 7, 20, 50])
    def test_projector_hermitian_and_idempotent(self, rng, n):
        k = int(rng.integers(1, n + 1))
        U = orthonormalize(_complex(rng, (n, k)), 1e-10)
        P = projector(U)
        assert np.allclose(P, P.conj().T, atol=1e-12)
        assert np.allclose(P @ P, P, atol=1e-12)

    def test_gap_between_zero_and_line(self):
        line = _span([1, 1])
        zero = SubspaceBasis.zero(2)
        assert gap_hat(zero, line) == pytest.approx(1.0, abs=1e-12)
        assert gap_hat(line, zero) == pytest.approx(1.0, abs=1e-12)

    def test_gap_symmetric_for_equal_dimensions(self, rng):
        """δ(M,N) = δ(N,M) = ‖P_M − P_N‖ when dim M = dim N"""
        for _ in range(50):
            n = int(rng.integers(2, 10))
            k = int(rng.integers(1, n))
            M = orthonormalize(_complex(rng, (n, k)), 1e-10)
            N = orthonormalize(_complex(rng, (n, k)), 1e-10)
            d = gap_delta(M, N)
            assert d == pytest.approx(gap_delta(N, M), abs=1e-12)
            assert d == pytest.approx(np.linalg.norm(projector(M) - projector(N), 2), abs=1e-10)

    def test_gap_range_and_nesting(self, rng):
        """δ lies in [0, 1] and vanishes exactly on nested pairs"""
        for _ in range(50):
            n = int(rng.integers(3, 10))
            k = int(rng.integers(1, n - 1))
            B = _complex(rng, (n, k + 1))
            small = orthonormalize(B[:, :k], 1e-10)
            big = orthonormalize(B, 1e-10)
            other = orthonormalize(_complex(rng, (n, k)), 1e-10)
            assert gap_delta(small, big) < 1e-12
            assert gap_delta(big, small) == pytest.approx(1.0, abs=1e-12)
            d = gap_delta(other, big)
            assert 1e-6 < d <= 1.0


class TestHermitian:
    """Eigenvalues and factorizations"""

    def test_hermitian_eig_sorted(self):
        eig = hermitian_eig(np.diag([3.0, -1.0, 2.0]))
        assert list(eig.eigenvalues) == pytest.approx([-1.0, 2.0, 3.0])

    def test_non_hermitian_rejected(self):
        with pytest.raises(NotHermitian):
            hermitian_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_min_eigenvalue_uses_hermitian_part(self):
        """Re-part of [[0,1],[0,0]] has eigenvalues ±1/2"""
        assert min_eigenvalue(np.array([[0.0, 1.0], [0.0, 0.0]])) == pytest.approx(-0.5)

    def test_min_eigenvalue_empty_is_inf(self):
        assert min_eigenvalue(np.zeros((0, 0))) == float("inf")

    def test_cholesky_reproduces_matrix(self, rng):
        B = rng.standard_normal((4, 4))
        G = B @ B.T + 4 * np.eye(4)
        L = cholesky(G)
        assert np.allclose(L @ L.T, G, atol=1e-12)

    @pytest.mark.parametrize("n", [1, 10, 50, 200])
    def test_cholesky_reconstructs_hermitian(self, rng, n):
        B = _complex(rng, (n, n))
        G = B @ B.conj().T + n * np.eye(n)
        L = cholesky(G)
        assert np.allclose(np.triu(L, 1), 0.0)
        assert np.linalg.norm(L @ L.conj().T - G, 2) <= 1e-12 * np.linalg.norm(G, 2)

    def test_cholesky_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky(np.diag([1.0, -1.0]))


class TestDecaysToZero:
    """Finite-sequence surrogate for convergence"""

    @pytest.mark.parametrize(
        "errors, expected",
        [
            ([1.0, 0.5, 0.25, 0.125, 0.0625], True),
            ([1.0, 1.0, 1.0, 1.0], False),
            ([1.0, 0.01, 0.02, 0.05], False),
            ([1.0, 0.5, 0.09, 0.09], False),
            ([1.0, 0.5, 0.2, 0.09, 0.0899, 0.0899], False),
            ([1.0, 0.5, 0.3, 0.2, 0.1, 0.05], True),
            ([0.3, 0.2, 1e-12], True),
            ([1.0, float("inf")], False),
            ([], True),
        ],
    )
    def test_schedules(self, errors, expected):
        assert decays_to_zero(errors, 1e-8, 0.1) is expected


class TestEncoding:
    """[re, im] pair encoding"""

    def test_complex_entries(self):
        A = np.array([[1 + 2j, 0], [3, -1j]])
        encoded = encode_matrix(A)
        assert encoded[0][0] == [1.0, 2.0]
        assert np.array_equal(decode_matrix(encoded), A)

    def test_empty_rows_need_width(self):
        assert decode_matrix([], 3).shape == (0, 3)

    def test_malformed_rejected(self):
        with pytest.raises(InvalidInput):
            decode_matrix([[1.0, 2.0]])
