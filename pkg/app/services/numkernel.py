"""
Dense complex linear algebra and subspace geometry.

Every rank decision in the package goes through ``svd_rank`` so that one
tolerance policy governs all dimension counts (dim W(a), dim A(0), ...).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

from app.core.errors import DimensionMismatch, InvalidInput, NotHermitian, NotPositiveDefinite
from app.core.logging import get_logger

logger = get_logger(__name__)

EPS = np.finfo(float).eps


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """
    Coerce to a finite 2D float64/complex128 array.

    Real input stays real; everything downstream uses ``.conj().T`` so both work.
    """
    arr = np.asarray(a)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be 2-dimensional, got shape {arr.shape}")
    dtype = np.complex128 if np.iscomplexobj(arr) else np.float64
    arr = arr.astype(dtype, copy=False)
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class SubspaceBasis:
    ambient_dim: int
    basis: np.ndarray
    tol: float = 0.0

    @property
    def dim(self) -> int:
        return int(self.basis.shape[1])

    @classmethod
    def zero(cls, ambient_dim: int, tol: float = 0.0) -> "SubspaceBasis":
        return cls(ambient_dim, np.zeros((ambient_dim, 0)), tol)

    @classmethod
    def full(cls, ambient_dim: int, tol: float = 0.0) -> "SubspaceBasis":
        return cls(ambient_dim, np.eye(ambient_dim), tol)


@dataclass(frozen=True)
class HermitianEig:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


class RankResult(NamedTuple):
    rank: int
    range: SubspaceBasis
    nullspace: SubspaceBasis


def rank_threshold(smax: float, shape: tuple[int, int], tol: float) -> float:
    if tol > 0:
        return tol * max(1.0, smax)
    return max(shape) * EPS * smax


def svd_rank(A, tol: float = 0.0) -> RankResult:
    if tol < 0:
        raise InvalidInput("tol must be non-negative")
    A = as_matrix(A)
    m, n = A.shape
    if m == 0 or n == 0:
        return RankResult(0, SubspaceBasis.zero(m, tol), SubspaceBasis(n, np.eye(n), tol))

    U, s, Vh = scipy.linalg.svd(A, full_matrices=True, lapack_driver="gesvd")
    smax = float(s[0]) if s.size else 0.0
    threshold = rank_threshold(smax, (m, n), tol)
    rank = int(np.count_nonzero(s > threshold))
    rng = SubspaceBasis(m, U[:, :rank], tol)
    null = SubspaceBasis(n, Vh[rank:].conj().T, tol)
    return RankResult(rank, rng, null)


def orthonormalize(cols, tol: float = 0.0) -> SubspaceBasis:
    return svd_rank(cols, tol).range


def _check_ambient(U: SubspaceBasis, W: SubspaceBasis) -> None:
    if U.ambient_dim != W.ambient_dim:
        raise DimensionMismatch(f"ambient dimensions differ: {U.ambient_dim} vs {W.ambient_dim}")


def projector(U: SubspaceBasis) -> np.ndarray:
    return U.basis @ U.basis.conj().T


def intersect(U: SubspaceBasis, W: SubspaceBasis) -> SubspaceBasis:
    """U ∩ W as the null space of the stacked complementary projectors."""
    _check_ambient(U, W)
    n = U.ambient_dim
    tol = max(U.tol, W.tol)
    if U.dim == 0 or W.dim == 0:
        return SubspaceBasis.zero(n, tol)
    eye = np.eye(n)
    stacked = np.vstack([eye - projector(U), eye - projector(W)])
    null = svd_rank(stacked, tol).nullspace
    return SubspaceBasis(n, null.basis, tol)


def orth_complement(U: SubspaceBasis) -> SubspaceBasis:
    n = U.ambient_dim
    if U.dim == 0:
        return SubspaceBasis.full(n, U.tol)
    if U.dim >= n:
        return SubspaceBasis.zero(n, U.tol)
    null = svd_rank(U.basis.conj().T, U.tol).nullspace
    return SubspaceBasis(n, null.basis, U.tol)


def gap_delta(M: SubspaceBasis, N: SubspaceBasis) -> float:
    """δ(M,N) = ‖(I − P_N)P_M‖₂, the largest distance from a unit vector of M to N."""
    _check_ambient(M, N)
    if M.dim == 0:
        return 0.0
    residual = M.basis - N.basis @ (N.basis.conj().T @ M.basis)
    value = float(np.linalg.norm(residual, 2))
    return min(max(value, 0.0), 1.0)


def gap_hat(M: SubspaceBasis, N: SubspaceBasis) -> float:
    return max(gap_delta(M, N), gap_delta(N, M))


def hermitian_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


def is_hermitian(A, tol: float) -> bool:
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        return False
    if A.size == 0:
        return True
    scale = max(1.0, float(np.linalg.norm(A, 2)))
    return float(np.linalg.norm(A - A.conj().T, 2)) <= tol * scale


def hermitian_eig(A, tol: float = 1e-10) -> HermitianEig:
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise NotHermitian(f"matrix is not square: {A.shape}")
    if A.size == 0:
        return HermitianEig(np.zeros(0), np.zeros((0, 0)))
    if not is_hermitian(A, tol):
        raise NotHermitian("‖A − A†‖ exceeds tolerance")
    w, v = scipy.linalg.eigh(hermitian_part(A))
    return HermitianEig(w, v)


def min_eigenvalue(A) -> float:
    """Smallest eigenvalue of the Hermitian part; +inf for an empty matrix."""
    A = as_matrix(A)
    if A.size == 0:
        return float("inf")
    return float(scipy.linalg.eigh(hermitian_part(A), eigvals_only=True)[0])


def cholesky(G, tol: float = 1e-12) -> np.ndarray:
    G = as_matrix(G)
    if G.shape[0] != G.shape[1]:
        raise NotPositiveDefinite(f"Gram matrix is not square: {G.shape}")
    if G.size == 0:
        return np.zeros((0, 0), dtype=G.dtype)
    if not is_hermitian(G, 1e-10):
        raise NotPositiveDefinite("Gram matrix is not Hermitian")
    try:
        L = scipy.linalg.cholesky(hermitian_part(G), lower=True)
    except scipy.linalg.LinAlgError as e:
        logger.warning(f"Cholesky failed on a {G.shape[0]}x{G.shape[0]} Gram matrix: {e}")
        raise NotPositiveDefinite(f"Cholesky factorization failed: {e}") from e
    pivots = np.abs(np.diag(L)) ** 2
    if float(pivots.min()) <= tol * float(np.linalg.norm(G, 2)):
        raise NotPositiveDefinite("Gram matrix is numerically singular")
    return L


def decays_to_zero(errors: Sequence[float], tol: float, ratio: float) -> bool:
    """
    Finite-sequence surrogate for ``errors -> 0``.

    True when the last error is below ``tol``, or when every step of the
    second half of the sequence strictly decreases and the last error is at
    most ``ratio`` times the largest one. A tail that levels off above ``tol``
    fails.
    """
    errs = [float(e) for e in errors]
    if not errs:
        return True
    if not all(np.isfinite(errs)):
        return False
    if errs[-1] <= tol:
        return True
    tail = errs[len(errs) // 2:]
    shrinking = all(b < a for a, b in zip(tail, tail[1:]))
    return shrinking and errs[-1] <= ratio * max(errs)


def encode_matrix(A: np.ndarray) -> list[list[list[float]]]:
    """Complex entries as [re, im] pairs, row-major."""
    A = np.asarray(A)
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.atleast_2d(A).astype(complex)]


def decode_matrix(rows, n_cols: int | None = None) -> np.ndarray:
    """Inverse of ``encode_matrix``; ``n_cols`` disambiguates empty row lists."""
    if not rows:
        return np.zeros((0, n_cols or 0), dtype=complex)
    arr = np.array(rows, dtype=float)
    if arr.size == 0:
        return np.zeros((len(rows), n_cols or 0), dtype=complex)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise InvalidInput("complex matrices are encoded as rows of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]
