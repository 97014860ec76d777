"""
Linear relations (graphs) A ⊂ H ⊕ H.

A relation is stored as an orthonormal basis of the graph subspace; the first
dimH rows of the basis are the x-components, the last dimH rows the
y-components. Pairs are (x, y) with y ∈ A(x).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from pydantic import BaseModel

from app.core.config import settings
from app.core.errors import (
    DimensionMismatch,
    InternalInvariantViolation,
    InvalidInput,
    NotInvertible,
    NotSelfAdjoint,
)
from app.core.logging import get_logger
from app.services.forms import FormTriple, restrict, v_space, w_space
from app.services.numkernel import (
    SubspaceBasis,
    as_matrix,
    decays_to_zero,
    decode_matrix,
    encode_matrix,
    gap_hat,
    hermitian_eig,
    hermitian_part,
    intersect,
    is_hermitian,
    min_eigenvalue,
    orth_complement,
    orthonormalize,
    rank_threshold,
    svd_rank,
)

logger = get_logger(__name__)


@dataclass(frozen=True)
class LinearRelation:
    dimH: int
    basis: np.ndarray
    tol: float = field(default_factory=lambda: settings.TOL)

    def __post_init__(self):
        basis = as_matrix(self.basis, "graph basis")
        if basis.shape[0] != 2 * self.dimH:
            raise DimensionMismatch(f"graph basis has {basis.shape[0]} rows, expected {2 * self.dimH}")
        if basis.shape[1] > 2 * self.dimH:
            raise DimensionMismatch("graph basis has more columns than dim(H ⊕ H)")
        object.__setattr__(self, "basis", basis)

    @classmethod
    def from_pairs(cls, X, Y, tol: float | None = None) -> "LinearRelation":
        """Span of the column pairs (X[:, k], Y[:, k])."""
        tol = settings.TOL if tol is None else tol
        X = as_matrix(X, "X")
        Y = as_matrix(Y, "Y")
        if X.shape != Y.shape:
            raise DimensionMismatch(f"pair blocks differ in shape: {X.shape} vs {Y.shape}")
        n = X.shape[0]
        return cls(n, orthonormalize(np.vstack([X, Y]), tol).basis, tol)

    @property
    def X(self) -> np.ndarray:
        return self.basis[: self.dimH]

    @property
    def Y(self) -> np.ndarray:
        return self.basis[self.dimH:]

    @property
    def dim(self) -> int:
        return int(self.basis.shape[1])

    def subspace(self) -> SubspaceBasis:
        return SubspaceBasis(2 * self.dimH, self.basis, self.tol)

    def to_dict(self) -> dict:
        return {"dimH": self.dimH, "basis": encode_matrix(self.basis), "tol": self.tol}

    @classmethod
    def from_dict(cls, payload: dict) -> "LinearRelation":
        try:
            dimH = int(payload["dimH"])
            basis = decode_matrix(payload["basis"], 0)
        except (KeyError, TypeError) as e:
            raise InvalidInput(f"malformed relation document: {e}") from e
        if basis.size == 0:
            basis = np.zeros((2 * dimH, 0))
        return cls(dimH, basis, float(payload.get("tol", settings.TOL)))


@dataclass(frozen=True)
class SingleValuedPart:
    H1: SubspaceBasis
    op: np.ndarray
    multivalued: SubspaceBasis
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _requalify(G: np.ndarray, dimH: int, tol: float) -> LinearRelation:
    # G has full column rank; QR keeps the span without a rank decision
    if G.shape[1] == 0:
        return LinearRelation(dimH, G, tol)
    Q, _ = scipy.linalg.qr(G, mode="economic")
    return LinearRelation(dimH, Q, tol)


def from_form(f: FormTriple) -> LinearRelation:
    """
    A = {(J·u, y) : M·u = J†·y}, the graph associated with (a, j).

    With J = U·S·V† and K = ker J, write u = V_r·S_r⁻¹·x' + k. The k-part is
    eliminated by projecting onto range(M·K)^⊥, leaving
    Π·[M·V_r·S_r⁻¹, −J†]·(x', y) = 0 with x = U_r·x'. Solving for (x', y)
    directly keeps the x-components accurate when M is small next to J.
    """
    n, d = f.dimH, f.dimV
    if n == 0:
        return LinearRelation(0, np.zeros((0, 0)), f.tol)
    if d == 0:
        return LinearRelation(n, np.vstack([np.zeros((n, n)), np.eye(n)]), f.tol)

    U, s, Vh = scipy.linalg.svd(f.J, full_matrices=True, lapack_driver="gesvd")
    r = int(np.count_nonzero(s > rank_threshold(float(s[0]) if s.size else 0.0, f.J.shape, f.tol)))
    U_r = U[:, :r]
    V = Vh.conj().T
    lift = V[:, :r] / s[:r]
    K = V[:, r:]

    MK = f.M @ K
    if MK.shape[1]:
        Pi = orth_complement(orthonormalize(MK, f.tol)).basis
    else:
        Pi = np.eye(d)
    equations = Pi.conj().T @ np.hstack([f.M @ lift, -f.J.conj().T])
    coords = svd_rank(equations, f.tol).nullspace.basis if equations.shape[0] else np.eye(r + n)
    # block-diag(U_r, I) is an isometry, so the columns stay orthonormal
    basis = np.vstack([U_r @ coords[:r], coords[r:]])
    A = LinearRelation(n, basis, f.tol)
    if A.dim != n:
        logger.debug(f"from_form produced a graph of dimension {A.dim} in H ⊕ H with dim H = {n}")
    return A


def from_operator(B, H1: SubspaceBasis | None = None, tol: float | None = None) -> LinearRelation:
    """A = {(x, y + Bx) : x ∈ H1, y ∈ H1^⊥}, with B acting in H1 coordinates."""
    tol = settings.TOL if tol is None else tol
    B = as_matrix(B, "B")
    if H1 is None:
        H1 = SubspaceBasis.full(B.shape[0], tol)
    k = H1.dim
    if B.shape != (k, k):
        raise DimensionMismatch(f"operator is {B.shape}, H1 has dimension {k}")
    n = H1.ambient_dim
    Q = H1.basis
    P = orth_complement(H1).basis
    top = np.hstack([Q, np.zeros((n, P.shape[1]))])
    bottom = np.hstack([Q @ B, P])
    return _requalify(np.vstack([top, bottom]), n, tol)


def shift(A: LinearRelation, lam: complex) -> LinearRelation:
    """A + λI."""
    if lam == 0:
        return A
    return _requalify(np.vstack([A.X, A.Y + lam * A.X]), A.dimH, A.tol)


def dagger(A: LinearRelation) -> LinearRelation:
    """A† = {(y, x) : (x, y) ∈ A}; a row permutation keeps the basis orthonormal."""
    return LinearRelation(A.dimH, np.vstack([A.Y, A.X]), A.tol)


def domain(A: LinearRelation) -> SubspaceBasis:
    return orthonormalize(A.X, A.tol) if A.dim else SubspaceBasis.zero(A.dimH, A.tol)


def range_of(A: LinearRelation) -> SubspaceBasis:
    return orthonormalize(A.Y, A.tol) if A.dim else SubspaceBasis.zero(A.dimH, A.tol)


def mul_part(A: LinearRelation) -> SubspaceBasis:
    """A(0) = {y : (0, y) ∈ A}."""
    n = A.dimH
    if A.dim == 0:
        return SubspaceBasis.zero(n, A.tol)
    second_axis = SubspaceBasis(2 * n, np.vstack([np.zeros((n, n)), np.eye(n)]), A.tol)
    common = intersect(A.subspace(), second_axis)
    if common.dim == 0:
        return SubspaceBasis.zero(n, A.tol)
    return orthonormalize(common.basis[n:], A.tol)


def graph_equal(A: LinearRelation, B: LinearRelation, gap_tol: float | None = None) -> bool:
    if A.dimH != B.dimH:
        raise DimensionMismatch(f"relations live in H of dimension {A.dimH} and {B.dimH}")
    gap_tol = settings.GAP_TOL if gap_tol is None else gap_tol
    return gap_hat(A.subspace(), B.subspace()) <= gap_tol


def is_symmetric_relation(A: LinearRelation) -> bool:
    """(x, y)_H real on A, i.e. the pairing X†·Y is Hermitian."""
    if A.dim == 0:
        return True
    return is_hermitian(A.X.conj().T @ A.Y, A.tol)


def resolvent(A: LinearRelation, lam: complex) -> np.ndarray:
    """(A − λI)^{-1}: R·z = x where (x, y) ∈ A and y − λx = z."""
    n = A.dimH
    if n == 0:
        return np.zeros((0, 0))
    if A.dim != n:
        raise NotInvertible(lam, f"graph has dimension {A.dim}, A − ({complex(lam)})I cannot be a bijection of H")
    S = A.Y - lam * A.X
    if svd_rank(S, A.tol).rank < n:
        raise NotInvertible(lam)
    return scipy.linalg.solve(S.T, A.X.T).T


def resolvent_via_form(f: FormTriple, s: float) -> np.ndarray:
    """(A + isI)^{-1} = J₁·(M₁ + is·J₁†J₁)^{-1}·J₁†, computed on W(a)^⊥."""
    B, f1 = _witness_operator(f, s)
    if f1.dimV == 0:
        return np.zeros((f.dimH, f.dimH), dtype=complex)
    return f1.J @ scipy.linalg.solve(B, f1.J.conj().T)


def _witness_operator(f: FormTriple, s: float) -> tuple[np.ndarray, FormTriple]:
    if s == 0:
        raise InvalidInput("s must be nonzero")
    f1 = restrict(f, orth_complement(w_space(f)))
    B = f1.M + 1j * s * (f1.J.conj().T @ f1.J)
    if f1.dimV and svd_rank(B, f.tol).rank < f1.dimV:
        raise InternalInvariantViolation(f"M₁ + is·J₁†J₁ is singular at s={s}")
    return B, f1


def resolvent_witness(f: FormTriple, s: float, z) -> np.ndarray:
    """The u ∈ W(a)^⊥ with (A + isI)^{-1}z = J·u, in V coordinates."""
    B, f1 = _witness_operator(f, s)
    Q = orth_complement(w_space(f)).basis
    z = np.asarray(z, dtype=complex).reshape(-1)
    if z.shape[0] != f.dimH:
        raise DimensionMismatch(f"vector has length {z.shape[0]}, expected dimH={f.dimH}")
    if f1.dimV == 0:
        return np.zeros(f.dimV, dtype=complex)
    return Q @ scipy.linalg.solve(B, f1.J.conj().T @ z)


def h1_from_form(f: FormTriple) -> SubspaceBasis:
    """Closure of j(V(a)); coincides with A(0)^⊥ for the associated graph."""
    V = v_space(f)
    if V.dim == 0:
        return SubspaceBasis.zero(f.dimH, f.tol)
    return orthonormalize(f.J @ V.basis, f.tol)


def selfadjoint_check(A: LinearRelation, s_list: Sequence[float] | None = None) -> bool:
    """
    Symmetry plus surjectivity of A + isI at finitely many s.

    For each s the graph is rebuilt from the resolvent as
    {(R·z, z − is·R·z) : z ∈ H} and compared with A.
    """
    s_values = list(settings.SELFADJOINT_S_VALUES if s_list is None else s_list)
    if not s_values:
        raise InvalidInput("s_list must be non-empty")
    if any(s == 0 for s in s_values):
        raise InvalidInput("s values must be nonzero")
    if not is_symmetric_relation(A):
        logger.debug("Relation is not symmetric")
        return False
    n = A.dimH
    for s in s_values:
        try:
            R = resolvent(A, -1j * s)
        except NotInvertible:
            logger.debug(f"A + {s}iI is not surjective")
            return False
        rebuilt = LinearRelation.from_pairs(R, np.eye(n) - 1j * s * R, A.tol)
        if not graph_equal(A, rebuilt):
            logger.info(f"Resolvent reconstruction at s={s} does not reproduce the graph")
            return False
    return True


def single_valued_part(A: LinearRelation, checked: bool = False) -> SingleValuedPart:
    """
    A° on H1 = A(0)^⊥.

    ``checked=True`` skips the self-adjointness check when the caller has
    already run it.
    """
    if not checked and not selfadjoint_check(A):
        raise NotSelfAdjoint("single-valued part requires a self-adjoint relation")
    A0 = mul_part(A)
    H1 = orth_complement(A0)
    k = H1.dim
    if k == 0:
        return SingleValuedPart(H1, np.zeros((0, 0)), A0, np.zeros(0))
    Q = H1.basis
    QX = Q.conj().T @ A.X
    QY = Q.conj().T @ A.Y
    # D(A) = H1, so Q†X has rank exactly k; its top right singular vectors pick graph coordinates
    _, _, Vh = scipy.linalg.svd(QX, full_matrices=False)
    C = Vh[:k].conj().T
    op = scipy.linalg.solve((QX @ C).T, (QY @ C).T).T
    asym = float(np.linalg.norm(op - op.conj().T, 2))
    if asym > 1e-6 * max(1.0, float(np.linalg.norm(op, 2))):
        logger.warning(f"Single-valued part deviates from Hermitian by {asym:.3e}")
    op = hermitian_part(op)
    eig = hermitian_eig(op)
    return SingleValuedPart(H1, op, A0, eig.eigenvalues)


def lower_bound(A: LinearRelation) -> float:
    """Smallest eigenvalue of A°; +inf when A is purely multivalued."""
    svp = single_valued_part(A)
    if svp.op.size == 0:
        return float("inf")
    return float(svp.eigenvalues[0])


def semigroup(A: LinearRelation, t: float) -> np.ndarray:
    """e^{-tA} = 0 ⊕ e^{-tA°}."""
    if t <= 0:
        raise InvalidInput("t must be positive")
    svp = single_valued_part(A)
    n = A.dimH
    if svp.op.size == 0:
        return np.zeros((n, n), dtype=complex)
    eig = hermitian_eig(svp.op)
    with np.errstate(over="ignore"):
        scale = np.exp(-t * eig.eigenvalues)
    E = (eig.eigenvectors * scale) @ eig.eigenvectors.conj().T
    Q = svp.H1.basis
    return Q @ E @ Q.conj().T


def euler_semigroup(A: LinearRelation, t: float, n: int) -> np.ndarray:
    """((I + (t/n)A)^{-1})^n through the resolvent at -n/t."""
    if t <= 0:
        raise InvalidInput("t must be positive")
    if n < 1:
        raise InvalidInput("n must be at least 1")
    rate = n / t
    F = rate * resolvent(A, -rate)
    return np.linalg.matrix_power(F, n)


def accretivity_check(A: LinearRelation) -> tuple[bool, bool]:
    """(accretive, m-accretive): Re (x, y)_H ≥ 0 on A, plus A + I surjective."""
    if A.dim == 0:
        return True, A.dimH == 0
    P = A.X.conj().T @ A.Y
    accretive = min_eigenvalue(P) >= -A.tol * max(1.0, float(np.linalg.norm(P, 2)))
    if not accretive:
        return False, False
    return True, range_of(shift(A, 1.0)).dim == A.dimH


class ResolventTransferReport(BaseModel):
    lam: tuple[float, float]
    mu: tuple[float, float]
    errors_lambda: list[list[float]]
    errors_mu: list[list[float]]
    bounded: bool
    lambda_converges: bool
    mu_converges: bool
    ok: bool
    message: str = ""


def resolvent_transfer_check(
    A_seq: Sequence[LinearRelation],
    A: LinearRelation,
    lam: complex,
    mu: complex,
    vectors: Sequence,
    tol: float | None = None,
) -> ResolventTransferReport:
    """
    Strong resolvent convergence at λ carries over to μ.

    Precondition failures are reported in ``message`` rather than raised.
    """
    tol = settings.CONVERGENCE_TOL if tol is None else tol
    Z = np.column_stack([np.asarray(z, dtype=complex).reshape(-1) for z in vectors]) if len(vectors) else None
    base = ResolventTransferReport(
        lam=(complex(lam).real, complex(lam).imag),
        mu=(complex(mu).real, complex(mu).imag),
        errors_lambda=[],
        errors_mu=[],
        bounded=False,
        lambda_converges=False,
        mu_converges=False,
        ok=False,
    )
    if Z is None:
        return base.model_copy(update={"message": "no vectors"})
    try:
        R_lam = resolvent(A, lam)
        R_mu = resolvent(A, mu)
        errs_lam, errs_mu, norms = [], [], []
        for An in A_seq:
            Rn_lam = resolvent(An, lam)
            Rn_mu = resolvent(An, mu)
            norms.append(max(np.linalg.norm(Rn_lam, 2), np.linalg.norm(Rn_mu, 2)))
            errs_lam.append([float(e) for e in np.linalg.norm((Rn_lam - R_lam) @ Z, axis=0)])
            errs_mu.append([float(e) for e in np.linalg.norm((Rn_mu - R_mu) @ Z, axis=0)])
    except NotInvertible as e:
        logger.warning(f"Resolvent transfer precondition failed: {e}")
        return base.model_copy(update={"message": str(e)})

    bounded = max(norms, default=0.0) <= settings.RESOLVENT_NORM_CAP
    lam_conv = all(decays_to_zero([row[p] for row in errs_lam], tol, settings.DECAY_RATIO) for p in range(Z.shape[1]))
    mu_conv = all(decays_to_zero([row[p] for row in errs_mu], tol, settings.DECAY_RATIO) for p in range(Z.shape[1]))
    return ResolventTransferReport(
        lam=base.lam,
        mu=base.mu,
        errors_lambda=errs_lam,
        errors_mu=errs_mu,
        bounded=bool(bounded),
        lambda_converges=lam_conv,
        mu_converges=mu_conv,
        ok=bool(bounded and (mu_conv or not lam_conv)),
        message="" if bounded else "resolvent norms exceed the configured cap",
    )
