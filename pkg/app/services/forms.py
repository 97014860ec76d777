"""
Form triples (a, j, j̃) in orthonormal coordinates.

Convention: a(u, v) = v†·M·u, linear in u and conjugate-linear in v.
J represents j: V -> H, Jt represents j̃: V -> H̃.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from app.core.config import settings
from app.core.errors import DimensionMismatch, InternalInvariantViolation, InvalidInput
from app.core.logging import get_logger
from app.services.numkernel import (
    SubspaceBasis,
    as_matrix,
    decode_matrix,
    encode_matrix,
    hermitian_part,
    intersect,
    is_hermitian,
    min_eigenvalue,
    orth_complement,
    svd_rank,
)

logger = get_logger(__name__)


@dataclass(frozen=True)
class FormTriple:
    M: np.ndarray
    J: np.ndarray
    Jt: np.ndarray
    tol: float = field(default_factory=lambda: settings.TOL)

    def __post_init__(self):
        M = as_matrix(self.M, "M")
        J = as_matrix(self.J, "J")
        Jt = as_matrix(self.Jt, "Jt")
        dimV = M.shape[0]
        if M.shape != (dimV, dimV):
            raise DimensionMismatch(f"M must be square, got {M.shape}")
        if J.shape[1] != dimV:
            raise DimensionMismatch(f"J has {J.shape[1]} columns, expected dimV={dimV}")
        if Jt.shape[1] != dimV:
            raise DimensionMismatch(f"Jt has {Jt.shape[1]} columns, expected dimV={dimV}")
        if self.tol < 0:
            raise InvalidInput("tol must be non-negative")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "Jt", Jt)

    @classmethod
    def create(cls, M, J, Jt=None, tol: float | None = None) -> "FormTriple":
        M = as_matrix(M, "M")
        if Jt is None:
            Jt = np.eye(M.shape[0])
        return cls(M, as_matrix(J, "J"), as_matrix(Jt, "Jt"), settings.TOL if tol is None else tol)

    @property
    def dimV(self) -> int:
        return self.M.shape[0]

    @property
    def dimH(self) -> int:
        return self.J.shape[0]

    @property
    def dimHt(self) -> int:
        return self.Jt.shape[0]

    def a(self, u, v) -> complex:
        return complex(np.vdot(v, self.M @ u))

    def to_dict(self) -> dict:
        return {
            "dimV": self.dimV,
            "dimH": self.dimH,
            "dimHt": self.dimHt,
            "M": encode_matrix(self.M),
            "J": encode_matrix(self.J),
            "Jt": encode_matrix(self.Jt),
            "tol": self.tol,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FormTriple":
        try:
            dimV = int(payload["dimV"])
            M = decode_matrix(payload["M"], dimV).reshape(dimV, dimV)
            J = decode_matrix(payload["J"], dimV).reshape(int(payload["dimH"]), dimV)
            Jt = decode_matrix(payload["Jt"], dimV).reshape(int(payload["dimHt"]), dimV)
        except (KeyError, TypeError) as e:
            raise InvalidInput(f"malformed form triple document: {e}") from e
        except ValueError as e:
            raise DimensionMismatch(f"form triple document has inconsistent dimensions: {e}") from e
        return cls(M, J, Jt, float(payload.get("tol", settings.TOL)))


@dataclass(frozen=True)
class EllipticityCertificate:
    mu: float
    omega: float
    satisfied: bool


def kernel_of_j(f: FormTriple) -> SubspaceBasis:
    return svd_rank(f.J, f.tol).nullspace


def w_space(f: FormTriple) -> SubspaceBasis:
    """W(a) = ker j ∩ {u : a(u, ·) = 0} = ker J ∩ ker M."""
    return svd_rank(np.vstack([f.J, f.M]), f.tol).nullspace


def v_space(f: FormTriple) -> SubspaceBasis:
    """V(a) = {u : a(u, v) = 0 for all v in ker j}, i.e. M·u ⟂ ker J."""
    K = kernel_of_j(f)
    if K.dim == 0:
        return SubspaceBasis.full(f.dimV, f.tol)
    return svd_rank(K.basis.conj().T @ f.M, f.tol).nullspace


def v_cap_ker(f: FormTriple) -> SubspaceBasis:
    return intersect(v_space(f), kernel_of_j(f))


def is_symmetric(f: FormTriple) -> bool:
    return is_hermitian(f.M, f.tol)


def is_accretive(f: FormTriple) -> bool:
    scale = max(1.0, float(np.linalg.norm(f.M, 2))) if f.dimV else 1.0
    return min_eigenvalue(f.M) >= -f.tol * scale


def _shifted_mu(M: np.ndarray, P: np.ndarray, omega: float) -> float:
    return min_eigenvalue(hermitian_part(M) + omega * (P.conj().T @ P))


def ellipticity(f: FormTriple, omega: float) -> EllipticityCertificate:
    """μ = λ_min(Herm(M) + ω·Jt†Jt); the form is j̃-elliptic at ω when μ > tol."""
    if omega < 0:
        raise InvalidInput("omega must be non-negative")
    mu = _shifted_mu(f.M, f.Jt, omega)
    return EllipticityCertificate(mu=mu, omega=omega, satisfied=mu > f.tol)


def j_ellipticity_search(f: FormTriple, omega_grid: list[float] | None = None) -> EllipticityCertificate:
    """First grid ω with λ_min(Herm(M) + ω·J†J) > tol, else the best unsatisfied certificate."""
    grid = list(settings.OMEGA_GRID if omega_grid is None else omega_grid)
    if not grid:
        raise InvalidInput("omega grid must be non-empty")
    best = EllipticityCertificate(mu=-float("inf"), omega=grid[0], satisfied=False)
    for omega in grid:
        mu = _shifted_mu(f.M, f.J, omega)
        if mu > f.tol:
            return EllipticityCertificate(mu=mu, omega=omega, satisfied=True)
        if mu > best.mu:
            best = EllipticityCertificate(mu=mu, omega=omega, satisfied=False)
    logger.info(f"No grid omega makes the form j-elliptic (best mu={best.mu:.3e} at omega={best.omega})")
    return best


def restrict(f: FormTriple, Q: SubspaceBasis) -> FormTriple:
    """a₁ = a|_{Q×Q}, j₁ = j|_Q, j̃₁ = j̃|_Q in the orthonormal coordinates of Q."""
    if Q.ambient_dim != f.dimV:
        raise DimensionMismatch(f"subspace lives in dimension {Q.ambient_dim}, form in {f.dimV}")
    B = Q.basis
    return FormTriple(B.conj().T @ f.M @ B, f.J @ B, f.Jt @ B, f.tol)


def reduced_injective_triple(f: FormTriple) -> FormTriple:
    """Restriction to V₁ = V(a) ∩ (V(a) ∩ ker j)^⊥, on which j is injective."""
    V = v_space(f)
    V1 = intersect(V, orth_complement(v_cap_ker(f)))
    f1 = restrict(f, V1)
    if svd_rank(f1.J, f.tol).nullspace.dim != 0:
        raise InternalInvariantViolation("j restricted to V(a) ∩ (V(a) ∩ ker j)^⊥ is not injective")
    return f1


def adjoint_triple(f: FormTriple) -> FormTriple:
    """Triple of a*(u, v) = conj(a(v, u))."""
    return FormTriple(f.M.conj().T, f.J, f.Jt, f.tol)
