"""
P1 finite elements for the forms

    a(u, v) = ∫ Σ a_kl ∂_k u ∂_l v̄ + ∫ c u v̄      on H¹(Ω),   j = Tr,   j̃ = inclusion into L₂(Ω),

and the Dirichlet-to-Neumann graphs they generate.

All matrices are assembled densely. ``to_form_triple`` moves them into
orthonormal coordinates: V through the H¹ Gram matrix G = K_id + M_Ω,
H = L₂(Γ) through M_Γ, H̃ = L₂(Ω) through M_Ω. In these coordinates the
second component of a DtN pair is the discrete normal derivative.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from app.core.config import settings
from app.core.errors import DegenerateElement, DimensionMismatch, InvalidInput, NearDirichletSpectrum
from app.core.logging import get_logger
from app.core.metrics import STAGE_LATENCY_SECONDS
from app.services.convergence import ConvergenceReport, FormSequence, full_report
from app.services.forms import FormTriple, w_space
from app.services.mesh import Mesh
from app.services.numkernel import cholesky, hermitian_part
from app.services.relation import LinearRelation, from_form, single_valued_part

logger = get_logger(__name__)

_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
_EDGE_MASS = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0


@dataclass(frozen=True)
class CoefficientField:
    """Per-triangle constant coefficients: symmetric a_kl (T×2×2) and potential c (T)."""

    a_kl: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_kl, dtype=float)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if a.ndim != 3 or a.shape[1:] != (2, 2):
            raise InvalidInput(f"a_kl must have shape (T, 2, 2), got {a.shape}")
        if a.shape[0] != c.shape[0]:
            raise DimensionMismatch(f"{a.shape[0]} a_kl blocks but {c.shape[0]} potential values")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(c))):
            raise InvalidInput("coefficients must be finite")
        if not np.allclose(a, np.swapaxes(a, 1, 2), rtol=0, atol=1e-14):
            raise InvalidInput("a_kl must be symmetric (a_kl = a_lk)")
        object.__setattr__(self, "a_kl", a)
        object.__setattr__(self, "c", c)
        if a.shape[0] and self.mu_ell <= 0:
            raise InvalidInput(f"a_kl is not uniformly elliptic (min eigenvalue {self.mu_ell:.3e})")

    @property
    def n_triangles(self) -> int:
        return int(self.c.shape[0])

    @property
    def mu_ell(self) -> float:
        if self.n_triangles == 0:
            return float("inf")
        return float(np.linalg.eigvalsh(self.a_kl).min())

    @classmethod
    def identity(cls, n_triangles: int) -> "CoefficientField":
        return cls.constant(n_triangles, 0.0)

    @classmethod
    def constant(cls, n_triangles: int, c: float, scale: float = 1.0) -> "CoefficientField":
        a = np.broadcast_to(scale * np.eye(2), (n_triangles, 2, 2)).copy()
        return cls(a, np.full(n_triangles, float(c)))

    @classmethod
    def from_functions(
        cls,
        mesh: Mesh,
        c_fn: Callable[[float, float], float] | None = None,
        a_fn: Callable[[float, float], Sequence] | None = None,
    ) -> "CoefficientField":
        """Barycenter sampling; ``a_fn`` returns a symmetric 2×2 matrix."""
        centers = mesh.vertices[mesh.triangles].mean(axis=1)
        c = np.array([c_fn(x, y) for x, y in centers]) if c_fn else np.zeros(mesh.n_triangles)
        if a_fn:
            a = np.array([np.asarray(a_fn(x, y), dtype=float).reshape(2, 2) for x, y in centers])
        else:
            a = np.broadcast_to(np.eye(2), (mesh.n_triangles, 2, 2)).copy()
        return cls(a, c)

    @classmethod
    def from_json(cls, payload: dict, n_triangles: int) -> "CoefficientField":
        """{a_kl: [[a11, a12, a22], ...] | "identity", c: [...] | number}."""
        a_spec = payload.get("a_kl", "identity")
        c_spec = payload.get("c", 0.0)
        if a_spec == "identity":
            a = np.broadcast_to(np.eye(2), (n_triangles, 2, 2)).copy()
        else:
            rows = np.asarray(a_spec, dtype=float)
            if rows.shape != (n_triangles, 3):
                raise DimensionMismatch(f"a_kl must list {n_triangles} triples [a11, a12, a22], got shape {rows.shape}")
            a = np.stack([rows[:, [0, 1]], rows[:, [1, 2]]], axis=1)
        if isinstance(c_spec, (int, float)):
            c = np.full(n_triangles, float(c_spec))
        else:
            c = np.asarray(c_spec, dtype=float).reshape(-1)
            if c.shape[0] != n_triangles:
                raise DimensionMismatch(f"c must list {n_triangles} values, got {c.shape[0]}")
        return cls(a, c)

    def shifted(self, sigma: float) -> "CoefficientField":
        return CoefficientField(self.a_kl, self.c + sigma)

    def scaled(self, factor: float) -> "CoefficientField":
        return CoefficientField(factor * self.a_kl, self.c)

    def perturbed(self, rng: np.random.Generator, eps: float) -> "CoefficientField":
        """Random symmetric per-triangle perturbation with sup-norm at most ``eps``."""
        T = self.n_triangles
        S = rng.standard_normal((T, 2, 2))
        S = 0.5 * (S + np.swapaxes(S, 1, 2))
        S /= np.maximum(np.abs(np.linalg.eigvalsh(S)).max(axis=1), 1e-300)[:, None, None]
        S *= eps * rng.uniform(0.0, 1.0, size=(T, 1, 1))
        return CoefficientField(self.a_kl + S, self.c + eps * rng.uniform(-1.0, 1.0, size=T))


@dataclass(frozen=True)
class AssembledSystem:
    mesh: Mesh
    coeff: CoefficientField
    K: np.ndarray
    C: np.ndarray
    K_id: np.ndarray
    M_Omega: np.ndarray
    M_Gamma: np.ndarray
    Tr: np.ndarray
    G: np.ndarray
    interior_index: np.ndarray
    boundary_index: np.ndarray

    @property
    def A(self) -> np.ndarray:
        """Matrix of a on the P1 space: K + C."""
        return self.K + self.C


def _gradients(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    areas = mesh.signed_areas()
    bad = np.flatnonzero(areas <= 0)
    if bad.size:
        raise DegenerateElement(int(bad[0]), float(areas[bad[0]]))
    p = mesh.vertices[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    grads = np.stack([b, c], axis=2) / (2.0 * areas)[:, None, None]
    return grads, areas


def _scatter(triangles: np.ndarray, local: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, n))
    rows = np.repeat(triangles[:, :, None], 3, axis=2)
    cols = np.repeat(triangles[:, None, :], 3, axis=1)
    np.add.at(out, (rows, cols), local)
    return out


def assemble(mesh: Mesh, coeff: CoefficientField) -> AssembledSystem:
    if coeff.n_triangles != mesh.n_triangles:
        raise DimensionMismatch(f"{coeff.n_triangles} coefficient values for {mesh.n_triangles} triangles")
    N = mesh.n_vertices
    with STAGE_LATENCY_SECONDS.labels(stage="assembly").time():
        grads, areas = _gradients(mesh)
        k_local = areas[:, None, None] * np.einsum("tik,tkl,tjl->tij", grads, coeff.a_kl, grads)
        k_id_local = areas[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)
        m_local = areas[:, None, None] * _LOCAL_MASS
        K = _scatter(mesh.triangles, k_local, N)
        K_id = _scatter(mesh.triangles, k_id_local, N)
        M_Omega = _scatter(mesh.triangles, m_local, N)
        C = _scatter(mesh.triangles, coeff.c[:, None, None] * m_local, N)

        boundary_index = mesh.boundary_vertices
        interior_index = np.setdiff1d(np.arange(N), boundary_index)
        nb = boundary_index.shape[0]
        local_b = np.searchsorted(boundary_index, mesh.boundary_edges)
        lengths = np.linalg.norm(
            mesh.vertices[mesh.boundary_edges[:, 1]] - mesh.vertices[mesh.boundary_edges[:, 0]], axis=1
        )
        M_Gamma = np.zeros((nb, nb))
        rows = np.repeat(local_b[:, :, None], 2, axis=2)
        cols = np.repeat(local_b[:, None, :], 2, axis=1)
        np.add.at(M_Gamma, (rows, cols), lengths[:, None, None] * _EDGE_MASS)
        Tr = np.zeros((nb, N))
        Tr[np.arange(nb), boundary_index] = 1.0

    logger.debug(f"Assembled P1 system: {N} vertices, {nb} on Γ, {mesh.n_triangles} triangles")
    return AssembledSystem(
        mesh=mesh,
        coeff=coeff,
        K=K,
        C=C,
        K_id=K_id,
        M_Omega=M_Omega,
        M_Gamma=M_Gamma,
        Tr=Tr,
        G=K_id + M_Omega,
        interior_index=interior_index,
        boundary_index=boundary_index,
    )


@dataclass(frozen=True)
class _Congruence:
    L_inv: np.ndarray
    L_Gamma: np.ndarray
    L_Omega: np.ndarray


def _congruence(sys: AssembledSystem) -> _Congruence:
    L = cholesky(sys.G)
    L_inv = scipy.linalg.solve_triangular(L, np.eye(L.shape[0]), lower=True)
    return _Congruence(L_inv, cholesky(sys.M_Gamma), cholesky(sys.M_Omega))


def to_form_triple(sys: AssembledSystem, complexify: bool = False, tol: float | None = None) -> FormTriple:
    """
    (a, Tr, inclusion) in orthonormal coordinates.

    M = L⁻¹(K + C)L⁻†, J = L_Γ†·Tr·L⁻†, Jt = L_Ω†·L⁻† with G = LL†,
    M_Γ = L_ΓL_Γ†, M_Ω = L_ΩL_Ω†.
    """
    cg = _congruence(sys)
    M = hermitian_part(cg.L_inv @ sys.A @ cg.L_inv.T)
    J = cg.L_Gamma.T @ sys.Tr @ cg.L_inv.T
    Jt = cg.L_Omega.T @ cg.L_inv.T
    if complexify:
        M, J, Jt = (X.astype(np.complex128) for X in (M, J, Jt))
    return FormTriple(M, J, Jt, settings.FEM_TOL if tol is None else tol)


def trace_of_constant(sys: AssembledSystem) -> np.ndarray:
    """H-coordinates of the boundary function 1: L_Γ†·1."""
    return cholesky(sys.M_Gamma).T @ np.ones(sys.M_Gamma.shape[0])


def constant_coordinates(sys: AssembledSystem) -> np.ndarray:
    """V-coordinates of the function 1_Ω: L†·1."""
    return cholesky(sys.G).T @ np.ones(sys.G.shape[0])


def projected_trace_triple(sys: AssembledSystem, tol: float | None = None) -> FormTriple:
    """
    j = B∘Tr with B g = g − (g, 1)·1/|Γ|, the mean-free part of the trace.

    The constant 1_Ω satisfies a(1) = 0 and j(1) = 0 when c = 0, so the form
    is not j-elliptic while it stays compactly elliptic through j̃.
    """
    f = to_form_triple(sys, tol=tol)
    e = trace_of_constant(sys)
    B = np.eye(e.shape[0]) - np.outer(e, e) / float(e @ e)
    return FormTriple(f.M, B @ f.J, f.Jt, f.tol)


def dirichlet_eigs(sys: AssembledSystem, k: int) -> list[float]:
    """k smallest eigenvalues of −div(a∇) + c with homogeneous Dirichlet conditions."""
    I = sys.interior_index
    if I.size == 0:
        raise InvalidInput("mesh has no interior vertices")
    if k < 1 or k > I.size:
        raise InvalidInput(f"k must lie in [1, {I.size}], got {k}")
    A_II = sys.A[np.ix_(I, I)]
    M_II = sys.M_Omega[np.ix_(I, I)]
    w = scipy.linalg.eigh(A_II, M_II, eigvals_only=True, subset_by_index=[0, k - 1])
    return [float(x) for x in w]


def dirichlet_gap(sys: AssembledSystem) -> tuple[float, float]:
    """(closest discrete Dirichlet eigenvalue to 0, allowed margin)."""
    I = sys.interior_index
    if I.size == 0:
        return float("inf"), 0.0
    w = scipy.linalg.eigh(sys.A[np.ix_(I, I)], sys.M_Omega[np.ix_(I, I)], eigvals_only=True)
    closest = float(w[np.argmin(np.abs(w))])
    margin = settings.NEAR_SPECTRUM_MARGIN * max(1.0, abs(float(w[0])))
    return closest, margin


def check_dirichlet_margin(sys: AssembledSystem) -> None:
    closest, margin = dirichlet_gap(sys)
    if abs(closest) < margin:
        logger.warning(f"0 is within {margin:.1e} of the Dirichlet spectrum (eigenvalue {closest:.6e})")
        raise NearDirichletSpectrum(closest, margin)


def dtn_graph(sys: AssembledSystem, tol: float | None = None) -> LinearRelation:
    """Discrete D_m, the graph associated with (a, Tr)."""
    with STAGE_LATENCY_SECONDS.labels(stage="graph_construction").time():
        return from_form(to_form_triple(sys, tol=tol))


def steklov_eigs(sys: AssembledSystem, k: int) -> list[float]:
    """k smallest eigenvalues of the single-valued DtN operator."""
    check_dirichlet_margin(sys)
    svp = single_valued_part(dtn_graph(sys))
    if k < 1 or k > svp.eigenvalues.shape[0]:
        raise InvalidInput(f"k must lie in [1, {svp.eigenvalues.shape[0]}], got {k}")
    return [float(x) for x in svp.eigenvalues[:k]]


def dtn_schur_eigs(sys: AssembledSystem, k: int) -> list[float]:
    """Steklov eigenvalues through the Schur complement of K + C onto Γ against M_Γ."""
    check_dirichlet_margin(sys)
    I, B = sys.interior_index, sys.boundary_index
    A = sys.A
    S = A[np.ix_(B, B)]
    if I.size:
        S = S - A[np.ix_(B, I)] @ scipy.linalg.solve(A[np.ix_(I, I)], A[np.ix_(I, B)], assume_a="sym")
    if k < 1 or k > B.size:
        raise InvalidInput(f"k must lie in [1, {B.size}], got {k}")
    w = scipy.linalg.eigh(hermitian_part(S), sys.M_Gamma, eigvals_only=True, subset_by_index=[0, k - 1])
    return [float(x) for x in w]


def shared_omega(fields: Sequence[CoefficientField]) -> float:
    """ω with a + ω‖j̃·‖² ≥ min(μ_ell, 1)·‖·‖²_{H¹} for every field."""
    return 1.0 + max(0.0, -min(float(f.c.min()) for f in fields if f.n_triangles))


def coefficient_sequence(
    mesh: Mesh,
    fields: Sequence[CoefficientField],
    limit: CoefficientField,
    n_values: Sequence[int] | None = None,
    s_values: Sequence[float] = (1.0,),
) -> FormSequence:
    """FormSequence of the P1 triples for ``fields`` on one mesh; j and j̃ are shared by construction."""
    for f in [*fields, limit]:
        if f.n_triangles != mesh.n_triangles:
            raise DimensionMismatch(f"coefficient field has {f.n_triangles} values for {mesh.n_triangles} triangles")
    members = [to_form_triple(assemble(mesh, f)) for f in fields]
    return FormSequence(
        members=members,
        limit=to_form_triple(assemble(mesh, limit)),
        omega=shared_omega([*fields, limit]),
        s_values=list(s_values),
        n_values=list(n_values) if n_values is not None else None,
        convergence_tol=settings.FEM_CONVERGENCE_TOL,
    )


def potential_shift_sequence(mesh: Mesh, m: float = 0.0, n_max: int = 20, s_values=(1.0,)) -> FormSequence:
    """m_n = m + 1/n -> m uniformly."""
    T = mesh.n_triangles
    n_values = list(range(1, n_max + 1))
    fields = [CoefficientField.constant(T, m + 1.0 / n) for n in n_values]
    return coefficient_sequence(mesh, fields, CoefficientField.constant(T, m), n_values, s_values)


def resonance_sequence(mesh: Mesh, n_max: int = 20, decades: float = 4.0, s_values=(1.0,)) -> FormSequence:
    """
    m_n = −λ_n with λ_n ↑ λ₁ (the first discrete Dirichlet eigenvalue).

    The gaps λ₁ − λ_n = λ₁·10^(−decades·n/n_max) shrink geometrically; the limit
    m = −λ₁ makes D_m multivalued.
    """
    T = mesh.n_triangles
    lam1 = dirichlet_eigs(assemble(mesh, CoefficientField.identity(T)), 1)[0]
    n_values = list(range(1, n_max + 1))
    fields = [CoefficientField.constant(T, -(lam1 - lam1 * 10.0 ** (-decades * n / n_max))) for n in n_values]
    logger.info(f"Resonance sequence on {mesh.n_vertices} vertices: λ₁ = {lam1:.10g}")
    return coefficient_sequence(mesh, fields, CoefficientField.constant(T, -lam1), n_values, s_values)


def coefficient_scaling_sequence(mesh: Mesh, n_max: int = 20, c: float = 0.0, s_values=(1.0,)) -> FormSequence:
    """a⁽ⁿ⁾_kl = (1 + 1/n)·δ_kl -> δ_kl."""
    T = mesh.n_triangles
    n_values = list(range(1, n_max + 1))
    fields = [CoefficientField.constant(T, c, scale=1.0 + 1.0 / n) for n in n_values]
    return coefficient_sequence(mesh, fields, CoefficientField.constant(T, c), n_values, s_values)


def dtn_semigroup_experiment(
    mesh: Mesh,
    fields: Sequence[CoefficientField],
    limit: CoefficientField,
    t_values: Sequence[float],
    n_values: Sequence[int] | None = None,
    name: str = "dtn-semigroup",
) -> ConvergenceReport:
    """Semigroup convergence e^{−tD_{m_n}} -> e^{−tD_m}; requires 0 ∉ σ(−div(a∇) + m)."""
    check_dirichlet_margin(assemble(mesh, limit))
    seq = coefficient_sequence(mesh, fields, limit, n_values)
    return full_report(seq, name=name, t_values=t_values)


def w_openness_radius(
    mesh: Mesh,
    coeff: CoefficientField | None = None,
    trials: int = 8,
    seed: int | None = None,
    eps_max: float | None = None,
    iterations: int = 12,
) -> float:
    """
    Largest ε (by bisection) such that random sup-norm-ε perturbations keep dim W = 0.

    Returns 0 when the unperturbed field already has dim W > 0.
    """
    coeff = CoefficientField.identity(mesh.n_triangles) if coeff is None else coeff
    seed = settings.DEFAULT_SEED if seed is None else seed
    eps_max = 0.5 * coeff.mu_ell if eps_max is None else min(eps_max, 0.5 * coeff.mu_ell)

    def keeps_uniqueness(eps: float) -> bool:
        rng = np.random.default_rng(seed)
        for _ in range(trials):
            f = to_form_triple(assemble(mesh, coeff.perturbed(rng, eps)))
            if w_space(f).dim:
                return False
        return True

    if w_space(to_form_triple(assemble(mesh, coeff))).dim:
        logger.info("Unperturbed field already has a nontrivial space of non-uniqueness")
        return 0.0
    if keeps_uniqueness(eps_max):
        return eps_max
    lo, hi = 0.0, eps_max
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if keeps_uniqueness(mid):
            lo = mid
        else:
            hi = mid
    logger.info(f"dim W = 0 persists up to perturbation radius {lo:.3e}")
    return lo
