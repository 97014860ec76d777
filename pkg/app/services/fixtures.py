"""
Worked examples as form triples and sequences, plus random generators for property suites.

Two-dimensional examples use V = ℂ², H = ℂ with j(u) = u₁ and j̃ = identity.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from app.core.config import settings
from app.services.convergence import FormSequence
from app.services.fem2d import CoefficientField, assemble, projected_trace_triple
from app.services.forms import FormTriple
from app.services.mesh import Mesh
from app.services.relation import LinearRelation, from_operator

# n = 4^k reaches 6.7e7: non-uniform lower bounds cross any threshold below that,
# while 1/n stays far above the rank tolerance
ALGEBRAIC_N_VALUES: list[int] = [4**k for k in range(14)]
# 4^6 = 4096 passes the same threshold while e^{nt} stays finite for t <= 0.17
SEMIGROUP_N_VALUES: list[int] = [4**k for k in range(7)]

J_FIRST = np.array([[1.0, 0.0]])
SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def _triple(M) -> FormTriple:
    return FormTriple.create(np.asarray(M, dtype=float), J_FIRST)


def identity_triple(dim: int = 3) -> FormTriple:
    return FormTriple.create(np.eye(dim), np.eye(dim))


def example_5_2(n: int | None) -> FormTriple:
    """a = 0 and a_n = (1/n)(u₁v̄₂ + u₂v̄₁): A = ℂ×{0}, A_n = {0}×ℂ."""
    return _triple(np.zeros((2, 2)) if n is None else SWAP / n)


def example_5_4(n: int | None) -> FormTriple:
    """M_n = [[0,1],[1,1/n]]: A_n = {(λ, −nλ)}; the limit graph is {0}×ℂ."""
    return _triple(SWAP if n is None else SWAP + np.diag([0.0, 1.0 / n]))


def example_5_13(n: int | None) -> FormTriple:
    """M = diag(1,0), M_n = diag(1,1/n): A = A_n = I while dim W drops."""
    return _triple(np.diag([1.0, 0.0]) if n is None else np.diag([1.0, 1.0 / n]))


def example_5_14(n: int | None) -> FormTriple:
    """M_n = [[0,1],[1,−1/n]]: A_n = {(λ, nλ)}."""
    return _triple(SWAP if n is None else SWAP - np.diag([0.0, 1.0 / n]))


def _sequence(builder, n_values: Sequence[int], omega: float, s_values: Sequence[float]) -> FormSequence:
    return FormSequence(
        members=[builder(n) for n in n_values],
        limit=builder(None),
        omega=omega,
        s_values=list(s_values),
        n_values=list(n_values),
    )


def example_5_2_sequence(n_values=None, s_values=(0.5, 1.0, 2.0)) -> FormSequence:
    return _sequence(example_5_2, n_values or ALGEBRAIC_N_VALUES, 2.0, s_values)


def example_5_4_sequence(n_values=None, s_values=(1.0,)) -> FormSequence:
    return _sequence(example_5_4, n_values or ALGEBRAIC_N_VALUES, 2.0, s_values)


def example_5_13_sequence(n_values=None, s_values=(1.0,)) -> FormSequence:
    return _sequence(example_5_13, n_values or ALGEBRAIC_N_VALUES, 1.0, s_values)


def example_5_14_sequence(n_values=None, s_values=(1.0,)) -> FormSequence:
    return _sequence(example_5_14, n_values or ALGEBRAIC_N_VALUES, 3.0, s_values)


def example_5_15_sequence(n_values=None, s_values=(1.0,)) -> FormSequence:
    """Same data as 5.2: uniformly bounded below, yet the resolvents do not converge."""
    return example_5_2_sequence(n_values, s_values)


def example_6_1_sequence(n_values=None) -> FormSequence:
    """The 5.4 graphs A_n = {(λ, −nλ)}, whose semigroups are e^{nt}."""
    return _sequence(example_5_4, n_values or SEMIGROUP_N_VALUES, 2.0, (1.0,))


def example_8_2(seed: int | None = None, dim_v: int = 4, dim_h: int = 3) -> FormTriple:
    """
    Transported graph {(Tu, y) : T*y = Au} for an accretive H-elliptic a on V = H.

    This is the graph associated with (a, T), so it is m-accretive.
    """
    rng = np.random.default_rng(settings.DEFAULT_SEED if seed is None else seed)
    M = random_accretive_matrix(rng, dim_v) + 0.5 * np.eye(dim_v)
    T = _complex_normal(rng, (dim_h, dim_v))
    return FormTriple.create(M, T)


def example_8_3() -> FormTriple:
    """a(u, v) = u₂v̄₁, j(u) = u₁: the associated graph is ℂ×ℂ and not accretive."""
    return FormTriple.create(np.array([[0.0, 1.0], [0.0, 0.0]]), J_FIRST)


def example_8_4(mesh: Mesh) -> FormTriple:
    """Dirichlet form with the mean-free trace: not j-elliptic, still m-accretive."""
    return projected_trace_triple(assemble(mesh, CoefficientField.identity(mesh.n_triangles)))


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    X = _complex_normal(rng, (n, n))
    return 0.5 * (X + X.conj().T)


def random_accretive_matrix(rng: np.random.Generator, n: int) -> np.ndarray:
    """PSD part of random rank plus a skew-Hermitian part."""
    rank = int(rng.integers(0, n + 1))
    B = _complex_normal(rng, (n, rank))
    S = _complex_normal(rng, (n, n))
    return B @ B.conj().T / max(rank, 1) + 0.5 * (S - S.conj().T)


def _dims(rng: np.random.Generator, max_dim: int) -> tuple[int, int]:
    dim_v = int(rng.integers(1, max_dim + 1))
    dim_h = int(rng.integers(1, max_dim + 1))
    return dim_v, dim_h


def random_symmetric_triple(rng: np.random.Generator, max_dim: int = 12) -> FormTriple:
    """
    Random Hermitian M with a random J and Jt = I.

    When ker J is nontrivial, a third of the draws plant a vector of ker J in
    ker M so that W(a) ≠ {0}.
    """
    dim_v, dim_h = _dims(rng, max_dim)
    M = random_hermitian(rng, dim_v)
    J = _complex_normal(rng, (dim_h, dim_v))
    if dim_v > dim_h and rng.random() < 1 / 3:
        _, _, Vh = np.linalg.svd(J)
        w = Vh[-1].conj()
        P = np.eye(dim_v) - np.outer(w, w.conj())
        M = P @ M @ P
    return FormTriple.create(M, J)


def random_accretive_triple(rng: np.random.Generator, max_dim: int = 12) -> FormTriple:
    dim_v, dim_h = _dims(rng, max_dim)
    return FormTriple.create(random_accretive_matrix(rng, dim_v), _complex_normal(rng, (dim_h, dim_v)))


def random_elliptic_sequence(
    rng: np.random.Generator, max_dim: int = 8, n_values: Sequence[int] = tuple(10**k for k in range(1, 9))
) -> FormSequence:
    """
    a_n = a + e/n for a random symmetric limit a and a Hermitian e with ‖e‖ = 1.

    The members share j and j̃ = I and are uniformly j̃-elliptic at the returned
    omega.
    """
    limit = random_symmetric_triple(rng, max_dim)
    E = random_hermitian(rng, limit.dimV)
    E = E / max(float(np.linalg.norm(E, 2)), 1e-12)
    members = [FormTriple.create(limit.M + E / n, limit.J) for n in n_values]
    lowest = min(float(np.linalg.eigvalsh(f.M)[0]) for f in [*members, limit])
    return FormSequence(
        members=members,
        limit=limit,
        omega=max(0.0, -lowest) + 1.0,
        n_values=list(n_values),
    )


def random_positive_graph(rng: np.random.Generator, dim: int, low: float = 0.5, high: float = 2.0) -> LinearRelation:
    """Operator graph of a Hermitian matrix with spectrum in [low, high]."""
    Q, _ = np.linalg.qr(_complex_normal(rng, (dim, dim)))
    w = rng.uniform(low, high, size=dim)
    return from_operator((Q * w) @ Q.conj().T)
