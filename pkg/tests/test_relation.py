"""
Tests for linear relations and the graphs associated with form triples
"""
import json

import numpy as np
import pytest

from app.core.config import settings
from app.core.errors import DimensionMismatch, InvalidInput, NotInvertible, NotSelfAdjoint
from app.services import fixtures
from app.services.forms import FormTriple, reduced_injective_triple, restrict, w_space
from app.services.numkernel import gap_hat, orth_complement, orthonormalize, svd_rank
from app.services.relation import (
    LinearRelation,
    accretivity_check,
    dagger,
    domain,
    euler_semigroup,
    from_form,
    from_operator,
    graph_equal,
    h1_from_form,
    is_symmetric_relation,
    lower_bound,
    mul_part,
    range_of,
    resolvent,
    resolvent_transfer_check,
    resolvent_via_form,
    resolvent_witness,
    selfadjoint_check,
    semigroup,
    shift,
    single_valued_part,
)

SEEDS = [11, 23, 47, 101, 2024]


def _line(x, y):
    return LinearRelation.from_pairs([[x]], [[y]])


@pytest.fixture
def rng():
    return np.random.default_rng(7)


class TestGraphFromForm:
    """A = {(Ju, y) : a(u, v) = (y, jv)} on the worked examples"""

    def test_identity_triple(self):
        A = from_form(fixtures.identity_triple())
        assert A.dim == 3
        assert graph_equal(A, from_operator(np.eye(3)))

    def test_example_5_2_limit_and_members(self):
        assert graph_equal(from_form(fixtures.example_5_2(None)), _line(1.0, 0.0))
        for n in (1, 16, 4**13):
            assert graph_equal(from_form(fixtures.example_5_2(n)), _line(0.0, 1.0))

    @pytest.mark.parametrize("n", [1, 4, 1024, 4**13])
    def test_example_5_4_members(self, n):
        """A_n = {(λ, −nλ)} even when 1/n is tiny"""
        A = from_form(fixtures.example_5_4(n))
        assert graph_equal(A, _line(1.0, -float(n)))

    def test_example_5_14_members(self):
        assert graph_equal(from_form(fixtures.example_5_14(3)), _line(1.0, 3.0))

    def test_example_8_3_is_everything(self):
        A = from_form(fixtures.example_8_3())
        assert A.dim == 2
        assert mul_part(A).dim == 1

    def test_transported_graph_is_m_accretive(self):
        """{(Tu, y) : T*y = Au} with T ∈ ℒ(V, H)"""
        f = fixtures.example_8_2(seed=5)
        A = from_form(f)
        assert accretivity_check(A) == (True, True)

    def test_empty_h(self):
        f = FormTriple.create(np.eye(2), np.zeros((0, 2)))
        assert from_form(f).dim == 0

    def test_graph_pairs_solve_the_form_equation(self, rng):
        """Every (x, y) ∈ A has u with Ju = x and Mu = J†y"""
        for _ in range(10):
            f = fixtures.random_accretive_triple(rng, max_dim=7)
            A = from_form(f)
            assert A.dim == f.dimH
            system = np.vstack([f.J, f.M])
            for k in range(A.dim):
                x, y = A.X[:, k], A.Y[:, k]
                rhs = np.concatenate([x, f.J.conj().T @ y])
                u = np.linalg.lstsq(system, rhs, rcond=None)[0]
                assert np.linalg.norm(system @ u - rhs) < 1e-8


class TestRelationAlgebra:
    """Shifts, adjoints, domains and multivalued parts"""

    def test_default_tol_follows_settings(self, monkeypatch):
        monkeypatch.setattr(settings, "TOL", 1e-6)
        assert LinearRelation(1, np.array([[1.0], [0.0]])).tol == 1e-6

    def test_dagger_swaps_components(self):
        A = _line(1.0, 3.0)
        assert graph_equal(dagger(A), _line(3.0, 1.0))
        assert graph_equal(dagger(dagger(A)), A)

    def test_shift(self):
        assert graph_equal(shift(_line(1.0, 3.0), 2.0), _line(1.0, 5.0))

    def test_domain_and_range(self):
        A = LinearRelation.from_pairs(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))
        assert domain(A).dim == 1
        assert range_of(A).dim == 1

    def test_mul_part(self):
        assert mul_part(_line(0.0, 1.0)).dim == 1
        assert mul_part(from_operator(np.eye(2))).dim == 0

    def test_from_operator_on_subspace(self):
        """B on H1 with A(0) = H1^⊥"""
        H1 = orthonormalize(np.array([[1.0], [1.0], [0.0]]), 1e-10)
        A = from_operator(np.array([[2.0]]), H1)
        assert A.dim == 3
        assert mul_part(A).dim == 2
        assert single_valued_part(A).eigenvalues == pytest.approx([2.0])

    def test_from_operator_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            from_operator(np.eye(2), orthonormalize(np.array([[1.0], [0.0]]), 1e-10))

    def test_graph_equal_rejects_different_spaces(self):
        with pytest.raises(DimensionMismatch):
            graph_equal(_line(1.0, 0.0), from_operator(np.eye(2)))

    def test_json_document(self):
        A = from_form(fixtures.example_5_4(3))
        B = LinearRelation.from_dict(json.loads(json.dumps(A.to_dict())))
        assert graph_equal(A, B, 1e-14)

    def test_malformed_document(self):
        with pytest.raises(InvalidInput):
            LinearRelation.from_dict({"basis": []})


class TestResolvent:
    """Graph resolvent against the form path"""

    def test_example_5_2_gap(self):
        """‖R_n(s) − R(s)‖ = 1/|s|"""
        A = from_form(fixtures.example_5_2(None))
        for s in (0.5, 1.0, 2.0):
            Rn = resolvent(from_form(fixtures.example_5_2(8)), -1j * s)
            assert np.linalg.norm(Rn - resolvent(A, -1j * s), 2) == pytest.approx(1.0 / s, rel=1e-12)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_form_path_agrees(self, seed):
        rng = np.random.default_rng(seed)
        f = fixtures.random_symmetric_triple(rng, max_dim=10)
        A = from_form(f)
        for s in (1.0, -0.5):
            R = resolvent(A, -1j * s)
            assert np.allclose(R, resolvent_via_form(f, s), atol=1e-8)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_witness_reproduces_resolvent(self, seed):
        rng = np.random.default_rng(seed)
        f = fixtures.random_symmetric_triple(rng, max_dim=10)
        z = rng.standard_normal(f.dimH) + 1j * rng.standard_normal(f.dimH)
        u = resolvent_witness(f, 1.0, z)
        assert np.allclose(f.J @ u, resolvent(from_form(f), -1j) @ z, atol=1e-8)

    def test_not_invertible_for_full_relation(self):
        with pytest.raises(NotInvertible):
            resolvent(from_form(fixtures.example_8_3()), -1j)

    def test_not_invertible_at_eigenvalue(self):
        with pytest.raises(NotInvertible):
            resolvent(from_operator(np.diag([1.0, 2.0])), 2.0)

    def test_zero_s_rejected(self):
        with pytest.raises(InvalidInput):
            resolvent_via_form(fixtures.identity_triple(), 0.0)

    def test_resolvent_norm_bound_for_self_adjoint(self, rng):
        A = fixtures.random_positive_graph(rng, 6)
        for s in (0.5, 1.0, 3.0):
            assert np.linalg.norm(resolvent(A, -1j * s), 2) <= 1.0 / s + 1e-12


class TestSelfAdjoint:
    """Self-adjointness, single-valued parts and lower bounds"""

    @pytest.mark.parametrize("seed", SEEDS)
    def test_symmetric_forms_give_self_adjoint_graphs(self, seed):
        rng = np.random.default_rng(seed)
        f = fixtures.random_symmetric_triple(rng, max_dim=10)
        A = from_form(f)
        assert is_symmetric_relation(A)
        assert selfadjoint_check(A)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_h1_is_closure_of_j_of_v(self, seed):
        rng = np.random.default_rng(seed)
        f = fixtures.random_symmetric_triple(rng, max_dim=10)
        H1 = single_valued_part(from_form(f)).H1
        H1_form = h1_from_form(f)
        assert H1.dim == H1_form.dim
        if H1.dim:
            assert gap_hat(H1, H1_form) < 1e-8

    def test_non_symmetric_relation_rejected(self):
        assert not selfadjoint_check(_line(1.0, 1j))
        with pytest.raises(NotSelfAdjoint):
            single_valued_part(from_form(fixtures.example_8_3()))

    def test_lower_bounds_of_examples(self):
        assert lower_bound(from_form(fixtures.example_5_4(7))) == pytest.approx(-7.0)
        assert lower_bound(from_form(fixtures.example_5_14(7))) == pytest.approx(7.0)
        assert lower_bound(from_form(fixtures.example_5_2(3))) == float("inf")

    def test_lower_bound_of_positive_graph(self, rng):
        A = fixtures.random_positive_graph(rng, 5, low=0.5, high=2.0)
        assert 0.5 - 1e-10 <= lower_bound(A) <= 2.0

    def test_empty_s_list_rejected(self):
        with pytest.raises(InvalidInput):
            selfadjoint_check(_line(1.0, 1.0), [])


class TestSemigroup:
    """Spectral semigroup and the Euler product formula"""

    def test_semigroup_of_example_6_1(self):
        """e^{−tA_n} = e^{nt}"""
        for n in (1, 3, 5):
            S = semigroup(from_form(fixtures.example_5_4(n)), 1.0)
            assert abs(S[0, 0]) == pytest.approx(np.exp(n), rel=1e-9)

    def test_semigroup_kills_multivalued_part(self):
        assert np.allclose(semigroup(_line(0.0, 1.0), 1.0), 0.0)

    def test_euler_converges_at_first_order(self, rng):
        A = fixtures.random_positive_graph(rng, 5)
        S = semigroup(A, 1.0)
        errors = [np.linalg.norm(euler_semigroup(A, 1.0, n) - S, 2) for n in (16, 32, 64)]
        assert errors[0] > errors[1] > errors[2]
        assert errors[1] / errors[2] == pytest.approx(2.0, rel=0.1)

    def test_non_positive_t_rejected(self):
        with pytest.raises(InvalidInput):
            semigroup(_line(1.0, 1.0), 0.0)
        with pytest.raises(InvalidInput):
            euler_semigroup(_line(1.0, 1.0), 1.0, 0)


class TestAccretivity:
    """Accretive and m-accretive graphs"""

    @pytest.mark.parametrize("seed", SEEDS)
    def test_accretive_forms_give_m_accretive_graphs(self, seed):
        rng = np.random.default_rng(seed)
        f = fixtures.random_accretive_triple(rng, max_dim=8)
        assert accretivity_check(from_form(f)) == (True, True)

    def test_example_8_3_not_accretive(self):
        assert accretivity_check(from_form(fixtures.example_8_3())) == (False, False)


class TestResolventTransfer:
    """Strong resolvent convergence at one point carries to another"""

    def test_converging_sequence(self, rng):
        B = fixtures.random_positive_graph(rng, 4)
        base = single_valued_part(B).op
        seq = [from_operator(base + np.eye(4) / n) for n in range(1, 21)]
        A = from_operator(base)
        vectors = [np.eye(4)[:, k] for k in range(4)]
        report = resolvent_transfer_check(seq, A, -1j, -2j, vectors)
        assert report.bounded
        assert report.lambda_converges
        assert report.mu_converges
        assert report.ok

    def test_precondition_failure_is_reported(self):
        A = from_form(fixtures.example_8_3())
        report = resolvent_transfer_check([A], A, -1j, -2j, [np.array([1.0])])
        assert report.ok is False
        assert report.message

    def test_no_vectors(self):
        A = _line(1.0, 1.0)
        assert resolvent_transfer_check([A], A, -1j, -2j, []).message == "no vectors"


class TestPropertySuites:
    """Randomized triples with fixed seeds"""

    def test_symmetric_triples(self):
        rng = np.random.default_rng(20240229)
        for _ in range(200):
            f = fixtures.random_symmetric_triple(rng, max_dim=12)
            A = from_form(f)
            assert selfadjoint_check(A)
            for s in (0.1, -0.1, 1.0, -1.0, 10.0, -10.0):
                bound = 1.0 / abs(s)
                assert np.linalg.norm(resolvent(A, -1j * s), 2) <= bound + 1e-10 * max(1.0, bound)
            for s in (1.0, -0.5):
                R = resolvent(A, -1j * s)
                scale = max(1.0, 1.0 / abs(s))
                # (A + isI)^{-1}† = (A − isI)^{-1}
                assert np.linalg.norm(R.conj().T - resolvent(A, 1j * s), 2) <= 1e-10 * scale
                assert np.linalg.norm(R - resolvent_via_form(f, s), 2) <= 1e-10 * scale
                null, mul = svd_rank(R, 1e-9).nullspace, mul_part(A)
                assert null.dim == mul.dim
                assert gap_hat(null, mul) <= 1e-10
            assert graph_equal(A, from_form(restrict(f, orth_complement(w_space(f)))), gap_tol=1e-10)
            assert graph_equal(A, from_form(reduced_injective_triple(f)), gap_tol=1e-10)
            assert lower_bound(A) > -np.inf

    def test_accretive_triples(self):
        rng = np.random.default_rng(20240301)
        for _ in range(200):
            f = fixtures.random_accretive_triple(rng, max_dim=12)
            assert accretivity_check(from_form(f)) == (True, True)

    def test_euler_halving_on_positive_graphs(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            A = fixtures.random_positive_graph(rng, 4)
            S = semigroup(A, 1.0)
            errors = [np.linalg.norm(euler_semigroup(A, 1.0, n) - S, 2) for n in (1000, 2000, 4000)]
            assert errors[0] / errors[1] == pytest.approx(2.0, rel=0.02)
            assert errors[1] / errors[2] == pytest.approx(2.0, rel=0.02)
