"""
Self-verifying presets.

Each preset builds its fixture, runs the matching experiment and attaches the
expected outcome as asserted checks, so a preset run exits 0 only when the
table reproduces the worked example.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from app.cli.emit import make_table, table_from_report
from app.cli.schema import ExperimentConfig, ResultTable
from app.core.config import settings
from app.core.errors import InvalidInput
from app.core.logging import get_logger
from app.core.metrics import normalize_preset_label
from app.services import fixtures
from app.services.convergence import ConvergenceReport, full_report, witness_convergence
from app.services.fem2d import (
    CoefficientField,
    assemble,
    constant_coordinates,
    coefficient_scaling_sequence,
    dtn_schur_eigs,
    potential_shift_sequence,
    resonance_sequence,
    steklov_eigs,
)
from app.services.forms import (
    FormTriple,
    adjoint_triple,
    ellipticity,
    is_accretive,
    is_symmetric,
    j_ellipticity_search,
    v_cap_ker,
    w_space,
)
from app.services.mesh import mesh_from_spec
from app.services.numkernel import gap_hat
from app.services.relation import (
    LinearRelation,
    accretivity_check,
    from_form,
    from_operator,
    graph_equal,
    is_symmetric_relation,
    lower_bound,
    mul_part,
    selfadjoint_check,
    semigroup,
)

logger = get_logger(__name__)

PresetKind = Literal["triple", "sequence", "steklov"]

STEKLOV_TOLERANCE = 0.02


@dataclass(frozen=True)
class Preset:
    id: str
    kind: PresetKind
    summary: str
    build: Callable[[ExperimentConfig], ResultTable]
    mesh: str | None = None
    s_values: tuple[float, ...] = (1.0,)


PRESETS: dict[str, Preset] = {}


def _register(preset_id: str, kind: PresetKind, summary: str, mesh: str | None = None, s_values=(1.0,)):
    def decorator(fn: Callable[[ExperimentConfig], ResultTable]):
        PRESETS[preset_id] = Preset(preset_id, kind, summary, fn, mesh, tuple(s_values))
        return fn

    return decorator


def canonical_id(raw: str) -> str:
    key = normalize_preset_label(raw)
    if key not in PRESETS:
        raise InvalidInput(f"unknown preset {raw!r}; known: {', '.join(PRESETS)}")
    return key


def preset(preset_id: str) -> ExperimentConfig:
    """The configuration a preset runs with; ``examples --id <id>`` reproduces it."""
    p = PRESETS[canonical_id(preset_id)]
    return ExperimentConfig(kind="examples", id=p.id, mesh=p.mesh, s_values=list(p.s_values))


def run_preset(preset_id: str, config: ExperimentConfig | None = None) -> ResultTable:
    p = PRESETS[canonical_id(preset_id)]
    base = preset(p.id)
    if config is not None:
        overrides = {k: getattr(config, k) for k in config.model_fields_set if k not in ("kind", "id", "preset")}
        overrides = {k: v for k, v in overrides.items() if v is not None}
        base = base.model_copy(update=overrides)
    logger.info(f"Running preset {p.id}: {p.summary}")
    table = p.build(base)
    logger.debug(f"Preset {p.id} finished with ok={table.ok}")
    return table


# ---------------------------------------------------------------------------
# Shared table builders
# ---------------------------------------------------------------------------


def _triple_table(name: str, f: FormTriple, A: LinearRelation) -> ResultTable:
    """Structural facts of one triple and its graph, as quantity/value rows."""
    search = j_ellipticity_search(f)
    symmetric = is_symmetric_relation(A)
    selfadjoint = symmetric and selfadjoint_check(A)
    accretive, m_accretive = accretivity_check(A)
    rows = [
        ["dimV", f.dimV],
        ["dimH", f.dimH],
        ["dimHt", f.dimHt],
        ["graph_dim", A.dim],
        ["dim_mul_part", mul_part(A).dim],
        ["dimW", w_space(f).dim],
        ["dimVcapKer", v_cap_ker(f).dim],
        ["form_symmetric", is_symmetric(f)],
        ["form_accretive", is_accretive(f)],
        ["j_elliptic", search.satisfied],
        ["j_elliptic_omega", search.omega if search.satisfied else None],
        ["relation_symmetric", symmetric],
        ["self_adjoint", selfadjoint],
        ["accretive", accretive],
        ["m_accretive", m_accretive],
        ["lower_bound", lower_bound(A) if selfadjoint else None],
    ]
    return make_table(name, ["quantity", "value"], rows)


def _line(x: float, y: float) -> LinearRelation:
    return LinearRelation.from_pairs([[x]], [[y]])


def _errors_at(report: ConvergenceReport, index: int = 0) -> list[float]:
    return [r.resolvent_error[index] for r in report.records]


def _rel_close(a: float, b: float, rtol: float) -> bool:
    return abs(a - b) <= rtol * max(1.0, abs(b))


# ---------------------------------------------------------------------------
# Algebraic presets
# ---------------------------------------------------------------------------


@_register("identity", "triple", "identity triple on ℂ³: A = I, self-adjoint with lower bound 1")
def _identity(config: ExperimentConfig) -> ResultTable:
    f = fixtures.identity_triple()
    A = from_form(f)
    table = _triple_table("identity", f, A)
    table.add_check("graph_is_identity", graph_equal(A, from_operator(np.eye(3))))
    table.add_check("self_adjoint", selfadjoint_check(A))
    table.add_check("lower_bound_is_one", abs(lower_bound(A) - 1.0) <= 1e-10)
    return table


@_register(
    "5.2",
    "sequence",
    "a = 0, a_n = (1/n)(u₁v̄₂ + u₂v̄₁): A = ℂ×{0} while A_n = {0}×ℂ, resolvents stay 1/|s| apart",
    s_values=(0.5, 1.0, 2.0),
)
def _example_5_2(config: ExperimentConfig) -> ResultTable:
    s_values = list(config.s_values)
    seq = fixtures.example_5_2_sequence(s_values=s_values)
    report = full_report(seq, name="5.2")
    table = table_from_report(report)
    table.add_check("limit_graph_is_C_x_0", graph_equal(from_form(seq.limit), _line(1.0, 0.0)))
    table.add_check(
        "member_graphs_are_0_x_C", all(graph_equal(from_form(f), _line(0.0, 1.0)) for f in seq.members)
    )
    gaps = all(
        abs(r.resolvent_error[i] - 1.0 / abs(s)) <= 1e-9 for r in report.records for i, s in enumerate(s_values)
    )
    table.add_check("resolvent_gap_is_inverse_s", gaps, detail="‖R_n(s) − R(s)‖ = 1/|s| for every n")
    table.add_check(
        "dim_W_jumps",
        report.limit.dimW == 1 and all(r.dimW_n == 0 for r in report.records),
        detail="dim W(a) = 1, dim W(a_n) = 0",
    )
    table.add_check(
        "resolvents_do_not_converge",
        not any(report.check(f"resolvent_convergence_s={s:g}").passed for s in s_values),
    )
    return table


@_register("5.4", "sequence", "M_n = [[0,1],[1,1/n]]: A_n = {(λ, −nλ)} with lower bounds −n, resolvents converge")
def _example_5_4(config: ExperimentConfig) -> ResultTable:
    seq = fixtures.example_5_4_sequence(s_values=list(config.s_values))
    report = full_report(seq, name="5.4")
    table = table_from_report(report)
    ns = seq.n_values
    table.add_check("limit_graph_is_0_x_C", graph_equal(from_form(seq.limit), _line(0.0, 1.0)))
    table.add_check(
        "member_graphs_are_lines",
        all(graph_equal(from_form(f), _line(1.0, -float(n))) for n, f in zip(ns, seq.members)),
        detail="A_n = {(λ, −nλ)}",
    )
    table.add_check(
        "lower_bounds_are_minus_n",
        all(_rel_close(r.lower_bound_n, -float(n), 1e-9) for n, r in zip(ns, report.records)),
    )
    s = seq.s_values[0]
    table.add_check(
        "resolvent_errors_exact",
        all(
            _rel_close(e, 1.0 / np.hypot(float(n), s), 1e-9)
            for n, e in zip(ns, _errors_at(report))
        ),
        detail="‖R_n(s) − R(s)‖ = 1/√(n² + s²)",
    )
    table.add_check("lower_bound_not_uniform", not report.check("uniform_lower_bound").passed)
    table.add_check("resolvents_converge", report.check(f"resolvent_convergence_s={s:g}").passed)
    return table


@_register("5.13", "sequence", "M = diag(1,0), M_n = diag(1,1/n): A = A_n = I although dim W drops")
def _example_5_13(config: ExperimentConfig) -> ResultTable:
    seq = fixtures.example_5_13_sequence(s_values=list(config.s_values))
    report = full_report(seq, name="5.13")
    table = table_from_report(report)
    identity = from_operator(np.eye(1))
    table.add_check(
        "all_graphs_are_identity",
        graph_equal(from_form(seq.limit), identity) and all(graph_equal(from_form(f), identity) for f in seq.members),
    )
    table.add_check(
        "dim_W_drops",
        report.limit.dimW == 1 and all(r.dimW_n == 0 for r in report.records),
    )
    s = seq.s_values[0]
    table.add_check(
        "resolvents_converge_without_dim_hypothesis",
        report.check(f"resolvent_convergence_s={s:g}").passed,
        detail="the dimension condition is sufficient, not necessary",
    )
    return table


@_register("5.14", "sequence", "M_n = [[0,1],[1,−1/n]]: A_n = {(λ, nλ)} bounded below by 1 while dim V∩ker j drops")
def _example_5_14(config: ExperimentConfig) -> ResultTable:
    seq = fixtures.example_5_14_sequence(s_values=list(config.s_values))
    report = full_report(seq, name="5.14")
    table = table_from_report(report)
    ns = seq.n_values
    table.add_check(
        "member_graphs_are_lines",
        all(graph_equal(from_form(f), _line(1.0, float(n))) for n, f in zip(ns, seq.members)),
    )
    table.add_check("limit_graph_is_0_x_C", graph_equal(from_form(seq.limit), _line(0.0, 1.0)))
    table.add_check(
        "dim_Vcap_drops",
        report.limit.dimVcap == 1 and all(r.dimVcap_n == 0 for r in report.records),
    )
    table.add_check(
        "lower_bound_uniform_without_dim_hypothesis",
        report.check("uniform_lower_bound").passed,
        detail="uniform lower bound holds although dim(V(a_n)∩ker j) ↛ dim(V(a)∩ker j)",
    )
    return table


@_register("5.15", "sequence", "data of 5.2: uniformly bounded below, yet the resolvents do not converge")
def _example_5_15(config: ExperimentConfig) -> ResultTable:
    seq = fixtures.example_5_15_sequence(s_values=list(config.s_values))
    report = full_report(seq, name="5.15")
    table = table_from_report(report)
    s = seq.s_values[0]
    table.add_check("lower_bound_uniform", report.check("uniform_lower_bound").passed)
    table.add_check(
        "resolvents_do_not_converge",
        not report.check(f"resolvent_convergence_s={s:g}").passed,
        detail="a uniform lower bound alone does not give resolvent convergence",
    )
    return table


@_register("6.1", "sequence", "A_n = {(λ, −nλ)}: e^{−tA_n} = e^{nt} blows up, no semigroup convergence")
def _example_6_1(config: ExperimentConfig) -> ResultTable:
    t = 0.1
    seq = fixtures.example_6_1_sequence()
    report = full_report(seq, name="6.1", t_values=[t])
    table = table_from_report(report)
    exact = all(
        _rel_close(float(np.abs(semigroup(from_form(f), t)[0, 0])), float(np.exp(n * t)), 1e-9)
        for n, f in zip(seq.n_values, seq.members)
    )
    table.add_check("semigroups_are_exp_nt", exact, detail=f"e^{{-tA_n}} = e^{{nt}} at t={t:g}")
    small_n = all(
        _rel_close(float(np.abs(semigroup(from_form(fixtures.example_5_4(n)), 1.0)[0, 0])), float(np.exp(n)), 1e-9)
        for n in range(1, 11)
    )
    table.add_check("blow_up_at_t_1", small_n, detail="e^{-A_n} = e^n for n <= 10")
    table.add_check("semigroups_do_not_converge", not report.check(f"semigroup_convergence_t={t:g}").passed)
    return table


# ---------------------------------------------------------------------------
# Dirichlet-to-Neumann presets
# ---------------------------------------------------------------------------


def _mesh(config: ExperimentConfig):
    return mesh_from_spec(config.mesh or "square:16")


def _monotone(values: list[float], strict: bool = False) -> bool:
    pairs = list(zip(values, values[1:]))
    if strict:
        return all(b < a for a, b in pairs)
    return all(b <= a * (1 + 1e-9) + 1e-15 for a, b in pairs)


@_register("7.3", "sequence", "potential shift m_n = m + 1/n: DtN resolvents converge in norm", mesh="square:16")
def _example_7_3(config: ExperimentConfig) -> ResultTable:
    mesh = _mesh(config)
    seq = potential_shift_sequence(mesh, m=config.m, n_max=config.n_max, s_values=list(config.s_values))
    report = full_report(seq, name="7.3")
    vectors = [np.eye(seq.limit.dimH)[:, 0]]
    witnesses = witness_convergence(seq, seq.s_values[0], vectors)
    for rec, wrec in zip(report.records, witnesses.records):
        rec.witness_error = wrec.witness_error
    report.checks += witnesses.checks
    table = table_from_report(report)
    errors = _errors_at(report)
    table.add_check(
        "dim_W_trivial",
        report.limit.dimW == 0 and all(r.dimW_n == 0 for r in report.records),
    )
    table.add_check(
        "resolvent_errors_decrease",
        _monotone(errors[2:]),
        detail=f"first {errors[0]:.3e}, last {errors[-1]:.3e}",
    )
    return table


@_register("7.4", "sequence", "m_n = −λ_n ↑ resonance: DtN lower bounds fall without bound", mesh="square:16")
def _example_7_4(config: ExperimentConfig) -> ResultTable:
    mesh = _mesh(config)
    seq = resonance_sequence(mesh, n_max=config.n_max, s_values=list(config.s_values))
    report = full_report(seq, name="7.4")
    table = table_from_report(report)
    bounds = [r.lower_bound_n for r in report.records]
    table.add_check("lower_bounds_decrease", _monotone(bounds, strict=True))
    table.add_check(
        "lower_bound_unbounded",
        bounds[-1] <= -settings.LOWER_BOUND_THRESHOLD,
        detail=f"last lower bound {bounds[-1]:.6g}",
    )
    table.add_check(
        "limit_multivalued",
        report.limit.dimVcap >= 1,
        detail="the Dirichlet eigenfunction lies in V(a) ∩ ker Tr",
    )
    return table


@_register("7.7", "sequence", "a⁽ⁿ⁾ = (1 + 1/n)δ: coefficient convergence gives resolvent convergence", mesh="square:16")
def _example_7_7(config: ExperimentConfig) -> ResultTable:
    mesh = _mesh(config)
    seq = coefficient_scaling_sequence(mesh, n_max=config.n_max, c=config.m, s_values=list(config.s_values))
    report = full_report(seq, name="7.7")
    table = table_from_report(report)
    s = seq.s_values[0]
    errors = _errors_at(report)
    table.add_check("resolvents_converge", report.check(f"resolvent_convergence_s={s:g}").passed)
    table.add_check("resolvent_errors_decrease", _monotone(errors), detail=f"last {errors[-1]:.3e}")
    return table


# ---------------------------------------------------------------------------
# m-accretive presets
# ---------------------------------------------------------------------------


@_register("8.2", "triple", "transported graph {(Tu, y) : T*y = Au} is m-accretive")
def _example_8_2(config: ExperimentConfig) -> ResultTable:
    f = fixtures.example_8_2(seed=config.seed)
    A = from_form(f)
    table = _triple_table("8.2", f, A)
    accretive, m_accretive = accretivity_check(A)
    table.add_check("m_accretive", accretive and m_accretive)
    W, W_adj = w_space(f), w_space(adjoint_triple(f))
    table.add_check(
        "W_equals_W_adjoint",
        W.dim == W_adj.dim and (W.dim == 0 or gap_hat(W, W_adj) <= settings.GAP_TOL),
        detail=f"dim W(a) = {W.dim}",
    )
    return table


@_register("8.3", "triple", "a(u, v) = u₂v̄₁: the graph is ℂ×ℂ, not accretive, though a is j̃-elliptic")
def _example_8_3(config: ExperimentConfig) -> ResultTable:
    f = fixtures.example_8_3()
    A = from_form(f)
    table = _triple_table("8.3", f, A)
    table.add_check("graph_is_C_x_C", A.dim == 2 * A.dimH)
    table.add_check("not_accretive", not accretivity_check(A)[0])
    table.add_check("compactly_elliptic", ellipticity(f, 1.0).satisfied)
    return table


@_register("8.4", "triple", "mean-free trace: not j-elliptic, still self-adjoint and m-accretive", mesh="square:8")
def _example_8_4(config: ExperimentConfig) -> ResultTable:
    mesh = mesh_from_spec(config.mesh or "square:8")
    f = fixtures.example_8_4(mesh)
    A = from_form(f)
    table = _triple_table("8.4", f, A)
    e = constant_coordinates(assemble(mesh, CoefficientField.identity(mesh.n_triangles)))
    scale = max(1.0, float(e @ e))
    table.add_check(
        "constant_is_witness",
        abs(f.a(e, e)) <= 1e-9 * scale and float(np.linalg.norm(f.J @ e)) <= 1e-9 * scale,
        detail="a(1) = 0 and j(1) = 0",
    )
    table.add_check("not_j_elliptic", not j_ellipticity_search(f).satisfied)
    table.add_check("compactly_elliptic", ellipticity(f, 1.0).satisfied)
    table.add_check("self_adjoint", selfadjoint_check(A))
    table.add_check("m_accretive", accretivity_check(A) == (True, True))
    return table


# ---------------------------------------------------------------------------
# Steklov
# ---------------------------------------------------------------------------


def disk_reference(k: int) -> list[float]:
    """Steklov eigenvalues of the unit disk: 0, 1, 1, 2, 2, ..."""
    return [float((i + 1) // 2) for i in range(k)]


def steklov_reference(mesh_spec: str, m: float, k: int, coefficients: str | None = None) -> list[float] | None:
    """Exact eigenvalues when the problem is the Laplacian on the disk, else None."""
    if mesh_spec.startswith("disk:") and m == 0 and not coefficients:
        return disk_reference(k)
    return None


def steklov_table(name: str, mesh_spec: str, coeff_of, k: int, reference: list[float] | None = None) -> ResultTable:
    """Steklov eigenvalues through the graph and through the Schur complement, side by side."""
    mesh = mesh_from_spec(mesh_spec)
    sys = assemble(mesh, coeff_of(mesh))
    graph = steklov_eigs(sys, k)
    schur = dtn_schur_eigs(sys, k)
    ref = reference or [None] * k
    table = make_table(
        name, ["index", "steklov", "schur", "reference"], [[i, g, s, r] for i, (g, s, r) in enumerate(zip(graph, schur, ref))]
    )
    table.add_check(
        "graph_matches_schur",
        all(_rel_close(g, s, 1e-6) for g, s in zip(graph, schur)),
        detail=f"max deviation {max(abs(g - s) for g, s in zip(graph, schur)):.3e}",
    )
    if reference is not None:
        close = all(
            abs(g - r) <= 1e-6 if r == 0 else abs(g - r) <= STEKLOV_TOLERANCE * r for g, r in zip(graph, reference)
        )
        table.add_check("matches_reference", close, detail=f"relative tolerance {STEKLOV_TOLERANCE:g}")
    return table


@_register("disk-steklov", "steklov", "Steklov eigenvalues of the unit disk: 0, 1, 1, 2, 2", mesh="disk:4")
def _disk_steklov(config: ExperimentConfig) -> ResultTable:
    mesh_spec = config.mesh or "disk:4"
    reference = steklov_reference(mesh_spec, config.m, config.k)
    return steklov_table(
        "disk-steklov",
        mesh_spec,
        lambda mesh: CoefficientField.constant(mesh.n_triangles, config.m),
        config.k,
        reference,
    )


SEQUENCE_PRESETS = [pid for pid, p in PRESETS.items() if p.kind == "sequence"]
