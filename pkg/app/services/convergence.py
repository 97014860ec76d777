"""
Sequence experiments for form triples a_n -> a sharing (j, j̃).

Weak form convergence is tested as ‖M_n − M‖₂ -> 0. With J and Jt shared and
dim V finite, a bounded sequence u_n ⇀ u converges in norm, so
a_n(u_n, v) − a(u, v) = v†(M_n − M)u_n + v†M(u_n − u) -> 0 exactly when the
matrices converge.

Every "-> 0" below is the finite-sequence surrogate ``decays_to_zero``.
J is a matrix, hence compact, so all resolvent convergence is reported in
operator norm ("uniform").
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, computed_field

from app.core.config import settings
from app.core.errors import DimensionMismatch, InvalidInput
from app.core.logging import get_logger
from app.core.metrics import CHECKS_TOTAL, STAGE_LATENCY_SECONDS
from app.services.forms import FormTriple, ellipticity, v_cap_ker, w_space
from app.services.numkernel import SubspaceBasis, decays_to_zero, gap_delta, projector
from app.services.relation import (
    LinearRelation,
    from_form,
    lower_bound,
    resolvent,
    resolvent_witness,
    semigroup,
)

logger = get_logger(__name__)

Which = Literal["W", "VcapKer"]


@dataclass(frozen=True)
class FormSequence:
    members: list[FormTriple]
    limit: FormTriple
    omega: float = 0.0
    s_values: list[float] = field(default_factory=lambda: [1.0])
    n_values: list[int] | None = None
    convergence_tol: float = field(default_factory=lambda: settings.CONVERGENCE_TOL)

    def __post_init__(self):
        if not self.members:
            raise InvalidInput("a form sequence needs at least one member")
        if self.omega < 0:
            raise InvalidInput("omega must be non-negative")
        if any(s == 0 for s in self.s_values):
            raise InvalidInput("s values must be nonzero")
        n_values = list(self.n_values) if self.n_values is not None else list(range(1, len(self.members) + 1))
        if len(n_values) != len(self.members):
            raise DimensionMismatch(f"{len(n_values)} labels for {len(self.members)} members")
        object.__setattr__(self, "n_values", n_values)
        L = self.limit
        for n, f in zip(n_values, self.members):
            if (f.dimV, f.dimH, f.dimHt) != (L.dimV, L.dimH, L.dimHt):
                raise DimensionMismatch(f"member n={n} has dimensions {(f.dimV, f.dimH, f.dimHt)}")
            if not (np.allclose(f.J, L.J, rtol=0, atol=1e-12) and np.allclose(f.Jt, L.Jt, rtol=0, atol=1e-12)):
                raise DimensionMismatch(f"member n={n} does not share j and j̃ with the limit")


class NRecord(BaseModel):
    n: int
    form_error: float
    dimW_n: int
    dimVcap_n: int
    delta_W: float | None = None
    delta_W_rev: float | None = None
    proj_error_W: float | None = None
    delta_Vcap: float | None = None
    delta_Vcap_rev: float | None = None
    proj_error_Vcap: float | None = None
    resolvent_error: list[float] = []
    lower_bound_n: float | None = None
    semigroup_error: list[float] = []
    witness_error: float | None = None


class LimitRecord(BaseModel):
    dimW: int
    dimVcap: int
    lower_bound: float | None = None


class Check(BaseModel):
    name: str
    passed: bool
    asserted: bool = True
    detail: str = ""


class GapEquivalenceReport(BaseModel):
    which: Which
    dims_converge: bool
    gap_hat_to_zero: bool
    reverse_gap_to_zero: bool
    projector_converges: bool

    @computed_field
    @property
    def agree(self) -> bool:
        flags = {self.dims_converge, self.gap_hat_to_zero, self.reverse_gap_to_zero, self.projector_converges}
        return len(flags) == 1


class ConvergenceReport(BaseModel):
    name: str = "sequence"
    s_values: list[float] = []
    t_values: list[float] = []
    records: list[NRecord] = []
    limit: LimitRecord | None = None
    checks: list[Check] = []

    @computed_field
    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.asserted)

    def add_check(self, name: str, passed: bool, asserted: bool = True, detail: str = "") -> None:
        self.checks.append(Check(name=name, passed=bool(passed), asserted=asserted, detail=detail))
        if asserted:
            CHECKS_TOTAL.labels(outcome="passed" if passed else "failed").inc()
        if asserted and not passed:
            logger.info(f"Check {name} failed for {self.name}: {detail}")

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _tail(values: Sequence) -> list:
    values = list(values)
    return values[len(values) // 2:]


class ConvergenceAnalyzer:
    """
    Per-member graphs and structural subspaces of a FormSequence, computed once.
    """

    def __init__(self, seq: FormSequence, name: str = "sequence"):
        self.seq = seq
        self.name = name

    @cached_property
    def graphs(self) -> list[LinearRelation]:
        with STAGE_LATENCY_SECONDS.labels(stage="graph_construction").time():
            graphs = [from_form(f) for f in self.seq.members]
        logger.debug(f"Built {len(graphs)} member graphs for {self.name}")
        return graphs

    @cached_property
    def limit_graph(self) -> LinearRelation:
        return from_form(self.seq.limit)

    @cached_property
    def w_spaces(self) -> list[SubspaceBasis]:
        return [w_space(f) for f in self.seq.members]

    @cached_property
    def w_limit(self) -> SubspaceBasis:
        return w_space(self.seq.limit)

    @cached_property
    def vcap_spaces(self) -> list[SubspaceBasis]:
        return [v_cap_ker(f) for f in self.seq.members]

    @cached_property
    def vcap_limit(self) -> SubspaceBasis:
        return v_cap_ker(self.seq.limit)

    @cached_property
    def form_errors(self) -> list[float]:
        return [float(np.linalg.norm(f.M - self.seq.limit.M, 2)) for f in self.seq.members]

    @cached_property
    def lower_bounds(self) -> list[float]:
        return [lower_bound(A) for A in self.graphs]

    def spaces(self, which: Which) -> tuple[list[SubspaceBasis], SubspaceBasis]:
        if which == "W":
            return self.w_spaces, self.w_limit
        if which == "VcapKer":
            return self.vcap_spaces, self.vcap_limit
        raise InvalidInput(f"unknown subspace choice {which!r}")

    def dims_converge(self, which: Which) -> bool:
        members, limit = self.spaces(which)
        return all(U.dim == limit.dim for U in _tail(members))

    def new_report(self) -> ConvergenceReport:
        return ConvergenceReport(
            name=self.name,
            s_values=list(self.seq.s_values),
            records=[
                NRecord(n=n, form_error=e, dimW_n=W.dim, dimVcap_n=V.dim)
                for n, e, W, V in zip(self.seq.n_values, self.form_errors, self.w_spaces, self.vcap_spaces)
            ],
            limit=LimitRecord(dimW=self.w_limit.dim, dimVcap=self.vcap_limit.dim),
        )

    def uniform_ellipticity(self) -> tuple[float, bool]:
        forms = [*self.seq.members, self.seq.limit]
        mu_min = min(ellipticity(f, self.seq.omega).mu for f in forms)
        return mu_min, mu_min > self.seq.limit.tol

    def weak_convergence(self) -> tuple[list[float], bool]:
        errors = self.form_errors
        return errors, decays_to_zero(errors, self.seq.convergence_tol, settings.DECAY_RATIO)

    def fill_dims(self, report: ConvergenceReport) -> None:
        for which, prefix in (("W", "W"), ("VcapKer", "Vcap")):
            members, limit = self.spaces(which)
            P = projector(limit)
            deltas = []
            for rec, U in zip(report.records, members):
                d = gap_delta(U, limit)
                r = gap_delta(limit, U)
                setattr(rec, f"delta_{prefix}", d)
                setattr(rec, f"delta_{prefix}_rev", r)
                setattr(rec, f"proj_error_{prefix}", float(np.linalg.norm(projector(U) - P, 2)))
                deltas.append(d)

            dims = [U.dim for U in members]
            last_bad = max((i for i, d in enumerate(dims) if d > limit.dim), default=-1)
            threshold = self.seq.n_values[last_bad + 1] if last_bad + 1 < len(dims) else None
            semicontinuous = all(d <= limit.dim for d in _tail(dims))
            report.add_check(
                f"semicontinuity_{prefix}",
                semicontinuous,
                detail=f"dim {prefix}(a)={limit.dim}; dim {prefix}(a_n) <= dim {prefix}(a) from n={threshold}",
            )
            report.add_check(
                f"one_sided_gap_{prefix}",
                decays_to_zero(deltas, self.seq.convergence_tol, settings.DECAY_RATIO),
                detail=f"last δ({prefix}_n, {prefix})={deltas[-1]:.3e}",
            )

    def gap_equivalence(self, which: Which) -> GapEquivalenceReport:
        members, limit = self.spaces(which)
        tol = self.seq.convergence_tol
        ratio = settings.DECAY_RATIO
        P = projector(limit)
        hats = [max(gap_delta(U, limit), gap_delta(limit, U)) for U in members]
        revs = [gap_delta(limit, U) for U in members]
        projs = [float(np.linalg.norm(projector(U) - P, 2)) for U in members]
        return GapEquivalenceReport(
            which=which,
            dims_converge=self.dims_converge(which),
            gap_hat_to_zero=decays_to_zero(hats, tol, ratio),
            reverse_gap_to_zero=decays_to_zero(revs, tol, ratio),
            projector_converges=decays_to_zero(projs, tol, ratio),
        )

    def fill_resolvents(self, report: ConvergenceReport) -> bool:
        """Errors ‖R_n(s) − R(s)‖₂ per s; returns whether the dim-W hypothesis holds."""
        hypothesis = self.dims_converge("W")
        with STAGE_LATENCY_SECONDS.labels(stage="resolvent_sweep").time():
            for s in self.seq.s_values:
                R = resolvent(self.limit_graph, -1j * s)
                errors = []
                for rec, A in zip(report.records, self.graphs):
                    e = float(np.linalg.norm(resolvent(A, -1j * s) - R, 2))
                    rec.resolvent_error.append(e)
                    errors.append(e)
                converges = decays_to_zero(errors, self.seq.convergence_tol, settings.DECAY_RATIO)
                report.add_check(
                    f"resolvent_convergence_s={s:g}",
                    converges,
                    asserted=hypothesis,
                    detail=f"dim W hypothesis {'holds' if hypothesis else 'fails'}; last error {errors[-1]:.3e}",
                )
        return hypothesis

    def fill_lower_bounds(self, report: ConvergenceReport) -> tuple[float, bool]:
        bounds = self.lower_bounds
        for rec, b in zip(report.records, bounds):
            rec.lower_bound_n = b
        if report.limit is not None:
            report.limit.lower_bound = lower_bound(self.limit_graph)
        bound = min(bounds)
        uniform = bound > -settings.LOWER_BOUND_THRESHOLD
        hypothesis = self.dims_converge("VcapKer")
        report.add_check(
            "uniform_lower_bound",
            uniform,
            asserted=hypothesis,
            detail=f"min lower bound {bound:.6g}; dim V∩ker j hypothesis {'holds' if hypothesis else 'fails'}",
        )
        return bound, uniform

    def fill_semigroups(self, report: ConvergenceReport, t_values: Sequence[float]) -> None:
        if any(t <= 0 for t in t_values):
            raise InvalidInput("t values must be positive")
        report.t_values = list(t_values)
        bound = min(self.lower_bounds)
        hypotheses = bound > -settings.LOWER_BOUND_THRESHOLD and self.dims_converge("W")
        for t in t_values:
            S = semigroup(self.limit_graph, t)
            errors = []
            with np.errstate(over="ignore", invalid="ignore"):
                for rec, A in zip(report.records, self.graphs):
                    e = float(np.linalg.norm(semigroup(A, t) - S, 2))
                    rec.semigroup_error.append(e)
                    errors.append(e)
            report.add_check(
                f"semigroup_convergence_t={t:g}",
                decays_to_zero(errors, self.seq.convergence_tol, settings.DECAY_RATIO),
                asserted=hypotheses,
                detail=f"last error {errors[-1]:.3e}",
            )

    def fill_witnesses(self, report: ConvergenceReport, s: float, vectors: Sequence) -> None:
        Z = [np.asarray(z, dtype=complex).reshape(-1) for z in vectors]
        if not Z:
            raise InvalidInput("witness convergence needs at least one vector")
        limit_witness = [resolvent_witness(self.seq.limit, s, z) for z in Z]
        errors = []
        for rec, f in zip(report.records, self.seq.members):
            e = max(float(np.linalg.norm(resolvent_witness(f, s, z) - u)) for z, u in zip(Z, limit_witness))
            rec.witness_error = e
            errors.append(e)
        report.add_check(
            "witness_convergence",
            decays_to_zero(errors, self.seq.convergence_tol, settings.DECAY_RATIO),
            asserted=self.w_limit.dim == 0,
            detail=f"dim W(a)={self.w_limit.dim}; last error {errors[-1]:.3e}",
        )


def check_uniform_ellipticity(seq: FormSequence) -> tuple[float, bool]:
    return ConvergenceAnalyzer(seq).uniform_ellipticity()


def check_weak_convergence(seq: FormSequence) -> tuple[list[float], bool]:
    return ConvergenceAnalyzer(seq).weak_convergence()


def dim_track(seq: FormSequence) -> ConvergenceReport:
    analyzer = ConvergenceAnalyzer(seq)
    report = analyzer.new_report()
    analyzer.fill_dims(report)
    return report


def gap_equivalence_report(seq: FormSequence, which: Which = "W") -> GapEquivalenceReport:
    return ConvergenceAnalyzer(seq).gap_equivalence(which)


def resolvent_convergence(seq: FormSequence) -> ConvergenceReport:
    analyzer = ConvergenceAnalyzer(seq)
    report = analyzer.new_report()
    analyzer.fill_resolvents(report)
    return report


def uniform_lower_bound(seq: FormSequence) -> tuple[float, bool]:
    analyzer = ConvergenceAnalyzer(seq)
    return analyzer.fill_lower_bounds(analyzer.new_report())


def semigroup_convergence(seq: FormSequence, t_values: Sequence[float]) -> ConvergenceReport:
    analyzer = ConvergenceAnalyzer(seq)
    report = analyzer.new_report()
    analyzer.fill_semigroups(report, t_values)
    return report


def witness_convergence(seq: FormSequence, s: float, vectors: Sequence) -> ConvergenceReport:
    analyzer = ConvergenceAnalyzer(seq)
    report = analyzer.new_report()
    analyzer.fill_witnesses(report, s, vectors)
    return report


def full_report(
    seq: FormSequence,
    name: str = "sequence",
    t_values: Sequence[float] = (),
    lower_bounds: bool = True,
) -> ConvergenceReport:
    """Every per-n column at once; what the CLI emits for ``converge``."""
    analyzer = ConvergenceAnalyzer(seq, name=name)
    report = analyzer.new_report()
    mu_min, elliptic = analyzer.uniform_ellipticity()
    report.add_check("uniform_ellipticity", elliptic, detail=f"mu_min={mu_min:.6g} at omega={seq.omega:g}")
    _, weak = analyzer.weak_convergence()
    report.add_check("weak_convergence", weak, detail=f"last ‖M_n − M‖={analyzer.form_errors[-1]:.3e}")
    analyzer.fill_dims(report)
    for which in ("W", "VcapKer"):
        gap = analyzer.gap_equivalence(which)
        report.add_check(f"gap_lemma_{which}", gap.agree, detail=gap.model_dump_json())
    analyzer.fill_resolvents(report)
    if lower_bounds:
        analyzer.fill_lower_bounds(report)
    if t_values:
        analyzer.fill_semigroups(report, t_values)
    return report
