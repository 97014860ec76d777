"""
Command execution for ``relforms``.

Exit codes: 0 when every asserted check passes, 2 when one fails, 1 on input
or IO errors (with a JSON error object on stderr).
"""
from __future__ import annotations

import asyncio
import functools
import json
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Callable
from uuid import uuid4

import numpy as np
from pydantic import ValidationError

from app.cli.emit import log_checks, make_table, render, table_from_report, write_output
from app.cli.presets import PRESETS, canonical_id, run_preset, steklov_reference, steklov_table
from app.cli.schema import ExperimentConfig, ResultTable
from app.core.config import settings
from app.core.errors import InvalidInput, RelformsError
from app.core.logging import get_logger, run_scope
from app.core.metrics import EXPERIMENTS_TOTAL, STAGE_LATENCY_SECONDS, export_metrics
from app.services.battery import run_battery
from app.services.fem2d import CoefficientField, assemble, dtn_semigroup_experiment, to_form_triple
from app.services.mesh import Mesh, mesh_from_spec, mesh_write
from app.services.relation import from_form, resolvent, resolvent_via_form

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_CHECK_FAILED = 2

DEFAULT_MESH = "square:8"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def _flatten(data: dict[str, Any]) -> dict[str, Any]:
    """TOML tables only group keys; every leaf key must be unique."""
    out: dict[str, Any] = {}
    for key, value in data.items():
        items = _flatten(value).items() if isinstance(value, dict) else [(key, value)]
        for k, v in items:
            k = k.replace("-", "_")
            if k in out:
                raise InvalidInput(f"config key {k!r} is given more than once")
            out[k] = v
    return out


def load_config_file(path: str) -> dict[str, Any]:
    try:
        raw = Path(path).read_text()
    except OSError as e:
        raise InvalidInput(f"cannot read config file {path!r}: {e}") from e
    try:
        return _flatten(tomllib.loads(raw))
    except tomllib.TOMLDecodeError as e:
        raise InvalidInput(f"cannot parse config file {path!r}: {e}") from e


def build_config(flags: dict[str, Any], config_path: str | None = None) -> ExperimentConfig:
    """File values first, then every flag that was actually given."""
    data = load_config_file(config_path) if config_path else {}
    data.update({k: v for k, v in flags.items() if v is not None})
    return ExperimentConfig.model_validate(data)


def _coefficients(config: ExperimentConfig) -> Callable[[Mesh], CoefficientField]:
    """Coefficient file (if any) with the potential shifted by ``m``."""

    def build(mesh: Mesh) -> CoefficientField:
        if config.coefficients:
            try:
                payload = json.loads(Path(config.coefficients).read_text())
            except OSError as e:
                raise InvalidInput(f"cannot read coefficient file {config.coefficients!r}: {e}") from e
            return CoefficientField.from_json(payload, mesh.n_triangles).shifted(config.m)
        return CoefficientField.constant(mesh.n_triangles, config.m)

    return build


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _examples(config: ExperimentConfig) -> list[ResultTable]:
    ids = list(PRESETS) if config.id == "all" else [canonical_id(config.id)]
    run_one = functools.partial(run_preset, config=config)
    return asyncio.run(run_battery(ids, run_one))


def _converge(config: ExperimentConfig) -> list[ResultTable]:
    pid = canonical_id(config.preset)
    if PRESETS[pid].kind != "sequence":
        raise InvalidInput(f"preset {pid!r} is not a sequence preset")
    return [run_preset(pid, config)]


def _dtn_eigs(config: ExperimentConfig) -> list[ResultTable]:
    mesh_spec = config.mesh or DEFAULT_MESH
    reference = steklov_reference(mesh_spec, config.m, config.k, config.coefficients)
    return [steklov_table("dtn-eigs", mesh_spec, _coefficients(config), config.k, reference)]


def _dtn_resolvent(config: ExperimentConfig) -> list[ResultTable]:
    mesh = mesh_from_spec(config.mesh or DEFAULT_MESH)
    f = to_form_triple(assemble(mesh, _coefficients(config)(mesh)))
    A = from_form(f)
    rows = []
    with STAGE_LATENCY_SECONDS.labels(stage="resolvent_sweep").time():
        for s in config.s_values:
            R = resolvent(A, -1j * s)
            norm = float(np.linalg.norm(R, 2))
            dual = float(np.linalg.norm(R - resolvent_via_form(f, s), 2))
            rows.append([s, norm, 1.0 / abs(s), dual, complex(np.trace(R))])
    table = make_table("dtn-resolvent", ["s", "norm", "bound", "dual_path_error", "trace"], rows)
    table.add_check(
        "norm_at_most_inverse_s",
        all(norm <= bound * (1 + 1e-8) for _, norm, bound, _, _ in rows),
        detail="‖(D + isI)⁻¹‖ ≤ 1/|s| for self-adjoint D",
    )
    table.add_check(
        "graph_and_form_paths_agree",
        all(dual <= 1e-8 * max(1.0, norm) for _, norm, _, dual, _ in rows),
    )
    return [table]


def _semigroup(config: ExperimentConfig) -> list[ResultTable]:
    mesh = mesh_from_spec(config.mesh or DEFAULT_MESH)
    limit = _coefficients(config)(mesh)
    n_values = list(range(1, config.n_max + 1))
    fields = [limit.shifted(1.0 / n) for n in n_values]
    report = dtn_semigroup_experiment(mesh, fields, limit, config.t_values, n_values, name="semigroup")
    return [table_from_report(report)]


_DISPATCH: dict[str, Callable[[ExperimentConfig], list[ResultTable]]] = {
    "examples": _examples,
    "converge": _converge,
    "dtn-eigs": _dtn_eigs,
    "dtn-resolvent": _dtn_resolvent,
    "semigroup": _semigroup,
}


def execute(config: ExperimentConfig) -> tuple[str, bool]:
    """(output text, every asserted check passed)."""
    if config.kind == "mesh":
        mesh = mesh_from_spec(config.mesh)
        logger.info(f"Mesh {config.mesh}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")
        return mesh_write(mesh), True
    tables = _DISPATCH[config.kind](config)
    log_checks(tables)
    return render(tables, config.format), all(t.ok for t in tables)


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def error_payload(exc: BaseException) -> dict[str, Any]:
    if isinstance(exc, RelformsError):
        return exc.to_dict()
    if isinstance(exc, ValidationError):
        return {"error": "invalid_config", "message": str(exc)}
    if isinstance(exc, OSError):
        return {"error": "io_error", "message": str(exc)}
    return {"error": "invalid_input", "message": str(exc)}


def report_error(exc: BaseException) -> None:
    logger.error(f"Run failed: {exc}")
    sys.stderr.write(json.dumps(error_payload(exc)) + "\n")


def _finish(config: ExperimentConfig, outcome: str) -> None:
    EXPERIMENTS_TOTAL.labels(kind=config.kind, outcome=outcome).inc()
    metrics_path = config.metrics_out or settings.METRICS_PATH
    if metrics_path:
        try:
            export_metrics(metrics_path)
        except OSError as e:
            logger.warning(f"Could not write metrics to {metrics_path}: {e}")
    logger.info(f"Run finished: kind={config.kind} outcome={outcome}")


def run(config: ExperimentConfig) -> int:
    with run_scope(uuid4().hex[:12]):
        previous_tol = settings.TOL
        outcome = "error"
        try:
            if config.tol is not None:
                settings.TOL = config.tol
            text, ok = execute(config)
            write_output(text, config.out)
            outcome = "ok" if ok else "failed_check"
            return EXIT_OK if ok else EXIT_CHECK_FAILED
        except (RelformsError, ValueError, OSError) as e:
            report_error(e)
            return EXIT_INPUT_ERROR
        finally:
            settings.TOL = previous_tol
            _finish(config, outcome)


def run_from_flags(flags: dict[str, Any], config_path: str | None = None) -> int:
    try:
        config = build_config(flags, config_path)
    except (RelformsError, ValueError) as e:
        report_error(e)
        return EXIT_INPUT_ERROR
    return run(config)
