from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from app.core.metrics import CHECKS_TOTAL
from app.services.convergence import Check

Kind = Literal["examples", "dtn-eigs", "dtn-resolvent", "converge", "semigroup", "mesh"]
Cell = bool | int | float | str | None


class ExperimentConfig(BaseModel):
    """
    One CLI run. Loaded from a TOML file and/or flags; unknown keys are errors.
    """

    model_config = ConfigDict(extra="forbid")

    kind: Kind
    id: str | None = None
    preset: str | None = None
    mesh: str | None = None
    coefficients: str | None = None
    m: float = 0.0
    k: int = Field(default=5, ge=1)
    s_values: list[float] = [1.0]
    t_values: list[float] = [0.1, 1.0]
    n_max: int = Field(default=20, ge=1)
    tol: float | None = None
    seed: int | None = None
    out: str | None = None
    format: Literal["csv", "json"] = "csv"
    metrics_out: str | None = None

    @field_validator("tol")
    @classmethod
    def _positive_tol(cls, v):
        if v is not None and not v > 0:
            raise ValueError("tol must be positive")
        return v

    @field_validator("s_values")
    @classmethod
    def _nonzero_s(cls, v):
        if not v or any(s == 0 for s in v):
            raise ValueError("s_values must be a non-empty list of nonzero numbers")
        return v

    @field_validator("t_values")
    @classmethod
    def _positive_t(cls, v):
        if not v or any(t <= 0 for t in v):
            raise ValueError("t_values must be a non-empty list of positive numbers")
        return v

    @model_validator(mode="after")
    def _required_per_kind(self):
        if self.kind == "examples" and not self.id:
            raise ValueError("examples needs an id (or 'all')")
        if self.kind == "converge" and not self.preset:
            raise ValueError("converge needs a preset")
        if self.kind == "mesh" and not self.mesh:
            raise ValueError("mesh needs a mesh spec")
        return self


class ResultTable(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    name: str
    columns: list[str]
    rows: list[list[Cell]] = []
    checks: list[Check] = []
    meta: dict[str, Cell] = {}

    @computed_field
    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.asserted)

    def add_check(self, name: str, passed: bool, detail: str = "", asserted: bool = True) -> None:
        self.checks.append(Check(name=name, passed=bool(passed), asserted=asserted, detail=detail))
        if asserted:
            CHECKS_TOTAL.labels(outcome="passed" if passed else "failed").inc()
