"""
Exception hierarchy shared by the numerical services and the CLI.
"""
from __future__ import annotations


class RelformsError(Exception):
    """Base class; ``code`` is what the CLI puts in its stderr JSON."""

    code = "relforms_error"

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


class InvalidInput(RelformsError, ValueError):
    code = "invalid_input"


class DimensionMismatch(RelformsError, ValueError):
    code = "dimension_mismatch"


class NotHermitian(RelformsError, ValueError):
    code = "not_hermitian"


class NotPositiveDefinite(RelformsError, ValueError):
    code = "not_positive_definite"


class NotInvertible(RelformsError):
    """The shifted relation A - lam*I has no bounded inverse, i.e. lam is not in the resolvent set."""

    code = "not_invertible"

    def __init__(self, lam: complex, message: str | None = None):
        self.lam = complex(lam)
        super().__init__(message or f"A - ({self.lam})I is not invertible")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["lambda"] = [self.lam.real, self.lam.imag]
        return d


class NotSelfAdjoint(RelformsError):
    code = "not_self_adjoint"


class InternalInvariantViolation(RelformsError):
    code = "internal_invariant_violation"


class ParseError(RelformsError, ValueError):
    code = "parse_error"

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["line"] = self.line_no
        return d


class DegenerateElement(RelformsError, ValueError):
    code = "degenerate_element"

    def __init__(self, index: int, area: float):
        self.index = index
        self.area = area
        super().__init__(f"triangle {index} has non-positive area {area:.3e}")


class NearDirichletSpectrum(RelformsError):
    code = "near_dirichlet_spectrum"

    def __init__(self, eigenvalue: float, margin: float):
        self.eigenvalue = eigenvalue
        self.margin = margin
        super().__init__(
            f"0 is within {margin:.1e} of the discrete Dirichlet spectrum (closest eigenvalue {eigenvalue:.6e})"
        )
