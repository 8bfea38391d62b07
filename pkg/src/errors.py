"""
Exception hierarchy for the GBDT toolkit.
Every error carries enough context (step index, spectral point, field name)
to be reported without a traceback.
"""

from typing import Optional


class GbdtError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(GbdtError):
    """Matrix shapes are mutually inconsistent."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ParseError(GbdtError):
    """The problem file is not a well-formed problem document."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        context = []
        if line is not None:
            context.append(f"line {line}")
        if field is not None:
            context.append(f"field '{field}'")
        prefix = f"[{', '.join(context)}] " if context else ""
        super().__init__(f"{prefix}{message}")


class UnknownGenerator(ParseError):
    """The potential record names a generator type that does not exist."""


class NotUnitary(GbdtError):
    """A generating matrix U_k fails the unitarity tolerance."""

    def __init__(self, k: int, residual: float):
        self.k = k
        self.residual = residual
        super().__init__(f"U_{k} is not unitary (‖U U* − I‖_F = {residual:.3e})")


class ReportIoError(GbdtError):
    """Writing a report failed."""


class NumericalError(GbdtError):
    """Base class for numerical breakdowns (exit code 2)."""


class SingularMatrix(NumericalError):
    """A pivot of the triangular factorization fell below threshold."""


class NotPositiveDefinite(NumericalError):
    """Cholesky met a non-positive pivot."""


class Overflow(NumericalError):
    """Intermediate norms left the representable range."""


class NoConvergence(NumericalError):
    """An iterative diagnostic ran out of its iteration budget."""


class SingularS(NumericalError):
    """det S_k ≈ 0 in a weak-mode run."""

    def __init__(self, k: int, detail: str = ""):
        self.k = k
        super().__init__(f"SingularS({k})" + (f": {detail}" if detail else ""))


class NumericalBreakdown(NumericalError):
    """S_k failed positivity in a strict-mode run."""

    def __init__(self, k: int, detail: str = ""):
        self.k = k
        super().__init__(f"NumericalBreakdown({k})" + (f": {detail}" if detail else ""))


class FactorizationFailure(NumericalError):
    """The unitary factor W_k could not be constructed."""

    def __init__(self, k: int, detail: str = ""):
        self.k = k
        super().__init__(f"FactorizationFailure({k})" + (f": {detail}" if detail else ""))


class SpectralCollision(NumericalError):
    """A requested spectral point lies within threshold of σ(α)."""

    def __init__(self, z: complex, distance: float):
        self.z = z
        self.distance = distance
        super().__init__(f"SpectralCollision: z = {z} is within {distance:.3e} of σ(α)")


class ZeroSpectralParameter(NumericalError):
    """The spectral parameter z = 0 was requested."""

    def __init__(self):
        super().__init__("ZeroSpectralParameter: z must be nonzero")
