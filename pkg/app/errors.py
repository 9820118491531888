"""Error types raised by the lab services.

Every error carries a short ``code`` (used by the HTTP layer and the CLI
diagnostics) and a ``detail`` dict with the numbers that triggered it.
Input-shape errors are also ``ValueError`` so plain validators keep working.
"""

from typing import Optional


class LabError(Exception):
    code = "lab_error"

    def __init__(self, message: str, detail: Optional[dict] = None):
        super().__init__(message)
        self.message = message
        self.detail = detail or {}

    def as_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "detail": self.detail}


class InputError(LabError, ValueError):
    """Malformed input: wrong shape, wrong class, out-of-range index."""
    code = "input_error"


class PreconditionError(LabError):
    """Numerically well-formed input violating a mathematical precondition."""
    code = "precondition_failed"


class NotHermitian(InputError):
    code = "not_hermitian"


class NotCommuting(PreconditionError):
    code = "not_commuting"

    def __init__(self, pair, norm: float, bound: float):
        super().__init__(
            f"matrices {pair[0]} and {pair[1]} do not commute: "
            f"commutator norm {norm:.3e} exceeds {bound:.3e}",
            {"pair": list(pair), "commutator_norm": norm, "bound": bound},
        )
        self.pair = tuple(pair)
        self.norm = norm


class EigenNonConvergence(LabError):
    code = "eig_non_convergence"

    def __init__(self, iterations: int, reason: str = ""):
        super().__init__(
            f"eigensolver did not converge after {iterations} iterations {reason}".strip(),
            {"iterations": iterations},
        )
        self.iterations = iterations


class PoleOnSpectrum(PreconditionError):
    code = "pole_on_spectrum"


class UnsupportedClass(InputError):
    code = "unsupported_class"


class InvalidSpec(InputError):
    code = "invalid_spec"


class ArityMismatch(InputError):
    code = "arity_mismatch"


class DimensionMismatch(InputError):
    code = "dimension_mismatch"


class NotPathCommuting(PreconditionError):
    code = "not_path_commuting"


class BoxTooSmall(PreconditionError):
    code = "box_too_small"


class NonUniformGrid(InputError):
    code = "non_uniform_grid"


class CayleyPole(PreconditionError):
    code = "cayley_pole"


class WrongHalfPlane(InputError):
    code = "wrong_half_plane"


class PathLeavesDissipative(PreconditionError):
    code = "path_leaves_dissipative"


class IllConditionedPsi(InputError):
    code = "ill_conditioned_psi"


class NotMonotone(InputError):
    code = "not_monotone"


class InvalidFamily(InputError):
    code = "invalid_family"


class ConfigError(LabError):
    code = "config_error"
