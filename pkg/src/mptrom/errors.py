"""Exception and warning types raised across the package."""


class MptromError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(MptromError, ValueError):
    pass


class NonConvergence(MptromError, RuntimeError):
    def __init__(self, iterations, residual, message=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            message
            or f"no convergence after {iterations} iterations (relative residual {residual:.3e})"
        )


class EmptyMatrix(MptromError, ValueError):
    pass


class DegenerateInput(MptromError, ValueError):
    pass


class NotSymmetric(MptromError, ValueError):
    pass


class NonPositiveFrequency(MptromError, ValueError):
    pass


class InvalidGrading(MptromError, ValueError):
    pass


class ThinObjectViolation(InvalidGrading):
    pass


class UnsupportedForIngestedModel(MptromError, NotImplementedError):
    pass


class MissingPostprocData(MptromError, ValueError):
    pass


class MissingTheta0(MissingPostprocData):
    pass


class ParseError(MptromError, ValueError):
    def __init__(self, file, line, message):
        self.file = str(file)
        self.line = line
        super().__init__(f"{file}:{line}: {message}")


class SymmetryViolation(MptromError, ValueError):
    def __init__(self, i, j, defect, name=""):
        self.i, self.j, self.defect = i, j, defect
        prefix = f"{name}: " if name else ""
        super().__init__(f"{prefix}entry ({i}, {j}) asymmetric, defect {defect:.3e}")


class ZeroReference(MptromError, ValueError):
    pass


class CoincidentPositions(MptromError, ValueError):
    pass


class SingularReducedSystem(MptromError, RuntimeError):
    def __init__(self, omega, direction):
        self.omega, self.direction = omega, direction
        super().__init__(f"reduced system singular at omega={omega:g}, direction {direction}")


class StaleFactorization(MptromError, ValueError):
    pass


class EmptyInterval(MptromError, ValueError):
    pass


class NoCandidates(MptromError, RuntimeError):
    pass


class SolveError(MptromError, RuntimeError):
    """A full-order solve failed at a particular frequency."""

    def __init__(self, omega, direction, cause):
        self.omega, self.direction, self.cause = omega, direction, cause
        super().__init__(f"solve failed at omega={omega:g}, direction {direction}: {cause}")


class ConfigError(MptromError, ValueError):
    pass


class InsufficientResolutionWarning(UserWarning):
    pass


class ImaginaryResidueWarning(UserWarning):
    pass


class EmptyIntervalWarning(UserWarning):
    pass


class SnapshotFailure(NonConvergence):
    """One or more snapshot solves failed; ``failures`` lists (index, omega, direction, error)."""

    def __init__(self, failures):
        self.failures = failures
        worst = max(failures, key=lambda f: getattr(f[3], "residual", 0.0))
        detail = ", ".join(f"#{n} (omega={w:g}, dir {d})" for n, w, d, _ in failures)
        super().__init__(
            getattr(worst[3], "iterations", 0),
            getattr(worst[3], "residual", float("nan")),
            f"snapshot solves failed: {detail}",
        )
