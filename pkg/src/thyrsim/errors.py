"""Exception types shared across the toolkit."""


class ThyrsimError(Exception):
    """Base class for all toolkit errors."""


class OutOfRange(ThyrsimError):
    """Quasi-static phasor operating point is infeasible (arccos out of [-1, 1])."""


class DegenerateVoltage(ThyrsimError):
    """Terminal voltage magnitude below the floor; angle/commutation undefined."""


class CommutationFailure(ThyrsimError):
    """Incoming thyristor current failed to reach the DC current before the next firing."""


class NonConverged(ThyrsimError):
    """Event localization or an inner iteration failed to converge."""


class NoConvergence(ThyrsimError):
    """Iterative solve (equilibrium, periodic steady state) did not converge."""

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class StepFailure(ThyrsimError):
    """Time integration step could not be completed."""


class AlgebraicSolveFailure(ThyrsimError):
    """Algebraic constraints could not be satisfied at a step."""


class SingularAzz(ThyrsimError):
    """Algebraic Jacobian singular at the operating point (index-1 violation)."""


class NonEquilibrium(ThyrsimError):
    """Linearization requested at a point that is not an equilibrium."""


class EigenFailure(ThyrsimError):
    """Eigen-decomposition failed."""


class DanglingConnection(ThyrsimError):
    """Composition connection references a variable that does not exist."""


class UnitMismatch(ThyrsimError):
    """Connected endpoints carry incompatible units."""


class NotSettled(ThyrsimError):
    """Perturbation response had not reached periodic steady state in the window."""


class NonlinearResponse(ThyrsimError):
    """Harmonic distortion of the perturbation response exceeds the threshold."""


class WindowMismatch(ThyrsimError):
    """Tone-extraction window does not span an integer number of periods."""


class GridMismatch(ThyrsimError):
    """Frequency-response comparison on differing frequency grids."""


class ConfigError(ThyrsimError):
    """Scenario file is malformed or fails schema validation."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
