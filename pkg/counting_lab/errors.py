"""Exception hierarchy of the laboratory.

Every error may carry a ``stage`` tag (set by the scenario pipeline) and a
``details`` dict that is written verbatim into failure reports.
"""

STAGE_EXIT_CODES = {
    'config': 2,
    'generate': 3,
    'subordination': 4,
    'noncondensing': 5,
    'lacuna': 6,
    'bounds': 7,
    'determinant': 8,
    'sweep': 9,
    'corollary': 10,
    'counterexample': 11,
}


class LabError(Exception):
    def __init__(self, message, *, stage=None, **details):
        super().__init__(message)
        self.message = message
        self.stage = stage
        self.details = details

    @property
    def exit_code(self):
        return STAGE_EXIT_CODES.get(self.stage, 1)

    def to_dict(self):
        return {
            'error': type(self).__name__,
            'message': self.message,
            'stage': self.stage,
            'details': {key: repr(value) for key, value in self.details.items()},
        }


class SpectrumError(LabError):
    """Invalid or degenerate eigenvalue data."""


class PreconditionError(LabError):
    """A hypothesis of the construction does not hold; the message names it."""


class PoleError(LabError):
    """Spectral parameter on the spectrum."""


class SolverError(LabError):
    """Dense eigensolver failed or returned pairs with large residuals."""


class ContourError(LabError):
    """Winding or rectangle construction failed at the given truncation."""


class QuadratureError(LabError):
    """Quadrature did not reach the requested tolerance."""


class ConfigError(LabError):
    def __init__(self, message, *, stage='config', **details):
        super().__init__(message, stage=stage, **details)


class VerificationError(LabError):
    """A brute-force oracle disagrees with the construction."""


class ArtifactError(LabError):
    """Malformed report or matrix file."""


class NumericalError(LabError):
    """A numpy or scipy exception escaped a stage; ``details`` keeps its type and text."""
