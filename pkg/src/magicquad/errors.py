"""Exception hierarchy shared across the package."""


class MagicQuadError(Exception):
    """Base class for all package errors."""


class ConfigError(MagicQuadError):
    """Malformed or inconsistent run configuration."""


class NumericalError(MagicQuadError):
    """Base class for failures of the numerical machinery."""


class InvalidBoundsError(ConfigError):
    """Integration or grid bounds are not a proper interval."""


class ToleranceNotMetError(NumericalError):
    """Adaptive quadrature exhausted its subdivision budget."""


class NonFiniteIntegrandError(NumericalError):
    """An integrand evaluation returned NaN or infinity."""


class InadmissibleEtaError(ConfigError):
    """Damping value outside the admissible range of the payoff transform."""


class PoleError(ConfigError):
    """Damping value too close to a pole of the payoff transform."""


class InvalidParamsError(ConfigError):
    """Model parameters violate the model's own parameter domain."""


class StripViolationError(NumericalError):
    """Complex argument outside the model's strip of analyticity."""


class InfeasibleEtaError(ConfigError):
    """No damping value is jointly admissible for payoff and model box."""


class DegenerateSetError(ConfigError):
    """Training set contains no nonzero integrand."""


class DimensionMismatchError(MagicQuadError):
    """Array arguments disagree with the trained rule's dimensions."""


class MalformedFileError(MagicQuadError):
    """Rule file cannot be parsed or is missing required fields."""


class VersionMismatchError(MalformedFileError):
    """Rule file was written with an unsupported format version."""


class SpecMismatchError(MagicQuadError):
    """Trained rule and pricing request disagree on payoff/model/eta/domain."""


class RejectionStarvationError(NumericalError):
    """Parameter box rejection sampling acceptance rate collapsed."""


class ExtrapolationWarning(UserWarning):
    """Request parameters fall outside the box the rule was trained on."""
