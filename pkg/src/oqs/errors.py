class OQSError(Exception):
    """Base class for library errors."""


class InvalidModelError(OQSError, ValueError):
    pass


class ContractViolation(OQSError, ValueError):
    pass


class DegenerateCutoffError(OQSError, ValueError):
    """Drude pole coincides with a Matsubara pole (beta*Ec == 2*pi*l)."""


class DegenerateDecompositionError(OQSError, ValueError):
    pass


class DegenerateSteadyStateError(OQSError, RuntimeError):
    pass


class StiffnessError(OQSError, RuntimeError):
    def __init__(self, message, t_reached):
        super().__init__(message)
        self.t_reached = t_reached


class NumericalDegeneracyError(OQSError, RuntimeError):
    pass


class ConfigError(OQSError, ValueError):
    pass
