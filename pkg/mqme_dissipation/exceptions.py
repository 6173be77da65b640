class MqmeDissipationError(Exception):
    """
    Base class of every error raised by the package.
    """


class ParameterError(MqmeDissipationError, ValueError):
    """
    Invalid physical or numerical parameter.
    """


class DomainError(ParameterError):
    """
    Function evaluated outside of its domain (for example a negative frequency).
    """


class DegenerateRatesError(ParameterError):
    """
    Two-level closed form requested with K12 + K21 = 0.
    """


class DiscretizationError(MqmeDissipationError):
    """
    Discretized bath does not recover the continuum reorganization energy.

    Attributes:
        recovered (float): Sum of the mode reorganization energies.
        expected (float): Truncated continuum integral.
    """

    def __init__(self, message, recovered, expected):
        super().__init__(message)
        self.recovered = recovered
        self.expected = expected


class QuadratureError(MqmeDissipationError):
    """
    Adaptive quadrature did not converge.

    Attributes:
        residual (float): Absolute error estimate returned by the integrator.
    """

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class StructuralError(MqmeDissipationError):
    """
    Rate generator whose kernel is not one-dimensional (disconnected states).
    """


class HierarchyMemoryError(MqmeDissipationError):
    """
    Hierarchy too large for the configured memory cap.

    Attributes:
        estimate_bytes (int): Estimated memory footprint of the propagation.
    """

    def __init__(self, message, estimate_bytes):
        super().__init__(message)
        self.estimate_bytes = estimate_bytes


class DivergenceError(MqmeDissipationError):
    """
    Adaptive step size fell below the floor.
    """


class StationarityError(MqmeDissipationError):
    """
    Drift-correction window where populations still evolve.

    Attributes:
        max_rate (float): Largest |dP/dt| found inside the window.
    """

    def __init__(self, message, max_rate):
        super().__init__(message)
        self.max_rate = max_rate


class ConfigError(MqmeDissipationError):
    """
    Experiment configuration could not be parsed or validated.

    Attributes:
        field (str): Dotted name of the offending field, if known.
        line (int): Line of the offending entry in the file, if known.
    """

    def __init__(self, message, field=None, line=None):
        location = ""
        if field is not None:
            location += f" [field: {field}]"
        if line is not None:
            location += f" [line: {line}]"
        super().__init__(message + location)
        self.field = field
        self.line = line


class GridMismatchError(MqmeDissipationError):
    """
    Two frequency grids share no common point.
    """
