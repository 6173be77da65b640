from abc import ABC, abstractmethod
import logging
import warnings

import numpy
from scipy import integrate

from mqme_dissipation.exceptions import DomainError, ParameterError, QuadratureError
from mqme_dissipation.utils.thermal import thermal_factor

logger = logging.getLogger(__name__)


class AbstractSpectralDensity(ABC):
    """
    Abstract base class for analytic bath spectral densities J(omega).

    Attributes:
        QUADRATURE_LIMIT (int): Subinterval limit handed to the adaptive quadrature.

    Methods:
        model_name (property): Name of the spectral density model.
        reorganization_energy (property): Total reorganization energy Lambda.
        parameters (property): Model parameters as a dict.
        quadrature_points (property): Break points that help the adaptive quadrature.
        evaluate: J(omega) for omega >= 0.
        reorganization_density: J(omega) / omega, finite at omega = 0.
        truncated_reorganization_energy: Integral of J(omega) / omega up to omega_max.
        thermal_integral: Integral of weight(omega) J(omega) coth(beta omega / 2).
        to_dict: Serializable description of the model.
        _evaluate: Closed form of J(omega).
        _reorganization_density_at_zero: Limit of J(omega) / omega at omega = 0.
    """

    QUADRATURE_LIMIT = 500

    def __init__(self, reorganization_energy):
        """
        Initialize the spectral density.

        Args:
            reorganization_energy (float): Total reorganization energy Lambda (> 0).
        """
        if not reorganization_energy > 0:
            raise ParameterError(f"reorganization energy must be > 0, got {reorganization_energy}")
        self._reorganization_energy = float(reorganization_energy)

    @property
    @abstractmethod
    def model_name(self):
        """
        Name of the spectral density model.

        Returns:
            str: Model name as used in configuration files.
        """

    @property
    def reorganization_energy(self):
        """
        Total reorganization energy of the untruncated spectral density.

        Returns:
            float: Lambda.
        """
        return self._reorganization_energy

    @property
    @abstractmethod
    def parameters(self):
        """
        Model parameters.

        Returns:
            dict: Parameter name to value.
        """

    @property
    def quadrature_points(self):
        """
        Frequencies where the integrand has structure (peaks, shoulders).

        Returns:
            list: Break points for scipy.integrate.quad.
        """
        return []

    @abstractmethod
    def _evaluate(self, omega):
        """
        Closed form of J(omega) for nonnegative omega.
        """

    @abstractmethod
    def _reorganization_density_at_zero(self):
        """
        Limit of J(omega) / omega when omega goes to 0.
        """

    def evaluate(self, omega):
        """
        Evaluate the spectral density.

        Args:
            omega (float or numpy.ndarray): Frequencies (>= 0).

        Returns:
            float or numpy.ndarray: J(omega).

        Raises:
            DomainError: If any frequency is negative.
        """
        omega_array = numpy.asarray(omega, dtype=float)
        if numpy.any(omega_array < 0):
            raise DomainError(f"{self.model_name} spectral density is defined for omega >= 0")
        value = self._evaluate(omega_array)
        if value.ndim == 0:
            return float(value)
        return value

    def reorganization_density(self, omega):
        """
        Reorganization energy density J(omega) / omega.

        Args:
            omega (float or numpy.ndarray): Frequencies (>= 0).

        Returns:
            float or numpy.ndarray: J(omega) / omega, with its finite limit at omega = 0.
        """
        omega_array = numpy.asarray(omega, dtype=float)
        value = self.evaluate(omega_array)
        safe = numpy.where(omega_array > 0, omega_array, 1.0)
        density = numpy.where(omega_array > 0, value / safe, self._reorganization_density_at_zero())
        if density.ndim == 0:
            return float(density)
        return density

    def _quad(self, function, omega_max, description):
        points = [p for p in self.quadrature_points if 0 < p < omega_max] or None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            result = integrate.quad(
                function, 0.0, omega_max, limit=self.QUADRATURE_LIMIT, points=points, full_output=1
            )
        value, residual = result[0], result[1]
        if len(result) > 3:
            raise QuadratureError(
                f"{description} of {self.model_name} did not converge up to omega_max={omega_max}: {result[3]}",
                residual,
            )
        return value

    def truncated_reorganization_energy(self, omega_max):
        """
        Reorganization energy recovered up to a cutoff frequency.

        Args:
            omega_max (float): Upper frequency (> 0), numpy.inf for the full integral.

        Returns:
            float: Integral of J(omega) / omega over [0, omega_max].

        Raises:
            QuadratureError: If the adaptive quadrature does not converge.
        """
        if not omega_max > 0:
            raise ParameterError(f"omega_max must be > 0, got {omega_max}")
        if numpy.isinf(omega_max):
            return self.reorganization_energy
        return self._quad(self.reorganization_density, omega_max, "reorganization energy")

    def thermal_integral(self, beta, weight, omega_max):
        """
        Integral of weight(omega) J(omega) coth(beta omega / 2) over [0, omega_max].

        Args:
            beta (float): Inverse temperature.
            weight (callable): Frequency weight (for example a splitting function).
            omega_max (float): Upper frequency.

        Returns:
            float: Value of the integral.
        """
        def integrand(omega):
            if omega == 0.0:
                # J coth -> (2 / beta) J / omega at the origin
                return weight(0.0) * 2.0 / beta * self._reorganization_density_at_zero()
            return weight(omega) * self.evaluate(omega) * thermal_factor(omega, beta)

        return self._quad(integrand, omega_max, "thermal integral")

    def to_dict(self):
        """
        Serializable description of the model.

        Returns:
            dict: {"type": model_name, **parameters}.
        """
        return {"type": self.model_name, **self.parameters}

    def __repr__(self):
        arguments = ", ".join(f"{key}={value!r}" for key, value in self.parameters.items())
        return f"{type(self).__name__}({arguments})"
