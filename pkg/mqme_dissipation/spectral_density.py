import numpy

from mqme_dissipation.abstract_models.abstract_spectral_density import AbstractSpectralDensity
from mqme_dissipation.exceptions import ParameterError


class DrudeLorentzSpectralDensity(AbstractSpectralDensity):
    """
    Overdamped (Debye) bath, J(omega) = (2 Lambda / pi) omega_c omega / (omega^2 + omega_c^2).
    """

    def __init__(self, reorganization_energy, cutoff):
        super().__init__(reorganization_energy)
        if not cutoff > 0:
            raise ParameterError(f"cutoff frequency must be > 0, got {cutoff}")
        self.cutoff = float(cutoff)

    @property
    def model_name(self):
        return "drude_lorentz"

    @property
    def parameters(self):
        return {"reorganization_energy": self.reorganization_energy, "cutoff": self.cutoff}

    @property
    def quadrature_points(self):
        return [self.cutoff]

    def _evaluate(self, omega):
        return 2.0 * self.reorganization_energy / numpy.pi * self.cutoff * omega / (omega**2 + self.cutoff**2)

    def _reorganization_density_at_zero(self):
        return 2.0 * self.reorganization_energy / (numpy.pi * self.cutoff)


class BrownianOscillatorSpectralDensity(AbstractSpectralDensity):
    """
    Underdamped bath mode of frequency omega_0 and damping gamma,
    J(omega) = (2 Lambda gamma / pi) 2 omega_0^2 omega / ((omega^2 - omega_0^2)^2 + 4 gamma^2 omega^2).
    """

    def __init__(self, reorganization_energy, peak_frequency, damping):
        super().__init__(reorganization_energy)
        if not peak_frequency > 0:
            raise ParameterError(f"peak frequency must be > 0, got {peak_frequency}")
        if not damping > 0:
            raise ParameterError(f"damping must be > 0, got {damping}")
        self.peak_frequency = float(peak_frequency)
        self.damping = float(damping)

    @property
    def model_name(self):
        return "brownian_oscillator"

    @property
    def parameters(self):
        return {
            "reorganization_energy": self.reorganization_energy,
            "peak_frequency": self.peak_frequency,
            "damping": self.damping,
        }

    @property
    def quadrature_points(self):
        return [self.peak_frequency, self.peak_maximum]

    @property
    def peak_maximum(self):
        """
        Frequency Omega where J(omega) / omega is maximal, 0 for an overdamped oscillator.

        Returns:
            float: sqrt(max(0, omega_0^2 - 2 gamma^2)).
        """
        return float(numpy.sqrt(max(0.0, self.peak_frequency**2 - 2.0 * self.damping**2)))

    def _evaluate(self, omega):
        omega0_sq = self.peak_frequency**2
        denominator = (omega**2 - omega0_sq) ** 2 + 4.0 * self.damping**2 * omega**2
        return 4.0 * self.reorganization_energy * self.damping / numpy.pi * omega0_sq * omega / denominator

    def _reorganization_density_at_zero(self):
        return 4.0 * self.reorganization_energy * self.damping / (numpy.pi * self.peak_frequency**2)


SPECTRAL_DENSITY_TYPES = {
    "drude_lorentz": DrudeLorentzSpectralDensity,
    "brownian_oscillator": BrownianOscillatorSpectralDensity,
}


def spectral_density_from_dict(description):
    """
    Build a spectral density from its dict description.

    Args:
        description (dict): {"type": name, **parameters}, as produced by to_dict.

    Returns:
        AbstractSpectralDensity: Concrete spectral density.

    Raises:
        ParameterError: If the type is unknown or a parameter is missing or unexpected.
    """
    parameters = dict(description)
    model_name = parameters.pop("type", None)
    if model_name not in SPECTRAL_DENSITY_TYPES:
        raise ParameterError(
            f"unknown spectral density type {model_name!r}, expected one of {sorted(SPECTRAL_DENSITY_TYPES)}"
        )
    try:
        return SPECTRAL_DENSITY_TYPES[model_name](**parameters)
    except TypeError as error:
        raise ParameterError(f"invalid parameters for {model_name}: {error}") from error
