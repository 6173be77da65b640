from collections import namedtuple
import logging

import numpy
import pandas

from mqme_dissipation.exceptions import DiscretizationError, ParameterError
from mqme_dissipation.spectral_density import BrownianOscillatorSpectralDensity
from mqme_dissipation.utils.csv_export import write_frame
from mqme_dissipation.utils.quadrature import CHUNK_ELEMENTS
from mqme_dissipation.utils.thermal import thermal_factor

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 0.02

SIGMA_MODES = ("verbatim", "sqrt")

TssSplit = namedtuple("TssSplit", ["fast_bath", "sigma_slow", "eta", "cutoff", "fast_weights"])
TssSplit.__doc__ = """
Slow/fast partition of a discretized bath.

Attributes:
    fast_bath (DiscretizedBath): Modes with lambda_j scaled by the fast weights.
    sigma_slow (float): Disorder scale of the slow part.
    eta (float): Splitting amplitude S(0).
    cutoff (float): Splitting frequency omega*.
    fast_weights (numpy.ndarray): 1 - S(omega_j, omega*) per mode.
"""


class DiscretizedBath:
    """
    Finite set of harmonic modes (omega_j, lambda_j) representing one bath channel.

    Attributes:
        frequencies (numpy.ndarray): Mode frequencies, strictly increasing.
        reorganization_energies (numpy.ndarray): Mode reorganization energies lambda_j >= 0.
        source (AbstractSpectralDensity): Spectral density the modes were drawn from (optional).
        omega_max (float): Highest frequency of the discretization window.
        tolerance (float): Relative tolerance of the reorganization sum rule, None when unchecked.
    """

    def __init__(self, frequencies, reorganization_energies, source=None, omega_max=None, tolerance=DEFAULT_TOLERANCE):
        """
        Build the bath and check the reorganization sum rule.

        Args:
            frequencies (array-like): Mode frequencies (> 0, strictly increasing).
            reorganization_energies (array-like): Mode reorganization energies (>= 0).
            source (AbstractSpectralDensity): Continuum spectral density (optional).
            omega_max (float): Upper edge of the window (defaults to the last frequency).
            tolerance (float): Allowed relative deviation of sum(lambda_j) from the truncated
                continuum integral, None to skip the check.

        Raises:
            ParameterError: If frequencies or reorganization energies are invalid.
            DiscretizationError: If the sum rule is violated beyond the tolerance.
        """
        self.frequencies = numpy.array(frequencies, dtype=float)
        self.reorganization_energies = numpy.array(reorganization_energies, dtype=float)
        if self.frequencies.ndim != 1 or self.frequencies.shape != self.reorganization_energies.shape:
            raise ParameterError("frequencies and reorganization energies must be 1-d arrays of equal length")
        if self.frequencies.size == 0:
            raise ParameterError("a discretized bath needs at least one mode")
        if numpy.any(self.frequencies <= 0):
            raise ParameterError("mode frequencies must be > 0")
        if numpy.any(numpy.diff(self.frequencies) <= 0):
            raise ParameterError("mode frequencies must be strictly increasing")
        if numpy.any(self.reorganization_energies < 0):
            raise ParameterError("mode reorganization energies must be >= 0")
        self.frequencies.setflags(write=False)
        self.reorganization_energies.setflags(write=False)
        self.source = source
        self.omega_max = float(self.frequencies[-1] if omega_max is None else omega_max)
        self.tolerance = tolerance
        if source is not None and tolerance is not None:
            self._check_sum_rule()

    def _check_sum_rule(self):
        expected = self.source.truncated_reorganization_energy(self.omega_max)
        recovered = self.total_reorganization_energy
        deviation = abs(recovered - expected) / expected
        if deviation > self.tolerance:
            raise DiscretizationError(
                f"{self.n_modes} modes recover {recovered:.6g} of the truncated reorganization energy "
                f"{expected:.6g} (relative deviation {deviation:.3%} > {self.tolerance:.3%})",
                recovered,
                expected,
            )
        logger.info(
            "discretized %s into %d modes up to omega_max=%g: %.4f of Lambda recovered",
            self.source.model_name,
            self.n_modes,
            self.omega_max,
            self.recovered_fraction,
        )

    @property
    def n_modes(self):
        return self.frequencies.shape[0]

    @property
    def total_reorganization_energy(self):
        """
        Discrete reorganization energy sum(lambda_j).
        """
        return float(self.reorganization_energies.sum())

    @property
    def recovered_fraction(self):
        """
        sum(lambda_j) / Lambda of the source spectral density, None without a source.
        """
        if self.source is None:
            return None
        return self.total_reorganization_energy / self.source.reorganization_energy

    @property
    def displacements(self):
        """
        Mode displacements d_j = sqrt(2 lambda_j) / omega_j.
        """
        return numpy.sqrt(2.0 * self.reorganization_energies) / self.frequencies

    @property
    def huang_rhys_factors(self):
        """
        Dimensionless displacements s_j = omega_j d_j^2 / 2 = lambda_j / omega_j.
        """
        return self.reorganization_energies / self.frequencies

    def scaled(self, weights):
        """
        Copy of the bath with every lambda_j multiplied by a weight.

        Args:
            weights (numpy.ndarray): One weight per mode.

        Returns:
            DiscretizedBath: Scaled bath, sum rule unchecked.
        """
        return DiscretizedBath(
            self.frequencies,
            self.reorganization_energies * numpy.asarray(weights, dtype=float),
            source=self.source,
            omega_max=self.omega_max,
            tolerance=None,
        )

    def to_frame(self):
        """
        Mode table.

        Returns:
            pandas.DataFrame: Columns omega, lambda.
        """
        return pandas.DataFrame({"omega": self.frequencies, "lambda": self.reorganization_energies})

    def to_csv(self, path):
        return write_frame(self.to_frame(), path)

    def __repr__(self):
        return (
            f"DiscretizedBath(n_modes={self.n_modes}, omega_max={self.omega_max:g}, "
            f"total_reorganization_energy={self.total_reorganization_energy:.6g})"
        )


class LineBroadeningTable:
    """
    Line broadening function g(t) of one bath channel on the uniform grid {0, dt, ..., T_int}.

    Attributes:
        dt (float): Grid step.
        values (numpy.ndarray): Complex g(t_k).
    """

    def __init__(self, dt, values):
        self.dt = float(dt)
        self.values = numpy.asarray(values, dtype=complex)
        self.values.setflags(write=False)

    @property
    def n_points(self):
        return self.values.shape[0]

    @property
    def t_grid(self):
        return numpy.arange(self.n_points) * self.dt

    @property
    def t_int(self):
        return (self.n_points - 1) * self.dt

    def __add__(self, other):
        if other.n_points != self.n_points or other.dt != self.dt:
            raise ParameterError("line broadening tables must share the time grid to be added")
        return LineBroadeningTable(self.dt, self.values + other.values)


def evaluate_bsd(model, omega):
    """
    Evaluate a bath spectral density.

    Args:
        model (AbstractSpectralDensity): Spectral density.
        omega (float or numpy.ndarray): Frequencies (>= 0).

    Returns:
        float or numpy.ndarray: J(omega).

    Raises:
        DomainError: If any frequency is negative.
    """
    return model.evaluate(omega)


def reorganization_energy(model, omega_max=numpy.inf):
    """
    Reorganization energy recovered by the spectral density up to omega_max.

    Args:
        model (AbstractSpectralDensity): Spectral density.
        omega_max (float): Cutoff (numpy.inf for the full Lambda).

    Returns:
        float: Integral of J(omega) / omega over [0, omega_max].

    Raises:
        QuadratureError: If the adaptive quadrature does not converge.
    """
    return model.truncated_reorganization_energy(omega_max)


def _check_mode_count(n_modes):
    if int(n_modes) != n_modes or n_modes < 1:
        raise ParameterError(f"number of modes must be a positive integer, got {n_modes}")
    return int(n_modes)


def _modes_from_density(model, frequencies, mode_density):
    # lambda_j = J(omega_j) / (omega_j f(omega_j)) with f the number of modes per unit frequency
    return model.reorganization_density(frequencies) / mode_density


def discretize_drude_lorentz(model, n_modes, omega_max, tolerance=DEFAULT_TOLERANCE):
    """
    Quadratic-grid discretization omega_j = (j / N)^2 omega_max, j = 1..N.

    Each mode carries the reorganization energy of the frequency window it represents,
    lambda_j = J(omega_j) / (omega_j f(omega_j)) with the mode density
    f(omega) = N / (2 sqrt(omega omega_max)). For a Drude-Lorentz bath this is
    lambda_j = (4 Lambda / j pi) omega_c omega_j / (omega_j^2 + omega_c^2).

    Args:
        model (AbstractSpectralDensity): Spectral density (any model can use this grid).
        n_modes (int): N >= 1.
        omega_max (float): Highest mode frequency.
        tolerance (float): Sum-rule tolerance, None to skip the check.

    Returns:
        DiscretizedBath: N modes.
    """
    n_modes = _check_mode_count(n_modes)
    if not omega_max > 0:
        raise ParameterError(f"omega_max must be > 0, got {omega_max}")
    index = numpy.arange(1, n_modes + 1)
    frequencies = index**2 * omega_max / n_modes**2
    mode_density = n_modes / (2.0 * numpy.sqrt(frequencies * omega_max))
    return DiscretizedBath(
        frequencies,
        _modes_from_density(model, frequencies, mode_density),
        source=model,
        omega_max=omega_max,
        tolerance=tolerance,
    )


def discretize_brownian(model, n_modes, omega_max, tolerance=DEFAULT_TOLERANCE):
    """
    Two-window discretization concentrating modes around the peak Omega of J(omega) / omega.

    Omega = sqrt(max(0, omega_0^2 - 2 gamma^2)). For Omega = 0 the quadratic grid of
    discretize_drude_lorentz is used. Otherwise N/2 - 1 modes sit below Omega at
    omega = [1 - (1 - 2j/N)^2] Omega, N/2 modes sit above Omega at
    omega = Omega + (2j/N)^2 (omega_max - Omega), and one mode sits at Omega itself.

    Args:
        model (BrownianOscillatorSpectralDensity): Underdamped spectral density.
        n_modes (int): Even N >= 2.
        omega_max (float): Highest mode frequency (> omega_0).
        tolerance (float): Sum-rule tolerance, None to skip the check.

    Returns:
        DiscretizedBath: N modes.

    Raises:
        ParameterError: If N is odd, omega_0 >= omega_max or gamma >= omega_0.
    """
    if not isinstance(model, BrownianOscillatorSpectralDensity):
        raise ParameterError(f"two-window discretization needs a brownian_oscillator model, got {model.model_name}")
    n_modes = _check_mode_count(n_modes)
    if n_modes % 2:
        raise ParameterError(f"two-window discretization needs an even number of modes, got {n_modes}")
    if model.peak_frequency >= omega_max:
        raise ParameterError(f"peak frequency {model.peak_frequency} must be below omega_max={omega_max}")

    peak = model.peak_maximum
    if peak == 0.0:
        logger.info("overdamped oscillator (gamma >= omega_0 / sqrt(2)), falling back to the quadratic grid")
        return discretize_drude_lorentz(model, n_modes, omega_max, tolerance=tolerance)
    if model.damping >= model.peak_frequency:
        raise ParameterError(f"damping {model.damping} must be below the peak frequency {model.peak_frequency}")

    half = n_modes // 2
    lower_index = numpy.arange(1, half)
    lower = (1.0 - (1.0 - 2.0 * lower_index / n_modes) ** 2) * peak
    lower_density = n_modes / (4.0 * numpy.sqrt((peak - lower) * peak))

    upper_index = numpy.arange(1, half + 1)
    upper = peak + 4.0 * upper_index**2 / n_modes**2 * (omega_max - peak)
    upper_density = n_modes / (4.0 * numpy.sqrt((upper - peak) * (omega_max - peak)))

    omega0_sq = model.peak_frequency**2
    peak_lambda = (
        2.0
        * model.reorganization_energy
        * omega_max
        * omega0_sq
        / (numpy.pi * n_modes**2 * model.damping * (omega0_sq - model.damping**2))
    )

    frequencies = numpy.concatenate([lower, [peak], upper])
    lambdas = numpy.concatenate(
        [
            _modes_from_density(model, lower, lower_density),
            [peak_lambda],
            _modes_from_density(model, upper, upper_density),
        ]
    )
    return DiscretizedBath(frequencies, lambdas, source=model, omega_max=omega_max, tolerance=tolerance)


def discretize(model, n_modes, omega_max, tolerance=DEFAULT_TOLERANCE):
    """
    Discretize with the scheme matching the model.

    Args:
        model (AbstractSpectralDensity): Spectral density.
        n_modes (int): Number of modes.
        omega_max (float): Highest mode frequency.
        tolerance (float): Sum-rule tolerance, None to skip the check.

    Returns:
        DiscretizedBath: Modes.
    """
    if isinstance(model, BrownianOscillatorSpectralDensity):
        return discretize_brownian(model, n_modes, omega_max, tolerance=tolerance)
    return discretize_drude_lorentz(model, n_modes, omega_max, tolerance=tolerance)


def line_broadening(bath, beta, dt, t_int):
    """
    g(t) = sum_j (lambda_j / omega_j) [coth(beta omega_j / 2)(1 - cos omega_j t) + i (sin omega_j t - omega_j t)].

    Args:
        bath (DiscretizedBath): Bath modes.
        beta (float): Inverse temperature (> 0).
        dt (float): Time step.
        t_int (float): Last time of the grid.

    Returns:
        LineBroadeningTable: g on {0, dt, ..., T_int}.
    """
    if not beta > 0:
        raise ParameterError(f"beta must be > 0, got {beta}")
    if not dt > 0 or not t_int >= dt:
        raise ParameterError(f"time grid needs dt > 0 and T_int >= dt, got dt={dt}, T_int={t_int}")
    n_points = int(round(t_int / dt)) + 1
    amplitude = bath.reorganization_energies / bath.frequencies
    thermal_amplitude = amplitude * thermal_factor(bath.frequencies, beta)
    total = bath.total_reorganization_energy

    values = numpy.empty(n_points, dtype=complex)
    block = max(1, CHUNK_ELEMENTS // bath.n_modes)
    for start in range(0, n_points, block):
        times = numpy.arange(start, min(n_points, start + block)) * dt
        phase = numpy.outer(times, bath.frequencies)
        real_part = (1.0 - numpy.cos(phase)) @ thermal_amplitude
        imag_part = numpy.sin(phase) @ amplitude - total * times
        values[start : start + times.shape[0]] = real_part + 1j * imag_part
    values[0] = 0.0
    return LineBroadeningTable(dt, values)


def splitting_function(omega, eta, cutoff):
    """
    S(omega, omega*) = eta (1 - (omega / omega*)^2)^2 below omega*, 0 above.

    Args:
        omega (float or numpy.ndarray): Frequencies.
        eta (float): S(0).
        cutoff (float): omega*.

    Returns:
        numpy.ndarray or float: Slow fraction of the spectral density at omega.
    """
    omega = numpy.asarray(omega, dtype=float)
    value = numpy.where(omega < cutoff, eta * (1.0 - (omega / cutoff) ** 2) ** 2, 0.0)
    if value.ndim == 0:
        return float(value)
    return value


def _check_split_parameters(eta, cutoff, sigma_mode):
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"eta must lie in [0, 1], got {eta}")
    if not cutoff > 0:
        raise ParameterError(f"splitting frequency must be > 0, got {cutoff}")
    if sigma_mode not in SIGMA_MODES:
        raise ParameterError(f"sigma_mode must be one of {SIGMA_MODES}, got {sigma_mode!r}")


def split_tss(bath, eta, cutoff, beta, sigma_mode="verbatim"):
    """
    Split a bath into a fast part kept as modes and a slow part turned into static disorder.

    The fast bath keeps lambda_j (1 - S(omega_j)). The slow part defines
    sigma_slow = sum_j S(omega_j) lambda_j omega_j coth(beta omega_j / 2), the discrete form of
    the integral of J_slow(omega) coth(beta omega / 2). With sigma_mode="sqrt" its square
    root is returned instead.

    Args:
        bath (DiscretizedBath): Input bath.
        eta (float): S(0), in [0, 1] (0 disables the splitting).
        cutoff (float): omega* (> 0).
        beta (float): Inverse temperature.
        sigma_mode (str): "verbatim" or "sqrt".

    Returns:
        TssSplit: Fast bath and disorder scale.
    """
    _check_split_parameters(eta, cutoff, sigma_mode)
    slow_fraction = splitting_function(bath.frequencies, eta, cutoff)
    fast_weights = 1.0 - slow_fraction
    sigma_slow = float(
        numpy.sum(
            slow_fraction
            * bath.reorganization_energies
            * bath.frequencies
            * thermal_factor(bath.frequencies, beta)
        )
    )
    if sigma_mode == "sqrt":
        sigma_slow = float(numpy.sqrt(sigma_slow))
    logger.info(
        "TSS split (eta=%g, omega*=%g): %d slow modes, sigma_slow=%.6g (%s)",
        eta,
        cutoff,
        int(numpy.count_nonzero(slow_fraction)),
        sigma_slow,
        sigma_mode,
    )
    return TssSplit(bath.scaled(fast_weights), sigma_slow, float(eta), float(cutoff), fast_weights)


def slow_disorder_integral(model, eta, cutoff, beta, sigma_mode="verbatim"):
    """
    Continuum counterpart of the sigma_slow sum, integral of S(omega) J(omega) coth(beta omega / 2).

    Args:
        model (AbstractSpectralDensity): Spectral density.
        eta (float): S(0).
        cutoff (float): omega*.
        beta (float): Inverse temperature.
        sigma_mode (str): "verbatim" or "sqrt".

    Returns:
        float: sigma_slow of the continuum spectral density.
    """
    _check_split_parameters(eta, cutoff, sigma_mode)
    value = model.thermal_integral(beta, lambda omega: splitting_function(omega, eta, cutoff), cutoff)
    if sigma_mode == "sqrt":
        return float(numpy.sqrt(value))
    return value
