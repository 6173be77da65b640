import logging

import numpy
import pandas
from scipy import linalg

from mqme_dissipation.bath import line_broadening
from mqme_dissipation.exceptions import DegenerateRatesError, ParameterError, StructuralError
from mqme_dissipation.utils.csv_export import write_frame
from mqme_dissipation.utils.quadrature import (
    QuadratureResult,
    fourier_trapezoid,
    support_length,
    tail_ratio,
    trapezoid_real_part,
)
from mqme_dissipation.utils.runge_kutta import rk4_linear_propagate
from mqme_dissipation.utils.thermal import thermal_factor

logger = logging.getLogger(__name__)

TRACE_TOLERANCE = 1e-10
NEGATIVITY_TOLERANCE = 1e-12


class QuadratureSpec:
    """
    Fixed trapezoid grid of the rate-constant integrals.

    Attributes:
        dt (float): Grid step.
        t_int (float): Upper limit of integration.
        tail_tolerance (float): Largest accepted |F(T_int)| / max |F| before flagging.
        rule (str): Quadrature rule, always "trapezoid".
    """

    rule = "trapezoid"

    def __init__(self, dt=0.01, t_int=5000.0, tail_tolerance=1e-3):
        if not dt > 0:
            raise ParameterError(f"quadrature step must be > 0, got {dt}")
        if not t_int >= dt:
            raise ParameterError(f"upper limit of integration must be >= dt, got {t_int}")
        if not tail_tolerance > 0:
            raise ParameterError(f"tail tolerance must be > 0, got {tail_tolerance}")
        self.dt = float(dt)
        self.t_int = float(t_int)
        self.tail_tolerance = float(tail_tolerance)

    @property
    def n_points(self):
        return int(round(self.t_int / self.dt)) + 1

    def to_dict(self):
        return {"dt": self.dt, "t_int": self.t_int, "tail_tolerance": self.tail_tolerance, "rule": self.rule}


class PairKernel:
    """
    Integrand F(t) = exp(-i t eps_BA - G_BA(t)) of the ordered transfer A -> B.

    eps_BA = E_B - E_A + sum_c (w_Ac - w_Bc)^2 Lambda_c and G_BA = sum_c (w_Ac - w_Bc)^2 g_c.
    The shift-independent decay exp(-G) is kept on its numerical support only; a static
    energy shift enters through the phase alone.

    Attributes:
        donor (int): A.
        acceptor (int): B.
        coupling (float): V_AB.
        energy_gap (float): eps_BA for the unshifted energies.
        coefficients (numpy.ndarray): (w_Ac - w_Bc)^2 per channel.
        dt (float): Time step.
        decay (numpy.ndarray): exp(-G(t)) cut to its support.
        tail_ratio (float): |F(T_int)| / max |F| on the full grid.
    """

    def __init__(self, subsystem, donor, acceptor, g_tables):
        if donor == acceptor:
            raise ParameterError("a transfer pair needs two distinct states")
        self.donor = donor
        self.acceptor = acceptor
        self.coupling = float(subsystem.couplings[donor, acceptor])
        self.energy_gap = subsystem.pair_energy_gap(donor, acceptor)
        self.coefficients = subsystem.pair_coefficients(donor, acceptor)
        self.dt = g_tables[0].dt
        exponent = numpy.zeros(g_tables[0].n_points, dtype=complex)
        for coefficient, table in zip(self.coefficients, g_tables):
            if coefficient != 0.0:
                exponent += coefficient * table.values
        decay = numpy.exp(-exponent)
        magnitude = numpy.abs(decay)
        self.tail_ratio = tail_ratio(magnitude)
        self.decay = decay[: support_length(magnitude)]

    @property
    def prefactor(self):
        """
        2 |V_AB|^2.
        """
        return 2.0 * self.coupling**2

    def envelope(self, shift=0.0):
        """
        F(t) on the support of the decay.

        Args:
            shift (float): Static change of E_B - E_A.

        Returns:
            numpy.ndarray: Complex integrand.
        """
        times = numpy.arange(self.decay.shape[0]) * self.dt
        return numpy.exp(-1j * (self.energy_gap + shift) * times) * self.decay

    def rate(self, tail_tolerance, shift=0.0):
        """
        K_BA = 2 |V_AB|^2 Re int F(t) dt.

        Args:
            tail_tolerance (float): Tail flag threshold.
            shift (float): Static change of E_B - E_A.

        Returns:
            QuadratureResult: Rate constant and tail diagnostic.
        """
        if self.coupling == 0.0:
            return QuadratureResult(0.0, self.tail_ratio, self.tail_ratio <= tail_tolerance)
        integral = trapezoid_real_part(self.envelope(shift), self.dt, tail_tolerance, ratio=self.tail_ratio)
        return integral._replace(value=self.prefactor * integral.value)

    def dissipative_potential(self, omegas, beta, tail_tolerance, shift=0.0):
        """
        Re int F(t) [cos(omega t) - i coth(beta omega / 2) sin(omega t)] dt on every omega.

        Args:
            omegas (numpy.ndarray): Frequencies (> 0).
            beta (float): Inverse temperature.
            tail_tolerance (float): Tail flag threshold.
            shift (float): Static change of E_B - E_A.

        Returns:
            QuadratureResult: Array of values and tail diagnostic.
        """
        omegas = numpy.asarray(omegas, dtype=float)
        return fourier_trapezoid(
            self.envelope(shift),
            self.dt,
            omegas,
            thermal_factor(omegas, beta),
            tail_tolerance,
            ratio=self.tail_ratio,
        )


class RateMatrix:
    """
    Population transfer rates K[B, A] from state A to state B.

    Attributes:
        rates (numpy.ndarray): Nonnegative matrix with zero diagonal.
        tail_ratios (numpy.ndarray): Tail diagnostic of every rate integral.
        converged (bool): True when every rate integral decayed within T_int.
    """

    def __init__(self, rates, tail_ratios=None, converged=True):
        rates = numpy.array(rates, dtype=float)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1]:
            raise ParameterError(f"rate matrix must be square, got shape {rates.shape}")
        if not numpy.all(numpy.isfinite(rates)):
            raise ParameterError("rate matrix has non-finite entries")
        numpy.fill_diagonal(rates, 0.0)
        scale = max(1.0, float(numpy.abs(rates).max()))
        if rates.min() < -NEGATIVITY_TOLERANCE * scale:
            logger.warning("clipping negative rate constants (min %.3e) to zero", rates.min())
        self.rates = numpy.clip(rates, 0.0, None)
        self.tail_ratios = numpy.zeros_like(self.rates) if tail_ratios is None else numpy.asarray(tail_ratios)
        self.converged = bool(converged)

    @property
    def n_states(self):
        return self.rates.shape[0]

    @property
    def generator(self):
        """
        G with G_BA = K_BA off the diagonal and columns summing to zero.
        """
        generator = self.rates.copy()
        generator -= numpy.diag(self.rates.sum(axis=0))
        return generator

    def to_frame(self):
        """
        Long table of the rates.

        Returns:
            pandas.DataFrame: Columns from_state, to_state, K, tail_ratio.
        """
        rows = [
            {"from_state": a + 1, "to_state": b + 1, "K": self.rates[b, a], "tail_ratio": self.tail_ratios[b, a]}
            for a in range(self.n_states)
            for b in range(self.n_states)
            if a != b
        ]
        return pandas.DataFrame(rows)


class PopulationTrajectory:
    """
    State populations on a uniform time lattice.

    Attributes:
        times (numpy.ndarray): Time lattice.
        populations (numpy.ndarray): Array of shape (n_t, n_states).
    """

    def __init__(self, times, populations):
        self.times = numpy.asarray(times, dtype=float)
        self.populations = numpy.asarray(populations, dtype=float)
        if self.populations.shape[0] != self.times.shape[0]:
            raise ParameterError("populations and times must have the same length")

    @property
    def n_states(self):
        return self.populations.shape[1]

    @property
    def sigma_z(self):
        """
        <sigma_z> = P_1 - P_2 for a two-level system, None otherwise.
        """
        if self.n_states != 2:
            return None
        return self.populations[:, 0] - self.populations[:, 1]

    @property
    def final(self):
        return self.populations[-1].copy()

    def trace_error(self):
        return float(numpy.abs(self.populations.sum(axis=1) - 1.0).max())

    def subsample(self, stride):
        """
        Every stride-th sample, the last sample always kept.

        Args:
            stride (int): Output stride (>= 1).

        Returns:
            PopulationTrajectory: Subsampled trajectory.
        """
        index = _stride_index(self.times.shape[0], stride)
        return PopulationTrajectory(self.times[index], self.populations[index])

    def to_frame(self):
        """
        Table with columns t, P_1..P_N and sigma_z for two states.
        """
        frame = pandas.DataFrame({"t": self.times})
        for state in range(self.n_states):
            frame[f"P_{state + 1}"] = self.populations[:, state]
        if self.n_states == 2:
            frame["sigma_z"] = self.sigma_z
        return frame

    def to_csv(self, path):
        return write_frame(self.to_frame(), path)


def _stride_index(n_samples, stride):
    if int(stride) != stride or stride < 1:
        raise ParameterError(f"output stride must be a positive integer, got {stride}")
    index = numpy.arange(0, n_samples, int(stride))
    if index[-1] != n_samples - 1:
        index = numpy.append(index, n_samples - 1)
    return index


def line_broadening_tables(subsystem, beta, quad):
    """
    One line broadening table per bath channel, computed once per distinct bath.

    Args:
        subsystem (AbstractSubsystem): Subsystem with discretized baths.
        beta (float): Inverse temperature.
        quad (QuadratureSpec): Time grid.

    Returns:
        list: LineBroadeningTable per channel.
    """
    cache = {}
    tables = []
    for bath in subsystem.baths:
        if id(bath) not in cache:
            cache[id(bath)] = line_broadening(bath, beta, quad.dt, quad.t_int)
        tables.append(cache[id(bath)])
    logger.info("line broadening functions ready for %d channel(s) on %d time points", len(tables), quad.n_points)
    return tables


def pair_kernels(subsystem, g_tables):
    """
    PairKernel of every ordered pair.

    Args:
        subsystem (AbstractSubsystem): Subsystem with discretized baths.
        g_tables (list): LineBroadeningTable per channel.

    Returns:
        dict: (A, B) -> PairKernel.
    """
    return {(a, b): PairKernel(subsystem, a, b, g_tables) for a, b in subsystem.ordered_pairs()}


def _warn_tail(result, description, quad):
    if not result.converged:
        logger.warning(
            "%s: integrand not decayed at T_int=%g (tail ratio %.3e > %.1e)",
            description,
            quad.t_int,
            result.tail_ratio,
            quad.tail_tolerance,
        )


def rate_constant(subsystem, donor, acceptor, g_tables, quad):
    """
    Transfer rate K_BA from state A (donor) to state B (acceptor).

    K_BA = 2 |V_AB|^2 Re int_0^T_int exp(-i t eps_BA) exp(-G_BA(t)) dt on the trapezoid grid.

    Args:
        subsystem (AbstractSubsystem): Subsystem with discretized baths.
        donor (int): A.
        acceptor (int): B.
        g_tables (list): LineBroadeningTable per channel.
        quad (QuadratureSpec): Time grid.

    Returns:
        QuadratureResult: K_BA with its tail diagnostic.
    """
    result = PairKernel(subsystem, donor, acceptor, g_tables).rate(quad.tail_tolerance)
    _warn_tail(result, f"rate constant {donor + 1}->{acceptor + 1}", quad)
    return result


def rate_matrix(kernels, n_states, quad, shifts=None):
    """
    Rate matrix from prepared pair kernels.

    Args:
        kernels (dict): (A, B) -> PairKernel.
        n_states (int): Number of states.
        quad (QuadratureSpec): Time grid and tail tolerance.
        shifts (numpy.ndarray): Static energy shift of every state (optional).

    Returns:
        RateMatrix: Rates with tail diagnostics.
    """
    shifts = numpy.zeros(n_states) if shifts is None else numpy.asarray(shifts, dtype=float)
    rates = numpy.zeros((n_states, n_states))
    ratios = numpy.zeros((n_states, n_states))
    converged = True
    for (a, b), kernel in kernels.items():
        result = kernel.rate(quad.tail_tolerance, shift=shifts[b] - shifts[a])
        rates[b, a] = result.value
        ratios[b, a] = result.tail_ratio
        converged = converged and result.converged
        logger.debug("K[%d<-%d] = %.6e (tail ratio %.2e)", b + 1, a + 1, result.value, result.tail_ratio)
    return RateMatrix(rates, ratios, converged)


def propagate_populations(rates, initial_populations, dt=0.01, t_end=100.0):
    """
    Classical RK4 propagation of dP/dt = G P.

    Args:
        rates (RateMatrix): Transfer rates.
        initial_populations (array-like): Probability vector P(0).
        dt (float): Time step.
        t_end (float): Final time.

    Returns:
        PopulationTrajectory: Populations on {0, dt, ..., t_end}.

    Raises:
        ParameterError: If P(0) is not a probability vector.
    """
    initial_populations = numpy.asarray(initial_populations, dtype=float)
    if initial_populations.shape != (rates.n_states,):
        raise ParameterError(f"initial populations must have {rates.n_states} entries")
    if numpy.any(initial_populations < 0) or abs(initial_populations.sum() - 1.0) > TRACE_TOLERANCE:
        raise ParameterError(f"initial populations must be a probability vector, got {initial_populations}")
    if not dt > 0 or not t_end >= 0:
        raise ParameterError(f"propagation needs dt > 0 and t_end >= 0, got dt={dt}, t_end={t_end}")
    n_steps = int(round(t_end / dt))
    populations = rk4_linear_propagate(rates.generator, initial_populations, dt, n_steps)
    trajectory = PopulationTrajectory(numpy.arange(n_steps + 1) * dt, populations)
    if trajectory.trace_error() > TRACE_TOLERANCE:
        logger.warning("population trace drifted by %.3e", trajectory.trace_error())
    return trajectory


def analytic_two_level(k12, k21, sigma_z0, t):
    """
    Closed-form <sigma_z(t)> of two-state rate equations.

    Args:
        k12 (float): Rate from state 2 to state 1.
        k21 (float): Rate from state 1 to state 2.
        sigma_z0 (float): <sigma_z(0)> = P_1(0) - P_2(0).
        t (float or numpy.ndarray): Times.

    Returns:
        float or numpy.ndarray: <sigma_z(t)>.

    Raises:
        DegenerateRatesError: If k12 + k21 = 0.
    """
    total = k12 + k21
    if total <= 0:
        raise DegenerateRatesError(f"two-level solution needs k12 + k21 > 0, got {total}")
    stationary = (k12 - k21) / total
    return stationary + (sigma_z0 - stationary) * numpy.exp(-total * numpy.asarray(t, dtype=float))


def steady_state(rates):
    """
    Normalized kernel vector of the rate generator.

    Args:
        rates (RateMatrix): Transfer rates.

    Returns:
        numpy.ndarray: Stationary populations.

    Raises:
        StructuralError: If the kernel is not one-dimensional.
    """
    if rates.n_states == 1:
        return numpy.ones(1)
    kernel = linalg.null_space(rates.generator)
    if kernel.shape[1] != 1:
        raise StructuralError(
            f"rate generator has a {kernel.shape[1]}-dimensional kernel, the state graph is not connected"
        )
    vector = kernel[:, 0] / kernel[:, 0].sum()
    return numpy.clip(vector, 0.0, None) / numpy.clip(vector, 0.0, None).sum()


def detailed_balance_report(subsystem, stationary, beta):
    """
    Stationary population ratio against the Boltzmann factors of a two-level subsystem.

    Args:
        subsystem (AbstractSubsystem): Two-level subsystem with discretized baths.
        stationary (numpy.ndarray): Stationary populations.
        beta (float): Inverse temperature.

    Returns:
        dict: ratio P_1/P_2, bare factor exp(beta (E_2 - E_1)), the factor with the
        reorganization shifts of both transfer directions, and the relative deviations.
    """
    energies = subsystem.energies
    ratio = float(stationary[0] / stationary[1]) if stationary[1] > 0 else float("inf")
    bare = float(numpy.exp(beta * (energies[1] - energies[0])))
    # gap taken from the phase of the 1 -> 2 rate integrand
    shifted = float(numpy.exp(beta * subsystem.pair_energy_gap(0, 1)))
    return {
        "population_ratio": ratio,
        "boltzmann_factor": bare,
        "boltzmann_factor_shifted": shifted,
        "relative_deviation": abs(ratio - bare) / bare,
        "relative_deviation_shifted": abs(ratio - shifted) / shifted,
    }
