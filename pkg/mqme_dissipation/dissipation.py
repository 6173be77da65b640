import logging

import numpy
import pandas
from scipy import integrate

from mqme_dissipation.exceptions import ParameterError, StructuralError
from mqme_dissipation.mqme import (
    PairKernel,
    line_broadening_tables,
    pair_kernels,
    propagate_populations,
    rate_matrix,
    steady_state,
)
from mqme_dissipation.utils.csv_export import grid_frame, write_frame

logger = logging.getLogger(__name__)

CONSERVATION_TOLERANCE = 0.03
# below this subsystem energy loss the conservation check is absolute
CONSERVATION_FLOOR = 1e-6
INTEGRATION_RULE = "trapezoid"


class DissipativePotentialTable:
    """
    Dissipative potential I_BA(omega) of one ordered pair on a frequency grid.

    Attributes:
        omegas (numpy.ndarray): Frequency grid (> 0).
        donor (int): A.
        acceptor (int): B.
        values (numpy.ndarray): I_BA(omega).
        tail_ratio (float): Tail diagnostic of the integrand.
        converged (bool): True when the integrand decayed within T_int.
    """

    def __init__(self, omegas, donor, acceptor, values, tail_ratio=0.0, converged=True):
        self.omegas = numpy.asarray(omegas, dtype=float)
        self.donor = donor
        self.acceptor = acceptor
        self.values = numpy.asarray(values, dtype=float)
        self.tail_ratio = tail_ratio
        self.converged = converged


class DissipativeSpectralDensities:
    """
    Dissipative spectral densities J^c_BA(omega) of every channel and ordered pair.

    Attributes:
        omegas (numpy.ndarray): Frequency grid.
        pairs (list): Ordered pairs (A, B).
        values (numpy.ndarray): Array of shape (n_channels, n_pairs, n_omega).
        converged (bool): True when every underlying integrand decayed within T_int.
    """

    def __init__(self, omegas, pairs, values, converged=True):
        self.omegas = numpy.asarray(omegas, dtype=float)
        self.pairs = list(pairs)
        self.values = numpy.asarray(values, dtype=float)
        self.converged = converged

    @property
    def n_channels(self):
        return self.values.shape[0]

    def population_weights(self, channel, n_states):
        """
        Matrix M with D_c(omega, t) = M P(t).

        Args:
            channel (int): Channel index.
            n_states (int): Number of states.

        Returns:
            numpy.ndarray: Array of shape (n_omega, n_states).
        """
        weights = numpy.zeros((self.omegas.shape[0], n_states))
        for index, (donor, _) in enumerate(self.pairs):
            weights[:, donor] += self.values[channel, index]
        return weights


class ModeDissipationRates:
    """
    Per-mode dissipation rate constants K^j_BA.

    Attributes:
        pairs (list): Ordered pairs (A, B).
        values (list): One array of shape (n_pairs, n_modes) per channel.
    """

    def __init__(self, pairs, values):
        self.pairs = list(pairs)
        self.values = [numpy.asarray(array, dtype=float) for array in values]

    def pair_total(self, donor, acceptor):
        """
        sum_j K^j_BA over every channel.
        """
        index = self.pairs.index((donor, acceptor))
        return float(sum(array[index].sum() for array in self.values))


class DissipationGrid:
    """
    Dissipation of one bath channel on a frequency x time lattice.

    Attributes:
        channel (str): Channel label.
        omegas (numpy.ndarray): Frequency grid.
        times (numpy.ndarray): Time grid.
        rate_density (numpy.ndarray): D(omega, t), shape (n_omega, n_t).
        cumulative (numpy.ndarray): E(omega, t), None before accumulation.
        stderr (numpy.ndarray): Standard error of E(omega, t_end) for ensemble means, else None.
    """

    def __init__(self, channel, omegas, times, rate_density, cumulative=None, stderr=None):
        self.channel = str(channel)
        self.omegas = numpy.asarray(omegas, dtype=float)
        self.times = numpy.asarray(times, dtype=float)
        self.rate_density = numpy.asarray(rate_density, dtype=float)
        self.cumulative = None if cumulative is None else numpy.asarray(cumulative, dtype=float)
        self.stderr = None if stderr is None else numpy.asarray(stderr, dtype=float)

    @property
    def steady_state(self):
        """
        E(omega, t_end).
        """
        if self.cumulative is None:
            raise ParameterError("dissipation grid is not accumulated yet")
        return self.cumulative[:, -1].copy()

    def subsample(self, stride):
        """
        Every stride-th time sample, the last one always kept.
        """
        if int(stride) != stride or stride < 1:
            raise ParameterError(f"output stride must be a positive integer, got {stride}")
        index = numpy.arange(0, self.times.shape[0], int(stride))
        if index[-1] != self.times.shape[0] - 1:
            index = numpy.append(index, self.times.shape[0] - 1)
        return DissipationGrid(
            self.channel,
            self.omegas,
            self.times[index],
            self.rate_density[:, index],
            None if self.cumulative is None else self.cumulative[:, index],
            self.stderr,
        )

    def to_frame(self):
        """
        Long table with columns omega, t, D, E.
        """
        cumulative = numpy.full_like(self.rate_density, numpy.nan) if self.cumulative is None else self.cumulative
        return grid_frame(self.omegas, self.times, self.rate_density, cumulative)

    def steady_state_frame(self):
        """
        Table with columns omega, E_inf and stderr when available.
        """
        frame = pandas.DataFrame({"omega": self.omegas, "E_inf": self.steady_state})
        if self.stderr is not None:
            frame["stderr"] = self.stderr
        return frame

    def to_csv(self, path):
        return write_frame(self.to_frame(), path)


def _check_omegas(omegas):
    omegas = numpy.atleast_1d(numpy.asarray(omegas, dtype=float))
    if numpy.any(omegas <= 0):
        raise ParameterError("frequency grids must start above omega = 0")
    return omegas


def dissipative_potential(subsystem, donor, acceptor, g_tables, quad, omegas, beta):
    """
    I_BA(omega) = Re int F_BA(t) [cos(omega t) - i coth(beta omega / 2) sin(omega t)] dt.

    For the local bath F_BA(t) = exp(-i t (E_B - E_A + Lambda_AA + Lambda_BB) - g_AA - g_BB).
    The same pair integrand as the rate constant is used for any channel topology.

    Args:
        subsystem (AbstractSubsystem): Subsystem with discretized baths.
        donor (int): A.
        acceptor (int): B.
        g_tables (list): LineBroadeningTable per channel.
        quad (QuadratureSpec): Time grid.
        omegas (numpy.ndarray): Frequency grid (> 0).
        beta (float): Inverse temperature.

    Returns:
        DissipativePotentialTable: Values on the grid.
    """
    omegas = _check_omegas(omegas)
    kernel = PairKernel(subsystem, donor, acceptor, g_tables)
    result = kernel.dissipative_potential(omegas, beta, quad.tail_tolerance)
    if not result.converged:
        logger.warning(
            "dissipative potential %d->%d: integrand not decayed at T_int=%g (tail ratio %.3e)",
            donor + 1,
            acceptor + 1,
            quad.t_int,
            result.tail_ratio,
        )
    return DissipativePotentialTable(omegas, donor, acceptor, result.value, result.tail_ratio, result.converged)


def dissipative_spectral_density(subsystem, donor, acceptor, channel, potential):
    """
    J^c_BA(omega) = 2 |V_AB|^2 (w_Ac - w_Bc)^2 (J_c(omega) / omega) I_BA(omega).

    For the local bath the channel coefficient is 1 for c in {A, B}.

    Args:
        subsystem (AbstractSubsystem): Subsystem.
        donor (int): A.
        acceptor (int): B.
        channel (int): Channel index c.
        potential (DissipativePotentialTable): I_BA on a frequency grid.

    Returns:
        numpy.ndarray: J^c_BA on the grid of the potential.

    Raises:
        ParameterError: If channel c does not couple to the pair.
    """
    coefficient = subsystem.pair_coefficients(donor, acceptor)[channel]
    if coefficient == 0.0:
        raise ParameterError(f"channel {channel} does not couple to the pair ({donor}, {acceptor})")
    prefactor = 2.0 * subsystem.couplings[donor, acceptor] ** 2
    density = subsystem.spectral_densities[channel].reorganization_density(potential.omegas)
    return prefactor * coefficient * density * potential.values


def dissipative_spectral_densities(subsystem, kernels, omegas, beta, quad, shifts=None):
    """
    J^c_BA(omega) of every channel and ordered pair from prepared pair kernels.

    Args:
        subsystem (AbstractSubsystem): Subsystem.
        kernels (dict): (A, B) -> PairKernel.
        omegas (numpy.ndarray): Frequency grid (> 0).
        beta (float): Inverse temperature.
        quad (QuadratureSpec): Tail tolerance.
        shifts (numpy.ndarray): Static energy shift of every state (optional).

    Returns:
        DissipativeSpectralDensities: Densities on the grid.
    """
    omegas = _check_omegas(omegas)
    shifts = numpy.zeros(subsystem.n_states) if shifts is None else numpy.asarray(shifts, dtype=float)
    pairs = list(kernels)
    densities = [density.reorganization_density(omegas) for density in subsystem.spectral_densities]
    values = numpy.zeros((subsystem.n_channels, len(pairs), omegas.shape[0]))
    converged = True
    for index, (donor, acceptor) in enumerate(pairs):
        kernel = kernels[(donor, acceptor)]
        if kernel.coupling == 0.0:
            continue
        potential = kernel.dissipative_potential(
            omegas, beta, quad.tail_tolerance, shift=shifts[acceptor] - shifts[donor]
        )
        converged = converged and potential.converged
        for channel, coefficient in enumerate(kernel.coefficients):
            if coefficient != 0.0:
                values[channel, index] = kernel.prefactor * coefficient * densities[channel] * potential.value
    return DissipativeSpectralDensities(omegas, pairs, values, converged)


def mode_dissipation_rates(subsystem, kernels, beta, quad, shifts=None):
    """
    K^j_BA = 2 |V_AB|^2 (lambda^j_AA - 2 lambda^j_AB + lambda^j_BB) Re int F_BA(t)
    [cos(omega_j t) - i coth(beta omega_j / 2) sin(omega_j t)] dt for every mode and pair.

    Args:
        subsystem (AbstractSubsystem): Subsystem with discretized baths.
        kernels (dict): (A, B) -> PairKernel.
        beta (float): Inverse temperature.
        quad (QuadratureSpec): Tail tolerance.
        shifts (numpy.ndarray): Static energy shift of every state (optional).

    Returns:
        ModeDissipationRates: One (n_pairs, n_modes) array per channel.
    """
    shifts = numpy.zeros(subsystem.n_states) if shifts is None else numpy.asarray(shifts, dtype=float)
    pairs = list(kernels)
    baths = subsystem.baths
    values = [numpy.zeros((len(pairs), bath.n_modes)) for bath in baths]
    for index, (donor, acceptor) in enumerate(pairs):
        kernel = kernels[(donor, acceptor)]
        if kernel.coupling == 0.0:
            continue
        for channel, coefficient in enumerate(kernel.coefficients):
            if coefficient == 0.0:
                continue
            bath = baths[channel]
            potential = kernel.dissipative_potential(
                bath.frequencies, beta, quad.tail_tolerance, shift=shifts[acceptor] - shifts[donor]
            )
            values[channel][index] = kernel.prefactor * coefficient * bath.reorganization_energies * potential.value
    return ModeDissipationRates(pairs, values)


def mode_dissipation_rate_constant(subsystem, donor, acceptor, mode, g_tables, quad, beta, channel=0):
    """
    K^j_BA of a single mode j of one channel.

    Args:
        subsystem (AbstractSubsystem): Subsystem with discretized baths.
        donor (int): A.
        acceptor (int): B.
        mode (int): Mode index j within the channel.
        g_tables (list): LineBroadeningTable per channel.
        quad (QuadratureSpec): Time grid.
        beta (float): Inverse temperature.
        channel (int): Channel index.

    Returns:
        float: K^j_BA (energy per time).
    """
    kernel = PairKernel(subsystem, donor, acceptor, g_tables)
    coefficient = kernel.coefficients[channel]
    bath = subsystem.baths[channel]
    if coefficient == 0.0 or kernel.coupling == 0.0 or bath.reorganization_energies[mode] == 0.0:
        return 0.0
    potential = kernel.dissipative_potential(bath.frequencies[mode : mode + 1], beta, quad.tail_tolerance)
    return float(kernel.prefactor * coefficient * bath.reorganization_energies[mode] * potential.value[0])


def dissipation_density(trajectory, densities, channel_labels=None):
    """
    D_c(omega, t) = sum_A sum_{B != A} J^c_BA(omega) P_A(t) for every channel.

    For the local bath this is D_A = sum_{B != A} [J^A_BA P_A + J^A_AB P_B].

    Args:
        trajectory (PopulationTrajectory): Populations.
        densities (DissipativeSpectralDensities): J^c_BA tables.
        channel_labels (list): Channel labels (defaults to "1", "2", ...).

    Returns:
        list: DissipationGrid per channel, not accumulated.
    """
    if channel_labels is None:
        channel_labels = [str(c + 1) for c in range(densities.n_channels)]
    grids = []
    for channel, label in enumerate(channel_labels):
        weights = densities.population_weights(channel, trajectory.n_states)
        grids.append(DissipationGrid(label, densities.omegas, trajectory.times, weights @ trajectory.populations.T))
    return grids


def accumulate(grid):
    """
    E(omega, t) = int_0^t D(omega, t') dt' by the trapezoid rule along t.

    Args:
        grid (DissipationGrid): Grid with D filled.

    Returns:
        DissipationGrid: Copy with E filled.
    """
    if grid.times.shape[0] < 2:
        cumulative = numpy.zeros_like(grid.rate_density)
    else:
        cumulative = integrate.cumulative_trapezoid(grid.rate_density, grid.times, axis=1, initial=0.0)
    return DissipationGrid(grid.channel, grid.omegas, grid.times, grid.rate_density, cumulative, grid.stderr)


def total_mode_rate(trajectory, mode_rates):
    """
    Edot_j(t) = sum_A sum_{B<A} [K^j_BA P_A(t) + K^j_AB P_B(t)] for every channel.

    Args:
        trajectory (PopulationTrajectory): Populations.
        mode_rates (ModeDissipationRates): K^j_BA.

    Returns:
        list: Array of shape (n_modes, n_t) per channel.
    """
    donors = [donor for donor, _ in mode_rates.pairs]
    donor_populations = trajectory.populations[:, donors]
    return [array.T @ donor_populations.T for array in mode_rates.values]


def mode_energies(trajectory, mode_rates):
    """
    Energy E_j(t_end) dissipated into every mode, int_0^t_end Edot_j dt by the trapezoid rule.

    Args:
        trajectory (PopulationTrajectory): Populations.
        mode_rates (ModeDissipationRates): K^j_BA.

    Returns:
        list: Array of shape (n_modes,) per channel.
    """
    donors = [donor for donor, _ in mode_rates.pairs]
    integrated = integrated_populations(trajectory)[donors]
    return [array.T @ integrated for array in mode_rates.values]


def integrated_populations(trajectory):
    """
    int_0^t_end P_A(t) dt for every state by the trapezoid rule.
    """
    if trajectory.times.shape[0] < 2:
        return numpy.zeros(trajectory.n_states)
    return integrate.trapezoid(trajectory.populations, trajectory.times, axis=0)


def bin_mode_energies(bath, energies, omegas):
    """
    Turn per-mode energies into a density on a frequency grid.

    Bins are centred on the grid points with edges at the midpoints; the outer bins
    extend by half a spacing beyond the first and last points. Modes outside every
    bin are dropped.

    Args:
        bath (DiscretizedBath): Modes.
        energies (numpy.ndarray): One energy (or rate) per mode.
        omegas (numpy.ndarray): Increasing frequency grid (>= 2 points).

    Returns:
        numpy.ndarray: Energy per unit frequency on the grid.
    """
    omegas = numpy.asarray(omegas, dtype=float)
    if omegas.shape[0] < 2 or numpy.any(numpy.diff(omegas) <= 0):
        raise ParameterError("binning needs an increasing grid of at least two frequencies")
    midpoints = 0.5 * (omegas[1:] + omegas[:-1])
    edges = numpy.concatenate(
        [[omegas[0] - (midpoints[0] - omegas[0])], midpoints, [omegas[-1] + (omegas[-1] - midpoints[-1])]]
    )
    totals, _ = numpy.histogram(bath.frequencies, bins=edges, weights=numpy.asarray(energies, dtype=float))
    return totals / numpy.diff(edges)


def integrate_over_frequency(omegas, density):
    """
    Trapezoid integral of a density over its frequency grid.
    """
    if numpy.asarray(omegas).shape[0] < 2:
        return 0.0
    return float(integrate.trapezoid(density, omegas))


def subsystem_energy_loss(subsystem, trajectory):
    """
    sum_A E_A [P_A(0) - P_A(t_end)].
    """
    return float(subsystem.energies @ (trajectory.populations[0] - trajectory.populations[-1]))


def energy_conservation(dissipated, energy_loss, tolerance=CONSERVATION_TOLERANCE, **details):
    """
    Compare dissipated energy with the energy lost by the subsystem.

    Args:
        dissipated (float): Energy dissipated into the baths.
        energy_loss (float): Subsystem site-energy loss.
        tolerance (float): Relative tolerance.
        **details: Extra entries recorded in the report (rule, frequency range, ...).

    Returns:
        dict: dissipated, subsystem_energy_loss, relative_error, tolerance, passed and details.
    """
    difference = abs(dissipated - energy_loss)
    if abs(energy_loss) > CONSERVATION_FLOOR:
        relative_error = difference / abs(energy_loss)
        passed = relative_error <= tolerance
    else:
        relative_error = None
        passed = difference <= CONSERVATION_FLOOR
    report = {
        "dissipated": float(dissipated),
        "subsystem_energy_loss": float(energy_loss),
        "relative_error": relative_error,
        "tolerance": tolerance,
        "passed": bool(passed),
    }
    report.update(details)
    return report


def conservation_grid(subsystem, n_points):
    """
    Uniform grid over (0, omega_max] of the widest bath.
    """
    omega_max = max(bath.omega_max for bath in subsystem.baths)
    return numpy.linspace(omega_max / n_points, omega_max, n_points)


class MqmeDResult:
    """
    Output of one MQME-D trajectory.

    Attributes:
        trajectory (PopulationTrajectory): Populations on the output lattice.
        rates (RateMatrix): Transfer rates.
        stationary (numpy.ndarray): Stationary populations of the rate matrix.
        grids (list): Accumulated DissipationGrid per channel on the output lattice.
        mode_energies (list): E_j(t_end) per channel, None unless mode resolved.
        converged (bool): True when every quadrature integrand decayed within T_int.
        conservation (dict): Energy conservation report, None when not requested.
        energy_loss (float): Subsystem site-energy loss over the run.
    """

    def __init__(self, trajectory, rates, stationary, grids, mode_energies, converged, conservation, energy_loss):
        self.trajectory = trajectory
        self.rates = rates
        self.stationary = stationary
        self.grids = grids
        self.mode_energies = mode_energies
        self.converged = converged
        self.conservation = conservation
        self.energy_loss = energy_loss


def prepare_kernels(subsystem, beta, quad):
    """
    Line broadening tables and pair kernels of a subsystem with discretized baths.

    Returns:
        dict: (A, B) -> PairKernel.
    """
    return pair_kernels(subsystem, line_broadening_tables(subsystem, beta, quad))


def run_mqme_d(
    subsystem,
    beta,
    quad,
    omegas,
    initial_populations,
    dt=0.01,
    t_end=100.0,
    output_stride=1,
    kernels=None,
    shifts=None,
    mode_resolved=False,
    conservation_points=None,
):
    """
    Full MQME-D pipeline: rates, populations, dissipation densities and their accumulation.

    Args:
        subsystem (AbstractSubsystem): Subsystem with discretized baths.
        beta (float): Inverse temperature.
        quad (QuadratureSpec): Rate quadrature grid.
        omegas (numpy.ndarray): Output frequency grid.
        initial_populations (array-like): P(0).
        dt (float): RK4 time step.
        t_end (float): Propagation horizon.
        output_stride (int): Keep every stride-th time sample in the outputs.
        kernels (dict): Prepared pair kernels (built from the subsystem when None).
        shifts (numpy.ndarray): Static energy shift of every state.
        mode_resolved (bool): Also compute per-mode energies.
        conservation_points (int): Size of the auxiliary grid over (0, omega_max] used for the
            energy conservation check, None to check on the output grid.

    Returns:
        MqmeDResult: Trajectory, rates, dissipation grids and diagnostics.
    """
    if kernels is None:
        kernels = prepare_kernels(subsystem, beta, quad)
    shifts = numpy.zeros(subsystem.n_states) if shifts is None else numpy.asarray(shifts, dtype=float)

    rates = rate_matrix(kernels, subsystem.n_states, quad, shifts=shifts)
    trajectory = propagate_populations(rates, initial_populations, dt=dt, t_end=t_end)
    densities = dissipative_spectral_densities(subsystem, kernels, omegas, beta, quad, shifts=shifts)
    grids = [
        accumulate(grid).subsample(output_stride)
        for grid in dissipation_density(trajectory, densities, subsystem.channel_labels)
    ]
    converged = rates.converged and densities.converged

    energies = None
    if mode_resolved:
        energies = mode_energies(trajectory, mode_dissipation_rates(subsystem, kernels, beta, quad, shifts=shifts))

    shifted = subsystem.with_energies(subsystem.energies + shifts)
    energy_loss = subsystem_energy_loss(shifted, trajectory)
    conservation = None
    if conservation_points is not None:
        dense = conservation_grid(subsystem, conservation_points)
        dense_densities = dissipative_spectral_densities(subsystem, kernels, dense, beta, quad, shifts=shifts)
        integrated = integrated_populations(trajectory)
        dissipated = 0.0
        for channel in range(subsystem.n_channels):
            weights = dense_densities.population_weights(channel, subsystem.n_states)
            dissipated += integrate_over_frequency(dense, weights @ integrated)
        captured = sum(integrate_over_frequency(grid.omegas, grid.steady_state) for grid in grids)
        conservation = energy_conservation(
            dissipated,
            energy_loss,
            rule=INTEGRATION_RULE,
            omega_range=[float(dense[0]), float(dense[-1])],
            n_points=int(conservation_points),
            output_grid_dissipated=captured,
        )
        if energies is not None:
            conservation["mode_sum_dissipated"] = float(sum(array.sum() for array in energies))

    try:
        stationary = steady_state(rates)
    except StructuralError as error:
        logger.warning("no unique stationary state: %s", error)
        stationary = None

    return MqmeDResult(
        trajectory.subsample(output_stride),
        rates,
        stationary,
        grids,
        energies,
        converged,
        conservation,
        energy_loss,
    )
