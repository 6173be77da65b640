from concurrent.futures import ProcessPoolExecutor
import logging

import numpy

from mqme_dissipation.bath import SIGMA_MODES, split_tss
from mqme_dissipation.dissipation import (
    DissipationGrid,
    energy_conservation,
    integrate_over_frequency,
    prepare_kernels,
    run_mqme_d,
)
from mqme_dissipation.exceptions import ParameterError
from mqme_dissipation.mqme import PopulationTrajectory
from mqme_dissipation.utils.log_capture import captured_warnings, replay_warnings

logger = logging.getLogger(__name__)

DISORDER_TOPOLOGIES = ("independent_per_state", "anti_correlated")


class TssRunConfig:
    """
    Settings of a time-scale separation ensemble.

    Attributes:
        eta (float): S(0) of the splitting function, in [0, 1].
        cutoff (float): Splitting frequency omega*.
        n_traj (int): Number of disorder realizations.
        seed (int): Non-negative seed of the ensemble.
        sigma_mode (str): "verbatim" or "sqrt".
        disorder_topology (str): "independent_per_state", "anti_correlated" or None for the
            subsystem default.
    """

    def __init__(
        self, eta=0.99, cutoff=0.2, n_traj=1000, seed=0, sigma_mode="verbatim", disorder_topology=None
    ):
        if not 0.0 <= eta <= 1.0:
            raise ParameterError(f"eta must lie in [0, 1], got {eta}")
        if not cutoff > 0:
            raise ParameterError(f"splitting frequency must be > 0, got {cutoff}")
        if int(n_traj) != n_traj or n_traj < 1:
            raise ParameterError(f"n_traj must be a positive integer, got {n_traj}")
        if int(seed) != seed or seed < 0 or seed >= 2**64:
            raise ParameterError(f"seed must be a 64-bit non-negative integer, got {seed}")
        if sigma_mode not in SIGMA_MODES:
            raise ParameterError(f"sigma_mode must be one of {SIGMA_MODES}, got {sigma_mode!r}")
        if disorder_topology is not None and disorder_topology not in DISORDER_TOPOLOGIES:
            raise ParameterError(f"disorder_topology must be one of {DISORDER_TOPOLOGIES}, got {disorder_topology!r}")
        self.eta = float(eta)
        self.cutoff = float(cutoff)
        self.n_traj = int(n_traj)
        self.seed = int(seed)
        self.sigma_mode = sigma_mode
        self.disorder_topology = disorder_topology

    def resolved_topology(self, subsystem):
        return self.disorder_topology or subsystem.default_disorder_topology

    def to_dict(self):
        return {
            "eta": self.eta,
            "cutoff": self.cutoff,
            "n_traj": self.n_traj,
            "seed": self.seed,
            "sigma_mode": self.sigma_mode,
            "disorder_topology": self.disorder_topology,
        }


class EnsembleResult:
    """
    Means and standard errors over the disorder realizations.

    Attributes:
        trajectory (PopulationTrajectory): Mean populations.
        grids (list): Mean DissipationGrid per channel, stderr of E(omega, t_end) attached.
        n_traj (int): Number of realizations.
        seed (int): Ensemble seed.
        sigma_slow (numpy.ndarray): Disorder scale of every state.
        n_unconverged (int): Realizations with at least one undecayed quadrature integrand.
        mean_energy_loss (float): Mean subsystem energy loss.
        conservation (dict): Energy conservation report on the output grid.
    """

    def __init__(self, trajectory, grids, n_traj, seed, sigma_slow, n_unconverged, mean_energy_loss, conservation):
        self.trajectory = trajectory
        self.grids = grids
        self.n_traj = n_traj
        self.seed = seed
        self.sigma_slow = sigma_slow
        self.n_unconverged = n_unconverged
        self.mean_energy_loss = mean_energy_loss
        self.conservation = conservation


def trajectory_rng(seed, index):
    """
    Independent random stream of one realization, fixed by (seed, index) alone.
    """
    return numpy.random.default_rng([int(seed), int(index)])


def sample_disorder(topology, sigma_slow, rng, channel_weights=None):
    """
    Static energy shifts of every state for one realization.

    Args:
        topology (str): "independent_per_state" (one Gaussian draw per state with that
            state's sigma) or "anti_correlated" (a single draw delta applied with the
            channel signs, shifts +delta and -delta on the two states).
        sigma_slow (numpy.ndarray): Disorder scale of every state (>= 0).
        rng (numpy.random.Generator): Random stream.
        channel_weights (numpy.ndarray): Weights w of the subsystem, needed for anti_correlated.

    Returns:
        numpy.ndarray: Shift of every state.
    """
    sigma_slow = numpy.asarray(sigma_slow, dtype=float)
    if numpy.any(sigma_slow < 0):
        raise ParameterError("disorder scales must be >= 0")
    if topology == "independent_per_state":
        return sigma_slow * rng.standard_normal(sigma_slow.shape[0])
    if topology == "anti_correlated":
        if channel_weights is None:
            raise ParameterError("anti_correlated disorder needs the channel weights")
        signs = numpy.asarray(channel_weights, dtype=float)[:, 0]
        return signs * float(numpy.max(sigma_slow)) * rng.standard_normal()
    raise ParameterError(f"disorder_topology must be one of {DISORDER_TOPOLOGIES}, got {topology!r}")


def apply_tss(subsystem, cfg, beta):
    """
    Split every channel bath and derive the per-state disorder scales.

    Args:
        subsystem (AbstractSubsystem): Subsystem with discretized baths.
        cfg (TssRunConfig): Splitting settings.
        beta (float): Inverse temperature.

    Returns:
        tuple: (subsystem with the fast baths, sigma_slow of every state).
    """
    splits = {}
    for bath in subsystem.baths:
        if id(bath) not in splits:
            splits[id(bath)] = split_tss(bath, cfg.eta, cfg.cutoff, beta, sigma_mode=cfg.sigma_mode)
    channel_splits = [splits[id(bath)] for bath in subsystem.baths]
    channel_sigma = numpy.array([split.sigma_slow for split in channel_splits])
    state_sigma = numpy.sqrt((subsystem.channel_weights**2) @ channel_sigma**2)
    return subsystem.with_baths([split.fast_bath for split in channel_splits]), state_sigma


_WORKER_CONTEXT = {}


def _init_worker(context):
    _WORKER_CONTEXT.clear()
    _WORKER_CONTEXT.update(context)


class RunningMoments:
    """
    Welford mean and variance of equally shaped arrays, updated one sample at a time.
    """

    def __init__(self):
        self.count = 0
        self.mean = None
        self.squares = None

    def update(self, sample):
        sample = numpy.asarray(sample, dtype=float)
        self.count += 1
        if self.mean is None:
            self.mean = sample.copy()
            self.squares = numpy.zeros_like(sample)
            return
        delta = sample - self.mean
        self.mean += delta / self.count
        self.squares += delta * (sample - self.mean)

    @property
    def variance(self):
        """
        Unbiased sample variance (NaN below two samples).
        """
        if self.count < 2:
            return numpy.full_like(self.mean, numpy.nan)
        return self.squares / (self.count - 1)

    @property
    def stderr(self):
        return numpy.sqrt(self.variance / self.count)


def _run_realization(index):
    context = _WORKER_CONTEXT
    subsystem = context["subsystem"]
    cfg = context["cfg"]
    with captured_warnings() as warnings:
        shifts = sample_disorder(
            cfg.resolved_topology(subsystem),
            context["sigma_slow"],
            trajectory_rng(cfg.seed, index),
            subsystem.channel_weights,
        )
        result = run_mqme_d(
            subsystem,
            context["beta"],
            context["quad"],
            context["omegas"],
            context["initial_populations"],
            dt=context["dt"],
            t_end=context["t_end"],
            output_stride=context["output_stride"],
            kernels=context["kernels"],
            shifts=shifts,
        )
    return (
        result.trajectory.populations,
        numpy.stack([grid.rate_density for grid in result.grids]),
        numpy.stack([grid.cumulative for grid in result.grids]),
        result.converged,
        result.energy_loss,
        result.trajectory.times,
        warnings,
    )


def run_ensemble(
    subsystem,
    sigma_slow,
    cfg,
    beta,
    quad,
    omegas,
    initial_populations,
    dt=0.01,
    t_end=100.0,
    output_stride=1,
    workers=1,
    kernels=None,
):
    """
    Average MQME-D over static disorder realizations.

    Every realization draws energy shifts from its own (seed, index) stream, rebuilds the
    rates and dissipation tables with the shifted energies and the fast-bath line
    broadening functions, then propagates and accumulates. The reduction runs in
    realization order, so results do not depend on the worker count.

    Args:
        subsystem (AbstractSubsystem): Subsystem whose baths are the fast parts.
        sigma_slow (numpy.ndarray): Disorder scale of every state.
        cfg (TssRunConfig): Ensemble settings.
        beta (float): Inverse temperature.
        quad (QuadratureSpec): Rate quadrature grid.
        omegas (numpy.ndarray): Output frequency grid.
        initial_populations (array-like): P(0).
        dt (float): RK4 time step.
        t_end (float): Propagation horizon.
        output_stride (int): Keep every stride-th time sample.
        workers (int): Number of worker processes.
        kernels (dict): Prepared fast-bath pair kernels (built when None).

    Returns:
        EnsembleResult: Means, standard errors and diagnostics.
    """
    if kernels is None:
        kernels = prepare_kernels(subsystem, beta, quad)
    context = {
        "subsystem": subsystem,
        "cfg": cfg,
        "sigma_slow": numpy.asarray(sigma_slow, dtype=float),
        "beta": beta,
        "quad": quad,
        "omegas": numpy.asarray(omegas, dtype=float),
        "initial_populations": numpy.asarray(initial_populations, dtype=float),
        "dt": dt,
        "t_end": t_end,
        "output_stride": output_stride,
        "kernels": kernels,
    }
    logger.info(
        "running %d TSS realizations (seed %d, %s disorder, sigma_slow=%s) on %d worker(s)",
        cfg.n_traj,
        cfg.seed,
        cfg.resolved_topology(subsystem),
        numpy.array2string(context["sigma_slow"], precision=6),
        workers,
    )

    sums = None
    final = RunningMoments()
    report_every = max(1, cfg.n_traj // 10)
    if workers > 1:
        executor = ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(context,))
        chunksize = max(1, cfg.n_traj // (4 * workers))
        results = executor.map(_run_realization, range(cfg.n_traj), chunksize=chunksize)
    else:
        executor = None
        _init_worker(context)
        results = map(_run_realization, range(cfg.n_traj))
    try:
        for index, (populations, rate_density, cumulative, converged, energy_loss, times, warnings) in enumerate(
            results
        ):
            replay_warnings(warnings)
            if sums is None:
                sums = {
                    "populations": numpy.zeros_like(populations),
                    "rate_density": numpy.zeros_like(rate_density),
                    "cumulative": numpy.zeros_like(cumulative),
                    "unconverged": 0,
                    "energy_loss": 0.0,
                    "times": times,
                }
            sums["populations"] += populations
            sums["rate_density"] += rate_density
            sums["cumulative"] += cumulative
            final.update(cumulative[:, :, -1])
            sums["unconverged"] += 0 if converged else 1
            sums["energy_loss"] += energy_loss
            if (index + 1) % report_every == 0:
                logger.info("TSS realizations: %d/%d", index + 1, cfg.n_traj)
    finally:
        if executor is not None:
            executor.shutdown()

    n_traj = cfg.n_traj
    stderr = final.stderr

    grids = [
        DissipationGrid(
            label,
            context["omegas"],
            sums["times"],
            sums["rate_density"][channel] / n_traj,
            sums["cumulative"][channel] / n_traj,
            stderr[channel],
        )
        for channel, label in enumerate(subsystem.channel_labels)
    ]
    if sums["unconverged"]:
        logger.warning("%d of %d TSS realizations carry undecayed quadrature integrands", sums["unconverged"], n_traj)

    mean_energy_loss = sums["energy_loss"] / n_traj
    dissipated = sum(integrate_over_frequency(grid.omegas, grid.steady_state) for grid in grids)
    conservation = energy_conservation(
        dissipated,
        mean_energy_loss,
        rule="trapezoid",
        omega_range=[float(context["omegas"][0]), float(context["omegas"][-1])],
        gated=False,
    )
    return EnsembleResult(
        PopulationTrajectory(sums["times"], sums["populations"] / n_traj),
        grids,
        n_traj,
        cfg.seed,
        context["sigma_slow"],
        sums["unconverged"],
        mean_energy_loss,
        conservation,
    )
