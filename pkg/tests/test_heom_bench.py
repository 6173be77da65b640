import logging
import math

import numpy
import pytest

from mqme_dissipation.bath import discretize_drude_lorentz
from mqme_dissipation.config.experiment_config import load_config
from mqme_dissipation.dissipation import run_mqme_d
from mqme_dissipation.exceptions import HierarchyMemoryError, ParameterError, StationarityError
from mqme_dissipation.heom_bench import (
    HeomConfig,
    ProbeModeSpec,
    boltzmann_levels,
    build_hierarchy,
    dissipation_density_from_probe,
    drift_correct,
    drude_lorentz_terms,
    enumerate_hierarchy,
    hierarchy_size,
    probe_dissipation,
    probe_scan,
    propagate_heom,
    run_heom_d,
    scan_coverage,
)
from mqme_dissipation.mqme import QuadratureSpec
from mqme_dissipation.spectral_density import DrudeLorentzSpectralDensity
from mqme_dissipation.subsystem import LocalBathSubsystem, SpinBosonSubsystem


def _dimer(drude_lorentz, energy_gap=1.0, coupling=0.25):
    return LocalBathSubsystem(
        [energy_gap, 0.0], [[0.0, coupling], [coupling, 0.0]], [drude_lorentz, drude_lorentz]
    )


def _short_config(**overrides):
    settings = {"n_hier": 2, "n_matsubara": 1, "dt_max": 0.05, "t_sim": 2.0, "dt_out": 0.1}
    settings.update(overrides)
    return HeomConfig(**settings)


def test_probe_ladder_sizes():
    assert boltzmann_levels(0.2, 1.0) == 35
    assert boltzmann_levels(10.0, 1.0) == 1
    assert boltzmann_levels(0.2, 1.0, coverage=0.99) == 24
    with pytest.raises(ParameterError):
        boltzmann_levels(0.2, 1.0, coverage=1.0)


def test_scan_relaxes_coverage_only_at_low_frequency():
    assert scan_coverage(0.1) == 0.99
    assert scan_coverage(0.5) == 0.999
    assert scan_coverage(0.1, coverage=0.95) == 0.95


def test_probe_spec_validation():
    probe = ProbeModeSpec(0.5, 1e-5, beta=1.0)
    assert probe.n_levels == boltzmann_levels(0.5, 1.0)
    assert probe.displacement == pytest.approx(math.sqrt(4e-5))
    assert ProbeModeSpec(0.5, 0.0, beta=1.0).s_bp == 0.0
    with pytest.raises(ParameterError):
        ProbeModeSpec(0.0, 1e-5, beta=1.0)
    with pytest.raises(ParameterError):
        ProbeModeSpec(0.5, -1e-5, beta=1.0)


@pytest.mark.parametrize(
    "arguments",
    [
        {"n_hier": 0, "n_matsubara": 1, "dt_max": 0.1},
        {"n_hier": 2, "n_matsubara": -1, "dt_max": 0.1},
        {"n_hier": 2, "n_matsubara": 1, "dt_max": 0.0},
        {"n_hier": 2, "n_matsubara": 1, "dt_max": 0.1, "dt_out": 200.0},
        {"n_hier": 2, "n_matsubara": 1, "dt_max": 0.1, "steady_window": 1.0},
    ],
)
def test_config_validation(arguments):
    with pytest.raises(ParameterError):
        HeomConfig(**arguments)


def test_output_lattice():
    times = HeomConfig(2, 1, 0.1, t_sim=1.0, dt_out=0.25).output_times
    numpy.testing.assert_allclose(times, [0.0, 0.25, 0.5, 0.75, 1.0])


def test_drude_lorentz_decomposition(drude_lorentz):
    coefficients, rates = drude_lorentz_terms(drude_lorentz, beta=1.0, n_matsubara=2)
    assert rates[0] == 0.5
    numpy.testing.assert_allclose(rates[1:], [2 * numpy.pi, 4 * numpy.pi])
    assert coefficients[0] == pytest.approx(0.2 * 0.5 * (1 / math.tan(0.25) - 1j))
    nu = 2 * numpy.pi
    assert coefficients[1] == pytest.approx(4 * 0.2 * 0.5 * nu / (nu**2 - 0.25))
    assert numpy.all(coefficients[1:].imag == 0)


@pytest.mark.parametrize(
    "n_primary, depth, n_secondary",
    [(2, 0, 0), (2, 3, 0), (4, 2, 0), (8, 4, 54), (4, 0, 6), (3, 1, 2)],
)
def test_hierarchy_size_matches_enumeration(n_primary, depth, n_secondary):
    indices = enumerate_hierarchy(n_primary, depth, n_secondary)
    assert len(indices) == hierarchy_size(n_primary, depth, n_secondary)
    assert len(set(indices)) == len(indices)
    assert indices[0] == (0,) * (n_primary + n_secondary)


def test_zero_depth_hierarchy_is_the_density_matrix_alone():
    assert hierarchy_size(4, 0, 6) == 1
    assert hierarchy_size(2, 3) == math.comb(5, 2)


def test_secondary_terms_stay_in_the_first_tier():
    indices = enumerate_hierarchy(2, 3, 2)
    assert all(sum(index[2:]) <= 1 for index in indices)
    assert all(sum(index[2:]) == 0 or sum(index) == 1 for index in indices)


def test_hierarchy_needs_a_two_level_drude_lorentz_subsystem(drude_lorentz, brownian):
    cfg = _short_config()
    trimer = LocalBathSubsystem([0.0, 0.0, 0.0], numpy.zeros((3, 3)), [drude_lorentz] * 3)
    with pytest.raises(ParameterError):
        build_hierarchy(trimer, cfg, 1.0, [1.0, 0.0, 0.0])
    with pytest.raises(ParameterError):
        build_hierarchy(SpinBosonSubsystem(2.0, 0.25, brownian), cfg, 1.0, [1.0, 0.0])
    with pytest.raises(ParameterError):
        build_hierarchy(_dimer(drude_lorentz), cfg, 1.0, [0.7, 0.7])
    with pytest.raises(ParameterError):
        build_hierarchy(_dimer(drude_lorentz), cfg, 1.0, [1.0, 0.0], ProbeModeSpec(1.0, 1e-5, 1.0, channel=2))


def test_hierarchy_over_the_memory_cap_is_refused(drude_lorentz):
    cfg = _short_config(n_hier=13, n_matsubara=30, memory_cap_bytes=1024**2)
    with pytest.raises(HierarchyMemoryError) as error:
        build_hierarchy(_dimer(drude_lorentz), cfg, 1.0, [1.0, 0.0])
    assert error.value.estimate_bytes > 1024**2


def test_filtered_hierarchy_layout(drude_lorentz):
    cfg = _short_config(n_hier=3, n_matsubara=5, n_primary_matsubara=2)
    state = build_hierarchy(_dimer(drude_lorentz), cfg, 1.0, [1.0, 0.0])
    # two channels with the Drude pole and two Matsubara terms in full depth, three more in tier 1
    assert state.n_adm == hierarchy_size(6, 3, 6)
    assert state.dimension == 2
    numpy.testing.assert_allclose(state.rho[0], numpy.diag([1.0, 0.0]))
    assert not numpy.any(state.rho[1:])


def test_counterterm_shifts_every_local_state(drude_lorentz):
    state = build_hierarchy(_dimer(drude_lorentz), _short_config(), 1.0, [1.0, 0.0])
    numpy.testing.assert_allclose(state.hamiltonian.real, [[1.2, 0.25], [0.25, 0.2]])


def test_uncoupled_states_keep_their_populations(drude_lorentz):
    cfg = _short_config()
    state = build_hierarchy(_dimer(drude_lorentz, coupling=0.0), cfg, 1.0, [0.7, 0.3])
    trajectory = propagate_heom(state, cfg)
    numpy.testing.assert_allclose(trajectory.populations[:, 0], 0.7, atol=1e-12)
    numpy.testing.assert_allclose(trajectory.populations[:, 1], 0.3, atol=1e-12)


def test_propagation_preserves_trace_and_hermiticity(drude_lorentz):
    cfg = _short_config(n_hier=3, n_matsubara=2)
    trajectory = propagate_heom(build_hierarchy(_dimer(drude_lorentz), cfg, 1.0, [1.0, 0.0]), cfg)
    assert trajectory.times.shape[0] == 21
    assert trajectory.trace_error <= 10 * cfg.rel_tol
    assert trajectory.hermiticity_error <= 1e-10
    assert trajectory.populations[-1, 0] < 1.0
    assert trajectory.stats["accepted"] >= 40
    assert trajectory.to_population_trajectory().sigma_z[0] == pytest.approx(1.0)


def test_probe_starts_in_its_thermal_state(drude_lorentz):
    probe = ProbeModeSpec(1.0, 1e-3, beta=1.0, n_levels=4)
    state = build_hierarchy(_dimer(drude_lorentz), _short_config(), 1.0, [1.0, 0.0], probe)
    weights = numpy.exp(-numpy.arange(4.0))
    expected = numpy.concatenate([weights / weights.sum(), numpy.zeros(4)])
    numpy.testing.assert_allclose(numpy.diag(state.rho[0]).real, expected)
    assert state.dimension == 8


def test_decoupled_probe_absorbs_nothing(drude_lorentz):
    cfg = _short_config()
    state = build_hierarchy(_dimer(drude_lorentz), cfg, 1.0, [1.0, 0.0], ProbeModeSpec(1.0, 0.0, 1.0, n_levels=4))
    trajectory = propagate_heom(state, cfg)
    energy = probe_dissipation(trajectory, state)
    assert energy[0] == 0.0
    numpy.testing.assert_allclose(energy, 0.0, atol=1e-9)
    numpy.testing.assert_allclose(trajectory.subsystem_rdms.trace(axis1=1, axis2=2), 1.0, atol=1e-9)


def test_probe_energy_needs_a_probe(drude_lorentz):
    cfg = _short_config(t_sim=0.2)
    state = build_hierarchy(_dimer(drude_lorentz), cfg, 1.0, [1.0, 0.0])
    with pytest.raises(ParameterError):
        probe_dissipation(propagate_heom(state, cfg), state)


def test_probe_energy_conversion(drude_lorentz):
    density = dissipation_density_from_probe([0.0, 2e-6], drude_lorentz, 0.5, 1e-5)
    numpy.testing.assert_allclose(density, [0.0, drude_lorentz.evaluate(0.5) / 0.25 * 0.2])
    with pytest.raises(ParameterError):
        dissipation_density_from_probe([1.0], drude_lorentz, 0.5, 0.0)


def test_drift_correction_removes_a_linear_trend():
    times = numpy.linspace(0.0, 100.0, 1001)
    signal = 1.0 - numpy.exp(-times)
    populations = numpy.tile([0.3, 0.7], (times.shape[0], 1))
    corrected, slope = drift_correct(times, signal + 0.01 * times, populations)
    assert slope == pytest.approx(0.01, rel=1e-8)
    numpy.testing.assert_allclose(corrected, signal, atol=1e-8)


def test_drift_correction_needs_stationary_populations():
    times = numpy.linspace(0.0, 100.0, 1001)
    decay = numpy.exp(-0.01 * times)
    populations = numpy.column_stack([decay, 1.0 - decay])
    with pytest.raises(StationarityError) as error:
        drift_correct(times, times, populations)
    assert error.value.max_rate > 1e-4


def test_drift_correction_needs_enough_samples():
    with pytest.raises(ParameterError):
        drift_correct([0.0, 1.0, 2.0], [0.0, 0.0, 0.0], numpy.ones((3, 2)) / 2)


def test_scan_records_failures_and_continues(drude_lorentz):
    result = probe_scan(_dimer(drude_lorentz), _short_config(), 1.0, [1.0], 1e-3, [1.0, 0.0])
    assert result.runs == {}
    assert set(result.failures) == {(0, 0), (0, 1)}
    assert "not stationary" in result.failures[(0, 0)]
    assert result.grids() == []


def test_scan_builds_one_grid_per_channel(drude_lorentz):
    result = probe_scan(_dimer(drude_lorentz, coupling=0.0), _short_config(), 1.0, [1.5, 1.0], 1e-3, [1.0, 0.0])
    assert not result.failures
    numpy.testing.assert_array_equal(result.omegas, [1.5, 1.0])
    assert set(result.runs) == {(0, 0), (0, 1), (1, 0), (1, 1)}
    grids = result.grids()
    assert [grid.channel for grid in grids] == ["1", "2"]
    numpy.testing.assert_allclose(grids[0].omegas, [1.0, 1.5])
    assert grids[0].cumulative.shape == (2, 21)
    run = result.runs[(1, 0)]
    assert run.omega == 1.0
    assert run.metadata(_short_config())["n_levels"] == run.probe.n_levels


def test_scan_keeps_one_row_per_requested_frequency(drude_lorentz):
    result = probe_scan(_dimer(drude_lorentz, coupling=0.0), _short_config(), 1.0, [1.0, 1.0], 1e-3, [1.0, 0.0])
    assert set(result.runs) == {(0, 0), (0, 1), (1, 0), (1, 1)}
    grid = result.grids()[0]
    numpy.testing.assert_array_equal(grid.omegas, [1.0, 1.0])
    numpy.testing.assert_array_equal(grid.cumulative[0], grid.cumulative[1])
    assert grid.steady_state[0] == grid.steady_state[1]


def test_scan_warnings_reach_the_parent_in_request_order(drude_lorentz, caplog):
    dimer = _dimer(drude_lorentz, coupling=0.0)
    messages = []
    for workers in (1, 2):
        caplog.clear()
        with caplog.at_level(logging.WARNING, logger="mqme_dissipation"):
            probe_scan(dimer, _short_config(t_sim=1.0), 1.0, [0.15, 1.0, 0.1], 1e-3, [1.0, 0.0], workers=workers)
        messages.append([record.getMessage() for record in caplog.records if "coverage relaxed" in record.getMessage()])
    assert messages[0] == messages[1]
    assert [message.split("omega=")[1] for message in messages[0]] == ["0.15", "0.15", "0.1", "0.1"]


def test_drude_pole_on_a_matsubara_frequency_is_rejected():
    model = DrudeLorentzSpectralDensity(0.2, 2.0 * math.pi)
    with pytest.raises(ParameterError, match="singular"):
        drude_lorentz_terms(model, beta=1.0, n_matsubara=0)
    with pytest.raises(ParameterError, match="singular"):
        drude_lorentz_terms(DrudeLorentzSpectralDensity(0.2, 4.0 * math.pi), beta=1.0, n_matsubara=3)
    coefficients, _ = drude_lorentz_terms(DrudeLorentzSpectralDensity(0.2, 2.0 * math.pi + 1e-3), 1.0, 0)
    assert numpy.isfinite(coefficients[0])


def test_weak_probe_leaves_the_populations_alone(drude_lorentz):
    cfg = _short_config()
    dimer = _dimer(drude_lorentz)
    bare = propagate_heom(build_hierarchy(dimer, cfg, 1.0, [1.0, 0.0]), cfg)
    probed = propagate_heom(build_hierarchy(dimer, cfg, 1.0, [1.0, 0.0], ProbeModeSpec(1.0, 1e-5, 1.0)), cfg)
    assert probed.populations[-1, 0] < 1.0
    assert numpy.max(numpy.abs(probed.populations - bare.populations)) <= 1e-4


def _tier_one_matsubara(heom, **overrides):
    # Matsubara terms in tier 1 only keep the probe ladders of the lowest frequencies under the memory cap
    return HeomConfig(**dict(heom.to_dict(), n_primary_matsubara=0, **overrides))


@pytest.mark.slow
def test_populations_agree_with_rate_theory_at_full_depth():
    config = load_config("table1_cond_ii_dE2", method="heom")
    assert (config.heom.n_hier, config.heom.n_matsubara) == (7, 30)
    heom = propagate_heom(
        build_hierarchy(config.subsystem, config.heom, config.beta, config.initial_populations), config.heom
    ).to_population_trajectory()

    mqme_config = load_config("table1_cond_ii_dE2", method="mqme_d")
    quad = QuadratureSpec(dt=0.01, t_int=100.0)
    mqme = run_mqme_d(
        mqme_config.discretized_subsystem(),
        config.beta,
        quad,
        [1.0],
        config.initial_populations,
        dt=0.01,
        t_end=config.heom.t_sim,
    ).trajectory
    assert heom.times[-1] == pytest.approx(mqme.times[-1])
    assert abs(heom.sigma_z[-1] - mqme.sigma_z[-1]) <= 0.1


@pytest.mark.slow
def test_probe_result_is_converged_in_the_coupling_strength():
    config = load_config("table1_cond_ii_dE2", method="heom_d")
    results = []
    for s_bp in [1e-5, 5e-6]:
        probe = ProbeModeSpec(1.0, s_bp, config.beta, channel=0)
        results.append(run_heom_d(config.subsystem, config.heom, config.beta, config.initial_populations, probe))
    assert results[1].steady_state == pytest.approx(results[0].steady_state, rel=1e-2)


@pytest.mark.slow
def test_population_inversion_converges_monotonically_with_depth():
    config = load_config("table1_cond_ii_dE2", method="heom")
    final = []
    for depth in [2, 3, 4]:
        cfg = HeomConfig(**dict(config.heom.to_dict(), n_hier=depth, t_sim=20.0))
        state = build_hierarchy(config.subsystem, cfg, config.beta, config.initial_populations)
        final.append(propagate_heom(state, cfg).to_population_trajectory().sigma_z[-1])
    increments = numpy.abs(numpy.diff(final))
    assert numpy.all(numpy.diff(increments) < 0)


@pytest.mark.slow
def test_degenerate_dimer_channels_exchange_low_frequency_energy():
    config = load_config("table1_cond_iii_dE0", method="heom_d")
    lowest = float(config.probe_omegas[0])
    scan = probe_scan(
        config.subsystem,
        _tier_one_matsubara(config.heom),
        config.beta,
        [lowest],
        config.blocks["probe"]["s_bp"],
        config.initial_populations,
        workers=2,
    )
    assert not scan.failures
    first, second = (scan.runs[(0, channel)].steady_state for channel in range(2))
    assert first * second < 0
