import pytest

from mqme_dissipation.bath import discretize_brownian, discretize_drude_lorentz
from mqme_dissipation.mqme import QuadratureSpec
from mqme_dissipation.spectral_density import BrownianOscillatorSpectralDensity, DrudeLorentzSpectralDensity
from mqme_dissipation.subsystem import LocalBathSubsystem, SpinBosonSubsystem

COUPLING = 0.25


@pytest.fixture
def beta():
    return 1.0


@pytest.fixture
def drude_lorentz():
    return DrudeLorentzSpectralDensity(reorganization_energy=0.2, cutoff=0.5)


@pytest.fixture
def brownian():
    return BrownianOscillatorSpectralDensity(reorganization_energy=0.25, peak_frequency=2.062, damping=0.25)


@pytest.fixture
def small_bath(drude_lorentz):
    return discretize_drude_lorentz(drude_lorentz, n_modes=400, omega_max=15.0)


@pytest.fixture
def brownian_bath(brownian):
    return discretize_brownian(brownian, n_modes=1000, omega_max=15.0)


@pytest.fixture
def quad():
    return QuadratureSpec(dt=0.01, t_int=60.0)


@pytest.fixture
def make_dimer(drude_lorentz, small_bath):
    def _make_dimer(energy_gap=2.0, coupling=COUPLING):
        return LocalBathSubsystem(
            energies=[energy_gap, 0.0],
            couplings=[[0.0, coupling], [coupling, 0.0]],
            spectral_densities=[drude_lorentz, drude_lorentz],
            baths=[small_bath, small_bath],
        )

    return _make_dimer


@pytest.fixture
def dimer(make_dimer):
    return make_dimer()


@pytest.fixture
def spin_boson(brownian, brownian_bath):
    return SpinBosonSubsystem(energy_gap=2.0, coupling=COUPLING, spectral_density=brownian, bath=brownian_bath)


@pytest.fixture
def spin_boson_quad():
    return QuadratureSpec(dt=0.02, t_int=100.0)
