import numpy

from mqme_dissipation.abstract_models.abstract_subsystem import AbstractSubsystem


class LocalBathSubsystem(AbstractSubsystem):
    """
    Every state owns one bath, and no mode couples to two states.
    """

    @property
    def topology(self):
        return "local_bath"

    @property
    def channel_weights(self):
        return numpy.eye(self.n_states)

    @property
    def channel_labels(self):
        return self.labels

    @property
    def default_disorder_topology(self):
        return "independent_per_state"


class SpinBosonSubsystem(AbstractSubsystem):
    """
    Two states |+>, |-> with H_sub = (E / 2) sigma_z + V sigma_x, coupled to one bath
    through sigma_z (mode displacements +d_j on |+> and -d_j on |->).
    """

    def __init__(self, energy_gap, coupling, spectral_density, bath=None):
        """
        Initialize the spin-boson subsystem.

        Args:
            energy_gap (float): E, energy of |+> minus energy of |->.
            coupling (float): V.
            spectral_density (AbstractSpectralDensity): Bath spectral density.
            bath (DiscretizedBath): Discretized bath (optional).
        """
        super().__init__(
            energies=[0.5 * energy_gap, -0.5 * energy_gap],
            couplings=[[0.0, coupling], [coupling, 0.0]],
            spectral_densities=[spectral_density],
            baths=None if bath is None else [bath],
            labels=["+", "-"],
        )

    @property
    def topology(self):
        return "spin_boson"

    @property
    def channel_weights(self):
        return numpy.array([[1.0], [-1.0]])

    @property
    def channel_labels(self):
        return ["sigma_z"]

    @property
    def default_disorder_topology(self):
        return "anti_correlated"


SUBSYSTEM_TYPES = {
    "local_bath": LocalBathSubsystem,
    "spin_boson": SpinBosonSubsystem,
}
