from abc import ABC, abstractmethod
import copy
import itertools

import numpy

from mqme_dissipation.exceptions import ParameterError


class AbstractSubsystem(ABC):
    """
    Abstract base class for a subsystem of electronic states coupled to harmonic baths.

    Every bath channel c couples to state A with weight w[A, c]: the displacement of
    mode j of channel c on state A is w[A, c] d_j. An ordered pair (A, B) therefore sees
    per channel the coefficient (w[A, c] - w[B, c])^2 in front of the channel's
    reorganization energy and line broadening function.

    Methods:
        topology (property): Name of the coupling topology.
        channel_weights (property): Matrix w of shape (n_states, n_channels).
        channel_labels (property): Labels of the bath channels.
        default_disorder_topology (property): Static disorder layout used by TSS ensembles.
        n_states (property): Number of states.
        n_channels (property): Number of bath channels.
        labels (property): State labels.
        energies (property): State energies E_A.
        couplings (property): Coupling matrix V.
        baths (property): One DiscretizedBath per channel, or None before discretization.
        spectral_densities (property): Analytic spectral density per channel.
        ordered_pairs: Every ordered pair (A, B) with A != B.
        pair_coefficients: (w[A, c] - w[B, c])^2 for every channel.
        pair_reorganization_energy: Reorganization shift of the pair phase.
        pair_energy_gap: E_B - E_A plus the reorganization shift.
        coupling_operators: Diagonal system operators Q_c = sum_A w[A, c] |A><A|.
        hamiltonian: Subsystem Hamiltonian diag(E) + V.
        with_energies: Copy with new state energies.
        with_baths: Copy with new discretized baths.
        to_dict: Serializable description.
    """

    def __init__(self, energies, couplings, spectral_densities, baths=None, labels=None):
        """
        Initialize the subsystem.

        Args:
            energies (array-like): State energies E_A.
            couplings (array-like): Real symmetric coupling matrix with zero diagonal.
            spectral_densities (list): One AbstractSpectralDensity per channel.
            baths (list): One DiscretizedBath per channel (optional).
            labels (list): State labels (defaults to "1", "2", ...).

        Raises:
            ParameterError: If the coupling matrix or the channel count is inconsistent.
        """
        self._energies = numpy.asarray(energies, dtype=float)
        self._couplings = numpy.asarray(couplings, dtype=float)
        n_states = self._energies.shape[0]
        if self._couplings.shape != (n_states, n_states):
            raise ParameterError(f"coupling matrix must be {n_states}x{n_states}, got {self._couplings.shape}")
        if not numpy.allclose(self._couplings, self._couplings.T):
            raise ParameterError("coupling matrix must be symmetric")
        if numpy.any(numpy.diag(self._couplings) != 0.0):
            raise ParameterError("coupling matrix must have a zero diagonal")
        self._spectral_densities = list(spectral_densities)
        if len(self._spectral_densities) != self.n_channels:
            raise ParameterError(
                f"{self.topology} subsystem needs {self.n_channels} spectral densities, "
                f"got {len(self._spectral_densities)}"
            )
        self._baths = None if baths is None else list(baths)
        if self._baths is not None and len(self._baths) != self.n_channels:
            raise ParameterError(f"{self.topology} subsystem needs {self.n_channels} baths, got {len(self._baths)}")
        self._labels = [str(k + 1) for k in range(n_states)] if labels is None else list(labels)

    @property
    @abstractmethod
    def topology(self):
        """
        Name of the coupling topology.

        Returns:
            str: "local_bath" or "spin_boson".
        """

    @property
    @abstractmethod
    def channel_weights(self):
        """
        Coupling weight of every state to every bath channel.

        Returns:
            numpy.ndarray: Matrix w of shape (n_states, n_channels).
        """

    @property
    @abstractmethod
    def channel_labels(self):
        """
        Labels of the bath channels, used in output file names.

        Returns:
            list: One string per channel.
        """

    @property
    @abstractmethod
    def default_disorder_topology(self):
        """
        Static disorder layout matching the channel structure.

        Returns:
            str: "independent_per_state" or "anti_correlated".
        """

    @property
    def n_states(self):
        return self._energies.shape[0]

    @property
    def n_channels(self):
        return self.channel_weights.shape[1]

    @property
    def labels(self):
        return list(self._labels)

    @property
    def energies(self):
        return self._energies.copy()

    @property
    def couplings(self):
        return self._couplings.copy()

    @property
    def spectral_densities(self):
        return list(self._spectral_densities)

    @property
    def baths(self):
        if self._baths is None:
            return None
        return list(self._baths)

    def ordered_pairs(self):
        """
        Every ordered pair of distinct states.

        Returns:
            list: (A, B) index tuples, A != B, in lexicographic order.
        """
        return list(itertools.permutations(range(self.n_states), 2))

    def pair_coefficients(self, a, b):
        """
        Channel coefficients of the ordered pair (A, B).

        Args:
            a (int): Donor state index.
            b (int): Acceptor state index.

        Returns:
            numpy.ndarray: (w[A, c] - w[B, c])^2 per channel.
        """
        weights = self.channel_weights
        return (weights[a] - weights[b]) ** 2

    def pair_reorganization_energy(self, a, b):
        """
        Lambda_AA - 2 Lambda_AB + Lambda_BB evaluated with the discretized baths.

        Args:
            a (int): Donor state index.
            b (int): Acceptor state index.

        Returns:
            float: Reorganization shift of the pair.
        """
        self._require_baths()
        totals = numpy.array([bath.total_reorganization_energy for bath in self._baths])
        return float(self.pair_coefficients(a, b) @ totals)

    def pair_energy_gap(self, a, b):
        """
        Phase frequency of the ordered pair, E_B - E_A + Lambda_AA - 2 Lambda_AB + Lambda_BB.

        Args:
            a (int): Donor state index.
            b (int): Acceptor state index.

        Returns:
            float: Pair phase frequency.
        """
        return float(self._energies[b] - self._energies[a]) + self.pair_reorganization_energy(a, b)

    def coupling_operators(self):
        """
        System parts of the system-bath coupling, one diagonal matrix per channel.

        Returns:
            numpy.ndarray: Array of shape (n_channels, n_states, n_states).
        """
        weights = self.channel_weights
        return numpy.stack([numpy.diag(weights[:, c]) for c in range(self.n_channels)])

    def hamiltonian(self):
        """
        Subsystem Hamiltonian diag(E) + V.

        Returns:
            numpy.ndarray: Real symmetric matrix.
        """
        return numpy.diag(self._energies) + self._couplings

    def with_energies(self, energies):
        """
        Copy of the subsystem with new state energies.

        Args:
            energies (array-like): New state energies.

        Returns:
            AbstractSubsystem: Shallow copy sharing baths and spectral densities.
        """
        energies = numpy.asarray(energies, dtype=float)
        if energies.shape != self._energies.shape:
            raise ParameterError(f"expected {self.n_states} energies, got {energies.shape}")
        clone = copy.copy(self)
        clone._energies = energies
        return clone

    def with_baths(self, baths):
        """
        Copy of the subsystem with new discretized baths.

        Args:
            baths (list): One DiscretizedBath per channel.

        Returns:
            AbstractSubsystem: Shallow copy.
        """
        baths = list(baths)
        if len(baths) != self.n_channels:
            raise ParameterError(f"{self.topology} subsystem needs {self.n_channels} baths, got {len(baths)}")
        clone = copy.copy(self)
        clone._baths = baths
        return clone

    def to_dict(self):
        """
        Serializable description of the subsystem.

        Returns:
            dict: Topology, labels, energies, couplings and spectral densities.
        """
        return {
            "topology": self.topology,
            "labels": self.labels,
            "energies": self._energies.tolist(),
            "couplings": self._couplings.tolist(),
            "spectral_densities": [density.to_dict() for density in self._spectral_densities],
        }

    def _require_baths(self):
        if self._baths is None:
            raise ParameterError(f"{self.topology} subsystem has no discretized baths yet")
