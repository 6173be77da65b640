MODELS = ("dimer_local_bath", "spin_boson")

METHODS = ("mqme_d", "mqme_d_tss", "heom", "heom_d")

METHOD_BLOCKS = {
    "mqme_d": ("discretization", "quadrature", "propagation", "frequency_grid"),
    "mqme_d_tss": ("discretization", "quadrature", "propagation", "frequency_grid", "tss"),
    "heom": ("heom",),
    "heom_d": ("heom", "probe"),
}

TOP_LEVEL_KEYS = ("model", "method", "beta", "seed", "output_dir", "subsystem", "spectral_densities")

SUBSYSTEM_KEYS = {
    "dimer_local_bath": ("energies", "coupling", "couplings", "labels", "initial_populations"),
    "spin_boson": ("energy_gap", "coupling", "initial_populations"),
}

SPECTRAL_DENSITY_KEYS = {
    "drude_lorentz": ("type", "reorganization_energy", "cutoff"),
    "brownian_oscillator": ("type", "reorganization_energy", "peak_frequency", "damping"),
}

DISCRETIZATION_DEFAULTS = {
    "dimer_local_bath": {"n_modes": 2000, "omega_max": 15.0, "tolerance": 0.02},
    "spin_boson": {"n_modes": 5000, "omega_max": 15.0, "tolerance": 0.02},
}

QUADRATURE_DEFAULTS = {"dt": 0.01, "t_int": 5000.0, "tail_tolerance": 1e-3}

PROPAGATION_DEFAULTS = {"dt": 0.01, "t_end": 100.0, "output_stride": 10, "conservation_points": 3000}

FREQUENCY_GRID_DEFAULTS = {
    "dimer_local_bath": {"segments": [{"start": 0.1, "stop": 3.0, "step": 0.05}], "omegas": None},
    "spin_boson": {
        "segments": [
            {"start": 0.2, "stop": 1.9, "step": 0.05},
            {"start": 1.9, "stop": 2.2, "step": 0.005},
            {"start": 2.2, "stop": 3.0, "step": 0.05},
        ],
        "omegas": None,
    },
}

TSS_DEFAULTS = {
    "dimer_local_bath": {
        "eta": 0.99,
        "cutoff": 0.2,
        "n_traj": 1000,
        "sigma_mode": "verbatim",
        "disorder_topology": None,
    },
    "spin_boson": {
        "eta": 0.6,
        "cutoff": 0.2,
        "n_traj": 1000,
        "sigma_mode": "verbatim",
        "disorder_topology": None,
    },
}

HEOM_DEFAULTS = {
    "rel_tol": 1e-6,
    "t_sim": 100.0,
    "dt_out": 0.1,
    "n_primary_matsubara": 3,
    "memory_cap_bytes": 4 * 1024**3,
    "steady_window": 0.2,
    "stationarity_threshold": 1e-4,
}

HEOM_REQUIRED = ("n_hier", "n_matsubara", "dt_max")

PROBE_DEFAULTS = {
    "s_bp": 1e-5,
    "coverage": 0.999,
    "omegas": None,
    "segments": [{"start": 0.1, "stop": 3.0, "step": 0.05}],
}
