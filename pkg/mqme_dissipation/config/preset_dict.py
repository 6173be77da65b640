from mqme_dissipation.config.default_dict import (
    DISCRETIZATION_DEFAULTS,
    FREQUENCY_GRID_DEFAULTS,
    HEOM_DEFAULTS,
    PROPAGATION_DEFAULTS,
    QUADRATURE_DEFAULTS,
    TSS_DEFAULTS,
)

# dimer with local Drude-Lorentz baths, V = 0.25, cutoff 0.5
TABLE1_CONDITIONS = {
    "i": {"reorganization_energy": 0.05, "temperature": 1.0, "dt_max": 0.02, "n_hier": 4, "n_matsubara": 30,
          "s_bp": 2e-6},
    "ii": {"reorganization_energy": 0.2, "temperature": 1.0, "dt_max": 0.1, "n_hier": 7, "n_matsubara": 30,
           "s_bp": 1e-5},
    "iii": {"reorganization_energy": 1.0, "temperature": 1.0, "dt_max": 0.05, "n_hier": 10, "n_matsubara": 30,
            "s_bp": 1e-5},
    "iv": {"reorganization_energy": 2.0, "temperature": 1.0, "dt_max": 0.05, "n_hier": 13, "n_matsubara": 30,
           "s_bp": 1e-5},
    "v": {"reorganization_energy": 0.2, "temperature": 0.5, "dt_max": 0.1, "n_hier": 7, "n_matsubara": 100,
          "s_bp": 1e-5},
    "vi": {"reorganization_energy": 0.2, "temperature": 0.25, "dt_max": 0.1, "n_hier": 7, "n_matsubara": 100,
           "s_bp": 1e-5},
}

TABLE1_ENERGY_GAPS = {"dE0": 0.0, "dE1": 1.0, "dE2": 2.0}

# spin-boson with a Brownian-oscillator bath, E = 2, V = 0.25, T = 1
TABLE2_CONDITIONS = {
    "i": {"reorganization_energy": 0.05},
    "ii": {"reorganization_energy": 0.25},
    "iii": {"reorganization_energy": 1.0},
}

TABLE2_DAMPINGS = {"gamma005": 0.05, "gamma025": 0.25, "gamma1": 1.0}

DIMER_COUPLING = 0.25
DIMER_CUTOFF = 0.5
SPIN_BOSON_GAP = 2.0
SPIN_BOSON_COUPLING = 0.25
SPIN_BOSON_PEAK = 2.062


def _table1_preset(condition, energy_gap):
    parameters = TABLE1_CONDITIONS[condition]
    return {
        "model": "dimer_local_bath",
        "method": "mqme_d",
        "beta": 1.0 / parameters["temperature"],
        "seed": 0,
        "subsystem": {"energies": [energy_gap, 0.0], "coupling": DIMER_COUPLING, "initial_populations": [1.0, 0.0]},
        "spectral_densities": [
            {"type": "drude_lorentz", "reorganization_energy": parameters["reorganization_energy"],
             "cutoff": DIMER_CUTOFF},
        ],
        "discretization": dict(DISCRETIZATION_DEFAULTS["dimer_local_bath"]),
        "quadrature": dict(QUADRATURE_DEFAULTS),
        "propagation": dict(PROPAGATION_DEFAULTS),
        "frequency_grid": {"segments": [dict(s) for s in FREQUENCY_GRID_DEFAULTS["dimer_local_bath"]["segments"]]},
        "tss": dict(TSS_DEFAULTS["dimer_local_bath"]),
        "heom": dict(
            HEOM_DEFAULTS,
            n_hier=parameters["n_hier"],
            n_matsubara=parameters["n_matsubara"],
            dt_max=parameters["dt_max"],
        ),
        "probe": {"s_bp": parameters["s_bp"], "coverage": 0.999, "omegas": None,
                  "segments": [{"start": 0.1, "stop": 3.0, "step": 0.05}]},
    }


def _table2_preset(condition, damping):
    parameters = TABLE2_CONDITIONS[condition]
    return {
        "model": "spin_boson",
        "method": "mqme_d",
        "beta": 1.0,
        "seed": 0,
        "subsystem": {"energy_gap": SPIN_BOSON_GAP, "coupling": SPIN_BOSON_COUPLING,
                      "initial_populations": [1.0, 0.0]},
        "spectral_densities": [
            {"type": "brownian_oscillator", "reorganization_energy": parameters["reorganization_energy"],
             "peak_frequency": SPIN_BOSON_PEAK, "damping": damping},
        ],
        "discretization": dict(DISCRETIZATION_DEFAULTS["spin_boson"]),
        "quadrature": dict(QUADRATURE_DEFAULTS),
        "propagation": dict(PROPAGATION_DEFAULTS),
        "frequency_grid": {"segments": [dict(s) for s in FREQUENCY_GRID_DEFAULTS["spin_boson"]["segments"]]},
        "tss": dict(TSS_DEFAULTS["spin_boson"]),
    }


PRESET_DICT = {
    **{
        f"table1_cond_{condition}_{gap_name}": _table1_preset(condition, gap)
        for condition in TABLE1_CONDITIONS
        for gap_name, gap in TABLE1_ENERGY_GAPS.items()
    },
    **{
        f"table2_cond_{condition}_{damping_name}": _table2_preset(condition, damping)
        for condition in TABLE2_CONDITIONS
        for damping_name, damping in TABLE2_DAMPINGS.items()
    },
}
