import copy
import logging
import os

import numpy
import yaml

from mqme_dissipation.bath import discretize
from mqme_dissipation.config.default_dict import (
    DISCRETIZATION_DEFAULTS,
    FREQUENCY_GRID_DEFAULTS,
    HEOM_DEFAULTS,
    HEOM_REQUIRED,
    METHOD_BLOCKS,
    METHODS,
    MODELS,
    PROBE_DEFAULTS,
    PROPAGATION_DEFAULTS,
    QUADRATURE_DEFAULTS,
    SPECTRAL_DENSITY_KEYS,
    SUBSYSTEM_KEYS,
    TOP_LEVEL_KEYS,
    TSS_DEFAULTS,
)
from mqme_dissipation.config.preset_dict import PRESET_DICT
from mqme_dissipation.exceptions import ConfigError, ParameterError
from mqme_dissipation.heom_bench import HeomConfig
from mqme_dissipation.mqme import QuadratureSpec
from mqme_dissipation.spectral_density import DrudeLorentzSpectralDensity, spectral_density_from_dict
from mqme_dissipation.subsystem import LocalBathSubsystem, SpinBosonSubsystem
from mqme_dissipation.tss import TssRunConfig

logger = logging.getLogger(__name__)

BLOCK_NAMES = ("discretization", "quadrature", "propagation", "frequency_grid", "tss", "heom", "probe")
GRID_DECIMALS = 9


def frequency_grid(segments):
    """
    Union of uniform segments, both ends included, sorted and without duplicates.

    Args:
        segments (list): Mappings with start, stop and step.

    Returns:
        numpy.ndarray: Frequency grid.
    """
    pieces = []
    for segment in segments:
        n_steps = int(round((segment["stop"] - segment["start"]) / segment["step"]))
        pieces.append(numpy.linspace(segment["start"], segment["start"] + n_steps * segment["step"], n_steps + 1))
    if not pieces:
        return numpy.array([])
    return numpy.unique(numpy.round(numpy.concatenate(pieces), GRID_DECIMALS))


def _key_lines(text):
    lines = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return lines

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
                lines[path] = key_node.start_mark.line + 1
                walk(value_node, path)
        elif isinstance(node, yaml.SequenceNode):
            for index, item in enumerate(node.value):
                path = f"{prefix}[{index}]"
                lines[path] = item.start_mark.line + 1
                walk(item, path)

    if root is not None:
        walk(root, "")
    return lines


def preset_config(name, method=None):
    """
    Raw config of a bundled preset, restricted to the blocks of its method.

    Args:
        name (str): Preset name.
        method (str): Method overriding the preset default.

    Returns:
        dict: Config mapping.
    """
    if name not in PRESET_DICT:
        raise ConfigError(f"unknown preset {name!r}", field="preset")
    data = copy.deepcopy(PRESET_DICT[name])
    if method is not None:
        if method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {method!r}", field="method")
        data["method"] = method
    for block in BLOCK_NAMES:
        if block in data and block not in METHOD_BLOCKS[data["method"]]:
            del data[block]
    data["output_dir"] = os.path.join("runs", f"{name}_{data['method']}")
    return data


class ExperimentConfig:
    """
    Validated experiment: model, method, physical parameters and method blocks.

    Attributes:
        name (str): Preset name or file path the config came from.
        model (str): "dimer_local_bath" or "spin_boson".
        method (str): "mqme_d", "mqme_d_tss", "heom" or "heom_d".
        beta (float): Inverse temperature.
        seed (int): Seed of the run.
        output_dir (str): Directory receiving the result files.
        blocks (dict): Resolved method blocks, defaults merged.
    """

    def __init__(self, data, name=None, key_lines=None):
        self.name = name
        self._key_lines = key_lines or {}
        self._validate(copy.deepcopy(data))

    def _error(self, message, field):
        return ConfigError(message, field=field, line=self._key_lines.get(field))

    def _number(self, value, field, positive=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self._error(f"expected a number, got {value!r}", field)
        if positive and not value > 0:
            raise self._error(f"expected a positive number, got {value}", field)
        return float(value)

    def _check_keys(self, mapping, allowed, prefix):
        if not isinstance(mapping, dict):
            raise self._error(f"expected a mapping, got {type(mapping).__name__}", prefix)
        for key in mapping:
            if key not in allowed:
                field = f"{prefix}.{key}" if prefix else str(key)
                raise self._error(f"unknown key {key!r}", field)

    def _validate(self, data):
        self._check_keys(data, TOP_LEVEL_KEYS + BLOCK_NAMES, "")
        for key in ("model", "method", "beta", "subsystem", "spectral_densities"):
            if key not in data:
                raise self._error(f"missing required key {key!r}", key)
        if data["model"] not in MODELS:
            raise self._error(f"model must be one of {MODELS}, got {data['model']!r}", "model")
        if data["method"] not in METHODS:
            raise self._error(f"method must be one of {METHODS}, got {data['method']!r}", "method")
        self.model = data["model"]
        self.method = data["method"]
        self.beta = self._number(data["beta"], "beta", positive=True)
        seed = data.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise self._error(f"seed must be a non-negative integer, got {seed!r}", "seed")
        self.seed = seed
        default_dir = os.path.join("runs", f"{self.model}_{self.method}")
        self.output_dir = str(data.get("output_dir") or default_dir)

        for block in BLOCK_NAMES:
            if block in data and block not in METHOD_BLOCKS[self.method]:
                raise self._error(f"block {block!r} is not used by method {self.method!r}", block)
        self.blocks = {block: self._resolve_block(block, data.get(block, {})) for block in METHOD_BLOCKS[self.method]}

        self._validate_subsystem(data["subsystem"])
        self._validate_spectral_densities(data["spectral_densities"])
        self._build_objects()

    def _resolve_block(self, block, given):
        defaults = {
            "discretization": DISCRETIZATION_DEFAULTS[self.model],
            "quadrature": QUADRATURE_DEFAULTS,
            "propagation": PROPAGATION_DEFAULTS,
            "frequency_grid": FREQUENCY_GRID_DEFAULTS[self.model],
            "tss": TSS_DEFAULTS[self.model],
            "heom": HEOM_DEFAULTS,
            "probe": PROBE_DEFAULTS,
        }[block]
        allowed = tuple(defaults) + (HEOM_REQUIRED if block == "heom" else ())
        self._check_keys(given, allowed, block)
        resolved = dict(copy.deepcopy(defaults), **given)
        if block == "heom":
            for key in HEOM_REQUIRED:
                if key not in resolved:
                    raise self._error(f"missing required key {key!r}", f"heom.{key}")
        if block in ("frequency_grid", "probe"):
            self._validate_grid(resolved, block)
        return resolved

    def _validate_grid(self, block, prefix):
        if block.get("omegas") is not None:
            omegas = block["omegas"]
            if not isinstance(omegas, list):
                raise self._error("omegas must be a list", f"{prefix}.omegas")
            for index, omega in enumerate(omegas):
                self._number(omega, f"{prefix}.omegas[{index}]", positive=True)
            return
        for index, segment in enumerate(block["segments"]):
            field = f"{prefix}.segments[{index}]"
            self._check_keys(segment, ("start", "stop", "step"), field)
            for key in ("start", "stop", "step"):
                if key not in segment:
                    raise self._error(f"missing required key {key!r}", f"{field}.{key}")
                self._number(segment[key], f"{field}.{key}", positive=True)
            if segment["stop"] < segment["start"]:
                raise self._error("segment stop lies below its start", field)

    def _validate_subsystem(self, subsystem):
        self._check_keys(subsystem, SUBSYSTEM_KEYS[self.model], "subsystem")
        if self.model == "dimer_local_bath":
            if "energies" not in subsystem:
                raise self._error("missing required key 'energies'", "subsystem.energies")
            energies = subsystem["energies"]
            if not isinstance(energies, list) or len(energies) < 2:
                raise self._error("energies must list at least two states", "subsystem.energies")
            for index, energy in enumerate(energies):
                self._number(energy, f"subsystem.energies[{index}]")
            if ("coupling" in subsystem) == ("couplings" in subsystem):
                raise self._error("give exactly one of 'coupling' and 'couplings'", "subsystem.coupling")
            if "coupling" in subsystem and len(energies) != 2:
                raise self._error("a scalar coupling needs exactly two states", "subsystem.coupling")
        else:
            for key in ("energy_gap", "coupling"):
                if key not in subsystem:
                    raise self._error(f"missing required key {key!r}", f"subsystem.{key}")
                self._number(subsystem[key], f"subsystem.{key}")
        self.subsystem_block = subsystem

    def _validate_spectral_densities(self, descriptions):
        if isinstance(descriptions, dict):
            descriptions = [descriptions]
        if not isinstance(descriptions, list) or not descriptions:
            raise self._error("expected a non-empty list of spectral densities", "spectral_densities")
        for index, description in enumerate(descriptions):
            field = f"spectral_densities[{index}]"
            kind = description.get("type") if isinstance(description, dict) else None
            if kind not in SPECTRAL_DENSITY_KEYS:
                raise self._error(f"type must be one of {tuple(SPECTRAL_DENSITY_KEYS)}, got {kind!r}", f"{field}.type")
            self._check_keys(description, SPECTRAL_DENSITY_KEYS[kind], field)
        self.spectral_density_block = descriptions

    def _build_objects(self):
        try:
            models = [spectral_density_from_dict(description) for description in self.spectral_density_block]
        except ParameterError as error:
            raise self._error(str(error), "spectral_densities")
        if self.method in ("heom", "heom_d") and not all(
            isinstance(model, DrudeLorentzSpectralDensity) for model in models
        ):
            raise self._error("HEOM methods need Drude-Lorentz spectral densities", "spectral_densities")

        block = self.subsystem_block
        try:
            if self.model == "spin_boson":
                if len(models) != 1:
                    raise ParameterError(f"spin-boson model takes one spectral density, got {len(models)}")
                self.subsystem = SpinBosonSubsystem(block["energy_gap"], block["coupling"], models[0])
            else:
                energies = block["energies"]
                if "coupling" in block:
                    couplings = [[0.0, block["coupling"]], [block["coupling"], 0.0]]
                else:
                    couplings = block["couplings"]
                if len(models) == 1:
                    models = models * len(energies)
                self.subsystem = LocalBathSubsystem(energies, couplings, models, labels=block.get("labels"))
        except ParameterError as error:
            raise self._error(str(error), "subsystem")

        populations = block.get("initial_populations")
        if populations is None:
            populations = [1.0] + [0.0] * (self.subsystem.n_states - 1)
        populations = numpy.asarray(populations, dtype=float)
        if (
            populations.shape != (self.subsystem.n_states,)
            or numpy.any(populations < 0)
            or not numpy.isclose(populations.sum(), 1.0)
        ):
            message = "initial populations must be non-negative and sum to one"
            raise self._error(message, "subsystem.initial_populations")
        self.initial_populations = populations

        builders = {
            "quadrature": lambda values: QuadratureSpec(**values),
            "tss": lambda values: TssRunConfig(seed=self.seed, **values),
            "heom": lambda values: HeomConfig(**values),
        }
        self.objects = {}
        for block_name, builder in builders.items():
            if block_name in self.blocks:
                try:
                    self.objects[block_name] = builder(self.blocks[block_name])
                except (ParameterError, TypeError) as error:
                    raise self._error(str(error), block_name)

    @property
    def quadrature(self):
        return self.objects["quadrature"]

    @property
    def tss(self):
        return self.objects["tss"]

    @property
    def heom(self):
        return self.objects["heom"]

    @property
    def propagation(self):
        return self.blocks["propagation"]

    @property
    def omegas(self):
        block = self.blocks["frequency_grid"]
        if block["omegas"] is not None:
            return numpy.asarray(block["omegas"], dtype=float)
        return frequency_grid(block["segments"])

    @property
    def probe_omegas(self):
        block = self.blocks["probe"]
        if block["omegas"] is not None:
            return numpy.asarray(block["omegas"], dtype=float)
        return frequency_grid(block["segments"])

    def discretized_subsystem(self):
        """
        Subsystem whose channels carry discretized baths, one bath per distinct spectral density.
        """
        block = self.blocks["discretization"]
        baths = {}
        for model in self.subsystem.spectral_densities:
            if id(model) not in baths:
                baths[id(model)] = discretize(model, block["n_modes"], block["omega_max"], tolerance=block["tolerance"])
        return self.subsystem.with_baths([baths[id(model)] for model in self.subsystem.spectral_densities])

    def to_dict(self):
        """
        Resolved config, defaults merged.
        """
        data = {
            "model": self.model,
            "method": self.method,
            "beta": self.beta,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "subsystem": dict(self.subsystem_block, initial_populations=self.initial_populations.tolist()),
            "spectral_densities": self.spectral_density_block,
        }
        data.update(copy.deepcopy(self.blocks))
        return data


def load_config(source, method=None):
    """
    Load an experiment from a YAML file or a bundled preset.

    Args:
        source (str): Path of a YAML file or preset name.
        method (str): Method overriding the one in the source.

    Returns:
        ExperimentConfig: Validated experiment.

    Raises:
        ConfigError: On syntax errors, unknown keys or invalid values.
    """
    if source in PRESET_DICT:
        return ExperimentConfig(preset_config(source, method), name=source)
    if not os.path.isfile(source):
        raise ConfigError(f"no config file or preset named {source!r}")
    with open(source) as stream:
        text = stream.read()
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as error:
        mark = error.problem_mark
        if mark is None:
            raise ConfigError(f"YAML syntax error in {source}: {error.problem}")
        raise ConfigError(
            f"YAML syntax error in {source}: {error.problem} (column {mark.column + 1})", line=mark.line + 1
        )
    except yaml.YAMLError as error:
        raise ConfigError(f"YAML syntax error in {source}: {error}")
    if not isinstance(data, dict):
        raise ConfigError(f"{source} does not hold a mapping")
    if method is not None:
        data["method"] = method
    logger.info("loaded experiment config %s", source)
    return ExperimentConfig(data, name=source, key_lines=_key_lines(text))
