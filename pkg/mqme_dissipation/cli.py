import argparse
import logging
import os
from pathlib import Path
import sys

import numpy
import pandas
import yaml

from mqme_dissipation import __version__
from mqme_dissipation.config.experiment_config import load_config, preset_config
from mqme_dissipation.config.preset_dict import PRESET_DICT
from mqme_dissipation.dissipation import integrate_over_frequency, run_mqme_d
from mqme_dissipation.exceptions import (
    ConfigError,
    DiscretizationError,
    GridMismatchError,
    ParameterError,
    StructuralError,
)
from mqme_dissipation.heom_bench import build_hierarchy, probe_scan, propagate_heom
from mqme_dissipation.mqme import detailed_balance_report
from mqme_dissipation.tss import apply_tss, run_ensemble
from mqme_dissipation.utils.csv_export import read_frame, write_frame, write_json
from mqme_dissipation.utils.log_capture import PACKAGE_LOGGER, WarningCollector

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
WORKERS_ENV = "MQME_D_WORKERS"
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
VALIDATION_ERRORS = (ParameterError, ConfigError, DiscretizationError, StructuralError)
OMEGA_DECIMALS = 9


def worker_count(requested=None):
    """
    Worker pool size: the flag, else the environment variable, else 1.
    """
    if requested is not None:
        count = requested
    else:
        value = os.environ.get(WORKERS_ENV, "1")
        try:
            count = int(value)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {value!r}", field=WORKERS_ENV)
    if count < 1:
        raise ConfigError(f"worker count must be >= 1, got {count}", field="workers")
    return count


def _write_grids(grids, output_dir, files):
    for grid in grids:
        files.append(grid.to_csv(output_dir / f"dissipation_{grid.channel}.csv"))
        files.append(write_frame(grid.steady_state_frame(), output_dir / f"steady_state_{grid.channel}.csv"))


def _run_mqme_d(config, output_dir, files):
    subsystem = config.discretized_subsystem()
    propagation = config.propagation
    result = run_mqme_d(
        subsystem,
        config.beta,
        config.quadrature,
        config.omegas,
        config.initial_populations,
        dt=propagation["dt"],
        t_end=propagation["t_end"],
        output_stride=propagation["output_stride"],
        mode_resolved=config.model == "spin_boson",
        conservation_points=propagation["conservation_points"],
    )
    files.append(result.trajectory.to_csv(output_dir / "populations.csv"))
    files.append(write_frame(result.rates.to_frame(), output_dir / "rates.csv"))
    _write_grids(result.grids, output_dir, files)
    if result.mode_energies is not None:
        for channel, label in enumerate(subsystem.channel_labels):
            frame = subsystem.baths[channel].to_frame()
            frame["E"] = result.mode_energies[channel]
            files.append(write_frame(frame, output_dir / f"modes_{label}.csv"))

    summary = {
        "quadrature_converged": result.converged,
        "conservation": result.conservation,
        "recovered_fraction": [bath.recovered_fraction for bath in subsystem.baths],
        "stationary_populations": None if result.stationary is None else result.stationary.tolist(),
    }
    if subsystem.n_states == 2 and result.stationary is not None:
        summary["detailed_balance"] = detailed_balance_report(subsystem, result.stationary, config.beta)
    passed = result.conservation is None or result.conservation["passed"]
    if not passed:
        logger.error(
            "energy conservation failed: dissipated %.6g vs subsystem loss %.6g",
            result.conservation["dissipated"],
            result.conservation["subsystem_energy_loss"],
        )
    return summary, passed


def _run_mqme_d_tss(config, output_dir, files, workers):
    fast_subsystem, sigma_slow = apply_tss(config.discretized_subsystem(), config.tss, config.beta)
    propagation = config.propagation
    ensemble = run_ensemble(
        fast_subsystem,
        sigma_slow,
        config.tss,
        config.beta,
        config.quadrature,
        config.omegas,
        config.initial_populations,
        dt=propagation["dt"],
        t_end=propagation["t_end"],
        output_stride=propagation["output_stride"],
        workers=workers,
    )
    files.append(ensemble.trajectory.to_csv(output_dir / "populations.csv"))
    _write_grids(ensemble.grids, output_dir, files)
    summary = {
        "n_traj": ensemble.n_traj,
        "sigma_slow": ensemble.sigma_slow.tolist(),
        "n_unconverged": ensemble.n_unconverged,
        "conservation": ensemble.conservation,
        "recovered_fraction": [bath.recovered_fraction for bath in fast_subsystem.baths],
    }
    return summary, True


def _run_heom(config, output_dir, files):
    state = build_hierarchy(config.subsystem, config.heom, config.beta, config.initial_populations)
    trajectory = propagate_heom(state, config.heom)
    files.append(trajectory.to_population_trajectory().to_csv(output_dir / "populations.csv"))
    return {
        "n_adm": state.n_adm,
        "trace_error": trajectory.trace_error,
        "hermiticity_error": trajectory.hermiticity_error,
        "steps": trajectory.stats,
    }


def _run_heom_d(config, output_dir, files, workers):
    summary = _run_heom(config, output_dir, files)
    probe = config.blocks["probe"]
    scan = probe_scan(
        config.subsystem,
        config.heom,
        config.beta,
        config.probe_omegas,
        probe["s_bp"],
        config.initial_populations,
        coverage=probe["coverage"],
        workers=workers,
    )
    _write_grids(scan.grids(), output_dir, files)
    for (index, channel), run in sorted(scan.runs.items()):
        name = f"omega_{index:03d}_{run.omega:.4f}_{config.subsystem.channel_labels[channel]}.json"
        files.append(write_json(run.metadata(config.heom), output_dir / "heom_d" / name))
    summary["probe_failures"] = [
        {"omega": float(scan.omegas[index]), "channel": config.subsystem.channel_labels[channel], "error": error}
        for (index, channel), error in sorted(scan.failures.items())
    ]
    return summary, True


def run_experiment(config, workers=1):
    """
    Execute the pipeline of the configured method and write every result file.

    Args:
        config (ExperimentConfig): Validated experiment.
        workers (int): Worker pool size.

    Returns:
        tuple: (manifest dict, True when the physics checks passed).
    """
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    collector = WarningCollector()
    package_logger = logging.getLogger(PACKAGE_LOGGER)
    package_logger.addHandler(collector)
    files = []
    try:
        logger.info("running %s (%s) into %s on %d worker(s)", config.name, config.method, output_dir, workers)
        if config.method == "mqme_d":
            summary, passed = _run_mqme_d(config, output_dir, files)
        elif config.method == "mqme_d_tss":
            summary, passed = _run_mqme_d_tss(config, output_dir, files, workers)
        elif config.method == "heom":
            summary, passed = _run_heom(config, output_dir, files), True
        else:
            summary, passed = _run_heom_d(config, output_dir, files, workers)
    finally:
        package_logger.removeHandler(collector)

    # the manifest depends on the experiment alone, not on where or how wide it ran
    resolved = config.to_dict()
    resolved.pop("output_dir")
    manifest = {
        "tool": "mqme-dissipation",
        "version": __version__,
        "source": config.name,
        "method": config.method,
        "seed": config.seed,
        "config": resolved,
        "results": summary,
        "passed": passed,
        "warnings": collector.messages,
        "files": sorted(str(Path(path).relative_to(output_dir)) for path in files),
    }
    write_json(manifest, output_dir / "manifest.json")
    return manifest, passed


def _steady_states(run_dir):
    frames = {}
    for path in sorted(Path(run_dir).glob("steady_state_*.csv")):
        frames[path.stem[len("steady_state_"):]] = read_frame(path)
    return frames


def compare_runs(run_dir_a, run_dir_b, interpolate=False):
    """
    Differences of the steady-state dissipation and populations of two runs.

    Args:
        run_dir_a (str): First run directory.
        run_dir_b (str): Second run directory.
        interpolate (bool): Interpolate the second run onto the first grid.

    Returns:
        dict: Per channel the common frequencies, differences, sup norm and L1 distance,
        plus the final population differences when both runs have them.

    Raises:
        GridMismatchError: If no channel shares a frequency between the runs.
    """
    frames_a, frames_b = _steady_states(run_dir_a), _steady_states(run_dir_b)
    labels = sorted(set(frames_a) & set(frames_b))
    if not labels:
        raise GridMismatchError(f"{run_dir_a} and {run_dir_b} share no dissipation channel")
    channels = {}
    for label in labels:
        frame_a, frame_b = frames_a[label], frames_b[label]
        if interpolate:
            inside = (frame_a["omega"] >= frame_b["omega"].min()) & (frame_a["omega"] <= frame_b["omega"].max())
            omegas = frame_a.loc[inside, "omega"].to_numpy()
            values_a = frame_a.loc[inside, "E_inf"].to_numpy()
            values_b = numpy.interp(omegas, frame_b["omega"].to_numpy(), frame_b["E_inf"].to_numpy())
        else:
            merged = pandas.merge(
                frame_a.assign(key=frame_a["omega"].round(OMEGA_DECIMALS)),
                frame_b.assign(key=frame_b["omega"].round(OMEGA_DECIMALS)),
                on="key",
                suffixes=("_a", "_b"),
            )
            omegas = merged["omega_a"].to_numpy()
            values_a = merged["E_inf_a"].to_numpy()
            values_b = merged["E_inf_b"].to_numpy()
        if omegas.size == 0:
            raise GridMismatchError(
                f"channel {label}: frequency grids of the two runs do not overlap, rerun with --interpolate"
            )
        difference = values_a - values_b
        channels[label] = {
            "omega": omegas.tolist(),
            "difference": difference.tolist(),
            "sup_norm": float(numpy.max(numpy.abs(difference))),
            "l1": integrate_over_frequency(omegas, numpy.abs(difference)) if omegas.size > 1 else 0.0,
        }

    report = {"run_a": str(run_dir_a), "run_b": str(run_dir_b), "channels": channels}
    populations_a = Path(run_dir_a) / "populations.csv"
    populations_b = Path(run_dir_b) / "populations.csv"
    if populations_a.is_file() and populations_b.is_file():
        final_a, final_b = read_frame(populations_a).iloc[-1], read_frame(populations_b).iloc[-1]
        columns = [column for column in final_a.index if column.startswith("P_") and column in final_b.index]
        report["final_population_difference"] = {column: float(final_a[column] - final_b[column]) for column in columns}
    return report


def build_parser():
    parser = argparse.ArgumentParser(prog="mqme-d", description="MQME-D dissipation analysis and HEOM benchmarks")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="run an experiment from a YAML file or a preset name")
    run_parser.add_argument("config", help="YAML config file or preset name")
    run_parser.add_argument("--method", help="override the method of the config")
    run_parser.add_argument("--output-dir", help="override the output directory")
    run_parser.add_argument("--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or 1)")

    compare_parser = subparsers.add_parser("compare", help="compare the steady-state results of two runs")
    compare_parser.add_argument("run_dir_a")
    compare_parser.add_argument("run_dir_b")
    compare_parser.add_argument("--interpolate", action="store_true", help="interpolate the second run's grid")
    compare_parser.add_argument("--output", help="write the JSON report to this file")

    presets_parser = subparsers.add_parser("presets", help="list or show bundled presets")
    presets_subparsers = presets_parser.add_subparsers(dest="presets_command", required=True)
    presets_subparsers.add_parser("list", help="list preset names")
    show_parser = presets_subparsers.add_parser("show", help="print the YAML of a preset")
    show_parser.add_argument("name")
    show_parser.add_argument("--method")
    return parser


def _command_run(args):
    config = load_config(args.config, method=args.method)
    if args.output_dir:
        config.output_dir = args.output_dir
    manifest, passed = run_experiment(config, workers=worker_count(args.workers))
    print(f"{config.method} run written to {config.output_dir} ({len(manifest['files'])} files)")
    for message in manifest["warnings"]:
        print(f"warning: {message}")
    return EXIT_OK if passed else EXIT_VALIDATION


def _command_compare(args):
    report = compare_runs(args.run_dir_a, args.run_dir_b, interpolate=args.interpolate)
    if args.output:
        write_json(report, args.output)
    table = pandas.DataFrame(
        [
            {"channel": label, "n_omega": len(entry["omega"]), "sup_norm": entry["sup_norm"], "l1": entry["l1"]}
            for label, entry in report["channels"].items()
        ]
    )
    print(table.to_string(index=False))
    for column, value in report.get("final_population_difference", {}).items():
        print(f"final {column} difference: {value:.6g}")
    return EXIT_OK


def _command_presets(args):
    if args.presets_command == "list":
        for name in sorted(PRESET_DICT):
            print(name)
    else:
        print(yaml.safe_dump(preset_config(args.name, args.method), sort_keys=False), end="")
    return EXIT_OK


def main(argv=None):
    """
    Entry point of the mqme-d command.

    Returns:
        int: 0 on success, 1 on physics-validation failures, 2 on runtime errors.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)
    commands = {"run": _command_run, "compare": _command_compare, "presets": _command_presets}
    try:
        return commands[args.command](args)
    except VALIDATION_ERRORS as error:
        logger.error("%s: %s", type(error).__name__, error)
        return EXIT_VALIDATION
    except Exception as error:
        logger.error("%s: %s", type(error).__name__, error)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
