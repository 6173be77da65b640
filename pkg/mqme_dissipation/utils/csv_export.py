import json
import logging
from pathlib import Path

import numpy
import pandas

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def _to_builtin(value):
    if isinstance(value, numpy.ndarray):
        return value.tolist()
    if isinstance(value, numpy.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"object of type {type(value).__name__} is not JSON serializable")


def write_frame(frame, path):
    """
    Write a DataFrame as CSV without index, creating the parent directory.

    Args:
        frame (pandas.DataFrame): Table to write.
        path (str or Path): Destination file.

    Returns:
        Path: Written file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.debug("wrote %s (%d rows)", path, len(frame))
    return path


def read_frame(path):
    """
    Read a CSV written by write_frame.

    Args:
        path (str or Path): CSV file.

    Returns:
        pandas.DataFrame: Table.
    """
    return pandas.read_csv(path)


def grid_frame(omegas, times, rate_density, cumulative_density):
    """
    Long-format table of a frequency x time lattice.

    Args:
        omegas (numpy.ndarray): Frequency grid of size n_omega.
        times (numpy.ndarray): Time grid of size n_t.
        rate_density (numpy.ndarray): D(omega, t), shape (n_omega, n_t).
        cumulative_density (numpy.ndarray): E(omega, t), shape (n_omega, n_t).

    Returns:
        pandas.DataFrame: Columns omega, t, D, E, sorted by omega then t.
    """
    omega_mesh, time_mesh = numpy.meshgrid(omegas, times, indexing="ij")
    return pandas.DataFrame(
        {
            "omega": omega_mesh.ravel(),
            "t": time_mesh.ravel(),
            "D": numpy.asarray(rate_density).ravel(),
            "E": numpy.asarray(cumulative_density).ravel(),
        }
    )


def write_json(data, path):
    """
    Write a dict as indented JSON, converting numpy values.

    Args:
        data (dict): Content.
        path (str or Path): Destination file.

    Returns:
        Path: Written file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True, default=_to_builtin)
    return path


def read_json(path):
    with open(path) as f:
        return json.load(f)
