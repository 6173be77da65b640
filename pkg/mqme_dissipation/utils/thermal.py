import numpy

SERIES_THRESHOLD = 1e-4


def guarded_coth(x):
    """
    Hyperbolic cotangent with a series branch near the origin.

    Args:
        x (float or numpy.ndarray): Strictly positive argument.

    Returns:
        numpy.ndarray or float: coth(x).

    Notes:
        Below SERIES_THRESHOLD the truncated Laurent series 1/x + x/3 is used,
        its next term is O(x^3).
    """
    x = numpy.asarray(x, dtype=float)
    small = x < SERIES_THRESHOLD
    safe_x = numpy.where(small, 1.0, x)
    value = numpy.where(small, 1.0 / numpy.where(small, x, 1.0) + x / 3.0, 1.0 / numpy.tanh(safe_x))
    if value.ndim == 0:
        return float(value)
    return value


def thermal_factor(omega, beta):
    """
    coth(beta * omega / 2), the thermal weight of a harmonic mode.

    Args:
        omega (float or numpy.ndarray): Mode frequency (> 0).
        beta (float): Inverse temperature.

    Returns:
        numpy.ndarray or float: coth(beta * omega / 2).
    """
    return guarded_coth(0.5 * beta * numpy.asarray(omega, dtype=float))


def boltzmann_populations(omega, beta, n_levels):
    """
    Truncated thermal populations of a harmonic ladder, renormalized to one.

    Args:
        omega (float): Oscillator frequency.
        beta (float): Inverse temperature.
        n_levels (int): Number of kept levels.

    Returns:
        numpy.ndarray: Populations p_k proportional to exp(-beta * omega * k).
    """
    weights = numpy.exp(-beta * omega * numpy.arange(n_levels))
    return weights / weights.sum()
