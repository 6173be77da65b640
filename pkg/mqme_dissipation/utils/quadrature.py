import logging
from collections import namedtuple

import numpy

logger = logging.getLogger(__name__)

QuadratureResult = namedtuple("QuadratureResult", ["value", "tail_ratio", "converged"])
QuadratureResult.__doc__ = """
Value of a truncated oscillatory integral with its tail diagnostic.

Attributes:
    value (float or numpy.ndarray): Integral value(s).
    tail_ratio (float): |integrand(T_int)| / max |integrand|.
    converged (bool): True when tail_ratio is below the tail tolerance.
"""

# max number of (time, frequency) pairs evaluated at once
CHUNK_ELEMENTS = 2_000_000

SUPPORT_FLOOR = 1e-16


def trapezoid_weights(n_points, dt):
    """
    Weights of the composite trapezoid rule on a uniform grid.

    Args:
        n_points (int): Number of grid points (>= 2).
        dt (float): Grid step.

    Returns:
        numpy.ndarray: Weights w_k so that sum(w_k f_k) approximates the integral.
    """
    weights = numpy.full(n_points, dt)
    weights[0] = weights[-1] = 0.5 * dt
    return weights


def tail_ratio(envelope):
    """
    Ratio between the last and the largest magnitude of an integrand.

    Args:
        envelope (numpy.ndarray): Complex or real integrand on the time grid.

    Returns:
        float: |envelope[-1]| / max |envelope| (0 for an identically zero integrand).
    """
    magnitude = numpy.abs(envelope)
    peak = magnitude.max()
    if peak == 0.0:
        return 0.0
    return float(magnitude[-1] / peak)


def support_length(magnitude, floor=SUPPORT_FLOOR):
    """
    Number of leading grid points outside of which an integrand is negligible.

    Args:
        magnitude (numpy.ndarray): |integrand| on the time grid.
        floor (float): Relative level below which the trailing samples are dropped.

    Returns:
        int: n such that magnitude[n:] < floor * max(magnitude), at least 2.
    """
    peak = magnitude.max()
    if peak == 0.0:
        return min(2, magnitude.shape[0])
    above = numpy.flatnonzero(magnitude >= floor * peak)
    return int(min(magnitude.shape[0], max(2, above[-1] + 2)))


def trapezoid_real_part(envelope, dt, tail_tolerance, ratio=None):
    """
    Re of the trapezoid integral of a complex integrand.

    Args:
        envelope (numpy.ndarray): Complex integrand sampled on {0, dt, ..., T_int}.
        dt (float): Grid step.
        tail_tolerance (float): Threshold on the tail ratio.
        ratio (float): Precomputed tail ratio (for an envelope already cut to its support).

    Returns:
        QuadratureResult: Real part of the integral and tail diagnostic.
    """
    if ratio is None:
        ratio = tail_ratio(envelope)
    value = float(trapezoid_weights(envelope.shape[0], dt) @ envelope.real)
    return QuadratureResult(value, ratio, ratio <= tail_tolerance)


def fourier_trapezoid(envelope, dt, omegas, sin_factors, tail_tolerance, ratio=None):
    """
    Re of int F(t) [cos(w t) - i k(w) sin(w t)] dt for every frequency w.

    Args:
        envelope (numpy.ndarray): Complex F(t) sampled on {0, dt, ..., T_int}.
        dt (float): Grid step.
        omegas (numpy.ndarray): Frequencies w.
        sin_factors (numpy.ndarray): k(w), one per frequency.
        tail_tolerance (float): Threshold on the tail ratio of F.
        ratio (float): Precomputed tail ratio (for an envelope already cut to its support).

    Returns:
        QuadratureResult: Array of integrals (one per frequency) and the tail diagnostic.

    Notes:
        Re[F (cos - i k sin)] = Re F cos + k Im F sin, so the integral reduces to two
        real matrix-vector products evaluated block by block over the time grid.
    """
    omegas = numpy.atleast_1d(numpy.asarray(omegas, dtype=float))
    sin_factors = numpy.broadcast_to(numpy.asarray(sin_factors, dtype=float), omegas.shape)
    n_points = envelope.shape[0]
    weights = trapezoid_weights(n_points, dt)
    real_part = weights * envelope.real
    imag_part = weights * envelope.imag

    cos_sum = numpy.zeros(omegas.shape)
    sin_sum = numpy.zeros(omegas.shape)
    block = max(1, CHUNK_ELEMENTS // max(1, omegas.size))
    for start in range(0, n_points, block):
        stop = min(n_points, start + block)
        phase = numpy.outer(omegas, numpy.arange(start, stop) * dt)
        cos_sum += numpy.cos(phase) @ real_part[start:stop]
        sin_sum += numpy.sin(phase) @ imag_part[start:stop]

    if ratio is None:
        ratio = tail_ratio(envelope)
    return QuadratureResult(cos_sum + sin_factors * sin_sum, ratio, ratio <= tail_tolerance)
