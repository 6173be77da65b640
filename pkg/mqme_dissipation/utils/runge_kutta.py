import logging

import numpy

from mqme_dissipation.exceptions import DivergenceError

logger = logging.getLogger(__name__)

# Fehlberg 4(5) tableau
RKF45_NODES = (0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2)
RKF45_MATRIX = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
RKF45_WEIGHTS_4 = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)
RKF45_WEIGHTS_5 = (16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


def rk4_linear_step_matrix(generator, dt):
    """
    One classical RK4 step of dy/dt = G y written as a matrix.

    Args:
        generator (numpy.ndarray): Constant generator G.
        dt (float): Step.

    Returns:
        numpy.ndarray: M with y(t + dt) = M y(t), M = sum_{k<=4} (dt G)^k / k!.
    """
    scaled = dt * generator
    step = numpy.eye(generator.shape[0])
    term = numpy.eye(generator.shape[0])
    for order in range(1, 5):
        term = term @ scaled / order
        step = step + term
    return step


def rk4_linear_propagate(generator, y0, dt, n_steps):
    """
    Propagate dy/dt = G y with the classical RK4 scheme.

    Args:
        generator (numpy.ndarray): Constant generator G.
        y0 (numpy.ndarray): Initial vector.
        dt (float): Step.
        n_steps (int): Number of steps.

    Returns:
        numpy.ndarray: Array of shape (n_steps + 1, len(y0)) with y at every step.
    """
    step = rk4_linear_step_matrix(generator, dt)
    trajectory = numpy.empty((n_steps + 1, y0.shape[0]))
    trajectory[0] = y0
    for k in range(n_steps):
        trajectory[k + 1] = step @ trajectory[k]
    return trajectory


def rkf45_step(rhs, t, y, h):
    """
    One embedded Runge-Kutta-Fehlberg step.

    Args:
        rhs (callable): f(t, y) returning dy/dt.
        t (float): Current time.
        y (numpy.ndarray): Current state.
        h (float): Step.

    Returns:
        tuple: (fourth-order solution, fifth-order solution).
    """
    stages = []
    for node, row in zip(RKF45_NODES, RKF45_MATRIX):
        increment = y
        for coefficient, stage in zip(row, stages):
            if coefficient != 0.0:
                increment = increment + h * coefficient * stage
        stages.append(rhs(t + node * h, increment))
    y4 = y.copy()
    y5 = y.copy()
    for b4, b5, stage in zip(RKF45_WEIGHTS_4, RKF45_WEIGHTS_5, stages):
        if b4 != 0.0:
            y4 = y4 + h * b4 * stage
        if b5 != 0.0:
            y5 = y5 + h * b5 * stage
    return y4, y5


def rkf45_integrate(rhs, y0, t_out, error_norm, dt_max, dt_min=1e-10, dt_initial=None, observe=None):
    """
    Adaptive RKF45 integration sampled on a prescribed output lattice.

    Args:
        rhs (callable): f(t, y) returning dy/dt.
        y0 (numpy.ndarray): Initial state at t_out[0].
        t_out (numpy.ndarray): Increasing output times.
        error_norm (callable): error_norm(y4, y5) -> scaled error, a step is accepted when <= 1.
        dt_max (float): Largest allowed step.
        dt_min (float): Step floor, going below raises DivergenceError.
        dt_initial (float): First trial step (defaults to dt_max / 10).
        observe (callable): Maps a state to the stored sample (defaults to a copy).

    Returns:
        tuple: (list of samples at t_out, dict of step statistics).

    Raises:
        DivergenceError: If the controller needs a step below dt_min.
    """
    if observe is None:
        observe = numpy.copy
    t = float(t_out[0])
    y = y0
    h = dt_max / 10.0 if dt_initial is None else dt_initial
    samples = [observe(y)]
    stats = {"accepted": 0, "rejected": 0, "max_error": 0.0}
    for t_next in t_out[1:]:
        while t < t_next - 1e-12 * max(1.0, abs(t_next)):
            trial = min(h, dt_max, t_next - t)
            clipped = trial < min(h, dt_max)
            y4, y5 = rkf45_step(rhs, t, y, trial)
            error = float(error_norm(y4, y5))
            factor = MAX_FACTOR if error == 0.0 else SAFETY * error ** -0.2
            proposal = trial * min(MAX_FACTOR, max(MIN_FACTOR, factor))
            if error <= 1.0:
                t += trial
                y = y4
                stats["accepted"] += 1
                stats["max_error"] = max(stats["max_error"], error)
                if clipped:
                    # a step shortened to land on an output time says nothing about h
                    proposal = max(proposal, h)
            else:
                stats["rejected"] += 1
                logger.debug("RKF45 rejected step %.3e at t=%.4f (error %.3e)", trial, t, error)
            h = min(dt_max, proposal)
            if h < dt_min:
                raise DivergenceError(f"RKF45 step underflow at t={t:.6g}: step {h:.3e} < {dt_min:.3e}")
        samples.append(observe(y))
    return samples, stats
