"""Fixed-step integrators for the unperturbed and stochastic dynamics."""

from __future__ import annotations

import numpy as np

from .errors import NumericalError


def rk4(f, t_grid, x0):
    """Classical Runge-Kutta on the given grid; returns states at every grid point."""
    t_grid = np.asarray(t_grid, dtype=float)
    X = np.empty((t_grid.size, np.size(x0)))
    X[0] = x0
    for k in range(t_grid.size - 1):
        t, h, x = t_grid[k], t_grid[k + 1] - t_grid[k], X[k]
        k1 = f(t, x)
        k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = f(t + h, x + h * k3)
        X[k + 1] = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(X)):
        raise NumericalError("RK4 integration produced non-finite states")
    return X


def euler_maruyama(f, alpha, t_grid, x0, rng):
    """Euler-Maruyama path of ``dX = f(t, X) dt + diag(alpha) dW``.

    ``x0`` may be a batch ``(paths, d)`` when ``f`` broadcasts over rows.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), x0.shape[-1:])
    steps = np.diff(t_grid)
    sq = np.sqrt(steps).reshape((-1,) + (1,) * x0.ndim)
    noise = rng.standard_normal((steps.size,) + x0.shape) * (alpha * sq)
    X = np.empty((t_grid.size,) + x0.shape)
    X[0] = x0
    for k in range(steps.size):
        X[k + 1] = X[k] + steps[k] * f(t_grid[k], X[k]) + noise[k]
    if not np.all(np.isfinite(X)):
        raise NumericalError("Euler-Maruyama path produced non-finite states")
    return X


def refined_grid(times, n_steps: int):
    """Grid over ``[times[0], times[-1]]`` containing every time in ``times``.

    Each gap gets ``ceil(n_steps / gaps)`` uniform steps; returns the grid and
    the index of each original time in it.
    """
    times = np.asarray(times, dtype=float)
    per_gap = max(1, int(np.ceil(n_steps / (times.size - 1))))
    frac = np.arange(per_gap) / per_gap
    grid = np.concatenate([a + (b - a) * frac for a, b in zip(times[:-1], times[1:])] + [times[-1:]])
    idx = np.arange(times.size) * per_gap
    grid[idx] = times
    return grid, idx
