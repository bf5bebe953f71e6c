"""Per-subject discretisation mesh for the discrete tracking problem."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class Mesh:
    """Time mesh containing every observation time of one subject.

    Attributes:
        points: K+1 mesh times, ``points[0] == 0`` and ``points[-1]`` the last
            observation time.
        steps: K step sizes ``points[k+1] - points[k]``.
        weights: K running-cost weights, ``1/steps[k]`` where ``points[k]`` is
            an observation time and 0 elsewhere. The last observation is
            carried by the terminal cost, not by a weight.
        obs_index: mesh index of each observation.
    """

    points: np.ndarray
    steps: np.ndarray
    weights: np.ndarray
    obs_index: np.ndarray

    @property
    def K(self) -> int:
        return self.steps.size

    @property
    def final_obs_index(self) -> int:
        return int(self.obs_index[-1])

    @property
    def obs_mask(self) -> np.ndarray:
        """``steps * weights`` - 1 at non-final observation indices, else 0."""
        mask = np.zeros(self.K)
        mask[self.obs_index[self.obs_index < self.K]] = 1.0
        return mask

    def extended_obs(self, observations) -> np.ndarray:
        """Observation rows placed on the mesh, zero where nothing is observed."""
        observations = np.asarray(observations, dtype=float)
        y = np.zeros((self.K + 1, observations.shape[1]))
        y[self.obs_index] = observations
        return y


def build_mesh(times, refine: int = 10) -> Mesh:
    """Subdivide each gap between consecutive observation times uniformly.

    The mesh starts at 0 whether or not 0 is an observation time; a leading
    gap ``[0, times[0]]`` is subdivided like the others.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise ValidationError("need at least two observation times")
    if not np.all(np.isfinite(times)) or times[0] < 0:
        raise ValidationError("observation times must be finite and non-negative")
    if np.any(np.diff(times) <= 0):
        raise ValidationError("observation times must be strictly increasing")
    refine = int(refine)
    if refine < 1:
        raise ValidationError("refine must be >= 1")

    knots = times if times[0] == 0.0 else np.concatenate([[0.0], times])
    frac = np.arange(refine) / refine
    pieces = [a + (b - a) * frac for a, b in zip(knots[:-1], knots[1:])]
    points = np.concatenate(pieces + [knots[-1:]])
    knot_idx = np.arange(knots.size) * refine
    # exact observation times, not the rounded a + (b - a) * 0
    points[knot_idx] = knots
    obs_index = knot_idx if times[0] == 0.0 else knot_idx[1:]

    steps = np.diff(points)
    if np.any(steps <= 0):
        raise ValidationError("observation gaps too small for the requested refinement")
    weights = np.zeros(steps.size)
    interior = obs_index[obs_index < steps.size]
    weights[interior] = 1.0 / steps[interior]
    for arr in (points, steps, weights, obs_index):
        arr.setflags(write=False)
    return Mesh(points=points, steps=steps, weights=weights, obs_index=obs_index)


def refine_for_points(times, n_points: int) -> int:
    """Smallest uniform refinement giving at least ``n_points`` mesh points."""
    times = np.asarray(times, dtype=float)
    gaps = times.size - 1 + (times[0] > 0)
    return max(1, int(np.ceil((n_points - 1) / gaps)))
