"""Subject-level observation containers."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class SubjectData:
    """Observations of one subject.

    ``observations`` has one row per time. ``covariate`` is an optional
    callable ``t -> z(t)``; ``known_ic_values`` lists the known initial-state
    entries in the model's known-entry order.
    """

    subject_id: str
    times: np.ndarray
    observations: np.ndarray
    covariate: Callable | None = None
    known_ic_values: np.ndarray = np.empty(0)

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        obs = np.array(self.observations, dtype=float)
        if obs.ndim == 1:
            obs = obs[:, None]
        known = np.array(self.known_ic_values, dtype=float).reshape(-1)
        if times.size < 2:
            raise ValidationError(f"subject {self.subject_id}: need at least two observations")
        if np.any(np.diff(times) <= 0) or not np.all(np.isfinite(times)):
            raise ValidationError(f"subject {self.subject_id}: times must be finite and strictly increasing")
        if obs.shape[0] != times.size:
            raise ValidationError(f"subject {self.subject_id}: {obs.shape[0]} rows for {times.size} times")
        if not np.all(np.isfinite(obs)):
            raise ValidationError(f"subject {self.subject_id}: observations must be finite")
        for arr in (times, obs, known):
            arr.setflags(write=False)
        object.__setattr__(self, "subject_id", str(self.subject_id))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "known_ic_values", known)

    @property
    def n_obs(self) -> int:
        return self.times.size

    @property
    def d_obs(self) -> int:
        return self.observations.shape[1]
