"""Numerical settings shared by the estimation pipeline."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

from .errors import ConfigurationError
from .lq import DEFAULT_SCHEME, SCHEMES
from .sdre import SdreConfig

DEFAULT_REFINE = {"antibody": 40, "antibody_log10": 40}


@dataclass(frozen=True)
class EstimationConfig:
    """Settings for inner/outer optimisation, meshing and variance estimation.

    ``refine=None`` picks the per-model default (10, or 40 for the antibody
    models).
    """

    refine: int | None = None
    scheme: str = DEFAULT_SCHEME
    sdre: SdreConfig = field(default_factory=SdreConfig)
    inner_xatol: float = 1e-6
    inner_fatol: float = 1e-10
    inner_maxfev_per_q: int = 500
    inner_step: float = 0.1
    outer_maxfev: int = 2000
    outer_xatol: float = 1e-5
    outer_fatol: float = 1e-8
    outer_step: float = 0.1
    sigma2_floor: float = 1e-12
    fd_step: float = 1e-4
    jobs: int = 1

    def __post_init__(self):
        if self.refine is not None and int(self.refine) < 1:
            raise ConfigurationError("refine must be >= 1")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}")
        if self.jobs < 1:
            raise ConfigurationError("jobs must be >= 1")
        if self.fd_step <= 0:
            raise ConfigurationError("fd_step must be positive")

    def refine_for(self, model) -> int:
        return int(self.refine) if self.refine is not None else DEFAULT_REFINE.get(model.name, 10)

    def with_(self, **kw) -> "EstimationConfig":
        return replace(self, **kw)


def jobs_from_env(default: int = 1) -> int:
    raw = os.environ.get("OCNLME_JOBS")
    if raw is None:
        return default
    try:
        jobs = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"OCNLME_JOBS must be an integer, got {raw!r}") from exc
    if jobs < 1:
        raise ConfigurationError("OCNLME_JOBS must be >= 1")
    return jobs
