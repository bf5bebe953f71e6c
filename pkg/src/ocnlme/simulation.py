"""Synthetic cohorts from the benchmark models and a Monte-Carlo harness."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .config import EstimationConfig
from .data import SubjectData
from .errors import OcnlmeError, ValidationError
from .integrate import euler_maruyama, refined_grid, rk4
from .models import builtin_model
from .population import fit_population
from .uncertainty import attach_variance, sandwich_covariance


@dataclass(frozen=True)
class ScenarioSpec:
    """Simulation design for one benchmark model.

    ``psi`` holds random-effect standard deviations. ``ic_mean``/``ic_var``
    describe the initial-state law per entry, on the log scale for entries
    flagged in ``ic_lognormal``. ``alpha`` is the per-state diffusion of the
    misspecified generator; ``None`` means well-specified.
    """

    model: str
    n: int
    n_obs: int
    T: float
    theta: tuple[float, ...]
    psi: tuple[float, ...]
    sigma: float
    ic_mean: tuple[float, ...]
    ic_var: tuple[float, ...]
    ic_lognormal: tuple[bool, ...] = ()
    alpha: tuple[float, ...] | None = None
    U: float = 1.0
    sde_steps: int = 2000
    reference_steps: int = 2000
    seed: int = 0
    u_star: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n < 1 or self.n_obs < 2:
            raise ValidationError("need n >= 1 subjects and n_obs >= 2")
        if self.sigma < 0 or any(v < 0 for v in self.psi) or any(v < 0 for v in self.ic_var):
            raise ValidationError("variances and standard deviations must be non-negative")
        if self.T <= 0:
            raise ValidationError("T must be positive")

    @property
    def delta_true(self) -> np.ndarray:
        """``delta`` such that ``sigma * exp(-delta) = psi``; floored at 1e-3 for zero truths."""
        s = max(self.sigma, 1e-3)
        return np.log(s / np.maximum(np.asarray(self.psi, dtype=float), 1e-3))

    def with_(self, **kw) -> "ScenarioSpec":
        return replace(self, **kw)


LN2 = float(np.log(2.0))

SCENARIOS = {
    "linear2d": ScenarioSpec(
        model="linear2d", n=20, n_obs=11, T=10.0,
        theta=(float(np.log(0.5)), LN2), psi=(0.5,), sigma=0.05,
        ic_mean=(2.0, 3.0), ic_var=(0.5, 1.0), U=100.0,
    ),
    "insulin": ScenarioSpec(
        model="insulin", n=20, n_obs=5, T=180.0,
        theta=(-3.89, -7.09, -1.81), psi=(0.26,), sigma=3.0,
        ic_mean=(5.52, 4.88, -7.0), ic_var=(0.17 ** 2, 0.1 ** 2, 1e-4),
        ic_lognormal=(True, True, True), U=1.0,
    ),
    "antibody": ScenarioSpec(
        model="antibody", n=20, n_obs=11, T=364.0,
        theta=(float(np.log(LN2 / 1.2)), float(np.log(2755.0)), float(np.log(16.0)), float(np.log(LN2 / 24.0))),
        psi=(0.92, 0.85, 0.3), sigma=100.0,
        ic_mean=(500.0,), ic_var=(260.0 ** 2,), U=10.0,
    ),
}

MISSPECIFIED_ALPHA = {"linear2d": (0.0, 0.1), "insulin": (2.0, 2.0, 2e-4), "antibody": (10.0,)}


def builtin_scenario(name: str, misspecified: bool = False, **overrides) -> ScenarioSpec:
    if name not in SCENARIOS:
        raise LookupError(f"no built-in scenario for {name!r}; available: {', '.join(SCENARIOS)}")
    spec = SCENARIOS[name]
    if misspecified:
        spec = spec.with_(alpha=MISSPECIFIED_ALPHA[name])
    return spec.with_(**overrides) if overrides else spec


@dataclass(frozen=True, eq=False)
class SubjectTruth:
    subject_id: str
    b: np.ndarray
    x0: np.ndarray


def draw_subject_truth(spec: ScenarioSpec, model, rng, subject_id="0") -> SubjectTruth:
    b = rng.standard_normal(model.q) * np.asarray(spec.psi, dtype=float)
    z = rng.standard_normal(model.d) * np.sqrt(np.asarray(spec.ic_var, dtype=float)) + np.asarray(spec.ic_mean)
    logn = np.asarray(spec.ic_lognormal or (False,) * model.d, dtype=bool)
    x0 = z.copy()
    x0[logn] = np.exp(z[logn])
    return SubjectTruth(str(subject_id), b, x0)


def observation_times(spec: ScenarioSpec) -> np.ndarray:
    return np.linspace(0.0, spec.T, spec.n_obs)


def _drift(model, theta, b, u_star=None):
    extra = None if u_star is None else model.B @ np.asarray(u_star, dtype=float)

    def f(t, x):
        out = model.f_raw(t, x, None, theta, b)
        return out if extra is None else out + extra

    return f


def true_states(spec: ScenarioSpec, model, truth: SubjectTruth, times) -> np.ndarray:
    """Deterministic states at ``times``; closed form when available, else fine RK4.

    A constant perturbation ``spec.u_star`` (entering through ``B``) forces
    the RK4 path.
    """
    theta = np.asarray(spec.theta, dtype=float)
    if model.exact_solution is not None and spec.u_star is None:
        return model.exact_solution(times, truth.x0, theta, truth.b)
    grid, idx = refined_grid(times, spec.reference_steps)
    return rk4(_drift(model, theta, truth.b, spec.u_star), grid, truth.x0)[idx]


def simulate_subject(spec: ScenarioSpec, model, truth: SubjectTruth, rng) -> SubjectData:
    """Noisy observations ``C x(t_j) + eps_j`` of the deterministic model."""
    times = observation_times(spec)
    X = true_states(spec, model, truth, times)
    y = X @ model.C.T + spec.sigma * rng.standard_normal((times.size, model.d_obs))
    return SubjectData(truth.subject_id, times, y)


def simulate_subject_sde(spec: ScenarioSpec, model, truth: SubjectTruth, rng) -> SubjectData:
    """Observations of an Euler-Maruyama path with per-state diffusion ``spec.alpha``."""
    times = observation_times(spec)
    grid, idx = refined_grid(times, spec.sde_steps)
    theta = np.asarray(spec.theta, dtype=float)
    X = euler_maruyama(_drift(model, theta, truth.b, spec.u_star), spec.alpha, grid, truth.x0, rng)[idx]
    y = X @ model.C.T + spec.sigma * rng.standard_normal((times.size, model.d_obs))
    return SubjectData(truth.subject_id, times, y)


def simulate_population(spec: ScenarioSpec, seed_seq: np.random.SeedSequence | int | None = None):
    """Draw a cohort; returns ``(population, truths)``.

    Each subject gets its own child of ``seed_seq`` so results do not depend
    on evaluation order.
    """
    model = builtin_model(spec.model)
    if not isinstance(seed_seq, np.random.SeedSequence):
        seed_seq = np.random.SeedSequence(spec.seed if seed_seq is None else seed_seq)
    population, truths = [], []
    for i, child in enumerate(seed_seq.spawn(spec.n)):
        rng = np.random.default_rng(child)
        truth = draw_subject_truth(spec, model, rng, subject_id=str(i))
        if spec.alpha is None:
            subj = simulate_subject(spec, model, truth, rng)
        else:
            subj = simulate_subject_sde(spec, model, truth, rng)
        population.append(subj)
        truths.append(truth)
    return population, truths


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RunRecord:
    index: int
    estimate: np.ndarray
    est_var: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    mse_b: float
    V: np.ndarray | None
    error: str | None = None


@dataclass(eq=False)
class MCSummary:
    """Normalised accuracy metrics over Monte-Carlo runs.

    Rows follow ``names``: the entries of theta, then the random-effect
    standard deviations. A parameter with zero truth is not normalised.
    """

    names: list[str]
    truth: np.ndarray
    mse: np.ndarray
    bias: np.ndarray
    emp_var: np.ndarray
    est_var: np.ndarray
    coverage: np.ndarray
    mse_b: float
    runs: int
    failures: int
    records: list[RunRecord] = field(default_factory=list)

    def row(self, name: str) -> dict:
        i = self.names.index(name)
        return {"param": name, "mse": self.mse[i], "bias": self.bias[i], "emp_var": self.emp_var[i],
                "est_var": self.est_var[i], "coverage": self.coverage[i]}


def param_names(model) -> list[str]:
    re_names = [f"sd_{model.param_names[j]}" for j in model.link.re_index]
    return list(model.param_names) + re_names


def run_once(spec: ScenarioSpec, cfg: EstimationConfig, seed_seq, index: int,
             with_variance: bool = True) -> RunRecord:
    """Simulate, fit from the truth, and (optionally) estimate variances."""
    model = builtin_model(spec.model)
    try:
        population, truths = simulate_population(spec, seed_seq)
        fit = fit_population(population, model, spec.U, (spec.theta, spec.delta_true), cfg=cfg)
        est = np.concatenate([fit.theta_hat, fit.psi_sd])
        P = est.size
        V = None
        var = np.full(P, np.nan)
        lo = np.full(P, np.nan)
        hi = np.full(P, np.nan)
        if with_variance:
            parts = sandwich_covariance(fit, population, model, cfg)
            info = attach_variance(fit, parts)
            V = parts.V_hat
            var = np.concatenate([np.diag(V)[: model.p], info["psi_var"]])
            lo = np.concatenate([info["ci_lo"][: model.p], info["psi_ci_lo"]])
            hi = np.concatenate([info["ci_hi"][: model.p], info["psi_ci_hi"]])
        b_err = [float(np.sum((t.b - s.b_hat) ** 2)) for t, s in zip(truths, fit.subjects)]
        return RunRecord(index, est, var, lo, hi, float(np.mean(b_err)), V)
    except (OcnlmeError, np.linalg.LinAlgError) as exc:
        return RunRecord(index, None, None, None, None, np.nan, None, error=f"{type(exc).__name__}: {exc}")


def summarize(records: list[RunRecord], truth, names) -> MCSummary:
    truth = np.asarray(truth, dtype=float)
    ok = [r for r in records if r.error is None]
    scale = np.where(truth != 0, truth, 1.0)
    norm_truth = np.where(truth != 0, 1.0, 0.0)
    if not ok:
        nan = np.full(truth.size, np.nan)
        return MCSummary(names, truth, nan, nan, nan, nan, nan, np.nan, len(records), len(records), records)
    est = np.array([r.estimate for r in ok]) / scale
    bias = est.mean(axis=0) - norm_truth
    emp_var = est.var(axis=0)
    mse = np.mean((est - norm_truth) ** 2, axis=0)
    est_var = np.nanmean(np.array([r.est_var for r in ok]), axis=0) / scale ** 2 if ok[0].V is not None \
        else np.full(truth.size, np.nan)
    lo = np.array([r.ci_lo for r in ok])
    hi = np.array([r.ci_hi for r in ok])
    coverage = np.mean((lo <= truth) & (truth <= hi), axis=0) if ok[0].V is not None else np.full(truth.size, np.nan)
    return MCSummary(
        names=list(names), truth=truth, mse=mse, bias=bias, emp_var=emp_var, est_var=est_var,
        coverage=coverage, mse_b=float(np.mean([r.mse_b for r in ok])),
        runs=len(records), failures=len(records) - len(ok), records=records,
    )


def _run_star(args):
    return run_once(*args)


def run_monte_carlo(spec: ScenarioSpec, cfg: EstimationConfig | None = None, n_mc: int = 20,
                    with_variance: bool = True, jobs: int = 1) -> MCSummary:
    """Run ``n_mc`` independent simulate-and-fit replications.

    Run ``k`` uses child ``k`` of ``SeedSequence(spec.seed)``, so the summary
    is identical for any ``jobs``. Inner subject parallelism is disabled when
    runs are spread over processes.
    """
    cfg = cfg or EstimationConfig()
    model = builtin_model(spec.model)
    children = np.random.SeedSequence(spec.seed).spawn(n_mc)
    if jobs > 1 and n_mc > 1:
        run_cfg = cfg.with_(jobs=1)
        args = [(spec, run_cfg, children[k], k, with_variance) for k in range(n_mc)]
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            records = list(ex.map(_run_star, args))
    else:
        records = [run_once(spec, cfg, children[k], k, with_variance) for k in range(n_mc)]
    truth = np.concatenate([np.asarray(spec.theta, float), np.asarray(spec.psi, float)])
    return summarize(records, truth, param_names(model))


__all__ = [
    "ScenarioSpec", "SCENARIOS", "MISSPECIFIED_ALPHA", "builtin_scenario", "SubjectTruth",
    "draw_subject_truth", "observation_times", "true_states", "simulate_subject",
    "simulate_subject_sde", "simulate_population", "RunRecord", "MCSummary", "run_once",
    "summarize", "run_monte_carlo", "param_names",
]
