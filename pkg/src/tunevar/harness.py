"""Monte Carlo engine: data-generating processes, replication loops, bootstrap.

Every run is a pure function of (configuration, master seed): replication j
draws from the splitmix64-derived substream j of the master seed, so results
do not depend on execution order and are reproducible under parallelism.
Failed replications are excluded and reported; more than 5% failures aborts.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import stats

from .criteria import Method
from .exceptions import FailureRateExceeded, TunevarError
from .model import Dataset, LossSpec, ModelSpec
from .rng import rng_for
from .solver import solve_theta, theta_prime
from .tuner import FitResult, truncated_estimate, tune
from .variance import alpha_influences, select_variance


class DGPKind(enum.Enum):
    GAUSSMIX_C = "gaussmix_c"
    LINEAR_GAUSSIAN = "linear_gaussian"
    LOGISTIC_TRUE = "logistic_true"
    CUSTOM = "custom"


@dataclass(frozen=True)
class DGPSpec:
    """A data-generating process: kind, parameters, and sample size.

    GAUSSMIX_C: binary class y ~ Bernoulli(1/2) with x | y=0 ~ N(mu, Sigma)
    and x | y=1 ~ N(-mu, 2 Sigma), mu = (1/2, 1/2)', Sigma having diagonal 2
    and off-diagonal -sqrt(C/2); positive definiteness requires C < 8.
    LINEAR_GAUSSIAN: y = beta' x~ + coef_sq * (x_1^2 - 1) + sigma * eps with
    standard normal covariates; coef_sq != 0 makes the linear model
    misspecified while keeping E[x~ eps] = 0.
    LOGISTIC_TRUE: y ~ Bernoulli(expit(beta' x~)).
    CUSTOM: params["sampler"](rng, n) returns the (n, d) row matrix.
    """

    kind: DGPKind
    n: int
    params: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.kind is DGPKind.GAUSSMIX_C:
            C = float(self.params.get("C", 0.0))
            if C < 0 or C >= 8.0:
                raise ValueError("GAUSSMIX_C requires 0 <= C < 8 (positive definite Sigma)")


def _gaussmix_sigma(C: float) -> np.ndarray:
    off = -np.sqrt(C / 2.0)
    return np.array([[2.0, off], [off, 2.0]])


def simulate(dgp: DGPSpec, seed: int) -> Dataset:
    """Draw one seeded dataset from the process; rows are (y, covariates...)."""
    rng = rng_for(seed)
    n = dgp.n
    if dgp.kind is DGPKind.GAUSSMIX_C:
        C = float(dgp.params.get("C", 0.0))
        mu = np.array([0.5, 0.5])
        Sigma = _gaussmix_sigma(C)
        y = (rng.random(n) < 0.5).astype(float)
        x = np.empty((n, 2))
        n1 = int(y.sum())
        x[y == 0.0] = rng.multivariate_normal(mu, Sigma, size=n - n1)
        x[y == 1.0] = rng.multivariate_normal(-mu, 2.0 * Sigma, size=n1)
        return Dataset(np.column_stack([y, x]), response_col=0)
    if dgp.kind is DGPKind.LINEAR_GAUSSIAN:
        beta = np.asarray(dgp.params.get("beta", (1.0, 1.0)), float)
        sigma = float(dgp.params.get("sigma", 1.0))
        coef_sq = float(dgp.params.get("coef_sq", 0.0))
        m = len(beta) - 1
        x = rng.standard_normal((n, m))
        mean = beta[0] + x @ beta[1:] + coef_sq * (x[:, 0] ** 2 - 1.0)
        y = mean + sigma * rng.standard_normal(n)
        return Dataset(np.column_stack([y, x]), response_col=0)
    if dgp.kind is DGPKind.LOGISTIC_TRUE:
        beta = np.asarray(dgp.params.get("beta", (0.0, 1.0)), float)
        m = len(beta) - 1
        x = rng.standard_normal((n, m))
        t = beta[0] + x @ beta[1:]
        y = (rng.random(n) < 1.0 / (1.0 + np.exp(-t))).astype(float)
        return Dataset(np.column_stack([y, x]), response_col=0)
    sampler = dgp.params["sampler"]
    return Dataset(np.asarray(sampler(rng, n), float))


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to run tune-then-variance on one dataset."""

    model: ModelSpec
    loss: LossSpec
    method: Method = Method.CV_FAST
    lambda_domain: Optional[np.ndarray] = None
    grid_size: int = 20
    split: float = 0.5
    compute_variance: bool = True
    z1_method: str = "profile"


@dataclass
class ReplicationSummary:
    """Per-replication draws plus aggregates recomputable from them."""

    n: int
    requested: int
    lambda_draws: np.ndarray  # (B_ok, q)
    theta_draws: np.ndarray  # (B_ok, p)
    V1_draws: np.ndarray  # (B_ok, p, p), NaN where the fit was not interior
    V2_draws: np.ndarray  # (B_ok, p, p)
    failure_indices: Tuple[int, ...]
    boundary_count: int
    empirical_variance: np.ndarray = None  # var of sqrt(n) * theta_hat
    mean_V1: np.ndarray = None
    mean_V2: np.ndarray = None

    def __post_init__(self):
        if self.empirical_variance is None:
            self.empirical_variance = self.recompute_empirical_variance()
        if self.mean_V1 is None:
            if np.all(np.isnan(self.V1_draws)):
                self.mean_V1 = np.full(self.V1_draws.shape[1:], np.nan)
            else:
                with np.errstate(invalid="ignore"):
                    self.mean_V1 = np.nanmean(self.V1_draws, axis=0)
        if self.mean_V2 is None:
            self.mean_V2 = self.V2_draws.mean(axis=0)

    def recompute_empirical_variance(self) -> np.ndarray:
        scaled = np.sqrt(self.n) * self.theta_draws
        return np.cov(scaled, rowvar=False, ddof=1)

    def abs_errors(self) -> Tuple[np.ndarray, np.ndarray]:
        """Entrywise |mean V_hat - empirical variance| for V1 and V2."""
        return (
            np.abs(self.mean_V1 - self.empirical_variance),
            np.abs(self.mean_V2 - self.empirical_variance),
        )

    @property
    def failure_rate(self) -> float:
        return len(self.failure_indices) / self.requested


def _run_one(data: Dataset, config: PipelineConfig, seed: int):
    fit = tune(
        config.model, config.loss, data, config.method,
        lambda_domain=config.lambda_domain, grid_size=config.grid_size,
        seed=seed, split=config.split,
    )
    p = config.model.p
    V1 = np.full((p, p), np.nan)
    V2 = np.full((p, p), np.nan)
    if config.compute_variance:
        report = select_variance(
            config.model, config.loss, data, fit, z1_method=config.z1_method
        )
        V2 = report.V2
        if report.V1 is not None:
            V1 = report.V1
    return fit, V1, V2


def _collect(runner: Callable[[int], tuple], B: int, n: int, requested_label: str,
             max_failure_rate: float = 0.05) -> ReplicationSummary:
    lams: List[np.ndarray] = []
    thetas: List[np.ndarray] = []
    V1s: List[np.ndarray] = []
    V2s: List[np.ndarray] = []
    failures: List[int] = []
    boundary = 0
    for j in range(B):
        try:
            fit, V1, V2 = runner(j)
        except TunevarError:
            failures.append(j)
            continue
        lams.append(np.asarray(fit.lambda_hat, float))
        thetas.append(np.asarray(fit.theta_hat, float))
        V1s.append(V1)
        V2s.append(V2)
        if not fit.interior:
            boundary += 1
    if len(failures) > max_failure_rate * B:
        raise FailureRateExceeded(
            f"{len(failures)} of {B} {requested_label} replications failed"
        )
    return ReplicationSummary(
        n=n, requested=B,
        lambda_draws=np.asarray(lams), theta_draws=np.asarray(thetas),
        V1_draws=np.asarray(V1s), V2_draws=np.asarray(V2s),
        failure_indices=tuple(failures), boundary_count=boundary,
    )


def replicate(dgp: DGPSpec, config: PipelineConfig, B: int, seed: int) -> ReplicationSummary:
    """Simulate -> tune -> variance, B times on independent seeded streams."""
    if B < 2:
        raise ValueError("B must be at least 2")

    def runner(j):
        data = simulate(dgp, seed=_stream(seed, j))
        return _run_one(data, config, seed=_stream(seed, j))

    return _collect(runner, B, dgp.n, "simulation")


def bootstrap(data: Dataset, config: PipelineConfig, B: int, seed: int) -> ReplicationSummary:
    """Nonparametric bootstrap: resample rows, rerun tune-and-fit per resample."""
    if B < 2:
        raise ValueError("B must be at least 2")

    def runner(j):
        rng = rng_for(_stream(seed, j))
        idx = rng.integers(0, data.n, size=data.n)
        return _run_one(data.take(idx), config, seed=_stream(seed, j))

    return _collect(runner, B, data.n, "bootstrap")


def _stream(seed: int, j: int) -> int:
    # thin wrapper so all stream derivation goes through one place
    from .rng import derive_stream

    return derive_stream(seed, j)


@dataclass(frozen=True)
class MixtureLawReport:
    """Per-coordinate KS distance between the clamped-estimator draws and the
    simulated boundary mixture limit."""

    ks_statistics: np.ndarray  # (p,)
    empirical_draws: np.ndarray  # (B_ok, p), sqrt(n) * (theta_T - theta_0)
    mixture_draws: np.ndarray  # (B_sim, p)
    case_counts: Dict[str, int]
    failure_count: int


def mixture_law_check(
    dgp: DGPSpec, config: PipelineConfig, theta0, B: int, seed: int,
    boundary: str = "lower", n_mixture: int = 20000,
) -> MixtureLawReport:
    """Compare clamped-estimator draws against the simulated boundary mixture.

    The design is assumed to put the population optimum at the stated edge of
    a q = 1 tuning box. Empirical side: B replications of truncated_estimate,
    scaled as sqrt(n) * (theta_T - theta0). Theoretical side: the joint normal
    limit of (tuned theta, edge-pinned theta, unconstrained lambda minimizer)
    is estimated from per-observation influences on one reference fit, and the
    mixture picks the tuned branch when the simulated minimizer lands inside
    the box, the pinned branch otherwise.
    """
    if config.model.q != 1:
        raise ValueError("mixture_law_check requires q = 1")
    theta0 = np.asarray(theta0, float)
    box = config.lambda_domain
    if box is None:
        box = config.model.lambda_domain
    box = np.asarray(box, float).reshape(1, 2)
    lam_edge = box[0, 0] if boundary == "lower" else box[0, 1]

    # empirical draws of the clamped estimator
    draws = []
    cases: Dict[str, int] = {}
    failures = 0
    for j in range(B):
        data = simulate(dgp, seed=_stream(seed, j))
        try:
            res = truncated_estimate(
                config.model, config.loss, data, config.method,
                lambda_domain=box, grid_size=config.grid_size,
                seed=_stream(seed, j), split=config.split,
            )
        except TunevarError:
            failures += 1
            continue
        cases[res.case_tag] = cases.get(res.case_tag, 0) + 1
        draws.append(np.sqrt(dgp.n) * (res.theta_hat - theta0))
    if failures > 0.05 * B:
        raise FailureRateExceeded(f"{failures} of {B} mixture replications failed")
    empirical = np.asarray(draws)

    # reference fit at the edge for the influence-based joint covariance
    ref = simulate(dgp, seed=_stream(seed, B + 1))
    lam0 = np.array([lam_edge])
    solve0 = solve_theta(config.model, ref, lam0, theta0)
    D0 = theta_prime(config.model, ref, solve0)
    infl_alpha = alpha_influences(
        config.model, config.loss, ref, solve0.theta_hat, lam0, D0
    )
    from .model import phi_matrix

    Phi0 = phi_matrix(config.model, ref.rows, solve0.theta_hat, lam0)
    infl_pinned = np.linalg.solve(solve0.J_hat, Phi0.T).T
    p, q = config.model.p, config.model.q
    U = np.column_stack(
        [infl_alpha[:, :p], infl_pinned, infl_alpha[:, p : p + q]]
    )  # (n, p + p + 1)
    joint_cov = U.T @ U / ref.n

    rng = rng_for(_stream(seed, B + 2))
    sims = rng.multivariate_normal(np.zeros(2 * p + 1), joint_cov, size=n_mixture,
                                   method="svd")
    N1, N2, N3 = sims[:, :p], sims[:, p : 2 * p], sims[:, 2 * p]
    # N3 is the limit of sqrt(n) * (lambda_G - edge); the tuned branch applies
    # when the unconstrained minimizer falls inside the box
    inside = N3 >= 0 if boundary == "lower" else N3 <= 0
    mixture = np.where(inside[:, None], N1, N2)

    ks = np.array(
        [stats.ks_2samp(empirical[:, k], mixture[:, k]).statistic for k in range(p)]
    )
    return MixtureLawReport(
        ks_statistics=ks, empirical_draws=empirical, mixture_draws=mixture,
        case_counts=cases, failure_count=failures,
    )
