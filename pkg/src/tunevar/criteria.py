"""Risk criteria evaluated at a fixed tuning vector lambda.

Implements the training error, exact and influence-approximated leave-one-out
cross-validation, the trace-corrected training error, a seeded holdout
criterion, and the AIC/BIC/TIC information criteria.

Sign conventions (with J_hat = minus the empirical theta-Jacobian of Phi_n):
  theta_hat_(-i) ~= theta_hat - (1/n) J_hat^{-1} phi(Z_i, theta_hat, lam)
  CV ~= TE - (1/n) Tr(J_hat^{-1} C_hat),  C_hat = (1/n) sum_i phi_i grad_psi_i'
Both are fixed by the exact hat-matrix identity in the ridge linear case.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .exceptions import RefitFailure, SingularJacobian, TunevarError
from .model import (
    Dataset,
    LossSpec,
    ModelSpec,
    grad_psi_matrix,
    phi_matrix,
    psi_rowwise_values,
    psi_values,
)
from .rng import fisher_yates_permutation
from .solver import SolveResult, solve_loo, solve_theta


class Method(enum.Enum):
    TE = "te"
    CV_EXACT = "cv"
    CV_FAST = "cv_fast"
    TE_TRACE_CORRECTED = "te_trace"
    HOLDOUT = "holdout"
    AIC = "aic"
    BIC = "bic"
    TIC = "tic"


@dataclass(frozen=True)
class CriterionValue:
    """One criterion evaluation: the value, the method tag, and diagnostics."""

    value: float
    method: Method
    lam: np.ndarray
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise TunevarError(f"{self.method.value} produced a non-finite value")


def _zero_init(model: ModelSpec) -> np.ndarray:
    return model.theta_init


def _fit(model, data, lam, theta_init, solve):
    if solve is not None:
        return solve
    if theta_init is None:
        theta_init = _zero_init(model)
    return solve_theta(model, data, lam, theta_init)


def _trace_correction(model, loss, data, solve: SolveResult) -> float:
    """(1/n) Tr(J_hat^{-1} C_hat) with C_hat = (1/n) sum phi_i grad_psi_i'."""
    Phi = phi_matrix(model, data.rows, solve.theta_hat, solve.lam)
    G = grad_psi_matrix(loss, data.rows, solve.theta_hat)
    C_hat = Phi.T @ G / data.n
    cond = np.linalg.cond(solve.J_hat)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularJacobian(f"J_hat condition number {cond:.3e} exceeds 1e12")
    return float(np.trace(np.linalg.solve(solve.J_hat, C_hat))) / data.n


def training_error(
    model: ModelSpec, loss: LossSpec, data: Dataset, lam,
    theta_init=None, solve: Optional[SolveResult] = None,
) -> CriterionValue:
    """TE(lam) = mean_i psi(Z_i, theta_hat(lam))."""
    solve = _fit(model, data, lam, theta_init, solve)
    value = float(psi_values(loss, data.rows, solve.theta_hat).mean())
    return CriterionValue(value, Method.TE, np.asarray(solve.lam, float), {})


def loocv_exact(
    model: ModelSpec, loss: LossSpec, data: Dataset, lam,
    theta_init=None, solve: Optional[SolveResult] = None,
) -> CriterionValue:
    """CV(lam): refit without each row in turn and average the held-out loss.

    Refits are warm-started at theta_hat(lam); a failed refit is retried once
    from the cold start before being counted. More than 1% failed rows aborts.
    """
    solve = _fit(model, data, lam, theta_init, solve)
    cold = theta_init if theta_init is not None else _zero_init(model)
    vals = []
    failed = []
    for i in range(data.n):
        try:
            res = solve_loo(model, data, solve.lam, i, warm_start=solve.theta_hat)
        except TunevarError:
            try:
                res = solve_loo(model, data, solve.lam, i, warm_start=cold)
            except TunevarError:
                failed.append(i)
                continue
        vals.append(loss.eval_psi(data.rows[i], res.theta_hat))
    if len(failed) > 0.01 * data.n:
        raise RefitFailure(
            f"{len(failed)} of {data.n} leave-one-out refits failed",
            failed_indices=failed,
        )
    value = float(np.mean(vals))
    return CriterionValue(
        value, Method.CV_EXACT, np.asarray(solve.lam, float),
        {"refit_failures": float(len(failed))},
    )


def loocv_fast(
    model: ModelSpec, loss: LossSpec, data: Dataset, lam,
    theta_init=None, solve: Optional[SolveResult] = None,
) -> CriterionValue:
    """Influence-approximated CV: no refits.

    Each leave-one-out estimate is approximated by one influence step,
    theta_hat - (1/n) J_hat^{-1} phi(Z_i, theta_hat, lam), and psi is averaged
    at the approximated points.
    """
    solve = _fit(model, data, lam, theta_init, solve)
    Phi = phi_matrix(model, data.rows, solve.theta_hat, solve.lam)
    cond = np.linalg.cond(solve.J_hat)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularJacobian(f"J_hat condition number {cond:.3e} exceeds 1e12")
    steps = np.linalg.solve(solve.J_hat, Phi.T).T / data.n  # (n, p)
    thetas = solve.theta_hat[None, :] - steps
    value = float(psi_rowwise_values(loss, data.rows, thetas).mean())
    return CriterionValue(
        value, Method.CV_FAST, np.asarray(solve.lam, float),
        {"trace_correction": _trace_correction(model, loss, data, solve)},
    )


def te_trace_corrected(
    model: ModelSpec, loss: LossSpec, data: Dataset, lam,
    theta_init=None, solve: Optional[SolveResult] = None,
) -> CriterionValue:
    """TE(lam) - (1/n) Tr(J_hat^{-1} C_hat), the first-order CV surrogate."""
    solve = _fit(model, data, lam, theta_init, solve)
    te = float(psi_values(loss, data.rows, solve.theta_hat).mean())
    corr = _trace_correction(model, loss, data, solve)
    return CriterionValue(
        te - corr, Method.TE_TRACE_CORRECTED, np.asarray(solve.lam, float),
        {"trace_correction": corr},
    )


def holdout_error(
    model: ModelSpec, loss: LossSpec, data: Dataset, lam,
    split: float = 0.5, seed: int = 0, theta_init=None,
) -> CriterionValue:
    """Fit on one seeded-shuffle part, evaluate mean psi on the other.

    The shuffled rows are split at floor(split * n); the first part is the
    tuning (evaluation) part, the rest is the estimation part.
    """
    if not 0.0 < split < 1.0:
        raise ValueError("split must be in (0, 1)")
    perm = fisher_yates_permutation(data.n, seed)
    n1 = int(np.floor(split * data.n))
    if n1 < model.p + 1 or data.n - n1 < model.p + 1:
        raise ValueError("both split parts need at least p + 1 rows")
    tune_part = data.take(perm[:n1])
    est_part = data.take(perm[n1:])
    if theta_init is None:
        theta_init = _zero_init(model)
    res = solve_theta(model, est_part, lam, theta_init)
    value = float(psi_values(loss, tune_part.rows, res.theta_hat).mean())
    return CriterionValue(
        value, Method.HOLDOUT, np.asarray(res.lam, float),
        {"n_tune": float(n1), "n_est": float(data.n - n1), "seed": float(seed)},
    )


def info_criterion(
    model: ModelSpec, loss: LossSpec, data: Dataset, lam, kind: Method,
    theta_init=None, solve: Optional[SolveResult] = None,
) -> CriterionValue:
    """AIC / BIC / TIC for likelihood models.

    Contract: phi is the score of a log-density and psi = -log f, so the mean
    of psi at theta_hat is minus the scaled log-likelihood. The caller asserts
    this; it is not checkable here.
    """
    if kind not in (Method.AIC, Method.BIC, Method.TIC):
        raise ValueError("kind must be one of Method.AIC, Method.BIC, Method.TIC")
    solve = _fit(model, data, lam, theta_init, solve)
    neg_loglik = float(psi_values(loss, data.rows, solve.theta_hat).mean())
    n, p = data.n, model.p
    diagnostics: Dict[str, float] = {}
    if kind is Method.AIC:
        penalty = p / n
    elif kind is Method.BIC:
        penalty = p * np.log(n) / n
    else:
        Phi = phi_matrix(model, data.rows, solve.theta_hat, solve.lam)
        K_hat = Phi.T @ Phi / n
        cond = np.linalg.cond(solve.J_hat)
        if not np.isfinite(cond) or cond > 1e12:
            raise SingularJacobian(
                f"J_hat condition number {cond:.3e} exceeds 1e12"
            )
        trace = float(np.trace(np.linalg.solve(solve.J_hat, K_hat)))
        penalty = trace / n
        diagnostics["trace_correction"] = penalty
    return CriterionValue(
        neg_loglik + penalty, kind, np.asarray(solve.lam, float), diagnostics
    )


def evaluate_criterion(
    method: Method, model: ModelSpec, loss: LossSpec, data: Dataset, lam,
    theta_init=None, solve: Optional[SolveResult] = None,
    split: float = 0.5, seed: int = 0,
) -> CriterionValue:
    """Dispatch a single criterion evaluation; used by the tuner and the CLI."""
    if method is Method.TE:
        return training_error(model, loss, data, lam, theta_init, solve)
    if method is Method.CV_EXACT:
        return loocv_exact(model, loss, data, lam, theta_init, solve)
    if method is Method.CV_FAST:
        return loocv_fast(model, loss, data, lam, theta_init, solve)
    if method is Method.TE_TRACE_CORRECTED:
        return te_trace_corrected(model, loss, data, lam, theta_init, solve)
    if method is Method.HOLDOUT:
        return holdout_error(model, loss, data, lam, split=split, seed=seed,
                             theta_init=theta_init)
    return info_criterion(model, loss, data, lam, method, theta_init, solve)
