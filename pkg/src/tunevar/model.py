"""Core data containers: datasets, estimating-function models, and losses.

A model is an estimating function phi(z, theta, lam) in R^p whose empirical
mean is driven to zero in theta for each fixed tuning vector lam. Any missing
derivative handle is replaced at construction time by a central-difference
closure, so downstream code can always assume every slot is populated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import numdiff
from .exceptions import EvaluationError


@dataclass(frozen=True)
class Dataset:
    """n i.i.d. rows in R^d, optionally tagging one column as the response."""

    rows: np.ndarray
    response_col: Optional[int] = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise EvaluationError("Dataset rows must be a 2-d array")
        if rows.shape[0] < 2:
            raise EvaluationError("Dataset needs at least 2 rows")
        if not np.all(np.isfinite(rows)):
            raise EvaluationError("Dataset contains non-finite entries")
        object.__setattr__(self, "rows", rows)
        if self.response_col is not None and not (0 <= self.response_col < rows.shape[1]):
            raise EvaluationError("response_col out of range")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def drop_row(self, i: int) -> "Dataset":
        return Dataset(np.delete(self.rows, i, axis=0), self.response_col)

    def take(self, idx) -> "Dataset":
        return Dataset(self.rows[np.asarray(idx)], self.response_col)


def _check_box(box, dim, name):
    if box is None:
        return None
    arr = np.asarray(box, dtype=float)
    if arr.shape == (2,):
        arr = np.tile(arr, (dim, 1))
    if arr.shape != (dim, 2) or not np.all(arr[:, 0] < arr[:, 1]):
        raise EvaluationError(f"{name} must be a ({dim}, 2) box with lower < upper")
    return arr


@dataclass
class ModelSpec:
    """Estimating function phi: (z, theta, lam) -> R^p with its derivatives.

    Derivative shapes:
      dphi_dtheta(z, th, lm)          -> (p, p)    d phi / d theta
      dphi_dlambda(z, th, lm)         -> (p, q)    d phi / d lambda
      hess_phi_theta(z, th, lm)       -> (p, p, p) [j] = theta-Hessian of phi^j
      dphi_dlambda_dtheta(z, th, lm)  -> (q, p, p) [j] = d_lambda_j of d phi / d theta

    Optional *_batch hooks take the full (n, d) row matrix and return the
    per-row stack (leading axis n); built-in models provide vectorized ones.
    """

    p: int
    q: int
    d: int
    phi: Callable
    dphi_dtheta: Optional[Callable] = None
    dphi_dlambda: Optional[Callable] = None
    hess_phi_theta: Optional[Callable] = None
    dphi_dlambda_dtheta: Optional[Callable] = None
    theta_domain: Optional[np.ndarray] = None
    lambda_domain: Optional[np.ndarray] = None
    theta_init: Optional[np.ndarray] = None  # default solver start, else clipped zeros
    phi_batch: Optional[Callable] = None
    dphi_dtheta_batch: Optional[Callable] = None
    dphi_dlambda_batch: Optional[Callable] = None

    def __post_init__(self):
        if min(self.p, self.q, self.d) < 1:
            raise EvaluationError("p, q and d must be positive")
        self.theta_domain = _check_box(self.theta_domain, self.p, "theta_domain")
        self.lambda_domain = _check_box(self.lambda_domain, self.q, "lambda_domain")
        if self.theta_init is None:
            self.theta_init = self.clip_theta(np.zeros(self.p))
        else:
            self.theta_init = np.asarray(self.theta_init, dtype=float)
            if self.theta_init.shape != (self.p,):
                raise EvaluationError("theta_init must have length p")
        if self.dphi_dtheta is None:
            self.dphi_dtheta = lambda z, th, lm: numdiff.jacobian(
                lambda t: self.phi(z, t, lm), th
            )
        if self.dphi_dlambda is None:
            self.dphi_dlambda = lambda z, th, lm: numdiff.jacobian(
                lambda l: self.phi(z, th, l), lm
            )
        if self.hess_phi_theta is None:
            self.hess_phi_theta = lambda z, th, lm: np.stack(
                [
                    numdiff.hessian(lambda t, j=j: float(self.phi(z, t, lm)[j]), th)
                    for j in range(self.p)
                ]
            )
        if self.dphi_dlambda_dtheta is None:
            # d_lambda_j of d_theta phi, via central differences in lambda of the
            # (analytic or fallback) theta-Jacobian.
            def _cross(z, th, lm):
                jac = numdiff.jacobian_wrt(
                    lambda l: self.dphi_dtheta(z, th, l), np.asarray(lm, float),
                    scale=numdiff.STEP_SECOND,
                )  # (p, p, q)
                return np.moveaxis(jac, -1, 0)

            self.dphi_dlambda_dtheta = _cross

    def eval_phi(self, z, theta, lam):
        val = np.asarray(self.phi(z, theta, lam), dtype=float)
        if val.shape != (self.p,) or not np.all(np.isfinite(val)):
            raise EvaluationError(
                f"phi returned shape {val.shape} or non-finite values"
            )
        return val

    def clip_theta(self, theta):
        if self.theta_domain is None:
            return np.asarray(theta, dtype=float)
        return np.clip(theta, self.theta_domain[:, 0], self.theta_domain[:, 1])

    def theta_in_domain(self, theta, tol=0.0):
        if self.theta_domain is None:
            return True
        return bool(
            np.all(theta >= self.theta_domain[:, 0] - tol)
            and np.all(theta <= self.theta_domain[:, 1] + tol)
        )


@dataclass
class LossSpec:
    """Loss psi: (z, theta) -> scalar with gradient and Hessian in theta.

    Optional batch hooks:
      psi_batch(Z, th)      -> (n,)
      grad_psi_batch(Z, th) -> (n, p)
      psi_rowwise(Z, Th)    -> (n,)  psi(Z[i], Th[i]) with a per-row theta matrix
    """

    psi: Callable
    grad_psi: Optional[Callable] = None
    hess_psi: Optional[Callable] = None
    psi_batch: Optional[Callable] = None
    grad_psi_batch: Optional[Callable] = None
    psi_rowwise: Optional[Callable] = None

    def __post_init__(self):
        if self.grad_psi is None:
            self.grad_psi = lambda z, th: numdiff.gradient(
                lambda t: float(self.psi(z, t)), th
            )
        if self.hess_psi is None:
            self.hess_psi = lambda z, th: numdiff.hessian(
                lambda t: float(self.psi(z, t)), th
            )

    def eval_psi(self, z, theta):
        val = float(self.psi(z, theta))
        if not np.isfinite(val):
            raise EvaluationError("psi returned a non-finite value")
        return val


# ---------------------------------------------------------------------------
# Batched empirical means used throughout the solver and variance code.
# ---------------------------------------------------------------------------

def phi_matrix(model: ModelSpec, Z: np.ndarray, theta, lam) -> np.ndarray:
    """(n, p) matrix of per-row phi values."""
    if model.phi_batch is not None:
        out = np.asarray(model.phi_batch(Z, theta, lam), dtype=float)
    else:
        out = np.stack([model.eval_phi(z, theta, lam) for z in Z])
    if not np.all(np.isfinite(out)):
        raise EvaluationError("phi produced non-finite values")
    return out


def phi_mean(model: ModelSpec, Z: np.ndarray, theta, lam) -> np.ndarray:
    return phi_matrix(model, Z, theta, lam).mean(axis=0)


def jac_theta_mean(model: ModelSpec, Z: np.ndarray, theta, lam) -> np.ndarray:
    """(p, p) empirical mean of d phi / d theta."""
    if model.dphi_dtheta_batch is not None:
        return np.asarray(model.dphi_dtheta_batch(Z, theta, lam), dtype=float).mean(axis=0)
    acc = np.zeros((model.p, model.p))
    for z in Z:
        acc += np.asarray(model.dphi_dtheta(z, theta, lam), dtype=float)
    return acc / Z.shape[0]


def jac_lambda_mean(model: ModelSpec, Z: np.ndarray, theta, lam) -> np.ndarray:
    """(p, q) empirical mean of d phi / d lambda."""
    if model.dphi_dlambda_batch is not None:
        return np.asarray(model.dphi_dlambda_batch(Z, theta, lam), dtype=float).mean(axis=0)
    acc = np.zeros((model.p, model.q))
    for z in Z:
        acc += np.asarray(model.dphi_dlambda(z, theta, lam), dtype=float).reshape(
            model.p, model.q
        )
    return acc / Z.shape[0]


def psi_values(loss: LossSpec, Z: np.ndarray, theta) -> np.ndarray:
    if loss.psi_batch is not None:
        vals = np.asarray(loss.psi_batch(Z, theta), dtype=float)
    else:
        vals = np.asarray([loss.eval_psi(z, theta) for z in Z])
    if not np.all(np.isfinite(vals)):
        raise EvaluationError("psi produced non-finite values")
    return vals


def grad_psi_matrix(loss: LossSpec, Z: np.ndarray, theta) -> np.ndarray:
    if loss.grad_psi_batch is not None:
        return np.asarray(loss.grad_psi_batch(Z, theta), dtype=float)
    return np.stack([np.asarray(loss.grad_psi(z, theta), dtype=float) for z in Z])


def psi_rowwise_values(loss: LossSpec, Z: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """psi(Z[i], thetas[i]) for every row; vectorized when the loss supports it."""
    if loss.psi_rowwise is not None:
        return np.asarray(loss.psi_rowwise(Z, thetas), dtype=float)
    return np.asarray([loss.eval_psi(z, t) for z, t in zip(Z, thetas)])
