"""Variance estimation for tuned Z-estimators.

Two estimators of the variance of sqrt(n) * (theta_hat(lambda_hat) - theta_0):
  V1: tuning-aware, built from the plug-in components of the joint
      (theta, lambda, theta') limit; valid for interior minimizers.
  V2: the classic pointwise sandwich J^{-1} K J^{-T}, which ignores the
      randomness of lambda_hat; the right choice at boundary fits with a
      nonzero one-sided criterion slope.

V_alpha is the full-vector variance of alpha_hat = (theta_hat, lambda_hat,
vec theta_hat'), computed through an independent numerical Jacobian of the
stacked estimating system; its theta-block must agree with V1, which the test
suite uses as a cross-check of the component algebra.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from . import numdiff
from .exceptions import BoundaryFit, FlatLimitSuspected, SingularJacobian
from .model import (
    Dataset,
    LossSpec,
    ModelSpec,
    grad_psi_matrix,
    phi_matrix,
    psi_values,
)
from .solver import COND_LIMIT, solve_theta, theta_prime
from .tuner import BoundaryStatus, FitResult


def _sym(A):
    return (A + A.T) / 2.0


def _inv_checked(A, label):
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularJacobian(f"{label} condition number {cond:.3e} exceeds 1e12")
    return np.linalg.inv(A)


# ---------------------------------------------------------------------------
# The stacked per-observation estimating function of the joint system.
# ---------------------------------------------------------------------------

def eta(z, theta, lam, D, model: ModelSpec, loss: LossSpec) -> np.ndarray:
    """Per-observation (p + q + pq)-vector (eta1, eta2, eta3).

    eta1 = phi, eta2 = D' grad_psi, eta3 = dphi_dtheta @ D + dphi_dlambda
    flattened column-major (matrices (a_1,..,a_q) identified with the stacked
    vector (a_1', .., a_q')').
    """
    theta = np.asarray(theta, float)
    lam = np.atleast_1d(np.asarray(lam, float))
    D = np.asarray(D, float).reshape(model.p, model.q)
    e1 = model.eval_phi(z, theta, lam)
    e2 = D.T @ np.asarray(loss.grad_psi(z, theta), float)
    T = (
        np.asarray(model.dphi_dtheta(z, theta, lam), float) @ D
        + np.asarray(model.dphi_dlambda(z, theta, lam), float).reshape(model.p, model.q)
    )
    return np.concatenate([e1, e2, T.ravel(order="F")])


def _dphi_dtheta_rows(model, Z, theta, lam):
    if model.dphi_dtheta_batch is not None:
        return np.asarray(model.dphi_dtheta_batch(Z, theta, lam), float)
    return np.stack([np.asarray(model.dphi_dtheta(z, theta, lam), float) for z in Z])


def _dphi_dlambda_rows(model, Z, theta, lam):
    if model.dphi_dlambda_batch is not None:
        return np.asarray(model.dphi_dlambda_batch(Z, theta, lam), float)
    return np.stack(
        [
            np.asarray(model.dphi_dlambda(z, theta, lam), float).reshape(model.p, model.q)
            for z in Z
        ]
    )


def eta_matrix(model: ModelSpec, loss: LossSpec, Z: np.ndarray, theta, lam, D) -> np.ndarray:
    """(n, p + q + pq) matrix of per-row eta values."""
    theta = np.asarray(theta, float)
    lam = np.atleast_1d(np.asarray(lam, float))
    D = np.asarray(D, float).reshape(model.p, model.q)
    Phi = phi_matrix(model, Z, theta, lam)
    G = grad_psi_matrix(loss, Z, theta)
    e2 = G @ D
    T = np.einsum("nij,jk->nik", _dphi_dtheta_rows(model, Z, theta, lam), D)
    T = T + _dphi_dlambda_rows(model, Z, theta, lam)
    e3 = np.transpose(T, (0, 2, 1)).reshape(Z.shape[0], model.p * model.q)
    return np.concatenate([Phi, e2, e3], axis=1)


# ---------------------------------------------------------------------------
# Component assembly.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VarianceComponents:
    """Plug-in matrices of the tuned-estimator limit distribution.

    Partial assemblies (boundary fits) carry only J_hat and K_hat; the rest
    is None.
    """

    J_hat: np.ndarray
    K_hat: np.ndarray
    D_hat: Optional[np.ndarray] = None
    Z1_hat: Optional[np.ndarray] = None
    Z2_hat: Optional[np.ndarray] = None
    b_hat: Optional[np.ndarray] = None
    W_hat: Optional[np.ndarray] = None
    M_hat: Optional[np.ndarray] = None
    Kstar_hat: Optional[np.ndarray] = None
    A1: Optional[np.ndarray] = None
    A2: Optional[np.ndarray] = None
    A3: Optional[np.ndarray] = None
    Astar: Optional[np.ndarray] = None

    @property
    def full(self) -> bool:
        return self.Astar is not None


def _profiled_te(model, loss, data, lam, warm):
    res = solve_theta(model, data, lam, warm)
    return float(psi_values(loss, data.rows, res.theta_hat).mean()), res.theta_hat


def _te_hessian_at(model, loss, data, lam_hat, warm, h):
    """One central-difference Hessian of lambda -> TE(lambda) at step sizes h."""
    q = len(lam_hat)
    f0, _ = _profiled_te(model, loss, data, lam_hat, warm)
    H = np.empty((q, q))
    for j in range(q):
        ej = np.zeros(q)
        ej[j] = h[j]
        fp, _ = _profiled_te(model, loss, data, lam_hat + ej, warm)
        fm, _ = _profiled_te(model, loss, data, lam_hat - ej, warm)
        H[j, j] = (fp - 2.0 * f0 + fm) / h[j] ** 2
        for k in range(j + 1, q):
            ek = np.zeros(q)
            ek[k] = h[k]
            fpp, _ = _profiled_te(model, loss, data, lam_hat + ej + ek, warm)
            fpm, _ = _profiled_te(model, loss, data, lam_hat + ej - ek, warm)
            fmp, _ = _profiled_te(model, loss, data, lam_hat - ej + ek, warm)
            fmm, _ = _profiled_te(model, loss, data, lam_hat - ej - ek, warm)
            H[j, k] = H[k, j] = (fpp - fpm - fmp + fmm) / (4.0 * h[j] * h[k])
    return H


def z1_profiled(model, loss, data, fit: FitResult) -> np.ndarray:
    """Hessian of the profiled training error at lambda_hat.

    Central differences with per-axis step 1e-3 * (1 + |lambda_hat_j|) and one
    Richardson refinement (4 * H(h/2) - H(h)) / 3; each perturbed TE value is
    a warm-started refit. Avoids the second-order implicit derivative of
    theta_hat(lambda) that the chain-rule form would need.
    """
    lam_hat = np.asarray(fit.lambda_hat, float)
    h = 1e-3 * (1.0 + np.abs(lam_hat))
    H1 = _te_hessian_at(model, loss, data, lam_hat, fit.theta_hat, h)
    H2 = _te_hessian_at(model, loss, data, lam_hat, fit.theta_hat, h / 2.0)
    return _sym((4.0 * H2 - H1) / 3.0)


def z1_chain_rule(model, loss, data, fit: FitResult) -> np.ndarray:
    """Cross-check path: Jacobian of the profiled TE gradient g(lambda).

    g(lambda) = D_hat(lambda)' * mean grad_psi(theta_hat(lambda)), differenced
    centrally in lambda. Kept behind this separate entry point so tests can
    require agreement with the profiled Hessian.
    """
    lam_hat = np.asarray(fit.lambda_hat, float)
    q = len(lam_hat)
    h = 1e-3 * (1.0 + np.abs(lam_hat))

    def g(lam):
        res = solve_theta(model, data, lam, fit.theta_hat)
        D = theta_prime(model, data, res)
        b = grad_psi_matrix(loss, data.rows, res.theta_hat).mean(axis=0)
        return D.T @ b

    H = np.empty((q, q))
    for j in range(q):
        ej = np.zeros(q)
        ej[j] = h[j]
        H[:, j] = (g(lam_hat + ej) - g(lam_hat - ej)) / (2.0 * h[j])
    return _sym(H)


def _hess_phi_rows_dot(model, Z, theta, lam, Dj):
    """mean over rows of the matrix with k-th row (H_theta phi^k) @ Dj."""
    p = model.p
    acc = np.zeros((p, p))
    for z in Z:
        H = np.asarray(model.hess_phi_theta(z, theta, lam), float)  # (p, p, p)
        acc += H @ Dj  # row k of result = H[k] @ Dj
    return acc / Z.shape[0]


def _cross_jac_mean(model, Z, theta, lam, j):
    """mean over rows of d_lambda_j of dphi_dtheta, a (p, p) matrix."""
    acc = np.zeros((model.p, model.p))
    for z in Z:
        acc += np.asarray(model.dphi_dlambda_dtheta(z, theta, lam), float)[j]
    return acc / Z.shape[0]


def assemble_components(
    model: ModelSpec, loss: LossSpec, data: Dataset, fit: FitResult,
    z1_method: str = "profile", require_full: bool = False,
) -> VarianceComponents:
    """All plug-in matrices at the tuned fit.

    Boundary fits get a partial assembly (J_hat, K_hat only) unless
    require_full is set, in which case BoundaryFit is raised: the joint-limit
    components are meaningless when lambda_hat sits on an edge.
    """
    theta, lam = fit.theta_hat, np.asarray(fit.lambda_hat, float)
    Z = data.rows
    n, p, q = data.n, model.p, model.q

    Phi = phi_matrix(model, Z, theta, lam)
    J_hat = -_dphi_dtheta_rows(model, Z, theta, lam).mean(axis=0)
    K_hat = _sym(Phi.T @ Phi / n)

    if not fit.interior:
        if require_full:
            raise BoundaryFit(
                "full variance assembly requested for a boundary fit; only the "
                "pointwise sandwich is available there"
            )
        return VarianceComponents(J_hat=J_hat, K_hat=K_hat)

    D_hat = fit.D_hat
    Jinv = _inv_checked(J_hat, "J_hat")
    b_hat = grad_psi_matrix(loss, Z, theta).mean(axis=0)
    Z2_hat = _sym(
        np.mean([np.asarray(loss.hess_psi(z, theta), float) for z in Z], axis=0)
    )
    if z1_method == "profile":
        Z1_hat = z1_profiled(model, loss, data, fit)
    elif z1_method == "chain":
        Z1_hat = z1_chain_rule(model, loss, data, fit)
    else:
        raise ValueError("z1_method must be 'profile' or 'chain'")

    bJ = b_hat @ Jinv  # row vector b' J^{-1}
    M_hat = np.zeros((q, p * q))
    for j in range(q):
        M_hat[j, j * p : (j + 1) * p] = bJ
    W_rows = np.empty((q, p))
    for j in range(q):
        Wj = _hess_phi_rows_dot(model, Z, theta, lam, D_hat[:, j]) + _cross_jac_mean(
            model, Z, theta, lam, j
        )
        W_rows[j] = bJ @ Wj
    W_hat = W_rows

    Eta = eta_matrix(model, loss, Z, theta, lam, D_hat)
    Kstar_hat = _sym(Eta.T @ Eta / n)

    Z1_inv = _inv_checked(Z1_hat, "Z1_hat")
    DZ1 = D_hat @ Z1_inv  # (p, q)
    A1 = Jinv - DZ1 @ (D_hat.T @ Z2_hat + W_hat) @ Jinv
    A2 = -DZ1 @ D_hat.T
    A3 = -DZ1 @ M_hat
    Astar = np.concatenate([A1, -DZ1, A3], axis=1)

    return VarianceComponents(
        J_hat=J_hat, K_hat=K_hat, D_hat=D_hat, Z1_hat=Z1_hat, Z2_hat=Z2_hat,
        b_hat=b_hat, W_hat=W_hat, M_hat=M_hat, Kstar_hat=Kstar_hat,
        A1=A1, A2=A2, A3=A3, Astar=Astar,
    )


# ---------------------------------------------------------------------------
# Variance estimators.
# ---------------------------------------------------------------------------

def variance_tuned(components: VarianceComponents) -> np.ndarray:
    """V1 = Astar Kstar Astar', the tuning-aware variance."""
    if not components.full:
        raise BoundaryFit("tuning-aware variance needs a full (interior) assembly")
    return _sym(components.Astar @ components.Kstar_hat @ components.Astar.T)


def variance_pointwise(components: VarianceComponents) -> np.ndarray:
    """V2 = J^{-1} K J^{-T}, the classic sandwich at the tuned fit."""
    Jinv = _inv_checked(components.J_hat, "J_hat")
    return _sym(Jinv @ components.K_hat @ Jinv.T)


def variance_alpha(
    model: ModelSpec, loss: LossSpec, data: Dataset, fit: FitResult
) -> np.ndarray:
    """Full-vector variance of alpha_hat = (theta_hat, lambda_hat, vec D_hat).

    The Jacobian of the stacked estimating system is computed numerically at
    alpha_hat, independently of the component algebra, so agreement of the
    theta-block with variance_tuned is a genuine cross-check.
    """
    if not fit.interior:
        raise BoundaryFit("variance_alpha needs an interior fit")
    p, q = model.p, model.q
    theta, lam, D = fit.theta_hat, np.asarray(fit.lambda_hat, float), fit.D_hat
    alpha_hat = np.concatenate([theta, lam, D.ravel(order="F")])
    Z = data.rows

    def psi_bar(alpha):
        th = alpha[:p]
        lm = alpha[p : p + q]
        Dm = alpha[p + q :].reshape(p, q, order="F")
        return eta_matrix(model, loss, Z, th, lm, Dm).mean(axis=0)

    Psi_prime = numdiff.jacobian(psi_bar, alpha_hat)
    sv = np.linalg.svd(Psi_prime, compute_uv=False)
    if sv[-1] < 1e-8 * sv[0]:
        raise FlatLimitSuspected(
            "the joint-system Jacobian is numerically rank deficient "
            f"(singular value ratio {sv[-1] / sv[0]:.3e}); the tuning target "
            "appears unidentified and the tuned-limit theory does not apply"
        )
    Pinv = _inv_checked(Psi_prime, "joint-system Jacobian")
    Eta = eta_matrix(model, loss, Z, theta, lam, D)
    Kstar = _sym(Eta.T @ Eta / data.n)
    return _sym(Pinv @ Kstar @ Pinv.T)


def alpha_influences(
    model: ModelSpec, loss: LossSpec, data: Dataset, theta, lam, D
) -> np.ndarray:
    """(n, p + q + pq) per-row influence values of the joint system.

    Row i is the first-order effect of observation i on alpha_hat:
    -Psi'^{-1} eta(Z_i, alpha), evaluated at the supplied point. Used to
    simulate the joint normal limit of (theta_hat(lambda_hat), theta_hat at a
    fixed lambda, lambda_hat) in boundary-case diagnostics.
    """
    p, q = model.p, model.q
    lam = np.atleast_1d(np.asarray(lam, float))
    D = np.asarray(D, float).reshape(p, q)
    alpha0 = np.concatenate([np.asarray(theta, float), lam, D.ravel(order="F")])
    Z = data.rows

    def psi_bar(alpha):
        th = alpha[:p]
        lm = alpha[p : p + q]
        Dm = alpha[p + q :].reshape(p, q, order="F")
        return eta_matrix(model, loss, Z, th, lm, Dm).mean(axis=0)

    Psi_prime = numdiff.jacobian(psi_bar, alpha0)
    sv = np.linalg.svd(Psi_prime, compute_uv=False)
    if sv[-1] < 1e-8 * sv[0]:
        raise FlatLimitSuspected(
            "the joint-system Jacobian is numerically rank deficient "
            f"(singular value ratio {sv[-1] / sv[0]:.3e})"
        )
    Pinv = _inv_checked(Psi_prime, "joint-system Jacobian")
    Eta = eta_matrix(model, loss, Z, np.asarray(theta, float), lam, D)
    return -(Pinv @ Eta.T).T


# ---------------------------------------------------------------------------
# Selection and reporting.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VarianceReport:
    V1: Optional[np.ndarray]
    V2: np.ndarray
    selected: str  # "V1" or "V2"
    standard_errors: np.ndarray
    boundary_status: tuple
    nondegenerate_boundary: bool
    components: VarianceComponents
    diagnostics: Dict[str, float]


def _boundary_slope_degenerate(fit: FitResult) -> bool:
    """True when some boundary coordinate has a near-zero one-sided slope."""
    values = [v for _, v in fit.trace]
    vrange = max(values) - min(values) if len(values) > 1 else 0.0
    box = fit.lambda_box
    for j, status in enumerate(fit.boundary_status):
        if status is BoundaryStatus.INTERIOR:
            continue
        width = float(box[j, 1] - box[j, 0]) if box is not None else 1.0
        slope_tol = max(1e-3 * vrange / width, 1e-12)
        if abs(float(fit.criterion_slope_at_opt[j])) <= slope_tol:
            return True
    return False


def select_variance(
    model: ModelSpec, loss: LossSpec, data: Dataset, fit: FitResult,
    z1_method: str = "profile",
) -> VarianceReport:
    """Assemble components and pick the variance matching the fit's geometry.

    Interior fits get V1; boundary fits get V2. A boundary fit whose one-sided
    slope is indistinguishable from zero is in the regime where neither
    estimator is justified; V2 is reported with nondegenerate_boundary set.
    """
    components = assemble_components(model, loss, data, fit, z1_method=z1_method)
    V2 = variance_pointwise(components)
    diagnostics: Dict[str, float] = {}
    if fit.interior:
        V1 = variance_tuned(components)
        selected, chosen = "V1", V1
        nondegenerate = False
    else:
        V1 = None
        selected, chosen = "V2", V2
        nondegenerate = _boundary_slope_degenerate(fit)
        if nondegenerate:
            diagnostics["nondegenerate_boundary"] = 1.0
    se = np.sqrt(np.clip(np.diag(chosen), 0.0, None) / data.n)
    return VarianceReport(
        V1=V1, V2=V2, selected=selected, standard_errors=se,
        boundary_status=fit.boundary_status,
        nondegenerate_boundary=nondegenerate,
        components=components, diagnostics=diagnostics,
    )
