"""Causal-effect estimators on harmonized summary statistics.

Two point estimators are provided:

* ``fit_ivw`` -- ordinary multivariable IVW, the least-squares regression of
  outcome effects on exposure effects.  With standardized statistics the
  per-variant weights are identity, so this is plain OLS.  Its naive
  covariance is reported as the conventional baseline.
* ``fit_mrbee`` -- the bias-corrected estimating-equation estimator, which
  subtracts the estimation-error covariance from the IVW score so that weak
  instruments and correlated errors no longer bias the root.  Its covariance
  comes from the sandwich formula with per-variant scores.

Both operate on whatever effect scale the panel carries; the usual pipeline
standardizes to z-scores before fitting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errorcov import ErrorCovariance, project_psd
from .exceptions import EstimationError

# Singular values below PINV_RCOND * sigma_max are dropped when a repaired
# (singular) Hessian must be inverted.
PINV_RCOND = 1e-10

# Relative eigenvalue floor below which an IVW design is declared rank-deficient.
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class CausalEstimate:
    """Point estimate of the causal effects with its inference quantities."""

    theta: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    z: np.ndarray
    pvalue: np.ndarray
    method: str
    m_used: int
    hessian_repaired: bool


@dataclass(frozen=True)
class ScoreReport:
    """Score (estimating function) and Hessian at a given theta."""

    score: np.ndarray
    hessian: np.ndarray


def _design(panel) -> tuple[np.ndarray, np.ndarray, int, int]:
    B = np.asarray(panel.B_hat, dtype=float)
    a = np.asarray(panel.alpha_hat, dtype=float)
    if B.ndim != 2:
        raise EstimationError("exposure effects must form an (m, p) matrix")
    m, p = B.shape
    if a.shape != (m,):
        raise EstimationError("outcome effects do not match the exposure matrix")
    if m < p:
        raise EstimationError(f"m={m} variants cannot identify p={p} exposures")
    return B, a, m, p


def _gram(panel) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, int, int]:
    B, a, m, p = _design(panel)
    H = B.T @ B / m
    H = (H + H.T) / 2.0
    rhs = B.T @ a / m
    return B, a, H, rhs, m, p


def _wald(theta: np.ndarray, cov: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cov = (cov + cov.T) / 2.0
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, theta / np.where(se > 0, se, 1.0), np.sign(theta) * np.inf)
    pvalue = 2.0 * norm.sf(np.abs(z))
    return se, z, pvalue


def _finish(theta, cov, method, m_used, repaired) -> CausalEstimate:
    cov = (cov + cov.T) / 2.0
    se, z, pvalue = _wald(theta, cov)
    return CausalEstimate(
        theta=theta,
        cov=cov,
        se=se,
        z=z,
        pvalue=pvalue,
        method=method,
        m_used=m_used,
        hessian_repaired=repaired,
    )


def _solve_root(H: np.ndarray, rhs: np.ndarray, allow_repair: bool) -> tuple[np.ndarray, np.ndarray, bool]:
    """Solve H theta = rhs, repairing a non-PSD H by eigenvalue clipping.

    Returns (theta, H_repaired_or_original, repaired_flag).  The exact same
    solve path is used whether the caller is the plain or the corrected
    estimator, so a zero correction reproduces the IVW solution bitwise.
    """
    w = np.linalg.eigvalsh(H)
    if w[0] < 0.0:
        if not allow_repair:
            raise EstimationError("rank-deficient design matrix: B'B is singular")
        F = project_psd(H)
        smax = float(np.abs(np.linalg.eigvalsh(F)).max(initial=0.0))
        if smax <= 0.0:
            raise EstimationError("Hessian is zero after spectral repair: no identifiable signal")
        theta = np.linalg.pinv(F, rcond=PINV_RCOND) @ rhs
        return theta, F, True
    if not allow_repair and w[0] <= RANK_RTOL * max(float(w[-1]), 0.0):
        raise EstimationError("rank-deficient design matrix: B'B is singular")
    try:
        theta = np.linalg.solve(H, rhs)
    except np.linalg.LinAlgError as err:
        raise EstimationError(f"singular Hessian: {err}") from err
    return theta, H, False


def fit_ivw(panel) -> CausalEstimate:
    """Multivariable IVW point estimate with its naive OLS covariance.

    theta solves the normal equations (B'B) theta = B'a; the covariance is
    ``sigma2 * (B'B)^-1`` with sigma2 the residual mean square.  The
    covariance deliberately ignores estimation error in B, which is exactly
    the deficiency the corrected estimator addresses.
    """
    B, a, H, rhs, m, p = _gram(panel)
    theta, _, _ = _solve_root(H, rhs, allow_repair=False)
    resid = a - B @ theta
    dof = m - p
    sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(H) / m
    return _finish(theta, cov, "IVW", m, False)


def score_ivw(theta: np.ndarray, panel) -> ScoreReport:
    """IVW score -B'(a - B theta)/m and Hessian B'B/m at the given theta."""
    B, a, H, _, m, p = _gram(panel)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (p,):
        raise EstimationError(f"theta has shape {theta.shape}, expected ({p},)")
    score = -B.T @ (a - B @ theta) / m
    return ScoreReport(score=score, hessian=H)


def fit_mrbee(panel, error_cov: ErrorCovariance) -> CausalEstimate:
    """Bias-corrected estimating-equation estimate.

    Solves ``(B'B/m - Sigma_WbWb) theta = B'a/m - sigma_Wbwa``.  When the
    corrected Hessian has negative eigenvalues they are clipped to zero and
    the Moore-Penrose inverse of the repaired matrix is used; the estimate
    flags this through ``hessian_repaired``.  The covariance is the sandwich
    of :func:`sandwich_cov`.
    """
    B, a, H0, rhs0, m, p = _gram(panel)
    _check_error_cov(error_cov, p)
    H = H0 - error_cov.sigma_WbWb
    rhs = rhs0 - error_cov.sigma_Wbwa
    theta, F, repaired = _solve_root(H, rhs, allow_repair=True)
    cov = sandwich_cov(panel, error_cov, theta)
    return _finish(theta, cov, "MRBEE", m, repaired)


def score_bee(theta: np.ndarray, panel, error_cov: ErrorCovariance) -> ScoreReport:
    """Corrected score: IVW score minus the error-bias term, pre-repair Hessian."""
    base = score_ivw(theta, panel)
    p = base.hessian.shape[0]
    _check_error_cov(error_cov, p)
    theta = np.asarray(theta, dtype=float)
    score = base.score - (error_cov.sigma_WbWb @ theta - error_cov.sigma_Wbwa)
    hessian = base.hessian - error_cov.sigma_WbWb
    return ScoreReport(score=score, hessian=hessian)


def sandwich_cov(panel, error_cov: ErrorCovariance, theta: np.ndarray) -> np.ndarray:
    """Sandwich covariance of the corrected estimate.

    Builds the per-variant scores
    ``S_j = -(a_j - theta' b_j) b_j - Sigma_WbWb theta + sigma_Wbwa``,
    their average outer product V = sum_j S_j S_j' / m, and the (repaired)
    corrected Hessian F, returning ``F^+ V F^+ / m``.  The trailing 1/m makes
    the output the covariance of theta-hat itself, so reported standard
    errors are directly comparable to replication standard deviations.
    """
    B, a, H0, _, m, p = _gram(panel)
    _check_error_cov(error_cov, p)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (p,):
        raise EstimationError(f"theta has shape {theta.shape}, expected ({p},)")
    if not np.isfinite(theta).all():
        raise EstimationError("theta contains non-finite entries")
    H = H0 - error_cov.sigma_WbWb
    w = np.linalg.eigvalsh(H)
    F = project_psd(H) if w[0] < 0.0 else H
    if float(np.abs(F).max(initial=0.0)) == 0.0:
        raise EstimationError("corrected Hessian is zero after repair")
    resid = a - B @ theta
    shift = error_cov.sigma_WbWb @ theta - error_cov.sigma_Wbwa
    S = -(resid[:, None] * B) - shift[None, :]
    V = S.T @ S / m
    F_inv = np.linalg.pinv(F, rcond=PINV_RCOND)
    cov = F_inv @ V @ F_inv / m
    return (cov + cov.T) / 2.0


def _check_error_cov(error_cov: ErrorCovariance, p: int) -> None:
    if error_cov.full.shape != (p + 1, p + 1):
        raise EstimationError(
            f"error covariance has shape {error_cov.full.shape}, expected {(p + 1, p + 1)}"
        )
