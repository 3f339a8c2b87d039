"""Estimation-error covariance of GWAS summary statistics.

The covariance of the per-variant estimation errors, jointly across the p
exposures and the outcome, is the key nuisance quantity for the
bias-corrected estimating equation.  It is estimated as the second-moment
matrix of standardized effects over a large panel of null (insignificant,
independent) variants; null effects are pure estimation error, so no mean
subtraction is applied.

Trait order convention for the (p+1)x(p+1) matrices in this module:
exposures 1..p first, outcome last.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import EstimationError, InputError

# Relative asymmetry tolerated before a matrix is rejected as non-symmetric.
SYMMETRY_RTOL = 1e-8

# Spectral repair triggers when min eigenvalue < -PSD_TRIGGER_RTOL * max eigenvalue.
PSD_TRIGGER_RTOL = 1e-10

# Minimum number of null variants accepted by default.  Estimates sharpen at
# a sqrt(M) rate, so several thousand pre-pruned variants are recommended.
DEFAULT_MIN_NULL_VARIANTS = 30


@dataclass(frozen=True)
class ErrorCovariance:
    """Joint covariance of per-variant estimation errors.

    Attributes
    ----------
    full : ndarray of shape (p+1, p+1)
        Symmetric PSD matrix; exposures first, outcome last.
    M_used : int
        Number of null variants that entered the estimate (0 when the
        matrix was built in closed form rather than estimated).
    """

    full: np.ndarray
    M_used: int

    @property
    def p(self) -> int:
        return self.full.shape[0] - 1

    @property
    def sigma_WbWb(self) -> np.ndarray:
        """Exposure-error covariance block, shape (p, p)."""
        return self.full[: self.p, : self.p]

    @property
    def sigma_Wbwa(self) -> np.ndarray:
        """Exposure/outcome error covariance, shape (p,)."""
        return self.full[: self.p, self.p]

    @property
    def sigma_wawa(self) -> float:
        """Outcome-error variance."""
        return float(self.full[self.p, self.p])

    @staticmethod
    def zero(p: int) -> "ErrorCovariance":
        """All-zero covariance (turns the corrected fit into plain IVW)."""
        return ErrorCovariance(full=np.zeros((p + 1, p + 1)), M_used=0)


@dataclass(frozen=True)
class ErrorCorrelation:
    """Correlation form of :class:`ErrorCovariance` (unit diagonal)."""

    R: np.ndarray

    @property
    def p(self) -> int:
        return self.R.shape[0] - 1


def _check_square_symmetric(a: np.ndarray, rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"expected a square matrix, got shape {a.shape}")
    scale = max(float(np.abs(a).max(initial=0.0)), 1.0)
    if float(np.abs(a - a.T).max(initial=0.0)) > rtol * scale:
        raise InputError("matrix is not symmetric within tolerance")
    return a


def project_psd(matrix: np.ndarray) -> np.ndarray:
    """Project a symmetric matrix onto the PSD cone by clipping eigenvalues.

    Negative eigenvalues are set to zero and the matrix is rebuilt in the
    same eigenbasis, which is the closest PSD matrix in Frobenius norm among
    those sharing the eigenvectors.  Inputs already PSD (up to eigensolver
    roundoff) are returned unchanged, making the projection idempotent.
    """
    a = _check_square_symmetric(matrix)
    a = (a + a.T) / 2.0
    w, v = np.linalg.eigh(a)
    d = a.shape[0]
    tiny = d * np.finfo(float).eps * max(float(abs(w[-1])), float(abs(w[0])), 1e-300)
    if w[0] >= -tiny:
        return a
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.T
    return (out + out.T) / 2.0


def needs_psd_repair(matrix: np.ndarray, rtol: float = PSD_TRIGGER_RTOL) -> bool:
    """True when the min eigenvalue is below ``-rtol * max(eigenvalue, 0)``."""
    w = np.linalg.eigvalsh((matrix + matrix.T) / 2.0)
    return bool(w[0] < -rtol * max(float(w[-1]), 0.0) - np.finfo(float).tiny)


def estimate_error_cov(null_panel, min_variants: int = DEFAULT_MIN_NULL_VARIANTS) -> ErrorCovariance:
    """Estimate the error covariance from a panel of null variants.

    The estimate is the raw second-moment matrix ``sum_j z_j z_j' / M`` of
    the per-variant effect vectors ``z_j = (b_j1, ..., b_jp, a_j)``, with no
    mean subtraction: null effects are centered at zero by construction.
    On the z-score scale the result is approximately a correlation matrix.
    Note that selecting null variants by a hard p-value screen truncates the
    tails of their z-scores and attenuates the second moments (about 24% on
    the diagonal at p > 0.05); the correlation form is much less affected,
    which is why downstream tests standardize through it.

    Parameters
    ----------
    null_panel : HarmonizedPanel
        Pre-pruned (mutually independent) insignificant variants.
    min_variants : int
        Floor on the usable variant count M.

    Raises
    ------
    EstimationError
        If fewer than ``min_variants`` variants are available.
    InputError
        If the panel contains non-finite effects.
    """
    Z = np.column_stack(
        [np.asarray(null_panel.B_hat, dtype=float), np.asarray(null_panel.alpha_hat, dtype=float)]
    )
    M = Z.shape[0]
    if M < min_variants:
        raise EstimationError(f"null panel has M={M} variants, below the floor of {min_variants}")
    if not np.isfinite(Z).all():
        raise InputError("null panel contains non-finite effects")
    full = Z.T @ Z / M
    full = (full + full.T) / 2.0
    if needs_psd_repair(full):
        full = project_psd(full)
    return ErrorCovariance(full=full, M_used=M)


def to_correlation(cov: ErrorCovariance) -> ErrorCorrelation:
    """Rescale an error covariance to correlation form with exact unit diagonal."""
    full = _check_square_symmetric(cov.full)
    d = np.diag(full).copy()
    if np.any(d <= 0):
        raise EstimationError("covariance has a non-positive diagonal entry; cannot form correlations")
    inv_sd = 1.0 / np.sqrt(d)
    R = full * np.outer(inv_sd, inv_sd)
    R = np.clip((R + R.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(R, 1.0)
    return ErrorCorrelation(R=R)
