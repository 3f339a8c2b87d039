"""Variant-level pleiotropy testing and the iterative remove-and-refit loop.

A variant whose outcome effect is not explained by its exposure effects
(uncorrelated horizontal pleiotropy) leaves a residual
``gamma_j = a_j - b_j' theta`` that is large relative to its estimation
noise.  The squared standardized residual is chi-square(1) under the null,
which yields a per-variant test; flagged variants are removed and the
corrected estimator refit until the flagged set and the estimate stabilize.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .errorcov import ErrorCorrelation, ErrorCovariance, to_correlation
from .estimators import CausalEstimate, fit_mrbee
from .exceptions import EstimationError, InputError
from .panel import HarmonizedPanel, PanelSelection


@dataclass(frozen=True)
class PleiotropyReport:
    """Per-variant residuals, their variances, test statistics and p-values."""

    gamma_hat: np.ndarray
    var_eps: np.ndarray
    t_stat: np.ndarray
    pvalue: np.ndarray
    flagged: frozenset = frozenset()


@dataclass(frozen=True)
class IterConfig:
    """Knobs for the iterative outlier loop.

    ``selector='fdr'`` flags by Benjamini-Hochberg at level ``q``;
    ``selector='logm'`` uses the fixed chi-square threshold ``log_c0 *
    log(m)``, which grows with the panel and targets exact-set recovery.
    """

    q: float = 0.05
    max_iter: int = 30
    tol: float = 1e-6
    selector: str = "fdr"
    log_c0: float | None = None

    def validate(self) -> None:
        if not (0.0 < self.q < 1.0):
            raise InputError("q must be in (0, 1)")
        if self.max_iter < 1:
            raise InputError("max_iter must be at least 1")
        if self.tol <= 0:
            raise InputError("tol must be positive")
        if self.selector not in ("fdr", "logm"):
            raise InputError(f"unknown selector '{self.selector}'")
        if self.selector == "logm" and (self.log_c0 is None or self.log_c0 <= 0):
            raise InputError("selector='logm' requires a positive log_c0")


@dataclass(frozen=True)
class IterativeFit:
    """Outcome of the iterative loop: stable estimate plus outlier bookkeeping."""

    estimate: CausalEstimate
    outliers: frozenset
    iterations: int
    converged: bool
    trace: tuple
    report: PleiotropyReport
    first_flagged_iteration: dict = field(default_factory=dict)


def residual_test(panel: HarmonizedPanel, theta: np.ndarray, error_corr: ErrorCorrelation) -> PleiotropyReport:
    """Test each variant's residual against its estimation-error variance.

    The residual variance is ``vartheta' SE_j R SE_j vartheta`` with
    ``vartheta = (theta', -1)'``, SE_j the diagonal of the variant's
    per-trait standard errors (identity on the z-score scale), and R the
    error correlation matrix.  ``t = gamma^2 / var`` is chi-square(1) under
    no pleiotropy.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (panel.p,):
        raise InputError(f"theta has shape {theta.shape}, expected ({panel.p},)")
    if not np.isfinite(theta).all():
        raise InputError("theta contains non-finite entries")
    R = error_corr.R
    if R.shape != (panel.p + 1, panel.p + 1):
        raise InputError(f"correlation matrix has shape {R.shape}, expected {(panel.p + 1, panel.p + 1)}")
    B = np.asarray(panel.B_hat, dtype=float)
    a = np.asarray(panel.alpha_hat, dtype=float)
    gamma = a - B @ theta
    if panel.standardized:
        E = np.ones((panel.m, panel.p + 1))
    else:
        E = np.column_stack([np.asarray(panel.SE_B, dtype=float), np.asarray(panel.SE_alpha, dtype=float)])
    tht = np.append(theta, -1.0)
    C = E * tht[None, :]
    var_eps = np.einsum("ja,ab,jb->j", C, R, C)
    if np.any(var_eps <= 0):
        raise EstimationError("non-positive residual variance; the error correlation matrix is invalid")
    t_stat = gamma * gamma / var_eps
    pvalue = chi2.sf(t_stat, df=1)
    return PleiotropyReport(gamma_hat=gamma, var_eps=var_eps, t_stat=t_stat, pvalue=pvalue)


def fdr_select(pvalues: np.ndarray, q: float) -> frozenset:
    """Benjamini-Hochberg step-up at level q; returns rejected indices."""
    if not (0.0 < q < 1.0):
        raise InputError("q must be in (0, 1)")
    p = np.asarray(pvalues, dtype=float)
    m = p.size
    if m == 0:
        return frozenset()
    order = np.argsort(p, kind="stable")
    sorted_p = p[order]
    thresholds = q * np.arange(1, m + 1) / m
    passing = np.flatnonzero(sorted_p <= thresholds)
    if passing.size == 0:
        return frozenset()
    k = int(passing[-1]) + 1
    return frozenset(int(i) for i in order[:k])


def logm_select(t_stats: np.ndarray, c0: float, m_total: int) -> frozenset:
    """Fixed-threshold selection: flag t > c0 * log(m_total)."""
    if c0 <= 0:
        raise InputError("c0 must be positive")
    cut = c0 * math.log(m_total)
    return frozenset(int(i) for i in np.flatnonzero(np.asarray(t_stats) > cut))


def _select(report: PleiotropyReport, config: IterConfig, m_total: int) -> frozenset:
    if config.selector == "logm":
        return logm_select(report.t_stat, config.log_c0, m_total)
    return fdr_select(report.pvalue, config.q)


def fit_mrbee_iterative(
    selection: PanelSelection,
    error_cov: ErrorCovariance,
    config: IterConfig | None = None,
) -> IterativeFit:
    """Alternate corrected fitting with outlier flagging until stable.

    Each iteration fits on the current inliers, re-tests *all* original
    instruments at the new theta (so removed variants can re-enter), and
    re-selects the flagged set.  Convergence requires an unchanged flagged
    set and a theta step below ``tol`` in max norm.  The returned estimate
    is the fit on the final inlier set, with sandwich covariance.
    """
    config = config or IterConfig()
    config.validate()
    panel = selection.iv_panel
    if panel.m < panel.p + 1:
        raise InputError(f"instrument panel has m={panel.m} variants; need at least p+1={panel.p + 1}")
    error_corr = to_correlation(error_cov)
    all_idx = np.arange(panel.m)

    inliers = all_idx
    prev_flagged: frozenset | None = None
    prev_theta: np.ndarray | None = None
    trace: list[tuple[np.ndarray, int]] = []
    first_flagged: dict[int, int] = {}
    converged = False
    estimate = None
    report = None
    flagged: frozenset = frozenset()
    iterations = 0
    for iteration in range(1, config.max_iter + 1):
        iterations = iteration
        estimate = fit_mrbee(panel.subset(inliers), error_cov)
        report = residual_test(panel, estimate.theta, error_corr)
        flagged = _select(report, config, panel.m)
        for j in flagged:
            first_flagged.setdefault(j, iteration)
        trace.append((estimate.theta.copy(), len(flagged)))
        new_inliers = np.setdiff1d(all_idx, np.fromiter(flagged, dtype=int, count=len(flagged)))
        if new_inliers.size < panel.p:
            raise EstimationError(
                f"outlier test flagged {len(flagged)} of {panel.m} variants, leaving fewer than p inliers"
            )
        if (
            prev_flagged is not None
            and flagged == prev_flagged
            and float(np.max(np.abs(estimate.theta - prev_theta))) < config.tol
        ):
            converged = True
            break
        prev_flagged, prev_theta = flagged, estimate.theta
        inliers = new_inliers
    if not converged:
        # max_iter reached: the last fit used the previous inlier set, so
        # refit once on the final one.
        inliers = np.setdiff1d(all_idx, np.fromiter(flagged, dtype=int, count=len(flagged)))
        estimate = fit_mrbee(panel.subset(inliers), error_cov)

    report = PleiotropyReport(
        gamma_hat=report.gamma_hat,
        var_eps=report.var_eps,
        t_stat=report.t_stat,
        pvalue=report.pvalue,
        flagged=flagged,
    )
    outlier_ids = frozenset(panel.variant_ids[sorted(flagged)]) if flagged else frozenset()
    return IterativeFit(
        estimate=estimate,
        outliers=outlier_ids,
        iterations=iterations,
        converged=converged,
        trace=tuple(trace),
        report=report,
        first_flagged_iteration={panel.variant_ids[j]: it for j, it in first_flagged.items()},
    )
