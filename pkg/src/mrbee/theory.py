"""Closed-form predictions for the generative model and both estimators.

These functions translate a population specification (true causal effects,
genetic and noise covariances, cohort sizes and their sample overlaps) into
the quantities the estimators are judged against:

* the joint covariance of summary-statistic estimation errors implied by
  the overlap structure (a Hadamard product of overlap fractions with trait
  covariances),
* the expected IVW score and its decomposition into measurement-error and
  confounder parts, including the special univariable overlap fraction at
  which the two cancel,
* limiting bias/covariance of the IVW and corrected estimators across the
  m-versus-n growth regimes, including the bias-correction covariance term
  built from a commutation matrix.

Cohort-indexed vectors/matrices (``n``, ``overlap``) put the outcome at
index 0; error-covariance matrices put the exposures first and the outcome
last, matching :mod:`mrbee.errorcov`.

Limit matrices are evaluated as ``n_min`` times the finite-n covariances at
the spec's actual sample sizes, a finite-n surrogate for the formal limits.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errorcov import ErrorCovariance
from .exceptions import InputError

IVW_REGIMES = ("i", "ii", "iii", "iv")
BEE_REGIMES = ("i", "ii", "iii")


@dataclass(frozen=True)
class PopulationSpec:
    """Generative parameters for a multi-cohort summary-statistic study.

    Attributes
    ----------
    p : int
        Number of exposures.
    theta : ndarray (p,)
        True causal effects.
    Psi_bb : ndarray (p, p)
        Cumulative genetic covariance contributed by all m instruments
        (per-variant effect covariance is ``Psi_bb / m``).
    Sigma_uu : ndarray (p, p)
        Exposure noise covariance.
    sigma_uv : ndarray (p,)
        Exposure/outcome noise covariance (nonzero means confounding).
    sigma_vv : float
        Outcome noise variance.
    n : ndarray (p+1,)
        Cohort sizes, outcome first.
    overlap : ndarray (p+1, p+1) or None
        Pairwise shared-individual counts, diagonal equal to ``n``.
    m : int
        Number of instruments.
    """

    p: int
    theta: np.ndarray
    Psi_bb: np.ndarray
    Sigma_uu: np.ndarray
    sigma_uv: np.ndarray
    sigma_vv: float
    n: np.ndarray
    overlap: np.ndarray | None
    m: int

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).reshape(self.p))
        object.__setattr__(self, "Psi_bb", np.asarray(self.Psi_bb, dtype=float).reshape(self.p, self.p))
        object.__setattr__(self, "Sigma_uu", np.asarray(self.Sigma_uu, dtype=float).reshape(self.p, self.p))
        object.__setattr__(self, "sigma_uv", np.asarray(self.sigma_uv, dtype=float).reshape(self.p))
        object.__setattr__(self, "n", np.asarray(self.n, dtype=np.int64).reshape(self.p + 1))
        if self.overlap is not None:
            object.__setattr__(
                self, "overlap", np.asarray(self.overlap, dtype=np.int64).reshape(self.p + 1, self.p + 1)
            )

    @property
    def n_min(self) -> int:
        return int(self.n.min())

    @property
    def noise_cov(self) -> np.ndarray:
        """Joint (p+1) noise covariance, exposures first, outcome last."""
        out = np.zeros((self.p + 1, self.p + 1))
        out[: self.p, : self.p] = self.Sigma_uu
        out[: self.p, self.p] = self.sigma_uv
        out[self.p, : self.p] = self.sigma_uv
        out[self.p, self.p] = self.sigma_vv
        return out

    def validate(self) -> None:
        if self.p < 1:
            raise InputError("p must be at least 1")
        if self.m < 1:
            raise InputError("m must be at least 1")
        if self.sigma_vv <= 0:
            raise InputError("sigma_vv must be positive")
        for name, mat in (("Psi_bb", self.Psi_bb), ("Sigma_uu", self.Sigma_uu)):
            if np.abs(mat - mat.T).max(initial=0.0) > 1e-10 * max(np.abs(mat).max(initial=0.0), 1.0):
                raise InputError(f"{name} must be symmetric")
            if np.linalg.eigvalsh((mat + mat.T) / 2.0)[0] <= 0:
                raise InputError(f"{name} must be positive definite")
        w = np.linalg.eigvalsh(self.noise_cov)
        if w[0] < -1e-10 * max(float(w[-1]), 1.0):
            raise InputError("joint noise covariance [[Sigma_uu, sigma_uv], [., sigma_vv]] is not PSD")
        if np.any(self.n <= 0):
            raise InputError("cohort sizes must be positive")
        if self.overlap is not None:
            N = self.overlap
            if np.any(N != N.T):
                raise InputError("overlap matrix must be symmetric")
            if np.any(N < 0):
                raise InputError("overlap counts must be nonnegative")
            if np.any(np.diag(N) != self.n):
                raise InputError("overlap diagonal must equal the cohort sizes")
            cap = np.minimum.outer(self.n, self.n)
            if np.any(N > cap):
                raise InputError("overlap counts exceed the smaller cohort size")


@dataclass(frozen=True)
class DerivedMoments:
    """Trait covariances and overlap fractions implied by a PopulationSpec."""

    Sigma_xx: np.ndarray
    sigma_xy: np.ndarray
    sigma_yy: float
    Delta_xx: np.ndarray | None
    delta_xy: np.ndarray | None


@dataclass(frozen=True)
class ScoreBiasDecomposition:
    """Expected IVW score split into its two bias sources.

    ``total = measurement - confounder`` holds exactly.
    """

    total: np.ndarray
    measurement: np.ndarray
    confounder: np.ndarray


@dataclass(frozen=True)
class AsymptoticPrediction:
    """Finite-n approximation of an estimator's bias and covariance.

    ``bias`` and ``cov`` are on the scale of theta-hat itself (already
    divided by the appropriate power of the convergence rate), so they can
    be compared directly against replication means and covariances.  ``cov``
    is None in regimes where only a probability limit is available.
    """

    bias: np.ndarray
    cov: np.ndarray | None
    rate: str


def _overlap_fractions(spec: PopulationSpec) -> tuple[np.ndarray, np.ndarray]:
    if spec.overlap is None:
        raise InputError("this prediction requires the cohort overlap matrix")
    N = spec.overlap.astype(float)
    n = spec.n.astype(float)
    # exposures are cohorts 1..p, the outcome is cohort 0
    Delta_xx = N[1:, 1:] / np.outer(n[1:], n[1:])
    delta_xy = N[0, 1:] / (n[0] * n[1:])
    return Delta_xx, delta_xy


def derive_moments(spec: PopulationSpec) -> DerivedMoments:
    """Trait-level second moments implied by the generative model."""
    Sigma_xx = spec.Psi_bb + spec.Sigma_uu
    sigma_xy = Sigma_xx @ spec.theta + spec.sigma_uv
    sigma_yy = float(
        spec.theta @ spec.Psi_bb @ spec.theta
        + spec.theta @ spec.Sigma_uu @ spec.theta
        + 2.0 * spec.theta @ spec.sigma_uv
        + spec.sigma_vv
    )
    if spec.overlap is not None:
        Delta_xx, delta_xy = _overlap_fractions(spec)
    else:
        Delta_xx, delta_xy = None, None
    return DerivedMoments(
        Sigma_xx=Sigma_xx, sigma_xy=sigma_xy, sigma_yy=sigma_yy, Delta_xx=Delta_xx, delta_xy=delta_xy
    )


def error_cov_theoretical(spec: PopulationSpec) -> ErrorCovariance:
    """Closed-form error covariance implied by cohort sizes and overlaps.

    The exposure block is ``Delta_xx (*) Sigma_xx`` (entrywise product with
    the overlap-fraction matrix), the exposure/outcome column is
    ``delta_xy (*) sigma_xy``, and the outcome variance is ``sigma_yy/n0``.
    """
    mom = derive_moments(spec)
    if mom.Delta_xx is None:
        raise InputError("theoretical error covariance requires the overlap matrix")
    p = spec.p
    full = np.zeros((p + 1, p + 1))
    full[:p, :p] = mom.Delta_xx * mom.Sigma_xx
    full[:p, p] = mom.delta_xy * mom.sigma_xy
    full[p, :p] = full[:p, p]
    full[p, p] = mom.sigma_yy / float(spec.n[0])
    return ErrorCovariance(full=full, M_used=0)


def ivw_score_expectation(spec: PopulationSpec) -> ScoreBiasDecomposition:
    """Expected IVW score at the true theta, and its two bias components.

    The measurement part shrinks the estimate toward zero; the confounder
    part pushes it toward the confounded association.  Sample overlap trades
    the two off, and the total is their exact difference.
    """
    mom = derive_moments(spec)
    if mom.Delta_xx is None:
        raise InputError("score expectation requires the overlap matrix")
    total = (mom.Delta_xx * mom.Sigma_xx) @ spec.theta - mom.delta_xy * mom.sigma_xy
    measurement = ((mom.Delta_xx - np.outer(mom.delta_xy, np.ones(spec.p))) * mom.Sigma_xx) @ spec.theta
    confounder = mom.delta_xy * spec.sigma_uv
    return ScoreBiasDecomposition(total=total, measurement=measurement, confounder=confounder)


def special_overlap_fraction(spec: PopulationSpec) -> float:
    """Outcome/exposure overlap fraction at which the IVW score is unbiased.

    Univariable only: returns ``sigma_xx * theta / sigma_xy``.  A warning is
    emitted when the root falls outside [0, 1], where no physical overlap
    can realize it.
    """
    if spec.p != 1:
        raise InputError("the special overlap fraction is defined for a single exposure")
    mom = derive_moments(spec)
    sigma_xy = float(mom.sigma_xy[0])
    if sigma_xy == 0.0:
        raise InputError("sigma_xy is zero; the special fraction is undefined")
    frac = float(mom.Sigma_xx[0, 0]) * float(spec.theta[0]) / sigma_xy
    if not 0.0 <= frac <= 1.0:
        warnings.warn(
            f"special overlap fraction {frac:.6g} lies outside [0, 1]; no feasible overlap attains it",
            stacklevel=2,
        )
    return frac


def psi_error_limits(spec: PopulationSpec) -> np.ndarray:
    """Limit form of the error covariance: ``n_min`` times the finite-n matrix."""
    return spec.n_min * error_cov_theoretical(spec).full


def psi_theta(spec: PopulationSpec) -> float:
    """Scalar variance factor ``vartheta' Psi_err vartheta`` with vartheta=(theta, -1)."""
    Psi = psi_error_limits(spec)
    tht = np.append(spec.theta, -1.0)
    return float(tht @ Psi @ tht)


def build_commutation_matrix(d: int) -> np.ndarray:
    """Permutation K of size d^2 with K vec(A) = vec(A') (column-major vec)."""
    if d < 1:
        raise InputError("dimension must be at least 1")
    K = np.zeros((d * d, d * d))
    idx = np.arange(d)
    rows = (idx[:, None] + d * idx[None, :]).ravel()  # position of A[i, j]
    cols = (idx[:, None] * d + idx[None, :]).ravel()  # position of A[j, i]
    K[rows, cols] = 1.0
    return K


def sigma_bc_from_limits(Psi: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Bias-correction fluctuation covariance from a limit error covariance.

    With Psi the (p+1) limit error covariance, vartheta = (theta', -1)', and
    E the selector of the first p rows of the identity, this is

        [vartheta' (x) E] (I + K) (Psi (x) Psi) [vartheta' (x) E]'

    where K is the commutation matrix on (p+1)^2 and (x) is the Kronecker
    product (column-major vec convention throughout).
    """
    Psi = np.asarray(Psi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    d = Psi.shape[0]
    p = d - 1
    if theta.shape != (p,):
        raise InputError(f"theta has shape {theta.shape}, expected ({p},)")
    tht = np.append(theta, -1.0)
    select = np.eye(d)[:p, :]
    T = np.kron(tht[None, :], select)
    K = build_commutation_matrix(d)
    core = (np.eye(d * d) + K) @ np.kron(Psi, Psi)
    out = T @ core @ T.T
    return (out + out.T) / 2.0


def compute_sigma_bc(spec: PopulationSpec, theta: np.ndarray | None = None) -> np.ndarray:
    """Covariance contributed by the fluctuation of the bias-correction terms."""
    theta = spec.theta if theta is None else np.asarray(theta, dtype=float).reshape(spec.p)
    return sigma_bc_from_limits(psi_error_limits(spec), theta)


def _require_c0(regime: str, c0: float | None) -> float:
    if c0 is None:
        raise InputError(f"regime '{regime}' requires the limit constant c0")
    if c0 <= 0:
        raise InputError("c0 must be positive")
    return float(c0)


def ivw_asymptotics(spec: PopulationSpec, regime: str, c0: float | None = None) -> AsymptoticPrediction:
    """Limiting bias/covariance of the IVW estimate by growth regime.

    Regimes, in terms of how m grows against the smallest cohort size:
    (i) m/sqrt(n) -> 0: unbiased, variance ~ 1/n;
    (ii) m/sqrt(n) -> c0: O(1/sqrt(n)) bias of the same order as the SE;
    (iii) m/n -> c0: non-vanishing bias (probability limit returned);
    (iv) m/n -> inf: converges to a target unrelated to theta.
    """
    if regime not in IVW_REGIMES:
        raise InputError(f"unknown regime '{regime}'; expected one of {IVW_REGIMES}")
    Psi = psi_error_limits(spec)
    p = spec.p
    Psi_WW = Psi[:p, :p]
    psi_Wa = Psi[:p, p]
    n_min = float(spec.n_min)
    Psi_bb_inv = np.linalg.inv(spec.Psi_bb)
    score_limit = Psi_WW @ spec.theta - psi_Wa
    base_cov = psi_theta(spec) * Psi_bb_inv / n_min
    if regime == "i":
        return AsymptoticPrediction(bias=np.zeros(p), cov=base_cov, rate="sqrt(n_min)")
    if regime == "ii":
        c0 = _require_c0(regime, c0)
        bias = -c0 * (Psi_bb_inv @ score_limit) / np.sqrt(n_min)
        return AsymptoticPrediction(bias=bias, cov=base_cov, rate="sqrt(n_min)")
    if regime == "iii":
        c0 = _require_c0(regime, c0)
        bias = -c0 * np.linalg.solve(spec.Psi_bb + c0 * Psi_WW, score_limit)
        return AsymptoticPrediction(bias=bias, cov=None, rate="non-vanishing bias (inconsistent)")
    plim = np.linalg.pinv(Psi_WW) @ psi_Wa
    return AsymptoticPrediction(bias=plim - spec.theta, cov=None, rate="converges to an unrelated target")


def mrbee_asymptotics(spec: PopulationSpec, regime: str, c0: float | None = None) -> AsymptoticPrediction:
    """Limiting covariance of the corrected estimate; unbiased in all regimes.

    (i) m/n -> 0 matches the IVW regime-(i) covariance exactly; (ii) m/n ->
    c0 adds the bias-correction fluctuation term; (iii) m/n -> inf (with
    m/n^2 -> 0) is dominated by that term, at rate sqrt(n^2/m).
    """
    if regime not in BEE_REGIMES:
        raise InputError(f"unknown regime '{regime}'; expected one of {BEE_REGIMES}")
    p = spec.p
    n_min = float(spec.n_min)
    Psi_bb_inv = np.linalg.inv(spec.Psi_bb)
    if regime == "i":
        cov = psi_theta(spec) * Psi_bb_inv / n_min
        return AsymptoticPrediction(bias=np.zeros(p), cov=cov, rate="sqrt(n_min)")
    bc = Psi_bb_inv @ compute_sigma_bc(spec) @ Psi_bb_inv
    if regime == "ii":
        c0 = _require_c0(regime, c0)
        cov = (psi_theta(spec) * Psi_bb_inv + c0 * bc) / n_min
        return AsymptoticPrediction(bias=np.zeros(p), cov=cov, rate="sqrt(n_min)")
    cov = bc * (spec.m / n_min**2)
    return AsymptoticPrediction(bias=np.zeros(p), cov=cov, rate="sqrt(n_min^2/m)")


# ---------------------------------------------------------------------------
# Overlap-matrix helpers and heritability-parameterized spec builders
# ---------------------------------------------------------------------------


def overlap_full(n: np.ndarray) -> np.ndarray:
    """Every pair of cohorts shares min(n_s, n_k) individuals (one mega-cohort
    when all sizes are equal)."""
    n = np.asarray(n, dtype=np.int64)
    return np.minimum.outer(n, n)


def overlap_none(n: np.ndarray) -> np.ndarray:
    """Disjoint cohorts: diagonal n, zero elsewhere."""
    n = np.asarray(n, dtype=np.int64)
    return np.diag(n)


def overlap_univariable(n0: int, n1: int, n01: int) -> np.ndarray:
    """Two cohorts (outcome, one exposure) sharing n01 individuals."""
    if n01 > min(n0, n1) or n01 < 0:
        raise InputError("n01 must lie in [0, min(n0, n1)]")
    return np.array([[n0, n01], [n01, n1]], dtype=np.int64)


def _solve_outcome_noise(
    theta: np.ndarray,
    Psi_bb: np.ndarray,
    Sigma_uu: np.ndarray,
    uv_corr_to_v: np.ndarray,
    h2_outcome: float,
) -> tuple[np.ndarray, float]:
    """Solve (sigma_uv, sigma_vv) so the outcome heritability target holds.

    ``uv_corr_to_v[s]`` is the target correlation between exposure noise s
    and the outcome noise.  sigma_uv depends on sqrt(sigma_vv), which gives
    a quadratic in sqrt(sigma_vv).
    """
    genetic_var = float(theta @ Psi_bb @ theta)
    if genetic_var <= 0:
        raise InputError("outcome heritability target needs theta' Psi_bb theta > 0")
    sigma_yy = genetic_var / h2_outcome
    c = sigma_yy - genetic_var - float(theta @ Sigma_uu @ theta)
    coef = uv_corr_to_v * np.sqrt(np.diag(Sigma_uu))
    b = float(theta @ coef)
    disc = b * b + c
    if c <= 0 or disc <= 0:
        raise InputError("infeasible outcome heritability target for these noise correlations")
    t = -b + np.sqrt(disc)
    if t <= 0:
        raise InputError("infeasible outcome heritability target (nonpositive outcome noise)")
    sigma_vv = t * t
    sigma_uv = coef * t
    return sigma_uv, sigma_vv


def univariable_spec(
    h2_exposure: float,
    h2_outcome: float,
    rho_uv: float,
    theta: float,
    n0: int,
    n1: int,
    n01: int,
    m: int,
) -> PopulationSpec:
    """Single-exposure spec parameterized by heritabilities.

    The exposure variance is normalized to 1: the instruments explain
    ``h2_exposure`` of it, and the causal path explains ``h2_outcome`` of
    the outcome variance.  ``rho_uv`` is the noise correlation (confounding
    strength).  Noise variances are solved from those targets.
    """
    if not (0 < h2_exposure < 1):
        raise InputError("h2_exposure must be in (0, 1)")
    if not (0 < h2_outcome < 1):
        raise InputError("h2_outcome must be in (0, 1)")
    if not (-1.0 < rho_uv < 1.0):
        raise InputError("rho_uv must be in (-1, 1)")
    Psi_bb = np.array([[h2_exposure]])
    Sigma_uu = np.array([[1.0 - h2_exposure]])
    th = np.array([theta], dtype=float)
    sigma_uv, sigma_vv = _solve_outcome_noise(th, Psi_bb, Sigma_uu, np.array([rho_uv]), h2_outcome)
    spec = PopulationSpec(
        p=1,
        theta=th,
        Psi_bb=Psi_bb,
        Sigma_uu=Sigma_uu,
        sigma_uv=sigma_uv,
        sigma_vv=sigma_vv,
        n=np.array([n0, n1]),
        overlap=overlap_univariable(n0, n1, n01),
        m=m,
    )
    spec.validate()
    return spec


def ar1_multivariable_spec(
    p: int,
    theta: np.ndarray,
    h2_exposure: float,
    h2_outcome: float,
    rho_genetic: float,
    rho_noise: float,
    n: np.ndarray,
    overlap: np.ndarray,
    m: int,
) -> PopulationSpec:
    """Multi-exposure spec with AR(1) genetic and noise correlation.

    Exposure variances are normalized to 1.  Genetic effects have
    correlation ``rho_genetic^|s-k|`` across exposures; the joint noise
    chain (u_1, ..., u_p, v) has correlation ``rho_noise^|s-k|``.  The
    outcome noise variance is solved from the outcome heritability target.
    """
    theta = np.asarray(theta, dtype=float).reshape(p)
    idx = np.arange(p)
    ar1_p = rho_genetic ** np.abs(idx[:, None] - idx[None, :])
    Psi_bb = h2_exposure * ar1_p
    noise_corr = rho_noise ** np.abs(idx[:, None] - idx[None, :])
    Sigma_uu = (1.0 - h2_exposure) * noise_corr
    uv_corr = rho_noise ** (p - idx)  # correlation of u_s with v in the chain
    sigma_uv, sigma_vv = _solve_outcome_noise(theta, Psi_bb, Sigma_uu, uv_corr, h2_outcome)
    spec = PopulationSpec(
        p=p,
        theta=theta,
        Psi_bb=Psi_bb,
        Sigma_uu=Sigma_uu,
        sigma_uv=sigma_uv,
        sigma_vv=sigma_vv,
        n=np.asarray(n),
        overlap=np.asarray(overlap),
        m=m,
    )
    spec.validate()
    return spec


def with_sizes(spec: PopulationSpec, n: np.ndarray, overlap: np.ndarray | None, m: int) -> PopulationSpec:
    """Same population, different study dimensions."""
    return replace(spec, n=np.asarray(n), overlap=overlap, m=m)
