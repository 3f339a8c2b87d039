"""Synthetic cohorts, summary statistics, and replication sweeps.

Two generation modes:

* ``individual`` -- draws genotypes Binom(2, maf) per variant, standardizes
  them, builds phenotypes from the structural model, and computes each
  cohort's marginal summary statistics exactly as a GWAS would.  Cohort
  overlap is realized by sharing leading individuals in a deterministic
  block layout.
* ``direct_errors`` -- skips individuals and draws the summary-statistic
  estimation errors directly from their closed-form joint normal
  distribution, which makes very large nominal sample sizes affordable.

``run_replications`` fits the requested estimators per replication and
aggregates bias, spread, standard-error accuracy, interval coverage and
(for the iterative method) outlier-recovery metrics.  Replication r draws
from an independent stream seeded by (seed, r), so results are bitwise
reproducible and independent of worker count.
"""

from __future__ import annotations

import concurrent.futures
import multiprocessing
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

from .errorcov import ErrorCovariance, estimate_error_cov, to_correlation
from .estimators import fit_ivw, fit_mrbee
from .exceptions import EstimationError, InputError, MrbeeError
from .panel import HarmonizedPanel, PanelSelection
from .pleiotropy import IterConfig, fit_mrbee_iterative, residual_test
from .theory import PopulationSpec, error_cov_theoretical

METHOD_IVW = "IVW"
METHOD_MRBEE = "MRBEE"
METHOD_MRBEE_ITERATIVE = "MRBEE_iterative"
ALL_METHODS = (METHOD_IVW, METHOD_MRBEE, METHOD_MRBEE_ITERATIVE)

DEFAULT_MAF_RANGE = (0.05, 0.5)


@dataclass(frozen=True)
class UhpSpec:
    """Uncorrelated-pleiotropy injection: how many variants, how large."""

    count: int
    magnitude_sd: float


@dataclass(frozen=True)
class SimConfig:
    spec: PopulationSpec
    replications: int
    seed: int
    mode: str = "individual"
    methods: tuple[str, ...] = (METHOD_IVW, METHOD_MRBEE)
    maf_range: tuple[float, float] = DEFAULT_MAF_RANGE
    uhp: UhpSpec | None = None
    error_cov_source: str = "theoretical"
    null_variants: int = 2000
    iter_config: IterConfig = field(default_factory=IterConfig)

    def validate(self) -> None:
        self.spec.validate()
        if self.replications < 1:
            raise InputError("replications must be at least 1")
        if self.mode not in ("individual", "direct_errors"):
            raise InputError(f"unknown mode '{self.mode}'")
        if self.spec.overlap is None:
            raise InputError(f"{self.mode} mode requires the overlap matrix")
        if self.error_cov_source not in ("theoretical", "null_panel"):
            raise InputError(f"unknown error_cov_source '{self.error_cov_source}'")
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise InputError(f"unknown methods: {sorted(unknown)}")
        if not self.methods:
            raise InputError("at least one method must be requested")
        lo, hi = self.maf_range
        if not (0.0 < lo < hi <= 0.5):
            raise InputError("maf_range must satisfy 0 < low < high <= 0.5")
        if self.uhp is not None:
            if self.uhp.count < 0 or self.uhp.count >= self.spec.m / 10:
                raise InputError("uhp.count must be nonnegative and below m/10")
            if self.uhp.magnitude_sd <= 0:
                raise InputError("uhp.magnitude_sd must be positive")
        self.iter_config.validate()


@dataclass(frozen=True)
class RawCohorts:
    """Individual-level draws for one replication.

    ``g_raw`` holds unstandardized genotype dosages for the union of all
    cohort members; each cohort is a contiguous row slice.  ``x``/``y`` are
    the phenotypes for every union member (built from genotypes
    standardized by union sample moments).
    """

    spec: PopulationSpec
    g_raw: np.ndarray
    x: np.ndarray
    y: np.ndarray
    B: np.ndarray
    alpha: np.ndarray
    slices: tuple[slice, ...]
    union_mu: np.ndarray
    union_sd: np.ndarray
    null_count: int = 0

    @property
    def m_total(self) -> int:
        return self.g_raw.shape[1]


def _cohort_slices(spec: PopulationSpec) -> tuple[slice, ...]:
    """Deterministic block layout realizing the requested overlap counts.

    The outcome cohort occupies rows [0, n0).  An exposure cohort sharing
    individuals with the outcome is placed so the shared block is the tail
    of the outcome rows; an exposure with no outcome overlap is appended
    after all previously placed rows.  The implied pairwise overlaps are
    verified against the requested matrix and a mismatch is an error, since
    interval layouts cannot realize every overlap pattern.
    """
    if spec.overlap is None:
        raise InputError("individual-mode generation requires the overlap matrix")
    N = spec.overlap
    n = spec.n
    starts = np.zeros(spec.p + 1, dtype=np.int64)
    cursor = int(n[0])
    for s in range(1, spec.p + 1):
        if N[0, s] > 0:
            starts[s] = int(n[0]) - int(N[0, s])
        else:
            starts[s] = cursor
        cursor = max(cursor, int(starts[s] + n[s]))
    slices = tuple(slice(int(starts[s]), int(starts[s] + n[s])) for s in range(spec.p + 1))
    for s in range(spec.p + 1):
        for k in range(s + 1, spec.p + 1):
            lo = max(slices[s].start, slices[k].start)
            hi = min(slices[s].stop, slices[k].stop)
            implied = max(0, hi - lo)
            if implied != int(N[s, k]):
                raise InputError(
                    f"overlap matrix not realizable by the block layout: cohorts {s},{k} "
                    f"imply {implied} shared individuals, requested {int(N[s, k])}"
                )
    return slices


def _factor_psd(mat: np.ndarray) -> np.ndarray:
    """Square root factor L with L L' = mat, valid for singular PSD inputs."""
    mat = np.asarray(mat, dtype=float)
    w, v = np.linalg.eigh((mat + mat.T) / 2.0)
    if w[0] < -1e-10 * max(float(w[-1]), 1e-300):
        raise EstimationError("covariance matrix is not positive semidefinite")
    return v * np.sqrt(np.clip(w, 0.0, None))


def gen_individual(
    spec: PopulationSpec,
    maf_range: tuple[float, float] = DEFAULT_MAF_RANGE,
    rng: np.random.Generator | None = None,
    extra_null: int = 0,
) -> RawCohorts:
    """Draw one replication of individual-level data.

    Genotype dosages are Binom(2, maf) with maf ~ Unif(maf_range); the model
    uses them standardized by the union sample moments.  ``extra_null``
    appends that many zero-effect variants (for error-covariance
    estimation) after the m causal-model instruments.

    Keeps the full union genotype matrix in float32; budget roughly
    ``4 * union_size * (m + extra_null)`` bytes.
    """
    rng = np.random.default_rng() if rng is None else rng
    slices = _cohort_slices(spec)
    union = max(sl.stop for sl in slices)
    m_total = spec.m + extra_null

    maf = rng.uniform(maf_range[0], maf_range[1], m_total)
    # single uniform per entry; dosage = 1{u > (1-b)^2} + 1{u > 1 - b^2}
    c1 = ((1.0 - maf) ** 2).astype(np.float32)
    c2 = (1.0 - maf**2).astype(np.float32)
    u = rng.random((union, m_total), dtype=np.float32)
    g = (u > c1).astype(np.float32)
    g += u > c2
    del u

    B = np.zeros((m_total, spec.p))
    B[: spec.m] = rng.standard_normal((spec.m, spec.p)) @ _factor_psd(spec.Psi_bb / spec.m).T
    noise = rng.standard_normal((union, spec.p + 1)) @ _factor_psd(spec.noise_cov).T

    mu = g.mean(axis=0, dtype=np.float64)
    m2 = np.einsum("ij,ij->j", g, g, dtype=np.float64) / union
    sd = np.sqrt(np.maximum(m2 - mu * mu, np.finfo(float).tiny))

    W = (B / sd[:, None]).astype(np.float32)
    x = g @ W
    x -= (mu @ (B / sd[:, None])).astype(np.float32)[None, :]
    x += noise[:, : spec.p].astype(np.float32)
    y = x @ spec.theta.astype(np.float32) + noise[:, spec.p].astype(np.float32)

    return RawCohorts(
        spec=spec,
        g_raw=g,
        x=x,
        y=y,
        B=B,
        alpha=B @ spec.theta,
        slices=slices,
        union_mu=mu,
        union_sd=sd,
        null_count=extra_null,
    )


def gen_summary(raw: RawCohorts) -> HarmonizedPanel:
    """Per-cohort marginal regressions, standardized to z-scores.

    Each cohort re-standardizes its own genotype slice by sample moments and
    regresses its phenotype on each variant separately; the approximate
    standard error is sqrt(var(phenotype)/n), constant across variants
    within a trait.
    """
    spec = raw.spec
    m_total = raw.m_total
    effects = np.empty((m_total, spec.p + 1))  # column order: outcome, exposures
    ses = np.empty(spec.p + 1)

    union = raw.g_raw.shape[0]
    moments_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {
        (0, union): (raw.union_mu, raw.union_sd)
    }

    def slice_moments(sl: slice) -> tuple[np.ndarray, np.ndarray]:
        key = (sl.start, sl.stop)
        if key not in moments_cache:
            gs = raw.g_raw[sl]
            n_rows = gs.shape[0]
            mu = gs.mean(axis=0, dtype=np.float64)
            m2 = np.einsum("ij,ij->j", gs, gs, dtype=np.float64) / n_rows
            sd = np.sqrt(np.maximum(m2 - mu * mu, np.finfo(float).tiny))
            moments_cache[key] = (mu, sd)
        return moments_cache[key]

    for c in range(spec.p + 1):
        sl = raw.slices[c]
        phen = raw.y[sl] if c == 0 else raw.x[sl, c - 1]
        n_c = int(spec.n[c])
        mu, sd = slice_moments(sl)
        dots = (raw.g_raw[sl].T @ phen).astype(np.float64)
        total = float(phen.sum(dtype=np.float64))
        effects[:, c] = (dots - mu * total) / (n_c * sd)
        phen64 = phen.astype(np.float64)
        var_phen = float(phen64.var())
        ses[c] = np.sqrt(var_phen / n_c) if var_phen > 0 else 1.0

    SE_B = np.broadcast_to(ses[1:], (m_total, spec.p)).copy()
    SE_alpha = np.full(m_total, ses[0])
    B_z = effects[:, 1:] / ses[1:]
    alpha_z = effects[:, 0] / ses[0]
    pval_B = 2.0 * norm.sf(np.abs(B_z))
    pval_alpha = 2.0 * norm.sf(np.abs(alpha_z))
    ids = np.array([f"v{j:06d}" for j in range(m_total)], dtype=object)
    trait_ids = ("outcome",) + tuple(f"exposure_{s}" for s in range(1, spec.p + 1))
    return HarmonizedPanel(
        variant_ids=ids,
        B_hat=B_z,
        alpha_hat=alpha_z,
        SE_B=SE_B,
        SE_alpha=SE_alpha,
        n=spec.n.copy(),
        overlap=None if spec.overlap is None else spec.overlap.copy(),
        pval_B=pval_B,
        pval_alpha=pval_alpha,
        trait_ids=trait_ids,
        standardized=True,
    )


def raw_effects(panel: HarmonizedPanel) -> tuple[np.ndarray, np.ndarray]:
    """Recover per-allele-scale effects from a z-score panel."""
    return panel.B_hat * panel.SE_B, panel.alpha_hat * panel.SE_alpha


def gen_direct_errors(
    spec: PopulationSpec,
    rng: np.random.Generator | None = None,
    extra_null: int = 0,
) -> tuple[HarmonizedPanel, np.ndarray, np.ndarray]:
    """Draw summary statistics by sampling estimation errors directly.

    Per-variant error rows are independent joint normals with the
    closed-form covariance implied by the overlap structure; true genetic
    effects are N(0, Psi_bb/m) rows and the outcome effect is B theta.
    Returns (panel, true B, true alpha); the panel carries raw-scale
    effects (``standardized=False``).
    """
    rng = np.random.default_rng() if rng is None else rng
    cov = error_cov_theoretical(spec).full
    L_err = _factor_psd(cov)
    m_total = spec.m + extra_null
    E = rng.standard_normal((m_total, spec.p + 1)) @ L_err.T
    B = np.zeros((m_total, spec.p))
    B[: spec.m] = rng.standard_normal((spec.m, spec.p)) @ _factor_psd(spec.Psi_bb / spec.m).T
    alpha = B @ spec.theta
    B_hat = B + E[:, : spec.p]
    alpha_hat = alpha + E[:, spec.p]

    se_vec = np.sqrt(np.diag(cov))
    SE_B = np.broadcast_to(se_vec[: spec.p], (m_total, spec.p)).copy()
    SE_alpha = np.full(m_total, se_vec[spec.p])
    pval_B = 2.0 * norm.sf(np.abs(B_hat / SE_B))
    pval_alpha = 2.0 * norm.sf(np.abs(alpha_hat / SE_alpha))
    ids = np.array([f"v{j:06d}" for j in range(m_total)], dtype=object)
    trait_ids = ("outcome",) + tuple(f"exposure_{s}" for s in range(1, spec.p + 1))
    panel = HarmonizedPanel(
        variant_ids=ids,
        B_hat=B_hat,
        alpha_hat=alpha_hat,
        SE_B=SE_B,
        SE_alpha=SE_alpha,
        n=spec.n.copy(),
        overlap=spec.overlap.copy(),
        pval_B=pval_B,
        pval_alpha=pval_alpha,
        trait_ids=trait_ids,
        standardized=False,
    )
    return panel, B, alpha


def inject_uhp(
    panel: HarmonizedPanel,
    count: int,
    magnitude_sd: float,
    rng: np.random.Generator,
    theta: np.ndarray,
    error_cov: ErrorCovariance,
) -> tuple[HarmonizedPanel, frozenset]:
    """Add direct outcome effects to ``count`` randomly chosen variants.

    Each chosen variant's outcome effect is shifted by a random-sign
    perturbation of size ``magnitude_sd`` residual standard deviations,
    where the residual variance is evaluated at the true theta.  Returns
    the perturbed panel and the injected index set.
    """
    if count >= panel.m:
        raise InputError("outlier count must be below the variant count")
    if count == 0:
        return panel, frozenset()
    base = residual_test(panel, np.asarray(theta, dtype=float), to_correlation(error_cov))
    idx = rng.choice(panel.m, size=count, replace=False)
    signs = rng.choice([-1.0, 1.0], size=count)
    alpha = panel.alpha_hat.copy()
    alpha[idx] += signs * magnitude_sd * np.sqrt(base.var_eps[idx])
    new_panel = replace(panel, alpha_hat=alpha)
    return new_panel, frozenset(int(i) for i in idx)


# ---------------------------------------------------------------------------
# Replication harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OutlierRecovery:
    """Exact-set rate plus average sensitivity and false-discovery rate."""

    exact_rate: float
    sensitivity: float
    fdr: float


@dataclass(frozen=True)
class MethodMetrics:
    mean_bias: np.ndarray
    empirical_sd: np.ndarray | None
    mean_se_hat: np.ndarray
    coverage: np.ndarray
    theta_samples: np.ndarray
    se_samples: np.ndarray
    completed: int
    excluded: int
    outlier_recovery: OutlierRecovery | None = None


@dataclass(frozen=True)
class ReplicationMetrics:
    methods: dict
    replications: int
    theta_true: np.ndarray

    def to_rows(self) -> list[tuple[str, int, str, float]]:
        """Long-format rows (method, coordinate, metric, value) for CSV export.

        Scalar metrics (completed/excluded counts, outlier recovery) use
        coordinate -1.
        """
        rows: list[tuple[str, int, str, float]] = []
        for name, mm in self.methods.items():
            for j in range(len(self.theta_true)):
                rows.append((name, j, "mean_bias", float(mm.mean_bias[j])))
                if mm.empirical_sd is not None:
                    rows.append((name, j, "empirical_sd", float(mm.empirical_sd[j])))
                rows.append((name, j, "mean_se_hat", float(mm.mean_se_hat[j])))
                rows.append((name, j, "coverage", float(mm.coverage[j])))
            rows.append((name, -1, "completed", float(mm.completed)))
            rows.append((name, -1, "excluded", float(mm.excluded)))
            if mm.outlier_recovery is not None:
                rows.append((name, -1, "outlier_exact_rate", mm.outlier_recovery.exact_rate))
                rows.append((name, -1, "outlier_sensitivity", mm.outlier_recovery.sensitivity))
                rows.append((name, -1, "outlier_fdr", mm.outlier_recovery.fdr))
        return rows


def _rep_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), int(r))))


def _one_replication(config: SimConfig, r: int) -> dict:
    """Generate, fit, and score a single replication.

    Individual mode fits on the z-score scale against the error correlation
    matrix (the real pipeline) and rescales estimates back to the trait
    scale through the per-trait SEs; direct mode fits raw effects against
    the raw error covariance.
    """
    rng = _rep_rng(config.seed, r)
    spec = config.spec
    extra = config.null_variants if config.error_cov_source == "null_panel" else 0

    if config.mode == "individual":
        raw = gen_individual(spec, config.maf_range, rng, extra_null=extra)
        panel_all = gen_summary(raw)
    else:
        panel_all, _, _ = gen_direct_errors(spec, rng, extra_null=extra)

    if extra:
        panel = panel_all.subset(np.arange(spec.m))
        null_panel = panel_all.subset(np.arange(spec.m, spec.m + extra))
        ecov_fit = estimate_error_cov(null_panel)
    else:
        panel = panel_all
        theo = error_cov_theoretical(spec)
        if config.mode == "individual":
            ecov_fit = ErrorCovariance(full=to_correlation(theo).R, M_used=0)
        else:
            ecov_fit = theo

    if config.mode == "individual":
        # theta_z = (se_beta/se_alpha) * theta_trait, per trait; undo after fitting
        scale = panel.SE_alpha[0] / panel.SE_B[0, :]
    else:
        scale = np.ones(spec.p)

    theta_fit_true = spec.theta / scale
    truth_outliers: frozenset = frozenset()
    if config.uhp is not None and config.uhp.count > 0:
        panel, truth_outliers = inject_uhp(
            panel, config.uhp.count, config.uhp.magnitude_sd, rng, theta_fit_true, ecov_fit
        )

    out: dict = {"r": r, "methods": {}, "truth_outliers": truth_outliers}
    for method in config.methods:
        try:
            flagged: frozenset = frozenset()
            if method == METHOD_IVW:
                est = fit_ivw(panel)
            elif method == METHOD_MRBEE:
                est = fit_mrbee(panel, ecov_fit)
            else:
                fit = fit_mrbee_iterative(
                    PanelSelection(iv_panel=panel, null_panel=None), ecov_fit, config.iter_config
                )
                est = fit.estimate
                flagged = fit.report.flagged
            theta_trait = est.theta * scale
            se_trait = est.se * scale
            hit = np.abs(theta_trait - spec.theta) <= 2.0 * se_trait
            out["methods"][method] = {
                "theta": theta_trait,
                "se": se_trait,
                "hit": hit,
                "flagged": flagged,
            }
        except MrbeeError as err:
            out["methods"][method] = {"error": str(err)}
    return out


def run_replications(config: SimConfig, threads: int = 1) -> ReplicationMetrics:
    """Run the configured replication sweep and aggregate metrics.

    ``threads`` > 1 distributes replications over processes; aggregation is
    performed in replication order, so results are identical for any worker
    count.
    """
    config.validate()
    reps = config.replications
    if threads > 1 and reps > 1:
        # spawn (not fork): forking a process with live BLAS threads deadlocks
        ctx = multiprocessing.get_context("spawn")
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
            results = list(pool.map(_one_replication, [config] * reps, range(reps), chunksize=8))
    else:
        results = [_one_replication(config, r) for r in range(reps)]
    results.sort(key=lambda d: d["r"])

    methods: dict[str, MethodMetrics] = {}
    for method in config.methods:
        thetas, ses, hits = [], [], []
        exact, sens, fdrs = [], [], []
        excluded = 0
        for res in results:
            rec = res["methods"][method]
            if "error" in rec:
                excluded += 1
                continue
            thetas.append(rec["theta"])
            ses.append(rec["se"])
            hits.append(rec["hit"])
            if method == METHOD_MRBEE_ITERATIVE and config.uhp is not None:
                truth = res["truth_outliers"]
                found = rec["flagged"]
                exact.append(1.0 if found == truth else 0.0)
                n_true = max(len(truth), 1)
                tp = len(found & truth)
                sens.append(tp / n_true)
                fdrs.append((len(found) - tp) / max(len(found), 1))
        if not thetas:
            raise EstimationError(f"every replication failed for method {method}")
        T = np.vstack(thetas)
        S = np.vstack(ses)
        Hit = np.vstack(hits)
        completed = T.shape[0]
        recovery = None
        if exact:
            recovery = OutlierRecovery(
                exact_rate=float(np.mean(exact)),
                sensitivity=float(np.mean(sens)),
                fdr=float(np.mean(fdrs)),
            )
        methods[method] = MethodMetrics(
            mean_bias=T.mean(axis=0) - config.spec.theta,
            empirical_sd=T.std(axis=0, ddof=1) if completed >= 2 else None,
            mean_se_hat=S.mean(axis=0),
            coverage=Hit.mean(axis=0),
            theta_samples=T,
            se_samples=S,
            completed=completed,
            excluded=excluded,
            outlier_recovery=recovery,
        )
    return ReplicationMetrics(methods=methods, replications=reps, theta_true=config.spec.theta.copy())
