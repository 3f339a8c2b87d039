"""Loading, harmonizing, and partitioning GWAS summary statistics.

A study is one outcome table plus one or more exposure tables.  Harmonizing
aligns every table to the outcome's effect alleles (flipping signs for
swapped alleles, dropping strand-ambiguous palindromic variants), restricts
to the shared variants, and standardizes effects to z-scores.  Variants are
then split by significance into the instrument panel (used to fit causal
effects) and the null panel (used only to estimate the error covariance).

Variants must already be LD-pruned; this module does not model linkage.
Phenotypes are assumed centered in the contributing GWAS, which cannot be
checked from summary data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .exceptions import InputError

log = logging.getLogger(__name__)

_COMPLEMENT = {"A": "T", "T": "A", "C": "G", "G": "C"}
_VALID_ALLELES = frozenset(_COMPLEMENT)

#: Logical column names and their default header spellings.
DEFAULT_COLUMNS = {
    "variant_id": "variant_id",
    "effect_allele": "effect_allele",
    "other_allele": "other_allele",
    "beta": "beta",
    "se": "se",
    "pval": "pval",
    "n": "n",
}

DEFAULT_IV_PVALUE = 5e-8
DEFAULT_NULL_PVALUE = 0.05


@dataclass(frozen=True)
class SummaryDataset:
    """One trait's GWAS summary table (columnar)."""

    trait_id: str
    variant_id: np.ndarray
    effect_allele: np.ndarray
    other_allele: np.ndarray
    effect: np.ndarray
    se: np.ndarray
    pvalue: np.ndarray
    n: int
    n_dropped: int = 0

    @property
    def m(self) -> int:
        return len(self.variant_id)


@dataclass(frozen=True)
class HarmonizedPanel:
    """Aligned effect matrices for m variants across p exposures and the outcome.

    ``B_hat``/``alpha_hat`` hold the working effects and ``SE_B``/``SE_alpha``
    their original standard errors.  When ``standardized`` is True the
    working effects are z-scores (effect / SE) and their own standard errors
    are unit, which is the scale the real-data pipeline fits on; simulation
    panels may instead carry raw effects (``standardized=False``).

    Cohort sizes ``n`` and the optional ``overlap`` matrix put the outcome
    at index 0; effect matrices order exposures by column.
    """

    variant_ids: np.ndarray
    B_hat: np.ndarray
    alpha_hat: np.ndarray
    SE_B: np.ndarray
    SE_alpha: np.ndarray
    n: np.ndarray
    overlap: np.ndarray | None
    pval_B: np.ndarray
    pval_alpha: np.ndarray
    trait_ids: tuple[str, ...]
    standardized: bool = True

    @property
    def m(self) -> int:
        return self.B_hat.shape[0]

    @property
    def p(self) -> int:
        return self.B_hat.shape[1]

    @property
    def exposure_ids(self) -> tuple[str, ...]:
        return self.trait_ids[1:]

    @property
    def outcome_id(self) -> str:
        return self.trait_ids[0]

    def min_pvalues(self) -> np.ndarray:
        """Per-variant minimum p-value across all traits."""
        return np.minimum(self.pval_B.min(axis=1), self.pval_alpha)

    def subset(self, index: np.ndarray) -> "HarmonizedPanel":
        """Panel restricted to the given variant row indices."""
        index = np.asarray(index)
        return replace(
            self,
            variant_ids=self.variant_ids[index],
            B_hat=self.B_hat[index],
            alpha_hat=self.alpha_hat[index],
            SE_B=self.SE_B[index],
            SE_alpha=self.SE_alpha[index],
            pval_B=self.pval_B[index],
            pval_alpha=self.pval_alpha[index],
        )


@dataclass(frozen=True)
class PanelSelection:
    """Instrument and null panels drawn from one harmonized study."""

    iv_panel: HarmonizedPanel
    null_panel: HarmonizedPanel | None

    def __post_init__(self):
        if self.null_panel is not None:
            shared = set(self.iv_panel.variant_ids) & set(self.null_panel.variant_ids)
            if shared:
                raise InputError(f"instrument and null panels share {len(shared)} variants")


def load_summary_table(path, schema: dict[str, str] | None = None, trait_id: str | None = None) -> SummaryDataset:
    """Load a tab-delimited GWAS summary table.

    ``schema`` remaps logical column names (keys of ``DEFAULT_COLUMNS``) to
    the file's actual headers.  Rows with unparseable or invalid fields
    (non-positive SE, p-value outside [0, 1], missing alleles) are dropped
    and counted in ``n_dropped``.

    Raises :class:`InputError` for a missing file, a missing mapped column,
    duplicate variant ids, a non-constant cohort size, or zero usable rows.
    """
    columns = dict(DEFAULT_COLUMNS)
    if schema:
        unknown = set(schema) - set(DEFAULT_COLUMNS)
        if unknown:
            raise InputError(f"unknown logical columns in schema: {sorted(unknown)}")
        columns.update(schema)
    try:
        raw = pd.read_csv(path, sep="\t", dtype=str)
    except FileNotFoundError as err:
        raise InputError(f"summary file not found: {path}") from err
    except Exception as err:  # malformed file
        raise InputError(f"could not parse {path}: {err}") from err
    missing = [col for col in columns.values() if col not in raw.columns]
    if missing:
        raise InputError(f"{path}: missing required columns {missing}")

    df = pd.DataFrame(
        {
            "variant_id": raw[columns["variant_id"]].astype(str).str.strip(),
            "effect_allele": raw[columns["effect_allele"]].astype(str).str.strip().str.upper(),
            "other_allele": raw[columns["other_allele"]].astype(str).str.strip().str.upper(),
            "effect": pd.to_numeric(raw[columns["beta"]], errors="coerce"),
            "se": pd.to_numeric(raw[columns["se"]], errors="coerce"),
            "pvalue": pd.to_numeric(raw[columns["pval"]], errors="coerce"),
            "n": pd.to_numeric(raw[columns["n"]], errors="coerce"),
        }
    )
    ok = (
        df["variant_id"].ne("")
        & df["effect_allele"].isin(_VALID_ALLELES)
        & df["other_allele"].isin(_VALID_ALLELES)
        & np.isfinite(df["effect"])
        & np.isfinite(df["se"])
        & (df["se"] > 0)
        & df["pvalue"].between(0.0, 1.0)
        & np.isfinite(df["n"])
        & (df["n"] > 0)
    )
    n_dropped = int((~ok).sum())
    if n_dropped:
        log.warning("%s: dropped %d rows with missing or invalid fields", path, n_dropped)
    df = df[ok]
    if df.empty:
        raise InputError(f"{path}: no usable rows after validation")
    if df["variant_id"].duplicated().any():
        dups = df.loc[df["variant_id"].duplicated(), "variant_id"].iloc[0]
        raise InputError(f"{path}: duplicate variant_id (e.g. {dups})")
    n_values = df["n"].astype(np.int64).unique()
    if len(n_values) != 1:
        raise InputError(f"{path}: cohort size must be constant per dataset, found {len(n_values)} values")

    name = trait_id if trait_id is not None else _stem(path)
    return SummaryDataset(
        trait_id=name,
        variant_id=df["variant_id"].to_numpy(),
        effect_allele=df["effect_allele"].to_numpy(),
        other_allele=df["other_allele"].to_numpy(),
        effect=df["effect"].to_numpy(dtype=float),
        se=df["se"].to_numpy(dtype=float),
        pvalue=df["pvalue"].to_numpy(dtype=float),
        n=int(n_values[0]),
        n_dropped=n_dropped,
    )


def _stem(path) -> str:
    import os

    return os.path.splitext(os.path.basename(str(path)))[0]


def _is_palindromic(ea: str, oa: str) -> bool:
    return _COMPLEMENT.get(ea) == oa


def harmonize(
    outcome: SummaryDataset,
    exposures: list[SummaryDataset],
    overlap: np.ndarray | None = None,
) -> HarmonizedPanel:
    """Align exposures to the outcome's alleles and standardize to z-scores.

    Keeps the intersection of variant ids (in the outcome's row order).  An
    exposure row whose alleles are swapped relative to the outcome has its
    effect sign flipped; strand-ambiguous palindromic variants (A/T, C/G)
    are dropped; any other allele disagreement is an error.
    """
    if not exposures:
        raise InputError("at least one exposure dataset is required")
    datasets = [outcome, *exposures]
    for ds in datasets:
        if ds.m == 0:
            raise InputError(f"dataset {ds.trait_id} is empty")
    lookups = [{vid: i for i, vid in enumerate(ds.variant_id)} for ds in datasets]
    common = [vid for vid in outcome.variant_id if all(vid in lk for lk in lookups[1:])]
    if not common:
        raise InputError("no variants shared by all datasets")

    p = len(exposures)
    kept_ids: list[str] = []
    rows_by_ds: list[list[int]] = [[] for _ in datasets]
    signs: list[list[float]] = []
    n_palindromic = 0
    for vid in common:
        i0 = lookups[0][vid]
        ea0, oa0 = outcome.effect_allele[i0], outcome.other_allele[i0]
        if _is_palindromic(ea0, oa0):
            n_palindromic += 1
            continue
        row_sign = [1.0]
        ok = True
        for k, ds in enumerate(exposures, start=1):
            i = lookups[k][vid]
            ea, oa = ds.effect_allele[i], ds.other_allele[i]
            if _is_palindromic(ea, oa):
                n_palindromic += 1
                ok = False
                break
            if (ea, oa) == (ea0, oa0):
                row_sign.append(1.0)
            elif (ea, oa) == (oa0, ea0):
                row_sign.append(-1.0)
            else:
                raise InputError(
                    f"allele mismatch for {vid} in {ds.trait_id}: "
                    f"{ea}/{oa} vs outcome {ea0}/{oa0} (neither swap nor palindrome)"
                )
        if not ok:
            continue
        kept_ids.append(vid)
        signs.append(row_sign)
        for k in range(len(datasets)):
            rows_by_ds[k].append(lookups[k][vid])
    if n_palindromic:
        log.info("dropped %d strand-ambiguous palindromic variants", n_palindromic)
    if not kept_ids:
        raise InputError("no variants remain after allele harmonization")

    sign_mat = np.asarray(signs)  # (m, p+1), first column is the outcome
    m = len(kept_ids)
    B_hat = np.empty((m, p))
    SE_B = np.empty((m, p))
    pval_B = np.empty((m, p))
    for k, ds in enumerate(exposures, start=1):
        rows = np.asarray(rows_by_ds[k])
        eff = ds.effect[rows] * sign_mat[:, k]
        SE_B[:, k - 1] = ds.se[rows]
        B_hat[:, k - 1] = eff / ds.se[rows]
        pval_B[:, k - 1] = ds.pvalue[rows]
    rows0 = np.asarray(rows_by_ds[0])
    SE_alpha = outcome.se[rows0]
    alpha_hat = outcome.effect[rows0] / SE_alpha
    pval_alpha = outcome.pvalue[rows0]

    n_vec = np.array([outcome.n] + [ds.n for ds in exposures], dtype=np.int64)
    if overlap is not None:
        overlap = _validate_overlap(np.asarray(overlap), n_vec)
    return HarmonizedPanel(
        variant_ids=np.asarray(kept_ids, dtype=object),
        B_hat=B_hat,
        alpha_hat=alpha_hat,
        SE_B=SE_B,
        SE_alpha=SE_alpha,
        n=n_vec,
        overlap=overlap,
        pval_B=pval_B,
        pval_alpha=pval_alpha,
        trait_ids=tuple(ds.trait_id for ds in datasets),
        standardized=True,
    )


def _validate_overlap(N: np.ndarray, n_vec: np.ndarray) -> np.ndarray:
    if N.shape != (len(n_vec), len(n_vec)):
        raise InputError(f"overlap matrix has shape {N.shape}, expected {(len(n_vec), len(n_vec))}")
    N = N.astype(np.int64)
    if np.any(N != N.T):
        raise InputError("overlap matrix must be symmetric")
    if np.any(N < 0):
        raise InputError("overlap counts must be nonnegative")
    if np.any(np.diag(N) != n_vec):
        raise InputError("overlap diagonal must match the per-dataset cohort sizes")
    if np.any(N > np.minimum.outer(n_vec, n_vec)):
        raise InputError("overlap counts cannot exceed the smaller cohort size")
    return N


def partition_variants(
    panel: HarmonizedPanel,
    iv_pvalue: float = DEFAULT_IV_PVALUE,
    null_pvalue: float = DEFAULT_NULL_PVALUE,
    min_distance_rank: int = 1,
) -> PanelSelection:
    """Split a panel into instruments and null variants by significance.

    A variant is an instrument when its minimum p-value across all traits is
    at most ``iv_pvalue`` and a null variant when that minimum exceeds
    ``null_pvalue``; variants in between are unused.  ``min_distance_rank``
    optionally thins the instrument set so selected rows are at least that
    many panel rows apart (a crude spacing proxy; supply pre-pruned variants
    for real independence).
    """
    if not (0.0 < iv_pvalue < null_pvalue <= 1.0):
        raise InputError("thresholds must satisfy 0 < iv_pvalue < null_pvalue <= 1")
    if min_distance_rank < 1:
        raise InputError("min_distance_rank must be at least 1")
    min_p = panel.min_pvalues()
    iv_idx = np.flatnonzero(min_p <= iv_pvalue)
    null_idx = np.flatnonzero(min_p > null_pvalue)
    if min_distance_rank > 1 and iv_idx.size:
        keep = [int(iv_idx[0])]
        for i in iv_idx[1:]:
            if int(i) - keep[-1] >= min_distance_rank:
                keep.append(int(i))
        iv_idx = np.asarray(keep)
    if iv_idx.size < panel.p:
        raise InputError(
            f"only {iv_idx.size} instruments pass p<={iv_pvalue:g}; need at least p={panel.p}"
        )
    if null_idx.size == 0:
        raise InputError(f"no null variants with p>{null_pvalue:g}")
    return PanelSelection(iv_panel=panel.subset(iv_idx), null_panel=panel.subset(null_idx))


def load_overlap_matrix(path, trait_ids: tuple[str, ...]) -> np.ndarray:
    """Read a square overlap-count TSV with trait ids on both header axes.

    Rows/columns are reordered to match ``trait_ids`` (outcome first).
    """
    try:
        df = pd.read_csv(path, sep="\t", index_col=0)
    except FileNotFoundError as err:
        raise InputError(f"overlap file not found: {path}") from err
    df.index = df.index.astype(str)
    df.columns = df.columns.astype(str)
    missing = [t for t in trait_ids if t not in df.index or t not in df.columns]
    if missing:
        raise InputError(f"overlap matrix is missing traits {missing}")
    ordered = df.loc[list(trait_ids), list(trait_ids)]
    values = ordered.to_numpy()
    try:
        return values.astype(np.int64)
    except ValueError as err:
        raise InputError(f"overlap matrix has non-integer cells: {err}") from err
