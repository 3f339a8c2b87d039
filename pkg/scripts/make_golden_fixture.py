"""Regenerate the bundled synthetic summary files and the golden outputs.

Run from the repository root:

    python3 scripts/make_golden_fixture.py

Writes tests/data/golden/*.tsv.  The inputs are produced by the simulator at
a fixed seed (two exposures, one fully overlapping cohort, strong
instruments plus a large null tail) and then lightly mangled to exercise
harmonization: swapped alleles in one exposure, palindromic variants, and a
few ids missing from one file.  The golden estimates come from running the
CLI on those files.
"""

from __future__ import annotations

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import mrbee as mb
from mrbee.cli import main as cli_main
from mrbee.simulate import raw_effects

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "tests", "data", "golden")
SEED = 20240811

NON_PALINDROMIC = [("A", "G"), ("G", "A"), ("C", "T"), ("T", "C"), ("A", "C"), ("G", "T")]


def build_panel():
    n = np.full(3, 8000)
    spec = mb.ar1_multivariable_spec(
        p=2,
        theta=np.array([0.3, -0.2]),
        h2_exposure=0.3,
        h2_outcome=0.1,
        rho_genetic=0.4,
        rho_noise=0.5,
        n=n,
        overlap=mb.overlap_full(n),
        m=80,
    )
    rng = np.random.default_rng(SEED)
    raw = mb.gen_individual(spec, rng=rng, extra_null=1200)
    return mb.gen_summary(raw)


def write_tables(panel):
    os.makedirs(OUT_DIR, exist_ok=True)
    m = panel.m
    rng = np.random.default_rng(SEED + 1)
    ids = np.array([f"rs{100000 + 7 * j}" for j in range(m)], dtype=object)
    allele_idx = rng.integers(0, len(NON_PALINDROMIC), m)
    alleles = [NON_PALINDROMIC[i] for i in allele_idx]
    # a couple of palindromic variants (dropped during harmonization)
    for j in (10, 500):
        alleles[j] = ("A", "T")

    B_raw, a_raw = raw_effects(panel)
    effects = {
        "outcome": (a_raw, panel.SE_alpha, panel.pval_alpha, int(panel.n[0])),
        "exposure_bmi": (B_raw[:, 0], panel.SE_B[:, 0], panel.pval_B[:, 0], int(panel.n[1])),
        "exposure_ldl": (B_raw[:, 1], panel.SE_B[:, 1], panel.pval_B[:, 1], int(panel.n[2])),
    }
    swapped = {20, 21, 300}  # exposure_ldl rows stored on the opposite allele
    missing_from_ldl = {40, 41}  # ids absent from one file (shrinks the intersection)

    for trait, (eff, se, pv, n_c) in effects.items():
        path = os.path.join(OUT_DIR, f"{trait}.tsv")
        with open(path, "w") as fh:
            fh.write("variant_id\teffect_allele\tother_allele\tbeta\tse\tpval\tn\n")
            for j in range(m):
                ea, oa = alleles[j]
                b = eff[j]
                if trait == "exposure_ldl":
                    if j in missing_from_ldl:
                        continue
                    if j in swapped:
                        ea, oa = oa, ea
                        b = -b
                fh.write(f"{ids[j]}\t{ea}\t{oa}\t{b:.10g}\t{se[j]:.10g}\t{pv[j]:.10g}\t{n_c}\n")
        print("wrote", path)


def write_golden():
    out = os.path.join(OUT_DIR, "artifacts")
    code = cli_main(
        [
            "fit",
            "--outcome", os.path.join(OUT_DIR, "outcome.tsv"),
            "--exposure", os.path.join(OUT_DIR, "exposure_bmi.tsv"),
            "--exposure", os.path.join(OUT_DIR, "exposure_ldl.tsv"),
            "--iv-pval", "1e-4",
            "--method", "mrbee-iter",
            "--out", out,
        ]
    )
    if code != 0:
        raise SystemExit(f"fit failed with exit code {code}")
    for name in ("estimates.tsv", "outliers.tsv", "errcov.tsv"):
        src = os.path.join(out, name)
        dst = os.path.join(OUT_DIR, f"golden_{name}")
        with open(src) as fh:
            content = fh.read()
        with open(dst, "w") as fh:
            fh.write(content)
        print("wrote", dst)


if __name__ == "__main__":
    panel = build_panel()
    write_tables(panel)
    write_golden()
