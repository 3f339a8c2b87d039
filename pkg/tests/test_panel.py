"""Summary-table loading, allele harmonization, variant partitioning."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mrbee as mb

NON_PALINDROMIC = [("A", "G"), ("G", "A"), ("C", "T"), ("T", "C"), ("A", "C"), ("G", "T")]


def _write_tsv(path, rows, header=("variant_id", "effect_allele", "other_allele", "beta", "se", "pval", "n")):
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(str(x) for x in row))
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def _dataset(trait_id, ids, alleles, effects, ses, pvals, n):
    ea = np.array([a[0] for a in alleles], dtype=object)
    oa = np.array([a[1] for a in alleles], dtype=object)
    return mb.SummaryDataset(
        trait_id=trait_id,
        variant_id=np.asarray(ids, dtype=object),
        effect_allele=ea,
        other_allele=oa,
        effect=np.asarray(effects, dtype=float),
        se=np.asarray(ses, dtype=float),
        pvalue=np.asarray(pvals, dtype=float),
        n=n,
    )


class TestLoadSummaryTable:
    def test_well_formed(self, tmp_path):
        path = _write_tsv(
            tmp_path / "a.tsv",
            [
                ("rs1", "A", "G", 0.1, 0.02, 1e-9, 5000),
                ("rs2", "C", "T", -0.2, 0.03, 0.5, 5000),
                ("rs3", "G", "A", 0.05, 0.01, 0.02, 5000),
            ],
        )
        ds = mb.load_summary_table(path)
        assert ds.m == 3
        assert ds.n == 5000
        assert ds.n_dropped == 0
        assert ds.trait_id == "a"

    def test_zero_se_row_dropped(self, tmp_path):
        path = _write_tsv(
            tmp_path / "b.tsv",
            [("rs1", "A", "G", 0.1, 0.0, 0.5, 100), ("rs2", "A", "G", 0.1, 0.02, 0.5, 100)],
        )
        ds = mb.load_summary_table(path)
        assert ds.m == 1
        assert ds.n_dropped == 1

    def test_shuffled_columns_identical(self, tmp_path):
        rows = [("rs1", "A", "G", 0.1, 0.02, 1e-9, 5000), ("rs2", "C", "T", -0.2, 0.03, 0.5, 5000)]
        canonical = mb.load_summary_table(_write_tsv(tmp_path / "c.tsv", rows))
        shuffled_header = ("n", "pval", "se", "beta", "other_allele", "effect_allele", "variant_id")
        shuffled_rows = [tuple(reversed(r)) for r in rows]
        shuffled = mb.load_summary_table(_write_tsv(tmp_path / "d.tsv", shuffled_rows, shuffled_header))
        np.testing.assert_array_equal(shuffled.variant_id, canonical.variant_id)
        np.testing.assert_array_equal(shuffled.effect, canonical.effect)
        np.testing.assert_array_equal(shuffled.se, canonical.se)

    def test_missing_file(self, tmp_path):
        with pytest.raises(mb.InputError):
            mb.load_summary_table(tmp_path / "missing.tsv")

    def test_missing_column(self, tmp_path):
        path = tmp_path / "e.tsv"
        path.write_text("variant_id\tbeta\nrs1\t0.1\n")
        with pytest.raises(mb.InputError):
            mb.load_summary_table(path)

    def test_zero_usable_rows(self, tmp_path):
        path = _write_tsv(tmp_path / "f.tsv", [("rs1", "A", "G", "x", 0.02, 0.5, 100)])
        with pytest.raises(mb.InputError):
            mb.load_summary_table(path)

    def test_column_remap(self, tmp_path):
        path = _write_tsv(
            tmp_path / "g.tsv",
            [("rs1", "A", "G", 0.1, 0.02, 0.5, 100)],
            header=("SNP", "A1", "A2", "BETA", "SE", "P", "N"),
        )
        schema = {
            "variant_id": "SNP",
            "effect_allele": "A1",
            "other_allele": "A2",
            "beta": "BETA",
            "se": "SE",
            "pval": "P",
            "n": "N",
        }
        ds = mb.load_summary_table(path, schema=schema)
        assert ds.m == 1

    def test_inconsistent_n_rejected(self, tmp_path):
        path = _write_tsv(
            tmp_path / "h.tsv",
            [("rs1", "A", "G", 0.1, 0.02, 0.5, 100), ("rs2", "A", "G", 0.1, 0.02, 0.5, 200)],
        )
        with pytest.raises(mb.InputError):
            mb.load_summary_table(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        path = _write_tsv(
            tmp_path / "i.tsv",
            [("rs1", "A", "G", 0.1, 0.02, 0.5, 100), ("rs1", "A", "G", 0.2, 0.02, 0.5, 100)],
        )
        with pytest.raises(mb.InputError):
            mb.load_summary_table(path)


class TestHarmonize:
    def test_identical_lists_no_flips(self):
        ids = ["rs1", "rs2", "rs3"]
        alleles = [("A", "G"), ("C", "T"), ("G", "A")]
        outcome = _dataset("out", ids, alleles, [0.1, -0.2, 0.3], [0.01, 0.02, 0.03], [0.5, 0.5, 0.5], 1000)
        expo = _dataset("exp", ids, alleles, [0.2, 0.1, -0.1], [0.02, 0.02, 0.02], [0.5, 0.5, 0.5], 2000)
        panel = mb.harmonize(outcome, [expo])
        assert panel.m == 3
        np.testing.assert_allclose(panel.B_hat[:, 0], np.array([0.2, 0.1, -0.1]) / 0.02)
        np.testing.assert_array_equal(panel.n, [1000, 2000])

    def test_swapped_alleles_flip_sign(self):
        outcome = _dataset("out", ["rs1"], [("A", "G")], [0.1], [0.01], [0.5], 1000)
        expo = _dataset("exp", ["rs1"], [("G", "A")], [0.2], [0.02], [0.5], 2000)
        panel = mb.harmonize(outcome, [expo])
        assert panel.B_hat[0, 0] == pytest.approx(-10.0)

    def test_intersection_size(self):
        rng = np.random.default_rng(1)
        all_ids = [f"rs{j}" for j in range(120)]
        shared = all_ids[:60]
        ids_a = shared + all_ids[60:100]  # 100
        ids_b = shared + all_ids[100:120]  # 80
        ids_o = shared + all_ids[60:90]  # 90

        def make(trait, ids, n):
            k = len(ids)
            alleles = [NON_PALINDROMIC[j % len(NON_PALINDROMIC)] for j in range(k)]
            return _dataset(trait, ids, alleles, rng.standard_normal(k), np.full(k, 0.02), np.full(k, 0.5), n)

        panel = mb.harmonize(make("o", ids_o, 900), [make("a", ids_a, 1000), make("b", ids_b, 800)])
        # oracle: plain set intersection
        expected = set(ids_o) & set(ids_a) & set(ids_b)
        assert panel.m == len(expected) == 60

    def test_palindromic_dropped(self):
        outcome = _dataset(
            "out", ["rs1", "rs2"], [("A", "T"), ("A", "G")], [0.1, 0.2], [0.01, 0.01], [0.5, 0.5], 1000
        )
        expo = _dataset(
            "exp", ["rs1", "rs2"], [("A", "T"), ("A", "G")], [0.1, 0.2], [0.01, 0.01], [0.5, 0.5], 1000
        )
        panel = mb.harmonize(outcome, [expo])
        assert panel.m == 1
        assert panel.variant_ids[0] == "rs2"

    def test_true_mismatch_rejected(self):
        outcome = _dataset("out", ["rs1"], [("A", "G")], [0.1], [0.01], [0.5], 1000)
        expo = _dataset("exp", ["rs1"], [("T", "C")], [0.2], [0.02], [0.5], 2000)
        with pytest.raises(mb.InputError):
            mb.harmonize(outcome, [expo])

    def test_empty_intersection(self):
        outcome = _dataset("out", ["rs1"], [("A", "G")], [0.1], [0.01], [0.5], 1000)
        expo = _dataset("exp", ["rs9"], [("A", "G")], [0.2], [0.02], [0.5], 2000)
        with pytest.raises(mb.InputError):
            mb.harmonize(outcome, [expo])

    def test_sign_flip_consistency(self):
        # negating effects and swapping allele labels is a no-op
        ids = ["rs1", "rs2"]
        outcome = _dataset("out", ids, [("A", "G"), ("C", "T")], [0.1, 0.2], [0.01, 0.02], [0.5, 0.5], 1000)
        expo = _dataset("exp", ids, [("A", "G"), ("C", "T")], [0.3, -0.4], [0.02, 0.02], [0.5, 0.5], 2000)
        flipped = dataclasses.replace(
            expo,
            effect=-expo.effect,
            effect_allele=expo.other_allele,
            other_allele=expo.effect_allele,
        )
        p1 = mb.harmonize(outcome, [expo])
        p2 = mb.harmonize(outcome, [flipped])
        np.testing.assert_array_equal(p1.B_hat, p2.B_hat)
        np.testing.assert_array_equal(p1.SE_B, p2.SE_B)

    def test_idempotent(self):
        ids = ["rs1", "rs2", "rs3"]
        alleles = [("A", "G"), ("C", "T"), ("T", "G")]
        outcome = _dataset("out", ids, alleles, [0.1, -0.2, 0.3], [0.01, 0.02, 0.03], [0.4, 0.5, 0.6], 1000)
        expo = _dataset("exp", ids, [("G", "A"), ("C", "T"), ("G", "T")], [0.2, 0.1, -0.1], [0.02, 0.02, 0.02], [0.5, 0.5, 0.5], 2000)
        panel = mb.harmonize(outcome, [expo])

        # rebuild datasets from the panel (aligned alleles) and re-harmonize
        def back_to_dataset(trait_idx):
            k = panel.m
            alleles2 = [("A", "G")] * k
            if trait_idx == 0:
                eff, se, pv, n = panel.alpha_hat * panel.SE_alpha, panel.SE_alpha, panel.pval_alpha, panel.n[0]
            else:
                eff = panel.B_hat[:, trait_idx - 1] * panel.SE_B[:, trait_idx - 1]
                se, pv, n = panel.SE_B[:, trait_idx - 1], panel.pval_B[:, trait_idx - 1], panel.n[trait_idx]
            return _dataset(panel.trait_ids[trait_idx], list(panel.variant_ids), alleles2, eff, se, pv, int(n))

        panel2 = mb.harmonize(back_to_dataset(0), [back_to_dataset(1)])
        np.testing.assert_array_equal(panel2.B_hat, panel.B_hat)
        np.testing.assert_array_equal(panel2.alpha_hat, panel.alpha_hat)

    @settings(max_examples=25, deadline=None)
    @given(
        effects=st.lists(
            st.floats(min_value=-2, max_value=2, allow_nan=False).filter(lambda x: abs(x) > 1e-6),
            min_size=2,
            max_size=8,
        ),
        flip_mask=st.lists(st.booleans(), min_size=8, max_size=8),
    )
    def test_property_sign_flips(self, effects, flip_mask):
        k = len(effects)
        ids = [f"rs{j}" for j in range(k)]
        alleles = [NON_PALINDROMIC[j % len(NON_PALINDROMIC)] for j in range(k)]
        outcome = _dataset("o", ids, alleles, np.ones(k), np.full(k, 0.1), np.full(k, 0.5), 100)
        base = _dataset("e", ids, alleles, effects, np.full(k, 0.1), np.full(k, 0.5), 100)
        flipped_alleles = [
            (oa, ea) if flip else (ea, oa)
            for (ea, oa), flip in zip(alleles, flip_mask[:k])
        ]
        flipped_effects = [-e if flip else e for e, flip in zip(effects, flip_mask[:k])]
        flipped = _dataset("e", ids, flipped_alleles, flipped_effects, np.full(k, 0.1), np.full(k, 0.5), 100)
        p1 = mb.harmonize(outcome, [base])
        p2 = mb.harmonize(outcome, [flipped])
        np.testing.assert_array_equal(p1.B_hat, p2.B_hat)


class TestPartitionVariants:
    def _panel_with_pvals(self, pvals):
        m = len(pvals)
        return mb.HarmonizedPanel(
            variant_ids=np.array([f"rs{j}" for j in range(m)], dtype=object),
            B_hat=np.linspace(0.5, 2.0, m)[:, None],
            alpha_hat=np.zeros(m),
            SE_B=np.ones((m, 1)),
            SE_alpha=np.ones(m),
            n=np.array([1000, 1000]),
            overlap=None,
            pval_B=np.asarray(pvals, dtype=float)[:, None],
            pval_alpha=np.ones(m),
            trait_ids=("outcome", "exp1"),
        )

    def test_all_insignificant_errors(self):
        panel = self._panel_with_pvals([1.0, 1.0, 1.0])
        with pytest.raises(mb.InputError):
            mb.partition_variants(panel)

    def test_threshold_oracle(self):
        panel = self._panel_with_pvals([1e-9, 0.5, 0.03])
        sel = mb.partition_variants(panel)
        assert list(sel.iv_panel.variant_ids) == ["rs0"]
        assert list(sel.null_panel.variant_ids) == ["rs1"]

    def test_degenerate_thresholds(self):
        panel = self._panel_with_pvals([1e-9, 0.5, 0.03])
        with pytest.raises(mb.InputError):
            mb.partition_variants(panel, iv_pvalue=1.0, null_pvalue=1.0)

    def test_disjoint_union_subset(self):
        rng = np.random.default_rng(2)
        pv = rng.uniform(0, 1, 50)
        pv[:5] = 1e-10
        panel = self._panel_with_pvals(pv)
        sel = mb.partition_variants(panel, iv_pvalue=1e-8, null_pvalue=0.05)
        iv = set(sel.iv_panel.variant_ids)
        null = set(sel.null_panel.variant_ids)
        assert not iv & null
        assert (iv | null) <= set(panel.variant_ids)

    def test_rank_thinning(self):
        pv = np.full(10, 1e-10)
        pv[5:] = 0.5
        pv[9] = 0.5
        panel = self._panel_with_pvals(pv)
        sel = mb.partition_variants(panel, min_distance_rank=2)
        idx = [int(v[2:]) for v in sel.iv_panel.variant_ids]
        assert all(b - a >= 2 for a, b in zip(idx, idx[1:]))


class TestOverlapMatrix:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "overlap.tsv"
        path.write_text("trait\tout\te1\nout\t100\t40\ne1\t40\t200\n")
        N = mb.load_overlap_matrix(path, ("out", "e1"))
        np.testing.assert_array_equal(N, [[100, 40], [40, 200]])

    def test_reordering(self, tmp_path):
        path = tmp_path / "overlap.tsv"
        path.write_text("trait\te1\tout\ne1\t200\t40\nout\t40\t100\n")
        N = mb.load_overlap_matrix(path, ("out", "e1"))
        np.testing.assert_array_equal(N, [[100, 40], [40, 200]])

    def test_overlap_validated_in_harmonize(self):
        outcome = _dataset("out", ["rs1"], [("A", "G")], [0.1], [0.01], [0.5], 1000)
        expo = _dataset("exp", ["rs1"], [("A", "G")], [0.2], [0.02], [0.5], 2000)
        with pytest.raises(mb.InputError):
            mb.harmonize(outcome, [expo], overlap=np.array([[1000, 1500], [1500, 2000]]))
