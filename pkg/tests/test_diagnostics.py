import math

import numpy as np
import pytest

from mvrm import (
    RepeatedMeasuresDataset,
    collinearity_from_design,
    collinearity_report,
    homogeneity_report,
    pairwise_covariance_blocks,
    scree_data,
    suggest_removals,
)
from mvrm.diagnostics import _spectrum


def naive_determinant(M):
    """Cofactor expansion along the first row; fine for the small sizes here."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if n == 1:
        return M[0, 0]
    total = 0.0
    for j in range(n):
        minor = np.delete(np.delete(M, 0, axis=0), j, axis=1)
        total += (-1.0) ** j * M[0, j] * naive_determinant(minor)
    return total


def random_psd_dataset(rng, width=3, sizes=(20, 25)):
    blocks = []
    for n in sizes:
        root = rng.normal(size=(width, width)) + np.eye(width)
        blocks.append(rng.normal(size=(n, width)) @ root)
    return RepeatedMeasuresDataset.from_arrays(blocks, n_times=1)


class TestHomogeneityReport:
    def test_diagonal_spectrum_example(self):
        spectrum_info = _spectrum("d", np.diag([1.0, 2.0, 3.0]))
        assert spectrum_info.trace == pytest.approx(6.0)
        assert spectrum_info.log_determinant == pytest.approx(math.log(6.0))
        np.testing.assert_allclose(
            spectrum_info.log_eigenvalues, [math.log(3.0), math.log(2.0), 0.0], atol=1e-12
        )

    def test_identity_spectrum(self):
        spectrum_info = _spectrum("i", np.eye(4))
        assert spectrum_info.trace == pytest.approx(4.0)
        assert spectrum_info.log_determinant == pytest.approx(0.0, abs=1e-12)

    def test_singular_matrix_gets_markers(self):
        spectrum_info = _spectrum("s", np.diag([1.0, 0.0]))
        assert spectrum_info.log_determinant is None
        assert spectrum_info.log_eigenvalues[-1] == -math.inf
        assert spectrum_info.to_dict()["log_eigenvalues"][-1] == "-inf"

    def test_trace_and_logdet_match_naive_oracle(self):
        rng = np.random.default_rng(101)
        for width in (2, 3, 4):
            ds = random_psd_dataset(rng, width=width)
            report = homogeneity_report(ds)
            for spectrum, block in zip(report.groups, ds.groups):
                cov = np.cov(block, rowvar=False, ddof=1)
                assert spectrum.trace == pytest.approx(
                    float(np.sum(np.diag(cov))), abs=1e-10
                )
                assert spectrum.log_determinant == pytest.approx(
                    math.log(naive_determinant(cov)), abs=1e-8
                )

    def test_logdet_is_sum_of_log_eigenvalues(self):
        rng = np.random.default_rng(102)
        ds = random_psd_dataset(rng, width=4)
        report = homogeneity_report(ds)
        for spectrum in (*report.groups, report.pooled):
            assert spectrum.log_determinant == pytest.approx(
                sum(spectrum.log_eigenvalues), abs=1e-8
            )

    def test_pooled_matches_two_group_formula(self):
        rng = np.random.default_rng(103)
        ds = random_psd_dataset(rng, sizes=(12, 30))
        report = homogeneity_report(ds)
        S1 = np.cov(ds.groups[0], rowvar=False, ddof=1)
        S2 = np.cov(ds.groups[1], rowvar=False, ddof=1)
        pooled = (11 * S1 + 29 * S2) / 40
        assert report.pooled.trace == pytest.approx(float(np.trace(pooled)), abs=1e-10)

    def test_single_group_rejected(self):
        ds = RepeatedMeasuresDataset.from_arrays([np.eye(3)], n_times=1)
        with pytest.raises(ValueError, match="2 groups"):
            homogeneity_report(ds)


class TestScreeData:
    def test_row_count_and_series(self):
        rng = np.random.default_rng(104)
        ds = random_psd_dataset(rng, width=2)
        rows = scree_data(homogeneity_report(ds))
        assert len(rows) == (ds.n_groups + 1) * 2
        assert {row["series"] for row in rows} == {"g1", "g2", "pooled"}

    def test_values_nonincreasing_within_series(self):
        rng = np.random.default_rng(105)
        rows = scree_data(homogeneity_report(random_psd_dataset(rng, width=4)))
        by_series = {}
        for row in rows:
            by_series.setdefault(row["series"], []).append(row["log_eigenvalue"])
        for values in by_series.values():
            assert all(a >= b for a, b in zip(values, values[1:]))

    def test_equal_group_covariances_match_pooled_series(self):
        rng = np.random.default_rng(106)
        block = rng.normal(size=(30, 3))
        ds = RepeatedMeasuresDataset.from_arrays([block, block.copy()], n_times=1)
        rows = scree_data(homogeneity_report(ds))
        series = {}
        for row in rows:
            series.setdefault(row["series"], []).append(row["log_eigenvalue"])
        np.testing.assert_allclose(series["g1"], series["pooled"], atol=1e-10)
        np.testing.assert_allclose(series["g2"], series["pooled"], atol=1e-10)


class TestPairwiseCovarianceBlocks:
    def test_one_row_per_group_and_pair(self):
        rng = np.random.default_rng(119)
        ds = random_psd_dataset(rng, width=4)
        rows = pairwise_covariance_blocks(ds)
        assert len(rows) == ds.n_groups * (4 * 3 // 2)

    def test_entries_match_sample_covariance(self):
        rng = np.random.default_rng(120)
        ds = random_psd_dataset(rng, width=3)
        cov = np.cov(ds.groups[0], rowvar=False, ddof=1)
        mean = ds.groups[0].mean(axis=0)
        labels = ds.column_labels()
        first = pairwise_covariance_blocks(ds)[0]
        assert first["group"] == "g1"
        assert (first["x"], first["y"]) == (labels[0], labels[1])
        assert first["cov_xy"] == pytest.approx(cov[0, 1])
        assert first["var_x"] == pytest.approx(cov[0, 0])
        assert first["mean_y"] == pytest.approx(mean[1])


class TestCollinearityFromDesign:
    def test_orthonormal_design_is_perfectly_conditioned(self):
        rng = np.random.default_rng(107)
        Q, _ = np.linalg.qr(rng.normal(size=(40, 5)))
        report = collinearity_from_design(Q, [f"c{i}" for i in range(5)])
        np.testing.assert_allclose(report.condition_indices, 1.0, atol=1e-10)
        assert report.flags == ()

    def test_vdp_columns_sum_to_one_on_random_designs(self):
        rng = np.random.default_rng(108)
        for _ in range(20):
            n, m = int(rng.integers(10, 60)), int(rng.integers(2, 7))
            X = rng.normal(size=(n, m))
            report = collinearity_from_design(X, [f"c{i}" for i in range(m)])
            np.testing.assert_allclose(report.vdp.sum(axis=0), 1.0, atol=1e-8)

    def test_matches_eigendecomposition_oracle(self):
        # independent route: singular values and right singular vectors from
        # the eigendecomposition of X'X on the unit-norm-scaled design
        rng = np.random.default_rng(109)
        X = rng.normal(size=(30, 4))
        # mild near-dependency: strong enough to dominate the spectrum but
        # large enough that the X'X eigenvalue route keeps full accuracy
        X[:, 3] = X[:, 0] + 1e-3 * rng.normal(size=30)
        labels = [f"c{i}" for i in range(4)]
        report = collinearity_from_design(X, labels)

        scaled = X / np.linalg.norm(X, axis=0)
        eigenvalues, vectors = np.linalg.eigh(scaled.T @ scaled)
        order = np.argsort(eigenvalues)[::-1]
        singular = np.sqrt(np.clip(eigenvalues[order], 0, None))
        V = vectors[:, order]
        expected_indices = singular[0] / singular
        phi = V**2 / singular**2
        expected_vdp = (phi / phi.sum(axis=1, keepdims=True)).T
        np.testing.assert_allclose(
            report.condition_indices, expected_indices, rtol=1e-6
        )
        np.testing.assert_allclose(report.vdp, expected_vdp, atol=1e-6)

    def test_condition_indices_invariant_to_column_rescaling(self):
        rng = np.random.default_rng(110)
        X = rng.normal(size=(25, 4))
        scales = rng.uniform(0.01, 100.0, size=4)
        a = collinearity_from_design(X, list("abcd"))
        b = collinearity_from_design(X * scales, list("abcd"))
        np.testing.assert_allclose(
            a.condition_indices, b.condition_indices, rtol=1e-8
        )
        np.testing.assert_allclose(a.vdp, b.vdp, atol=1e-8)

    def test_exact_duplicate_column_marks_infinite_dependency(self):
        rng = np.random.default_rng(111)
        x = rng.normal(size=20)
        X = np.column_stack([x, x, rng.normal(size=20)])
        report = collinearity_from_design(X, ["a", "b", "c"])
        assert math.isinf(report.condition_indices[-1])
        exact = [f for f in report.flags if f.exact]
        assert len(exact) == 1
        assert set(exact[0].implicated) == {"a", "b"}
        np.testing.assert_allclose(report.vdp.sum(axis=0), 1.0, atol=1e-8)

    def test_more_columns_than_rows_rejected(self):
        with pytest.raises(ValueError, match="more rows"):
            collinearity_from_design(np.ones((3, 3)), list("abc"))

    def test_zero_norm_column_rejected(self):
        X = np.column_stack([np.zeros(10), np.ones(10)])
        with pytest.raises(ValueError, match="zero-norm"):
            collinearity_from_design(X, ["a", "b"])


class TestCollinearityReport:
    def test_planted_near_dependency_is_flagged(self):
        rng = np.random.default_rng(112)
        n = 40
        x1 = rng.normal(size=n)
        x2 = x1 + 1e-6 * rng.normal(size=n)
        x3 = rng.normal(size=n)
        X = np.column_stack([x1, x2, x3])
        ds = RepeatedMeasuresDataset.from_arrays([X[:20], X[20:]], n_times=1)
        report = collinearity_report(ds)
        assert report.include_intercept
        assert report.column_labels[0] == "intercept"
        assert len(report.flags) >= 1
        top = report.flags[-1]
        assert top.condition_index > 30
        assert {"x1 (1)", "x2 (1)"} <= set(top.implicated)
        row = report.vdp[top.row]
        assert row[report.column_labels.index("x1 (1)")] > 0.3
        assert row[report.column_labels.index("x2 (1)")] > 0.3

    def test_intercept_can_be_excluded(self):
        rng = np.random.default_rng(113)
        ds = random_psd_dataset(rng)
        report = collinearity_report(ds, include_intercept=False)
        assert "intercept" not in report.column_labels
        assert len(report.column_labels) == 3


def collinear_triplet_dataset(rng, n_per_group=60, eps=0.01, n_times=2):
    """Three near-identical 'quality of life' style variables plus one
    independent variable, repeated at each time point."""
    rows = []
    for _ in range(2):
        per_time = []
        for _k in range(n_times):
            latent = rng.normal(size=n_per_group)
            q1 = latent + eps * rng.normal(size=n_per_group)
            q2 = latent + eps * rng.normal(size=n_per_group)
            q3 = latent + eps * rng.normal(size=n_per_group)
            w = rng.normal(size=n_per_group)
            per_time.append(np.column_stack([q1, q2, q3, w]))
        rows.append(np.hstack(per_time))
    return RepeatedMeasuresDataset.from_arrays(
        rows, n_times=n_times, variable_labels=("q1", "q2", "q3", "w")
    )


class TestSuggestRemovals:
    def test_clears_triplet_while_respecting_protection(self):
        rng = np.random.default_rng(114)
        ds = collinear_triplet_dataset(rng)
        report = collinearity_report(ds)
        assert report.flags
        removals = suggest_removals(report, ds, protected={"q3"})
        assert len(removals) >= 2
        assert set(removals) <= {"q1", "q2"}
        remaining = ds
        from mvrm import drop_variable

        for variable in removals:
            remaining = drop_variable(remaining, variable)
        assert collinearity_report(remaining).flags == ()

    def test_unflagged_report_returns_empty_sequence(self):
        rng = np.random.default_rng(115)
        ds = random_psd_dataset(rng)
        report = collinearity_report(ds)
        assert report.flags == ()
        assert suggest_removals(report, ds) == []

    def test_all_implicated_protected_is_an_error(self):
        rng = np.random.default_rng(116)
        n = 30
        x1 = rng.normal(size=n)
        x2 = x1 + 1e-7 * rng.normal(size=n)
        X = np.column_stack([x1, x2, rng.normal(size=n)])
        ds = RepeatedMeasuresDataset.from_arrays([X[:15], X[15:]], n_times=1)
        report = collinearity_report(ds)
        assert report.flags
        with pytest.raises(ValueError, match="protected"):
            suggest_removals(report, ds, protected={"x1", "x2"})

    def test_unknown_protected_variable_is_an_error(self):
        rng = np.random.default_rng(117)
        ds = random_psd_dataset(rng)
        with pytest.raises(ValueError, match="not in dataset"):
            suggest_removals(collinearity_report(ds), ds, protected={"nope"})

    def test_terminates_within_variable_count_and_keeps_protected(self):
        rng = np.random.default_rng(118)
        ds = collinear_triplet_dataset(rng, eps=0.005)
        report = collinearity_report(ds)
        removals = suggest_removals(report, ds, protected={"w"})
        assert len(removals) <= ds.n_variables
        assert "w" not in removals
