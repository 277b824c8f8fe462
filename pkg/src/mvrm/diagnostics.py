"""Assumption screening ahead of discriminant analysis.

Two checks are covered.  Covariance homogeneity is summarized by
generalized-variance indices (traces and log-determinants) and by the sorted
log-eigenvalues of each within-group covariance next to the pooled one,
ready for a scree comparison.  Multicollinearity is screened with scaled
condition indices and variance decomposition proportions: the subject-vector
columns (plus an intercept by default) are scaled to unit norm, and a large
condition index carrying two or more large proportions implicates a set of
near-dependent columns.  Flagged variables can then be removed greedily, one
variable at a time and always at every time point simultaneously, until the
flags clear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import RepeatedMeasuresDataset, drop_variable

__all__ = [
    "CovarianceSpectrum",
    "HomogeneityReport",
    "CollinearityFlag",
    "CollinearityReport",
    "homogeneity_report",
    "scree_data",
    "pairwise_covariance_blocks",
    "collinearity_report",
    "collinearity_from_design",
    "suggest_removals",
]

INDEX_THRESHOLD = 30.0
VDP_THRESHOLD = 0.3
INTERCEPT_LABEL = "intercept"


@dataclass(frozen=True)
class CovarianceSpectrum:
    """Trace, log-determinant, and sorted log-eigenvalues of one covariance.

    ``log_determinant`` is the sum of the log-eigenvalues, or None when the
    matrix is singular; non-positive eigenvalues appear as -inf entries in
    ``log_eigenvalues`` (kept in descending eigenvalue order).
    """

    label: str
    trace: float
    log_determinant: float | None
    log_eigenvalues: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "trace": self.trace,
            "log_determinant": self.log_determinant,
            "log_eigenvalues": [
                v if math.isfinite(v) else "-inf" for v in self.log_eigenvalues
            ],
        }


@dataclass(frozen=True)
class HomogeneityReport:
    groups: tuple[CovarianceSpectrum, ...]
    pooled: CovarianceSpectrum

    def to_dict(self) -> dict:
        return {
            "groups": [g.to_dict() for g in self.groups],
            "pooled": self.pooled.to_dict(),
        }


@dataclass(frozen=True)
class CollinearityFlag:
    """One large condition index with the columns it implicates."""

    condition_index: float
    row: int
    implicated: tuple[str, ...]
    exact: bool = False


@dataclass(frozen=True)
class CollinearityReport:
    """Scaled condition indices with their variance decomposition matrix.

    ``condition_indices`` are ascending (first entry 1 by construction; inf
    marks an exact dependency).  ``vdp`` row j holds the proportion of each
    column's coefficient variance attributed to singular direction j; every
    column of ``vdp`` sums to 1.  ``flags`` lists rows whose index exceeds
    ``index_threshold`` while at least two proportions exceed
    ``vdp_threshold``.
    """

    condition_indices: tuple[float, ...]
    vdp: np.ndarray
    column_labels: tuple[str, ...]
    flags: tuple[CollinearityFlag, ...]
    index_threshold: float
    vdp_threshold: float
    include_intercept: bool

    def to_dict(self) -> dict:
        return {
            "condition_indices": [
                v if math.isfinite(v) else "inf" for v in self.condition_indices
            ],
            "columns": list(self.column_labels),
            "vdp": self.vdp.tolist(),
            "flags": [
                {
                    "condition_index": f.condition_index
                    if math.isfinite(f.condition_index)
                    else "inf",
                    "row": f.row,
                    "implicated": list(f.implicated),
                    "exact_dependency": f.exact,
                }
                for f in self.flags
            ],
            "thresholds": {
                "condition_index": self.index_threshold,
                "vdp": self.vdp_threshold,
            },
            "include_intercept": self.include_intercept,
        }


def _spectrum(label: str, cov: np.ndarray) -> CovarianceSpectrum:
    eigenvalues = np.linalg.eigvalsh((cov + cov.T) / 2)[::-1]
    logs = tuple(math.log(v) if v > 0 else -math.inf for v in eigenvalues)
    singular = any(not math.isfinite(v) for v in logs)
    return CovarianceSpectrum(
        label=label,
        trace=float(np.trace(cov)),
        log_determinant=None if singular else float(sum(logs)),
        log_eigenvalues=logs,
    )


def _pooled_covariance_all(covariances, sizes) -> np.ndarray:
    weights = np.array([n - 1 for n in sizes], dtype=float)
    stacked = sum(w * c for w, c in zip(weights, covariances))
    return stacked / weights.sum()


def homogeneity_report(ds: RepeatedMeasuresDataset) -> HomogeneityReport:
    """Generalized-variance indices for each group and the pooled covariance."""
    if ds.n_groups < 2:
        raise ValueError("homogeneity comparison needs at least 2 groups")
    covariances = [
        np.atleast_2d(np.cov(block, rowvar=False, ddof=1)) for block in ds.groups
    ]
    pooled = _pooled_covariance_all(covariances, ds.group_sizes)
    return HomogeneityReport(
        groups=tuple(
            _spectrum(label, cov) for label, cov in zip(ds.group_labels, covariances)
        ),
        pooled=_spectrum("pooled", pooled),
    )


def scree_data(report: HomogeneityReport) -> list[dict]:
    """Long-format log-eigenvalue table for plotting: (g+1) * p*t rows."""
    rows = []
    for spectrum in (*report.groups, report.pooled):
        for i, value in enumerate(spectrum.log_eigenvalues, start=1):
            rows.append(
                {"index": i, "log_eigenvalue": value, "series": spectrum.label}
            )
    return rows


def pairwise_covariance_blocks(ds: RepeatedMeasuresDataset) -> list[dict]:
    """Per-group means and 2x2 covariance blocks for every cell pair.

    Plot-ready long table (one row per group and unordered cell pair); this
    is the data behind pairwise covariance-ellipse comparisons, which are
    left to external plotting.
    """
    labels = ds.column_labels()
    rows = []
    for label, block in zip(ds.group_labels, ds.groups):
        cov = np.atleast_2d(np.cov(block, rowvar=False, ddof=1))
        mean = block.mean(axis=0)
        for i in range(len(labels)):
            for j in range(i + 1, len(labels)):
                rows.append(
                    {
                        "group": label,
                        "x": labels[i],
                        "y": labels[j],
                        "mean_x": float(mean[i]),
                        "mean_y": float(mean[j]),
                        "var_x": float(cov[i, i]),
                        "var_y": float(cov[j, j]),
                        "cov_xy": float(cov[i, j]),
                    }
                )
    return rows


def collinearity_from_design(
    design: np.ndarray,
    column_labels,
    index_threshold: float = INDEX_THRESHOLD,
    vdp_threshold: float = VDP_THRESHOLD,
    include_intercept: bool = False,
) -> CollinearityReport:
    """Condition-index / variance-decomposition screen of a design matrix.

    Columns are scaled to unit Euclidean norm (so the result is invariant
    to per-column rescaling), then decomposed by SVD.  Condition index j is
    the largest singular value over the j-th; the proportion matrix entry
    (j, k) is column k's share of coefficient variance along direction j.
    A zero singular value (exact dependency) yields an infinite index and
    the implicated columns' full variance share.
    """
    X = np.asarray(design, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"design must be 2-D, got shape {X.shape}")
    n, m = X.shape
    labels = tuple(column_labels)
    if len(labels) != m:
        raise ValueError(f"{m} columns but {len(labels)} labels")
    if n <= m:
        raise ValueError(f"need more rows than columns, got {n} rows, {m} columns")
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        zero = [labels[k] for k in np.flatnonzero(norms == 0)]
        raise ValueError(f"zero-norm design column(s): {zero}")
    scaled = X / norms

    _, singular_values, vt = np.linalg.svd(scaled, full_matrices=False)
    V = vt.T  # rows: design columns, cols: singular directions
    # standard rank tolerance: anything below it is an exact dependency
    zero_tol = max(n, m) * np.finfo(float).eps * singular_values[0]
    zero_sv = singular_values <= zero_tol
    safe = np.where(zero_sv, 1.0, singular_values)
    indices = np.where(zero_sv, np.inf, singular_values[0] / safe)

    # phi[k, j] = V[k, j]^2 / s_j^2; column k's proportions normalize over j.
    vdp = np.zeros((m, m))
    phi = V**2 / safe**2
    for k in range(m):
        if np.any(zero_sv & (np.abs(V[k]) > 1e-12)):
            involved = zero_sv & (np.abs(V[k]) > 1e-12)
            vdp[involved, k] = 1.0 / np.count_nonzero(involved)
        else:
            finite = phi[k].copy()
            finite[zero_sv] = 0.0
            vdp[:, k] = finite / finite.sum()

    flags = []
    for j in range(m):
        exact = bool(zero_sv[j])
        if indices[j] > index_threshold or exact:
            above = np.flatnonzero(vdp[j] > vdp_threshold)
            if above.shape[0] >= 2:
                flags.append(
                    CollinearityFlag(
                        condition_index=float(indices[j]),
                        row=j,
                        implicated=tuple(labels[k] for k in above),
                        exact=exact,
                    )
                )
    return CollinearityReport(
        condition_indices=tuple(float(v) for v in indices),
        vdp=vdp,
        column_labels=labels,
        flags=tuple(flags),
        index_threshold=index_threshold,
        vdp_threshold=vdp_threshold,
        include_intercept=include_intercept,
    )


def collinearity_report(
    ds: RepeatedMeasuresDataset,
    include_intercept: bool = True,
    index_threshold: float = INDEX_THRESHOLD,
    vdp_threshold: float = VDP_THRESHOLD,
) -> CollinearityReport:
    """Collinearity screen of the p*t subject-vector columns of a dataset."""
    X, _ = ds.stacked()
    labels = ds.column_labels()
    if include_intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
        labels = [INTERCEPT_LABEL, *labels]
    return collinearity_from_design(
        X,
        labels,
        index_threshold=index_threshold,
        vdp_threshold=vdp_threshold,
        include_intercept=include_intercept,
    )


def _variable_of_column(label: str, ds: RepeatedMeasuresDataset) -> str | None:
    for var in ds.variable_labels:
        for time in ds.time_labels:
            if label == f"{var} ({time})":
                return var
    return None


def _implicated_variables(report, ds) -> set[str]:
    implicated = set()
    for flag in report.flags:
        for label in flag.implicated:
            var = _variable_of_column(label, ds)
            if var is not None:
                implicated.add(var)
    return implicated


def suggest_removals(
    report: CollinearityReport,
    ds: RepeatedMeasuresDataset,
    protected=(),
) -> list[str]:
    """Greedy variable-removal sequence that clears the collinearity flags.

    Repeatedly removes the unprotected variable carrying the largest summed
    variance proportion on flagged rows (aggregated over its time-point
    columns, since a variable can only leave at every time point at once),
    then recomputes the report.  Stops when no flags remain, when only
    protected variables stay implicated after at least one removal, or when
    a single variable is left.  Raises if removal is requested but every
    implicated variable is protected from the start.
    """
    protected = set(protected)
    unknown = protected - set(ds.variable_labels)
    if unknown:
        raise ValueError(f"protected variables not in dataset: {sorted(unknown)}")
    removals: list[str] = []
    current_ds = ds
    current_report = report
    for _ in range(ds.n_variables):
        if not current_report.flags:
            return removals
        implicated = _implicated_variables(current_report, current_ds)
        removable = implicated - protected
        if not removable:
            if removals:
                return removals
            raise ValueError(
                "every implicated variable is protected "
                f"({sorted(implicated & protected)}); cannot remove collinearity"
            )
        if current_ds.n_variables < 2:
            return removals
        flagged_rows = [flag.row for flag in current_report.flags]
        offset = 1 if current_report.include_intercept else 0
        p = current_ds.n_variables
        scores = {}
        for var_idx, var in enumerate(current_ds.variable_labels):
            if var not in removable:
                continue
            cols = [
                offset + k * p + var_idx for k in range(current_ds.n_times)
            ]
            scores[var] = current_report.vdp[np.ix_(flagged_rows, cols)].sum()
        victim = max(scores, key=lambda v: (scores[v], v))
        removals.append(victim)
        current_ds = drop_variable(current_ds, victim)
        current_report = collinearity_report(
            current_ds,
            include_intercept=current_report.include_intercept,
            index_threshold=current_report.index_threshold,
            vdp_threshold=current_report.vdp_threshold,
        )
    return removals
