"""Two-group descriptive discriminant analysis on repeated-measures vectors.

The discriminant direction is the solution of

    pooled_cov @ coef = mean_1 - mean_2

which maximizes the ratio of between- to within-group variation over all
linear combinations of the p*t cells.  Standardized coefficients multiply
each raw coefficient by its pooled within-group standard deviation; their
absolute values rank the cells by contribution to group separation.  The
global sign is an artifact of group order and carries no meaning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dataset import RepeatedMeasuresDataset
from .inference import estimate_moments

__all__ = [
    "IllConditionedError",
    "DfcEntry",
    "DfcTable",
    "pooled_covariance",
    "raw_dfc",
    "standardized_dfc",
    "discriminant_scores",
    "dfc_table",
    "FisherDiscriminant",
]

CONDITION_LIMIT = 1e12
SAMPLES_PER_CELL = 20  # minimum N/(p*t) before coefficient estimates get shaky


class IllConditionedError(ValueError):
    """Pooled covariance too close to singular for a trustworthy solve."""


@dataclass(frozen=True)
class DfcEntry:
    variable: str
    time: str
    raw: float
    pooled_sd: float
    standardized: float

    @property
    def label(self) -> str:
        return f"{self.variable} ({self.time})"


@dataclass(frozen=True)
class DfcTable:
    """Discriminant coefficients per cell, ranked by |standardized| value.

    ``entries`` follow canonical (time-major) cell order; ``ranking`` is the
    permutation listing entry indices from most to least important, ties
    broken by canonical order.  ``group_order`` records the two group
    labels whose mean difference fixed the sign.
    """

    entries: tuple[DfcEntry, ...]
    ranking: tuple[int, ...]
    group_order: tuple[str, str]

    def ranked_entries(self) -> list[DfcEntry]:
        return [self.entries[i] for i in self.ranking]

    def to_rows(self) -> list[dict]:
        rank_of = {entry_idx: pos + 1 for pos, entry_idx in enumerate(self.ranking)}
        return [
            {
                "variable": e.variable,
                "time": e.time,
                "raw": e.raw,
                "pooled_sd": e.pooled_sd,
                "standardized": e.standardized,
                "rank": rank_of[i],
            }
            for i, e in enumerate(self.entries)
        ]

    def to_dict(self) -> dict:
        return {
            "group_order": list(self.group_order),
            "entries": self.to_rows(),
        }


def pooled_covariance(
    s1: np.ndarray, s2: np.ndarray, n1: int, n2: int
) -> np.ndarray:
    """Degrees-of-freedom weighted average of two covariance matrices."""
    if n1 < 2 or n2 < 2:
        raise ValueError(f"both group sizes must be >= 2, got {n1} and {n2}")
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if s1.shape != s2.shape:
        raise ValueError(f"shape mismatch: {s1.shape} vs {s2.shape}")
    return ((n1 - 1) * s1 + (n2 - 1) * s2) / (n1 + n2 - 2)


def _check_condition(pooled: np.ndarray, limit: float) -> None:
    eigenvalues = np.linalg.eigvalsh((pooled + pooled.T) / 2)
    lam_min, lam_max = eigenvalues[0], eigenvalues[-1]
    if lam_min <= 0 or lam_max / lam_min > limit:
        cond = np.inf if lam_min <= 0 else lam_max / lam_min
        raise IllConditionedError(
            f"pooled covariance condition number {cond:.3g} exceeds "
            f"{limit:.0e}; run the collinearity diagnostics and "
            "remove near-dependent variables before computing coefficients"
        )


def raw_dfc(
    pooled: np.ndarray,
    mean1: np.ndarray,
    mean2: np.ndarray,
    condition_limit: float = CONDITION_LIMIT,
) -> np.ndarray:
    """Solve pooled @ coef = mean1 - mean2 for the discriminant direction.

    Uses a Cholesky solve with iterative refinement; refuses (rather than
    regularizes) when the pooled covariance condition number exceeds
    ``condition_limit`` or the residual cannot be brought below 1e-8
    relative to the mean difference.
    """
    pooled = np.asarray(pooled, dtype=float)
    delta = np.asarray(mean1, dtype=float) - np.asarray(mean2, dtype=float)
    _check_condition(pooled, condition_limit)
    factor = scipy.linalg.cho_factor((pooled + pooled.T) / 2)
    coef = scipy.linalg.cho_solve(factor, delta)
    target = 1e-8 * np.linalg.norm(delta)
    for _ in range(2):
        residual = delta - pooled @ coef
        if np.linalg.norm(residual) <= target:
            break
        coef = coef + scipy.linalg.cho_solve(factor, residual)
    if np.linalg.norm(delta - pooled @ coef) > target:
        raise IllConditionedError(
            "discriminant solve did not reach the required residual; the "
            "pooled covariance is numerically too ill-conditioned"
        )
    return coef


def standardized_dfc(raw: np.ndarray, pooled: np.ndarray) -> np.ndarray:
    """Scale raw coefficients by their pooled within-group SDs (unit-free)."""
    variances = np.diag(np.asarray(pooled, dtype=float))
    if np.any(variances <= 0):
        bad = np.flatnonzero(variances <= 0)
        raise ValueError(
            f"constant cell(s) at column index {bad.tolist()}: pooled variance "
            "must be positive to standardize"
        )
    return np.asarray(raw, dtype=float) * np.sqrt(variances)


def discriminant_scores(
    ds: RepeatedMeasuresDataset, coef: np.ndarray
) -> dict[str, np.ndarray]:
    """Project every subject onto the discriminant direction, by group."""
    coef = np.asarray(coef, dtype=float)
    width = ds.n_variables * ds.n_times
    if coef.shape != (width,):
        raise ValueError(f"coefficient length {coef.shape} does not match p*t = {width}")
    return {
        label: block @ coef for label, block in zip(ds.group_labels, ds.groups)
    }


def dfc_table(ds: RepeatedMeasuresDataset) -> DfcTable:
    """Full coefficient pipeline for a two-group dataset.

    Estimates moments, pools the two covariance matrices, solves for raw
    coefficients, standardizes them, and ranks cells by absolute
    standardized value (stable ties).  Warns when the sample is smaller
    than 20 subjects per cell.
    """
    if ds.n_groups != 2:
        raise ValueError(
            "descriptive discriminant analysis is defined for exactly two "
            f"groups; got {ds.n_groups}"
        )
    if ds.n_total / (ds.n_variables * ds.n_times) < SAMPLES_PER_CELL:
        warnings.warn(
            f"sample-size ratio N/(p*t) = {ds.n_total / (ds.n_variables * ds.n_times):.1f} "
            f"is below {SAMPLES_PER_CELL}; coefficient estimates may be unstable",
            stacklevel=2,
        )
    moments = estimate_moments(ds)
    n1, n2 = ds.group_sizes
    pooled = pooled_covariance(*moments.group_covariances, n1, n2)
    width = ds.n_variables * ds.n_times
    raw = raw_dfc(pooled, moments.mean_vector[:width], moments.mean_vector[width:])
    standardized = standardized_dfc(raw, pooled)
    pooled_sd = np.sqrt(np.diag(pooled))
    p = ds.n_variables
    entries = tuple(
        DfcEntry(
            variable=ds.variable_labels[idx % p],
            time=ds.time_labels[idx // p],
            raw=float(raw[idx]),
            pooled_sd=float(pooled_sd[idx]),
            standardized=float(standardized[idx]),
        )
        for idx in range(width)
    )
    ranking = tuple(np.argsort(-np.abs(standardized), kind="stable").tolist())
    return DfcTable(entries=entries, ranking=ranking, group_order=ds.group_labels)


class FisherDiscriminant(BaseEstimator, TransformerMixin):
    """Descriptive two-class discriminant as a scikit-learn transformer.

    ``fit(X, y)`` expects subject vectors and exactly two class labels;
    ``transform`` projects onto the fitted discriminant direction.  This is
    the descriptive variant: it ranks features by their standardized
    coefficients and deliberately offers no ``predict``.

    Attributes
    ----------
    classes_ : the two class labels in sorted order (sign convention:
        first minus second)
    means_ : (2, n_features) class means
    pooled_covariance_ : (n_features, n_features)
    raw_coef_, standardized_coef_ : (n_features,) coefficient vectors
    """

    def __init__(self, condition_limit=CONDITION_LIMIT):
        self.condition_limit = condition_limit

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, ensure_min_samples=4)
        self.classes_ = np.unique(y)
        if self.classes_.shape[0] != 2:
            raise ValueError(
                f"exactly two classes required, got {self.classes_.shape[0]}"
            )
        blocks = [X[y == label] for label in self.classes_]
        sizes = [block.shape[0] for block in blocks]
        if min(sizes) < 2:
            raise ValueError("each class needs at least 2 samples")
        if X.shape[0] / X.shape[1] < SAMPLES_PER_CELL:
            warnings.warn(
                f"sample-size ratio N/features = {X.shape[0] / X.shape[1]:.1f} is "
                f"below {SAMPLES_PER_CELL}; coefficient estimates may be unstable",
                stacklevel=2,
            )
        covariances = [
            np.atleast_2d(np.cov(block, rowvar=False, ddof=1)) for block in blocks
        ]
        self.means_ = np.vstack([block.mean(axis=0) for block in blocks])
        self.pooled_covariance_ = pooled_covariance(*covariances, *sizes)
        self.raw_coef_ = raw_dfc(
            self.pooled_covariance_,
            self.means_[0],
            self.means_[1],
            condition_limit=self.condition_limit,
        )
        self.standardized_coef_ = standardized_dfc(self.raw_coef_, self.pooled_covariance_)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "raw_coef_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return (X @ self.raw_coef_)[:, None]
