"""Heteroscedasticity-robust mean testing for repeated-measures designs.

The test statistic is a quadratic form in the contrasted mean vector,
weighted by the Moore-Penrose pseudoinverse of the contrasted diagonal
variance matrix:

    Q = N * (T m)' (T D T)^+ (T m)

with m the stacked group/time/variable means and D the diagonal matrix of
scaled cell variances (N/n_i times the within-group variances).  Q is
scale-invariant and remains defined when group covariance matrices are
singular.  P-values come from resampling: B null datasets are generated
(parametrically from fitted group covariances, or by sign-flipping centered
subject vectors), Q is recomputed on each, and

    p = #{b : Q <= Q*_b} / B

with ties counted, which makes p conservative at the zero boundary.

Determinism contract: replicate b draws from a counter-based Philox stream
keyed by (seed, b) via numpy's SeedSequence spawn mechanism, so results are
reproducible bit-for-bit regardless of scheduling or thread count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, check_X_y

from .contrasts import Effect, HypothesisMatrix, hypothesis_matrix
from .dataset import RepeatedMeasuresDataset

__all__ = [
    "MomentEstimates",
    "MatsResult",
    "BootstrapResult",
    "SCHEMES",
    "estimate_moments",
    "pseudoinverse",
    "mats",
    "bootstrap_pvalue",
    "manova_rm",
    "MatsManova",
]

SCHEMES = ("parametric", "wild")
DEFAULT_RTOL = 1e-12


@dataclass(frozen=True)
class MomentEstimates:
    """First and second moments of a dataset in canonical ordering.

    ``mean_vector`` stacks the per-group mean subject vectors (length
    g*p*t).  ``group_covariances`` hold the (p*t, p*t) within-group
    covariance matrices with divisor n_i - 1.  ``variance_diagonal`` is the
    diagonal of the scaled variance matrix: entry (group i, time k,
    variable s) equals N/n_i times the corresponding cell variance.
    ``constant_flags`` marks cells whose within-group variance is zero.
    """

    mean_vector: np.ndarray
    group_covariances: tuple[np.ndarray, ...]
    variance_diagonal: np.ndarray
    n_total: int
    group_sizes: tuple[int, ...]
    constant_flags: np.ndarray


@dataclass(frozen=True)
class MatsResult:
    effect: Effect
    statistic: float
    pseudoinverse_rank: int


@dataclass(frozen=True)
class BootstrapResult:
    """A statistic with its resampled null distribution and p-value."""

    effect: Effect
    statistic: float
    replicates: np.ndarray
    p_value: float
    scheme: str
    seed: int
    n_boot: int

    def replicate_summary(self) -> dict[str, float]:
        q = np.quantile(self.replicates, [0.0, 0.25, 0.5, 0.75, 1.0])
        return {
            "min": float(q[0]),
            "q25": float(q[1]),
            "median": float(q[2]),
            "q75": float(q[3]),
            "max": float(q[4]),
        }

    def to_dict(self) -> dict:
        return {
            "effect": str(self.effect),
            "statistic": self.statistic,
            "p_value": self.p_value,
            "B": self.n_boot,
            "scheme": self.scheme,
            "seed": self.seed,
            "replicate_summary": self.replicate_summary(),
        }


def estimate_moments(ds: RepeatedMeasuresDataset) -> MomentEstimates:
    """Per-group means, covariances, and the scaled variance diagonal.

    Covariances use divisor n_i - 1.  Cells that are constant within a
    group get a zero variance entry and are flagged; downstream the
    pseudoinverse simply drops those directions.
    """
    n_total = ds.n_total
    means, diags, covs, flags = [], [], [], []
    for block, n_i in zip(ds.groups, ds.group_sizes):
        cov = np.atleast_2d(np.cov(block, rowvar=False, ddof=1))
        var = np.diag(cov).copy()
        var[var < 0] = 0.0
        means.append(block.mean(axis=0))
        covs.append(cov)
        diags.append((n_total / n_i) * var)
        flags.append(var <= 0)
    return MomentEstimates(
        mean_vector=np.concatenate(means),
        group_covariances=tuple(covs),
        variance_diagonal=np.concatenate(diags),
        n_total=n_total,
        group_sizes=ds.group_sizes,
        constant_flags=np.concatenate(flags),
    )


def pseudoinverse(matrix: np.ndarray, rtol: float = DEFAULT_RTOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric PSD matrix.

    Uses a symmetric eigendecomposition; eigenvalues at or below
    ``rtol * max_eigenvalue`` are treated as exact zeros.  Symmetry is
    required up to 1e-10 relative to the largest entry.
    """
    M = np.asarray(matrix, dtype=float)
    scale = max(1.0, np.max(np.abs(M))) if M.size else 1.0
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"square matrix required, got shape {M.shape}")
    if np.max(np.abs(M - M.T)) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    w, V = np.linalg.eigh((M + M.T) / 2)
    lam_max = w[-1] if w.size else 0.0
    if lam_max <= 0:
        return np.zeros_like(M)
    inv = np.where(w > rtol * lam_max, 1.0 / np.where(w > 0, w, 1.0), 0.0)
    return (V * inv) @ V.T


def _quadform(mean, diag, n_total, T, rtol):
    """N * (T mean)' (T diag(d) T)^+ (T mean) via one eigendecomposition."""
    v = T @ mean
    M = T @ (diag[:, None] * T)
    w, V = np.linalg.eigh((M + M.T) / 2)
    lam_max = w[-1]
    if lam_max <= 0:
        return 0.0, 0
    keep = w > rtol * lam_max
    coeffs = V.T @ v
    q = n_total * float(np.sum(coeffs[keep] ** 2 / w[keep]))
    return q, int(np.count_nonzero(keep))


def mats(
    moments: MomentEstimates,
    contrast: HypothesisMatrix,
    rtol: float = DEFAULT_RTOL,
) -> MatsResult:
    """Evaluate the test statistic for one contrast.

    Returns the statistic (always >= 0; exactly 0 when the contrasted mean
    vanishes) together with the numerical rank used in the pseudoinverse.
    Warns and reports 0 when the tested contrast carries no within-cell
    variance at all.
    """
    T = contrast.matrix
    m = moments.mean_vector
    if m.shape[0] != T.shape[0]:
        raise ValueError(
            f"dimension mismatch: contrast is {T.shape[0]}x{T.shape[0]}, "
            f"mean vector has length {m.shape[0]}"
        )
    statistic, rank = _quadform(m, moments.variance_diagonal, moments.n_total, T, rtol)
    if rank == 0:
        warnings.warn(
            f"no within-cell variance on tested contrast ({contrast.effect}); "
            "statistic reported as 0",
            stacklevel=2,
        )
    return MatsResult(effect=contrast.effect, statistic=statistic, pseudoinverse_rank=rank)


# -- bootstrap ----------------------------------------------------------------


def _replicate_rng(seed: int, b: int) -> np.random.Generator:
    """Counter-based stream for replicate b: Philox keyed by (seed, b)."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(b,)))
    )


def _psd_factor(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root, clipping negative eigenvalues at zero."""
    w, V = np.linalg.eigh((matrix + matrix.T) / 2)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _draw_seed() -> int:
    return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])


def _bootstrap_statistics(ds, moments, contrasts, n_boot, scheme, seed, rtol):
    """Null-statistic replicates, shape (n_boot, len(contrasts)).

    One resampled dataset per replicate is shared by all contrasts.  Group
    draws happen in group order within each replicate's private stream.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    n_total = moments.n_total
    sizes = moments.group_sizes
    if scheme == "parametric":
        factors = [_psd_factor(cov) for cov in moments.group_covariances]
    else:
        centered = [block - block.mean(axis=0) for block in ds.groups]
    matrices = [hm.matrix for hm in contrasts]
    out = np.empty((n_boot, len(matrices)))
    for b in range(n_boot):
        rng = _replicate_rng(seed, b)
        means, diags = [], []
        for i, n_i in enumerate(sizes):
            if scheme == "parametric":
                star = rng.standard_normal((n_i, factors[i].shape[0])) @ factors[i]
            else:
                signs = rng.integers(0, 2, size=n_i) * 2.0 - 1.0
                star = centered[i] * signs[:, None]
            means.append(star.mean(axis=0))
            diags.append((n_total / n_i) * star.var(axis=0, ddof=1))
        mean_star = np.concatenate(means)
        diag_star = np.concatenate(diags)
        for e, T in enumerate(matrices):
            out[b, e], _ = _quadform(mean_star, diag_star, n_total, T, rtol)
    return out


def _pvalue(statistic: float, replicates: np.ndarray) -> float:
    return float(np.count_nonzero(statistic <= replicates)) / replicates.shape[0]


def bootstrap_pvalue(
    ds: RepeatedMeasuresDataset,
    effect: Effect | str | HypothesisMatrix,
    n_boot: int = 1000,
    scheme: str = "parametric",
    seed: int | None = None,
    rtol: float = DEFAULT_RTOL,
) -> BootstrapResult:
    """Bootstrap p-value for a single effect.

    Parameters
    ----------
    ds : RepeatedMeasuresDataset
    effect : effect name or prebuilt contrast
    n_boot : number of bootstrap replicates (>= 1)
    scheme : ``"parametric"`` (draw from fitted mean-zero group normals) or
        ``"wild"`` (sign-flip centered subject vectors)
    seed : 64-bit integer; drawn from OS entropy and recorded when omitted
    rtol : relative eigenvalue cutoff for the pseudoinverse

    The p-value counts replicates at least as large as the observed
    statistic, ties included, so it takes values in {0, 1/B, ..., 1}.
    Fixed (seed, n_boot, scheme, data) give bit-identical results.
    """
    if n_boot < 1:
        raise ValueError(f"n_boot must be >= 1, got {n_boot}")
    if isinstance(effect, HypothesisMatrix):
        contrast = effect
    else:
        contrast = hypothesis_matrix(effect, ds.n_groups, ds.n_times, ds.n_variables)
    if seed is None:
        seed = _draw_seed()
    moments = estimate_moments(ds)
    observed = mats(moments, contrast, rtol=rtol)
    replicates = _bootstrap_statistics(
        ds, moments, [contrast], n_boot, scheme, seed, rtol
    )[:, 0]
    return BootstrapResult(
        effect=contrast.effect,
        statistic=observed.statistic,
        replicates=replicates,
        p_value=_pvalue(observed.statistic, replicates),
        scheme=scheme,
        seed=seed,
        n_boot=n_boot,
    )


def manova_rm(
    ds: RepeatedMeasuresDataset,
    n_boot: int = 1000,
    scheme: str = "parametric",
    seed: int | None = None,
    rtol: float = DEFAULT_RTOL,
) -> list[BootstrapResult]:
    """Joint group/time/interaction tests sharing one resampling pass.

    Each replicate dataset is generated once and all statistics are
    evaluated on it, halving the cost; each test still only uses its own
    statistic's null distribution.  For t = 1 only the group effect is
    testable and the returned list has a single entry.
    """
    if n_boot < 1:
        raise ValueError(f"n_boot must be >= 1, got {n_boot}")
    if seed is None:
        seed = _draw_seed()
    effects = [Effect.GROUP]
    if ds.n_times > 1:
        effects += [Effect.TIME, Effect.INTERACTION]
    contrasts = [
        hypothesis_matrix(e, ds.n_groups, ds.n_times, ds.n_variables) for e in effects
    ]
    moments = estimate_moments(ds)
    observed = [mats(moments, hm, rtol=rtol) for hm in contrasts]
    replicates = _bootstrap_statistics(
        ds, moments, contrasts, n_boot, scheme, seed, rtol
    )
    return [
        BootstrapResult(
            effect=hm.effect,
            statistic=obs.statistic,
            replicates=replicates[:, e],
            p_value=_pvalue(obs.statistic, replicates[:, e]),
            scheme=scheme,
            seed=seed,
            n_boot=n_boot,
        )
        for e, (hm, obs) in enumerate(zip(contrasts, observed))
    ]


class MatsManova(BaseEstimator):
    """Scikit-learn style front end for the bootstrap-calibrated tests.

    ``X`` is the (N, p*t) matrix of subject vectors in canonical time-major
    order and ``y`` the group labels; groups are taken in sorted label
    order.  After ``fit`` the per-effect results are available as
    ``results_``, ``statistic_``, and ``p_value_``.

    Parameters
    ----------
    n_timepoints : number of repeated measurements per variable
    n_boot : bootstrap replicates
    resampling : ``"parametric"`` or ``"wild"``
    seed : 64-bit seed; drawn at fit time and recorded when omitted
    """

    def __init__(self, n_timepoints=1, n_boot=1000, resampling="parametric", seed=None):
        self.n_timepoints = n_timepoints
        self.n_boot = n_boot
        self.resampling = resampling
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, ensure_min_samples=4)
        self.classes_ = np.unique(y)
        groups = [X[y == label] for label in self.classes_]
        ds = RepeatedMeasuresDataset.from_arrays(
            groups,
            n_times=self.n_timepoints,
            group_labels=[str(label) for label in self.classes_],
        )
        self.results_ = manova_rm(
            ds, n_boot=self.n_boot, scheme=self.resampling, seed=self.seed
        )
        self.statistic_ = {str(r.effect): r.statistic for r in self.results_}
        self.p_value_ = {str(r.effect): r.p_value for r in self.results_}
        return self

    def summary(self) -> list[dict]:
        check_is_fitted(self, "results_")
        return [r.to_dict() for r in self.results_]
