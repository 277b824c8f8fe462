"""Synthetic repeated-measures data and Monte-Carlo error-rate experiments.

Subjects are drawn as mean plus a linear image of iid standardized noise,
X = mu_i + L_i z, where L_i is the symmetric PSD square root of the group
covariance.  Besides plain normal noise, a standardized log-normal family
(exp(Z) recentered and scaled to unit variance) exercises skewed data.
Experiments are deterministic: repetition r derives its data and bootstrap
seeds from the experiment seed via fixed spawn keys, so results do not
depend on scheduling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .contrasts import Effect
from .dataset import RepeatedMeasuresDataset
from .inference import _psd_factor, manova_rm

__all__ = [
    "ScenarioConfig",
    "NOISE_FAMILIES",
    "compound_symmetry",
    "ar1_exchangeable",
    "generate",
    "ExperimentResult",
    "run_experiment",
    "rejection_rate",
]

NOISE_FAMILIES = ("normal", "lognormal")


def compound_symmetry(dim: int, rho: float, variance: float = 1.0) -> np.ndarray:
    """Exchangeable covariance: equal variance, equal pairwise correlation."""
    if dim > 1 and not -1.0 / (dim - 1) <= rho <= 1.0:
        raise ValueError(f"rho={rho} not PSD-feasible for dimension {dim}")
    return variance * ((1 - rho) * np.eye(dim) + rho * np.ones((dim, dim)))


def ar1_exchangeable(
    n_times: int,
    n_variables: int,
    rho_time: float,
    rho_var: float,
    variance: float = 1.0,
) -> np.ndarray:
    """AR(1) correlation over time crossed with exchangeable over variables.

    Builds the (p*t, p*t) covariance in canonical time-major order without
    hand-entering entries; both factors are PSD so the product is too.
    """
    if not -1.0 < rho_time < 1.0:
        raise ValueError(f"rho_time={rho_time} must be in (-1, 1)")
    idx = np.arange(n_times)
    time_corr = rho_time ** np.abs(idx[:, None] - idx[None, :])
    var_corr = compound_symmetry(n_variables, rho_var, 1.0)
    return variance * np.kron(time_corr, var_corr)


def _as_covariance(entry, n_times: int, n_variables: int) -> np.ndarray:
    """Accept a matrix or a structured-generator dict from a scenario file."""
    if isinstance(entry, dict):
        kind = entry.get("kind")
        if kind == "compound_symmetry":
            return compound_symmetry(
                n_times * n_variables, entry["rho"], entry.get("variance", 1.0)
            )
        if kind == "ar1_exchangeable":
            return ar1_exchangeable(
                n_times,
                n_variables,
                entry["rho_time"],
                entry["rho_var"],
                entry.get("variance", 1.0),
            )
        raise ValueError(f"unknown covariance kind {kind!r}")
    return np.asarray(entry, dtype=float)


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully specified data-generating scenario.

    ``means[i]`` (length p*t, canonical order) and ``covariances[i]``
    ((p*t, p*t), symmetric PSD) describe group i; ``noise`` picks the
    standardized error family.  The same config and seed always generate
    the same dataset.
    """

    group_sizes: tuple[int, ...]
    n_times: int
    n_variables: int
    means: tuple[np.ndarray, ...]
    covariances: tuple[np.ndarray, ...]
    noise: str = "normal"
    seed: int = 0

    def __post_init__(self):
        width = self.n_times * self.n_variables
        if self.noise not in NOISE_FAMILIES:
            raise ValueError(f"noise must be one of {NOISE_FAMILIES}, got {self.noise!r}")
        if len(self.means) != len(self.group_sizes) or len(self.covariances) != len(
            self.group_sizes
        ):
            raise ValueError("means and covariances must match the number of groups")
        if any(n < 2 for n in self.group_sizes):
            raise ValueError(f"all group sizes must be >= 2, got {self.group_sizes}")
        means = tuple(np.asarray(m, dtype=float) for m in self.means)
        covs = tuple(np.asarray(c, dtype=float) for c in self.covariances)
        for i, (m, c) in enumerate(zip(means, covs)):
            if m.shape != (width,):
                raise ValueError(f"group {i}: mean must have length {width}, got {m.shape}")
            if c.shape != (width, width):
                raise ValueError(f"group {i}: covariance must be {width}x{width}")
            if np.max(np.abs(c - c.T)) > 1e-10 * max(1.0, np.max(np.abs(c))):
                raise ValueError(f"group {i}: covariance not symmetric")
            eigenvalues = np.linalg.eigvalsh((c + c.T) / 2)
            if eigenvalues[0] < -1e-10 * max(1.0, np.trace(c)):
                raise ValueError(f"group {i}: covariance not positive semi-definite")
        object.__setattr__(self, "group_sizes", tuple(int(n) for n in self.group_sizes))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)

    @classmethod
    def from_json(cls, source) -> "ScenarioConfig":
        if isinstance(source, (str, Path)):
            raw = json.loads(Path(source).read_text())
        elif isinstance(source, dict):
            raw = source
        else:
            raw = json.load(source)
        t = int(raw["n_times"])
        p = int(raw["n_variables"])
        return cls(
            group_sizes=tuple(int(n) for n in raw["group_sizes"]),
            n_times=t,
            n_variables=p,
            means=tuple(np.asarray(m, dtype=float) for m in raw["means"]),
            covariances=tuple(_as_covariance(c, t, p) for c in raw["covariances"]),
            noise=raw.get("noise", "normal"),
            seed=int(raw.get("seed", 0)),
        )


# standardized log-normal: exp(Z) has mean e^(1/2) and variance e^2 - e
_LOGNORMAL_MEAN = math.exp(0.5)
_LOGNORMAL_SD = math.sqrt(math.exp(2.0) - math.e)


def _standardized_noise(rng: np.random.Generator, shape, family: str) -> np.ndarray:
    z = rng.standard_normal(shape)
    if family == "normal":
        return z
    return (np.exp(z) - _LOGNORMAL_MEAN) / _LOGNORMAL_SD


def generate(config: ScenarioConfig) -> RepeatedMeasuresDataset:
    """Draw one dataset from the scenario, deterministically in its seed."""
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=config.seed))
    )
    width = config.n_times * config.n_variables
    blocks = []
    for n_i, mean, cov in zip(config.group_sizes, config.means, config.covariances):
        factor = _psd_factor(cov)
        z = _standardized_noise(rng, (n_i, width), config.noise)
        blocks.append(mean + z @ factor)
    return RepeatedMeasuresDataset.from_arrays(blocks, n_times=config.n_times)


def _derive_seed(seed: int, *key: int) -> int:
    """Frozen seed derivation: SeedSequence spawn keys hashed to a uint64."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentResult:
    """Per-repetition statistics and p-values from a Monte-Carlo run."""

    effects: tuple[str, ...]
    statistics: np.ndarray  # (reps, n_effects)
    p_values: np.ndarray  # (reps, n_effects)
    data_seeds: tuple[int, ...]
    boot_seeds: tuple[int, ...]
    n_boot: int
    scheme: str
    seed: int

    def p_values_for(self, effect) -> np.ndarray:
        return self.p_values[:, self.effects.index(str(Effect(effect)))]

    def rejection_rate(self, effect, alpha: float) -> tuple[float, tuple[float, float]]:
        """Empirical rejection rate with a 99% normal-approximation interval."""
        p = self.p_values_for(effect)
        rate = float(np.mean(p <= alpha))
        half = norm.ppf(0.995) * math.sqrt(max(rate * (1 - rate), 0.0) / p.shape[0])
        return rate, (max(0.0, rate - half), min(1.0, rate + half))

    def to_rows(self) -> list[dict]:
        rows = []
        for r in range(self.p_values.shape[0]):
            row = {
                "rep": r,
                "data_seed": self.data_seeds[r],
                "boot_seed": self.boot_seeds[r],
            }
            for e, effect in enumerate(self.effects):
                row[f"statistic_{effect}"] = float(self.statistics[r, e])
                row[f"p_{effect}"] = float(self.p_values[r, e])
            rows.append(row)
        return rows

    def summary(self, alpha: float) -> dict:
        out = {
            "reps": int(self.p_values.shape[0]),
            "B": self.n_boot,
            "scheme": self.scheme,
            "seed": self.seed,
            "alpha": alpha,
            "effects": {},
        }
        for effect in self.effects:
            rate, (lo, hi) = self.rejection_rate(effect, alpha)
            out["effects"][effect] = {
                "rejection_rate": rate,
                "ci99": [lo, hi],
            }
        return out


def run_experiment(
    config: ScenarioConfig,
    reps: int,
    n_boot: int = 500,
    scheme: str = "parametric",
    seed: int = 0,
) -> ExperimentResult:
    """Run ``reps`` independent generate-then-test cycles.

    Repetition r uses data seed derived from (seed, r, 0) and bootstrap
    seed from (seed, r, 1); the experiment is reproducible bit-for-bit and
    repetitions are independent of execution order.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    effects: tuple[str, ...] | None = None
    statistics = p_values = None
    data_seeds, boot_seeds = [], []
    for r in range(reps):
        data_seed = _derive_seed(seed, r, 0)
        boot_seed = _derive_seed(seed, r, 1)
        ds = generate(replace(config, seed=data_seed))
        results = manova_rm(ds, n_boot=n_boot, scheme=scheme, seed=boot_seed)
        if effects is None:
            effects = tuple(str(res.effect) for res in results)
            statistics = np.empty((reps, len(effects)))
            p_values = np.empty((reps, len(effects)))
        for e, res in enumerate(results):
            statistics[r, e] = res.statistic
            p_values[r, e] = res.p_value
        data_seeds.append(data_seed)
        boot_seeds.append(boot_seed)
    return ExperimentResult(
        effects=effects,
        statistics=statistics,
        p_values=p_values,
        data_seeds=tuple(data_seeds),
        boot_seeds=tuple(boot_seeds),
        n_boot=n_boot,
        scheme=scheme,
        seed=seed,
    )


def rejection_rate(
    config: ScenarioConfig,
    effect,
    alpha: float = 0.05,
    reps: int = 400,
    n_boot: int = 500,
    scheme: str = "parametric",
    seed: int = 0,
) -> tuple[float, tuple[float, float]]:
    """Monte-Carlo rejection rate of one effect with its 99% interval."""
    if reps < 50:
        raise ValueError(f"need at least 50 repetitions for a stable rate, got {reps}")
    result = run_experiment(config, reps=reps, n_boot=n_boot, scheme=scheme, seed=seed)
    return result.rejection_rate(effect, alpha)
