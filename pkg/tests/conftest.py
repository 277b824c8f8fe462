import time

import numpy as np
import pytest

import mvrm

# wall-clock seconds of the session-scoped experiments, keyed by noise family
EXPERIMENT_SECONDS: dict[str, float] = {}


def null_scenario(noise: str) -> mvrm.ScenarioConfig:
    """Heteroscedastic null: equal means, second covariance 3x the first."""
    base = mvrm.ar1_exchangeable(2, 2, 0.4, 0.3, 1.0)
    return mvrm.ScenarioConfig(
        group_sizes=(30, 30),
        n_times=2,
        n_variables=2,
        means=(np.zeros(4), np.zeros(4)),
        covariances=(base, 3.0 * base),
        noise=noise,
        seed=0,
    )


# The two Monte-Carlo null experiments (400 reps x 500 bootstrap replicates
# each) dominate suite runtime, so they run once per session and are shared
# between the acceptance module and the distribution-shape property tests.


def _timed_experiment(noise: str, seed: int):
    start = time.perf_counter()
    result = mvrm.run_experiment(
        null_scenario(noise), reps=400, n_boot=500, scheme="parametric", seed=seed
    )
    EXPERIMENT_SECONDS[noise] = time.perf_counter() - start
    return result


@pytest.fixture(scope="session")
def null_experiment_normal():
    return _timed_experiment("normal", 1001)


@pytest.fixture(scope="session")
def null_experiment_lognormal():
    return _timed_experiment("lognormal", 1002)
