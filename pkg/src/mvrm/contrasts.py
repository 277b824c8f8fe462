"""Hypothesis (contrast) matrices for the group x time repeated-measures design.

Each null hypothesis about the stacked mean vector (length g*p*t, ordered
group-major, then time, then variable) is encoded by a symmetric idempotent
projector T, built from Kronecker products of centering and averaging blocks:

    group effect        C_g (x) avg_t (x) I_p
    time effect         avg_g (x) C_t (x) I_p
    interaction         C_g (x) C_t (x) I_p

where C_n = I_n - J_n/n is the n x n centering matrix and avg_n = J_n/n the
averaging matrix.  Entries are exact rational multiples of 1/(g*t), so the
projector identities hold to near machine precision.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Effect",
    "HypothesisMatrix",
    "centering_matrix",
    "kronecker",
    "hypothesis_matrix",
    "custom_hypothesis_matrix",
]

PROJECTOR_TOL = 1e-12


class Effect(str, enum.Enum):
    GROUP = "group"
    TIME = "time"
    INTERACTION = "interaction"
    CUSTOM = "custom"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class HypothesisMatrix:
    """A contrast projector T with its effect tag and design dimensions."""

    effect: Effect
    matrix: np.ndarray
    dims: tuple[int, int, int]  # (g, t, p)

    def __post_init__(self):
        T = np.asarray(self.matrix, dtype=float)
        g, t, p = self.dims
        m = g * t * p
        if T.shape != (m, m):
            raise ValueError(f"contrast must be {m}x{m} for dims {self.dims}, got {T.shape}")
        T = T.copy()
        T.setflags(write=False)
        object.__setattr__(self, "matrix", T)

    def is_projector(self, tol: float = PROJECTOR_TOL) -> bool:
        T = self.matrix
        return (
            np.max(np.abs(T - T.T)) <= tol
            and np.max(np.abs(T @ T - T)) <= tol
        )


def centering_matrix(n: int) -> np.ndarray:
    """The n x n centering projector I - J/n (rows sum to zero, rank n-1)."""
    if n < 1:
        raise ValueError(f"order must be >= 1, got {n}")
    return np.eye(n) - np.full((n, n), 1.0 / n)


def kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product: block (i, j) of the result equals a[i, j] * b."""
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def _averaging_matrix(n: int) -> np.ndarray:
    return np.full((n, n), 1.0 / n)


def hypothesis_matrix(effect: Effect | str, g: int, t: int, p: int) -> HypothesisMatrix:
    """Build the projector testing ``effect`` on a (g, t, p) design.

    Parameters
    ----------
    effect : Effect or str
        One of ``group``, ``time``, ``interaction``.
    g, t, p : int
        Number of groups (>= 2), time points (>= 1), and variables (>= 1).

    Raises
    ------
    ValueError
        For invalid dimensions, or for a time/interaction contrast with
        t = 1: the time-centering block is then zero and the hypothesis
        vacuous, so we reject rather than return a zero test.
    """
    effect = Effect(effect)
    if g < 2:
        raise ValueError(f"need at least 2 groups, got g={g}")
    if t < 1 or p < 1:
        raise ValueError(f"need t >= 1 and p >= 1, got t={t}, p={p}")
    if t == 1 and effect in (Effect.TIME, Effect.INTERACTION):
        raise ValueError("time contrast undefined for t=1")
    identity_p = np.eye(p)
    if effect is Effect.GROUP:
        T = kronecker(kronecker(centering_matrix(g), _averaging_matrix(t)), identity_p)
    elif effect is Effect.TIME:
        T = kronecker(kronecker(_averaging_matrix(g), centering_matrix(t)), identity_p)
    elif effect is Effect.INTERACTION:
        T = kronecker(kronecker(centering_matrix(g), centering_matrix(t)), identity_p)
    else:
        raise ValueError("custom contrasts go through custom_hypothesis_matrix")
    return HypothesisMatrix(effect=effect, matrix=T, dims=(g, t, p))


def custom_hypothesis_matrix(matrix, g: int, t: int, p: int) -> HypothesisMatrix:
    """Wrap a user-supplied contrast, warning if it is not a projector.

    Any contrast matrix defines a testable hypothesis, so violations of
    symmetry or idempotency only warn instead of erroring.
    """
    hm = HypothesisMatrix(effect=Effect.CUSTOM, matrix=matrix, dims=(g, t, p))
    if not hm.is_projector():
        warnings.warn(
            "custom contrast is not a symmetric idempotent projector; "
            "the test statistic is still defined but the standard effect "
            "interpretation does not apply",
            stacklevel=2,
        )
    return hm
