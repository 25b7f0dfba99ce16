"""Reduction of the infinite-dimensional guessing problem to a photon cutoff N.

Every POVM element is diagonal, so it commutes with the projector P onto
photon numbers < N and the probability of outcome j splits into an in-window
part and a tail part. The tail part is at most (weight outside the window) x
(largest tail entry of M_j), and the outside weight is at most <n>/N by
Markov's inequality. Together these give the lowered probabilities p_j^L that
bracket the in-window statistics from below.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from ._exact import exact, float_down, float_up
from .errors import InvalidParameterError
from .fock import FockDiagonalOperator, MeasurementStatistics, PhaseInsensitivePOVM, TailKind

__all__ = [
    "TAIL_MODES",
    "TailNorm",
    "TruncationContext",
    "truncate_operator",
    "tail_infinity_norm",
    "weight_bound",
    "lower_probabilities",
    "build_truncation_context",
]

TAIL_MODES = ("conservative", "refined")
DEFAULT_PROBE_HORIZON = 100


class TailNorm(NamedTuple):
    """Upper bound on sup_{n >= N} theta(n).

    ``fallback`` is set when refined mode was requested but no analytic cap was
    available, so the conservative value 1 was returned instead.
    """

    value: float
    fallback: bool = False


def truncate_operator(op: FockDiagonalOperator, cutoff: int) -> np.ndarray:
    """Diagonal of P M P on photon numbers 0..cutoff-1."""
    if cutoff < 1:
        raise InvalidParameterError(f"cutoff must be >= 1, got {cutoff}")
    return op.entries(cutoff)


def _stored_beyond(op: FockDiagonalOperator, cutoff: int) -> float:
    if op.n_store > cutoff:
        return float(op.diag[cutoff:].max())
    return 0.0


def tail_infinity_norm(
    op: FockDiagonalOperator,
    cutoff: int,
    mode: str = "conservative",
    probe_horizon: int = DEFAULT_PROBE_HORIZON,
) -> TailNorm:
    if mode not in TAIL_MODES:
        raise InvalidParameterError(f"unknown tail mode {mode!r}")
    if cutoff < 1:
        raise InvalidParameterError(f"cutoff must be >= 1, got {cutoff}")
    if op.tail is TailKind.ZERO:
        return TailNorm(_stored_beyond(op, cutoff))
    if mode == "conservative":
        return TailNorm(1.0)
    if op.tail is not TailKind.EXPLICIT or op.tail_cap is None:
        return TailNorm(1.0, fallback=True)
    if probe_horizon < cutoff:
        raise InvalidParameterError(
            f"probe horizon {probe_horizon} is below the cutoff {cutoff}"
        )
    probe = max(op.entry_upper(n) for n in range(cutoff, probe_horizon + 1))
    value = max(probe, float(op.tail_cap(probe_horizon)))
    return TailNorm(min(value, 1.0))


def weight_bound(mean_photon: float, cutoff: int) -> float:
    """Bound <n>/N on the probability of N or more photons, capped at 1.

    This is the dual point x = 0, y = 1/N of the weight maximization: the
    operator 1[n >= N] - n/N is negative semidefinite, so the weight is at most
    <n>/N for any state with that mean photon number.
    """
    if mean_photon < 0:
        raise InvalidParameterError(f"mean photon number must be >= 0, got {mean_photon}")
    if cutoff < 1:
        raise InvalidParameterError(f"cutoff must be >= 1, got {cutoff}")
    return min(float_up(exact(mean_photon) / cutoff), 1.0)


@dataclass(frozen=True, eq=False)
class TruncationContext:
    """Everything the finite programs need from the POVM and the cutoff.

    ``truncated`` has shape (m, N) with ``[j, n] = theta_j(n)``.
    """

    cutoff: int
    tail_norms: np.ndarray
    weight_bound: float
    truncated: np.ndarray
    tail_mode: str = "conservative"
    fallback: tuple[bool, ...] = ()

    def __post_init__(self):
        for name in ("tail_norms", "truncated"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        m, n = self.truncated.shape
        if n != self.cutoff:
            raise InvalidParameterError(f"truncated block has {n} columns, cutoff is {self.cutoff}")
        if self.tail_norms.shape != (m,):
            raise InvalidParameterError("one tail norm per outcome is required")
        if np.any(self.tail_norms < 0) or np.any(self.tail_norms > 1):
            raise InvalidParameterError("tail norms must lie in [0, 1]")
        if not 0 <= self.weight_bound <= 1:
            raise InvalidParameterError("weight bound must lie in [0, 1]")

    @property
    def n_outcomes(self) -> int:
        return self.truncated.shape[0]


def build_truncation_context(
    povm: PhaseInsensitivePOVM,
    mean_photon: float,
    cutoff: int,
    mode: str = "refined",
    probe_horizon: int | None = None,
) -> TruncationContext:
    if probe_horizon is None:
        probe_horizon = max(DEFAULT_PROBE_HORIZON, cutoff)
    norms = [tail_infinity_norm(op, cutoff, mode, probe_horizon) for op in povm]
    return TruncationContext(
        cutoff=cutoff,
        tail_norms=np.array([t.value for t in norms]),
        weight_bound=weight_bound(mean_photon, cutoff),
        truncated=np.vstack([truncate_operator(op, cutoff) for op in povm]),
        tail_mode=mode,
        fallback=tuple(t.fallback for t in norms),
    )


def lower_probabilities(stats: MeasurementStatistics, ctx: TruncationContext) -> np.ndarray:
    """p_j^L = max(0, p_j - weight_bound * tail_norm_j), rounded downward."""
    p = stats.probabilities
    if p.size != ctx.n_outcomes:
        raise InvalidParameterError(
            f"{p.size} outcome probabilities but the context has {ctx.n_outcomes} outcomes"
        )
    w = Fraction(ctx.weight_bound)
    out = np.empty(p.size)
    for j, (pj, tj) in enumerate(zip(p, ctx.tail_norms)):
        out[j] = max(0.0, float_down(Fraction(pj) - w * Fraction(tj)))
    return out
