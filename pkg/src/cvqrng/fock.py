"""Fock-space value types and forward simulation of detector statistics.

Everything here works with photon-number distributions only. The detectors of
interest are phase insensitive, so their POVM elements are diagonal in the Fock
basis and the outcome probabilities depend on the diagonal of the source state
alone.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammainc

from ._exact import float_up
from .errors import InvalidParameterError, TruncationError

__all__ = [
    "TailKind",
    "FockDiagonalOperator",
    "PhaseInsensitivePOVM",
    "PhotonSource",
    "MeasurementStatistics",
    "coherent_source",
    "fock_source",
    "custom_source",
    "default_eval_horizon",
    "expected_outcome_probabilities",
    "povm_completeness_check",
]

_ENTRY_TOL = 1e-12


class TailKind(str, enum.Enum):
    """What is known about the diagonal entries beyond the stored block."""

    EXPLICIT = "explicit"
    CONSERVATIVE_UNIT = "conservative_unit"
    ZERO = "zero"


@dataclass(frozen=True, eq=False)
class FockDiagonalOperator:
    """A diagonal operator ``sum_n theta[n] |n><n|`` on the Fock space.

    ``diag`` holds theta[0..n_store-1]. Entries beyond the stored block are
    described by ``tail``:

    * ``ZERO``: every entry past the block is exactly 0.
    * ``EXPLICIT``: ``formula(n)`` evaluates the entry in closed form, either
      as a float or as an exact ``Fraction``.
      ``tail_cap(h)``, when given, must upper-bound every entry with n > h.
    * ``CONSERVATIVE_UNIT``: entries are only guaranteed to lie in [0, 1].
      A ``formula`` may still be attached for forward simulation, but norm
      bounds never rely on it.
    """

    diag: np.ndarray
    tail: TailKind = TailKind.CONSERVATIVE_UNIT
    formula: Callable[[int], float] | None = None
    tail_cap: Callable[[int], float] | None = None

    def __post_init__(self):
        diag = np.array(self.diag, dtype=float).ravel()
        diag.setflags(write=False)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "tail", TailKind(self.tail))
        if diag.size and (diag.min() < -_ENTRY_TOL or diag.max() > 1 + _ENTRY_TOL):
            raise InvalidParameterError("diagonal entries must lie in [0, 1]")
        if self.tail is TailKind.EXPLICIT and self.formula is None:
            raise InvalidParameterError("an explicit tail needs a formula")

    @property
    def n_store(self) -> int:
        return self.diag.size

    def entry(self, n: int) -> float:
        if n < 0:
            raise InvalidParameterError(f"photon number must be >= 0, got {n}")
        if n < self.n_store:
            return float(self.diag[n])
        if self.tail is TailKind.ZERO:
            return 0.0
        if self.formula is not None:
            return float(self.formula(n))
        raise TruncationError(
            f"entry n={n} is beyond the {self.n_store} stored entries and the tail "
            "has no formula"
        )

    def entry_upper(self, n: int) -> float:
        """Like :meth:`entry`, but rounded upward when the formula is exact."""
        if n >= self.n_store and self.tail is not TailKind.ZERO and self.formula is not None:
            v = self.formula(n)
            if isinstance(v, Fraction):
                return float_up(v)
        return self.entry(n)

    def entries(self, stop: int) -> np.ndarray:
        """Entries theta[0..stop-1] as a new array."""
        if stop <= self.n_store:
            return np.array(self.diag[:stop])
        extra = [self.entry(n) for n in range(self.n_store, stop)]
        return np.concatenate([self.diag, np.asarray(extra, dtype=float)])

    @classmethod
    def constant(cls, value: float, n_store: int = 1) -> "FockDiagonalOperator":
        """``value * I``, with an exact closed-form tail."""
        v = float(value)
        return cls(np.full(n_store, v), TailKind.EXPLICIT, formula=lambda n: v,
                   tail_cap=lambda h: v)


@dataclass(frozen=True)
class PhaseInsensitivePOVM:
    elements: tuple[FockDiagonalOperator, ...]

    def __post_init__(self):
        elements = tuple(self.elements)
        if len(elements) < 2:
            raise InvalidParameterError("a POVM needs at least two outcomes")
        object.__setattr__(self, "elements", elements)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, j):
        return self.elements[j]

    def matrix(self, stop: int) -> np.ndarray:
        """Array of shape (m, stop) with ``[j, n] = theta_j(n)``."""
        return np.vstack([op.entries(stop) for op in self.elements])


@dataclass(frozen=True)
class PhotonSource:
    """Photon-number distribution of an (untrusted) optical source.

    ``pmf(stop)`` returns p(0..stop-1); ``tail_mass(n)`` returns the mass
    strictly above n, i.e. ``sum_{k > n} p(k)``.
    """

    pmf: Callable[[int], np.ndarray] = field(repr=False)
    tail_mass: Callable[[int], float] = field(repr=False)
    mean_photon: float
    label: str = "custom"

    def probabilities(self, n_eval: int) -> np.ndarray:
        """p(0..n_eval) inclusive."""
        return np.asarray(self.pmf(n_eval + 1), dtype=float)


def _poisson_pmf(mu: float, stop: int) -> np.ndarray:
    out = np.zeros(stop)
    if stop == 0:
        return out
    if mu == 0.0:
        out[0] = 1.0
        return out
    # log p(n+1) = log p(n) + log mu - log(n+1)
    logs = -mu + np.concatenate([[0.0], np.cumsum(math.log(mu) - np.log(np.arange(1, stop)))])
    return np.exp(logs)


def coherent_source(mean_photon: float) -> PhotonSource:
    """Coherent state |alpha> with |alpha|^2 = ``mean_photon`` (Poisson counts)."""
    mu = float(mean_photon)
    if not mu >= 0.0 or not math.isfinite(mu):
        raise InvalidParameterError(f"mean photon number must be >= 0, got {mean_photon}")

    def tail(n: int) -> float:
        if mu == 0.0:
            return 0.0
        # P(X > n) for X ~ Poisson(mu) is the regularized lower gamma P(n+1, mu)
        return float(gammainc(n + 1, mu))

    return PhotonSource(lambda stop: _poisson_pmf(mu, stop), tail, mu, label="coherent")


def custom_source(weights: Sequence[float]) -> PhotonSource:
    """Finite-support photon-number distribution given by ``weights``."""
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0 or w.min() < 0:
        raise InvalidParameterError("weights must be a nonempty nonnegative sequence")
    if abs(w.sum() - 1.0) > 1e-12:
        raise InvalidParameterError(f"weights sum to {w.sum()!r}, not 1")
    w = w.copy()
    w.setflags(write=False)

    def pmf(stop: int) -> np.ndarray:
        out = np.zeros(stop)
        k = min(stop, w.size)
        out[:k] = w[:k]
        return out

    def tail(n: int) -> float:
        return float(w[n + 1:].sum()) if n + 1 < w.size else 0.0

    mean = float(np.dot(np.arange(w.size), w))
    return PhotonSource(pmf, tail, mean, label="custom")


def fock_source(n: int) -> PhotonSource:
    if n < 0:
        raise InvalidParameterError(f"photon number must be >= 0, got {n}")
    w = np.zeros(n + 1)
    w[n] = 1.0
    src = custom_source(w)
    return PhotonSource(src.pmf, src.tail_mass, float(n), label=f"fock({n})")


@dataclass(frozen=True, eq=False)
class MeasurementStatistics:
    """Observed outcome probabilities plus the trusted mean photon number.

    ``residual_mass`` records how much source probability was dropped by the
    photon-number truncation before renormalizing (0 for measured data).
    """

    probabilities: np.ndarray
    mean_photon: float
    residual_mass: float = 0.0

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float).ravel()
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)
        if p.size < 2:
            raise InvalidParameterError("need at least two outcome probabilities")
        if p.min() < 0:
            raise InvalidParameterError("outcome probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise InvalidParameterError(f"outcome probabilities sum to {p.sum()!r}")
        if not self.mean_photon >= 0:
            raise InvalidParameterError("mean photon number must be >= 0")

    def __len__(self):
        return self.probabilities.size


def default_eval_horizon(mean_photon: float) -> int:
    mu = float(mean_photon)
    return int(math.ceil(mu + 40.0 * math.sqrt(mu) + 40.0))


def expected_outcome_probabilities(
    source: PhotonSource,
    povm: PhaseInsensitivePOVM,
    n_eval: int | None = None,
    tol: float = 1e-12,
) -> MeasurementStatistics:
    """Asymptotic outcome statistics ``p_j = sum_n p(n) theta_j(n)``.

    The sum runs over n = 0..n_eval and the result is renormalized; the
    dropped source mass is kept in ``residual_mass``.
    """
    if n_eval is None:
        n_eval = default_eval_horizon(source.mean_photon)
    tail = source.tail_mass(n_eval)
    if tail > tol:
        raise TruncationError(
            f"source mass {tail:.3e} beyond n_eval={n_eval} exceeds tolerance {tol:.1e}"
        )
    pn = source.probabilities(n_eval)
    theta = povm.matrix(n_eval + 1)
    p = theta @ pn
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    residual = max(0.0, 1.0 - float(pn.sum()))
    return MeasurementStatistics(p, source.mean_photon, residual)


def povm_completeness_check(povm: PhaseInsensitivePOVM, n_max: int, tol: float) -> bool:
    """True iff the elements sum to the identity on n = 0..n_max, within ``tol``."""
    try:
        theta = povm.matrix(n_max + 1)
    except TruncationError:
        return False
    if theta.min() < -tol or theta.max() > 1 + tol:
        return False
    return bool(np.all(np.abs(theta.sum(axis=0) - 1.0) <= tol))
