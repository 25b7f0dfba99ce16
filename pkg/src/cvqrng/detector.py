"""Time-multiplexed detector (TMD) model.

A pulse is split into ``n_modes`` equally likely temporal bins, each watched by
a binary click detector. An n-photon Fock state then behaves like n balls
thrown uniformly into ``n_modes`` bins, and the click count is the number of
occupied bins.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache, partial
from pathlib import Path

import numpy as np

from ._exact import float_up
from .errors import BudgetExceededError, InvalidParameterError
from .fock import FockDiagonalOperator, PhaseInsensitivePOVM, TailKind

__all__ = [
    "TmdConfig",
    "stirling2",
    "occupancy_fraction",
    "occupancy_probability",
    "occupancy_tail_cap",
    "brute_force_occupancy",
    "build_tmd_povm",
    "write_povm",
    "read_povm",
]

BRUTE_FORCE_BUDGET = 10**7

_stirling_rows: list[list[int]] = [[1]]


def stirling2(n: int, j: int) -> int:
    """Stirling number of the second kind S(n, j), exact.

    Built from the triangular recurrence S(n, j) = j S(n-1, j) + S(n-1, j-1).
    Python integers are unbounded, so there is no overflow to guard against.
    """
    if n < 0 or j < 0:
        raise InvalidParameterError(f"S(n, j) needs n, j >= 0, got ({n}, {j})")
    if j > n:
        return 0
    rows = _stirling_rows
    while len(rows) <= n:
        prev = rows[-1]
        k = len(rows)
        row = [0] * (k + 1)
        for i in range(1, k + 1):
            row[i] = i * (prev[i] if i < k else 0) + prev[i - 1]
        rows.append(row)
    return rows[n][j]


def _check_occupancy_args(n: int, j: int, n_modes: int) -> None:
    if n_modes < 1:
        raise InvalidParameterError(f"n_modes must be >= 1, got {n_modes}")
    if n < 0:
        raise InvalidParameterError(f"photon number must be >= 0, got {n}")
    if not 0 <= j <= n_modes:
        raise InvalidParameterError(f"click count {j} outside 0..{n_modes}")


@lru_cache(maxsize=None)
def occupancy_fraction(n: int, j: int, n_modes: int) -> Fraction:
    """P(exactly j of n_modes bins occupied | n photons), as an exact rational.

    Equals C(n_modes, j) * j! * S(n, j) / n_modes**n: choose the occupied bins,
    then count surjections of the n photons onto them.
    """
    _check_occupancy_args(n, j, n_modes)
    onto = math.factorial(j) * stirling2(n, j)
    return Fraction(math.comb(n_modes, j) * onto, n_modes**n)


def occupancy_probability(n: int, j: int, n_modes: int) -> float:
    return float(occupancy_fraction(n, j, n_modes))


def occupancy_tail_cap(j: int, n_modes: int, horizon: int) -> float:
    """Upper bound on occupancy_probability(n, j, n_modes) for every n > horizon.

    j! S(n, j) <= j**n (surjections are a subset of all maps onto j bins), so
    theta_j(n) <= C(n_modes, j) (j / n_modes)**n, which is nonincreasing in n.
    """
    _check_occupancy_args(0, j, n_modes)
    if j == 0:
        return 0.0
    k = horizon + 1
    return min(1.0, float_up(Fraction(math.comb(n_modes, j) * j**k, n_modes**k)))


def brute_force_occupancy(
    n: int, j: int, n_modes: int, budget: int = BRUTE_FORCE_BUDGET
) -> Fraction:
    """Enumerate all n_modes**n photon-to-bin assignments and count occupancy j."""
    _check_occupancy_args(n, j, n_modes)
    total = n_modes**n
    if total > budget:
        raise BudgetExceededError(f"{n_modes}**{n} = {total} assignments exceeds budget {budget}")
    hits = sum(1 for a in itertools.product(range(n_modes), repeat=n) if len(set(a)) == j)
    return Fraction(hits, total)


@dataclass(frozen=True)
class TmdConfig:
    n_modes: int = 32
    n_outcomes: int = 10
    n_store: int = 20

    def __post_init__(self):
        if self.n_modes < 1:
            raise InvalidParameterError(f"n_modes must be >= 1, got {self.n_modes}")
        if self.n_outcomes < 2:
            raise InvalidParameterError(f"need at least 2 outcomes, got {self.n_outcomes}")
        if self.n_outcomes > self.n_modes + 1:
            raise InvalidParameterError(
                f"{self.n_outcomes} outcomes but click counts only range over 0..{self.n_modes}"
            )
        if self.n_store < 0:
            raise InvalidParameterError("n_store must be >= 0")


def _complement_fraction(n: int, n_modes: int, last: int) -> Fraction:
    return 1 - sum((occupancy_fraction(n, j, n_modes) for j in range(last)), Fraction(0))


def build_tmd_povm(cfg: TmdConfig) -> PhaseInsensitivePOVM:
    """POVM with outcomes "j clicks" for j < m-1 and ">= m-1 clicks" last."""
    K, m, store = cfg.n_modes, cfg.n_outcomes, cfg.n_store
    elements = []
    for j in range(m - 1):
        diag = [occupancy_probability(n, j, K) for n in range(store)]
        if j == 0 and store >= 1:
            elements.append(FockDiagonalOperator(diag, TailKind.ZERO))
        else:
            elements.append(
                FockDiagonalOperator(
                    diag,
                    TailKind.EXPLICIT,
                    formula=partial(occupancy_fraction, j=j, n_modes=K),
                    tail_cap=partial(occupancy_tail_cap, j, K),
                )
            )
    last = m - 1
    diag = [float(_complement_fraction(n, K, last)) for n in range(store)]
    elements.append(
        FockDiagonalOperator(
            diag,
            TailKind.CONSERVATIVE_UNIT,
            formula=partial(_complement_fraction, n_modes=K, last=last),
        )
    )
    return PhaseInsensitivePOVM(tuple(elements))


def write_povm(povm: PhaseInsensitivePOVM, path) -> Path:
    """Write one JSON record per element: index, stored diagonal, tail kind.

    Floats are written with ``repr`` precision, so the stored entries round-trip
    exactly.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for index, op in enumerate(povm):
            record = {"index": index, "diag": [float(x) for x in op.diag], "tail": op.tail.value}
            fh.write(json.dumps(record) + "\n")
    return path


def read_povm(path) -> PhaseInsensitivePOVM:
    """Inverse of :func:`write_povm`.

    Closed-form tails cannot be serialized, so ``explicit`` records come back as
    ``conservative_unit``, which only loosens any bound derived from them.
    """
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    records.sort(key=lambda r: r["index"])
    if [r["index"] for r in records] != list(range(len(records))):
        raise InvalidParameterError(f"{path}: element indices are not 0..m-1")
    elements = []
    for r in records:
        tail = TailKind(r["tail"])
        if tail is TailKind.EXPLICIT:
            tail = TailKind.CONSERVATIVE_UNIT
        elements.append(FockDiagonalOperator(np.asarray(r["diag"], dtype=float), tail))
    return PhaseInsensitivePOVM(tuple(elements))
