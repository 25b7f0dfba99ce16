"""Instance generators and independent reference computations for the tests."""

from __future__ import annotations

from fractions import Fraction
from math import factorial

import numpy as np

from cvqrng.fock import (
    FockDiagonalOperator,
    PhaseInsensitivePOVM,
    TailKind,
    custom_source,
    expected_outcome_probabilities,
)
from cvqrng.reduction import TruncationContext, build_truncation_context


def set_partitions(items):
    """All partitions of ``items`` into nonempty blocks (recursive enumeration)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def stirling2_alternating(n: int, j: int) -> Fraction:
    """S(n, j) from the alternating closed form, in exact arithmetic."""
    return sum(
        (Fraction((-1) ** (j - i) * i**n, factorial(j - i) * factorial(i)) for i in range(j + 1)),
        Fraction(0),
    )


def uniform_context(m: int, N: int) -> TruncationContext:
    """POVM {I/m, ..., I/m} truncated at N with exactly known (zero) tail slack."""
    theta = np.full((m, N), 1.0 / m)
    return TruncationContext(N, np.zeros(m), 0.0, theta)


def random_instance(rng: np.random.Generator, m: int, N: int):
    """Random diagonal POVM + finite-support source; returns (povm, ctx, stats, pmf).

    Entries are stored up to n_store = N + 3 and the source lives on photon
    numbers below n_store, so the statistics are exact. Half of the instances
    use ZERO tails (tail norm = max stored entry past the cutoff), the rest the
    conservative bound 1.
    """
    n_store = N + 3
    theta = rng.dirichlet(np.full(m, rng.choice([0.3, 1.0, 3.0])), size=n_store).T
    tail = TailKind.ZERO if rng.random() < 0.5 else TailKind.CONSERVATIVE_UNIT
    povm = PhaseInsensitivePOVM(tuple(FockDiagonalOperator(row, tail) for row in theta))
    # bias towards low photon numbers, like a weak source
    weights = rng.dirichlet(np.linspace(2.0, 0.2, n_store))
    weights = weights / weights.sum()
    weights[-1] = 1.0 - weights[:-1].sum()
    src = custom_source(np.clip(weights, 0.0, None))
    stats = expected_outcome_probabilities(src, povm, n_eval=n_store - 1)
    ctx = build_truncation_context(povm, stats.mean_photon, N, mode="conservative")
    return povm, ctx, stats, src.probabilities(n_store - 1)


def exact_margin(lam, eta, xi, theta) -> Fraction:
    """max_{k,n} theta_k(n) + sum_j (lam_j - eta_j) theta_j(n) - xi - 1, exactly."""
    m, N = theta.shape
    worst = None
    for k in range(m):
        for n in range(N):
            v = Fraction(theta[k, n]) - Fraction(xi) - 1
            for j in range(m):
                v += (Fraction(lam[j]) - Fraction(eta[j])) * Fraction(theta[j, n])
            worst = v if worst is None or v > worst else worst
    return worst


def random_psd_with_diagonal(rng, diag):
    """Random complex PSD matrix whose diagonal equals ``diag`` (>= 0)."""
    n = len(diag)
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    c = g @ g.conj().T
    s = 1.0 / np.sqrt(np.real(np.diag(c)))
    corr = c * np.outer(s, s)
    d = np.sqrt(np.asarray(diag, dtype=float))
    return corr * np.outer(d, d)
