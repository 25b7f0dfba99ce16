"""Finite guessing-probability programs and their dual certificates.

With diagonal POVM elements every operator in the truncated guessing problem
is diagonal, so only the diagonal entries rho_k(n) of the sub-normalized group
states matter and the semidefinite program is a linear program. We solve the
dual, clean up the solver output into an exactly feasible dual point, and
re-verify it with rational arithmetic before turning its objective into a
min-entropy bound.

Sign conventions (primal is a maximization):

    maximize   1 + sum_{k,n} rho_k(n) (theta_k(n) - 1)
    subject to sum_{k,n} theta_j(n) rho_k(n) <= p_j          (eta_j)
               sum_{k,n} theta_j(n) rho_k(n) >= p_j^L        (lambda_j)
               sum_{k,n} rho_k(n) <= 1                        (xi)
               rho_k(n) >= 0

    minimize   1 + sum_j eta_j p_j - sum_j lambda_j p_j^L + xi
    subject to theta_k(n) + sum_j (lambda_j - eta_j) theta_j(n) - (xi + 1) <= 0
               for all k, n;  lambda, eta, xi >= 0
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from ._exact import float_up
from .errors import BudgetExceededError, CertificationError, InvalidParameterError, VerificationError
from .fock import MeasurementStatistics
from .reduction import TruncationContext, lower_probabilities

__all__ = [
    "LinearProgram",
    "LPSolution",
    "DualCertificate",
    "VerificationReport",
    "RandomnessResult",
    "build_primal",
    "build_dual",
    "solve_lp",
    "dual_from_solution",
    "repair_dual_certificate",
    "verify_certificate",
    "min_entropy",
    "certify",
    "feasible_vertices",
    "brute_force_guessing_bound",
]

log = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9
OBJECTIVE_MATCH_TOL = 1e-12
GAP_ALARM = 1e-5


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """``sense`` c.x + constant subject to A_ub x <= b_ub and x >= 0."""

    sense: str
    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    constant: float = 0.0
    row_labels: tuple[str, ...] = ()
    var_labels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.sense not in ("max", "min"):
            raise InvalidParameterError(f"sense must be 'max' or 'min', got {self.sense!r}")
        c = np.asarray(self.c, dtype=float).ravel()
        A = np.asarray(self.A_ub, dtype=float).reshape(-1, c.size)
        b = np.asarray(self.b_ub, dtype=float).ravel()
        if b.size != A.shape[0]:
            raise InvalidParameterError("A_ub and b_ub disagree on the number of rows")
        for name, arr in (("c", c), ("A_ub", A), ("b_ub", b)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b_ub.size

    def value(self, x) -> float:
        return float(self.constant + self.c @ np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class LPSolution:
    x: np.ndarray | None
    objective: float
    status: str
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _check_consistent(ctx: TruncationContext, stats: MeasurementStatistics) -> np.ndarray:
    p_low = lower_probabilities(stats, ctx)
    if np.any(p_low > stats.probabilities):
        raise InvalidParameterError("lower probability bracket exceeds the upper one")
    return p_low


def build_primal(ctx: TruncationContext, stats: MeasurementStatistics) -> LinearProgram:
    """Variables rho_k(n), flattened as index k * N + n."""
    p_low = _check_consistent(ctx, stats)
    theta = ctx.truncated
    m, N = theta.shape
    block = np.tile(theta, (1, m))  # row j, column k*N+n -> theta_j(n)
    A = np.vstack([block, -block, np.ones((1, m * N))])
    b = np.concatenate([stats.probabilities, -p_low, [1.0]])
    rows = tuple(f"upper[{j}]" for j in range(m)) + tuple(f"lower[{j}]" for j in range(m))
    return LinearProgram(
        sense="max",
        c=(theta - 1.0).ravel(),
        A_ub=A,
        b_ub=b,
        constant=1.0,
        row_labels=rows + ("normalization",),
        var_labels=tuple(f"rho[{k}][{n}]" for k in range(m) for n in range(N)),
    )


def build_dual(ctx: TruncationContext, stats: MeasurementStatistics) -> LinearProgram:
    """Variables (lambda_0..m-1, eta_0..m-1, xi); one row per (k, n)."""
    p_low = _check_consistent(ctx, stats)
    theta = ctx.truncated
    m, N = theta.shape
    rows, rhs, labels = [], [], []
    for k in range(m):
        for n in range(N):
            col = theta[:, n]
            rows.append(np.concatenate([col, -col, [-1.0]]))
            rhs.append(1.0 - theta[k, n])
            labels.append(f"psd[{k}][{n}]")
    names = (
        tuple(f"lambda[{j}]" for j in range(m))
        + tuple(f"eta[{j}]" for j in range(m))
        + ("xi",)
    )
    return LinearProgram(
        sense="min",
        c=np.concatenate([-p_low, stats.probabilities, [1.0]]),
        A_ub=np.array(rows),
        b_ub=np.array(rhs),
        constant=1.0,
        row_labels=tuple(labels),
        var_labels=names,
    )


_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
    "presolve": True,
}
_STATUS = {0: "optimal", 2: "infeasible", 3: "unbounded"}


def solve_lp(lp: LinearProgram) -> LPSolution:
    """Solve with HiGHS; the result depends only on the LP data."""
    sign = -1.0 if lp.sense == "max" else 1.0
    res = linprog(sign * lp.c, A_ub=lp.A_ub, b_ub=lp.b_ub, bounds=(0, None), method="highs",
                  options=_HIGHS_OPTIONS)
    status = _STATUS.get(res.status, "numerical-difficulty")
    if status != "optimal" or res.x is None:
        return LPSolution(None, math.nan, status, res.message)
    x = np.asarray(res.x, dtype=float)
    return LPSolution(x, lp.value(x), status, res.message)


@dataclass(frozen=True, eq=False)
class DualCertificate:
    lam: np.ndarray
    eta: np.ndarray
    xi: float
    objective_value: float = math.nan
    feasibility_margin: float = math.nan

    def __post_init__(self):
        for name in ("lam", "eta"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "xi", float(self.xi))
        if self.lam.shape != self.eta.shape:
            raise InvalidParameterError("lambda and eta must have the same length")


def dual_from_solution(sol: LPSolution, m: int) -> DualCertificate:
    """Unrepaired certificate candidate read off a :func:`build_dual` solution."""
    if sol.x is None:
        raise CertificationError(f"dual solve failed: {sol.status} ({sol.message})")
    x = sol.x
    return DualCertificate(x[:m], x[m:2 * m], x[2 * m], sol.objective, math.nan)


class _ExactData:
    """Rational copies of the instance data, built once per (ctx, stats)."""

    def __init__(self, ctx: TruncationContext, stats: MeasurementStatistics):
        self.theta = [[Fraction(v) for v in row] for row in ctx.truncated.tolist()]
        self.top = [max(col) for col in zip(*self.theta)]  # max_k theta_k(n)
        self.p = [Fraction(v) for v in stats.probabilities.tolist()]
        self.p_low = [Fraction(v) for v in lower_probabilities(stats, ctx).tolist()]

    def margin(self, lam, eta, xi) -> Fraction:
        diff = [Fraction(a) - Fraction(b) for a, b in zip(lam, eta)]
        worst = None
        for n, top in enumerate(self.top):
            s = top + sum((d * row[n] for d, row in zip(diff, self.theta) if d), Fraction(0))
            worst = s if worst is None or s > worst else worst
        return worst - Fraction(xi) - 1

    def objective(self, lam, eta, xi) -> Fraction:
        total = Fraction(1) + Fraction(xi)
        for lj, ej, pj, plj in zip(lam, eta, self.p, self.p_low):
            total += Fraction(ej) * pj - Fraction(lj) * plj
        return total


def repair_dual_certificate(
    raw: DualCertificate, ctx: TruncationContext, stats: MeasurementStatistics
) -> DualCertificate:
    """Turn a solver candidate into an exactly feasible dual point.

    Negative multipliers are clamped to 0; any remaining constraint violation v
    is absorbed by raising xi by v, which costs exactly v in the objective.
    """
    if raw.lam.size != ctx.n_outcomes:
        raise InvalidParameterError("certificate and context disagree on the outcome count")
    data = _ExactData(ctx, stats)
    if not (np.all(np.isfinite(raw.lam)) and np.all(np.isfinite(raw.eta))
            and math.isfinite(raw.xi)):
        raise CertificationError("non-finite dual variables cannot be repaired")
    lam = np.where(raw.lam > 0, raw.lam, 0.0)
    eta = np.where(raw.eta > 0, raw.eta, 0.0)
    xi = raw.xi if raw.xi > 0 else 0.0
    margin = data.margin(lam, eta, xi)
    while margin > 0:
        xi = float_up(Fraction(xi) + margin)
        margin = data.margin(lam, eta, xi)
    objective = float_up(data.objective(lam, eta, xi))
    return DualCertificate(lam, eta, xi, objective, float_up(margin))


@dataclass(frozen=True)
class VerificationReport:
    passed: bool
    violations: tuple[str, ...]
    margin: float
    objective: float


def verify_certificate(
    cert: DualCertificate,
    ctx: TruncationContext,
    stats: MeasurementStatistics,
    strict: bool = True,
) -> VerificationReport:
    """Re-check a certificate in exact rational arithmetic.

    Passing means: all multipliers are nonnegative, every diagonal constraint
    holds with margin <= 0 exactly, and the claimed objective is an upper
    bound on the exact objective within ``OBJECTIVE_MATCH_TOL``. By weak
    duality the claimed objective then bounds the truncated guessing
    probability from above.
    """
    violations = []
    m = ctx.n_outcomes
    if cert.lam.size != m or cert.eta.size != m:
        raise VerificationError("certificate has the wrong number of multipliers",
                                 ["shape mismatch"])
    values = [("lambda", j, v) for j, v in enumerate(cert.lam)]
    values += [("eta", j, v) for j, v in enumerate(cert.eta)]
    values.append(("xi", None, cert.xi))
    for name, j, v in values:
        label = name if j is None else f"{name}[{j}]"
        if not math.isfinite(v):
            violations.append(f"{label} is not finite")
        elif v < 0:
            violations.append(f"{label} = {v!r} < 0")
    if violations:
        report = VerificationReport(False, tuple(violations), math.nan, math.nan)
        if strict:
            raise VerificationError("; ".join(violations), violations)
        return report

    data = _ExactData(ctx, stats)
    margin = data.margin(cert.lam, cert.eta, cert.xi)
    if margin > 0:
        violations.append(f"constraint violated by {float(margin):.3e}")
    if not cert.feasibility_margin <= 0:
        violations.append(f"recorded margin {cert.feasibility_margin!r} is not <= 0")
    exact_obj = data.objective(cert.lam, cert.eta, cert.xi)
    claimed = Fraction(cert.objective_value) if math.isfinite(cert.objective_value) else None
    if claimed is None or claimed < exact_obj:
        violations.append(
            f"claimed objective {cert.objective_value!r} is below the recomputed "
            f"{float(exact_obj)!r}"
        )
    elif claimed - exact_obj > OBJECTIVE_MATCH_TOL:
        violations.append(
            f"claimed objective {cert.objective_value!r} differs from the recomputed "
            f"{float(exact_obj)!r}"
        )
    report = VerificationReport(not violations, tuple(violations), float_up(margin),
                                float_up(exact_obj))
    if strict and violations:
        raise VerificationError("; ".join(violations), violations)
    return report


@dataclass(frozen=True, eq=False)
class RandomnessResult:
    guessing_bound: float
    min_entropy: float
    certificate: DualCertificate
    primal_value: float = math.nan
    duality_gap: float = math.nan
    tail_mode: str = ""
    gap_alarm: bool = False
    diagnostics: dict = field(default_factory=dict)


def min_entropy(cert: DualCertificate) -> RandomnessResult:
    """Min-entropy bound -log2(min(d, 1)) in bits from a verified certificate."""
    d = cert.objective_value
    if not d > 0:
        raise CertificationError(f"certificate objective {d!r} is not positive")
    bound = min(d, 1.0)
    h = 0.0 if bound >= 1.0 else -math.log2(bound)
    return RandomnessResult(bound, h, cert)


def certify(ctx: TruncationContext, stats: MeasurementStatistics) -> RandomnessResult:
    """Dual solve, repair, exact verification and min-entropy, plus a primal check.

    Raises :class:`VerificationError` if the repaired certificate does not
    verify; no bound is returned in that case.
    """
    dual = build_dual(ctx, stats)
    sol = solve_lp(dual)
    cert = repair_dual_certificate(dual_from_solution(sol, ctx.n_outcomes), ctx, stats)
    verify_certificate(cert, ctx, stats, strict=True)
    result = min_entropy(cert)

    primal = solve_lp(build_primal(ctx, stats))
    primal_value = primal.objective if primal.ok else math.nan
    gap = cert.objective_value - primal_value
    alarm = not (gap <= GAP_ALARM)
    if alarm:
        log.warning("duality gap %.3e exceeds %.1e (primal status %s)", gap, GAP_ALARM,
                    primal.status)
    return replace(
        result,
        primal_value=primal_value,
        duality_gap=gap,
        tail_mode=ctx.tail_mode,
        gap_alarm=alarm,
        diagnostics={"dual_solver_objective": sol.objective, "primal_status": primal.status},
    )


# -- brute-force oracle ------------------------------------------------------
#
# Columns (k, n) of the primal with the same n have identical constraint
# coefficients, so only their sum sigma(n) = sum_k rho_k(n) is constrained.
# The vertices of the sigma polytope are enumerated directly by solving every
# square subsystem of active constraints; no LP solver is involved.

VERTEX_BUDGET = 200_000


def _sigma_system(ctx: TruncationContext, stats: MeasurementStatistics):
    p_low = lower_probabilities(stats, ctx)
    theta = ctx.truncated
    m, N = theta.shape
    A = np.vstack([theta, -theta, np.ones((1, N)), -np.eye(N)])
    b = np.concatenate([stats.probabilities, -p_low, [1.0], np.zeros(N)])
    return A, b


def feasible_vertices(
    ctx: TruncationContext,
    stats: MeasurementStatistics,
    tol: float = 1e-12,
    budget: int = VERTEX_BUDGET,
) -> np.ndarray:
    """Vertices sigma of the aggregated feasible polytope, shape (V, N)."""
    A, b = _sigma_system(ctx, stats)
    n_rows, N = A.shape
    n_subsets = math.comb(n_rows, N)
    if n_subsets > budget:
        raise BudgetExceededError(f"{n_subsets} active sets exceed the budget {budget}")
    found = []
    for rows in itertools.combinations(range(n_rows), N):
        sub = A[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, b[list(rows)])
        if np.all(A @ x <= b + tol):
            found.append(np.clip(x, 0.0, None))
    if not found:
        return np.zeros((0, N))
    return np.unique(np.round(np.array(found), 14), axis=0)


def _primal_objective(rho: np.ndarray, theta: np.ndarray) -> float:
    """1 + sum_k tr(rho_k M_k) - sum_k tr(rho_k) for diagonal rho of shape (m, N)."""
    return float(1.0 + np.sum(rho * theta) - np.sum(rho))


def _feasible(rho, theta, p, p_low, tol):
    load = theta @ rho.sum(axis=0)
    return (rho.min() >= -tol and rho.sum() <= 1 + tol
            and np.all(load <= p + tol) and np.all(load >= p_low - tol))


def brute_force_guessing_bound(
    ctx: TruncationContext,
    stats: MeasurementStatistics,
    samples: int = 200,
    seed: int = 0,
    max_vars: int = 12,
) -> float:
    """Best primal value found without an LP solver (a lower bound on the optimum).

    Combines exhaustive vertex enumeration of the aggregated polytope with a
    randomized hit-and-run ascent over the full rho_k(n) variables.
    """
    theta = ctx.truncated
    m, N = theta.shape
    if m * N > max_vars:
        raise BudgetExceededError(f"{m}x{N} variables exceed the brute-force limit {max_vars}")
    p = stats.probabilities
    p_low = lower_probabilities(stats, ctx)
    verts = feasible_vertices(ctx, stats)
    if verts.shape[0] == 0:
        raise CertificationError("feasible region is empty")

    best = -math.inf
    best_k = theta.argmax(axis=0)
    for sigma in verts:
        rho = np.zeros((m, N))
        rho[best_k, np.arange(N)] = sigma
        if _feasible(rho, theta, p, p_low, 1e-12):
            best = max(best, _primal_objective(rho, theta))

    rng = np.random.default_rng(seed)
    # constraint rows over flattened rho: upper, lower, normalization, nonnegativity
    block = np.tile(theta, (1, m))
    A = np.vstack([block, -block, np.ones((1, m * N)), -np.eye(m * N)])
    b = np.concatenate([p, -p_low, [1.0], np.zeros(m * N)])
    c = (theta - 1.0).ravel()
    center = verts.mean(axis=0)
    x = (np.tile(center, (m, 1)) / m).ravel()
    for _ in range(samples):
        d = rng.standard_normal(m * N)
        if c @ d < 0:
            d = -d
        Ad = A @ d
        slack = b - A @ x
        with np.errstate(divide="ignore", invalid="ignore"):
            steps = np.where(Ad > 1e-15, np.maximum(slack, 0.0) / Ad, np.inf)
        t = float(steps.min())
        if not math.isfinite(t):
            continue
        # stop short of the boundary by a random fraction to keep exploring
        x = x + t * rng.uniform(0.5, 1.0) * d
        x = np.clip(x, 0.0, None)
        rho = x.reshape(m, N)
        if _feasible(rho, theta, p, p_low, 1e-12):
            best = max(best, _primal_objective(rho, theta))
    return best
