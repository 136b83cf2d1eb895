"""Modified and standard discrete algebraic Riccati equations, critical loss
probability, certainty-equivalence gain synthesis, and optimal cost.

The plant is x_{t+1} = A x_t + lam_t B u_t with i.i.d. Bernoulli lam_t
(drop probability q).  The optimal infinite-horizon controller for a known q
is u_t = K x_t with K = -(R + B^T P B)^{-1} B^T P A, where P solves the
modified Riccati equation

    P = Q + A^T P A - (1 - q) A^T P B (R + B^T P B)^{-1} B^T P A.

A positive definite solution exists iff q is below a critical probability
q_c that depends on the unstable eigenvalues of A.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InvalidInputError, NoSolutionError
from .numerics import sym_eig_extremes, symmetrize

# Fixed-point iteration controls for the (modified) Riccati equation.
MAX_ITERATIONS = 10**5
RESIDUAL_TOL = 1e-10
STEP_TOL = 1e-12
DIVERGENCE_NORM = 1e12

# Eigenvalues of A with modulus above this count as unstable.
UNSTABLE_MODULUS = 1.0 + 1e-9
# Relative singular-value threshold for rank decisions on B.
RANK_RTOL = 1e-10
# Absolute tolerance of the critical-probability bisection.
QC_BISECT_TOL = 1e-6


def _as_2d(M, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise InvalidInputError(f"{name} must be a matrix, got ndim={M.ndim}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return M


@dataclass(frozen=True)
class SystemSpec:
    """Plant and cost data (A, B, Q, R).

    Q and R must be symmetric positive definite.  Stabilizability of (A, B)
    is not checked eagerly; it is certified operationally by `dare_solve`
    converging (a non-stabilizable pair makes the iteration diverge and
    raises NoSolutionError).
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    name: str = ""

    def __post_init__(self):
        A = _as_2d(self.A, "A")
        B = _as_2d(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        n = A.shape[0]
        if B.shape[0] != n:
            raise DimensionError(f"B has {B.shape[0]} rows, expected {n}")
        m = B.shape[1]
        Q = symmetrize(_as_2d(self.Q, "Q"))
        R = symmetrize(_as_2d(self.R, "R"))
        if Q.shape != (n, n):
            raise DimensionError(f"Q must be {n}x{n}, got {Q.shape}")
        if R.shape != (m, m):
            raise DimensionError(f"R must be {m}x{m}, got {R.shape}")
        for label, M in (("Q", Q), ("R", R)):
            lmin, _ = sym_eig_extremes(M)
            if lmin <= 0.0:
                raise InvalidInputError(f"{label} must be positive definite (lambda_min={lmin:.3e})")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def is_scalar(self) -> bool:
        return self.n == 1 and self.m == 1


@dataclass(frozen=True)
class RiccatiSolution:
    """Positive definite Riccati fixed point with solver diagnostics."""

    P: np.ndarray
    q_used: float
    iterations: int
    residual: float


@dataclass(frozen=True)
class Gain:
    """State-feedback gain and the loss-rate estimate it was designed for."""

    K: np.ndarray
    q_design: float


@dataclass(frozen=True)
class CriticalProbability:
    """Critical loss probability q_c, exact or bracketed.

    `exact` is set when a closed form applies (invertible or rank-one B) or
    when A is Schur stable (then q_c imposes no constraint and is reported
    as 1 by convention).  Otherwise `lower`/`upper` bracket q_c; `bisection`
    narrows the bracket to QC_BISECT_TOL using solver convergence as the
    feasibility test.
    """

    lower: float
    upper: float
    exact: float | None
    method: str  # invertible_B | rank_one_B | bracket_only | bisection
    unstable_moduli: tuple[float, ...] = field(default=())


def _mare_step(X: np.ndarray, sys: SystemSpec, one_minus_q: float) -> np.ndarray:
    A, B, Q, R = sys.A, sys.B, sys.Q, sys.R
    XB = X @ B
    inner = R + B.T @ XB
    AtXB = A.T @ XB
    step = Q + A.T @ X @ A - one_minus_q * (AtXB @ np.linalg.solve(inner, AtXB.T))
    return 0.5 * (step + step.T)


def mare_solve(sys: SystemSpec, q: float) -> RiccatiSolution:
    """Solve the modified Riccati equation for loss rate q by fixed-point iteration.

    Starts from X = Q and iterates until the relative Frobenius residual is
    below RESIDUAL_TOL and the iterate change below STEP_TOL.  Iterate blow-up
    or hitting the iteration cap raises NoSolutionError, which signals that q
    is at or above the critical probability.
    """
    if not 0.0 <= q < 1.0:
        raise InvalidInputError(f"loss rate must lie in [0, 1), got {q}")
    one_minus_q = 1.0 - q
    X = sys.Q.copy()
    # Stall detector: converging within the cap needs the relative change to
    # shrink by >= 13% per 500-iteration window, so two consecutive windows
    # without 10% improvement already prove the cap would be hit.
    window, stall_after = 500, 2000
    best_prev, best_cur, stalls = np.inf, np.inf, 0
    for it in range(1, MAX_ITERATIONS + 1):
        Xn = _mare_step(X, sys, one_minus_q)
        norm = np.linalg.norm(Xn)
        if not np.isfinite(norm) or norm > DIVERGENCE_NORM:
            raise NoSolutionError(
                f"Riccati iterate diverged at q={q:.6g}; no positive definite solution "
                "(loss rate at or above critical, or (A, B) not stabilizable)"
            )
        rel_change = np.linalg.norm(Xn - X) / (1.0 + norm)
        X = Xn
        if rel_change <= STEP_TOL:
            residual = np.linalg.norm(_mare_step(X, sys, one_minus_q) - X) / (1.0 + norm)
            if residual <= RESIDUAL_TOL:
                return RiccatiSolution(P=X, q_used=q, iterations=it, residual=float(residual))
        best_cur = min(best_cur, rel_change)
        if it % window == 0:
            if it >= stall_after and best_cur > 0.9 * best_prev:
                stalls += 1
                if stalls >= 2:
                    break
            else:
                stalls = 0
            best_prev, best_cur = best_cur, np.inf
    raise NoSolutionError(
        f"Riccati iteration cannot reach tolerance within {MAX_ITERATIONS} steps at q={q:.6g} "
        "(loss rate at or above critical, or (A, B) not stabilizable)"
    )


def dare_solve(sys: SystemSpec) -> RiccatiSolution:
    """Standard discrete algebraic Riccati equation (lossless channel, q = 0)."""
    return mare_solve(sys, 0.0)


def _mare_feasible(sys: SystemSpec, q: float) -> bool:
    try:
        mare_solve(sys, q)
        return True
    except NoSolutionError:
        return False


def critical_probability(sys: SystemSpec, refine: bool = True) -> CriticalProbability:
    """Critical loss probability of (A, B).

    Closed forms: 1/max|lam_u(A)|^2 for invertible B, 1/prod|lam_u(A)|^2 for
    rank-one B, where lam_u ranges over eigenvalues of A with modulus above 1.
    Otherwise the product/max expressions bracket q_c; with refine=True the
    bracket is narrowed by bisection on solver feasibility.
    """
    eigs = np.linalg.eigvals(sys.A)
    unstable = np.abs(eigs[np.abs(eigs) > UNSTABLE_MODULUS])
    unstable_t = tuple(sorted(float(u) for u in unstable))

    if unstable.size == 0:
        prod_sq = 1.0
        max_sq = 1.0
    else:
        prod_sq = float(np.prod(unstable**2))
        max_sq = float(np.max(unstable) ** 2)
    lower = min(1.0, 1.0 / prod_sq)
    upper = min(1.0, 1.0 / max_sq)

    sv = np.linalg.svd(sys.B, compute_uv=False)
    b_invertible = sys.B.shape[0] == sys.B.shape[1] and sv[-1] > RANK_RTOL * sv[0]
    b_rank = int(np.sum(sv > RANK_RTOL * sv[0]))

    if b_invertible:
        return CriticalProbability(upper, upper, upper, "invertible_B", unstable_t)
    if b_rank == 1:
        return CriticalProbability(lower, lower, lower, "rank_one_B", unstable_t)
    if unstable.size == 0:
        return CriticalProbability(1.0, 1.0, 1.0, "bracket_only", unstable_t)
    if not refine or upper - lower <= QC_BISECT_TOL:
        return CriticalProbability(lower, upper, None, "bracket_only", unstable_t)

    lo, hi = lower, upper
    if not _mare_feasible(sys, lo):
        # q_c sits at the bracket's lower end (within solver accuracy).
        return CriticalProbability(lo, lo, None, "bisection", unstable_t)
    while hi - lo > QC_BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if _mare_feasible(sys, mid):
            lo = mid
        else:
            hi = mid
    return CriticalProbability(lo, hi, None, "bisection", unstable_t)


def ce_gain(sys: SystemSpec, q_hat: float) -> tuple[Gain, RiccatiSolution]:
    """Certainty-equivalence optimal gain designed as if q_hat were the true loss rate."""
    sol = mare_solve(sys, q_hat)
    B, R = sys.B, sys.R
    PB = sol.P @ B
    K = -np.linalg.solve(R + B.T @ PB, PB.T @ sys.A)
    return Gain(K=K, q_design=q_hat), sol


def optimal_cost(P, X0) -> float:
    """Expected optimal cost tr(P X0) for initial second moment X0 = E[x0 x0^T]."""
    P = symmetrize(P)
    X0 = symmetrize(X0)
    if P.shape != X0.shape:
        raise DimensionError(f"P is {P.shape} but X0 is {X0.shape}")
    lmin_p, lmax_p = sym_eig_extremes(P)
    if lmin_p <= 0.0:
        raise InvalidInputError(f"P must be positive definite (lambda_min={lmin_p:.3e})")
    lmin_x, lmax_x = sym_eig_extremes(X0)
    if lmin_x < -1e-10 * (1.0 + lmax_x):
        raise InvalidInputError(f"X0 must be positive semi-definite (lambda_min={lmin_x:.3e})")
    return max(0.0, float(np.trace(P @ X0)))
