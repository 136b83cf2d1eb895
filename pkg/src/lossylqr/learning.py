"""Finite-sample estimation of the loss rate and what it buys.

Given N_q i.i.d. channel bits, the empirical drop fraction q_hat deviates
from the true rate q by at most Delta(N_q, beta) = sqrt(log(2/beta)/(2 N_q))
with probability at least 1 - beta.  Combining that radius with the
stability-threshold bounds yields sample-complexity bounds for the
certainty-equivalence controller to be stabilizing, and a practical
certificate that tests stability without knowing q: the largest rate the
design provably tolerates (a one-dimensional semidefinite feasibility
problem, solved here in closed form) must exceed q_hat + Delta.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalFailureError
from .numerics import sym_eig_extremes, symmetrize
from .riccati import SystemSpec, ce_gain
from .stability import (
    STRICT_MARGIN,
    VARIANT_GENERAL,
    VARIANT_INVERTIBLE_B,
    VARIANT_SCALAR,
    gain_weight_matrix,
    st_lower_bound,
)

VARIANT_FROM_THRESHOLD = "from_threshold"
COMPLEXITY_VARIANTS = (
    VARIANT_FROM_THRESHOLD,
    VARIANT_GENERAL,
    VARIANT_SCALAR,
    VARIANT_INVERTIBLE_B,
)

# Bisection tolerance for the cross-check of the closed-form certificate rate.
QBAR_BISECT_TOL = 1e-8


@dataclass(frozen=True)
class ChannelSamples:
    """A finite record of Bernoulli channel bits (1 = delivered, 0 = dropped)."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1:
            raise InvalidInputError(f"channel samples must be a 1-d bit array, got ndim={bits.ndim}")
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise InvalidInputError("channel samples must contain only 0/1 bits")
        object.__setattr__(self, "bits", bits.astype(np.int8))

    @property
    def count(self) -> int:
        return int(self.bits.size)


@dataclass(frozen=True)
class Certificate:
    """Outcome of the data-driven stability check for a designed controller.

    passed means q_bar >= q_hat + delta: every loss rate compatible with the
    samples (at confidence 1 - beta) is provably tolerated by the design.
    """

    q_hat: float
    N_q: int
    beta: float
    delta: float
    q_bar: float
    passed: bool


@dataclass(frozen=True)
class ComplexityReport:
    """Sample-size bound for the controller to be stabilizing w.p. >= 1 - beta."""

    variant: str
    bound: float
    min_N: int
    infinite: bool = False


def estimate_loss_rate(samples: ChannelSamples) -> float:
    """Empirical drop fraction (1/N) * sum(1 - bit_i)."""
    n = samples.count
    if n < 1:
        raise InvalidInputError("cannot estimate a loss rate from zero samples")
    drops = n - int(samples.bits.sum())
    return drops / n


def hoeffding_delta(N_q: int, beta: float) -> float:
    """Confidence radius sqrt(log(2/beta) / (2 N_q)) of the empirical rate."""
    if N_q < 1:
        raise InvalidInputError(f"sample count must be >= 1, got {N_q}")
    if not 0.0 < beta < 1.0:
        raise InvalidInputError(f"confidence level beta must lie in (0, 1), got {beta}")
    return math.sqrt(math.log(2.0 / beta) / (2.0 * N_q))


def min_samples(
    sys: SystemSpec | None,
    q: float | None,
    beta: float,
    variant: str,
    delta_bar: float | None = None,
) -> ComplexityReport:
    """Sample-complexity bound N_q for the controller to stabilize w.p. >= 1 - beta.

    Variants and the bounds they evaluate (delta is the matching
    stability-threshold lower bound at the true rate q):

    * "from_threshold": log(2/beta) / (2 delta_bar^2) for a caller-supplied
      threshold;
    * "general":        log(2/beta) / (2 delta^2), delta from the general
      threshold bound (equivalently c1^2 log(2/beta) / (2 lambda_min{...}^2));
    * "scalar" and "invertible_B": log(2/beta) / delta^2 with the tailored
      thresholds -- these two carry no factor 2, matching their published
      form; the discrepancy with the factor-2 variants is deliberate and
      surfaced in the report values.

    min_N = floor(bound) + 1 respects the strict inequality.  A zero
    threshold makes the requirement unbounded: the report is flagged
    infinite.
    """
    if not 0.0 < beta < 1.0:
        raise InvalidInputError(f"confidence level beta must lie in (0, 1), got {beta}")
    if variant not in COMPLEXITY_VARIANTS:
        raise InvalidInputError(f"unknown sample-complexity variant {variant!r}")
    log_term = math.log(2.0 / beta)

    if variant == VARIANT_FROM_THRESHOLD:
        if delta_bar is None or not delta_bar > 0.0:
            raise InvalidInputError("from_threshold requires a positive delta_bar")
        delta = float(delta_bar)
        factor = 2.0
    else:
        if sys is None or q is None:
            raise InvalidInputError(f"variant {variant!r} requires a system and a loss rate")
        delta = st_lower_bound(sys, q, variant).bound
        factor = 2.0 if variant == VARIANT_GENERAL else 1.0

    if delta <= 0.0:
        return ComplexityReport(variant=variant, bound=math.inf, min_N=0, infinite=True)
    bound = log_term / (factor * delta * delta)
    return ComplexityReport(variant=variant, bound=bound, min_N=int(math.floor(bound)) + 1)


def _tolerated_rate_sup(sys: SystemSpec, q_hat: float) -> float:
    """sup{x : Q + (1-x) K^T R K - (x - q_hat) W > 0} for the design at q_hat.

    The constraint is affine and decreasing in x, so the supremum is
    1/lambda_max(C0^{-1/2} C1 C0^{-1/2}) with C0 the constraint matrix at
    x = 0 and C1 its (constant, PSD) slope.  A bisection on the smallest
    eigenvalue cross-checks the closed form.
    """
    gain, sol = ce_gain(sys, q_hat)
    W = gain_weight_matrix(sys, sol.P)
    KtRK = symmetrize(gain.K.T @ sys.R @ gain.K)
    C0 = symmetrize(sys.Q + KtRK + q_hat * W)
    C1 = symmetrize(KtRK + W)

    w0, V0 = np.linalg.eigh(C0)
    root_inv = (V0 / np.sqrt(w0)) @ V0.T
    _, lam_max = sym_eig_extremes(root_inv @ C1 @ root_inv)
    scale = STRICT_MARGIN * (1.0 + np.linalg.norm(sys.Q))
    if lam_max <= scale:
        return math.inf
    x_sup = 1.0 / lam_max

    def lmin_at(x: float) -> float:
        lmin, _ = sym_eig_extremes(C0 - x * C1)
        return lmin

    hi_probe = min(1.0, x_sup * 2.0 + 1.0)
    if lmin_at(hi_probe) > 0.0:
        x_bisect = hi_probe
    else:
        lo, hi = max(0.0, q_hat), hi_probe
        while hi - lo > QBAR_BISECT_TOL:
            mid = 0.5 * (lo + hi)
            if lmin_at(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        x_bisect = 0.5 * (lo + hi)
    if min(x_sup, 1.0) > QBAR_BISECT_TOL + 1e-6 and abs(min(x_sup, hi_probe) - x_bisect) > 1e-6:
        raise NumericalFailureError(
            f"closed-form tolerated rate {x_sup:.9f} disagrees with bisection {x_bisect:.9f}"
        )
    return x_sup


def certify_ce_controller(sys: SystemSpec, q_hat: float, N_q: int, beta: float) -> Certificate:
    """Data-driven stability certificate for the controller designed at q_hat.

    q_bar is the largest loss rate (capped at 1) the design provably
    tolerates by the sufficient condition; the certificate passes when
    q_bar >= q_hat + Delta(N_q, beta), in which case the controller
    stabilizes the true system with probability at least 1 - beta.
    """
    delta = hoeffding_delta(N_q, beta)
    q_bar = min(1.0, _tolerated_rate_sup(sys, q_hat))
    q_bar = max(q_bar, q_hat)
    return Certificate(
        q_hat=q_hat,
        N_q=int(N_q),
        beta=beta,
        delta=delta,
        q_bar=float(q_bar),
        passed=bool(q_bar >= q_hat + delta),
    )
