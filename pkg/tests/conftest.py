import numpy as np
import pytest

from lossylqr import NoSolutionError, SystemSpec, critical_probability, dare_solve


@pytest.fixture(scope="session")
def example1() -> SystemSpec:
    """Scalar unstable plant A=1.5 with unit input, cost, and penalty."""
    return SystemSpec(A=1.5, B=1.0, Q=1.0, R=1.0, name="example1")


@pytest.fixture(scope="session")
def example2() -> SystemSpec:
    """Two-state plant with one unstable mode and identity B, Q, R."""
    return SystemSpec(
        A=np.array([[1.5, 0.1], [0.0, 1.0]]),
        B=np.eye(2),
        Q=np.eye(2),
        R=np.eye(2),
        name="example2",
    )


def scalar_mare_root(q: float, a: float = 1.5) -> float:
    """Independent oracle for the scalar modified Riccati equation with B=Q=R=1.

    Clearing denominators turns the fixed-point equation into the quadratic
    (1 - a^2 q) P^2 - a^2 P - 1 = 0; the positive root is the solution.
    """
    roots = np.roots([1.0 - a * a * q, -(a * a), -1.0])
    real = roots[np.abs(roots.imag) < 1e-12].real
    positive = real[real > 0]
    assert positive.size == 1
    return float(positive[0])


def random_stabilizable_system(rng: np.random.Generator, n_max: int = 4) -> SystemSpec:
    """Random stabilizable (A, B) with PD costs; retries until the DARE converges."""
    while True:
        n = int(rng.integers(1, n_max + 1))
        m = int(rng.integers(1, n + 1))
        A = rng.normal(size=(n, n))
        rho = max(np.abs(np.linalg.eigvals(A)))
        A *= rng.uniform(0.3, 1.6) / max(rho, 1e-9)
        B = rng.normal(size=(n, m))
        GQ = rng.normal(size=(n, n))
        GR = rng.normal(size=(m, m))
        sys = SystemSpec(
            A=A,
            B=B,
            Q=GQ @ GQ.T + 0.5 * np.eye(n),
            R=GR @ GR.T + 0.5 * np.eye(m),
        )
        try:
            dare_solve(sys)
        except NoSolutionError:
            continue
        return sys


def feasible_rate_ceiling(sys: SystemSpec) -> float:
    """A loss rate strictly below the critical probability for any B."""
    cp = critical_probability(sys, refine=False)
    return cp.exact if cp.exact is not None else cp.lower
