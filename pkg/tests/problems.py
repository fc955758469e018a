"""Random problem generators shared by the test modules."""
import numpy as np

from linematch.geometry import TARGET

SIZES = (5, 50, 200)


def beta_problem(rng, n):
    """4 x n design with rows spread like real error vectors, plus a random penalty.

    Up to two columns sit close to the target so that the solution is not
    trivially zero.
    """
    A = np.empty((4, n))
    A[0] = rng.uniform(0, np.pi, n)
    A[1] = rng.uniform(0, np.pi / 2, n)
    A[2] = rng.uniform(0, 1, n)
    A[3] = 1 + rng.exponential(1.0, n)
    k = int(rng.integers(0, 3))
    for j in rng.choice(n, size=min(k, n), replace=False):
        A[:, j] = [abs(rng.normal(0, .05)), abs(rng.normal(0, .05)), rng.uniform(.6, 1), 1 + abs(rng.normal(0, .1))]
    lam = float(rng.uniform(0.02, 0.3))
    return A, TARGET.copy(), lam


def oracle_suite(count=1000, seed=0):
    """``count`` seeded problems cycling through the sizes 5, 50 and 200."""
    rng = np.random.default_rng(seed)
    for trial in range(count):
        yield beta_problem(rng, SIZES[trial % len(SIZES)])


def planted_problem(rng, n, noise=0.02, min_residual=0.3):
    """Error-vector columns with one planted near-perfect candidate.

    The planted column is the target plus N(0, noise) per entry, pushed back
    into the feasible range of each component. Every other column is the
    target plus an offset that respects those ranges and has norm at least
    ``min_residual``. Returns ``(A, planted_index)``.
    """
    A = np.empty((4, n))
    for j in range(n):
        while True:
            d = np.array([rng.uniform(0, 1.5), rng.uniform(0, 0.8), -rng.uniform(0, 0.9), rng.exponential(0.5)])
            d *= rng.uniform(0.2, 1.0)
            if np.linalg.norm(d) >= min_residual:
                break
        A[:, j] = TARGET + d
    k = int(rng.integers(n))
    e = rng.normal(0.0, noise, 4)
    A[:, k] = [abs(e[0]), abs(e[1]), 1 - abs(e[2]), 1 + abs(e[3])]
    return A, k
