"""Independent reference implementations used by the tests.

Nothing here imports the package's numerical kernels; each routine
recomputes its quantity by the most direct (slow) route.
"""

import math

import numpy as np

# real root of a^3 - 2 a^2 + 2 a - 2 (critical orbit 0 -> a -> -q -> q),
# by 140 bisection steps at 40 digits with mpmath
MISIUREWICZ_A0 = 1.543689012692076361570855971801747986525


def ht_brute(u, r, sigma, b, tol=1e-9):
    """Hyperbolic times straight from the definition, O(N^2).

    ``n`` qualifies when for every ``1 <= k <= n`` the window sum
    ``sum_{j=n-k}^{n-1} u_j <= k log sigma`` and ``r_{n-k} >= b k log sigma``.
    """
    u = np.asarray(u, float)
    r = np.asarray(r, float)
    ls = math.log(sigma)
    out = []
    for n in range(1, len(u) + 1):
        k = np.arange(1, n + 1)
        back = np.cumsum(u[:n][::-1])  # back[k-1] = window of length k ending at n-1
        rr = r[:n][::-1]
        if np.all(back <= k * ls + tol) and np.all(rr >= b * k * ls - tol):
            out.append(n)
    return np.array(out, dtype=np.int64)


def step_python(d, a0, alpha, theta, x):
    return (d * theta) % 1.0, a0 + alpha * math.sin(2 * math.pi * theta) - x * x


def fd_jacobian(d, a0, alpha, theta, x, h=1e-8):
    """Central differences of the map; the angle is unwrapped (no mod)."""
    def f(t, y):
        return np.array([d * t, a0 + alpha * math.sin(2 * math.pi * t) - y * y])

    J = np.empty((2, 2))
    J[:, 0] = (f(theta + h, x) - f(theta - h, x)) / (2 * h)
    J[:, 1] = (f(theta, x + h) - f(theta, x - h)) / (2 * h)
    return J


def dense_pressure(A, phi):
    M = np.asarray(A, float) * np.exp(np.asarray(phi, float))[None, :]
    return math.log(max(abs(np.linalg.eigvals(M))))


def chain_entropy(P, mu):
    """``-sum_i mu_i sum_j p_ij log p_ij`` by explicit loops."""
    P = np.asarray(P, float)
    h = 0.0
    for i in range(P.shape[0]):
        for j in range(P.shape[1]):
            if P[i, j] > 0:
                h -= mu[i] * P[i, j] * math.log(P[i, j])
    return h


def fibre_exponent(a, n_orbits=1000, n_steps=10_000, burn=100, seed=0):
    """Birkhoff average of ``log|2x|`` for ``x -> a - x^2``, vectorised ensemble."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-0.5, 0.5, n_orbits)
    for _ in range(burn):
        x = a - x * x
    acc = np.zeros(n_orbits)
    for _ in range(n_steps):
        acc += np.log(np.abs(2 * x))
        x = a - x * x
    return acc / n_steps
