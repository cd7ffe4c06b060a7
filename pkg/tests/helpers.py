"""Shared independent oracles for the test suite."""

import numpy as np

from localgd import LogisticL2, QuadraticShift, make_suite


def central_difference_grad(value_fn, x, rel_step=1e-6):
    """Two-sided finite differences, step scaled by the point's magnitude."""
    x = np.asarray(x, dtype=np.float64)
    h = rel_step * (1.0 + np.linalg.norm(x))
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        g[i] = (value_fn(x + e) - value_fn(x - e)) / (2.0 * h)
    return g


def centralized_gd(suite, gamma, T, x0):
    """Plain gradient descent on the suite average; returns (T+1, d) iterates."""
    x = np.asarray(x0, dtype=np.float64).copy()
    out = np.empty((T + 1, x.size))
    out[0] = x
    for t in range(T):
        x = x - gamma * suite.grad(x)
        out[t + 1] = x
    return out


def two_point_quadratic_suite():
    """Two one-dimensional quadratics with minimizers 0 and 2; average optimum 1."""
    return make_suite([QuadraticShift(b=np.array([0.0])), QuadraticShift(b=np.array([2.0]))])


def random_logistic_member(rng, d, n=8, lam=0.1):
    A = rng.standard_normal((n, d)) / np.sqrt(d)
    y = rng.choice([-1.0, 1.0], size=n)
    return LogisticL2(A=A, y=y, lam=lam)


def random_logistic_suite(rng, M, d, lam=0.1):
    return make_suite(
        random_logistic_member(rng, d, n=int(rng.integers(4, 12)), lam=lam) for _ in range(M)
    )
