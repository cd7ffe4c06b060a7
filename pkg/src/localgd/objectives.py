"""Smooth convex local objectives and reference-solution machinery.

A problem instance is a suite of M local functions ``f_m`` sharing one
dimension d.  The global objective is their uniform average

    f(x) = (1/M) * sum_m f_m(x).

Two variants are provided:

* :class:`QuadraticShift`     f_m(x) = 0.5 * ||x - b_m||^2
* :class:`LogisticL2`         f_m(x) = (1/n_m) * sum_i log(1 + exp(-y_i <a_i, x>))
                              + (lam/2) * ||x||^2

All arithmetic is float64 with a fixed reduction order, so repeated
evaluation of any operation here is bit-reproducible.  Every object is
frozen after construction (arrays are marked read-only) and every
operation is pure, so suites can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import ConvergenceError

__all__ = [
    "QuadraticShift",
    "LogisticL2",
    "ObjectiveSuite",
    "ReferenceSolution",
    "make_suite",
    "eval_value",
    "eval_grad",
    "estimate_smoothness",
    "largest_squared_singular_value",
    "solve_reference",
    "compute_sigma2",
    "bregman",
    "DEFAULT_REFERENCE_TOL",
    "MAX_REFERENCE_ITERATIONS",
    "SMOOTHNESS_INFLATION",
]

#: Multiplicative headroom added to the power-iteration estimate of the
#: data-term curvature so that truncation error cannot understate L.
SMOOTHNESS_INFLATION = 1e-6

DEFAULT_REFERENCE_TOL = 1e-10
MAX_REFERENCE_ITERATIONS = 10_000_000

_POWER_ITERATION_SEED = 12345


def _as_vector(x, d: int, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != d:
        raise ValueError(f"{name} must be a 1-D vector of length {d}, got shape {x.shape}")
    return x


def _frozen_array(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QuadraticShift:
    """f(x) = 0.5 * ||x - b||^2 with gradient x - b and Hessian I.

    The unique minimizer is b and the smoothness constant is exactly 1.
    """

    b: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=np.float64)
        if b.ndim != 1 or b.size == 0:
            raise ValueError("b must be a nonempty 1-D vector")
        object.__setattr__(self, "b", _frozen_array(b))

    @property
    def d(self) -> int:
        return self.b.shape[0]

    def value(self, x) -> float:
        x = _as_vector(x, self.d)
        r = x - self.b
        return 0.5 * float(r @ r)

    def grad(self, x) -> np.ndarray:
        x = _as_vector(x, self.d)
        return x - self.b

    def smoothness_bound(self) -> float:
        return 1.0


@dataclass(frozen=True, eq=False)
class LogisticL2:
    """Averaged logistic loss over labeled rows plus an l2 ridge.

        f(x) = (1/n) * sum_i log(1 + exp(-y_i <a_i, x>)) + (lam/2) * ||x||^2

    The loss term is evaluated through ``logaddexp`` so large margins stay
    finite, and the gradient through ``expit`` so no intermediate
    exponential overflows.
    """

    A: sp.csr_matrix
    y: np.ndarray
    lam: float

    def __post_init__(self):
        A = sp.csr_matrix(self.A, dtype=np.float64, copy=True)
        A.sort_indices()
        for arr in (A.data, A.indices, A.indptr):
            arr.setflags(write=False)
        y = np.asarray(self.y, dtype=np.float64)
        if A.shape[0] < 1:
            raise ValueError("need at least one data row")
        if y.shape != (A.shape[0],):
            raise ValueError(f"labels must have shape ({A.shape[0]},), got {y.shape}")
        if not np.all(np.abs(y) == 1.0):
            raise ValueError("labels must all be +1 or -1")
        lam = float(self.lam)
        if not (lam >= 0.0 and np.isfinite(lam)):
            raise ValueError("lam must be a finite nonnegative float")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", _frozen_array(y))
        object.__setattr__(self, "lam", lam)

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def _margins(self, x: np.ndarray) -> np.ndarray:
        return self.y * (self.A @ x)

    def value(self, x) -> float:
        x = _as_vector(x, self.d)
        t = self._margins(x)
        val = float(np.sum(np.logaddexp(0.0, -t))) / self.n
        if self.lam:
            val += 0.5 * self.lam * float(x @ x)
        return val

    def grad(self, x) -> np.ndarray:
        x = _as_vector(x, self.d)
        t = self._margins(x)
        coef = (self.y * expit(-t)) * (-1.0 / self.n)
        g = np.asarray(self.A.T @ coef).ravel()
        if self.lam:
            g = g + self.lam * x
        return g

    def smoothness_bound(self) -> float:
        ssq = largest_squared_singular_value(self.A)
        return ssq * (1.0 + SMOOTHNESS_INFLATION) / (4.0 * self.n) + self.lam


@dataclass(frozen=True, eq=False)
class ObjectiveSuite:
    """A family of M local functions over a common dimension d.

    ``L`` is a certified upper bound on the smoothness constant of every
    member (hence also of the average).  Build instances through
    :func:`make_suite` so that L is computed consistently.
    """

    functions: tuple
    d: int
    M: int
    L: float

    def value(self, x) -> float:
        x = _as_vector(x, self.d)
        total = 0.0
        for fm in self.functions:
            total += fm.value(x)
        return total / self.M

    def grad(self, x) -> np.ndarray:
        x = _as_vector(x, self.d)
        g = np.zeros(self.d)
        for fm in self.functions:
            g += fm.grad(x)
        return g / self.M


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    """Numerical minimizer of a suite plus the statistics derived from it.

    ``sigma2`` is the mean squared norm of the local gradients at the
    minimizer; it measures how heterogeneous the local functions are
    (zero when they share a common minimizer).
    """

    x_star: np.ndarray
    f_star: float
    sigma2: float
    grad_norm_residual: float
    iterations_used: int

    def __post_init__(self):
        object.__setattr__(self, "x_star", _frozen_array(self.x_star))


def make_suite(functions) -> ObjectiveSuite:
    """Validate a family of local functions and certify its smoothness."""
    functions = tuple(functions)
    if not functions:
        raise ValueError("a suite needs at least one local function")
    d = functions[0].d
    for i, fm in enumerate(functions):
        if fm.d != d:
            raise ValueError(f"function {i} has dimension {fm.d}, expected {d}")
    if d < 1:
        raise ValueError("suite dimension must be at least 1")
    L = max(fm.smoothness_bound() for fm in functions)
    if not (L > 0.0 and np.isfinite(L)):
        raise ValueError(f"computed smoothness bound {L} is not a positive finite float")
    return ObjectiveSuite(functions=functions, d=d, M=len(functions), L=L)


def eval_value(fm, x) -> float:
    """Value of a single local function at x."""
    return fm.value(x)


def eval_grad(fm, x) -> np.ndarray:
    """Gradient of a single local function at x."""
    return fm.grad(x)


def largest_squared_singular_value(A, tol: float = 1e-9, max_iter: int = 10_000) -> float:
    """Largest eigenvalue of A^T A (= s_max(A)^2) by power iteration.

    Uses a fixed seeded start vector so results are bit-reproducible, and
    stops when the Rayleigh quotient's relative change drops below ``tol``.
    Raises :class:`ConvergenceError` (carrying the last estimate) if the
    iteration budget runs out.
    """
    if not sp.issparse(A):
        A = sp.csr_matrix(np.atleast_2d(np.asarray(A, dtype=np.float64)))
    if A.nnz == 0:
        return 0.0
    d = A.shape[1]
    rng = np.random.default_rng(_POWER_ITERATION_SEED)
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    prev = None
    for _ in range(max_iter):
        w = np.asarray(A.T @ (A @ v)).ravel()
        ray = float(v @ w)  # = ||A v||^2 since v is unit
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            # Start vector happened to lie in the null space; redraw.
            v = rng.standard_normal(d)
            v /= np.linalg.norm(v)
            continue
        if prev is not None and abs(ray - prev) <= tol * max(abs(ray), np.finfo(float).tiny):
            return ray
        prev = ray
        v = w / norm_w
    raise ConvergenceError(
        f"power iteration did not converge within {max_iter} iterations",
        achieved=prev,
    )


def estimate_smoothness(suite: ObjectiveSuite) -> float:
    """Certified smoothness upper bound: max over members of their bounds.

    Quadratic members contribute exactly 1; logistic members contribute
    s_max(A)^2 * (1 + headroom) / (4 n) + lam, with s_max obtained by
    power iteration.
    """
    if not suite.functions:
        raise ValueError("suite has no members")
    return max(fm.smoothness_bound() for fm in suite.functions)


def solve_reference(
    suite: ObjectiveSuite,
    tol: float = DEFAULT_REFERENCE_TOL,
    max_iterations: int = MAX_REFERENCE_ITERATIONS,
) -> ReferenceSolution:
    """Minimize the suite average by plain gradient descent at stepsize 1/L.

    Runs from the origin until ``||grad f(x)|| <= tol``.  If the budget is
    exhausted first, raises :class:`ConvergenceError` whose ``result``
    field carries the partial :class:`ReferenceSolution` so callers can
    accept a degraded reference explicitly.
    """
    if not (tol > 0.0):
        raise ValueError("tol must be positive")
    if not (suite.L > 0.0 and np.isfinite(suite.L)):
        raise ValueError("suite smoothness bound must be positive and finite")
    step = 1.0 / suite.L
    x = np.zeros(suite.d)
    iterations = 0
    g = suite.grad(x)
    gn = float(np.linalg.norm(g))
    while gn > tol:
        if iterations >= max_iterations:
            partial = ReferenceSolution(
                x_star=x,
                f_star=suite.value(x),
                sigma2=compute_sigma2(suite, x),
                grad_norm_residual=gn,
                iterations_used=iterations,
            )
            raise ConvergenceError(
                f"reference solve stalled at residual {gn:.3e} after {iterations} iterations",
                achieved=gn,
                result=partial,
            )
        x = x - step * g
        iterations += 1
        g = suite.grad(x)
        gn = float(np.linalg.norm(g))
    return ReferenceSolution(
        x_star=x,
        f_star=suite.value(x),
        sigma2=compute_sigma2(suite, x),
        grad_norm_residual=gn,
        iterations_used=iterations,
    )


def compute_sigma2(suite: ObjectiveSuite, x_star) -> float:
    """Mean squared norm of the local gradients at the reference point."""
    x_star = _as_vector(x_star, suite.d, "x_star")
    total = 0.0
    for fm in suite.functions:
        g = fm.grad(x_star)
        total += float(g @ g)
    return total / suite.M


def bregman(suite: ObjectiveSuite, x, y) -> float:
    """Divergence f(x) - f(y) - <grad f(y), x - y> of the suite average.

    Nonnegative by convexity and at most (L/2) ||x - y||^2 by smoothness.
    """
    x = _as_vector(x, suite.d)
    y = _as_vector(y, suite.d, "y")
    return suite.value(x) - suite.value(y) - float(suite.grad(y) @ (x - y))
