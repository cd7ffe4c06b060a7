"""Local gradient descent with periodic exact averaging, fully instrumented.

M workers hold copies ``x_t^m`` of the decision vector.  Each step every
worker moves along its own local gradient; whenever the step counter hits
a synchronization time the copies are replaced by their exact average.
The run records, at every t (including t = 0 and t = T):

    hat_x[t]    average iterate (1/M) sum_m x_t^m
    V[t]        iterate spread  (1/M) sum_m ||x_t^m - hat_x[t]||^2
    g_norm2[t]  ||g_t||^2 where g_t = (1/M) sum_m grad f_m(x_t^m)
    inner_rg[t] <hat_x[t] - x_star, g_t>
    D[t]        divergence f(hat_x[t]) - f(x_star) - <grad f(x_star), hat_x[t] - x_star>
    r2[t]       ||hat_x[t] - x_star||^2
    f_hat[t]    f(hat_x[t])
    f_bar[t]    f of the running average (1/t) sum_{s<t} hat_x[s]  (t=0: f_hat[0])

Workers are updated with identical floating-point operations in a fixed
order, so runs are bit-reproducible; at every synchronization time all M
copies are exactly identical and V is exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .objectives import ObjectiveSuite, ReferenceSolution, _as_vector

__all__ = [
    "SyncSchedule",
    "TrajectoryRecord",
    "make_uniform_schedule",
    "run_local_gd",
    "run_gd",
]


@dataclass(frozen=True)
class SyncSchedule:
    """Strictly increasing synchronization times 0 = t_0 < t_1 < ... < t_P = T."""

    sync_times: tuple[int, ...]

    def __post_init__(self):
        times = tuple(int(t) for t in self.sync_times)
        if len(times) < 2 or times[0] != 0:
            raise ValueError("schedule must start at 0 and contain a positive final time")
        if any(times[i] >= times[i + 1] for i in range(len(times) - 1)):
            raise ValueError("synchronization times must be strictly increasing")
        object.__setattr__(self, "sync_times", times)

    @property
    def T(self) -> int:
        return self.sync_times[-1]

    @property
    def P(self) -> int:
        """Number of epochs (= communication rounds)."""
        return len(self.sync_times) - 1

    @property
    def H(self) -> int:
        """Longest gap between consecutive synchronizations."""
        times = self.sync_times
        return max(times[i + 1] - times[i] for i in range(len(times) - 1))


def make_uniform_schedule(H: int, T: int) -> SyncSchedule:
    """Synchronize every H steps; requires H >= 1 and T a positive multiple of H."""
    H, T = int(H), int(T)
    if H < 1:
        raise ValueError("H must be at least 1")
    if T < 1 or T % H != 0:
        raise ValueError(f"T must be a positive multiple of H, got T={T}, H={H}")
    return SyncSchedule(sync_times=tuple(range(0, T + 1, H)))


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Everything recorded along one run; immutable after construction.

    ``hat_x`` is (T+1, d) or None when the run was executed in thin mode;
    the scalar series and the per-synchronization snapshots are always
    kept.  ``bar_x`` is the running average of hat_x over t = 0..T-1.
    """

    suite: ObjectiveSuite
    schedule: SyncSchedule
    gamma: float
    x0: np.ndarray
    ref: ReferenceSolution
    V: np.ndarray
    g_norm2: np.ndarray
    inner_rg: np.ndarray
    D: np.ndarray
    r2: np.ndarray
    f_hat: np.ndarray
    f_bar: np.ndarray
    hat_x: np.ndarray | None
    sync_hat_x: np.ndarray
    sync_bar_x: np.ndarray
    bar_x: np.ndarray

    @property
    def T(self) -> int:
        return self.schedule.T

    @property
    def H(self) -> int:
        return self.schedule.H


def _worker_mean(rows: np.ndarray) -> np.ndarray:
    # The float mean of M identical rows is off by an ulp unless M is a
    # power of two; returning the common row keeps the documented
    # invariants exact (V = 0 whenever all copies agree, in particular at
    # every synchronization time).
    if rows.shape[0] == 1 or (rows[1:] == rows[0]).all():
        return rows[0].copy()
    return rows.mean(axis=0)


def run_local_gd(
    suite: ObjectiveSuite,
    ref: ReferenceSolution,
    gamma: float,
    schedule: SyncSchedule,
    x0,
    *,
    thin: bool = False,
) -> TrajectoryRecord:
    """Simulate the averaged-worker method and record its full trajectory.

    ``thin=True`` drops the dense (T+1, d) iterate history (the scalar
    series and synchronization-time snapshots are still recorded), which
    keeps memory flat for long runs.  Raises :class:`DivergenceError` at
    the first step that produces a non-finite value.
    """
    gamma = float(gamma)
    if not (gamma > 0.0 and np.isfinite(gamma)):
        raise ValueError("gamma must be a positive finite float")
    x0 = _as_vector(x0, suite.d, "x0")
    if ref.x_star.shape != (suite.d,):
        raise ValueError("reference solution dimension does not match the suite")
    M, d, T = suite.M, suite.d, schedule.T
    sync_set = frozenset(schedule.sync_times)

    g_star = suite.grad(ref.x_star)
    f_star = ref.f_star

    X = np.repeat(x0[None, :], M, axis=0)
    grads = np.empty((M, d))
    V = np.empty(T + 1)
    g_norm2 = np.empty(T + 1)
    inner_rg = np.empty(T + 1)
    D = np.empty(T + 1)
    r2 = np.empty(T + 1)
    f_hat = np.empty(T + 1)
    f_bar = np.empty(T + 1)
    hat_rows = None if thin else np.empty((T + 1, d))
    n_sync = len(schedule.sync_times)
    sync_hat = np.empty((n_sync, d))
    sync_bar = np.empty((n_sync, d))
    sync_pos = 0
    bar_sum = np.zeros(d)
    bar_final = None

    # Overflow to inf/nan is detected and reported as DivergenceError, so
    # numpy's own overflow warnings are redundant here.
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T + 1):
            for m, fm in enumerate(suite.functions):
                grads[m] = fm.grad(X[m])
            hat = _worker_mean(X)
            g = grads.mean(axis=0)
            dev = X - hat
            V[t] = float(np.sum(dev * dev)) / M
            r = hat - ref.x_star
            r2[t] = float(r @ r)
            g_norm2[t] = float(g @ g)
            inner_rg[t] = float(r @ g)
            fh = suite.value(hat)
            f_hat[t] = fh
            D[t] = fh - f_star - float(g_star @ r)
            if t > 0:
                xbar = bar_sum / t
                f_bar[t] = suite.value(xbar)
            else:
                xbar = hat
                f_bar[t] = fh
            if hat_rows is not None:
                hat_rows[t] = hat
            if t in sync_set:
                sync_hat[sync_pos] = hat
                sync_bar[sync_pos] = xbar
                sync_pos += 1
            if not np.isfinite(
                (V[t], r2[t], g_norm2[t], inner_rg[t], f_hat[t], f_bar[t], D[t])
            ).all():
                raise DivergenceError(t)
            if t == T:
                bar_final = xbar
                break
            bar_sum += hat
            X = X - gamma * grads
            if not np.isfinite(X).all():
                raise DivergenceError(t + 1)
            if (t + 1) in sync_set:
                avg = _worker_mean(X)
                X = np.repeat(avg[None, :], M, axis=0)

    x0 = x0.copy()
    for arr in (V, g_norm2, inner_rg, D, r2, f_hat, f_bar, sync_hat, sync_bar, bar_final, x0):
        arr.setflags(write=False)
    if hat_rows is not None:
        hat_rows.setflags(write=False)
    return TrajectoryRecord(
        suite=suite,
        schedule=schedule,
        gamma=gamma,
        x0=x0,
        ref=ref,
        V=V,
        g_norm2=g_norm2,
        inner_rg=inner_rg,
        D=D,
        r2=r2,
        f_hat=f_hat,
        f_bar=f_bar,
        hat_x=hat_rows,
        sync_hat_x=sync_hat,
        sync_bar_x=sync_bar,
        bar_x=bar_final,
    )


def run_gd(
    suite: ObjectiveSuite,
    ref: ReferenceSolution,
    gamma: float,
    T: int,
    x0,
    *,
    thin: bool = False,
) -> TrajectoryRecord:
    """Plain gradient descent: the H = 1 special case, synchronizing every step."""
    return run_local_gd(suite, ref, gamma, make_uniform_schedule(1, T), x0, thin=thin)
