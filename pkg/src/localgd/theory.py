"""Convergence bounds, communication planning, and mechanical inequality checks.

Every ``check_*`` operation takes an instrumented trajectory and verifies
one of the toolkit's numbered inequalities at every step (or epoch),
returning a :class:`CheckReport` that lists each violation.  All checks
allow a small additive slack scaled by the magnitudes involved, because
the reference minimizer is itself numerical.

Checks whose inequality is only claimed for small stepsizes
(``check_lemma2``, ``check_theorem1``, and the simplified form inside
``check_lemma1``) refuse to run outside gamma <= 1/(4*L*H) rather than
reporting spurious failures there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import TrajectoryRecord, make_uniform_schedule, run_local_gd
from .errors import PreconditionError
from .objectives import (
    LogisticL2,
    ObjectiveSuite,
    QuadraticShift,
    ReferenceSolution,
    make_suite,
    solve_reference,
)

__all__ = [
    "CheckReport",
    "PlannerResult",
    "SweepInstance",
    "check_lemma1",
    "check_lemma2",
    "check_lemma3",
    "check_lemma4",
    "theorem1_bound",
    "check_theorem1",
    "plan_communication",
    "discretize_plan",
    "corollary_bound",
    "corollary_comm_steps",
    "random_suite",
    "make_sweep_instance",
    "run_instance_checks",
    "standard_checks",
    "DEFAULT_SLACK",
    "GAMMA_RANGE_RTOL",
    "SWEEP_VARIANTS",
    "SWEEP_WORKER_COUNTS",
    "SWEEP_DIMENSIONS",
    "SWEEP_INTERVALS",
    "SWEEP_SIZE",
]

#: Additive slack coefficient shared by all inequality checks.
DEFAULT_SLACK = 1e-8

#: Relative tolerance on stepsize-range preconditions, so that
#: gamma = 1/(4*L*H) computed in floats sits inside its own range.
GAMMA_RANGE_RTOL = 1e-9


def _gamma_admissible(gamma: float, L: float, H: float) -> bool:
    return gamma * 4.0 * L * H <= 1.0 + GAMMA_RANGE_RTOL


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one inequality check over a whole trajectory.

    ``violations`` holds one entry per failing evaluation point:
    (index, form, lhs, rhs, gap) with gap = lhs - rhs > slack at that
    point.  ``slack_used`` is the slack coefficient; the actual slack is
    that coefficient times a magnitude factor recorded per check.
    """

    name: str
    total_points: int
    violations: tuple
    slack_used: float

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "total_points": self.total_points,
            "violations": [dict(v) for v in self.violations],
            "slack_used": self.slack_used,
            "pass": self.passed,
        }


def _collect(mask, form: str, lhs, rhs, indices=None) -> list:
    out = []
    where = np.nonzero(mask)[0]
    for i in where:
        idx = int(i if indices is None else indices[i])
        out.append(
            {
                "index": idx,
                "form": form,
                "lhs": float(lhs[i]),
                "rhs": float(rhs[i]),
                "gap": float(lhs[i] - rhs[i]),
            }
        )
    return out


def check_lemma1(traj: TrajectoryRecord, L: float, slack: float = DEFAULT_SLACK) -> CheckReport:
    """Per-step recursion on the squared distance to the optimum.

    General form, any stepsize:

        r2[t+1] <= r2[t] + g*L*(1+2*g*L)*V[t] - 2*g*(1-2*g*L)*D[t]

    and additionally, when gamma <= 1/(4L), the simplified form

        r2[t+1] <= r2[t] + 1.5*g*L*V[t] - g*D[t].
    """
    if traj.ref is None:
        raise ValueError("trajectory carries no reference solution")
    g = traj.gamma
    r2, V, D = traj.r2, traj.V, traj.D
    lhs = r2[1:]
    pad = slack * (1.0 + r2[:-1])
    violations = []
    rhs = r2[:-1] + g * L * (1.0 + 2.0 * g * L) * V[:-1] - 2.0 * g * (1.0 - 2.0 * g * L) * D[:-1] + pad
    violations += _collect(lhs > rhs, "general", lhs, rhs)
    total = lhs.size
    if _gamma_admissible(g, L, 1.0):
        rhs = r2[:-1] + 1.5 * g * L * V[:-1] - g * D[:-1] + pad
        violations += _collect(lhs > rhs, "simplified", lhs, rhs)
        total += lhs.size
    return CheckReport("lemma1", total, tuple(violations), slack)


def check_lemma2(
    traj: TrajectoryRecord,
    L: float,
    sigma2: float,
    slack: float = DEFAULT_SLACK,
    strict: bool = False,
) -> CheckReport:
    """Epoch-summed bounds on the iterate spread V.

    For each epoch [t_p, t_{p+1}) the two stated inequalities are

        sum V <= 5*L*g^2*H^2 * sum D + n_ep * 8*g^2*H^2*sigma2
        sum (1.5*L*V - D) <= -0.5 * sum D + n_ep * 12*L*g^2*H^2*sigma2

    where n_ep is the epoch length.  ``strict=True`` additionally checks
    the tighter constants (7.5 and 11.25) that the derivation actually
    produces before rounding up.
    """
    g, H = traj.gamma, traj.schedule.H
    if not _gamma_admissible(g, L, H):
        raise PreconditionError(
            f"check_lemma2 requires gamma <= 1/(4*L*H); got gamma={g}, L={L}, H={H}"
        )
    times = traj.schedule.sync_times
    P = len(times) - 1
    sum_V = np.empty(P)
    sum_D = np.empty(P)
    n_ep = np.empty(P)
    for p in range(P):
        a, b = times[p], times[p + 1]
        sum_V[p] = np.sum(traj.V[a:b])
        sum_D[p] = np.sum(traj.D[a:b])
        n_ep[p] = b - a
    pad = slack * (1.0 + sigma2 + sum_D)
    gh2 = (g * H) ** 2
    constants = [("stated", 8.0, 12.0)]
    if strict:
        constants.append(("proof", 7.5, 11.25))
    violations = []
    for tag, c_a, c_b in constants:
        lhs_a = sum_V
        rhs_a = 5.0 * L * gh2 * sum_D + n_ep * c_a * gh2 * sigma2 + pad
        violations += _collect(lhs_a > rhs_a, f"{tag}-variance", lhs_a, rhs_a)
        lhs_b = 1.5 * L * sum_V - sum_D
        rhs_b = -0.5 * sum_D + n_ep * c_b * L * gh2 * sigma2 + pad
        violations += _collect(lhs_b > rhs_b, f"{tag}-descent", lhs_b, rhs_b)
    return CheckReport("lemma2", 2 * P * len(constants), tuple(violations), slack)


def check_lemma3(traj: TrajectoryRecord, L: float, slack: float = DEFAULT_SLACK) -> CheckReport:
    """Average-gradient norm controlled by spread and suboptimality:

        ||g_t||^2 <= 2*L^2*V[t] + 4*L*D[t].
    """
    lhs = traj.g_norm2
    core = 2.0 * L * L * traj.V + 4.0 * L * traj.D
    rhs = core + slack * (1.0 + np.abs(lhs) + np.abs(core))
    return CheckReport("lemma3", lhs.size, tuple(_collect(lhs > rhs, "pointwise", lhs, rhs)), slack)


def check_lemma4(traj: TrajectoryRecord, L: float, slack: float = DEFAULT_SLACK) -> CheckReport:
    """Correlation of the averaged gradient with the direction to the optimum:

        -2 * <hat_x[t] - x_star, g_t> <= -2*D[t] + L*V[t].
    """
    lhs = -2.0 * traj.inner_rg
    core = -2.0 * traj.D + L * traj.V
    rhs = core + slack * (1.0 + np.abs(lhs) + np.abs(core))
    return CheckReport("lemma4", lhs.size, tuple(_collect(lhs > rhs, "pointwise", lhs, rhs)), slack)


def theorem1_bound(gamma: float, T: int, H: int, L: float, sigma2: float, r0sq: float) -> float:
    """Ergodic suboptimality bound 2*r0sq/(gamma*T) + 24*gamma^2*sigma2*H^2*L.

    Only claimed for 0 < gamma <= 1/(4*L*H); raises outside that range.
    """
    if not (gamma > 0.0 and T > 0 and H > 0 and L > 0.0 and sigma2 >= 0.0 and r0sq >= 0.0):
        raise ValueError("need gamma > 0, T > 0, H > 0, L > 0, sigma2 >= 0, r0sq >= 0")
    if not _gamma_admissible(gamma, L, H):
        raise PreconditionError(
            f"theorem1_bound requires gamma <= 1/(4*L*H); got gamma={gamma}, L={L}, H={H}"
        )
    return 2.0 * r0sq / (gamma * T) + 24.0 * gamma**2 * sigma2 * H**2 * L


def check_theorem1(
    traj: TrajectoryRecord,
    L: float,
    sigma2: float,
    slack: float = DEFAULT_SLACK,
    every_sync: bool = False,
) -> CheckReport:
    """Running-average suboptimality against :func:`theorem1_bound`.

    Checks f(bar_x_T) - f_star <= bound(T).  With ``every_sync=True`` the
    same inequality is checked at every positive synchronization time t_p,
    each prefix being a complete run in its own right (the bound uses the
    schedule's global H, which can only enlarge it).
    """
    g, H = traj.gamma, traj.schedule.H
    if not _gamma_admissible(g, L, H):
        raise PreconditionError(
            f"check_theorem1 requires gamma <= 1/(4*L*H); got gamma={g}, L={L}, H={H}"
        )
    f_star = traj.ref.f_star
    r0sq = float(traj.r2[0])
    points = [t for t in traj.schedule.sync_times if t > 0] if every_sync else [traj.schedule.T]
    violations = []
    for t in points:
        gap = float(traj.f_bar[t]) - f_star
        bound = theorem1_bound(g, t, H, L, sigma2, r0sq) + slack * (1.0 + abs(gap))
        if gap > bound:
            violations.append(
                {"index": t, "form": "ergodic", "lhs": gap, "rhs": bound, "gap": gap - bound}
            )
    return CheckReport("theorem1", len(points), tuple(violations), slack)


@dataclass(frozen=True)
class PlannerResult:
    """Continuous-optimum communication plan for a target accuracy.

    ``T`` and ``H`` are real-valued: T is the number of steps needed at
    stepsize gamma and H the largest synchronization interval that keeps
    the plateau term within budget.  ``comm_rounds = T/H`` meets
    ``lower_bound_comm`` for every admissible gamma.
    """

    epsilon: float
    L: float
    sigma2: float
    r0sq: float
    gamma: float
    T: float
    H: float
    comm_rounds: float
    lower_bound_comm: float
    regime: str

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "L": self.L,
            "sigma2": self.sigma2,
            "r0sq": self.r0sq,
            "gamma": self.gamma,
            "T": self.T,
            "H": self.H,
            "comm_rounds": self.comm_rounds,
            "lower_bound_comm": self.lower_bound_comm,
            "regime": self.regime,
        }


def plan_communication(
    epsilon: float, L: float, sigma2: float, r0sq: float, gamma: float
) -> PlannerResult:
    """Steps and averaging interval sufficient for accuracy epsilon.

        T(gamma) = 4*r0sq / (epsilon*gamma)
        H(gamma) = 1 / (4 * max(L, sqrt(3*L*sigma2/epsilon)) * gamma)

    In the low-accuracy regime (epsilon >= 3*sigma2/L) the communication
    count T/H collapses to 16*L*r0sq/epsilon — the same number of rounds
    plain gradient descent would need iterations.
    """
    if not (epsilon > 0.0 and L > 0.0 and sigma2 >= 0.0 and r0sq >= 0.0):
        raise ValueError("need epsilon > 0, L > 0, sigma2 >= 0, r0sq >= 0")
    if not (gamma > 0.0 and _gamma_admissible(gamma, L, 1.0)):
        raise ValueError(f"gamma must lie in (0, 1/(4L)]; got gamma={gamma}, L={L}")
    mx = max(L, math.sqrt(3.0 * L * sigma2 / epsilon))
    T = 4.0 * r0sq / (epsilon * gamma)
    H = 1.0 / (4.0 * mx * gamma)
    return PlannerResult(
        epsilon=epsilon,
        L=L,
        sigma2=sigma2,
        r0sq=r0sq,
        gamma=gamma,
        T=T,
        H=H,
        comm_rounds=T / H,
        lower_bound_comm=16.0 * r0sq * mx / epsilon,
        regime="low-accuracy" if epsilon >= 3.0 * sigma2 / L else "high-accuracy",
    )


def discretize_plan(plan: PlannerResult) -> dict:
    """Round a continuous plan to integers: H up, then T up to a multiple of H.

    Rounding H up can push the stepsize outside its admissible range, so
    the rounded plan re-verifies gamma <= 1/(4*L*H_int) and reports both
    the verdict and the largest admissible stepsize at H_int.
    """
    H_int = max(1, math.ceil(plan.H))
    T_int = max(H_int, math.ceil(plan.T / H_int) * H_int)
    return {
        "H_int": H_int,
        "T_int": T_int,
        "comm_rounds_int": T_int // H_int,
        "gamma_ok": _gamma_admissible(plan.gamma, plan.L, H_int),
        "gamma_max": 1.0 / (4.0 * plan.L * H_int),
    }


def corollary_bound(T: int, M: int, H: int, L: float, sigma2: float, r0sq: float) -> float:
    """Bound at the scaled stepsize gamma = sqrt(M)/(4*L*sqrt(T)):

        8*L*r0sq/sqrt(M*T) + 1.5*M*sigma2*H^2/(L*T)

    valid when H <= sqrt(T/M).  Internally cross-checked against
    :func:`theorem1_bound` at that stepsize (they are the same quantity).
    """
    if not (T >= 1 and M >= 1 and H >= 1):
        raise ValueError("T, M, H must be positive")
    if H > math.sqrt(T) / math.sqrt(M) * (1.0 + GAMMA_RANGE_RTOL):
        raise PreconditionError(
            f"corollary_bound requires H <= sqrt(T/M); got T={T}, M={M}, H={H}"
        )
    direct = 8.0 * L * r0sq / math.sqrt(M * T) + 1.5 * M * sigma2 * H**2 / (L * T)
    gamma = math.sqrt(M) / (4.0 * L * math.sqrt(T))
    via_theorem = theorem1_bound(gamma, T, H, L, sigma2, r0sq)
    if abs(direct - via_theorem) > 1e-12 * max(abs(direct), abs(via_theorem)):
        raise AssertionError(
            f"internal identity violated: direct={direct!r}, via theorem bound={via_theorem!r}"
        )
    return direct


def corollary_comm_steps(T: float, M: float) -> float:
    """Communication rounds T/H under the largest admissible H = sqrt(T/M):

        T / sqrt(T/M) = T^(3/4) * M^(3/4)   at H = T^(1/4) * M^(-3/4).

    Reported as a formula only; no asymptotic claim is attached.
    """
    if not (T > 0 and M > 0):
        raise ValueError("T and M must be positive")
    return T**0.75 * M**0.75


# ---------------------------------------------------------------------------
# Standard property sweep: seeded random instances for the verification CLI
# and the test suite.

SWEEP_VARIANTS = ("quadratic", "logistic")
SWEEP_WORKER_COUNTS = (1, 2, 5, 10)
SWEEP_DIMENSIONS = (1, 5, 20)
SWEEP_INTERVALS = (1, 2, 8)
SWEEP_SIZE = 100


@dataclass(frozen=True, eq=False)
class SweepInstance:
    seed: int
    variant: str
    M: int
    d: int
    H: int
    T: int
    gamma: float
    suite: ObjectiveSuite
    ref: ReferenceSolution
    x0: np.ndarray


def random_suite(rng: np.random.Generator, variant: str, M: int, d: int) -> ObjectiveSuite:
    """Draw a random M-worker suite of the given variant and dimension."""
    if variant == "quadratic":
        return make_suite(QuadraticShift(b=rng.normal(0.0, 2.0, size=d)) for _ in range(M))
    if variant == "logistic":
        lam = float(rng.uniform(0.05, 0.3))
        functions = []
        for _ in range(M):
            n_m = int(rng.integers(4, 13))
            A = rng.standard_normal((n_m, d)) / np.sqrt(d)
            y = rng.choice([-1.0, 1.0], size=n_m)
            functions.append(LogisticL2(A=A, y=y, lam=lam))
        return make_suite(functions)
    raise ValueError(f"unknown variant {variant!r}")


def make_sweep_instance(seed: int, tol: float = 1e-10) -> SweepInstance:
    """Instance #seed of the standard sweep, with its reference presolved.

    gamma is pinned to the largest generally-admissible value 1/(4*L*H)
    and the horizon to T = 8*H, so every check runs in its claimed range.
    """
    rng = np.random.default_rng(seed)
    variant = SWEEP_VARIANTS[int(rng.integers(len(SWEEP_VARIANTS)))]
    M = int(rng.choice(SWEEP_WORKER_COUNTS))
    d = int(rng.choice(SWEEP_DIMENSIONS))
    H = int(rng.choice(SWEEP_INTERVALS))
    suite = random_suite(rng, variant, M, d)
    ref = solve_reference(suite, tol=tol)
    x0 = rng.normal(0.0, 1.0, size=d)
    return SweepInstance(
        seed=seed,
        variant=variant,
        M=M,
        d=d,
        H=H,
        T=8 * H,
        gamma=1.0 / (4.0 * suite.L * H),
        suite=suite,
        ref=ref,
        x0=x0,
    )


def standard_checks(
    traj: TrajectoryRecord, strict: bool = False, slack: float = DEFAULT_SLACK
) -> list[CheckReport]:
    """All five checks against one trajectory (preconditions assumed met)."""
    L = traj.suite.L
    sigma2 = traj.ref.sigma2
    return [
        check_lemma1(traj, L, slack),
        check_lemma2(traj, L, sigma2, slack, strict=strict),
        check_lemma3(traj, L, slack),
        check_lemma4(traj, L, slack),
        check_theorem1(traj, L, sigma2, slack),
    ]


def run_instance_checks(
    inst: SweepInstance, strict: bool = False, gamma: float | None = None
) -> tuple[TrajectoryRecord, list[CheckReport]]:
    """Run one sweep instance and check it; gamma defaults to the admissible one.

    With an inadmissible ``gamma`` override the range-gated checks raise
    :class:`PreconditionError`; callers wanting skip-and-continue
    semantics should invoke the individual checks themselves.
    """
    g = inst.gamma if gamma is None else gamma
    schedule = make_uniform_schedule(inst.H, inst.T)
    traj = run_local_gd(inst.suite, inst.ref, g, schedule, inst.x0)
    return traj, standard_checks(traj, strict=strict)
