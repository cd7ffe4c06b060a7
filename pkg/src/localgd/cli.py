"""Command-line front end: experiment runs, verification sweeps, planning, parsing.

Subcommands
-----------
run     simulate the averaged-worker method for each H in a list and emit
        one CSV (plus JSON metadata sidecar) per H
verify  run the seeded property sweep and every inequality check, emit a
        JSON report, exit nonzero iff any check fails
plan    print the communication plan (continuous and integer-rounded) for
        a target accuracy
parse   parse a LIBSVM file and print summary statistics

Configuration comes from an optional JSON file (--config) whose keys match
the flag names; explicit flags override the file.  All outputs are
deterministic given the configuration: rerunning produces byte-identical
files.  LOCALGD_THREADS caps sweep parallelism (default: up to 8 threads).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .engine import make_uniform_schedule, run_local_gd
from .errors import ConvergenceError, DivergenceError, LocalGDError, ParseError, PreconditionError
from .libsvm_io import SparseDataset, load_libsvm, partition_by_index, shards_to_suite
from .objectives import solve_reference
from .theory import (
    SWEEP_SIZE,
    check_lemma1,
    check_lemma2,
    check_lemma3,
    check_lemma4,
    check_theorem1,
    discretize_plan,
    make_sweep_instance,
    plan_communication,
    random_suite,
)

__all__ = [
    "ExperimentConfig",
    "CostModel",
    "synthetic_logistic_dataset",
    "resolve_gamma",
    "cmd_run",
    "cmd_verify",
    "cmd_plan",
    "cmd_parse",
    "main",
]

#: Margin floor for the synthetic separable instance: every row satisfies
#: label * <row, w> >= this along the planted direction w.
SYNTHETIC_MARGIN = 0.25


@dataclass(frozen=True)
class CostModel:
    """Abstract wall clock: one unit per local step, rho units per averaging."""

    rho: float

    def __post_init__(self):
        if not (self.rho >= 0.0):
            raise ValueError("rho must be nonnegative")

    def wall_clock(self, steps: float, comm_rounds: float) -> float:
        return steps + self.rho * comm_rounds

    def wall_clock_uniform(self, T: float, H: float) -> float:
        return self.wall_clock(T, T / H)


@dataclass
class ExperimentConfig:
    """Everything a run or verification sweep needs; see module docstring."""

    dataset: str | None = None
    variant: str = "logistic"
    M: int = 10
    d: int = 50
    n: int = 2000
    seed: int = 0
    lam: float | str = "1/n"
    gamma: float | str = "theory"
    H: tuple[int, ...] = (1, 4, 16)
    T: int = 2048
    rho: tuple[float, ...] = (0.1, 1.0, 10.0)
    out: str = "runs"
    tol: float = 1e-10
    strict: bool = False
    thin: bool = False
    dim: int | None = None

    def validate(self) -> None:
        if not self.H or any(int(h) < 1 for h in self.H):
            raise ValueError("H list must be nonempty with every H >= 1")
        if self.T < max(self.H):
            raise ValueError(f"T={self.T} must be at least max(H)={max(self.H)}")
        if any(r < 0 for r in self.rho):
            raise ValueError("every rho must be nonnegative")
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if self.variant not in ("logistic", "quadratic"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if not (self.tol > 0):
            raise ValueError("tol must be positive")
        for policy, allowed in ((self.gamma, ("theory", "experiment")), (self.lam, ("1/n",))):
            if isinstance(policy, str) and policy not in allowed:
                raise ValueError(f"unrecognized policy {policy!r}")


_CONFIG_KEYS = {
    "dataset": "dataset",
    "variant": "variant",
    "M": "M",
    "d": "d",
    "n": "n",
    "seed": "seed",
    "lambda": "lam",
    "gamma": "gamma",
    "H": "H",
    "T": "T",
    "rho": "rho",
    "out": "out",
    "tol": "tol",
    "strict": "strict",
    "thin": "thin",
    "dim": "dim",
}


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in str(text).split(",") if tok.strip())


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in str(text).split(",") if tok.strip())


def _parse_gamma(text: str):
    return text if text in ("theory", "experiment") else float(text)


def _parse_lambda(text: str):
    return text if text == "1/n" else float(text)


def load_config(path: str | None, args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, overlaid by the JSON config file, overlaid by explicit flags."""
    config = ExperimentConfig()
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        fields = {}
        for key, value in raw.items():
            if key not in _CONFIG_KEYS:
                raise ValueError(f"unknown config key {key!r}")
            attr = _CONFIG_KEYS[key]
            if attr == "H":
                value = tuple(int(v) for v in value)
            elif attr == "rho":
                value = tuple(float(v) for v in value)
            elif attr == "gamma" and not isinstance(value, (int, float)):
                value = _parse_gamma(value)
            elif attr == "lam" and not isinstance(value, (int, float)):
                value = _parse_lambda(value)
            fields[attr] = value
        config = replace(config, **fields)
    overrides = {}
    for attr in _CONFIG_KEYS.values():
        if attr in ("strict", "thin"):
            continue  # store_true flags: absent means False, not None
        flag_value = getattr(args, attr, None)
        if flag_value is not None:
            overrides[attr] = flag_value
    if getattr(args, "strict", False):
        overrides["strict"] = True
    if getattr(args, "thin", False):
        overrides["thin"] = True
    config = replace(config, **overrides)
    config.validate()
    return config


def synthetic_logistic_dataset(
    n: int, d: int, seed: int, margin: float = SYNTHETIC_MARGIN
) -> SparseDataset:
    """Seeded separable classification rows, sorted by label.

    Rows are Gaussian with scale 1/sqrt(d); each is nudged along a planted
    unit direction until its signed margin reaches ``margin``, so the data
    is linearly separable.  Sorting by label makes contiguous index shards
    maximally heterogeneous.
    """
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d)
    w /= np.linalg.norm(w)
    A = rng.standard_normal((n, d)) / math.sqrt(d)
    margins = A @ w
    y = np.where(margins >= 0, 1.0, -1.0)
    push = np.maximum(0.0, margin - y * margins)
    A = A + (y * push)[:, None] * w[None, :]
    order = np.argsort(y, kind="stable")
    return SparseDataset(X=sp.csr_matrix(A[order]), y=y[order])


def build_suite(config: ExperimentConfig):
    """Materialize the objective suite described by a config.

    Returns (suite, info) where info records the instance provenance and
    the resolved ridge weight (None for the quadratic variant).
    """
    if config.dataset is None and config.variant == "quadratic":
        rng = np.random.default_rng(config.seed)
        suite = random_suite(rng, "quadratic", config.M, config.d)
        info = {"variant": "quadratic", "M": config.M, "d": config.d, "n": None,
                "seed": config.seed, "dataset": None, "lambda": None}
        return suite, info
    if config.dataset is None:
        ds = synthetic_logistic_dataset(config.n, config.d, config.seed)
        source = None
    else:
        ds = load_libsvm(config.dataset, d=config.dim)
        source = config.dataset
    lam = 1.0 / ds.n if config.lam == "1/n" else float(config.lam)
    spec = partition_by_index(ds, config.M)
    suite = shards_to_suite(ds, spec, lam)
    info = {"variant": "logistic", "M": config.M, "d": ds.d, "n": ds.n,
            "seed": config.seed, "dataset": source, "lambda": lam}
    return suite, info


def resolve_gamma(policy, L: float, H: int) -> float:
    """theory -> 1/(4*L*H); experiment -> 1/L; numeric -> itself."""
    if policy == "theory":
        return 1.0 / (4.0 * L * H)
    if policy == "experiment":
        return 1.0 / L
    return float(policy)


def _thread_count() -> int:
    env = os.environ.get("LOCALGD_THREADS")
    if env is not None:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def _map_in_order(fn, items):
    workers = _thread_count()
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def _write_run_csv(path: Path, traj, rho_list) -> None:
    sync = np.asarray(traj.schedule.sync_times)
    T = traj.schedule.T
    steps = np.arange(T + 1)
    comm = np.searchsorted(sync, steps, side="right") - 1
    models = [CostModel(rho) for rho in rho_list]
    f_star = traj.ref.f_star
    headers = ["step", "comm_rounds_so_far"]
    headers += [f"wall_clock_rho_{rho:g}" for rho in rho_list]
    headers += ["f_hat_gap", "f_bar_gap", "V", "r_sq"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(headers) + "\n")
        for t in steps:
            row = [str(int(t)), str(int(comm[t]))]
            row += [_fmt(model.wall_clock(t, comm[t])) for model in models]
            row += [
                _fmt(traj.f_hat[t] - f_star),
                _fmt(traj.f_bar[t] - f_star),
                _fmt(traj.V[t]),
                _fmt(traj.r2[t]),
            ]
            fh.write(",".join(row) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_run(config: ExperimentConfig) -> int:
    suite, info = build_suite(config)
    L = suite.L
    try:
        ref = solve_reference(suite, tol=config.tol)
        degraded = False
    except ConvergenceError as err:
        ref = err.result
        degraded = True
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    x0 = np.zeros(suite.d)

    def one_run(H: int):
        T = ((config.T + H - 1) // H) * H  # round up to keep T a multiple of H
        gamma = resolve_gamma(config.gamma, L, H)
        schedule = make_uniform_schedule(H, T)
        meta = {
            "H": H,
            "T": T,
            "T_requested": config.T,
            "gamma": gamma,
            "gamma_policy": str(config.gamma),
            "L": L,
            "sigma2": ref.sigma2,
            "f_star": ref.f_star,
            "x_star_residual": ref.grad_norm_residual,
            "reference_iterations": ref.iterations_used,
            "reference_degraded": degraded,
            "rho": list(config.rho),
            "tol": config.tol,
            "x0": "zeros",
            **info,
        }
        csv_path = outdir / f"run_H{H}.csv"
        meta_path = outdir / f"run_H{H}.meta.json"
        try:
            traj = run_local_gd(suite, ref, gamma, schedule, x0, thin=config.thin)
        except DivergenceError as err:
            meta["divergence_step"] = err.step
            meta["theorem1_checked"] = False
            _write_json(meta_path, meta)
            with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("step,comm_rounds_so_far\n")
            return H, meta, None
        meta["divergence_step"] = None
        try:
            report = check_theorem1(traj, L, ref.sigma2)
            if not report.passed:
                raise RuntimeError(
                    f"internal consistency failure: final average violates its bound: "
                    f"{report.to_dict()['violations']}"
                )
            meta["theorem1_checked"] = True
        except PreconditionError:
            meta["theorem1_checked"] = False
        _write_json(meta_path, meta)
        _write_run_csv(csv_path, traj, config.rho)
        return H, meta, float(traj.f_hat[T] - ref.f_star)

    results = _map_in_order(one_run, list(config.H))
    for H, meta, final_gap in results:
        if meta["divergence_step"] is not None:
            print(f"H={H}: diverged at step {meta['divergence_step']} "
                  f"(gamma={meta['gamma']:.6g}); wrote metadata only")
        else:
            print(f"H={H}: T={meta['T']} gamma={meta['gamma']:.6g} "
                  f"final f_hat gap={final_gap:.6g} -> {outdir / f'run_H{H}.csv'}")
    return 0


_CHECK_BUILDERS = (
    ("lemma1", lambda traj, L, s2, strict: check_lemma1(traj, L)),
    ("lemma2", lambda traj, L, s2, strict: check_lemma2(traj, L, s2, strict=strict)),
    ("lemma3", lambda traj, L, s2, strict: check_lemma3(traj, L)),
    ("lemma4", lambda traj, L, s2, strict: check_lemma4(traj, L)),
    ("theorem1", lambda traj, L, s2, strict: check_theorem1(traj, L, s2)),
)


def cmd_verify(config: ExperimentConfig, count: int = SWEEP_SIZE) -> int:
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    seeds = list(range(config.seed, config.seed + count))

    def one_instance(seed: int) -> dict:
        inst = make_sweep_instance(seed, tol=config.tol)
        gamma = resolve_gamma(config.gamma, inst.suite.L, inst.H)
        schedule = make_uniform_schedule(inst.H, inst.T)
        traj = run_local_gd(inst.suite, inst.ref, gamma, schedule, inst.x0)
        entry = {
            "seed": seed,
            "variant": inst.variant,
            "M": inst.M,
            "d": inst.d,
            "H": inst.H,
            "T": inst.T,
            "gamma": gamma,
            "checks": [],
        }
        for name, builder in _CHECK_BUILDERS:
            try:
                report = builder(traj, inst.suite.L, inst.ref.sigma2, config.strict)
            except PreconditionError as err:
                entry["checks"].append({"name": name, "status": "precondition", "reason": str(err)})
                continue
            item = report.to_dict()
            item["status"] = "pass" if report.passed else "fail"
            entry["checks"].append(item)
        return entry

    instances = _map_in_order(one_instance, seeds)
    by_status: dict[str, int] = {"pass": 0, "fail": 0, "precondition": 0}
    failures_by_name: dict[str, int] = {}
    for entry in instances:
        for item in entry["checks"]:
            by_status[item["status"]] += 1
            if item["status"] == "fail":
                failures_by_name[item["name"]] = failures_by_name.get(item["name"], 0) + 1
    ok = by_status["fail"] == 0
    report = {
        "count": count,
        "seed_start": config.seed,
        "gamma_policy": str(config.gamma),
        "strict": config.strict,
        "checks_passed": by_status["pass"],
        "checks_failed": by_status["fail"],
        "checks_skipped_precondition": by_status["precondition"],
        "pass": ok,
        "instances": instances,
    }
    _write_json(outdir / "verify_report.json", report)
    for name, _ in _CHECK_BUILDERS:
        statuses = [item for entry in instances for item in entry["checks"] if item["name"] == name]
        n_fail = sum(1 for s in statuses if s["status"] == "fail")
        n_skip = sum(1 for s in statuses if s["status"] == "precondition")
        label = "FAIL" if n_fail else "pass"
        extra = f", {n_skip} skipped (precondition)" if n_skip else ""
        print(f"{label} {name}: {len(statuses)} instances, {n_fail} failing{extra}")
    print(f"{'PASS' if ok else 'FAIL'}: verification sweep over {count} instances "
          f"-> {outdir / 'verify_report.json'}")
    return 0 if ok else 1


def cmd_plan(args: argparse.Namespace) -> int:
    gamma = args.gamma if args.gamma is not None else 1.0 / (4.0 * args.L)
    try:
        plan = plan_communication(args.epsilon, args.L, args.sigma2, args.r0sq, gamma)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    rounded = discretize_plan(plan)
    payload = {**plan.to_dict(), "rounded": rounded}
    print(json.dumps(payload, sort_keys=True))
    lines = [
        ("regime", plan.regime),
        ("gamma", _fmt(plan.gamma)),
        ("steps T (continuous / rounded)", f"{_fmt(plan.T)} / {rounded['T_int']}"),
        ("interval H (continuous / rounded)", f"{_fmt(plan.H)} / {rounded['H_int']}"),
        ("comm rounds (continuous / rounded)", f"{_fmt(plan.comm_rounds)} / {rounded['comm_rounds_int']}"),
        ("comm lower bound", _fmt(plan.lower_bound_comm)),
        ("gamma admissible after rounding", "yes" if rounded["gamma_ok"] else
         f"no (largest admissible gamma = {_fmt(rounded['gamma_max'])})"),
    ]
    if plan.regime == "low-accuracy":
        lines.append(("note", "communication rounds match plain gradient descent iterations"))
    width = max(len(k) for k, _ in lines)
    for key, value in lines:
        print(f"{key:<{width}}  {value}")
    return 0


def cmd_parse(args: argparse.Namespace) -> int:
    try:
        ds = load_libsvm(args.path, d=args.dim)
    except ParseError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    pos = int(np.sum(ds.y > 0))
    neg = ds.n - pos
    print(f"rows      {ds.n}")
    print(f"features  {ds.d}")
    print(f"labels    +1: {pos}  -1: {neg}")
    if ds.n:
        per_row = np.diff(ds.X.indptr)
        print(f"nnz       {ds.X.nnz} (per row mean {per_row.mean():.6g}, "
              f"min {per_row.min()}, max {per_row.max()})")
    else:
        print("nnz       0")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="localgd",
        description="Simulate local gradient descent with periodic averaging, "
                    "verify its convergence inequalities, and plan communication budgets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p, include_run_flags=True):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--gamma", type=_parse_gamma, default=None,
                       help="stepsize policy: 'theory' (1/(4LH)), 'experiment' (1/L), or a float")
        p.add_argument("--seed", type=int, default=None, help="base RNG seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--tol", type=float, default=None,
                       help="gradient-norm tolerance for the reference solve")
        p.add_argument("--strict", action="store_true", default=False,
                       help="also check the tighter pre-rounding variance constants")
        if include_run_flags:
            p.add_argument("--dataset", default=None, help="LIBSVM file (.gz ok); "
                           "omit to use the seeded synthetic instance")
            p.add_argument("--variant", choices=("logistic", "quadratic"), default=None,
                           help="synthetic instance family")
            p.add_argument("--M", type=int, default=None, help="number of workers/shards")
            p.add_argument("--d", type=int, default=None, help="synthetic dimension")
            p.add_argument("--n", type=int, default=None, help="synthetic row count")
            p.add_argument("--H", type=_parse_int_list, default=None,
                           help="comma-separated synchronization intervals, e.g. 1,4,16")
            p.add_argument("--T", type=int, default=None, help="step budget")
            p.add_argument("--lambda", dest="lam", type=_parse_lambda, default=None,
                           help="ridge weight: '1/n' or a float")
            p.add_argument("--rho", type=_parse_float_list, default=None,
                           help="comma-separated communication cost ratios")
            p.add_argument("--thin", action="store_true", default=False,
                           help="drop the dense iterate history (keep scalar series)")
            p.add_argument("--dim", type=int, default=None,
                           help="pad the dataset feature dimension")

    run_p = sub.add_parser("run", help="run the experiment grid and write CSVs")
    add_config_flags(run_p)
    run_p.set_defaults(func=lambda a: cmd_run(load_config(a.config, a)))

    verify_p = sub.add_parser("verify", help="run the seeded verification sweep")
    add_config_flags(verify_p, include_run_flags=False)
    verify_p.add_argument("--count", type=int, default=SWEEP_SIZE,
                          help="number of sweep instances")
    verify_p.set_defaults(func=lambda a: cmd_verify(load_config(a.config, a), count=a.count))

    plan_p = sub.add_parser("plan", help="communication budget for a target accuracy")
    plan_p.add_argument("--epsilon", type=float, required=True, help="target suboptimality")
    plan_p.add_argument("--L", type=float, required=True, help="smoothness bound")
    plan_p.add_argument("--sigma2", type=float, required=True,
                        help="heterogeneity variance at the optimum")
    plan_p.add_argument("--r0sq", type=float, required=True,
                        help="squared distance from the start to the optimum")
    plan_p.add_argument("--gamma", type=float, default=None,
                        help="stepsize (default: the largest admissible, 1/(4L))")
    plan_p.set_defaults(func=cmd_plan)

    parse_p = sub.add_parser("parse", help="parse a LIBSVM file and print statistics")
    parse_p.add_argument("path", help="path to the file (.gz ok)")
    parse_p.add_argument("--dim", type=int, default=None,
                         help="pad the feature dimension")
    parse_p.set_defaults(func=cmd_parse)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (LocalGDError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
