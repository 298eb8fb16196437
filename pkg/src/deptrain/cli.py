"""Command-line entry points: plan, simulate, benchmark, fit.

Exit codes: 0 success (feasible plan), 1 input error, 2 infeasible.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .baselines import brute_force_optimal
from .datasets import select_datasets
from .dist import quantile
from .errors import DeptrainError, Infeasible, InstanceError
from .fitting import fit_report
from .montecarlo import simulate
from .orchestrator import PipelineResult, run_pipeline
from .scenario import EpochAssignment, Plan, ProblemInstance, canonical_json, load_instance

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2
STRATEGIES = ("depl", "best-exp", "optimal")

log = logging.getLogger("deptrain")


def _load(args) -> ProblemInstance:
    inst = load_instance(args.scenario)
    if getattr(args, "omega_override", None) is not None:
        if not 0 < args.omega_override < 1:
            raise InstanceError(f"--omega-override must lie in (0, 1), got {args.omega_override}")
        inst = replace(inst, omega=args.omega_override)
    return inst


def solve(inst: ProblemInstance, strategy: str, eta: int | None = None,
          epsilon: float | None = None) -> PipelineResult:
    if strategy == "optimal":
        subset = select_datasets(inst)
        eps = float(inst.config.get("epsilon", 0.05)) if epsilon is None else epsilon
        return PipelineResult(brute_force_optimal(inst, subset, epsilon=eps))
    return run_pipeline(inst, strategy, eta=eta, epsilon=epsilon)


def plan_to_json(plan: Plan, inst: ProblemInstance, strategy: str, attempts=()) -> dict:
    q = quantile(plan.predicted_loss_pdf, inst.omega) if plan.predicted_loss_pdf is not None else None
    return {
        "strategy": strategy,
        "selected_datasets": list(plan.selected_datasets),
        "schedule": [{"epoch": k, "model": e.model, "cluster": e.cluster, "x": e.x}
                     for k, e in enumerate(plan.schedule, start=1)],
        "epochs_per_model": plan.epochs_per_model(),
        "predicted_cost": plan.predicted_cost,
        "predicted_time": plan.predicted_time,
        "predicted_quantile": q,
        "predicted_mean": plan.predicted_loss_pdf.mean() if plan.predicted_loss_pdf is not None else None,
        "omega": inst.omega,
        "ell_max": inst.ell_max,
        "T_max": inst.T_max,
        "attempts": [a.to_json() for a in attempts],
    }


def plan_from_json(data: dict) -> Plan:
    try:
        epochs = tuple(EpochAssignment(str(e["model"]), str(e["cluster"]), float(e["x"]))
                       for e in data["schedule"])
        return Plan(tuple(data["selected_datasets"]), epochs)
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"plan file: malformed schedule ({exc})") from None


def _summary(plan: Plan, inst: ProblemInstance, strategy: str) -> str:
    counts = ", ".join(f"{m}={n}" for m, n in sorted(plan.epochs_per_model().items()))
    q = quantile(plan.predicted_loss_pdf, inst.omega) if plan.predicted_loss_pdf is not None else float("nan")
    return (f"{strategy}: {plan.K} epochs ({counts}), cost {plan.predicted_cost:.4f}, "
            f"time {plan.predicted_time:.4f}/{inst.T_max:g}, "
            f"loss q{inst.omega:g} {q:.4f} <= {inst.ell_max:g}")


def _write_json(path, data) -> None:
    text = canonical_json(data)
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_plan(args) -> int:
    inst = _load(args)
    try:
        res = solve(inst, args.strategy, args.eta, args.epsilon)
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        if args.out:
            _write_json(args.out, {"strategy": args.strategy, "feasible": False, "reason": str(exc),
                                   "attempts": [a.to_json() for a in exc.attempts]})
        return EXIT_INFEASIBLE
    data = plan_to_json(res.plan, inst, args.strategy, res.attempts)
    data["feasible"] = True
    _write_json(args.out, data)
    print(_summary(res.plan, inst, args.strategy), file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


def cmd_simulate(args) -> int:
    inst = _load(args)
    try:
        data = json.loads(Path(args.plan).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{args.plan}: invalid JSON at line {exc.lineno}, column {exc.colno}") from None
    plan = plan_from_json(data)
    ts = simulate(plan, inst, args.runs, args.seed)
    if args.out:
        ts.write_csv(args.out)
    if args.bands:
        ts.write_bands(args.bands)
    summary = {
        "runs": ts.runs, "seed": args.seed, "omega": inst.omega, "ell_max": inst.ell_max,
        "empirical_quantile": ts.empirical_quantile(inst.omega),
        "half_width_99": ts.half_width(inst.omega),
        "standard_error": ts.standard_error(inst.omega),
        "mean_final_loss": ts.mean_final(),
    }
    sys.stdout.write(canonical_json(summary))
    return EXIT_OK


BENCH_COLUMNS = ["strategy", "loss_target", "feasible", "cost", "epochs_per_model", "empirical_quantile",
                 "half_width_99", "predicted_quantile", "expected_final_loss", "runtime_ms"]


def benchmark_row(inst: ProblemInstance, strategy: str, target: float, runs: int, seed: int,
                  eta=None, epsilon=None, timing: bool = False) -> dict:
    """One benchmark CSV row; runtime_ms covers planning only and is blank unless ``timing``."""
    inst_t = replace(inst, ell_max=target)
    row = dict.fromkeys(BENCH_COLUMNS, "")
    row.update(strategy=strategy, loss_target=repr(float(target)))
    t0 = time.perf_counter()
    try:
        plan = solve(inst_t, strategy, eta, epsilon).plan
    except Infeasible:
        plan = None
    elapsed_ms = (time.perf_counter() - t0) * 1e3
    if plan is None:
        row.update(feasible="false", cost="inf")
    else:
        ts = simulate(plan, inst_t, runs, seed)
        counts = plan.epochs_per_model()
        row.update(
            feasible="true",
            cost=repr(float(plan.predicted_cost)),
            epochs_per_model=";".join(f"{m}:{counts.get(m, 0)}" for m in sorted(inst.model_ids)),
            empirical_quantile=repr(ts.empirical_quantile(inst.omega)),
            half_width_99=repr(ts.half_width(inst.omega)),
            predicted_quantile=repr(quantile(plan.predicted_loss_pdf, inst.omega)),
            expected_final_loss=repr(ts.mean_final()),
        )
    if timing:
        row["runtime_ms"] = f"{elapsed_ms:.1f}"
    return row


def cmd_benchmark(args) -> int:
    inst = _load(args)
    targets = [float(t) for t in args.targets.split(",")] if args.targets else _default_targets(inst)
    strategies = args.strategies.split(",")
    for s in strategies:
        if s not in STRATEGIES:
            raise InstanceError(f"--strategies: unknown strategy {s!r}; expected {STRATEGIES}")
    for t in targets:
        if not 0 < t < inst.ell0:
            raise InstanceError(f"--targets: {t} must lie in (0, ell0={inst.ell0})")
    jobs = [(s, t) for s in strategies for t in targets]

    def run(job):
        s, t = job
        log.info("benchmark %s at %g", s, t)
        return benchmark_row(inst, s, t, args.runs, args.seed, args.eta, args.epsilon, args.timing)

    workers = max(1, args.threads)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(j) for j in jobs]
    out = open(args.out, "w", newline="") if args.out and args.out != "-" else sys.stdout
    try:
        w = csv.DictWriter(out, BENCH_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def _default_targets(inst: ProblemInstance) -> list[float]:
    from .bench import LOSS_TARGETS

    return [t for t in LOSS_TARGETS if t < inst.ell0]


def cmd_fit(args) -> int:
    _write_json(args.out, fit_report(args.traces))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deptrain", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", required=True, help="scenario JSON file")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")

    sp = sub.add_parser("plan", help="compute a training plan")
    common(sp)
    sp.add_argument("--strategy", choices=STRATEGIES, default="depl")
    sp.add_argument("--eta", type=int, help="graph discretization (overrides config)")
    sp.add_argument("--epsilon", type=float, help="placement accuracy (overrides config)")
    sp.add_argument("--omega-override", type=float, help="replace the scenario's omega")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("simulate", help="Monte Carlo trajectories of a plan")
    common(sp)
    sp.add_argument("--plan", required=True, help="plan JSON written by 'plan'")
    sp.add_argument("--runs", type=int, default=10_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--bands", help="also write per-epoch 1st/50th/99th percentile bands here")
    sp.add_argument("--omega-override", type=float, help="replace the scenario's omega")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("benchmark", help="sweep loss targets across strategies")
    common(sp)
    sp.add_argument("--targets", help="comma-separated loss targets (default 5,7,9,11,13)")
    sp.add_argument("--strategies", default=",".join(STRATEGIES))
    sp.add_argument("--runs", type=int, default=10_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--eta", type=int)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--omega-override", type=float, help="replace the scenario's omega")
    sp.add_argument("--timing", action="store_true",
                    help="fill runtime_ms (makes the output run-dependent)")
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("fit", help="fit loss-model distributions to traces")
    common(sp, scenario=False)
    sp.add_argument("--traces", required=True, help="CSV with run_id,epoch,loss or pair_id,delta")
    sp.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InstanceError, FileNotFoundError, IsADirectoryError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DeptrainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
