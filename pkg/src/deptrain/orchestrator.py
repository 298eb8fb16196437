"""Outer planning loop: datasets, then model schedule, then placement.

Each stage works under the least restrictive assumptions of the stages after
it. When placement cannot meet the deadline, the schedule is blacklisted and
model selection re-runs; when no schedule is left, the dataset subset is
blacklisted and selection restarts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .baselines import best_exp_schedule
from .datasets import select_datasets
from .errors import Exhausted, Infeasible, PlacementInfeasible
from .planner import PlannerConfig, build_graph, shortest_feasible_path
from .placement import realize
from .scenario import Plan, ProblemInstance, check_feasible

DEFAULT_BUDGET = 64


@dataclass(frozen=True)
class Attempt:
    datasets: tuple[str, ...]
    schedule: tuple[str, ...] | None
    outcome: str  # "ok" | "placement-infeasible" | "no-schedule" | "check-failed"

    def to_json(self) -> dict:
        return {"datasets": list(self.datasets),
                "schedule": None if self.schedule is None else list(self.schedule),
                "outcome": self.outcome}


@dataclass
class PipelineResult:
    plan: Plan
    attempts: list[Attempt] = field(default_factory=list)

    @property
    def backtracks(self) -> int:
        return sum(1 for a in self.attempts if a.outcome != "ok")


def _model_stage(inst, strategy, selected, banned, eta):
    if strategy == "depl":
        config = PlannerConfig.from_instance(inst, eta=eta)
        frag = shortest_feasible_path(build_graph(inst, selected, config=config), inst, blacklist=banned)
        return frag.schedule, frag.predicted_pdf
    if strategy == "best-exp":
        return best_exp_schedule(inst, selected, eta=eta, blacklist=banned)
    raise ValueError(f"unknown strategy {strategy!r}")


def run_pipeline(inst: ProblemInstance, strategy: str = "depl", eta: int | None = None,
                 epsilon: float | None = None, budget: int | None = None,
                 selected: Sequence[str] | None = None) -> PipelineResult:
    """Plan with backtracking. ``selected`` pins the dataset subset."""
    if epsilon is None:
        epsilon = float(inst.config.get("epsilon", 0.05))
    if budget is None:
        budget = int(inst.config.get("backtrack_budget", DEFAULT_BUDGET))
    attempts: list[Attempt] = []
    banned_sets: set[tuple[str, ...]] = set()
    while True:
        if selected is not None:
            if banned_sets:
                raise Infeasible("no feasible plan for the given datasets", attempts)
            subset = tuple(sorted(selected))
        else:
            try:
                subset = select_datasets(inst, blacklist=banned_sets)
            except Exhausted:
                raise Infeasible("every dataset subset has been ruled out", attempts) from None
        banned_schedules: set[tuple[str, ...]] = set()
        while True:
            if len(attempts) >= budget:
                raise Infeasible(f"backtrack budget of {budget} attempts exhausted", attempts)
            try:
                schedule, pdf = _model_stage(inst, strategy, subset, banned_schedules, eta)
            except Infeasible:
                attempts.append(Attempt(subset, None, "no-schedule"))
                banned_sets.add(subset)
                break
            try:
                plan = realize(schedule, inst, subset, pdf, epsilon)
            except PlacementInfeasible:
                attempts.append(Attempt(subset, schedule, "placement-infeasible"))
                banned_schedules.add(schedule)
                continue
            if not check_feasible(plan, inst).ok:
                attempts.append(Attempt(subset, schedule, "check-failed"))
                banned_schedules.add(schedule)
                continue
            attempts.append(Attempt(subset, schedule, "ok"))
            return PipelineResult(plan, attempts)


def depl_plan(inst: ProblemInstance, eta: int | None = None, epsilon: float | None = None,
              budget: int | None = None) -> Plan:
    """Minimum-cost plan meeting the loss quantile and deadline (raises Infeasible)."""
    return run_pipeline(inst, "depl", eta, epsilon, budget).plan
