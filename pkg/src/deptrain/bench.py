"""Canonical benchmark scenarios (AlexNet and MobileNet model families).

Per-epoch improvement moments and normalized resources are measured values
for the two networks; everything else here (bandwidths, sizes, initial loss,
deadline, switch-loss laws) is configuration chosen for this engine.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .dist import InverseGamma, StudentT
from .scenario import FORBIDDEN, ProblemInstance, canonical_json, parse_instance

VARIANTS = ("fast-unsteady", "intermediate", "slow-steady")

# (mean improvement per epoch, variance, normalized resources)
VARIANT_STATS = {
    "alexnet": {
        "fast-unsteady": (1.02, 0.031, 2.6),
        "intermediate": (1.00, 0.010, 1.4),
        "slow-steady": (0.98, 0.007, 1.0),
    },
    "mobilenet": {
        "fast-unsteady": (1.02, 0.029, 1.8),
        "intermediate": (0.95, 0.012, 1.0),
        "slow-steady": (0.92, 0.006, 0.6),
    },
}

CLUSTERS = [
    {"id": "A", "r": 100.0, "b": 10.0, "kappa": 1.0},
    {"id": "B", "r": 50.0, "b": 10.0, "kappa": 1.2},
]

LOSS_TARGETS = (5.0, 7.0, 9.0, 11.0, 13.0)

# Student-t laws (dof, loc, scale) of the loss jump when switching, keyed by
# (from, to). Small mean, heavy tail: cheap in expectation, costly at the
# 99th percentile.
SWITCH_LOSS = {
    ("intermediate", "fast-unsteady"): (3.0, 0.1, 0.85),
    ("intermediate", "slow-steady"): (3.0, 0.1, 0.85),
    ("fast-unsteady", "intermediate"): (3.0, 0.1, 0.85),
    ("fast-unsteady", "slow-steady"): (3.0, 0.1, 0.85),
    ("slow-steady", "intermediate"): (3.0, 0.1, 0.85),
    ("slow-steady", "fast-unsteady"): (3.0, 0.1, 0.85),
}

DEFAULTS = {
    "ell0": 20.05,
    "omega": 0.99,
    "T_max": 40.0,
    "K_max": 40,
    "initial_model": "intermediate",
    "edge_cost": "sqrt-compute",
    "model_size": 1.0,
    "compute_unit": 0.1,
    "datasets": [("d1", 250.0), ("d2", 400.0), ("d3", 600.0)],
}


def scenario_dict(network: str, ell_max: float = LOSS_TARGETS[0], **overrides) -> dict:
    """Scenario JSON object for ``network`` at loss target ``ell_max``."""
    if network not in VARIANT_STATS:
        raise KeyError(f"unknown network {network!r}; expected one of {sorted(VARIANT_STATS)}")
    cfg = {**DEFAULTS, **overrides}
    switch = {**SWITCH_LOSS, **cfg.get("switch_loss", {})}
    models = []
    for vid in VARIANTS:
        mean, var, res = VARIANT_STATS[network][vid]
        X = InverseGamma.unit_mean(var / mean ** 2)
        switch_from = {}
        for src in VARIANTS:
            if src == vid:
                continue
            law = switch.get((src, vid))
            switch_from[src] = FORBIDDEN if law is None else StudentT(*law).to_json()
        models.append({
            "id": vid, "s": cfg["model_size"], "A": mean, "B": 0.0, "stationary": True,
            "X": X.to_json(), "compute_per_sample": res * cfg["compute_unit"],
            "switch_from": switch_from,
        })
    return {
        "clusters": [dict(c) for c in CLUSTERS],
        "datasets": [{"id": d, "size": s, "beta": {c["id"]: 0.0 for c in CLUSTERS}}
                     for d, s in cfg["datasets"]],
        "models": models,
        "targets": {
            "ell0": cfg["ell0"], "ell_max": ell_max, "omega": cfg["omega"], "T_max": cfg["T_max"],
            "K_max": cfg["K_max"], "initial_model": cfg["initial_model"],
        },
        "data_law": {"k0": 50.0, "k_log": 5.0, "t0": 1.0, "t_lin": 0.01},
        "config": {"eta": 200, "labels_per_vertex": 4, "epsilon": 0.05, "max_switches": 3,
                   "backtrack_budget": 64, "edge_cost": cfg["edge_cost"]},
    }


def make_instance(network: str, ell_max: float = LOSS_TARGETS[0], **overrides) -> ProblemInstance:
    return parse_instance(scenario_dict(network, ell_max, **overrides))


def load_benchmark(name: str) -> ProblemInstance:
    """Packaged benchmark scenario (``alexnet`` or ``mobilenet``)."""
    text = resources.files("deptrain").joinpath("benchmarks", f"{name}.json").read_text()
    return parse_instance(json.loads(text))


def write_benchmarks(directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in VARIANT_STATS:
        (directory / f"{name}.json").write_text(canonical_json(scenario_dict(name)))
