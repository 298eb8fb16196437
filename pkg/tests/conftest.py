from __future__ import annotations

import pytest

from deptrain.bench import load_benchmark
from deptrain.scenario import parse_instance


def scenario(models, clusters=None, datasets=None, ell0=10.0, ell_max=5.0, omega=0.99, T_max=100.0,
             K_max=None, initial=None, config=None, data_law=None) -> dict:
    """Scenario dict for hand-built test instances.

    ``models`` is a list of dicts with at least ``id``; missing fields default
    to a deterministic unit-improvement stationary model with s=0.
    """
    clusters = clusters or [{"id": "A", "r": 100.0, "b": 10.0, "kappa": 1.0}]
    datasets = datasets or [{"id": "d1", "size": 100.0}]
    ids = [m["id"] for m in models]
    full = []
    for m in models:
        entry = {"s": 0.0, "A": 1.0, "B": 0.0, "stationary": True,
               "X": {"family": "Dirac", "params": {"value": 1.0}}, "compute_per_sample": 1.0,
               "switch_from": {o: {"family": "Dirac", "params": {"value": 0.0}} for o in ids if o != m["id"]}}
        entry.update(m)
        full.append(entry)
    targets = {"ell0": ell0, "ell_max": ell_max, "omega": omega, "T_max": T_max,
               "initial_model": initial or ids[0]}
    if K_max is not None:
        targets["K_max"] = K_max
    out = {
        "clusters": clusters,
        "datasets": [{"beta": {c["id"]: 0.0 for c in clusters}, **d} for d in datasets],
        "models": full,
        "targets": targets,
    }
    if config:
        out["config"] = config
    if data_law:
        out["data_law"] = data_law
    return out


def instance(models, **kw):
    return parse_instance(scenario(models, **kw))


@pytest.fixture(scope="session")
def alexnet():
    return load_benchmark("alexnet")


@pytest.fixture(scope="session")
def mobilenet():
    return load_benchmark("mobilenet")


# One line per acceptance criterion, echoed in the terminal summary so the
# verdicts survive output capturing.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
