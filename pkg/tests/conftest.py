import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pnal_lab.data import Scene

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_scene(positions, labels=None, instances=None, num_classes=3, colors=None, id_offset=0):
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    n = len(positions)
    labels = np.zeros(n, dtype=int) if labels is None else np.asarray(labels)
    instances = np.arange(n) if instances is None else np.asarray(instances)
    colors = np.full((n, 3), 0.5) if colors is None else colors
    return Scene(positions, colors, labels, instances, np.arange(id_offset, id_offset + n), num_classes)


@pytest.fixture
def uniform_scene():
    rng = np.random.default_rng(0)
    pos = rng.uniform([0, 0, 0], [2.0, 1.5, 1.0], size=(600, 3))
    return make_scene(pos)


# one summary line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def report_criterion(name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
