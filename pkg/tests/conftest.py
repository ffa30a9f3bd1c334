import random
from fractions import Fraction as Q

import numpy as np
import pytest

from mlgad.graph_core import Graph

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion:>2}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


def random_graph(rng: random.Random, n: int, extra: int = 0) -> Graph:
    """Random spanning tree on n nodes plus up to `extra` chords."""
    edges = {(rng.randrange(i), i) for i in range(1, n)}
    for _ in range(extra):
        if n < 2:
            break
        u, v = rng.sample(range(n), 2)
        edges.add((min(u, v), max(u, v)))
    return Graph.from_edges(n, sorted(edges))


def rational_signal(rng: random.Random, n: int) -> list:
    if rng.random() < 0.3:
        return [Q(rng.randint(0, 3)) for _ in range(n)]
    return [Q(rng.randint(-9, 9), rng.randint(1, 5)) for _ in range(n)]


@pytest.fixture
def path3():
    return Graph.from_edges(3, [(0, 1), (1, 2)])
