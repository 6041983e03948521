import json
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from bigpieces.construct import TREE_RATIO, calibrate_alpha, construct_superset
from bigpieces.cubes import build_tree, verify_center_ball
from bigpieces.geometry import PointCloudSet
from bigpieces.scenario import load_scenario

EXPECTED = json.loads((Path(__file__).parent / "expected_results.json").read_text())
CORE_SCENARIOS = ["one_graph", "parallel_segments", "four_graphs", "nested_zigzag", "perpendicular_cross"]


def segment(eps=0.01, length=1.0):
    n = int(round(length / eps)) + 1
    return PointCloudSet(np.c_[np.arange(n) * eps, np.zeros(n)], eps, 1)


def cantor(depth):
    """Four-corner Cantor set: ``depth`` levels of ratio-1/4 corner squares."""
    pts = np.zeros((1, 2))
    size = 1.0
    for _ in range(depth):
        size /= 4
        offs = np.array([[0, 0], [3, 0], [0, 3], [3, 3]]) * size
        pts = (pts[:, None, :] + offs[None]).reshape(-1, 2)
    return PointCloudSet(pts, size * 0.999, 1, mass_per_point=4.0 ** -depth)


@lru_cache(maxsize=None)
def scenario(name):
    return load_scenario(name)


@lru_cache(maxsize=None)
def oracle(name):
    return scenario(name).oracle(validate=True)


@lru_cache(maxsize=None)
def constructed(name):
    """``(E, T, F, trace, alpha)`` for a shipped scenario."""
    s = scenario(name)
    T = build_tree(s.E, TREE_RATIO)
    verify_center_ball(T)
    F, trace = construct_superset(s.E, oracle(name), T)
    alpha, _, _ = calibrate_alpha(trace, T)
    return s.E, T, F, trace, alpha


@pytest.fixture
def seg():
    return segment()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
