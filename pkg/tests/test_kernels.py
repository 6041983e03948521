import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bigpieces import kernels
from bigpieces._kernels_py import count_violations as py_count, lipschitz_prune as py_prune

IMPLS = kernels.backends()


def brute_count(base, height, L):
    n = 0
    for i in range(len(base)):
        for j in range(i + 1, len(base)):
            dh = ((height[i] - height[j]) ** 2).sum()
            db = ((base[i] - base[j]) ** 2).sum()
            n += dh > L * L * db
    return n


def longest_lipschitz_chain(t, h, L):
    """Exact maximum Lipschitz subset on the line (points sorted by t)."""
    order = np.argsort(t, kind="stable")
    t, h = t[order], h[order]
    best = np.ones(len(t), dtype=int)
    for i in range(len(t)):
        for j in range(i):
            if (h[i] - h[j]) ** 2 <= L * L * (t[i] - t[j]) ** 2:
                best[i] = max(best[i], best[j] + 1)
    return int(best.max()) if len(t) else 0


def sample(seed, m, kdim=1, hdim=1):
    rng = np.random.default_rng(seed)
    base = rng.uniform(0, 1, size=(m, kdim))
    return base, 0.3 * np.sin(5 * base.sum(1, keepdims=True)) + rng.normal(0, 0.05, size=(m, hdim))


def test_backend_selected():
    assert kernels.BACKEND in IMPLS


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("dims", [(1, 1), (2, 1), (2, 2)])
def test_backends_agree(seed, dims):
    base, height = sample(seed, 300, *dims)
    outs = {name: (mod.lipschitz_prune(base, height, 1.0), mod.count_violations(base, height, 1.0))
            for name, mod in IMPLS.items()}
    ref = outs["python"]
    for mask, cnt in outs.values():
        assert np.array_equal(mask, ref[0]) and cnt == ref[1]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 60), st.floats(0.2, 3.0))
def test_count_matches_brute_force(seed, m, L):
    base, height = sample(seed, m)
    for mod in IMPLS.values():
        assert mod.count_violations(base, height, L) == brute_count(base, height, L)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 40))
def test_prune_leaves_lipschitz_subset(seed, m):
    base, height = sample(seed, m)
    for mod in IMPLS.values():
        keep = mod.lipschitz_prune(base, height, 1.0)
        assert brute_count(base[keep], height[keep], 1.0) == 0
        # greedy pruning never beats the exact longest chain
        assert keep.sum() <= longest_lipschitz_chain(base[:, 0], height[:, 0], 1.0)


def test_prune_keeps_clean_graph():
    t = np.linspace(0, 1, 50).reshape(-1, 1)
    h = 0.5 * t
    for mod in IMPLS.values():
        assert mod.lipschitz_prune(t, h, 1.0).all()
        assert mod.count_violations(t, h, 1.0) == 0


def test_pure_python_fallback_selected_by_env():
    env = dict(os.environ, BIGPIECES_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from bigpieces import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_module_functions_are_from_selected_backend():
    mod = IMPLS[kernels.BACKEND]
    assert kernels.lipschitz_prune is mod.lipschitz_prune
    assert kernels.count_violations is mod.count_violations
    assert py_prune is IMPLS["python"].lipschitz_prune and py_count is IMPLS["python"].count_violations
