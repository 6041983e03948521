import math

import numpy as np
import pytest

from bigpieces.cubes import (CENTER_BALL_GRID, build_tree, center_ball_constants, descendants,
                             maximal_stopping_cubes, read_tree, verify_center_ball, write_tree)
from bigpieces.geometry import GeometryError, PointCloudSet, diameter

from conftest import cantor, scenario, segment


def brute_diam(P):
    return max((math.dist(a, b) for a in P for b in P), default=0.0)


def test_two_point_tree():
    E = PointCloudSet([[0.0], [1.0]], 0.5, 1)
    T = build_tree(E, 0.5)
    assert T.root.size == 2
    assert sorted(T.cubes[c].size for c in T.levels[1]) == [1, 1]


def test_degenerate_and_bad_ratio():
    with pytest.raises(GeometryError, match="degenerate set"):
        build_tree(PointCloudSet([[0.0, 0.0]], 0.1, 1), 0.5)
    with pytest.raises(GeometryError):
        build_tree(segment(), 0.9)


@pytest.mark.parametrize("make", [lambda: segment(), lambda: cantor(4), lambda: scenario("four_graphs").E])
@pytest.mark.parametrize("ratio", [0.25, 0.5])
def test_tree_invariants(make, ratio):
    E = make()
    T = build_tree(E, ratio)
    D = diameter(E)
    assert T.root.size == len(E)
    for m, ids in enumerate(T.levels):
        allmem = np.concatenate([T.cubes[c].members for c in ids])
        assert np.array_equal(np.sort(allmem), np.arange(len(E)))       # partition
        for c in ids:
            Q = T.cubes[c]
            assert Q.diam <= 4 * ratio ** m * D
            if Q.children:
                kids = np.concatenate([T.cubes[k].members for k in Q.children])
                assert np.array_equal(np.sort(kids), Q.members)
                assert all(T.cubes[k].diam <= Q.diam for k in Q.children)
            # the center is a member of the cube
            assert Q.center_index in set(Q.members.tolist())
    assert all(T.cubes[c].size == 1 for c in T.levels[-1])


def test_cube_diameters_match_brute_force():
    E = cantor(3)
    T = build_tree(E, 0.5)
    for Q in T.cubes:
        assert Q.diam == pytest.approx(brute_diam(E.points[Q.members]), abs=1e-15)


def test_tree_is_deterministic(tmp_path):
    E = scenario("four_graphs").E
    a, b = build_tree(E, 0.25), build_tree(PointCloudSet(E.points.copy(), E.epsilon, E.k), 0.25)
    write_tree(a, tmp_path / "a.tree")
    write_tree(b, tmp_path / "b.tree")
    assert (tmp_path / "a.tree").read_bytes() == (tmp_path / "b.tree").read_bytes()


def test_tree_file_round_trip(tmp_path):
    T = build_tree(segment(), 0.5)
    verify_center_ball(T)
    write_tree(T, tmp_path / "t.tree")
    idx = read_tree(tmp_path / "t.tree")
    assert len(idx) == len(T.cubes)
    assert idx.c1 == T.c1 and idx.c2 == T.c2
    assert np.array_equal(idx.parent, T.index.parent) and np.array_equal(idx.diam, T.index.diam)


def test_descendants():
    T = build_tree(segment(), 0.5)
    assert len(descendants(T, T.root)) == len(T.cubes)
    leaf = T.cubes[T.levels[-1][0]]
    assert descendants(T, leaf) == [leaf]


def exhaustive_center_ball(T, floor=10.0):
    """Best grid pair from a direct scan of every cube against every outside point."""
    E = T.E
    worst = np.inf
    for Q in T.cubes:
        if Q.diam < floor * E.epsilon or Q.size == len(E):
            continue
        inside = np.zeros(len(E), dtype=bool)
        inside[Q.members] = True
        out = E.points[~inside]
        worst = min(worst, np.sqrt(((out - Q.center) ** 2).sum(1)).min() / Q.diam)
    best = None
    for a in CENTER_BALL_GRID:
        for b in CENTER_BALL_GRID:
            if a + b <= worst * (1 + 1e-12) and (best is None or (min(a, b), a, b) > (min(best), *best)):
                best = (a, b)
    return best


@pytest.mark.parametrize("name", ["one_graph", "four_graphs", "parallel_segments"])
def test_center_ball_matches_exhaustive(name):
    T = build_tree(scenario(name).E, 0.25)
    assert verify_center_ball(T) == exhaustive_center_ball(T)


def test_center_ball_segment():
    T = build_tree(segment(), 0.5)
    c1, c2 = verify_center_ball(T)
    assert c1 >= 0.05 and c2 >= 0.05
    assert exhaustive_center_ball(T) == (c1, c2)


def test_center_ball_single_cube():
    T = build_tree(segment(), 0.5)
    assert center_ball_constants(T, T.root) == (0.5, 0.5)


def brute_stopping(T, F, delta):
    E = T.E
    d = np.array([min(math.dist(p, q) for q in F.points) for p in E.points])
    ok = set()
    for Q in T.cubes:
        dm = d[Q.members]
        if (dm > delta).all() and dm.min() > Q.diam:
            ok.add(Q.id)
    out = []
    for c in ok:
        Q = T.cubes[c]
        if not any(a in ok for a in T.index.ancestors(c)[1:]):
            out.append(c)
    return sorted(out)


def test_stopping_cubes_segment_example():
    E = segment()
    T = build_tree(E, 0.5)
    F = E.subset(E.points[:, 0] <= 0.5 + 1e-9)
    got = maximal_stopping_cubes(T, F)
    assert sorted(Q.id for Q in got) == brute_stopping(T, F, E.epsilon / 2)
    for Q in got:
        pts = E.points[Q.members]
        assert (pts[:, 0] > 0.5).all()
        assert (pts[:, 0] - 0.5).min() > Q.diam
    mem = np.concatenate([Q.members for Q in got])
    assert len(mem) == len(set(mem.tolist()))          # pairwise disjoint


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_stopping_cubes_random_F(seed):
    E = scenario("four_graphs").E
    T = build_tree(E, 0.25)
    rng = np.random.default_rng(seed)
    F = E.subset(rng.choice(len(E), size=30, replace=False))
    got = maximal_stopping_cubes(T, F)
    assert sorted(Q.id for Q in got) == brute_stopping(T, F, E.epsilon / 2)


def test_stopping_cubes_empty_F():
    E = segment()
    with pytest.raises(GeometryError):
        maximal_stopping_cubes(build_tree(E, 0.5), E.subset([]))
