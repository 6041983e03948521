"""Christ-David dyadic cubes on a point cloud via nested greedy nets.

Level ``m`` uses the scale ``ratio**m * diam(E)``.  The level-``m+1`` net is
seeded with the level-``m`` net, every level-``m+1`` net point is attached to
its nearest level-``m`` net point, and a cube is the set of E points whose
ancestor chain passes through its center.  Cubes are therefore exactly
nested, and a point is within ``sum_j ratio**j * s_m`` of its level-``m``
center.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (GeometryError, PointCloudSet, diameter, diameter_of_points,
                       distances_to_set, greedy_net_indices, lex_order)

CENTER_BALL_GRID = (0.5, 0.4, 0.3, 0.2, 0.1, 0.05)
DIAM_FLOOR = 10.0


@dataclass(frozen=True, eq=False)
class Cube:
    id: int
    level: int
    center_index: int
    center: np.ndarray
    members: np.ndarray
    parent: int | None
    children: tuple
    diam: float

    @property
    def size(self):
        return int(self.members.size)


@dataclass(eq=False)
class CubeTree:
    """Dyadic decomposition of ``E``.

    ``labels[m][i]`` is the id of the level-``m`` cube containing point ``i``.
    ``c1``/``c2`` stay ``None`` until :func:`verify_center_ball` records them.
    """

    E: PointCloudSet
    ratio: float
    cubes: list
    levels: list
    labels: list
    c1: float | None = None
    c2: float | None = None
    _index: object = field(default=None, repr=False)

    @property
    def root(self):
        return self.cubes[0]

    @property
    def depth(self):
        return len(self.levels)

    def scale(self, level):
        return self.ratio ** level * diameter(self.E)

    def cube_of(self, point_index, level):
        return self.cubes[int(self.labels[level][point_index])]

    def mass(self, cube):
        return cube.size * self.E.mass_per_point

    @property
    def index(self):
        if self._index is None:
            self._index = CubeIndex(
                level=np.array([c.level for c in self.cubes], dtype=np.intp),
                parent=np.array([-1 if c.parent is None else c.parent for c in self.cubes], dtype=np.intp),
                diam=np.array([c.diam for c in self.cubes]),
                count=np.array([c.size for c in self.cubes], dtype=np.intp),
                centers=np.array([c.center for c in self.cubes]),
                mass_per_point=self.E.mass_per_point,
                ratio=self.ratio,
                epsilon=self.E.epsilon,
                k=self.E.k,
                c1=self.c1,
                c2=self.c2,
            )
        return self._index


@dataclass
class CubeIndex:
    """Member-free summary of a cube tree (what ``cubes v1`` files carry)."""

    level: np.ndarray
    parent: np.ndarray
    diam: np.ndarray
    count: np.ndarray
    centers: np.ndarray
    mass_per_point: float
    ratio: float
    epsilon: float
    k: int
    c1: float | None = None
    c2: float | None = None

    def __len__(self):
        return int(self.level.size)

    @property
    def index(self):
        return self

    def mass(self, cube_id):
        return float(self.count[cube_id]) * self.mass_per_point

    def ancestors(self, cube_id):
        """Ids from ``cube_id`` (inclusive) up to the root."""
        out = [int(cube_id)]
        while self.parent[out[-1]] >= 0:
            out.append(int(self.parent[out[-1]]))
        return out

    def contains(self, outer, inner):
        """True iff cube ``inner`` is ``outer`` or one of its descendants."""
        c = int(inner)
        while c >= 0:
            if c == outer:
                return True
            c = int(self.parent[c])
        return False


def _nearest_parent(net_pts, net_rank, pts):
    """For each row of ``pts`` the position (in ``net_pts``) of its nearest net point.

    Ties are broken by ``net_rank`` (smaller wins).
    """
    tree = cKDTree(net_pts)
    k = min(8, len(net_pts))
    d, idx = tree.query(pts, k=k)
    d = np.atleast_2d(d).reshape(len(pts), k)
    idx = np.atleast_2d(idx).reshape(len(pts), k)
    diff = pts[:, None, :] - net_pts[idx]
    d = np.sqrt((diff ** 2).sum(axis=-1))
    dmin = d.min(axis=1, keepdims=True)
    tied = d <= dmin * (1 + 1e-12)
    rank = np.where(tied, net_rank[idx], np.iinfo(np.intp).max)
    return idx[np.arange(len(pts)), rank.argmin(axis=1)]


def build_tree(E, ratio=0.5, order=None):
    """Nested-net dyadic cubes of ``E`` down to the first scale below epsilon."""
    if len(E) < 2:
        raise GeometryError("degenerate set")
    if not 0.25 <= ratio <= 0.75:
        raise GeometryError("ratio must lie in [1/4, 3/4]")
    if not E.space.is_euclidean:
        raise GeometryError("cube construction needs the Euclidean fast path")
    order = lex_order(E.points) if order is None else np.asarray(order, dtype=np.intp)
    n = len(E)
    rank_of = np.empty(n, dtype=np.intp)
    rank_of[order] = np.arange(n)
    diam = diameter(E)

    nets = [np.array([order[0]], dtype=np.intp)]
    m = 0
    while True:
        m += 1
        s = ratio ** m * diam
        prev = nets[-1]
        rest = order[~np.isin(order, prev)]
        net = greedy_net_indices(E, s, order=np.concatenate([prev, rest]))
        nets.append(net)
        if s < E.epsilon:
            break
    if len(nets[-1]) != n:
        raise GeometryError("finest level is not the singleton partition")
    L = len(nets) - 1

    # parent_pos[m][j]: position in nets[m] of the parent of nets[m+1][j]
    parent_pos = []
    for m in range(L):
        upper, lower = nets[m], nets[m + 1]
        parent_pos.append(_nearest_parent(E.points[upper], rank_of[upper], E.points[lower]))

    # pos_labels[m][i]: position in nets[m] of point i's level-m ancestor
    pos = np.empty(n, dtype=np.intp)
    pos[nets[L]] = np.arange(n)
    pos_labels = [None] * (L + 1)
    pos_labels[L] = pos
    for m in range(L - 1, -1, -1):
        pos_labels[m] = parent_pos[m][pos_labels[m + 1]]

    offsets = np.cumsum([0] + [len(net) for net in nets])
    labels = [offsets[m] + pos_labels[m] for m in range(L + 1)]
    cubes = []
    levels = []
    for m in range(L + 1):
        ids = []
        lab = pos_labels[m]
        sorter = np.argsort(lab, kind="stable")
        bounds = np.searchsorted(lab[sorter], np.arange(len(nets[m]) + 1))
        for j, c_idx in enumerate(nets[m]):
            members = np.sort(sorter[bounds[j]:bounds[j + 1]])
            cid = int(offsets[m] + j)
            parent = None if m == 0 else int(offsets[m - 1] + parent_pos[m - 1][j])
            if m < L:
                kids = np.flatnonzero(parent_pos[m] == j)
                children = tuple(int(offsets[m + 1] + kk) for kk in kids)
            else:
                children = ()
            cubes.append(Cube(cid, m, int(c_idx), E.points[c_idx].copy(), members, parent, children,
                              diameter_of_points(E.points[members], E.space)))
            ids.append(cid)
        levels.append(ids)
    return CubeTree(E, float(ratio), cubes, levels, [np.asarray(lab) for lab in labels])


def descendants(T, Q):
    """``Q`` and all cubes below it, in level order."""
    out = []
    queue = deque([Q.id if isinstance(Q, Cube) else int(Q)])
    while queue:
        c = T.cubes[queue.popleft()]
        out.append(c)
        queue.extend(c.children)
    return out


def center_ball_ratio(T, Q):
    """``dist(c(Q), E minus Q) / diam Q`` (``inf`` when ``Q`` is all of ``E``)."""
    E = T.E
    if Q.size == len(E):
        return np.inf
    if Q.diam == 0:
        return np.inf
    lab = T.labels[Q.level]
    k = min(len(E), max(16, 1))
    while True:
        d, idx = E.tree.query(Q.center, k=k)
        d, idx = np.atleast_1d(d), np.atleast_1d(idx)
        outside = lab[idx] != Q.id
        if outside.any():
            j = idx[outside]
            dist = E.space.to_point(E.points[j], Q.center).min()
            return float(dist / Q.diam)
        k = min(len(E), max(2 * k, Q.size + 1))


def _best_pair(t, grid):
    pairs = sorted(((a, b) for a in grid for b in grid), key=lambda p: (min(p), p[0], p[1]),
                   reverse=True)
    for a, b in pairs:
        if a + b <= t * (1 + 1e-12):
            return a, b
    return None


def center_ball_constants(T, Q, grid=CENTER_BALL_GRID):
    """Best grid pair ``(c1, c2)`` for the single cube ``Q`` (``None`` if none fits)."""
    return _best_pair(center_ball_ratio(T, Q), grid)


def verify_center_ball(T, grid=CENTER_BALL_GRID, floor=DIAM_FLOOR):
    """Largest grid ``(c1, c2)`` with ``dist(B(c(Q), c1 diam Q), E\\Q) >= c2 diam Q``.

    Checked on every cube with ``diam Q >= floor * epsilon``, using
    ``dist(B(c, rho), X) >= dist(c, X) - rho`` (an equality in Euclidean
    space).  Pairs are ranked by ``min(c1, c2)`` then ``c1``.  The result is
    recorded on ``T``.
    """
    lo = floor * T.E.epsilon
    t_min = np.inf
    for Q in T.cubes:
        if Q.diam >= lo:
            t_min = min(t_min, center_ball_ratio(T, Q))
    pair = _best_pair(t_min, grid)
    if pair is None:
        raise GeometryError("cube tree fails center-ball property")
    T.c1, T.c2 = pair
    T._index = None
    return pair


def stopping_cubes_from_distances(T, dist, delta):
    """Maximal cubes with every member farther than ``delta`` from ``F`` and
    ``dist(Q, F) > diam Q``; ``dist`` holds each E point's distance to ``F``."""
    uncaptured = dist > delta
    selected = []
    blocked = np.zeros(len(T.cubes), dtype=bool)  # an ancestor was selected
    for m, ids in enumerate(T.levels):
        lab = T.labels[m]
        off = ids[0]
        nloc = len(ids)
        local = lab - off
        mind = np.full(nloc, np.inf)
        np.minimum.at(mind, local, dist)
        allfree = np.ones(nloc, dtype=bool)
        np.logical_and.at(allfree, local, uncaptured)
        diam = np.array([T.cubes[c].diam for c in ids])
        ok = allfree & (mind > diam)
        for j in np.flatnonzero(ok):
            cid = off + j
            if not blocked[cid]:
                selected.append(T.cubes[cid])
                blocked[cid] = True
        if m + 1 < len(T.levels):
            for cid in ids:
                if blocked[cid]:
                    blocked[list(T.cubes[cid].children)] = True
    return selected


def maximal_stopping_cubes(T, F_m, delta=None):
    """Stopping-time cubes of ``E \\ F_m`` (see :func:`stopping_cubes_from_distances`)."""
    if len(F_m) == 0:
        raise GeometryError("stopping cubes need a nonempty F_m")
    delta = T.E.epsilon / 2 if delta is None else delta
    return stopping_cubes_from_distances(T, distances_to_set(T.E.points, F_m), delta)


# ---------------------------------------------------------------------------
# export


def write_tree(T, path):
    idx = T.index
    head = (f"cubes v1 n={T.E.ambient_dim} k={T.E.k} eps={T.E.epsilon!r} "
            f"mass={T.E.mass_per_point!r} ratio={T.ratio!r} levels={T.depth} "
            f"cubes={len(T.cubes)} c1={T.c1!r} c2={T.c2!r}")
    lines = [head]
    for c in T.cubes:
        parent = "-" if c.parent is None else str(c.parent)
        coords = " ".join(repr(float(v)) for v in c.center)
        lines.append(f"{c.id} {c.level} {parent} {coords} {c.diam!r} {c.size}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return idx


def read_tree(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("cubes v1"):
        raise GeometryError(f"{path}: missing 'cubes v1' header")
    f = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
    n = int(f["n"])
    rows = [ln.split() for ln in lines[1:] if ln.strip()]
    level = np.array([int(r[1]) for r in rows], dtype=np.intp)
    parent = np.array([-1 if r[2] == "-" else int(r[2]) for r in rows], dtype=np.intp)
    centers = np.array([[float(v) for v in r[3:3 + n]] for r in rows])
    diam = np.array([float(r[3 + n]) for r in rows])
    count = np.array([int(r[4 + n]) for r in rows], dtype=np.intp)

    def opt(key):
        return None if f.get(key, "None") == "None" else float(f[key])

    return CubeIndex(level, parent, diam, count, centers, float(f["mass"]), float(f["ratio"]),
                     float(f["eps"]), int(f["k"]), opt("c1"), opt("c2"))
