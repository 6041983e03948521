"""Stopping-time superset construction, regular extension, annulus gluing and
the collapse of a three-level big-pieces oracle to two levels."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cubes import DIAM_FLOOR, build_tree, stopping_cubes_from_distances, verify_center_ball
from .families import (FamilyWitness, OracleError, TwoLevelWitness, fit_big_piece,
                       overlap_fraction)
from .geometry import (GeometryError, PointCloudSet, ball_indices, diameter, distances_to_set,
                       greedy_net_indices, lex_order, merge)

ALPHA_GRID = (12.0, 20.0, 40.0, 80.0)
# trees at ratio 1/2 miss the smallest center-ball grid value on polygonal sets
TREE_RATIO = 0.25


class ConstructionError(RuntimeError):
    pass


@dataclass
class ConstructionParams:
    alpha: float = 20.0
    max_stages: int = 40
    residual_tol: float = 1e-3
    A_ext: float = 10.0
    delta_match: float | None = None

    def __post_init__(self):
        if not self.alpha > 10:
            raise ValueError("alpha must exceed 10")
        if self.max_stages < 1:
            raise ValueError("max_stages must be at least 1")
        if not 0 <= self.residual_tol < 1:
            raise ValueError("residual_tol must lie in [0, 1)")
        if self.A_ext < 1:
            raise ValueError("A_ext must be at least 1")

    def delta(self, E):
        return E.epsilon / 2 if self.delta_match is None else float(self.delta_match)

    def to_dict(self):
        return {"alpha": self.alpha, "max_stages": self.max_stages, "residual_tol": self.residual_tol,
                "A_ext": self.A_ext, "delta_match": self.delta_match}


@dataclass
class ChosenPiece:
    """``F_Q`` for one stopping cube."""

    index: int
    stage: int
    cube: int
    center: np.ndarray
    radius: float
    name: str
    overlap: float      # oracle overlap in B(c(Q), c1 diam Q) & E
    capture: float      # mass(Q captured by F_Q) / mass(Q)
    points: PointCloudSet
    oracle: object = field(default=None, repr=False)
    chain: list = field(default_factory=list)

    @property
    def mass(self):
        return self.points.mass


@dataclass
class StageRecord:
    m: int
    cubes: list
    pieces: list
    residual: float


@dataclass
class ConstructionTrace:
    params: ConstructionParams
    c1: float
    c2: float
    delta: float
    E_mass: float
    stages: list
    pieces: list
    final_F: PointCloudSet
    piece_index: np.ndarray
    residual_points: np.ndarray
    cube_diam: dict = field(default_factory=dict)
    cube_mass: dict = field(default_factory=dict)
    epsilon: float = 0.0
    k: int = 1
    halted: str = ""

    @property
    def c0_achieved(self):
        return min(p.capture for p in self.pieces) if self.pieces else 1.0

    @property
    def residuals(self):
        return [s.residual for s in self.stages]

    def piece_of_point(self, i):
        return int(self.piece_index[i])


def _capture_fraction(E, members, piece, delta):
    if members.size == 0:
        return 1.0
    return float((distances_to_set(E.points[members], piece) <= delta).sum()) / members.size


def _query(oracle, x, R):
    return oracle.query(x, R)


def construct_superset(E, oracle, T=None, params=None):
    """Stopping-time construction of ``F`` containing ``E``.

    Stage 0 asks the oracle for a piece in ``B(c(Q0), c1 diam Q0)``; stage
    ``m+1`` does the same for every maximal cube of ``E`` minus the captured
    set that is farther from it than its own diameter.  Stops once the
    uncaptured mass is at most ``residual_tol * mass(E)`` or after
    ``max_stages``; the final set is ``E`` together with every chosen piece.
    """
    params = params or ConstructionParams()
    if T is None:
        T = build_tree(E, TREE_RATIO)
    if T.c1 is None:
        verify_center_ball(T)
    delta = params.delta(E)
    c1 = T.c1
    dist = np.full(len(E), np.inf)
    pieces, stages = [], []
    cubes_by_stage = []

    def take(stage, cube):
        x, R = cube.center, c1 * cube.diam
        w = _query(oracle, x, R)
        P = w.piece
        if len(P) == 0:
            raise OracleError("oracle returned an empty piece", x, R)
        cap = _capture_fraction(E, cube.members, P, delta)
        cp = ChosenPiece(len(pieces), stage, cube.id, np.asarray(x, dtype=float).copy(), float(R),
                         w.name, float(w.overlap), cap, P, w.oracle)
        pieces.append(cp)
        return cp

    root = T.root
    cp = take(0, root)
    cp.chain = [cp.index]
    np.minimum(dist, distances_to_set(E.points, cp.points), out=dist)
    residual = float((dist > delta).sum()) * E.mass_per_point
    stages.append(StageRecord(0, [root.id], [cp.index], residual))
    cubes_by_stage.append({root.id: cp.index})
    halted = "max_stages"
    tol = params.residual_tol * E.mass
    m = 0
    while True:
        if residual <= tol:
            halted = "residual_tol"
            break
        if m + 1 >= params.max_stages:
            break
        m += 1
        cubes = stopping_cubes_from_distances(T, dist, delta)
        new = []
        for Q in cubes:
            cp = take(m, Q)
            anc = set(T.index.ancestors(Q.id))
            parent = None
            for cid, pidx in cubes_by_stage[m - 1].items():
                if cid in anc:
                    parent = pidx
                    break
            if parent is None:
                raise ConstructionError(f"stopping cube {Q.id} has no stage-{m - 1} ancestor")
            cp.chain = pieces[parent].chain + [cp.index]
            new.append(cp)
        for cp in new:
            np.minimum(dist, distances_to_set(E.points, cp.points), out=dist)
        new_res = float((dist > delta).sum()) * E.mass_per_point
        stages.append(StageRecord(m, [Q.id for Q in cubes], [cp.index for cp in new], new_res))
        cubes_by_stage.append({Q.id: cp.index for Q, cp in zip(cubes, new)})
        if new_res >= residual:
            raise ConstructionError("construction stalled")
        residual = new_res

    F, source = merge([E] + [p.points for p in pieces])
    piece_index = np.full(len(F), -1, dtype=np.intp)
    from_piece = source[:, 0] > 0
    piece_index[from_piece] = source[from_piece, 0] - 1
    # E points coinciding with some piece point take the earliest such piece
    e_rows = np.flatnonzero(~from_piece)
    pending = np.ones(e_rows.size, dtype=bool)
    for p in pieces:
        if not pending.any():
            break
        hit = distances_to_set(F.points[e_rows[pending]], p.points) <= delta
        rows = np.flatnonzero(pending)[hit]
        piece_index[e_rows[rows]] = p.index
        pending[rows] = False
    residual_points = np.flatnonzero(dist > delta)
    used = {cid for st in stages for cid in st.cubes}
    trace = ConstructionTrace(params, float(c1), float(T.c2), float(delta), float(E.mass), stages,
                              pieces, F, piece_index, residual_points,
                              {c: float(T.cubes[c].diam) for c in used},
                              {c: float(T.mass(T.cubes[c])) for c in used},
                              epsilon=E.epsilon, k=E.k, halted=halted)
    return F, trace


# ---------------------------------------------------------------------------
# alpha calibration and the trace-guided BP(F) oracle


def chain_ratios(trace, T, floor=DIAM_FLOOR):
    """``10 * dist(Q_{i+1}, F_{Q_i}) / diam Q_{i+1}`` over consecutive chain cubes above the floor."""
    E = T.E
    out = []
    for p in trace.pieces:
        if len(p.chain) < 2:
            continue
        parent = trace.pieces[p.chain[-2]]
        Q = T.cubes[p.cube]
        if Q.diam < floor * E.epsilon:
            continue
        d = float(distances_to_set(E.points[Q.members], parent.points).min())
        out.append((p.index, 10.0 * d / Q.diam))
    return out


def calibrate_alpha(trace, T, grid=ALPHA_GRID):
    """Smallest grid alpha with every chain step reachable; the largest grid value otherwise.

    Returns ``(alpha, worst_ratio, satisfied)``.
    """
    ratios = chain_ratios(trace, T)
    worst = max((r for _, r in ratios), default=0.0)
    for a in grid:
        if worst < a:
            return float(a), worst, True
    return float(grid[-1]), worst, False


class TraceBPOracle:
    """BP(F) oracle on the output of :func:`construct_superset`.

    A ball at ``x`` inside piece ``F_{Q_m}`` with ``R < alpha diam Q_m`` is
    answered by that piece's own oracle.  Larger balls use the smallest chain
    cube ``Q_j`` with ``R < alpha diam Q_j`` (``Q_0`` if none): the ball
    ``B(y, R - |x - y|)`` around the nearest point ``y`` of ``F_{Q_j}`` is
    answered by ``F_{Q_j}``'s oracle.  When that misses, every chain piece is
    tried and the best answer kept.  Overlaps are measured against ``F``.
    """

    provenance = "synthetic"

    def __init__(self, trace, alpha=None, fallback_L=1.0, orientation_grid=16):
        self.trace = trace
        self.F = trace.final_F
        self.alpha = trace.params.alpha if alpha is None else float(alpha)
        self.delta = trace.delta
        self.fallback_L = fallback_L
        self.orientation_grid = orientation_grid
        self.theta = 0.0

    def _locate(self, x):
        d = self.F.space.to_point(self.F.points, x)
        i = int(np.argmin(d))
        if d[i] > self.delta:
            raise GeometryError("point has no piece provenance")
        return i

    def _answer(self, piece, x, R):
        w = piece.oracle.query(x, R)
        return w

    def _measure(self, G, x, R):
        ball = self.F.subset(ball_indices(self.F, x, R))
        return overlap_fraction(ball, G, self.delta)

    def _via(self, piece, x, R):
        d = self.F.space.to_point(piece.points.points, x)
        j = int(np.argmin(d))
        y = piece.points.points[j]
        rho = R - float(d[j])
        if rho <= 0:
            return None
        w = self._answer(piece, y, rho)
        return w

    def query(self, x, R, fallback=True):
        x = np.asarray(x, dtype=float)
        i = self._locate(x)
        p = int(self.trace.piece_index[i])
        diam = self.trace.cube_diam
        if p < 0:
            w = fit_big_piece(self.F, x, R, self.fallback_L, self.orientation_grid)
            if w is None:
                raise OracleError("no big piece at an E-native point", x, R, 0.0)
            w.name = "fitted"
            return w, "fitted"
        piece = self.trace.pieces[p]
        chain = [self.trace.pieces[c] for c in piece.chain]
        if R < self.alpha * diam[piece.cube]:
            w = self._answer(piece, x, R)
            path = "piece"
        else:
            q = chain[0]
            for c in chain:
                if R < self.alpha * diam[c.cube]:
                    q = c
            w = self._via(q, x, R)
            path = "chain"
        best = None
        if w is not None:
            best = FamilyWitness(w.member, w.spec, self._measure(w.member, x, R), x.copy(), float(R), w.name)
        if fallback and (best is None or best.overlap <= 0):
            for c in chain:
                alt = self._via(c, x, R)
                if alt is None:
                    continue
                ov = self._measure(alt.member, x, R)
                if best is None or ov > best.overlap:
                    best = FamilyWitness(alt.member, alt.spec, ov, x.copy(), float(R), alt.name)
                    path = "fallback"
        if best is None:
            raise OracleError("trace-guided oracle found no witness", x, R, 0.0)
        return best, path


# ---------------------------------------------------------------------------
# regular extension


@dataclass
class ExtensionRound:
    n: int
    threshold: float
    radius: float
    net: np.ndarray
    size: int


@dataclass
class ExtensionTrace:
    D: float
    A: float
    rounds: list
    final: PointCloudSet
    G_mask: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {"D": self.D, "A": self.A, "final_count": len(self.final),
                "rounds": [{"n": r.n, "threshold": r.threshold, "radius": r.radius,
                            "net": r.net.tolist(), "size": r.size} for r in self.rounds]}


def _member_mask(G, E, delta):
    if len(G) == 0:
        return np.zeros(len(E), dtype=bool)
    d, idx = E.tree.query(G.points, k=1)
    if np.any(d > delta):
        raise GeometryError("extension requires a subset of the ambient regular set")
    mask = np.zeros(len(E), dtype=bool)
    mask[idx] = True
    return mask


def _interior_mask(mask, E, threshold):
    """Points of the masked set at distance >= threshold from the rest of ``E``."""
    out = mask.copy()
    rest = ~mask
    if not rest.any():
        return out
    d = distances_to_set(E.points[mask], E.subset(rest))
    out[np.flatnonzero(mask)[d < threshold]] = False
    return out


def interior(G, E, threshold):
    """``{x in G : dist(x, E \\ G) >= threshold}``; ``G`` itself when ``E \\ G`` is empty."""
    mask = _member_mask(G, E, E.epsilon * 1e-6)
    return E.subset(_interior_mask(mask, E, threshold))


def regular_extension(G, E, A=10.0):
    """Grow ``G`` inside ``E`` by net balls of radii ``4^{-n} 2D/A``.

    Round 1 nets the points of ``G`` within ``D/A`` of ``E \\ G`` at scale
    ``D/A`` and adds the ``E``-points of ``2D/A`` balls around them.  Round
    ``n+1`` repeats on the grown set with both scales divided by ``4^n``.
    Rounds stop before the ball radius falls below epsilon.
    """
    if A < 1:
        raise ValueError("A must be at least 1")
    mask = _member_mask(G, E, E.epsilon * 1e-6)
    if len(G) == 0:
        raise GeometryError("extension of an empty set")
    D = diameter(G)
    rounds = []
    if D == 0:
        return E.subset(mask), ExtensionTrace(0.0, float(A), rounds, E.subset(mask), mask.copy())
    G_mask = mask.copy()
    n = 0
    while True:
        thr = 4.0 ** (-n) * D / A
        rad = 2.0 * thr
        if rad < E.epsilon:
            break
        inner = _interior_mask(mask, E, thr)
        boundary = np.flatnonzero(mask & ~inner)
        if boundary.size:
            B = E.subset(boundary)
            net = boundary[greedy_net_indices(B, thr, lex_order(B.points))]
            add = np.zeros(len(E), dtype=bool)
            for j in net:
                add[ball_indices(E, E.points[j], rad)] = True
            mask |= add
        else:
            net = np.empty(0, dtype=np.intp)
        rounds.append(ExtensionRound(n + 1, thr, rad, E.points[net].copy(), int(mask.sum())))
        n += 1
    out = E.subset(mask)
    return out, ExtensionTrace(float(D), float(A), rounds, out, G_mask)


# ---------------------------------------------------------------------------
# annulus gluing


@dataclass
class AnnulusRecord:
    n: int
    radius: float
    E_n: PointCloudSet
    F_n: PointCloudSet
    F_tilde: PointCloudSet
    trace: ConstructionTrace | None
    min_dist_quarter: float | None


def glue_unbounded(E_big, x0, oracle, A=16.0, N_max=3, params=None, ratio=TREE_RATIO):
    """Truncated gluing over the balls ``B_n = B(x0, A^n)``, ``n = 0..N_max``.

    ``oracle`` must offer ``with_ambient(E)`` returning the oracle for a
    sub-set of ``E_big``.
    """
    if A <= 1:
        raise ValueError("A must exceed 1")
    x0 = np.asarray(x0, dtype=float)
    if point_dist(x0, E_big) > E_big.epsilon / 2:
        raise GeometryError("x0 must be a point of the set")
    records = []
    for n in range(N_max + 1):
        Rn = A ** n
        inside = E_big.subset(ball_indices(E_big, x0, Rn))
        if n > 0 and len(inside) == len(records[-1].E_n) == len(E_big):
            F_t = E_big.subset([])
            records.append(AnnulusRecord(n, Rn, inside, F_t, F_t, None, None))
            continue
        E_n, _ = regular_extension(inside, E_big, 100.0)
        if len(E_n) >= 2:
            T = build_tree(E_n, ratio)
            F_n, tr = construct_superset(E_n, oracle.with_ambient(E_n), T, params)
        else:
            F_n, tr = E_n, None
        if n == 0:
            F_t = F_n
            dq = None
        else:
            keep = F_n.space.to_point(F_n.points, x0) > 0.5 * A ** (n - 1)
            outer = F_n.subset(keep)
            if len(outer):
                F_t, _ = regular_extension(outer, F_n, 100.0 * A)
            else:
                F_t = outer
            dq = float(F_t.space.to_point(F_t.points, x0).min()) if len(F_t) else math.inf
            if dq <= 0.25 * A ** (n - 1):
                raise ConstructionError("gluing overlap violated - increase A")
            if len(F_t) and float(F_t.space.to_point(F_t.points, x0).max()) > 2 * A ** n:
                raise ConstructionError("gluing piece leaves B(x0, 2A^n)")
        records.append(AnnulusRecord(n, Rn, E_n, F_n, F_t, tr, dq))
    F, _ = merge([r.F_tilde for r in records if len(r.F_tilde)])
    return F, records


def point_dist(x, S):
    return float(S.space.to_point(S.points, x).min())


# ---------------------------------------------------------------------------
# collapse of a three-level oracle


class CollapsedOracle:
    """Two-level oracle from a three-level one: each answer ``E'`` is replaced
    by the superset constructed over it, clipped to the query ball."""

    provenance = "synthetic"

    def __init__(self, E, level3, params=None, ratio=TREE_RATIO):
        self.E = E
        self.level3 = level3
        self.params = params or ConstructionParams()
        self.ratio = ratio
        self.delta = E.epsilon / 2
        self.records = []

    def query(self, x, R):
        w3 = self.level3.query(x, R)
        Ep = w3.piece
        if len(Ep) < 2:
            return TwoLevelWitness(Ep, _SingletonOracle(Ep), w3.overlap, np.asarray(x, float), float(R), w3.name)
        T = build_tree(Ep, self.ratio)
        F, trace = construct_superset(Ep, w3.oracle, T, self.params)
        alpha, _, _ = calibrate_alpha(trace, T)
        clipped = F.subset(ball_indices(F, x, R))
        ball = self.E.subset(ball_indices(self.E, x, R))
        ov = overlap_fraction(ball, clipped, self.delta)
        oracle = TraceBPOracle(trace, alpha)
        self.records.append({"x": np.asarray(x, float).tolist(), "R": float(R), "input_overlap": w3.overlap,
                             "overlap": ov, "stages": len(trace.stages), "alpha": alpha})
        return TwoLevelWitness(clipped, _ClippedTraceOracle(oracle, clipped), ov,
                               np.asarray(x, float).copy(), float(R), w3.name)


class _SingletonOracle:
    def __init__(self, S):
        self.S = S

    def query(self, x, R):
        return FamilyWitness(self.S, None, 1.0, np.asarray(x, float), float(R), "point")


class _ClippedTraceOracle:
    """Trace-guided oracle restricted to queries centred on a clipped copy of ``F``."""

    def __init__(self, oracle, S):
        self.oracle = oracle
        self.S = S

    def query(self, x, R):
        w, _ = self.oracle.query(x, R)
        ball = self.S.subset(ball_indices(self.S, x, R))
        w.overlap = overlap_fraction(ball, w.member, self.oracle.delta)
        return w


def collapse_bp_level(E, level3_oracle, params=None, ratio=TREE_RATIO):
    return CollapsedOracle(E, level3_oracle, params, ratio)


# ---------------------------------------------------------------------------
# trace v1


def trace_to_dict(trace):
    return {
        "format": "trace v1",
        "params": trace.params.to_dict(),
        "c1": trace.c1, "c2": trace.c2, "delta": trace.delta,
        "epsilon": trace.epsilon, "k": trace.k,
        "E_mass": trace.E_mass, "halted": trace.halted,
        "c0_achieved": trace.c0_achieved,
        "stages": [{"m": s.m, "cubes": list(map(int, s.cubes)), "pieces": list(map(int, s.pieces)),
                    "residual": s.residual} for s in trace.stages],
        "pieces": [{"index": p.index, "stage": p.stage, "cube": p.cube, "center": p.center.tolist(),
                    "radius": p.radius, "name": p.name, "overlap": p.overlap, "capture": p.capture,
                    "chain": list(map(int, p.chain)), "points": p.points.points.tolist()}
                   for p in trace.pieces],
        "cube_diam": {str(k): v for k, v in sorted(trace.cube_diam.items())},
        "cube_mass": {str(k): v for k, v in sorted(trace.cube_mass.items())},
        "piece_index": trace.piece_index.tolist(),
        "residual_points": trace.residual_points.tolist(),
        "final_F": trace.final_F.points.tolist(),
    }


def write_trace(trace, path):
    Path(path).write_text(json.dumps(trace_to_dict(trace), sort_keys=True) + "\n", encoding="utf-8")


def trace_from_dict(d, space=None, piece_oracles=None):
    """Rebuild a trace; ``piece_oracles(name, PointCloudSet)`` restores piece oracles."""
    if d.get("format") != "trace v1":
        raise ValueError("not a 'trace v1' document")
    eps, k = float(d["epsilon"]), int(d["k"])
    mk = lambda pts: PointCloudSet(np.asarray(pts, dtype=float).reshape(len(pts), -1), eps, k,
                                   space=space, validate=False)
    pieces = []
    for p in d["pieces"]:
        P = mk(p["points"])
        orc = piece_oracles(p["name"], P) if piece_oracles else None
        pieces.append(ChosenPiece(p["index"], p["stage"], p["cube"], np.asarray(p["center"]), p["radius"],
                                  p["name"], p["overlap"], p["capture"], P, orc, list(p["chain"])))
    params = ConstructionParams(**d["params"])
    stages = [StageRecord(s["m"], s["cubes"], s["pieces"], s["residual"]) for s in d["stages"]]
    return ConstructionTrace(params, d["c1"], d["c2"], d["delta"], d["E_mass"], stages, pieces,
                             mk(d["final_F"]), np.asarray(d["piece_index"], dtype=np.intp),
                             np.asarray(d["residual_points"], dtype=np.intp),
                             {int(k_): v for k_, v in d["cube_diam"].items()},
                             {int(k_): v for k_, v in d["cube_mass"].items()}, eps, k, d.get("halted", ""))


def read_trace(path, space=None, piece_oracles=None):
    return trace_from_dict(json.loads(Path(path).read_text(encoding="utf-8")), space, piece_oracles)
