"""Lipschitz-graph family, big-piece fitting and big-pieces oracles.

Family members are graphs of L-Lipschitz maps over an affine k-plane, clipped
to a window and sampled on the lattice ``epsilon * Z^k`` of the base plane.
Because the frame is orthonormal, two lattice samples are at least as far
apart in the ambient space as in the base plane, so samples are
epsilon-separated by construction and overlapping windows of the same graph
share points exactly.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator, RegularGridInterpolator

from . import kernels
from .geometry import (GeometryError, MetricSpace, PointCloudSet, ball_indices, diameter,
                       distances_to_set)

NONE_FLOOR = 1e-3


class OracleError(RuntimeError):
    """An oracle could not deliver a witness at its guaranteed overlap."""

    def __init__(self, message, x=None, R=None, overlap=None):
        super().__init__(message)
        self.x = None if x is None else np.asarray(x, dtype=float)
        self.R = R
        self.overlap = overlap


def thread_count():
    """Worker cap from ``BIGPIECES_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("BIGPIECES_THREADS", "0").strip() or "0"
    n = int(raw)
    return max(1, os.cpu_count() or 1) if n <= 0 else n


def complement_frame(frame):
    """Orthonormal rows spanning the orthogonal complement of ``frame``'s rows."""
    frame = np.atleast_2d(np.asarray(frame, dtype=float))
    k, n = frame.shape
    if n == 2 and k == 1:
        return np.array([[-frame[0, 1], frame[0, 0]]])
    basis = [row for row in frame]
    out = []
    for e in np.eye(n):
        v = e.copy()
        for b in basis:
            v -= (v @ b) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            v /= nv
            basis.append(v)
            out.append(v)
        if len(out) == n - k:
            break
    return np.array(out).reshape(n - k, n)


def _orthonormal(frame):
    frame = np.atleast_2d(np.asarray(frame, dtype=float))
    q = np.zeros_like(frame)
    for i, row in enumerate(frame):
        v = row - sum((row @ q[j]) * q[j] for j in range(i))
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            raise GeometryError("frame vectors are linearly dependent")
        q[i] = v / nv
    return q


class LipschitzGraphSpec:
    """Graph ``{offset + p @ frame + f(p) @ normal : p in window}``.

    ``f`` is the piecewise-linear interpolant of its node values: a regular
    grid (``axes`` given) or scattered ``nodes``.
    """

    def __init__(self, frame, offset, L, window, values, axes=None, nodes=None, normal=None,
                 check=True):
        self.frame = _orthonormal(frame)
        self.k, self.n = self.frame.shape
        self.normal = complement_frame(self.frame) if normal is None else _orthonormal(normal)
        self.offset = np.asarray(offset, dtype=float).reshape(self.n)
        self.L = float(L)
        lo, hi = window
        self.window = (np.asarray(lo, dtype=float).reshape(self.k), np.asarray(hi, dtype=float).reshape(self.k))
        self.values = np.asarray(values, dtype=float)
        self.axes = None if axes is None else tuple(np.asarray(a, dtype=float) for a in axes)
        self.nodes = None if nodes is None else np.asarray(nodes, dtype=float).reshape(-1, self.k)
        codim = self.n - self.k
        if self.axes is not None:
            shape = tuple(len(a) for a in self.axes)
            self.values = self.values.reshape(shape + (codim,))
            self._interp = RegularGridInterpolator(self.axes, self.values, method="linear",
                                                   bounds_error=False, fill_value=None)
        elif self.nodes is not None:
            self.values = self.values.reshape(len(self.nodes), codim)
            if self.k == 1:
                order = np.argsort(self.nodes[:, 0])
                xs, ys = self.nodes[order, 0], self.values[order]
                self._interp = lambda p: np.stack(
                    [np.interp(p[:, 0], xs, ys[:, j]) for j in range(codim)], axis=1)
            elif len(self.nodes) > self.k:
                lin = LinearNDInterpolator(self.nodes, self.values)
                near = NearestNDInterpolator(self.nodes, self.values)

                def interp(p):
                    v = lin(p)
                    bad = ~np.isfinite(v).all(axis=1)
                    if bad.any():
                        v[bad] = near(p[bad])
                    return v

                self._interp = interp
            else:
                near = NearestNDInterpolator(self.nodes, self.values)
                self._interp = near
        else:
            raise GeometryError("profile needs grid axes or scattered nodes")
        if check and not self.lipschitz_ok():
            raise GeometryError("profile samples violate the declared Lipschitz constant")

    def node_points(self):
        if self.axes is not None:
            mesh = np.meshgrid(*self.axes, indexing="ij")
            return np.stack([m.ravel() for m in mesh], axis=1), self.values.reshape(-1, self.n - self.k)
        return self.nodes, self.values

    def lipschitz_ok(self):
        """All-pairs check ``|f(p) - f(q)| <= L |p - q|`` on the profile nodes."""
        p, v = self.node_points()
        return kernels.count_violations(p, v, self.L * (1 + 1e-12)) == 0

    def evaluate(self, base):
        base = np.atleast_2d(np.asarray(base, dtype=float)).reshape(-1, self.k)
        return np.asarray(self._interp(base), dtype=float).reshape(len(base), self.n - self.k)

    def to_ambient(self, base, heights=None):
        base = np.atleast_2d(np.asarray(base, dtype=float)).reshape(-1, self.k)
        if heights is None:
            heights = self.evaluate(base)
        return self.offset + base @ self.frame + heights @ self.normal

    def to_local(self, points):
        d = np.asarray(points, dtype=float) - self.offset
        return d @ self.frame.T, d @ self.normal.T

    # -- serialization --------------------------------------------------
    def to_dict(self):
        out = {"frame": self.frame.tolist(), "normal": self.normal.tolist(),
               "offset": self.offset.tolist(), "L": self.L,
               "window": [self.window[0].tolist(), self.window[1].tolist()]}
        if self.axes is not None:
            out["profile"] = {"kind": "grid", "axes": [a.tolist() for a in self.axes],
                              "values": self.values.tolist()}
        else:
            out["profile"] = {"kind": "nodes", "nodes": self.nodes.tolist(),
                              "values": self.values.tolist()}
        return out

    @classmethod
    def from_dict(cls, d, L=None, grid_step=None):
        frame = np.atleast_2d(np.asarray(d["frame"], dtype=float))
        k, n = frame.shape
        L = float(d.get("L", L if L is not None else 1.0))
        lo, hi = (np.asarray(w, dtype=float).reshape(k) for w in d["window"])
        prof = d.get("profile", {"kind": "flat"})
        kind = prof.get("kind", "flat")
        normal = d.get("normal")
        if kind == "grid":
            return cls(frame, d["offset"], L, (lo, hi), prof["values"], axes=prof["axes"], normal=normal)
        if kind == "nodes":
            return cls(frame, d["offset"], L, (lo, hi), prof["values"], nodes=prof["nodes"], normal=normal)
        axes, values = named_profile(prof, lo, hi, n - k, grid_step)
        return cls(frame, d["offset"], L, (lo, hi), values, axes=axes, normal=normal)


def named_profile(prof, lo, hi, codim, grid_step=None):
    """Grid samples for the named profiles ``flat``, ``sine``, ``abs`` (cone)."""
    k = len(lo)
    if grid_step is None:
        grid_step = float(np.max(hi - lo)) / (256 if k == 1 else 48)
        grid_step = grid_step if grid_step > 0 else 1.0
    axes = [np.linspace(a, b, max(2, int(math.ceil((b - a) / grid_step)) + 1)) for a, b in zip(lo, hi)]
    mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    kind = prof.get("kind", "flat")
    if kind == "flat":
        h = np.full(len(mesh), float(prof.get("value", 0.0)))
    elif kind == "sine":
        a, f, ph = float(prof["amplitude"]), float(prof.get("frequency", 1.0)), float(prof.get("phase", 0.0))
        h = sum(a * np.sin(2 * np.pi * f * mesh[:, i] + ph) for i in range(k))
    elif kind == "abs":
        c = np.asarray(prof.get("center", [0.0] * k), dtype=float).reshape(k)
        h = float(prof.get("slope", 1.0)) * np.linalg.norm(mesh - c, axis=1)
    else:
        raise GeometryError(f"unknown profile kind {kind!r}")
    vals = np.zeros((len(mesh), codim))
    vals[:, 0] = h
    return axes, vals.reshape(tuple(len(a) for a in axes) + (codim,))


def sample_graph(spec, epsilon, mass_per_point=None):
    """Lattice sample of the graph over its window (epsilon-separated)."""
    if not epsilon > 0:
        raise GeometryError("epsilon must be positive")
    lo, hi = spec.window
    if np.any(hi < lo):
        raise GeometryError("empty window")
    ranges = [np.arange(math.ceil(a / epsilon - 1e-9), math.floor(b / epsilon + 1e-9) + 1)
              for a, b in zip(lo, hi)]
    if any(len(r) == 0 for r in ranges):
        base = ((lo + hi) / 2).reshape(1, -1)
    else:
        mesh = np.meshgrid(*ranges, indexing="ij")
        base = np.stack([m.ravel() for m in mesh], axis=1) * epsilon
    pts = spec.to_ambient(base)
    return PointCloudSet(pts, epsilon, spec.k, mass_per_point, MetricSpace(spec.n))


# ---------------------------------------------------------------------------
# witnesses and measurement


def captured_mask(target, by, delta):
    """Mask of ``target`` points within ``delta`` of the point set ``by``."""
    if len(by) == 0 or len(target) == 0:
        return np.zeros(len(target), dtype=bool)
    return distances_to_set(target.points, by) <= delta


def overlap_fraction(target, by, delta):
    """``mass(target captured by by) / mass(target)``."""
    if len(target) == 0:
        raise GeometryError("empty ball query")
    return float(captured_mask(target, by, delta).sum()) / len(target)


@dataclass
class FamilyWitness:
    """A family member ``G`` (clipped graph sample) answering a ball query."""

    member: PointCloudSet
    spec: LipschitzGraphSpec | None
    overlap: float
    ball_center: np.ndarray
    ball_radius: float
    name: str = ""

    def remeasure(self, S, delta):
        """Overlap of this witness against ``B(x, R) & S``, recomputed from scratch."""
        ball = S.subset(ball_indices(S, self.ball_center, self.ball_radius))
        return overlap_fraction(ball, self.member, delta)


def orientation_frames(points, k, grid):
    """Deterministic k-plane frames: principal frame of ``points`` then ``grid-1`` others."""
    points = np.asarray(points, dtype=float)
    n = points.shape[1]
    frames = []
    if len(points) > 1:
        c = points - points.mean(axis=0)
        w, v = np.linalg.eigh(c.T @ c)
        top = v[:, np.argsort(w)[::-1][:k]].T
        for i in range(k):
            j = np.argmax(np.abs(top[i]))
            if top[i, j] < 0:
                top[i] = -top[i]
        frames.append(_orthonormal(top))
    else:
        frames.append(np.eye(n)[:k])
    extra = max(0, grid - len(frames))
    if n == 2 and k == 1:
        for j in range(extra):
            a = np.pi * j / extra
            frames.append(np.array([[np.cos(a), np.sin(a)]]))
    elif n == 3 and k in (1, 2):
        for j in range(extra):
            # Fibonacci points on the upper hemisphere
            z = 1.0 - (j + 0.5) / extra
            r = math.sqrt(max(0.0, 1 - z * z))
            phi = j * math.pi * (3 - math.sqrt(5))
            u = np.array([r * math.cos(phi), r * math.sin(phi), z])
            frames.append(u.reshape(1, 3) if k == 1 else complement_frame(u.reshape(1, 3)))
    else:
        rng = np.random.default_rng(12345)
        for _ in range(extra):
            q, _ = np.linalg.qr(rng.normal(size=(n, k)))
            frames.append(q.T[:k])
    return frames[:max(1, grid)]


def fit_orientation(points, origin, frame, L):
    """Keep-mask of greedy Lipschitz pruning for one orientation."""
    frame = np.atleast_2d(frame)
    normal = complement_frame(frame)
    d = np.asarray(points, dtype=float) - origin
    return kernels.lipschitz_prune(d @ frame.T, d @ normal.T, L)


def _spec_from_kept(points, origin, frame, L):
    normal = complement_frame(frame)
    d = points - origin
    base, heights = d @ frame.T, d @ normal.T
    lo, hi = base.min(axis=0), base.max(axis=0)
    return LipschitzGraphSpec(frame, origin, L, (lo, hi), heights, nodes=base, normal=normal,
                              check=False)


def fit_big_piece(E, x, R, L=1.0, orientation_grid=16):
    """Best greedy Lipschitz-graph piece of ``B(x, R) & E`` over an orientation grid.

    Returns ``None`` when the best overlap is below ``1e-3``.
    """
    idx = ball_indices(E, x, R)
    if idx.size == 0:
        raise GeometryError("empty ball query")
    P = E.points[idx]
    x = np.asarray(x, dtype=float)
    best_keep, best_frame = None, None
    for frame in orientation_frames(P, E.k, orientation_grid):
        keep = fit_orientation(P, x, frame, L)
        if best_keep is None or keep.sum() > best_keep.sum():
            best_keep, best_frame = keep, frame
    member = E.subset(idx[best_keep])
    ball = E.subset(idx)
    overlap = overlap_fraction(ball, member, 0.0)
    if overlap < NONE_FLOOR:
        return None
    spec = _spec_from_kept(member.points, x, best_frame, L)
    return FamilyWitness(member, spec, overlap, x.copy(), float(R), name="fitted")


def sample_balls(S, sample_count, rng_seed, floor=10.0):
    """``(center index, radius)`` pairs: radii log-uniform in ``[floor*eps, diam]``."""
    diam = diameter(S)
    lo = floor * S.epsilon
    if len(S) < 2 or diam <= lo:
        raise GeometryError("resolution too coarse for regularity estimation")
    rng = np.random.default_rng(rng_seed)
    radii = np.exp(rng.uniform(math.log(lo), math.log(diam), size=sample_count))
    centers = rng.integers(0, len(S), size=sample_count)
    return [(int(c), float(r)) for c, r in zip(centers, radii)]


@dataclass
class BPCertificate:
    theta: float
    L: float
    samples: list
    overlaps: np.ndarray
    witnesses: list = field(repr=False)

    @property
    def pass_fraction(self):
        return float(np.mean(self.overlaps >= self.theta)) if len(self.overlaps) else 1.0

    @property
    def worst_case(self):
        j = int(np.argmin(self.overlaps))
        x, R = self.samples[j]
        return x, R, float(self.overlaps[j])

    def to_dict(self):
        x, R, ov = self.worst_case
        return {"theta": self.theta, "L": self.L, "pass_fraction": self.pass_fraction,
                "worst_case": {"x": list(map(float, x)), "R": R, "overlap": ov},
                "samples": [{"x": list(map(float, s[0])), "R": s[1], "overlap": float(o)}
                            for s, o in zip(self.samples, self.overlaps)]}


def certify_bp(E, L=1.0, theta=0.5, sample_count=64, rng_seed=0, orientation_grid=16):
    """Fit a big piece on sampled balls; a sample passes iff its overlap >= theta."""
    balls = sample_balls(E, sample_count, rng_seed)

    def run(b):
        c, r = b
        return fit_big_piece(E, E.points[c], r, L, orientation_grid)

    workers = min(thread_count(), len(balls))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            wits = list(pool.map(run, balls))
    else:
        wits = [run(b) for b in balls]
    overlaps = np.array([0.0 if w is None else w.overlap for w in wits])
    samples = [(E.points[c].copy(), r) for c, r in balls]
    return BPCertificate(float(theta), float(L), samples, overlaps, wits)


# ---------------------------------------------------------------------------
# oracles


@dataclass
class Member:
    name: str
    spec: LipschitzGraphSpec
    sample: PointCloudSet


class FittedOracle:
    """BP(F) oracle answering by :func:`fit_big_piece`."""

    provenance = "fitted"

    def __init__(self, S, L=1.0, theta=0.0, orientation_grid=16):
        self.S, self.L, self.theta, self.orientation_grid = S, L, theta, orientation_grid

    def query(self, x, R):
        w = fit_big_piece(self.S, x, R, self.L, self.orientation_grid)
        if w is None or w.overlap < self.theta:
            raise OracleError("fitted oracle below its theta", x, R, 0.0 if w is None else w.overlap)
        return w


class PieceOracle:
    """Scripted BP(F) oracle of a set ``S`` built from known family members.

    A query picks the member carrying the most mass of ``B(x, R) & S`` (ties
    by declaration order) and returns that member's sample clipped to
    ``B(x, R)``; the reported overlap is remeasured on the clipped sample.
    """

    provenance = "synthetic"

    def __init__(self, S, members, delta, theta=0.0, mask=None, name=""):
        self.S = S
        self.members = list(members)
        self.delta = float(delta)
        self.theta = float(theta)
        self.name = name
        if mask is None:
            mask = np.zeros((len(S), len(self.members)), dtype=bool)
            for j, m in enumerate(self.members):
                mask[:, j] = captured_mask(S, m.sample, self.delta)
        self.mask = mask

    def clip(self, x, R):
        idx = ball_indices(self.S, x, R)
        return PieceOracle(self.S.subset(idx), self.members, self.delta, self.theta,
                           self.mask[idx], self.name)

    def restrict(self, idx):
        return PieceOracle(self.S.subset(idx), self.members, self.delta, self.theta,
                           self.mask[idx], self.name)

    def query(self, x, R):
        x = np.asarray(x, dtype=float)
        idx = ball_indices(self.S, x, R) if R > 0 else np.empty(0, dtype=np.intp)
        if idx.size == 0:
            if len(self.S) == 0:
                raise GeometryError("empty ball query")
            j = int(np.argmin(self.S.space.to_point(self.S.points, x)))
            idx = np.array([j])
        scores = self.mask[idx].sum(axis=0)
        best = int(np.argmax(scores))
        m = self.members[best]
        g_idx = ball_indices(m.sample, x, R) if R > 0 else np.empty(0, dtype=np.intp)
        G = m.sample.subset(g_idx)
        ball = self.S.subset(idx)
        ov = overlap_fraction(ball, G, self.delta)
        return FamilyWitness(G, m.spec, ov, x.copy(), float(R), name=m.name)


@dataclass
class TwoLevelWitness:
    """Answer of a BP(BP(F)) oracle: a BP(F) set ``E'`` plus its own oracle."""

    piece: PointCloudSet
    oracle: object
    overlap: float
    ball_center: np.ndarray
    ball_radius: float
    name: str = ""


@dataclass
class ScriptedPiece:
    name: str
    members: list
    points: PointCloudSet
    theta2: float

    def oracle(self, delta):
        return PieceOracle(self.points, self.members, delta, self.theta2, name=self.name)


class ScriptedBPBPOracle:
    """Scripted BP(BP(F)) oracle for an ambient set ``E``.

    A query returns the scripted piece capturing the most E-mass of the ball
    (ties by declaration order), clipped to the ball, with the clipped piece's
    own BP(F) oracle.  Balls below the resolution get the nearest piece point.
    """

    provenance = "synthetic"

    def __init__(self, E, pieces, theta1, delta=None):
        self.E = E
        self.pieces = list(pieces)
        self.theta1 = float(theta1)
        self.delta = E.epsilon / 2 if delta is None else float(delta)
        self._piece_oracles = [p.oracle(self.delta) for p in self.pieces]
        self.mask = np.zeros((len(E), len(self.pieces)), dtype=bool)
        for j, p in enumerate(self.pieces):
            self.mask[:, j] = captured_mask(E, p.points, self.delta)

    def with_ambient(self, E):
        return ScriptedBPBPOracle(E, self.pieces, self.theta1, self.delta)

    def query(self, x, R, check=True):
        x = np.asarray(x, dtype=float)
        idx = ball_indices(self.E, x, R) if R > 0 else np.empty(0, dtype=np.intp)
        if idx.size <= 1 and R < self.E.epsilon:
            d = [float(distances_to_set(x.reshape(1, -1), p.points)[0]) for p in self.pieces]
            j = int(np.argmin(d))
            po = self._piece_oracles[j]
            near = int(np.argmin(po.S.space.to_point(po.S.points, x)))
            sub = po.restrict(np.array([near]))
            if idx.size == 0:
                idx = np.array([int(np.argmin(self.E.space.to_point(self.E.points, x)))])
            ov = overlap_fraction(self.E.subset(idx), sub.S, self.delta)
            w = TwoLevelWitness(sub.S, sub, ov, x.copy(), float(R), self.pieces[j].name)
        else:
            if idx.size == 0:
                raise GeometryError("empty ball query")
            j = int(np.argmax(self.mask[idx].sum(axis=0)))
            sub = self._piece_oracles[j].clip(x, R)
            ov = overlap_fraction(self.E.subset(idx), sub.S, self.delta)
            w = TwoLevelWitness(sub.S, sub, ov, x.copy(), float(R), self.pieces[j].name)
        if check and w.overlap < self.theta1:
            raise OracleError(f"oracle overlap {w.overlap:.4f} below theta1={self.theta1}", x, R, w.overlap)
        return w

    def validate(self, centers=300, radii=8, rng_seed=0, check_theta2=True):
        """Sampled check of the declared thetas; raises on the first violation."""
        E = self.E
        rng = np.random.default_rng(rng_seed)
        cidx = np.arange(len(E)) if len(E) <= centers else np.sort(rng.choice(len(E), centers, replace=False))
        diam = diameter(E)
        rs = np.geomspace(2 * E.epsilon, diam, radii) if diam > 2 * E.epsilon else np.array([diam])
        worst = 1.0
        for c in cidx:
            for r in rs:
                w = self.query(E.points[c], r, check=False)
                worst = min(worst, w.overlap)
                if w.overlap < self.theta1:
                    raise OracleError("scenario violates its declared theta1", E.points[c], r, w.overlap)
        if check_theta2:
            for p, po in zip(self.pieces, self._piece_oracles):
                S = p.points
                pc = np.arange(len(S)) if len(S) <= centers // 2 else np.sort(
                    rng.choice(len(S), centers // 2, replace=False))
                pd = diameter(S)
                prs = np.geomspace(2 * S.epsilon, pd, radii) if pd > 2 * S.epsilon else np.array([max(pd, S.epsilon)])
                for c in pc:
                    for r in prs:
                        w = po.query(S.points[c], r)
                        if w.overlap < p.theta2:
                            raise OracleError(f"scenario violates its declared theta2 (piece {p.name})",
                                              S.points[c], r, w.overlap)
        return worst


@dataclass
class ScriptedSuperPiece:
    name: str
    pieces: list
    points: PointCloudSet
    theta: float


class ScriptedBP3Oracle:
    """Three-level scripted oracle: balls are answered by a clipped BP(BP(F)) set."""

    provenance = "synthetic"

    def __init__(self, E, superpieces, theta, delta=None):
        self.E = E
        self.superpieces = list(superpieces)
        self.theta = float(theta)
        self.delta = E.epsilon / 2 if delta is None else float(delta)
        self.mask = np.zeros((len(E), len(self.superpieces)), dtype=bool)
        for j, sp in enumerate(self.superpieces):
            self.mask[:, j] = captured_mask(E, sp.points, self.delta)

    def query(self, x, R):
        x = np.asarray(x, dtype=float)
        idx = ball_indices(self.E, x, R)
        if idx.size == 0:
            raise GeometryError("empty ball query")
        j = int(np.argmax(self.mask[idx].sum(axis=0)))
        sp = self.superpieces[j]
        sub = sp.points.subset(ball_indices(sp.points, x, R))
        if len(sub) == 0:
            raise GeometryError("empty ball query")
        ov = overlap_fraction(self.E.subset(idx), sub, self.delta)
        inner = ScriptedBPBPOracle(sub, sp.pieces, sp.theta, self.delta)
        if ov < self.theta:
            raise OracleError("three-level oracle below theta", x, R, ov)
        return TwoLevelWitness(sub, inner, ov, x.copy(), float(R), sp.name)
