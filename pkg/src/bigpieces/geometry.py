"""Point-cloud sets, spatial queries, greedy nets and regularity estimation.

A closed k-regular set is represented by a finite epsilon-separated point
cloud.  Measure is modelled as ``len(points) * mass_per_point`` with
``mass_per_point = epsilon**k`` by default, and balls are closed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

# Relative slack for "pairwise >= r" comparisons; absorbs accumulated
# round-off in lattice coordinates such as 0.01 * j.
SEP_RTOL = 1e-9
# Separation slack accepted when reading point-cloud files.
FILE_SEP_RTOL = 0.01
_CHUNK = 2048


class GeometryError(ValueError):
    """Raised for invalid geometric input (degenerate sets, bad files...)."""


class MetricSpace:
    """Ambient space: dimension plus a distance function.

    ``metric`` is ``"euclidean"`` (fast path backed by a k-d tree), any metric
    name understood by :func:`scipy.spatial.distance.cdist`, or a callable
    ``f(u, v) -> float``.  Non-Euclidean metrics are evaluated by brute force
    and are expected to be doubling on the data in practice.
    """

    def __init__(self, ambient_dim, metric="euclidean"):
        if ambient_dim < 1:
            raise GeometryError("ambient_dim must be a positive integer")
        self.ambient_dim = int(ambient_dim)
        self.metric = metric

    @property
    def is_euclidean(self):
        return isinstance(self.metric, str) and self.metric == "euclidean"

    def pairwise(self, A, B):
        """Distance matrix between the rows of ``A`` and ``B``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if self.is_euclidean:
            out = np.empty((A.shape[0], B.shape[0]))
            for s in range(0, A.shape[0], _CHUNK):
                blk = A[s:s + _CHUNK]
                out[s:s + _CHUNK] = np.sqrt(((blk[:, None, :] - B[None, :, :]) ** 2).sum(axis=-1))
            return out
        return cdist(A, B, metric=self.metric)

    def to_point(self, P, x):
        """Distances from every row of ``P`` to the single point ``x``."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        x = np.asarray(x, dtype=float).reshape(1, -1)
        if self.is_euclidean:
            return np.sqrt(((P[:, None, :] - x[None, :, :]) ** 2).sum(axis=-1))[:, 0]
        return cdist(P, x, metric=self.metric)[:, 0]

    def spot_check(self, points, triples=32, rng_seed=0):
        """Check symmetry, identity and the triangle inequality on random triples."""
        points = np.asarray(points, dtype=float)
        if len(points) < 3 or self.is_euclidean:
            return
        rng = np.random.default_rng(rng_seed)
        idx = rng.integers(0, len(points), size=(triples, 3))
        for i, j, l in idx:
            x, y, z = points[i], points[j], points[l]
            dxy = self.pairwise(x, y)[0, 0]
            dyx = self.pairwise(y, x)[0, 0]
            dxz = self.pairwise(x, z)[0, 0]
            dyz = self.pairwise(y, z)[0, 0]
            dxx = self.pairwise(x, x)[0, 0]
            tol = 1e-9 * max(1.0, dxy + dyz)
            if dxx > tol or abs(dxy - dyx) > tol or dxz > dxy + dyz + tol:
                raise GeometryError("metric fails the metric axioms on sampled triples")

    def __eq__(self, other):
        return (isinstance(other, MetricSpace) and other.ambient_dim == self.ambient_dim
                and other.metric == self.metric)

    def __hash__(self):
        return hash((self.ambient_dim, repr(self.metric)))

    def __repr__(self):
        return f"MetricSpace(ambient_dim={self.ambient_dim}, metric={self.metric!r})"


class PointCloudSet:
    """Finite epsilon-separated weighted point set standing in for a k-regular set.

    Instances are immutable: the coordinate array is made read-only and all
    derived sets are new objects.  A k-d tree is built lazily for Euclidean
    queries.
    """

    __slots__ = ("points", "epsilon", "k", "mass_per_point", "space", "_tree", "_diam")

    def __init__(self, points, epsilon, k, mass_per_point=None, space=None, *,
                 validate=True, sep_rtol=SEP_RTOL):
        pts = np.array(points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if space is None or space.ambient_dim == 1 else pts.reshape(1, -1)
        if pts.ndim != 2:
            raise GeometryError("points must be a 2-D array of coordinates")
        if space is None:
            space = MetricSpace(pts.shape[1] if pts.shape[1] else 1)
        if pts.shape[0] and pts.shape[1] != space.ambient_dim:
            raise GeometryError("point dimension does not match the ambient space")
        if pts.shape[0] == 0:
            pts = pts.reshape(0, space.ambient_dim)
        pts.setflags(write=False)
        epsilon = float(epsilon)
        if not epsilon > 0:
            raise GeometryError("epsilon must be positive")
        k = int(k)
        if k < 1 or k > space.ambient_dim:
            raise GeometryError("k must satisfy 1 <= k <= ambient_dim")
        mass = epsilon ** k if mass_per_point is None else float(mass_per_point)
        if not mass > 0:
            raise GeometryError("mass_per_point must be positive")
        self.points = pts
        self.epsilon = epsilon
        self.k = k
        self.mass_per_point = mass
        self.space = space
        self._tree = None
        self._diam = None
        if validate:
            if not np.all(np.isfinite(pts)):
                raise GeometryError("points must be finite")
            space.spot_check(pts)
            bad = separation_violations(self, epsilon * (1.0 - sep_rtol), limit=1)
            if bad:
                i, j, d = bad[0]
                raise GeometryError(
                    f"points {i} and {j} are {d:.6g} apart, below epsilon={epsilon:.6g}")

    # -- basic protocol -------------------------------------------------
    def __len__(self):
        return self.points.shape[0]

    def __repr__(self):
        return (f"PointCloudSet(n_points={len(self)}, ambient_dim={self.ambient_dim}, "
                f"k={self.k}, epsilon={self.epsilon:g})")

    @property
    def ambient_dim(self):
        return self.space.ambient_dim

    @property
    def mass(self):
        return len(self) * self.mass_per_point

    @property
    def tree(self):
        if self._tree is None:
            self._tree = cKDTree(self.points) if len(self) else None
        return self._tree

    def subset(self, idx):
        """Sub-cloud on an index array or boolean mask (separation is inherited)."""
        idx = np.asarray(idx)
        if idx.size == 0:
            idx = idx.astype(np.intp)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return self.like(self.points[idx])

    def like(self, points, validate=False):
        """New cloud with the same epsilon, k, mass and metric."""
        return PointCloudSet(points, self.epsilon, self.k, self.mass_per_point, self.space,
                             validate=validate)

    def compatible(self, other):
        return (self.space == other.space and self.k == other.k
                and math.isclose(self.epsilon, other.epsilon, rel_tol=1e-12)
                and math.isclose(self.mass_per_point, other.mass_per_point, rel_tol=1e-12))


@dataclass
class RegularityReport:
    """Sampled Ahlfors-David regularity ratios ``mass(B(x,r) & S) / r**k``."""

    k: int
    scales: list
    centers: np.ndarray
    radii: np.ndarray
    ratios: np.ndarray
    C_best: float
    samples_tested: int
    failures: list = field(default_factory=list)

    @property
    def per_scale(self):
        """``(r, min ratio, max ratio)`` for each tested scale."""
        rows = []
        for r in self.scales:
            sel = self.ratios[self.radii == r]
            rows.append((float(r), float(sel.min()), float(sel.max())))
        return rows

    def to_dict(self):
        return {
            "k": self.k,
            "C_best": self.C_best,
            "samples_tested": self.samples_tested,
            "per_scale": [{"r": r, "min_ratio": lo, "max_ratio": hi} for r, lo, hi in self.per_scale],
            "failures": [{"x": list(map(float, x)), "r": float(r), "ratio": float(q)}
                         for x, r, q in self.failures],
        }


# ---------------------------------------------------------------------------
# spatial queries


def _sq_candidates(S, x, r):
    """Candidate indices for the closed ball, slightly inflated for round-off."""
    if S.tree is None:
        return np.empty(0, dtype=np.intp)
    return np.asarray(S.tree.query_ball_point(np.asarray(x, dtype=float), r * (1 + 1e-9) + 1e-300),
                      dtype=np.intp)


def ball_indices(S, x, r):
    """Sorted indices of the points ``p`` of ``S`` with ``d(x, p) <= r``."""
    if len(S) == 0:
        return np.empty(0, dtype=np.intp)
    if S.space.is_euclidean:
        cand = np.sort(_sq_candidates(S, x, r))
        if cand.size == 0:
            return cand
        d = S.space.to_point(S.points[cand], x)
        return cand[d <= r]
    d = S.space.to_point(S.points, x)
    return np.flatnonzero(d <= r)


def ball_points(S, x, r):
    """Closed ball ``B(x, r)`` intersected with ``S``."""
    if not r > 0:
        raise GeometryError("ball radius must be positive")
    return S.subset(ball_indices(S, x, r))


def ball_count(S, x, r):
    return int(ball_indices(S, x, r).size)


def lex_order(points):
    """Indices sorting points lexicographically by coordinates."""
    points = np.asarray(points)
    if points.shape[0] == 0:
        return np.empty(0, dtype=np.intp)
    return np.lexsort(points.T[::-1])


def greedy_net_indices(S, r, order=None):
    """Greedy maximal r-net: indices in selection order.

    A point is skipped iff it lies closer than ``r`` to an already selected
    point, so selected points are pairwise ``>= r`` apart and every point is
    within ``r`` of a selected one.
    """
    n = len(S)
    if n == 0:
        return np.empty(0, dtype=np.intp)
    if not r > 0:
        raise GeometryError("net radius must be positive")
    order = lex_order(S.points) if order is None else np.asarray(order, dtype=np.intp)
    thresh = r * (1.0 - SEP_RTOL)
    covered = np.zeros(n, dtype=bool)
    chosen = []
    if S.space.is_euclidean:
        tree = S.tree
        pts = S.points
        for i in order:
            if covered[i]:
                continue
            chosen.append(i)
            cand = np.asarray(tree.query_ball_point(pts[i], thresh), dtype=np.intp)
            if cand.size:
                d = S.space.to_point(pts[cand], pts[i])
                covered[cand[d < thresh]] = True
            covered[i] = True
        return np.asarray(chosen, dtype=np.intp)
    for i in order:
        if covered[i]:
            continue
        chosen.append(i)
        d = S.space.to_point(S.points, S.points[i])
        covered |= d < thresh
        covered[i] = True
    return np.asarray(chosen, dtype=np.intp)


def greedy_maximal_net(S, r, order=None):
    """Coordinates of the greedy maximal r-net of ``S`` (see :func:`greedy_net_indices`)."""
    return S.points[greedy_net_indices(S, r, order)]


def set_mass(S):
    return len(S) * S.mass_per_point


def distances_to_set(P, S):
    """Distance from each row of ``P`` to the cloud ``S`` (``inf`` if ``S`` is empty)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if len(S) == 0:
        return np.full(P.shape[0], np.inf)
    if P.shape[0] == 0:
        return np.empty(0)
    if S.space.is_euclidean:
        _, idx = S.tree.query(P, k=1)
        diff = P - S.points[idx]
        return np.sqrt((diff[:, None, :] ** 2).sum(axis=-1))[:, 0]
    out = np.empty(P.shape[0])
    for s in range(0, P.shape[0], _CHUNK):
        out[s:s + _CHUNK] = S.space.pairwise(P[s:s + _CHUNK], S.points).min(axis=1)
    return out


def point_set_distance(x, S):
    if len(S) == 0:
        raise GeometryError("distance to empty set")
    return float(distances_to_set(np.asarray(x, dtype=float).reshape(1, -1), S)[0])


def set_distance(S, T):
    if len(S) == 0 or len(T) == 0:
        raise GeometryError("distance to empty set")
    if len(S) > len(T):
        S, T = T, S
    return float(distances_to_set(S.points, T).min())


def diameter_of_points(points, space):
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n < 2:
        return 0.0
    if space.is_euclidean and n > 4000 and points.shape[1] >= 2:
        try:
            from scipy.spatial import ConvexHull

            points = points[ConvexHull(points).vertices]
        except Exception:  # degenerate hull: fall back to brute force
            pass
    best = 0.0
    for s in range(0, points.shape[0], _CHUNK):
        best = max(best, float(space.pairwise(points[s:s + _CHUNK], points).max()))
    return best


def diameter(S):
    if S._diam is None:
        S._diam = diameter_of_points(S.points, S.space)
    return S._diam


def separation_violations(S, r, limit=None):
    """Pairs ``(i, j, d)`` with ``d(p_i, p_j) < r``."""
    out = []
    n = len(S)
    if n < 2:
        return out
    if S.space.is_euclidean:
        pairs = S.tree.query_pairs(r, output_type="ndarray")
        if len(pairs):
            d = np.sqrt(((S.points[pairs[:, 0]] - S.points[pairs[:, 1]]) ** 2).sum(axis=1))
            for (i, j), dd in zip(pairs[d < r], d[d < r]):
                out.append((int(i), int(j), float(dd)))
                if limit and len(out) >= limit:
                    break
        return out
    for s in range(0, n, _CHUNK):
        D = S.space.pairwise(S.points[s:s + _CHUNK], S.points)
        ii, jj = np.nonzero(D < r)
        for i, j in zip(ii + s, jj):
            if i < j:
                out.append((int(i), int(j), float(D[i - s, j])))
                if limit and len(out) >= limit:
                    return out
    return out


def within(P, S, delta):
    """Boolean mask: rows of ``P`` within ``delta`` of ``S``."""
    return distances_to_set(P, S) <= delta


def merge(clouds, epsilon=None):
    """Epsilon-separated union of compatible clouds, earlier clouds taking priority.

    Returns ``(cloud, source)`` where ``source[i] = (c, j)`` says merged point
    ``i`` is point ``j`` of ``clouds[c]``.  A later point is dropped iff it is
    closer than ``epsilon`` to an already kept one.
    """
    clouds = [c for c in clouds]
    if not clouds:
        raise GeometryError("nothing to merge")
    base = clouds[0]
    for c in clouds[1:]:
        if not base.compatible(c):
            raise GeometryError("cannot merge clouds with different epsilon, k or metric")
    eps = base.epsilon if epsilon is None else float(epsilon)
    pts = np.concatenate([c.points for c in clouds], axis=0)
    src = np.concatenate([np.stack([np.full(len(c), ci), np.arange(len(c))], axis=1)
                          for ci, c in enumerate(clouds)], axis=0).astype(np.intp)
    joined = base.like(pts)
    keep = np.sort(greedy_net_indices(joined, eps, order=np.arange(len(pts))))
    return base.like(pts[keep]), src[keep]


# ---------------------------------------------------------------------------
# regularity


def _ratio_at(S, center, r):
    return ball_count(S, center, r) * S.mass_per_point / r ** S.k


def estimate_adr(S, scale_count=8, samples_per_scale=64, rng_seed=0, cap=None, floor=10.0):
    """Sampled ADR constant: scales log-uniform in ``[floor*eps, diam]``, random centers."""
    if len(S) < 2:
        raise GeometryError("resolution too coarse for regularity estimation")
    diam = diameter(S)
    lo = floor * S.epsilon
    if diam <= lo:
        raise GeometryError("resolution too coarse for regularity estimation")
    rng = np.random.default_rng(rng_seed)
    scales = np.sort(np.exp(rng.uniform(math.log(lo), math.log(diam), size=scale_count)))
    centers, radii, ratios = [], [], []
    for r in scales:
        idx = rng.integers(0, len(S), size=samples_per_scale)
        for i in idx:
            centers.append(int(i))
            radii.append(float(r))
            ratios.append(_ratio_at(S, S.points[i], r))
    return _report(S, [float(r) for r in scales], centers, radii, ratios, cap)


def exhaustive_adr(S, radii, cap=None):
    """ADR ratios at every point of ``S`` for each radius (brute-force companion)."""
    centers, rr, ratios = [], [], []
    for r in radii:
        for i in range(len(S)):
            centers.append(i)
            rr.append(float(r))
            ratios.append(_ratio_at(S, S.points[i], r))
    return _report(S, [float(r) for r in radii], centers, rr, ratios, cap)


def _report(S, scales, centers, radii, ratios, cap):
    ratios = np.asarray(ratios, dtype=float)
    radii = np.asarray(radii, dtype=float)
    centers = np.asarray(centers, dtype=np.intp)
    spread = np.maximum(ratios, 1.0 / ratios)
    C_best = max(1.0, float(spread.max()))
    failures = []
    if cap is not None:
        for j in np.flatnonzero(spread > cap):
            failures.append((S.points[centers[j]].copy(), float(radii[j]), float(ratios[j])))
    return RegularityReport(S.k, scales, centers, radii, ratios, C_best, int(ratios.size), failures)


# ---------------------------------------------------------------------------
# file format


def write_pcs(S, path):
    """Write ``pcs v1``: header line then one point per line."""
    header = f"pcs v1 n={S.ambient_dim} k={S.k} eps={S.epsilon!r}"
    if not math.isclose(S.mass_per_point, S.epsilon ** S.k, rel_tol=1e-15):
        header += f" mass={S.mass_per_point!r}"
    lines = [header]
    lines.extend(" ".join(repr(float(c)) for c in p) for p in S.points)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_pcs(path, sep_rtol=FILE_SEP_RTOL):
    path = Path(path)
    if not path.exists():
        raise GeometryError(f"point-cloud file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("pcs v1"):
        raise GeometryError(f"{path}: missing 'pcs v1' header")
    fields = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
    try:
        n, k, eps = int(fields["n"]), int(fields["k"]), float(fields["eps"])
    except (KeyError, ValueError) as exc:
        raise GeometryError(f"{path}: malformed header") from exc
    mass = float(fields["mass"]) if "mass" in fields else None
    rows = [ln.split() for ln in lines[1:] if ln.strip()]
    if any(len(r) != n for r in rows):
        raise GeometryError(f"{path}: point with wrong number of coordinates")
    pts = np.array(rows, dtype=float).reshape(-1, n)
    return PointCloudSet(pts, eps, k, mass, MetricSpace(n), sep_rtol=sep_rtol)
