"""Independent checks of the construction's claims, as replayable reports."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .construct import TraceBPOracle
from .families import OracleError, certify_bp, overlap_fraction, sample_balls
from .geometry import (GeometryError, ball_indices, diameter, distances_to_set, estimate_adr)

CLAIMS = ("containment", "adr", "bp", "separation", "decay", "lemma1", "lemma2_containment",
          "lemma2_smallball", "gluing_disjoint", "collapse")


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf" if f < 0 else "nan")
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def digest(config):
    blob = json.dumps(_plain(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class VerificationReport:
    claim: str
    status: str
    measured: dict = field(default_factory=dict)
    counterexamples: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if self.claim not in CLAIMS:
            raise ValueError(f"unknown claim {self.claim!r}")
        if self.status not in ("pass", "fail"):
            raise ValueError("status must be 'pass' or 'fail'")
        if (self.status == "fail") != bool(self.counterexamples):
            raise ValueError("a report fails exactly when it lists counterexamples")

    @property
    def passed(self):
        return self.status == "pass"

    def to_dict(self):
        return _plain({"claim": self.claim, "status": self.status, "measured": self.measured,
                       "counterexamples": self.counterexamples, "config": self.config,
                       "config_digest": digest(self.config), "notes": self.notes})


def _report(claim, bad, measured, config, notes=()):
    return VerificationReport(claim, "fail" if bad else "pass", measured, list(bad), config, list(notes))


def _cloud_cfg(S):
    return {"n_points": len(S), "epsilon": S.epsilon, "k": S.k,
            "points_sha256": hashlib.sha256(np.ascontiguousarray(S.points).tobytes()).hexdigest()}


# ---------------------------------------------------------------------------
# claims about the constructed superset


def verify_containment(E, F, delta=None, limit=50):
    delta = E.epsilon / 2 if delta is None else float(delta)
    d = distances_to_set(E.points, F)
    miss = np.flatnonzero(d > delta)
    bad = [{"x": E.points[i], "distance": float(d[i])} for i in miss[:limit]]
    return _report("containment", bad, {"missing": int(miss.size), "max_distance": float(d.max())},
                   {"E": _cloud_cfg(E), "F": _cloud_cfg(F), "delta": delta})


def verify_adr(F, cap, scale_count=10, samples_per_scale=50, rng_seed=0):
    rep = estimate_adr(F, scale_count, samples_per_scale, rng_seed, cap=cap)
    bad = [{"x": x, "R": r, "ratio": q} for x, r, q in rep.failures]
    return _report("adr", bad, {"C_F": rep.C_best, "samples": rep.samples_tested,
                                "min_ratio": float(rep.ratios.min()), "max_ratio": float(rep.ratios.max())},
                   {"F": _cloud_cfg(F), "cap": cap, "scale_count": scale_count,
                    "samples_per_scale": samples_per_scale, "rng_seed": rng_seed})


def verify_bp(F, theta2_prime, L=1.0, sample_count=200, rng_seed=0, trace=None, alpha=None,
              orientation_grid=16):
    """Sampled BP(F) check; trace-guided when ``trace`` is given, fitted otherwise."""
    cfg = {"F": _cloud_cfg(F), "theta2_prime": theta2_prime, "L": L, "sample_count": sample_count,
           "rng_seed": rng_seed, "guided": trace is not None, "alpha": alpha,
           "orientation_grid": orientation_grid}
    if trace is None:
        cert = certify_bp(F, L, theta2_prime, sample_count, rng_seed, orientation_grid)
        bad = [{"x": s[0], "R": s[1], "overlap": float(o)}
               for s, o in zip(cert.samples, cert.overlaps) if o < theta2_prime]
        return _report("bp", bad, {"theta2_prime": float(cert.overlaps.min()),
                                   "pass_fraction": cert.pass_fraction, "paths": {"fitted": len(cert.samples)}},
                       cfg)
    oracle = TraceBPOracle(trace, alpha, L, orientation_grid)
    cfg["alpha"] = oracle.alpha
    paths = {"piece": 0, "chain": 0, "fallback": 0, "fitted": 0}
    worst, bad = 1.0, []
    for c, R in sample_balls(F, sample_count, rng_seed):
        x = F.points[c]
        try:
            w, path = oracle.query(x, R)
        except (OracleError, GeometryError) as exc:
            bad.append({"x": x, "R": R, "error": str(exc)})
            worst = 0.0
            continue
        inside = bool(np.all(F.space.to_point(w.member.points, x) <= R * (1 + 1e-12))) if len(w.member) else True
        ov = overlap_fraction(F.subset(ball_indices(F, x, R)), w.member, trace.delta)
        paths[path] += 1
        worst = min(worst, ov)
        if ov < theta2_prime or not inside:
            bad.append({"x": x, "R": R, "overlap": ov, "path": path, "contained": inside})
    return _report("bp", bad, {"theta2_prime": worst, "paths": paths}, cfg)


# ---------------------------------------------------------------------------
# trace invariants


def _check_ids(trace, T):
    n = len(T.index)
    for p in trace.pieces:
        if not 0 <= p.cube < n:
            raise GeometryError(f"trace refers to unknown cube {p.cube}")
    for st in trace.stages:
        for c in st.cubes:
            if not 0 <= c < n:
                raise GeometryError(f"trace refers to unknown cube {c}")


def separation_violations(trace, limit=None):
    """Pairs of chosen pieces with ``dist(F_Q, F_Q') <= min(diam Q, diam Q')``."""
    from scipy.spatial import cKDTree

    pieces = trace.pieces
    if len(pieces) < 2:
        return []
    pts = np.concatenate([p.points.points for p in pieces])
    lab = np.concatenate([np.full(len(p.points), p.index) for p in pieces])
    diam = np.array([trace.cube_diam[p.cube] for p in pieces])
    tree = cKDTree(pts)
    found = {}
    for p in pieces:
        r = diam[p.index]
        hits = tree.query_ball_point(p.points.points, r * (1 + 1e-9) + 1e-12)
        cand = set()
        for h in hits:
            cand.update(lab[h].tolist())
        for j in cand:
            if j == p.index or diam[j] < r or (j, p.index) in found or (p.index, j) in found:
                continue
            a, b = min(p.index, j), max(p.index, j)
            d = float(distances_to_set(pieces[a].points.points, pieces[b].points).min())
            m = min(diam[a], diam[b])
            if not d > m:
                found[(a, b)] = (d, m)
    out = []
    for (a, b), (d, m) in sorted(found.items()):
        out.append({"pieces": [a, b], "stages": [pieces[a].stage, pieces[b].stage],
                    "cubes": [pieces[a].cube, pieces[b].cube], "distance": d, "min_diam": float(m)})
        if limit and len(out) >= limit:
            break
    return out


def verify_separation(trace, T=None):
    if T is not None:
        _check_ids(trace, T)
    bad = separation_violations(trace)
    n = len(trace.pieces)
    same = sum(1 for b in bad if b["stages"][0] == b["stages"][1])
    return _report("separation", bad, {"pairs_checked": n * (n - 1) // 2, "violations": len(bad),
                                       "same_stage_violations": same}, {"pieces": n})


def verify_decay(trace):
    c0 = trace.c0_achieved
    res = trace.residuals
    bad, ratios = [], []
    for N in range(1, len(res)):
        if res[N - 1] <= 0:
            continue
        q = res[N] / res[N - 1]
        ratios.append(q)
        if q > 1 - c0:
            bad.append({"stage": N, "ratio": q, "bound": 1 - c0})
    for N, r in enumerate(res):
        bound = (1 - c0) ** (N + 1) * trace.E_mass
        if r > bound * (1 + 1e-12):
            bad.append({"stage": N, "residual": r, "cumulative_bound": bound})
    return _report("decay", bad, {"c0_achieved": c0, "ratios": ratios, "residuals": res,
                                  "final_fraction": res[-1] / trace.E_mass if trace.E_mass else 0.0,
                                  "halted": trace.halted},
                   {"stages": len(res), "E_mass": trace.E_mass})


def verify_lemma1(trace, T):
    """``sum of mass(F_Q') over chosen Q' inside Q <= (C_family / c0) mass(Q)``."""
    _check_ids(trace, T)
    idx = T.index
    c0 = trace.c0_achieved
    ratio = max(p.mass / trace.cube_mass[p.cube] for p in trace.pieces)
    C_family = ratio
    bound = C_family / c0
    bad, worst = [], 0.0
    # each piece's mass is credited to every ancestor cube in the tree
    below = {}
    for p in trace.pieces:
        for c in idx.ancestors(p.cube):
            below[c] = below.get(c, 0.0) + p.mass
    for p in trace.pieces:
        total = below[p.cube]
        q = total / trace.cube_mass[p.cube]
        worst = max(worst, q)
        if total > bound * trace.cube_mass[p.cube]:
            bad.append({"cube": p.cube, "descendant_mass": total, "cube_mass": trace.cube_mass[p.cube],
                        "bound": bound * trace.cube_mass[p.cube]})
    return _report("lemma1", bad, {"C_family": C_family, "c0_achieved": c0, "bound_factor": bound,
                                   "worst_factor": worst}, {"pieces": len(trace.pieces)})


def verify_trace(trace, T):
    _check_ids(trace, T)
    return [verify_separation(trace, T), verify_decay(trace), verify_lemma1(trace, T)]


# ---------------------------------------------------------------------------
# regular extension


def smallball_ratios(Gt, E, samples):
    """Per sample ``max_y dist(y, E minus (G~ & B(x,R))) / R`` over ``y`` in ``G~ & B(x,R)``."""
    out = []
    for c, R in samples:
        x = Gt.points[c]
        S = Gt.points[ball_indices(Gt, x, R)]
        inside = np.zeros(len(E), dtype=bool)
        if len(S):
            d, j = E.tree.query(S, k=1)
            inside[j[d <= E.epsilon * 1e-6]] = True
        rest = E.subset(~inside)
        if len(rest) == 0:
            out.append(math.inf)
            continue
        out.append(float(distances_to_set(S, rest).max()) / R)
    return np.asarray(out)


def largest_nonvacuous_c(ratios, radii, epsilon, iters=60):
    """Largest ``c`` such that every sample with ``c R >= epsilon`` has ``c < ratio``.

    Returns ``None`` when no ``c`` makes any sample non-vacuous and passes.
    """
    radii = np.asarray(radii, dtype=float)

    def ok(c):
        live = c * radii >= epsilon
        return live.any() and bool(np.all(c < ratios[live]))

    lo = epsilon / radii.max()
    while lo * radii.max() < epsilon:
        lo = np.nextafter(lo, np.inf)
    if not ok(lo):
        return None
    hi = 1.0
    if ok(hi):
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def verify_extension(G, E, A, Gt, trace=None, sample_count=64, rng_seed=0, adr_cap=None,
                     bp_theta=None, L=1.0):
    """Regular-extension checks: containment, small balls, and optionally ADR and BP of ``G~``."""
    cfg = {"G": _cloud_cfg(G), "E": _cloud_cfg(E), "Gt": _cloud_cfg(Gt), "A": A,
           "sample_count": sample_count, "rng_seed": rng_seed}
    reports = []
    D = diameter(G)
    bad = []
    dG = distances_to_set(Gt.points, G) if len(G) else np.zeros(0)
    sup = float(dG.max()) if dG.size else 0.0
    missing = np.flatnonzero(distances_to_set(G.points, Gt) > 0)
    for i in missing[:20]:
        bad.append({"x": G.points[i], "kind": "G not inside extension"})
    notE = np.flatnonzero(distances_to_set(Gt.points, E) > 0)
    for i in notE[:20]:
        bad.append({"x": Gt.points[i], "kind": "extension leaves E"})
    if D > 0 and not sup < 3 * D / A:
        j = int(np.argmax(dG))
        bad.append({"x": Gt.points[j], "distance": sup, "bound": 3 * D / A})
    reports.append(_report("lemma2_containment", bad,
                           {"D": D, "sup_distance": sup, "bound": 3 * D / A if D else 0.0,
                            "series_bound": 8 * D / (3 * A) if D else 0.0}, cfg))

    notes = []
    diam_t = diameter(Gt)
    lo = 10 * E.epsilon
    if len(Gt) < 2 or diam_t <= lo:
        notes.append("no admissible radii at this resolution")
        reports.append(_report("lemma2_smallball", [], {"c_found": None}, cfg, notes))
    else:
        rng = np.random.default_rng(rng_seed)
        radii = np.exp(rng.uniform(math.log(lo), math.log(diam_t), size=sample_count))
        radii = np.minimum(radii, np.nextafter(diam_t, 0))
        centers = rng.integers(0, len(Gt), size=sample_count)
        samples = list(zip(centers.tolist(), radii.tolist()))
        ratios = smallball_ratios(Gt, E, samples)
        c_theory = 1.0 / (20 * 4 ** 4 * A)
        live = c_theory * radii >= E.epsilon
        bad = []
        if live.any():
            for (c, R), q, lv in zip(samples, ratios, live):
                if lv and not c_theory < q:
                    bad.append({"x": Gt.points[c], "R": R, "c_star": q, "c": c_theory})
        else:
            notes.append(f"vacuous at this resolution for c = {c_theory:.3g}")
        c_found = largest_nonvacuous_c(ratios, radii, E.epsilon)
        if c_found is None:
            j = int(np.argmax(radii))
            bad.append({"x": Gt.points[centers[j]], "R": float(radii[j]), "c_star": float(ratios[j]),
                        "kind": "no non-vacuous c passes"})
        reports.append(_report("lemma2_smallball", bad,
                               {"c_theory": c_theory, "c_found": c_found, "min_c_star": float(ratios.min()),
                                "theory_vacuous": not bool(live.any())}, cfg, notes))
    if adr_cap is not None:
        reports.append(verify_adr(Gt, adr_cap, rng_seed=rng_seed))
    if bp_theta is not None:
        reports.append(verify_bp(Gt, bp_theta, L, sample_count, rng_seed))
    return reports


# ---------------------------------------------------------------------------
# gluing and collapse


def verify_gluing(records, x0, A, sample_count=64, rng_seed=0):
    """``F~_n`` avoids ``B_{n-1}/4``; balls of radius ``<= A^{n-2}`` meet only neighbouring ``F~_j``."""
    x0 = np.asarray(x0, dtype=float)
    bad, mins = [], {}
    for r in records[1:]:
        S = r.F_tilde
        if len(S) == 0:
            continue
        d = S.space.to_point(S.points, x0)
        mins[r.n] = float(d.min())
        limit = 0.25 * A ** (r.n - 1)
        for i in np.flatnonzero(d <= limit)[:10]:
            bad.append({"n": r.n, "x": S.points[i], "distance": float(d[i]), "limit": limit})
    rng = np.random.default_rng(rng_seed)
    meets_max = 0
    for r in records:
        S = r.F_tilde
        if len(S) == 0 or r.n < 1:
            continue
        Rmax = A ** (r.n - 2)
        for _ in range(sample_count):
            x = S.points[rng.integers(len(S))]
            R = float(rng.uniform(0, Rmax))
            R = R if R > 0 else Rmax
            hit = [q.n for q in records if len(q.F_tilde) and len(ball_indices(q.F_tilde, x, R))]
            meets_max = max(meets_max, len(hit))
            far = [j for j in hit if abs(j - r.n) >= 2]
            if far:
                bad.append({"n": r.n, "x": x, "R": R, "meets": hit})
    return _report("gluing_disjoint", bad, {"min_distance_to_x0": mins, "max_pieces_met": meets_max},
                   {"A": A, "x0": x0, "annuli": len(records), "sample_count": sample_count,
                    "rng_seed": rng_seed})


def check_two_level_oracle(oracle, E, theta1, sample_count=16, inner_samples=8, rng_seed=0,
                           floor=10.0):
    """Validity of a two-level oracle: witnesses sit in their balls and meet ``theta1``;
    the inner oracles' worst overlap is recorded as ``theta2_prime`` (must be positive)."""
    rng = np.random.default_rng(rng_seed)
    bad, worst1, worst2 = [], 1.0, 1.0
    for c, R in sample_balls(E, sample_count, rng_seed, floor):
        x = E.points[c]
        try:
            w = oracle.query(x, R)
        except (OracleError, GeometryError) as exc:
            bad.append({"x": x, "R": R, "error": str(exc)})
            worst1 = 0.0
            continue
        P = w.piece
        inside = np.all(P.space.to_point(P.points, x) <= R * (1 + 1e-12))
        ov = overlap_fraction(E.subset(ball_indices(E, x, R)), P, E.epsilon / 2)
        worst1 = min(worst1, ov)
        if ov < theta1 or not inside or abs(ov - w.overlap) > 1e-12:
            bad.append({"x": x, "R": R, "overlap": ov, "reported": w.overlap, "contained": bool(inside)})
        dP = diameter(P)
        for _ in range(inner_samples):
            y = P.points[rng.integers(len(P))]
            r = float(np.exp(rng.uniform(math.log(E.epsilon), math.log(max(dP, 2 * E.epsilon)))))
            try:
                g = w.oracle.query(y, r)
            except (OracleError, GeometryError) as exc:
                bad.append({"x": y, "R": r, "error": str(exc), "level": 2})
                worst2 = 0.0
                continue
            ov2 = overlap_fraction(P.subset(ball_indices(P, y, r)), g.member, E.epsilon / 2)
            worst2 = min(worst2, ov2)
    if worst2 <= 0 and not bad:
        bad.append({"kind": "inner oracle overlap not positive", "theta2_prime": worst2})
    return _report("collapse", bad, {"theta1_prime": worst1, "theta2_prime": worst2},
                   {"E": _cloud_cfg(E), "theta1": theta1, "sample_count": sample_count,
                    "inner_samples": inner_samples, "rng_seed": rng_seed})


# ---------------------------------------------------------------------------
# report v1


def reports_to_dict(reports):
    return {"format": "report v1", "reports": [r.to_dict() for r in reports],
            "status": "pass" if all(r.passed for r in reports) else "fail"}


def write_reports(reports, path=None, fmt="json"):
    text = format_reports(reports, fmt)
    if path:
        Path(path).write_text(text, encoding="utf-8")
    return text


def format_reports(reports, fmt="json"):
    d = reports_to_dict(reports)
    if fmt == "json":
        return json.dumps(d, sort_keys=True, indent=1) + "\n"
    lines = [f"report v1  overall: {d['status']}"]
    for r in d["reports"]:
        meas = ", ".join(f"{k}={_short(v)}" for k, v in sorted(r["measured"].items()))
        lines.append(f"{r['claim']:<20} {r['status']:<5} {meas}")
        for n in r["notes"]:
            lines.append(f"  note: {n}")
        for c in r["counterexamples"][:5]:
            lines.append(f"  counterexample: {json.dumps(c, sort_keys=True)}")
    return "\n".join(lines) + "\n"


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list) and len(v) > 6:
        return f"[{len(v)} values]"
    return json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else str(v)


def read_reports(path):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if d.get("format") != "report v1":
        raise ValueError("not a 'report v1' document")
    return d
