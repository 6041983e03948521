import math

import numpy as np
import pytest

from bigpieces.families import (LipschitzGraphSpec, OracleError, certify_bp, fit_big_piece,
                                overlap_fraction, sample_graph)
from bigpieces.geometry import GeometryError, PointCloudSet, ball_points, estimate_adr, merge
from bigpieces.scenario import ScenarioError, load_scenario, parse_scenario, shipped_scenarios

from conftest import cantor, oracle, scenario, segment


def flat(L=0.0, lo=0.0, hi=1.0):
    return LipschitzGraphSpec.from_dict({"frame": [[1, 0]], "offset": [0, 0], "L": L,
                                         "window": [[lo], [hi]], "profile": {"kind": "flat"}})


def cross(eps=0.02):
    a = segment(eps)
    h = PointCloudSet(a.points - [0.5, 0.0], eps, 1)
    v = PointCloudSet(h.points[:, ::-1].copy(), eps, 1)
    return merge([h, v])[0]


def exact_chain(t, h, L):
    """Largest L-Lipschitz subset over the line, by longest-chain dynamic programming."""
    order = np.argsort(t, kind="stable")
    t, h = t[order], h[order]
    best = np.ones(len(t), dtype=int)
    for i in range(1, len(t)):
        ok = (h[i] - h[:i]) ** 2 <= L * L * (t[i] - t[:i]) ** 2 * (1 + 1e-9)
        if ok.any():
            best[i] = best[:i][ok].max() + 1
    return int(best.max())


def test_flat_graph_sample():
    S = sample_graph(flat(), 0.1)
    assert len(S) == 11
    assert np.allclose(S.points[:, 1], 0) and np.allclose(np.diff(S.points[:, 0]), 0.1)


def test_window_below_resolution_gives_singleton():
    S = sample_graph(flat(0.0, 0.31, 0.33), 0.1)
    assert len(S) == 1 and abs(S.points[0, 0] - 0.32) < 1e-12


def test_cone_profile_lipschitz_all_pairs():
    spec = LipschitzGraphSpec.from_dict({"frame": [[1, 0]], "offset": [0, 0], "L": 1.0,
                                         "window": [[0], [1]],
                                         "profile": {"kind": "abs", "center": [0.5], "slope": 1.0}})
    S = sample_graph(spec, 0.01)
    t, h = spec.to_local(S.points)
    n = len(t)
    for i in range(n):
        assert (np.abs(h[i] - h) <= np.abs(t[i] - t) * (1 + 1e-9) + 1e-12).all()
    assert abs(h[np.argmin(np.abs(t[:, 0] - 0.5))][0]) < 1e-12


def test_steep_profile_rejected():
    with pytest.raises(GeometryError):
        LipschitzGraphSpec.from_dict({"frame": [[1, 0]], "offset": [0, 0], "L": 0.5,
                                      "window": [[0], [1]],
                                      "profile": {"kind": "abs", "center": [0.5], "slope": 1.0}})


@pytest.mark.parametrize("name", ["one_graph", "four_graphs", "sector_graph"])
def test_member_samples_regular(name):
    s = scenario(name)
    for m in s.members.values():
        cap = 4 * (1 + s.L ** 2) ** (s.k / 2)
        assert estimate_adr(m.sample, 6, 32, 0).C_best <= cap


def test_spec_round_trip():
    spec = scenario("four_graphs").members["bottom"].spec
    back = LipschitzGraphSpec.from_dict(spec.to_dict())
    t = np.linspace(spec.window[0][0], spec.window[1][0], 37).reshape(-1, 1)
    assert np.allclose(back.to_ambient(t), spec.to_ambient(t))


def test_fit_segment_middle():
    w = fit_big_piece(segment(), [0.5, 0.0], 0.2)
    assert w.overlap == 1.0


def test_fit_empty_ball():
    with pytest.raises(GeometryError, match="empty ball query"):
        fit_big_piece(segment(), [5.0, 5.0], 0.1)


def test_fit_cross_against_orientation_brute_force():
    E = cross()
    R = 0.5
    ball = ball_points(E, [0.0, 0.0], R)
    best = 0
    for deg in range(360):
        a = math.radians(deg / 2)            # frames over a half turn, 0.5 degree steps
        u = np.array([math.cos(a), math.sin(a)])
        v = np.array([-math.sin(a), math.cos(a)])
        best = max(best, exact_chain(ball.points @ u, ball.points @ v, 1.0))
    exact = best / len(ball)
    w = fit_big_piece(E, [0.0, 0.0], R, 1.0, 16)
    assert 0.45 <= exact <= 0.75
    assert 0.45 <= w.overlap <= 0.75
    assert w.overlap <= exact + 1e-12


def test_fit_witness_is_honest():
    E = cross()
    w = fit_big_piece(E, [0.1, 0.0], 0.3)
    assert w.remeasure(E, 0.0) == pytest.approx(w.overlap)
    t, h = w.spec.to_local(w.member.points)
    for i in range(len(t)):
        assert (((h[i] - h) ** 2).sum(1) <= ((t[i] - t) ** 2).sum(1) * (1 + 1e-9) + 1e-15).all()


def test_fit_cantor_below_one():
    C = cantor(4)
    w = fit_big_piece(C, C.points[0], 1.5)
    assert w.overlap < 1.0


def test_certify_one_graph():
    s = scenario("one_graph")
    assert certify_bp(s.E, s.L, 0.9, 64, 0).pass_fraction == 1.0


def test_certify_parallel_segments():
    s = scenario("parallel_segments")
    assert certify_bp(s.E, 1.0, 0.45, 64, 0).pass_fraction == 1.0


def test_certify_cantor_tight_theta():
    assert certify_bp(cantor(5), 1.0, 0.99, 64, 0).pass_fraction < 1.0


def test_certify_deterministic():
    s = scenario("four_graphs")
    a, b = certify_bp(s.E, 1.0, 0.5, 24, 3), certify_bp(s.E, 1.0, 0.5, 24, 3)
    assert a.to_dict() == b.to_dict()


def test_identity_scenario_oracle():
    s = scenario("one_graph")
    o = oracle("one_graph")
    x = s.E.points[40]
    w = o.query(x, 0.3)
    assert w.overlap == 1.0
    assert np.array_equal(w.piece.points, ball_points(s.E, x, 0.3).points)


def test_four_graph_oracle_overlaps():
    s = scenario("four_graphs")
    o = oracle("four_graphs")
    rng = np.random.default_rng(0)
    for c in rng.choice(len(s.E), 40, replace=False):
        for r in (0.05, 0.3, 1.0, 3.0):
            w = o.query(s.E.points[c], r)
            # recomputed independently of the oracle's own bookkeeping
            ball = ball_points(s.E, s.E.points[c], r)
            assert overlap_fraction(ball, w.piece, s.delta) == w.overlap >= 0.25
            assert (np.linalg.norm(w.piece.points - s.E.points[c], axis=1) <= r).all()


def test_degenerate_ball_returns_nearest_point():
    s = scenario("four_graphs")
    o = oracle("four_graphs")
    w = o.query(s.E.points[7], s.epsilon / 10)
    assert len(w.piece) == 1
    assert np.linalg.norm(w.piece.points[0] - s.E.points[7]) <= s.delta


def test_piece_oracle_answers_members():
    s = scenario("four_graphs")
    p = s.pieces[0]
    po = p.oracle(s.delta)
    x = p.points.points[10]
    w = po.query(x, 0.4)
    assert w.name in [m.name for m in p.members]
    assert w.overlap >= p.theta2


def test_overclaimed_theta1_rejected():
    s = load_scenario("parallel_segments")
    s.theta1 = 0.9
    with pytest.raises(OracleError, match="violates its declared theta1"):
        s.oracle(validate=True)


def test_shipped_scenarios():
    names = shipped_scenarios()
    for n in ["one_graph", "parallel_segments", "four_graphs", "nested_zigzag",
              "perpendicular_cross", "three_level", "glue_ray", "sector_graph"]:
        assert n in names


def test_scenario_errors(tmp_path):
    with pytest.raises(ScenarioError, match="scenario not found"):
        load_scenario(tmp_path / "nope.scn")
    with pytest.raises(ScenarioError):
        parse_scenario({"format": "other"})
    with pytest.raises(ScenarioError, match="unknown member"):
        parse_scenario({"format": "scenario v1", "ambient_dim": 2, "k": 1, "epsilon": 0.1,
                        "members": {}, "E": ["a"], "pieces": []})
