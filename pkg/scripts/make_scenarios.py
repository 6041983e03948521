"""Regenerate the shipped ``scenario v1`` files."""
import json
import math
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "bigpieces" / "scenarios"


def seg(offset, direction, length, lo=0.0, profile=None):
    return {"frame": [list(direction)], "offset": list(offset),
            "window": [[lo], [length]], "profile": profile or {"kind": "flat"}}


def base(name, eps, theta1, **kw):
    d = {"format": "scenario v1", "name": name, "ambient_dim": 2, "k": 1,
         "epsilon": eps, "L": 1.0, "theta1": theta1}
    d.update(kw)
    return d


def one_graph():
    g = seg([0.0, 0.0], [1.0, 0.0], 1.0, profile={"kind": "sine", "amplitude": 0.05, "frequency": 1.0})
    return base("one_graph", 0.01, 1.0, members={"g": g}, E=["g"],
                pieces=[{"name": "g", "members": ["g"], "theta2": 1.0}])


def parallel_segments():
    return base("parallel_segments", 0.01, 0.45,
                members={"low": seg([0.0, 0.0], [1.0, 0.0], 1.0),
                         "high": seg([0.0, 0.3], [1.0, 0.0], 1.0)},
                E=["low", "high"],
                pieces=[{"name": "low", "members": ["low"], "theta2": 1.0},
                        {"name": "high", "members": ["high"], "theta2": 1.0}])


def four_graphs():
    sine = {"kind": "sine", "amplitude": 0.06, "frequency": 1.0}
    sides = {"bottom": ([0.0, 0.0], [1.0, 0.0]), "right": ([1.0, 0.0], [0.0, 1.0]),
             "top": ([1.0, 1.0], [-1.0, 0.0]), "left": ([0.0, 1.0], [0.0, -1.0])}
    members = {n: seg(o, d, 1.0, profile=sine) for n, (o, d) in sides.items()}
    names = list(sides)
    pieces = [{"name": f"{names[i]}+{names[(i + 1) % 4]}", "members": [names[i], names[(i + 1) % 4]],
               "theta2": 0.5} for i in range(4)]
    return base("four_graphs", 0.01, 0.3, members=members, E=names, pieces=pieces)


def _zigzag(angle_deg, count, length):
    a = math.radians(angle_deg)
    out, p = [], [0.0, 0.0]
    for i in range(count):
        d = [math.cos(a), math.sin(a) if i % 2 == 0 else -math.sin(a)]
        out.append((list(p), d))
        p = [p[0] + length * d[0], p[1] + length * d[1]]
    return out


def nested_zigzag():
    legs = _zigzag(38.66, 4, 1.2806)
    members = {}
    for i, (o, d) in enumerate(legs):
        members[f"s{i}"] = seg(o, d, 1.2806)
        members[f"s{i}x"] = seg(o, d, 1.2806 + 0.15, lo=-0.15)
    pieces = [{"name": f"p{i}{i + 1}", "members": [f"s{i}x", f"s{i + 1}x"], "theta2": 0.4}
              for i in range(3)]
    return base("nested_zigzag", 0.01, 0.45, members=members, E=[f"s{i}" for i in range(4)],
                pieces=pieces)


def perpendicular_cross():
    return base("perpendicular_cross", 0.01, 0.45,
                members={"h": seg([-0.5, 0.0], [1.0, 0.0], 1.0), "v": seg([0.0, -0.5], [0.0, 1.0], 1.0)},
                E=["h", "v"],
                pieces=[{"name": "h", "members": ["h"], "theta2": 1.0},
                        {"name": "v", "members": ["v"], "theta2": 1.0}])


def three_level():
    legs = _zigzag(50.0, 4, 1.0)
    members = {f"s{i}": seg(o, d, 1.0) for i, (o, d) in enumerate(legs)}
    pieces = [{"name": f"p{i}{i + 1}", "members": [f"s{i}", f"s{i + 1}"], "theta2": 0.5} for i in range(3)]
    sps = [{"name": "A", "pieces": ["p01", "p12"], "theta": 0.5},
           {"name": "B", "pieces": ["p12", "p23"], "theta": 0.5}]
    return base("three_level", 0.02, 0.5, members=members, E=list(members), pieces=pieces,
                superpieces=sps, theta3=0.5)


def glue_ray():
    ray = seg([0.0, 0.0], [1.0, 0.0], 300.0, profile={"kind": "sine", "amplitude": 0.5, "frequency": 0.1})
    d = base("glue_ray", 0.05, 1.0, members={"ray": ray}, E=["ray"],
             pieces=[{"name": "ray", "members": ["ray"], "theta2": 1.0}])
    d["glue"] = {"x0": [0.0, 0.0], "A": 16.0, "N": 3}
    return d


def sector_graph():
    g = {"frame": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], "offset": [0.0, 0.0, 0.0],
         "window": [[-1.0, -1.0], [1.0, 1.0]],
         "profile": {"kind": "sine", "amplitude": 0.1, "frequency": 0.5}}
    return {"format": "scenario v1", "name": "sector_graph", "ambient_dim": 3, "k": 2,
            "epsilon": 0.05, "L": 1.0, "theta1": 1.0, "members": {"g": g}, "E": ["g"],
            "pieces": [{"name": "g", "members": ["g"], "theta2": 1.0}],
            "subset": {"kind": "sector", "radius": 0.6, "angles": [0.0, 3 * math.pi / 4]}}


ALL = [one_graph, parallel_segments, four_graphs, nested_zigzag, perpendicular_cross,
       three_level, glue_ray, sector_graph]

if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for make in ALL:
        d = make()
        (OUT / f"{d['name']}.scn").write_text(json.dumps(d, indent=1, sort_keys=True) + "\n")
        print("wrote", d["name"])
