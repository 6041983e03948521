"""``scenario v1`` files: JSON declarations of scripted big-pieces structure.

A scenario names family members (Lipschitz graph specs), declares ``E`` as
the union of some of them, groups members into pieces (two-level oracle),
and optionally groups pieces into super-pieces (three-level oracle)::

    {"format": "scenario v1", "name": ..., "ambient_dim": 2, "k": 1,
     "epsilon": 0.01, "L": 1.0, "theta1": 0.3,
     "members": {"a": {spec}, ...},
     "E": ["a", ...],
     "pieces": [{"name": "p", "members": ["a", ...], "theta2": 0.5}, ...],
     "superpieces": [{"name": "s", "pieces": ["p", ...], "theta": 0.5}],
     "theta3": 0.5}
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .families import (LipschitzGraphSpec, Member, ScriptedBP3Oracle, ScriptedBPBPOracle,
                       ScriptedPiece, ScriptedSuperPiece, captured_mask, sample_graph)
from .geometry import GeometryError, merge

FORMAT = "scenario v1"


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    ambient_dim: int
    k: int
    epsilon: float
    L: float
    theta1: float
    members: dict
    E_members: list
    piece_decls: list
    superpiece_decls: list = field(default_factory=list)
    theta3: float | None = None
    extra: dict = field(default_factory=dict)
    _E: object = field(default=None, repr=False)
    _pieces: list = field(default=None, repr=False)

    @property
    def delta(self):
        return self.epsilon / 2

    @property
    def E(self):
        if self._E is None:
            self._E = merge([self.members[m].sample for m in self.E_members])[0]
        return self._E

    def _piece(self, decl):
        mems = [self.members[m] for m in decl["members"]]
        pts = merge([m.sample for m in mems])[0]
        return ScriptedPiece(decl["name"], mems, pts, float(decl.get("theta2", 0.0)))

    @property
    def pieces(self):
        if self._pieces is None:
            self._pieces = [self._piece(d) for d in self.piece_decls]
        return self._pieces

    def piece(self, name):
        for p in self.pieces:
            if p.name == name:
                return p
        raise ScenarioError(f"unknown piece {name!r}")

    def declared_subset(self):
        """The ``subset`` declaration carved out of ``E`` (used by extension runs).

        ``sector``: points whose base coordinates over the first member lie
        within ``radius`` of the origin at polar angles inside ``angles``.
        """
        decl = self.extra.get("subset")
        if not decl:
            raise ScenarioError("scenario declares no subset")
        if decl.get("kind") != "sector":
            raise ScenarioError(f"unknown subset kind {decl.get('kind')!r}")
        spec = self.members[self.E_members[0]].spec
        if spec.k != 2:
            raise ScenarioError("sector subsets need a 2-dimensional base")
        base, _ = spec.to_local(self.E.points)
        r = np.linalg.norm(base, axis=1)
        ang = np.mod(np.arctan2(base[:, 1], base[:, 0]), 2 * np.pi)
        a0, a1 = (float(a) for a in decl["angles"])
        keep = (r <= float(decl["radius"]) + 1e-12) & (ang >= a0 - 1e-12) & (ang <= a1 + 1e-12)
        return self.E.subset(keep)

    def _check_cover(self, E, point_sets, what):
        covered = np.zeros(len(E), dtype=bool)
        for S in point_sets:
            covered |= captured_mask(E, S, self.delta)
        if not covered.all():
            i = int(np.flatnonzero(~covered)[0])
            raise ScenarioError(f"scenario {what} do not cover E (point {E.points[i].tolist()})")

    def oracle(self, validate=True):
        """Scripted two-level oracle; ``validate`` samples the declared thetas."""
        self._check_cover(self.E, [p.points for p in self.pieces], "pieces")
        o = ScriptedBPBPOracle(self.E, self.pieces, self.theta1, self.delta)
        if validate:
            o.validate()
        return o

    def oracle3(self):
        if not self.superpiece_decls:
            raise ScenarioError("scenario declares no super-pieces")
        sps = []
        for d in self.superpiece_decls:
            pcs = [self.piece(n) for n in d["pieces"]]
            pts = merge([p.points for p in pcs])[0]
            sps.append(ScriptedSuperPiece(d["name"], pcs, pts, float(d.get("theta", self.theta1))))
        self._check_cover(self.E, [s.points for s in sps], "super-pieces")
        return ScriptedBP3Oracle(self.E, sps, self.theta3 if self.theta3 is not None else self.theta1,
                                 self.delta)


def parse_scenario(data):
    if not isinstance(data, dict) or data.get("format") != FORMAT:
        raise ScenarioError(f"not a '{FORMAT}' document")
    try:
        n, k, eps = int(data["ambient_dim"]), int(data["k"]), float(data["epsilon"])
        L = float(data.get("L", 1.0))
        members = {}
        for name, spec in data["members"].items():
            s = LipschitzGraphSpec.from_dict(spec, L=L)
            if s.n != n or s.k != k:
                raise ScenarioError(f"member {name!r} has the wrong dimensions")
            members[name] = Member(name, s, sample_graph(s, eps))
        E_members = list(data["E"])
        pieces = list(data["pieces"])
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario: missing or bad field {exc}") from exc
    except GeometryError as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc
    for m in E_members + [m for p in pieces for m in p["members"]]:
        if m not in members:
            raise ScenarioError(f"unknown member {m!r}")
    known = {"format", "name", "ambient_dim", "k", "epsilon", "L", "theta1", "members", "E",
             "pieces", "superpieces", "theta3"}
    return Scenario(str(data.get("name", "scenario")), n, k, eps, L, float(data.get("theta1", 0.0)),
                    members, E_members, pieces, list(data.get("superpieces", [])),
                    data.get("theta3"), {k_: v for k_, v in data.items() if k_ not in known})


def load_scenario(path):
    """Load a scenario from a path, or by bare name from the shipped set."""
    p = Path(path)
    if not p.exists():
        shipped = resources.files("bigpieces") / "scenarios" / (p.name if p.suffix else p.name + ".scn")
        if shipped.is_file():
            return parse_scenario(json.loads(shipped.read_text(encoding="utf-8")))
        raise ScenarioError(f"scenario not found: {path}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc
    return parse_scenario(data)


def shipped_scenarios():
    root = resources.files("bigpieces") / "scenarios"
    return sorted(f.name[:-4] for f in root.iterdir() if f.name.endswith(".scn"))
