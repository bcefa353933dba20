#!/usr/bin/env python3
"""Generate the four benchmark graph fixtures.

Each part gets a world pose. Every connection is written once in world
coordinates (position X and the outward normal N of its first end); the two
attachment features are then expressed in the owning parts' local frames, so
the connected features coincide with opposite normals in the assembled state.
Parts marked equivalent are placed so their local layouts are identical.

Outputs data/graphs/<name>.json and data/graphs/<name>.truth.json (part poses
relative to the assembly frame: the first part of the root, depth first).
"""

import json
import math
import pathlib

import numpy as np

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "data" / "graphs"


def rot(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    r = np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * k @ k
    # Snap exact zeros/ones so axis-aligned turns stay exact.
    r[np.abs(r) < 1e-15] = 0.0
    return r


def clean(v):
    return [0.0 if abs(x) < 1e-15 else float(x) for x in v]


class Builder:
    def __init__(self, name):
        self.name = name
        self.parts = {}  # id -> (display name, R, t)
        self.points = {}  # part -> {label: (pos, normal)}
        self.nodes = []
        self.edges = []
        self.eqv = []
        self.connectors = {}
        self.counters = {"dowel": 0, "screw": 0}

    def part(self, pid, name, t, r=None):
        self.parts[pid] = (name, np.eye(3) if r is None else r, np.asarray(t, dtype=float))
        self.points[pid] = {}

    def point_world(self, pid, label, x, n):
        """Attachment point given in world coordinates."""
        _, r, t = self.parts[pid]
        x = np.asarray(x, dtype=float)
        n = np.asarray(n, dtype=float)
        n = n / np.linalg.norm(n)
        assert label not in self.points[pid], (pid, label)
        self.points[pid][label] = (clean(r.T @ (x - t)), clean(r.T @ n))

    def point_local(self, pid, label, x, n):
        assert label not in self.points[pid], (pid, label)
        n = np.asarray(n, dtype=float)
        self.points[pid][label] = (clean(x), clean(n / np.linalg.norm(n)))

    def world_of(self, pid, label):
        _, r, t = self.parts[pid]
        x, n = self.points[pid][label]
        return r @ np.asarray(x) + t, r @ np.asarray(n)

    def node(self, nid, kind, children=(), part=None):
        n = {"id": nid, "kind": kind}
        if part:
            n["part"] = part
        if children:
            n["children"] = list(children)
        self.nodes.append(n)

    def part_nodes(self, *pids):
        for p in pids:
            self.node(p, "part", part=p)

    def instance(self, kind, a, b):
        """a, b: (part, label). The world features must already coincide."""
        xa, na = self.world_of(*a)
        xb, nb = self.world_of(*b)
        assert np.allclose(xa, xb, atol=1e-12), (a, b, xa, xb)
        assert np.allclose(na, -nb, atol=1e-12), (a, b, na, nb)
        inst = {"type": kind, "end_a": {"part": a[0], "point": a[1]}, "end_b": {"part": b[0], "point": b[1]}}
        if kind != "mortise_tenon":
            self.counters[kind] += 1
            cid = ("D" if kind == "dowel" else "S") + str(self.counters[kind])
            self.connectors[cid] = kind
            inst["connector"] = cid
        return inst

    def joint(self, pa, la, pb, lb, x, n):
        """Create both features of one connection from its world location."""
        self.point_world(pa, la, x, n)
        self.point_world(pb, lb, x, -np.asarray(n, dtype=float))

    def edge(self, eid, a, b, instances):
        self.edges.append({"id": eid, "nodes": [a, b], "instances": instances})

    def first_part(self):
        by_id = {n["id"]: n for n in self.nodes}
        node = next(n for n in self.nodes if n["kind"] == "root")
        while node["kind"] != "part":
            node = by_id[node["children"][0]]
        return node["part"]

    def write(self, stem):
        graph = {
            "format_version": 1,
            "name": self.name,
            "parts": {
                pid: {
                    "name": self.parts[pid][0],
                    "points": {lab: {"position": x, "normal": n} for lab, (x, n) in sorted(self.points[pid].items())},
                }
                for pid in sorted(self.parts)
            },
            "connectors": dict(sorted(self.connectors.items())),
            "nodes": self.nodes,
            "equivalence_edges": self.eqv,
            "connection_edges": self.edges,
            "step_order": [e["id"] for e in self.edges],
        }
        OUT.mkdir(parents=True, exist_ok=True)
        (OUT / f"{stem}.json").write_text(json.dumps(graph, indent=2) + "\n")

        _, r0, t0 = self.parts[self.first_part()]
        poses = {}
        for pid, (_, r, t) in sorted(self.parts.items()):
            rr = r0.T @ r
            tt = r0.T @ (t - t0)
            poses[pid] = {"rotation": [clean(row) for row in rr], "translation": clean(tt)}
        truth = {"format_version": 1, "graph": self.name, "alpha": 1.0, "parts": poses, "edges": []}
        (OUT / f"{stem}.truth.json").write_text(json.dumps(truth, indent=2) + "\n")


def chair():
    b = Builder("Chair")
    pi = math.pi
    b.part("P1", "h-shaped side frame", [-0.2, 0.0, 0.0])
    b.part("P2", "h-shaped side frame", [0.2, 0.0, 0.0], rot([0, 0, 1], pi))
    b.part("P3", "seat panel", [0.0, 0.0, 0.31], rot([0, 0, 1], pi / 2))
    b.part("P4", "front rail", [0.0, 0.2, 0.25])
    b.part("P5", "curved backrest panel", [0.0, 0.0, 0.65], rot([1, 0.2, 0], 0.3))
    b.part("P6", "back rail", [0.0, -0.2, 0.25], rot([0, 0, 1], pi))

    # Side frames share one layout; P2 is P1 turned half a turn about z.
    frame = {
        "A": (0, 0, 0.1), "B": (0, 0, 0.6), "C": (0, 0, 0.7),
        "D": (0, 0.2, 0.25), "E": (0, -0.2, 0.25), "F": (0, 0.2, 0.27), "G": (0, -0.2, 0.27),
        "H": (0, 0.1, 0.31), "I": (0, -0.1, 0.31), "J": (0, 0, 0.31),
    }
    for pid, digit in (("P1", "1"), ("P2", "2")):
        for letter, x in frame.items():
            b.point_local(pid, digit + letter, x, (1, 0, 0))
    # Rails share one layout as well.
    rail = {
        "A": ((-0.2, 0, 0), (-1, 0, 0)), "B": ((0.2, 0, 0), (1, 0, 0)),
        "C": ((-0.2, 0, 0.02), (-1, 0, 0)), "D": ((0.2, 0, 0.02), (1, 0, 0)),
        "E": ((-0.1, 0, 0.06), (0, 0, 1)), "F": ((0.1, 0, 0.06), (0, 0, 1)),
    }
    for pid, digit in (("P4", "4"), ("P6", "6")):
        for letter, (x, n) in rail.items():
            b.point_local(pid, digit + letter, x, n)

    # Backrest: dowel holes on both ends plus two spare points.
    for lab, src in (("5E", ("P1", "1B")), ("5F", ("P1", "1C")), ("5A", ("P2", "2B")), ("5B", ("P2", "2C"))):
        x, n = b.world_of(*src)
        b.point_world("P5", lab, x, -n)
    b.point_world("P5", "5C", [0, 0, 0.8], [0, 0, 1])
    b.point_world("P5", "5D", [0, 0.05, 0.65], [0, 1, 0])

    # Seat: dowels and screws into both frames, screws into both rails.
    seat_src = [
        ("3A", ("P1", "1H")), ("3B", ("P1", "1I")), ("3C", ("P2", "2H")), ("3D", ("P2", "2I")),
        ("3E", ("P1", "1J")), ("3F", ("P2", "2J")),
        ("3G", ("P4", "4E")), ("3H", ("P4", "4F")), ("3I", ("P6", "6E")), ("3J", ("P6", "6F")),
    ]
    for lab, src in seat_src:
        x, n = b.world_of(*src)
        b.point_world("P3", lab, x, -n)

    b.part_nodes("P1", "P2", "P3", "P4", "P5", "P6")
    b.node("C1", "subassembly", ["P1", "P5"])
    b.node("C2", "subassembly", ["C1", "P2"])
    b.node("C3", "subassembly", ["C2", "P6"])
    b.node("C4", "subassembly", ["C3", "P4"])
    b.node("R", "root", ["C4", "P3"])
    b.eqv = [["P1", "P2"], ["P4", "P6"]]

    b.edge("E1", "P1", "P5", [b.instance("dowel", ("P1", "1B"), ("P5", "5E")),
                              b.instance("dowel", ("P1", "1C"), ("P5", "5F"))])
    b.edge("E2", "C1", "P2", [b.instance("dowel", ("P5", "5A"), ("P2", "2B")),
                              b.instance("dowel", ("P5", "5B"), ("P2", "2C"))])
    # P6 is turned half a turn: its A end meets P2, its B end meets P1.
    b.edge("E3", "C2", "P6", [b.instance("mortise_tenon", ("P1", "1E"), ("P6", "6B")),
                              b.instance("mortise_tenon", ("P2", "2D"), ("P6", "6A")),
                              b.instance("screw", ("P1", "1G"), ("P6", "6D")),
                              b.instance("screw", ("P2", "2F"), ("P6", "6C"))])
    b.edge("E4", "C3", "P4", [b.instance("mortise_tenon", ("P1", "1D"), ("P4", "4A")),
                              b.instance("mortise_tenon", ("P2", "2E"), ("P4", "4B")),
                              b.instance("screw", ("P1", "1F"), ("P4", "4C")),
                              b.instance("screw", ("P2", "2G"), ("P4", "4D"))])
    seat = [b.instance("dowel", src, ("P3", lab)) for lab, src in seat_src[:4]]
    seat += [b.instance("screw", src, ("P3", lab)) for lab, src in seat_src[4:]]
    b.edge("E5", "C4", "P3", seat)
    b.write("chair")


def shoe_shelf():
    b = Builder("Shoe Shelf")
    pi = math.pi
    b.part("P1", "left side panel", [-0.3, 0.0, 0.0])
    b.part("P2", "right side panel", [0.3, 0.0, 0.0], rot([0, 0, 1], pi))
    b.part("P3", "lower shelf board", [0.0, 0.0, 0.1])
    b.part("P4", "upper shelf board", [0.0, 0.0, 0.5], rot([1, 0, 0], pi))
    side = {"A": (0, -0.1, 0.1), "B": (0, 0, 0.1), "C": (0, 0.1, 0.1),
            "D": (0, -0.1, 0.5), "E": (0, 0, 0.5), "F": (0, 0.1, 0.5)}
    for pid, digit in (("P1", "1"), ("P2", "2")):
        for letter, x in side.items():
            b.point_local(pid, digit + letter, x, (1, 0, 0))
    board = {"A": ((-0.3, -0.1, 0), (-1, 0, 0)), "B": ((-0.3, 0, 0), (-1, 0, 0)), "C": ((-0.3, 0.1, 0), (-1, 0, 0)),
             "D": ((0.3, -0.1, 0), (1, 0, 0)), "E": ((0.3, 0, 0), (1, 0, 0)), "F": ((0.3, 0.1, 0), (1, 0, 0))}
    for pid, digit in (("P3", "3"), ("P4", "4")):
        for letter, (x, n) in board.items():
            b.point_local(pid, digit + letter, x, n)

    def match(a, bpart):
        """Label on `bpart` whose world feature meets feature `a`."""
        xa, na = b.world_of(*a)
        for lab in b.points[bpart]:
            xb, nb = b.world_of(bpart, lab)
            if np.allclose(xa, xb, atol=1e-12) and np.allclose(na, -nb, atol=1e-12):
                return (bpart, lab)
        raise AssertionError(a)

    b.part_nodes("P1", "P2", "P3", "P4")
    b.node("C1", "subassembly", ["P1", "P3"])
    b.node("C2", "subassembly", ["C1", "P4"])
    b.node("R", "root", ["C2", "P2"])
    b.eqv = [["P1", "P2"], ["P3", "P4"]]

    b.edge("E1", "P1", "P3", [b.instance("mortise_tenon", ("P1", "1A"), match(("P1", "1A"), "P3")),
                              b.instance("mortise_tenon", ("P1", "1C"), match(("P1", "1C"), "P3")),
                              b.instance("screw", ("P1", "1B"), match(("P1", "1B"), "P3"))])
    b.edge("E2", "C1", "P4", [b.instance("mortise_tenon", ("P1", "1D"), match(("P1", "1D"), "P4")),
                              b.instance("mortise_tenon", ("P1", "1F"), match(("P1", "1F"), "P4")),
                              b.instance("screw", ("P1", "1E"), match(("P1", "1E"), "P4"))])
    b.edge("E3", "C2", "P2", [b.instance("mortise_tenon", match(("P2", "2A"), "P3"), ("P2", "2A")),
                              b.instance("mortise_tenon", match(("P2", "2D"), "P4"), ("P2", "2D")),
                              b.instance("screw", match(("P2", "2B"), "P3"), ("P2", "2B")),
                              b.instance("screw", match(("P2", "2E"), "P4"), ("P2", "2E")),
                              b.instance("screw", match(("P2", "2C"), "P3"), ("P2", "2C"))])
    b.write("shoe_shelf")


def lego_person():
    b = Builder("LEGO Person")
    b.part("P1", "torso", [0, 0, 0.055])
    b.part("P2", "hips", [0, 0, 0.035])
    b.part("P3", "left leg", [-0.01, 0, 0.015])
    b.part("P4", "right leg", [0.01, 0, 0.015])
    b.part("P5", "left arm", [-0.03, 0, 0.045])
    b.part("P6", "right arm", [0.03, 0, 0.045])
    b.part("P7", "left hand", [-0.03, 0, 0.02])
    b.part("P8", "right hand", [0.03, 0, 0.02])
    b.part("P9", "head", [0, 0, 0.08])
    up, down = (0, 0, 1), (0, 0, -1)
    b.joint("P2", "2A", "P3", "3A", (-0.01, 0, 0.03), down)
    b.joint("P2", "2B", "P4", "4A", (0.01, 0, 0.03), down)
    b.joint("P5", "5B", "P7", "7A", (-0.03, 0, 0.03), down)
    b.joint("P6", "6B", "P8", "8A", (0.03, 0, 0.03), down)
    b.joint("P1", "1A", "P5", "5A", (-0.03, 0, 0.06), up)
    b.joint("P1", "1B", "P6", "6A", (0.03, 0, 0.06), up)
    b.joint("P1", "1C", "P9", "9A", (0, 0, 0.07), up)
    b.joint("P2", "2C", "P1", "1D", (0, 0, 0.04), up)

    b.part_nodes(*[f"P{i}" for i in range(1, 10)])
    b.node("Lower", "subassembly", ["P2", "P3", "P4"])
    b.node("ArmL", "subassembly", ["P5", "P7"])
    b.node("ArmR", "subassembly", ["P6", "P8"])
    b.node("Upper", "subassembly", ["P1", "ArmL", "ArmR", "P9"])
    b.node("R", "root", ["Lower", "Upper"])
    b.eqv = [["P3", "P4"], ["P5", "P6"], ["P7", "P8"], ["ArmL", "ArmR"]]

    mt = "mortise_tenon"
    b.edge("E1", "P2", "P3", [b.instance(mt, ("P2", "2A"), ("P3", "3A"))])
    b.edge("E2", "P2", "P4", [b.instance(mt, ("P2", "2B"), ("P4", "4A"))])
    b.edge("E3", "P5", "P7", [b.instance(mt, ("P5", "5B"), ("P7", "7A"))])
    b.edge("E4", "P6", "P8", [b.instance(mt, ("P6", "6B"), ("P8", "8A"))])
    b.edge("E5", "P1", "ArmL", [b.instance(mt, ("P1", "1A"), ("P5", "5A"))])
    b.edge("E6", "P1", "ArmR", [b.instance(mt, ("P1", "1B"), ("P6", "6A"))])
    b.edge("E7", "P1", "P9", [b.instance(mt, ("P1", "1C"), ("P9", "9A"))])
    b.edge("E8", "Lower", "Upper", [b.instance(mt, ("P2", "2C"), ("P1", "1D"))])
    b.write("lego_person")


def plane_model():
    b = Builder("Plane Model")
    pi = math.pi
    b.part("P1", "fuselage", [0, 0, 0.05])
    b.part("P2", "left wing", [-0.15, 0, 0.08])
    b.part("P3", "right wing", [0.15, 0, 0.08], rot([0, 0, 1], pi))
    b.part("P4", "tail boom", [0, -0.2, 0.06])
    b.part("P5", "tail fin", [0, -0.28, 0.09])
    b.part("P6", "propeller hub", [0, 0.17, 0.05])
    b.part("P7", "propeller", [0, 0.19, 0.05])
    b.part("P8", "left wheel", [-0.05, 0.05, 0.0])
    b.part("P9", "right wheel", [0.05, 0.05, 0.0])
    b.part("P10", "landing gear strut", [0, 0.05, 0.0])
    b.part("P11", "cockpit canopy", [0, 0.05, 0.09])
    up, down = (0, 0, 1), (0, 0, -1)

    # Wings share one layout (P3 is P2 turned half a turn about z).
    for pid, digit in (("P2", "2"), ("P3", "3")):
        b.point_local(pid, digit + "A", (0.1, -0.02, -0.01), down)
        b.point_local(pid, digit + "B", (0.1, 0.02, -0.01), down)
        b.point_local(pid, digit + "C", (-0.1, 0.0, 0.0), (-1, 0, 0))
    for lab, src in (("1A", ("P2", "2A")), ("1B", ("P2", "2B")), ("1C", ("P3", "3A")), ("1D", ("P3", "3B"))):
        x, n = b.world_of(*src)
        b.point_world("P1", lab, x, -n)

    b.joint("P10", "10A", "P8", "8A", (-0.04, 0.05, 0.0), (-1, 0, 0))
    b.joint("P10", "10B", "P9", "9A", (0.04, 0.05, 0.0), (1, 0, 0))
    b.joint("P6", "6A", "P7", "7A", (0, 0.18, 0.05), (0, 1, 0))
    b.joint("P4", "4A", "P5", "5A", (0, -0.26, 0.07), up)
    b.joint("P1", "1E", "P4", "4B", (0, -0.1, 0.05), (0, -1, 0))
    b.joint("P1", "1F", "P6", "6B", (0, 0.15, 0.05), (0, 1, 0))
    b.joint("P1", "1G", "P10", "10C", (0, 0.05, 0.03), down)
    b.joint("P1", "1H", "P11", "11A", (0, 0.05, 0.07), up)

    b.part_nodes(*[f"P{i}" for i in range(1, 12)])
    b.node("Gear", "subassembly", ["P10", "P8", "P9"])
    b.node("Nose", "subassembly", ["P6", "P7"])
    b.node("Tail", "subassembly", ["P4", "P5"])
    b.node("R", "root", ["P1", "P2", "P3", "Tail", "Nose", "Gear", "P11"])
    b.eqv = [["P2", "P3"]]

    mt = "mortise_tenon"
    b.edge("E1", "P10", "P8", [b.instance("dowel", ("P10", "10A"), ("P8", "8A"))])
    b.edge("E2", "P10", "P9", [b.instance("dowel", ("P10", "10B"), ("P9", "9A"))])
    b.edge("E3", "P6", "P7", [b.instance("dowel", ("P6", "6A"), ("P7", "7A"))])
    b.edge("E4", "P4", "P5", [b.instance(mt, ("P4", "4A"), ("P5", "5A"))])
    b.edge("E5", "P1", "P2", [b.instance(mt, ("P1", "1A"), ("P2", "2A")), b.instance(mt, ("P1", "1B"), ("P2", "2B"))])
    b.edge("E6", "P1", "P3", [b.instance(mt, ("P1", "1C"), ("P3", "3A")), b.instance(mt, ("P1", "1D"), ("P3", "3B"))])
    b.edge("E7", "P1", "Tail", [b.instance(mt, ("P1", "1E"), ("P4", "4B"))])
    b.edge("E8", "P1", "Nose", [b.instance("dowel", ("P1", "1F"), ("P6", "6B"))])
    b.edge("E9", "P1", "Gear", [b.instance(mt, ("P1", "1G"), ("P10", "10C"))])
    b.edge("E10", "P1", "P11", [b.instance(mt, ("P1", "1H"), ("P11", "11A"))])
    b.write("plane_model")


if __name__ == "__main__":
    chair()
    shoe_shelf()
    lego_person()
    plane_model()
