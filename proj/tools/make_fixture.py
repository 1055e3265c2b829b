#!/usr/bin/env python3
"""Writes the bundled synthetic network and its 24 h injection profiles.

Usage: make_fixture.py [OUTPUT_DIR]   (default: ../data relative to this file)
"""
import json
import math
import pathlib
import sys

S_BASE_KVA = 1000.0
MV_V = 10000.0
LV_V = 400.0
MV_Z = MV_V**2 / (S_BASE_KVA * 1e3)
LV_Z = LV_V**2 / (S_BASE_KVA * 1e3)

MV_BRANCHES = [
    ("S-A1", "S", "A1", 0.045, 0.027),
    ("A1-A2", "A1", "A2", 0.045, 0.027),
    ("S-B1", "S", "B1", 0.05, 0.02),
    ("B1-B2", "B1", "B2", 0.05, 0.02),
    ("B2-B3", "B2", "B3", 0.05, 0.02),
]
MV_I_MAX_A = 90.0
LV_I_MAX_A = 1200.0

TRANSFORMERS = {
    "T1": {"mv_bus": "A1", "kva": 250.0, "r": 0.010},
    "T2": {"mv_bus": "A2", "kva": 400.0, "r": 0.010},
    "T3": {"mv_bus": "B3", "kva": 250.0, "r": 0.012},
}
LV_EDGES = [("R", "L1"), ("L1", "L2"), ("L1", "L3")]
LOAD_PEAK_KW = {
    "T1": {"L1": 90.0, "L2": 60.0, "L3": 70.0},
    "T2": {"L1": 40.0, "L2": 40.0, "L3": 30.0},
    "T3": {"L1": 15.0, "L2": 10.0, "L3": 15.0},
}
LOAD_SCALE = 0.3
LOAD_Q_RATIO = 0.33
PV_KWP = {"T1": {"L2": 30.0}, "T2": {"L3": 20.0}, "T3": {"L2": 80.0, "L3": 70.0}}

STEPS = 144
START = "2024-06-21T{:02d}:{:02d}:00Z"


def load_shape(h):
    return (0.45 + 0.25 * math.exp(-(((h - 8.0) / 1.5) ** 2))
            + 0.55 * math.exp(-(((h - 19.0) / 2.0) ** 2))
            + 0.1 * math.exp(-(((h - 12.5) / 1.5) ** 2)))


def pv_shape(h):
    if abs(h - 12.5) >= 6.0:
        return 0.0
    return math.cos((h - 12.5) / 6.0 * math.pi / 2.0) ** 2


def lv_grid(tid):
    t = TRANSFORMERS[tid]
    r_ohm = t["r"] * LV_Z
    grid = {
        "id": tid,
        "v_base_v": LV_V,
        "v_min": 0.90,
        "v_max": 1.10,
        "transformer": {"mv_bus": t["mv_bus"], "kva_rating": t["kva"], "lv_root": tid + "R"},
        "buses": [{"id": tid + b} for b in ("R", "L1", "L2", "L3")],
        "branches": [
            {"id": f"{tid}{a}-{b}", "from": tid + a, "to": tid + b,
             "r_ohm": round(r_ohm, 9), "x_ohm": round(0.6 * r_ohm, 9), "i_max_a": LV_I_MAX_A}
            for a, b in LV_EDGES
        ],
        "ders": [],
    }
    for bus, kwp in PV_KWP[tid].items():
        grid["ders"].append({"id": f"{tid}-PV-{bus}", "bus": tid + bus, "kind": "pv",
                             "p_rating_kw": kwp, "controllable": True,
                             "curtailment_fraction": 0.1, "pf_min": 0.9})
    for bus, peak in LOAD_PEAK_KW[tid].items():
        grid["ders"].append({"id": f"{tid}-LD-{bus}", "bus": tid + bus, "kind": "load",
                             "p_rating_kw": peak * LOAD_SCALE, "controllable": False})
    return grid


def network(tids):
    return {
        "s_base_kva": S_BASE_KVA,
        "mv": {
            "v_base_v": MV_V,
            "slack": "S",
            "v_min": 0.95,
            "v_max": 1.05,
            "buses": [{"id": b} for b in ("S", "A1", "A2", "B1", "B2", "B3")],
            "branches": [
                {"id": i, "from": f, "to": t, "r_ohm": round(r * MV_Z, 9),
                 "x_ohm": round(x * MV_Z, 9), "i_max_a": MV_I_MAX_A}
                for i, f, t, r, x in MV_BRANCHES
            ],
        },
        "lv_grids": [lv_grid(t) for t in tids],
    }


def profiles():
    lines = ["timestamp,bus_id,p_gen_kw,p_load_kw,q_gen_kvar,q_load_kvar"]
    for k in range(STEPS):
        minutes = 10 * k
        ts = START.format(minutes // 60, minutes % 60)
        h = minutes / 60.0
        for tid in sorted(TRANSFORMERS):
            for bus in ("L1", "L2", "L3"):
                p_load = LOAD_PEAK_KW[tid][bus] * LOAD_SCALE * load_shape(h)
                p_gen = PV_KWP[tid].get(bus, 0.0) * pv_shape(h)
                lines.append(f"{ts},{tid}{bus},{p_gen:.6f},{p_load:.6f},0.000000,"
                             f"{LOAD_Q_RATIO * p_load:.6f}")
    return "\n".join(lines) + "\n"


def main():
    out = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else (
        pathlib.Path(__file__).resolve().parent.parent / "data")
    out.mkdir(parents=True, exist_ok=True)
    (out / "fixture.json").write_text(json.dumps(network(["T1", "T2", "T3"]), indent=2) + "\n")
    (out / "fixture_small.json").write_text(json.dumps(network(["T1", "T2"]), indent=2) + "\n")
    (out / "profiles.csv").write_text(profiles())


if __name__ == "__main__":
    main()
