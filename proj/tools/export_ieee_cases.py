#!/usr/bin/env python3
"""Export the IEEE 14/118/300 cases shipped with PYPOWER into the grid-case
JSON schema, together with reference AC power-flow solutions.

Usage: python3 tools/export_ieee_cases.py [--out data]
Requires: pip install pypower
"""
import argparse
import json
import math
import os

import numpy as np
from pypower.api import case14, case118, case300, ppoption, runpf

KIND = {1: "pq", 2: "pv", 3: "slack"}


def export(name, ppc, out_dir):
    base = float(ppc["baseMVA"])
    bus, gen, branch = ppc["bus"], ppc["gen"], ppc["branch"]
    gen_p, gen_q, gen_v = {}, {}, {}
    for g in gen:
        if g[7] <= 0:
            continue
        b = int(g[0])
        gen_p[b] = gen_p.get(b, 0.0) + float(g[1])
        gen_q[b] = gen_q.get(b, 0.0) + float(g[2])
        gen_v.setdefault(b, float(g[5]))

    buses = []
    for row in bus:
        bid = int(row[0])
        kind = KIND[int(row[1])]
        if kind == "pv" and bid not in gen_v:
            kind = "pq"
        entry = {
            "id": bid,
            "kind": kind,
            "p_load": float(row[2]),
            "q_load": float(row[3]),
            "p_gen": gen_p.get(bid, 0.0),
            "q_gen": gen_q.get(bid, 0.0),
            "gs": float(row[4]) / base,
            "bs": float(row[5]) / base,
        }
        if kind != "pq":
            entry["v_set"] = gen_v[bid]
        buses.append(entry)

    branches = []
    for row in branch:
        if row[10] <= 0:
            continue
        branches.append({
            "from": int(row[0]),
            "to": int(row[1]),
            "r": float(row[2]),
            "x": float(row[3]),
            "b": float(row[4]),
            "tap": float(row[8]) if row[8] != 0 else 1.0,
            "shift": math.radians(float(row[9])),
        })

    doc = {"name": name, "base_mva": base, "buses": buses, "branches": branches}
    with open(os.path.join(out_dir, "cases", f"{name}.json"), "w") as f:
        json.dump(doc, f, indent=1)

    opt = ppoption(PF_TOL=1e-12, PF_MAX_IT=30, VERBOSE=0, OUT_ALL=0)
    res, ok = runpf(ppc, opt)
    assert ok, name
    ref = {
        "name": name,
        "solver": "pypower.runpf (Newton, PF_TOL=1e-12)",
        "bus_ids": [int(b) for b in res["bus"][:, 0]],
        "vm": [float(v) for v in res["bus"][:, 7]],
        "va": [math.radians(float(a)) for a in res["bus"][:, 8]],
    }
    with open(os.path.join(out_dir, "reference", f"{name}_pf.json"), "w") as f:
        json.dump(ref, f, indent=1)
    print(name, len(buses), "buses", len(branches), "branches")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    args = ap.parse_args()
    for name, fn in (("ieee14", case14), ("ieee118", case118), ("ieee300", case300)):
        export(name, fn(), args.out)


if __name__ == "__main__":
    main()
