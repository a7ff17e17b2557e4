#!/usr/bin/env python3
"""Recompute report.csv from results.jsonl and sim_config.json.

Usage: recompute_report.py OUT_DIR

Exits 0 when every cell of OUT_DIR/report.csv matches the recomputation,
1 otherwise (mismatches are printed). Uses only the standard library.
"""

import csv
import json
import sys
from collections import defaultdict
from fractions import Fraction
from pathlib import Path

MODE_ORDER = {"masmp": 0, "baseline": 1}


def fixed(x):
    # Exact rational -> float -> four decimals, like the Rust writer.
    return f"{float(x):.4f}"


def recompute(results, catalog):
    army = [u for u in catalog["units"] if u["role"] == "army"]
    names = [u["name"] for u in army]
    advanced = {u["name"] for u in army if u["tier"] == "advanced"}

    cells = defaultdict(list)
    for r in results:
        cells[(r["mode"], r["difficulty"])].append(r)

    header = [
        "mode", "difficulty", "episodes", "wins", "losses", "draws",
        "win_rate_pct", "mean_advanced", "mean_army_total",
        "advanced_ratio_pct", "production_empty",
    ] + [f"share_{n}" for n in names]
    rows = []
    for (mode, level) in sorted(cells, key=lambda k: (MODE_ORDER[k[0]], k[1])):
        cell = cells[(mode, level)]
        n = len(cell)
        outcomes = [r["outcome"] for r in cell]
        per_type = {name: 0 for name in names}
        for r in cell:
            for name, count in r["early_production"]["agent"].items():
                if name in per_type:
                    per_type[name] += count
        total = sum(per_type.values())
        adv = sum(per_type[k] for k in advanced)
        empty = total == 0

        def pct(part):
            return Fraction(0) if empty else Fraction(part * 100, total)

        rows.append(
            [
                mode,
                str(level),
                str(n),
                str(outcomes.count("win")),
                str(outcomes.count("loss")),
                str(outcomes.count("draw")),
                fixed(Fraction(outcomes.count("win") * 100, n)),
                fixed(Fraction(adv, n)),
                fixed(Fraction(total, n)),
                fixed(pct(adv)),
                "true" if empty else "false",
            ]
            + [fixed(pct(per_type[name])) for name in names]
        )
    return header, rows


def main(argv):
    if len(argv) != 2:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    out = Path(argv[1])
    with open(out / "results.jsonl") as f:
        results = [json.loads(line) for line in f if line.strip()]
    with open(out / "sim_config.json") as f:
        catalog = json.load(f)
    with open(out / "report.csv", newline="") as f:
        written = list(csv.reader(f))

    header, rows = recompute(results, catalog)
    expected = [header] + rows
    bad = 0
    if len(written) != len(expected):
        print(f"row count: report has {len(written)}, recomputed {len(expected)}")
        bad += 1
    for i, (got, want) in enumerate(zip(written, expected)):
        if got != want:
            print(f"line {i + 1}:\n  report     {got}\n  recomputed {want}")
            bad += 1
    if bad:
        return 1
    print(f"ok: {len(rows)} cells from {len(results)} results")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
