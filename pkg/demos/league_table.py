"""Home-advantage table for real leagues.

Usage:
    python league_table.py LABEL=scores.csv [LABEL=scores.csv ...]
        [--expect expected.csv] [--perms N] [--sims N] [--seed S]

Each CSV has columns home_team,away_team,home_score,away_score,neutral.
Neutral-site games are dropped. Defaults run 1e6 permutations and 1000
parametric simulations per league, which takes a few minutes per league.

With --expect, a CSV with a ``label`` column and any of the table columns
is compared cell by cell and differences above 0.01 are reported.
"""

import argparse
import csv
import sys

from mixbias.experiments import hfa_table

COLUMNS = ["fixed_est", "mixed_est", "mixed_se", "diff", "internal_bias", "percentile",
           "sim_mean", "sim_bias"]
TOL = 0.01


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("inputs", nargs="+", metavar="LABEL=PATH")
    ap.add_argument("--expect")
    ap.add_argument("--perms", type=int, default=1_000_000)
    ap.add_argument("--sims", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    datasets = [tuple(s.split("=", 1)) if "=" in s else (s, s) for s in args.inputs]
    rows = hfa_table(datasets, n_perms=args.perms, n_sims=args.sims, seed=args.seed)

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["label"] + COLUMNS)
    for r in rows:
        if r.error:
            print(f"# {r.label}: {r.error}", file=sys.stderr)
        w.writerow([r.label] + [f"{getattr(r, c):.2f}" for c in COLUMNS])

    if not args.expect:
        return 0
    with open(args.expect, newline="") as fh:
        expected = {row["label"]: row for row in csv.DictReader(fh)}
    bad = 0
    for r in rows:
        for c in COLUMNS:
            want = expected.get(r.label, {}).get(c)
            if want in (None, ""):
                continue
            got = getattr(r, c)
            if not abs(got - float(want)) <= TOL:
                bad += 1
                print(f"# {r.label} {c}: got {got:.3f}, expected {want}", file=sys.stderr)
    print(f"# {bad} cell(s) outside +-{TOL}", file=sys.stderr)
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
