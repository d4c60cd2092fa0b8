"""Score a sweep summary against the reference surviving-density tables.

Reads a summary.csv written by `python -m qrtrap sweep` and compares every
(sigma, gamma) entry that also appears in datasets/reference_tables.json.

Usage:
  python tools/score_tables.py results/summary.csv
  python tools/score_tables.py results/summary.csv --tolerance 0.03 --report score.json

Runs that ended early (collapse-terminated or errored) are listed as unscored.
Exit code 0 when the score passes (see qrtrap.experiments.score_summary), 1
otherwise.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.abspath(os.path.join(HERE, "..")))

from qrtrap.experiments import DEFAULT_REFERENCE_PATH, load_reference, score_summary  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description="Score summary.csv against the reference tables")
    parser.add_argument("summary")
    parser.add_argument("--reference", default=DEFAULT_REFERENCE_PATH)
    parser.add_argument("--tolerance", type=float, default=0.02)
    parser.add_argument("--report", default=None, help="optional JSON report path")
    args = parser.parse_args()

    score = score_summary(args.summary, load_reference(args.reference), args.tolerance)

    for e in score["entries"]:
        mark = "ok " if e["ok"] else "BAD"
        print(
            f"{mark} sigma={e['sigma']:>4g} gamma={e['gamma']:>6g} "
            f"expected={e['expected']:.4f} actual={e['actual']:.4f} delta={e['delta']:+.4f}"
        )
    for u in score["unscored"]:
        print(f"--- sigma={u['sigma']:>4g} gamma={u['gamma']:>6g} unscored ({u['status']})")
    print(
        f"compared {score['compared']} entries, max |delta| = {score['max_abs_delta']:.4f}, "
        f"ordering gamma={score['ordering']['gamma']} sigma={score['ordering']['sigma']}, "
        f"unscored {len(score['unscored'])}"
    )

    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            json.dump(score, f, indent=2)
        print(f"Report written to {args.report}")

    return 0 if score["passed"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
